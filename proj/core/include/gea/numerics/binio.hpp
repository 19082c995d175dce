#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace gea::num::io {

// Little-endian primitive IO shared by the codec and checkpoint formats.

void write_u32(std::ostream& os, std::uint32_t v);
void write_u64(std::ostream& os, std::uint64_t v);
void write_f32(std::ostream& os, float v);
void write_f64(std::ostream& os, double v);
void write_bytes(std::ostream& os, const void* p, std::size_t n);
void write_string(std::ostream& os, const std::string& s);  // u64 length + bytes

std::uint32_t read_u32(std::istream& is);
std::uint64_t read_u64(std::istream& is);
float read_f32(std::istream& is);
double read_f64(std::istream& is);
void read_bytes(std::istream& is, void* p, std::size_t n);
std::string read_string(std::istream& is);

/// Emits a u64 byte length followed by the payload.
void write_section(std::ostream& os, const std::string& payload);
/// Reads one length-prefixed section; throws on truncation.
std::string read_section(std::istream& is, const char* what);

[[noreturn]] void corrupt(const std::string& msg);

}  // namespace gea::num::io
