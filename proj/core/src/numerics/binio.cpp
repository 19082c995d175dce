#include "gea/numerics/binio.hpp"

#include <cstring>
#include <stdexcept>

namespace gea::num::io {

void corrupt(const std::string& msg) { throw std::runtime_error("corrupt file: " + msg); }

void write_bytes(std::ostream& os, const void* p, std::size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    if (!os) throw std::runtime_error("write failed");
}

void read_bytes(std::istream& is, void* p, std::size_t n) {
    is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is.gcount()) != n) corrupt("unexpected end of file");
}

void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    write_bytes(os, b, 4);
}

void write_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    write_bytes(os, b, 8);
}

void write_f32(std::ostream& os, float v) {
    std::uint32_t u;
    std::memcpy(&u, &v, 4);
    write_u32(os, u);
}

void write_f64(std::ostream& os, double v) {
    std::uint64_t u;
    std::memcpy(&u, &v, 8);
    write_u64(os, u);
}

void write_string(std::ostream& os, const std::string& s) {
    write_u64(os, s.size());
    write_bytes(os, s.data(), s.size());
}

std::uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    read_bytes(is, b, 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

std::uint64_t read_u64(std::istream& is) {
    unsigned char b[8];
    read_bytes(is, b, 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

float read_f32(std::istream& is) {
    const std::uint32_t u = read_u32(is);
    float v;
    std::memcpy(&v, &u, 4);
    return v;
}

double read_f64(std::istream& is) {
    const std::uint64_t u = read_u64(is);
    double v;
    std::memcpy(&v, &u, 8);
    return v;
}

std::string read_string(std::istream& is) {
    const std::uint64_t n = read_u64(is);
    std::string s(n, '\0');
    if (n) read_bytes(is, s.data(), n);
    return s;
}

void write_section(std::ostream& os, const std::string& payload) {
    write_u64(os, payload.size());
    write_bytes(os, payload.data(), payload.size());
}

std::string read_section(std::istream& is, const char* what) {
    const std::uint64_t n = read_u64(is);
    std::string s(n, '\0');
    if (n) {
        is.read(s.data(), static_cast<std::streamsize>(n));
        if (static_cast<std::uint64_t>(is.gcount()) != n)
            corrupt(std::string("truncated section '") + what + "'");
    }
    return s;
}

}  // namespace gea::num::io
