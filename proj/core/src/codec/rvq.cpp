#include "gea/codec/rvq.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "gea/numerics/binio.hpp"

namespace gea::codec {

namespace io = num::io;

void RvqConfig::validate() const {
    if (num_levels < 1) throw std::runtime_error("rvq config: need at least one codebook");
    if (codebook_size < 1) throw std::runtime_error("rvq config: empty codebook");
    if (code_dim < 1) throw std::runtime_error("rvq config: code_dim < 1");
    if (max_action_dim < 1) throw std::runtime_error("rvq config: max_action_dim < 1");
    if (token_base < 0) throw std::runtime_error("rvq config: negative token base");
    for (int h : hidden)
        if (h < 1) throw std::runtime_error("rvq config: hidden width < 1");
}

static num::Tensor he_init(int in, int out, num::Rng& rng) {
    num::Tensor w({in, out});
    const double s = std::sqrt(2.0 / in);
    for (double& v : w.data) v = rng.normal() * s;
    return w;
}

RvqCodec::RvqCodec(RvqConfig cfg, num::Rng& init_rng) : cfg_(std::move(cfg)) {
    cfg_.validate();
    // Encoder max_action_dim -> hidden... -> code_dim, decoder mirrored.
    std::vector<int> enc_dims = {cfg_.max_action_dim};
    enc_dims.insert(enc_dims.end(), cfg_.hidden.begin(), cfg_.hidden.end());
    enc_dims.push_back(cfg_.code_dim);
    for (std::size_t l = 0; l + 1 < enc_dims.size(); ++l) {
        params_.add("enc.w" + std::to_string(l), he_init(enc_dims[l], enc_dims[l + 1], init_rng));
        params_.add("enc.b" + std::to_string(l), num::Tensor({enc_dims[l + 1]}));
    }
    std::vector<int> dec_dims = {cfg_.code_dim};
    dec_dims.insert(dec_dims.end(), cfg_.hidden.rbegin(), cfg_.hidden.rend());
    dec_dims.push_back(cfg_.max_action_dim);
    for (std::size_t l = 0; l + 1 < dec_dims.size(); ++l) {
        params_.add("dec.w" + std::to_string(l), he_init(dec_dims[l], dec_dims[l + 1], init_rng));
        params_.add("dec.b" + std::to_string(l), num::Tensor({dec_dims[l + 1]}));
    }
    for (int m = 0; m < cfg_.num_levels; ++m) {
        num::Tensor book({cfg_.codebook_size, cfg_.code_dim});
        const double s = m == 0 ? 0.1 : 0.01;
        for (double& v : book.data) v = init_rng.normal() * s;
        params_.add(codebook_param_name(m), std::move(book));
    }
    mean_.assign(static_cast<std::size_t>(cfg_.max_action_dim), 0.0);
    std_.assign(static_cast<std::size_t>(cfg_.max_action_dim), 1.0);
}

std::vector<std::string> RvqCodec::encoder_param_names() const {
    std::vector<std::string> names;
    for (std::size_t l = 0; l <= cfg_.hidden.size(); ++l) {
        names.push_back("enc.w" + std::to_string(l));
        names.push_back("enc.b" + std::to_string(l));
    }
    return names;
}

std::vector<std::string> RvqCodec::decoder_param_names() const {
    std::vector<std::string> names;
    for (std::size_t l = 0; l <= cfg_.hidden.size(); ++l) {
        names.push_back("dec.w" + std::to_string(l));
        names.push_back("dec.b" + std::to_string(l));
    }
    return names;
}

std::string RvqCodec::codebook_param_name(int level) const { return "codebook." + std::to_string(level); }

num::Graph::NodeId RvqCodec::build_encoder(num::Graph& g, num::Graph::NodeId input,
                                           const std::vector<num::Graph::NodeId>& weights) const {
    num::Graph::NodeId h = input;
    const std::size_t layers = cfg_.hidden.size() + 1;
    for (std::size_t l = 0; l < layers; ++l) {
        h = g.add_bias(g.matmul(h, weights[2 * l]), weights[2 * l + 1]);
        if (l + 1 < layers) h = g.gelu(h);
    }
    return h;
}

num::Graph::NodeId RvqCodec::build_decoder(num::Graph& g, num::Graph::NodeId latent,
                                           const std::vector<num::Graph::NodeId>& weights) const {
    return build_encoder(g, latent, weights);  // same affine/GELU stack shape
}

std::vector<double> RvqCodec::run_mlp(const std::vector<std::string>& names,
                                      const std::vector<double>& input) const {
    std::vector<double> h = input;
    const std::size_t layers = names.size() / 2;
    for (std::size_t l = 0; l < layers; ++l) {
        const num::Tensor& w = params_.get(names[2 * l]);
        const num::Tensor& b = params_.get(names[2 * l + 1]);
        if (static_cast<int>(h.size()) != w.rows())
            throw std::runtime_error("rvq: layer '" + names[2 * l] + "' input dim " +
                                     std::to_string(h.size()) + " vs " + w.shape_str());
        std::vector<double> out(static_cast<std::size_t>(w.cols()));
        num::mat_mul(h.data(), w.data.data(), out.data(), 1, w.rows(), w.cols());
        for (int j = 0; j < w.cols(); ++j) out[j] += b.at(j);
        if (l + 1 < layers)
            for (double& v : out) v = 0.5 * v * (1.0 + std::erf(v * 0.7071067811865475244));
        h = std::move(out);
    }
    return h;
}

void RvqCodec::set_normalization(std::vector<double> mean, std::vector<double> stddev) {
    if (static_cast<int>(mean.size()) != cfg_.max_action_dim ||
        static_cast<int>(stddev.size()) != cfg_.max_action_dim)
        throw std::runtime_error("rvq: normalization stats length != max_action_dim");
    for (double s : stddev)
        if (!(s > 0.0)) throw std::runtime_error("rvq: non-positive normalization stddev");
    mean_ = std::move(mean);
    std_ = std::move(stddev);
}

std::vector<double> RvqCodec::normalize(const PaddedAction& action) const {
    if (static_cast<int>(action.values.size()) != cfg_.max_action_dim)
        throw std::runtime_error("rvq: padded action length " + std::to_string(action.values.size()) +
                                 " != max_action_dim " + std::to_string(cfg_.max_action_dim));
    std::vector<double> x(action.values.size());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = (action.values[i] - mean_[i]) / std_[i];
    return x;
}

std::vector<double> RvqCodec::encode_latent(const std::vector<double>& normalized) const {
    return run_mlp(encoder_param_names(), normalized);
}

int RvqCodec::nearest_code(int level, const std::vector<double>& residual) const {
    const num::Tensor& book = params_.get(codebook_param_name(level));
    const int K = book.rows(), D = book.cols();
    int best = 0;
    double best_d = 1e300;
    for (int k = 0; k < K; ++k) {
        const double* c = book.data.data() + static_cast<std::size_t>(k) * D;
        double d = 0.0;
        for (int j = 0; j < D; ++j) {
            const double t = residual[j] - c[j];
            d += t * t;
        }
        if (d < best_d) {  // strict: ties keep the lowest index
            best_d = d;
            best = k;
        }
    }
    return best;
}

std::vector<int> RvqCodec::encode(const PaddedAction& action) const {
    std::vector<double> r = encode_latent(normalize(action));
    for (double v : r)
        if (!std::isfinite(v)) throw std::runtime_error("rvq: non-finite latent during encode");
    std::vector<int> tokens;
    tokens.reserve(cfg_.num_levels);
    for (int m = 0; m < cfg_.num_levels; ++m) {
        const int k = nearest_code(m, r);
        const num::Tensor& book = params_.get(codebook_param_name(m));
        for (int j = 0; j < cfg_.code_dim; ++j) r[j] -= book.at(k, j);
        tokens.push_back(cfg_.token_base + k);
    }
    return tokens;
}

std::vector<double> RvqCodec::decode(const std::vector<int>& tokens, int dim) const {
    if (static_cast<int>(tokens.size()) != cfg_.num_levels)
        throw std::runtime_error("rvq: expected " + std::to_string(cfg_.num_levels) + " tokens, got " +
                                 std::to_string(tokens.size()));
    if (dim < 0 || dim > cfg_.max_action_dim)
        throw std::runtime_error("rvq: decode dim " + std::to_string(dim) + " out of range");
    std::vector<double> q(static_cast<std::size_t>(cfg_.code_dim), 0.0);
    for (int m = 0; m < cfg_.num_levels; ++m) {
        const int k = tokens[m] - cfg_.token_base;
        if (k < 0 || k >= cfg_.codebook_size)
            throw std::runtime_error("rvq: token id " + std::to_string(tokens[m]) + " at position " +
                                     std::to_string(m) + " outside reserved range [" +
                                     std::to_string(cfg_.token_base) + ", " +
                                     std::to_string(cfg_.token_base + cfg_.codebook_size) + ")");
        const num::Tensor& book = params_.get(codebook_param_name(m));
        for (int j = 0; j < cfg_.code_dim; ++j) q[j] += book.at(k, j);
    }
    std::vector<double> recon = run_mlp(decoder_param_names(), q);
    for (std::size_t i = 0; i < recon.size(); ++i) recon[i] = recon[i] * std_[i] + mean_[i];
    return truncate(recon, dim);
}

double RvqCodec::reconstruction_error(const PaddedAction& action) const {
    const std::vector<double> x = normalize(action);
    const std::vector<int> tokens = encode(action);
    std::vector<double> q(static_cast<std::size_t>(cfg_.code_dim), 0.0);
    for (int m = 0; m < cfg_.num_levels; ++m) {
        const num::Tensor& book = params_.get(codebook_param_name(m));
        const int k = tokens[m] - cfg_.token_base;
        for (int j = 0; j < cfg_.code_dim; ++j) q[j] += book.at(k, j);
    }
    const std::vector<double> recon = run_mlp(decoder_param_names(), q);
    double err = 0.0;
    for (std::size_t i = 0; i < recon.size(); ++i) {
        const double d = recon[i] - x[i];
        err += d * d;
    }
    return err / static_cast<double>(cfg_.max_action_dim);
}

void RvqCodec::round_to_f32() {
    for (const auto& name : params_.names()) {
        num::Tensor& t = params_.get(name);
        for (double& v : t.data) v = static_cast<double>(static_cast<float>(v));
    }
    for (double& v : mean_) v = static_cast<double>(static_cast<float>(v));
    for (double& v : std_) v = static_cast<double>(static_cast<float>(v));
}

static void append_f32(std::string& out, double v) {
    const float f = static_cast<float>(v);
    std::uint32_t u;
    static_assert(sizeof(f) == 4);
    std::memcpy(&u, &f, 4);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>(u >> (8 * i)));
}

static double take_f32(const std::string& s, std::size_t& off) {
    if (off + 4 > s.size()) io::corrupt("section ends mid-float");
    std::uint32_t u = 0;
    for (int i = 0; i < 4; ++i) u |= static_cast<std::uint32_t>(static_cast<unsigned char>(s[off + i])) << (8 * i);
    off += 4;
    float f;
    std::memcpy(&f, &u, 4);
    return static_cast<double>(f);
}

void RvqCodec::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("rvq: cannot open '" + path + "' for writing");
    os.write("RVQC", 4);
    io::write_u32(os, 1);  // version
    io::write_u32(os, static_cast<std::uint32_t>(cfg_.num_levels));
    io::write_u32(os, static_cast<std::uint32_t>(cfg_.codebook_size));
    io::write_u32(os, static_cast<std::uint32_t>(cfg_.code_dim));
    io::write_u32(os, static_cast<std::uint32_t>(cfg_.max_action_dim));
    io::write_u32(os, static_cast<std::uint32_t>(cfg_.token_base));
    io::write_u32(os, static_cast<std::uint32_t>(cfg_.hidden.size()));
    for (int h : cfg_.hidden) io::write_u32(os, static_cast<std::uint32_t>(h));

    std::string books;
    for (int m = 0; m < cfg_.num_levels; ++m)
        for (double v : params_.get(codebook_param_name(m)).data) append_f32(books, v);
    io::write_section(os, books);

    auto dump_mlp = [&](const std::vector<std::string>& names) {
        std::string blob;
        for (const auto& n : names)
            for (double v : params_.get(n).data) append_f32(blob, v);
        return blob;
    };
    io::write_section(os, dump_mlp(encoder_param_names()));
    io::write_section(os, dump_mlp(decoder_param_names()));

    std::string stats;
    for (double v : mean_) append_f32(stats, v);
    for (double v : std_) append_f32(stats, v);
    io::write_section(os, stats);
    if (!os) throw std::runtime_error("rvq: write failed for '" + path + "'");
}

RvqCodec RvqCodec::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("rvq: cannot open '" + path + "'");
    char magic[4];
    is.read(magic, 4);
    if (is.gcount() != 4 || std::string(magic, 4) != "RVQC")
        throw std::runtime_error("rvq: '" + path + "' is not a codec file (bad magic)");
    const std::uint32_t version = io::read_u32(is);
    if (version != 1)
        throw std::runtime_error("rvq: unsupported codec file version " + std::to_string(version));
    RvqConfig cfg;
    cfg.num_levels = static_cast<int>(io::read_u32(is));
    cfg.codebook_size = static_cast<int>(io::read_u32(is));
    cfg.code_dim = static_cast<int>(io::read_u32(is));
    cfg.max_action_dim = static_cast<int>(io::read_u32(is));
    cfg.token_base = static_cast<int>(io::read_u32(is));
    const std::uint32_t n_hidden = io::read_u32(is);
    if (n_hidden > 64) io::corrupt("implausible hidden layer count");
    cfg.hidden.resize(n_hidden);
    for (auto& h : cfg.hidden) h = static_cast<int>(io::read_u32(is));

    num::Rng dummy(1);
    RvqCodec codec(cfg, dummy);

    const std::string books = io::read_section(is, "codebooks");
    std::size_t off = 0;
    const std::size_t expect_books =
        static_cast<std::size_t>(cfg.num_levels) * cfg.codebook_size * cfg.code_dim * 4;
    if (books.size() != expect_books) io::corrupt("codebook section size mismatch");
    for (int m = 0; m < cfg.num_levels; ++m)
        for (double& v : codec.params_.get(codec.codebook_param_name(m)).data) v = take_f32(books, off);

    auto load_mlp = [&](const std::vector<std::string>& names, const char* what) {
        const std::string blob = io::read_section(is, what);
        std::size_t o = 0;
        std::size_t expect = 0;
        for (const auto& n : names) expect += codec.params_.get(n).numel() * 4;
        if (blob.size() != expect) io::corrupt(std::string(what) + " section size mismatch");
        for (const auto& n : names)
            for (double& v : codec.params_.get(n).data) v = take_f32(blob, o);
    };
    load_mlp(codec.encoder_param_names(), "encoder");
    load_mlp(codec.decoder_param_names(), "decoder");

    const std::string stats = io::read_section(is, "normalization");
    if (stats.size() != static_cast<std::size_t>(cfg.max_action_dim) * 8) io::corrupt("stats section size mismatch");
    off = 0;
    for (double& v : codec.mean_) v = take_f32(stats, off);
    for (double& v : codec.std_) v = take_f32(stats, off);
    return codec;
}

}  // namespace gea::codec
