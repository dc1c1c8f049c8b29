#include "spanrec/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace spanrec {
namespace {

constexpr char kMagic[8] = {'S', 'P', 'R', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void write_f64(std::ostream& out, double v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void write_string(std::ostream& out, const std::string& s) {
    write_u32(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void write_tensor(std::ostream& out, const std::string& name, const double* data, std::uint32_t rows,
                  std::uint32_t cols) {
    write_string(out, name);
    write_u32(out, rows);
    write_u32(out, cols);
    out.write(reinterpret_cast<const char*>(data),
              static_cast<std::streamsize>(sizeof(double) * rows * cols));
}

std::uint32_t read_u32(std::istream& in) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}

double read_f64(std::istream& in) {
    double v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}

std::string read_string(std::istream& in) {
    const std::uint32_t n = read_u32(in);
    std::string s(n, '\0');
    in.read(s.data(), static_cast<std::streamsize>(n));
    return s;
}

struct Tensor {
    std::string name;
    std::uint32_t rows = 0;
    std::uint32_t cols = 0;
    std::vector<double> data;
};

Tensor read_tensor(std::istream& in) {
    Tensor t;
    t.name = read_string(in);
    t.rows = read_u32(in);
    t.cols = read_u32(in);
    t.data.resize(static_cast<std::size_t>(t.rows) * t.cols);
    in.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(sizeof(double) * t.data.size()));
    return t;
}

}  // namespace

void save_checkpoint(const std::string& path, const Model& model, const std::string& config_digest,
                     std::uint64_t seed) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path);

    out.write(kMagic, sizeof(kMagic));
    write_u32(out, kVersion);
    write_string(out, config_digest);
    out.write(reinterpret_cast<const char*>(&seed), sizeof(seed));

    write_u32(out, static_cast<std::uint32_t>(model.config.embed_dim));
    write_f64(out, model.config.leaky_slope);
    write_f64(out, model.config.dropout_rate);
    write_u32(out, static_cast<std::uint32_t>(model.config.heads));
    write_u32(out, static_cast<std::uint32_t>(model.config.edge_feat_dim));

    const auto& m = model;
    write_u32(out, 10);  // tensor count
    write_tensor(out, "embeddings.user", m.emb.user.data.data(),
                 static_cast<std::uint32_t>(m.emb.user.rows), static_cast<std::uint32_t>(m.emb.user.cols));
    write_tensor(out, "embeddings.item", m.emb.item.data.data(),
                 static_cast<std::uint32_t>(m.emb.item.rows), static_cast<std::uint32_t>(m.emb.item.cols));
    write_tensor(out, "embeddings.span", m.emb.span.data.data(),
                 static_cast<std::uint32_t>(m.emb.span.rows), static_cast<std::uint32_t>(m.emb.span.cols));
    write_tensor(out, "attention.W", m.att.W.data.data(), static_cast<std::uint32_t>(m.att.W.rows),
                 static_cast<std::uint32_t>(m.att.W.cols));
    write_tensor(out, "attention.a", m.att.a.data(), 1, static_cast<std::uint32_t>(m.att.a.size()));
    write_tensor(out, "attention.W_e", m.att.W_e.data.data(), static_cast<std::uint32_t>(m.att.W_e.rows),
                 static_cast<std::uint32_t>(m.att.W_e.cols));
    write_tensor(out, "predictor.W_l", m.pred.W_l.data(), 1, static_cast<std::uint32_t>(m.pred.W_l.size()));
    write_tensor(out, "predictor.W_s", m.pred.W_s.data(), 1, static_cast<std::uint32_t>(m.pred.W_s.size()));
    write_tensor(out, "fusion.alpha", &m.pred.alpha, 1, 1);
    write_tensor(out, "fusion.beta", &m.pred.beta, 1, 1);

    if (!out) throw IoError("failed writing checkpoint: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);

    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw IoError("not a checkpoint file: " + path);
    const std::uint32_t version = read_u32(in);
    if (version != kVersion)
        throw IoError("unsupported checkpoint version " + std::to_string(version));

    LoadedCheckpoint loaded;
    loaded.config_digest = read_string(in);
    in.read(reinterpret_cast<char*>(&loaded.seed), sizeof(loaded.seed));

    Model& m = loaded.model;
    m.config.embed_dim = static_cast<int>(read_u32(in));
    m.config.leaky_slope = read_f64(in);
    m.config.dropout_rate = read_f64(in);
    m.config.heads = static_cast<int>(read_u32(in));
    m.config.edge_feat_dim = static_cast<int>(read_u32(in));

    const std::uint32_t count = read_u32(in);
    for (std::uint32_t i = 0; i < count; ++i) {
        Tensor t = read_tensor(in);
        if (!in) throw IoError("truncated checkpoint: " + path);
        auto as_matrix = [&]() {
            Matrix mm(static_cast<int>(t.rows), static_cast<int>(t.cols));
            mm.data = std::move(t.data);
            return mm;
        };
        if (t.name == "embeddings.user") m.emb.user = as_matrix();
        else if (t.name == "embeddings.item") m.emb.item = as_matrix();
        else if (t.name == "embeddings.span") m.emb.span = as_matrix();
        else if (t.name == "attention.W") m.att.W = as_matrix();
        else if (t.name == "attention.a") m.att.a = std::move(t.data);
        else if (t.name == "attention.W_e") m.att.W_e = as_matrix();
        else if (t.name == "predictor.W_l") m.pred.W_l = std::move(t.data);
        else if (t.name == "predictor.W_s") m.pred.W_s = std::move(t.data);
        else if (t.name == "fusion.alpha") m.pred.alpha = t.data.at(0);
        else if (t.name == "fusion.beta") m.pred.beta = t.data.at(0);
        else throw IoError("unknown tensor '" + t.name + "' in checkpoint");
    }
    return loaded;
}

}  // namespace spanrec
