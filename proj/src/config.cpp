#include "spanrec/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace spanrec {
namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

double parse_double(std::string_view v, std::size_t line) {
    double out = 0.0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size())
        throw ParseError("expected a number, got '" + std::string(v) + "'", line);
    return out;
}

template <typename T>
T parse_int(std::string_view v, std::size_t line) {
    T out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size())
        throw ParseError("expected an integer, got '" + std::string(v) + "'", line);
    return out;
}

bool parse_bool(std::string_view v, std::size_t line) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ParseError("expected true/false, got '" + std::string(v) + "'", line);
}

std::vector<std::uint64_t> parse_seed_list(std::string_view v, std::size_t line) {
    std::vector<std::uint64_t> seeds;
    std::size_t start = 0;
    const std::string s(v);
    while (start <= s.size()) {
        std::size_t comma = s.find(',', start);
        if (comma == std::string::npos) comma = s.size();
        const std::string_view part = trim(std::string_view(s).substr(start, comma - start));
        if (!part.empty()) seeds.push_back(parse_int<std::uint64_t>(part, line));
        start = comma + 1;
    }
    if (seeds.empty()) throw ParseError("seeds list is empty", line);
    return seeds;
}

// Shortest exact decimal form (round-trips through from_chars).
std::string fmt_double(double v) {
    char buf[64];
    if (v == std::floor(v) && std::abs(v) < 1e15) {
        std::snprintf(buf, sizeof(buf), "%.0f", v);
        return buf;
    }
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    double back = 0.0;
    std::from_chars(buf, buf + std::strlen(buf), back);
    for (int prec = 1; prec < 17; ++prec) {
        char shorter[64];
        std::snprintf(shorter, sizeof(shorter), "%.*g", prec, v);
        back = 0.0;
        std::from_chars(shorter, shorter + std::strlen(shorter), back);
        if (back == v) return shorter;
    }
    return buf;
}

}  // namespace

void apply_override(RunConfig& c, const std::string& key, const std::string& raw,
                    std::size_t line) {
    const std::string_view value = trim(raw);
    if (key == "ratings") c.ratings_path = value;
    else if (key == "trust") c.trust_path = value;
    else if (key == "train_frac") c.train_frac = parse_double(value, line);
    else if (key == "val_frac") c.val_frac = parse_double(value, line);
    else if (key == "test_frac") c.test_frac = parse_double(value, line);
    else if (key == "split_seed") c.split_seed = parse_int<std::uint64_t>(value, line);
    else if (key == "span_days") c.span_days = parse_double(value, line);
    else if (key == "origin") {
        if (value == "min") {
            c.origin_policy = OriginPolicy::MinTimestamp;
            c.origin_value = 0;
        } else {
            c.origin_policy = OriginPolicy::Explicit;
            c.origin_value = parse_int<std::int64_t>(value, line);
        }
    } else if (key == "embed_dim") c.embed_dim = parse_int<int>(value, line);
    else if (key == "dropout") c.dropout = parse_double(value, line);
    else if (key == "leaky_slope") c.leaky_slope = parse_double(value, line);
    else if (key == "item_item_cap") c.item_item_cap = parse_int<int>(value, line);
    else if (key == "epochs") c.epochs = parse_int<int>(value, line);
    else if (key == "learning_rate") c.learning_rate = parse_double(value, line);
    else if (key == "batch_size") c.batch_size = parse_int<int>(value, line);
    else if (key == "use_edge_weights") c.flags.use_edge_weights = parse_bool(value, line);
    else if (key == "use_span_nodes") c.flags.use_span_nodes = parse_bool(value, line);
    else if (key == "use_item_item") c.flags.use_item_item = parse_bool(value, line);
    else if (key == "use_user_user") c.flags.use_user_user = parse_bool(value, line);
    else if (key == "seeds") c.seeds = parse_seed_list(value, line);
    else if (key == "outdir") c.outdir = value;
    else throw ParseError("unknown config key '" + key + "'", line);
}

RunConfig parse_config_text(std::istream& in) {
    RunConfig config;
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::string_view stripped = trim(raw);
        if (stripped.empty() || stripped.front() == '#') continue;
        const std::size_t eq = stripped.find('=');
        if (eq == std::string_view::npos) throw ParseError("expected key = value", line_no);
        const std::string key(trim(stripped.substr(0, eq)));
        const std::string value(trim(stripped.substr(eq + 1)));
        if (key.empty()) throw ParseError("empty config key", line_no);
        apply_override(config, key, value, line_no);
    }
    return config;
}

RunConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    return parse_config_text(in);
}

std::string serialize_config(const RunConfig& c) {
    std::ostringstream out;
    out << "ratings = " << c.ratings_path << "\n";
    out << "trust = " << c.trust_path << "\n";
    out << "train_frac = " << fmt_double(c.train_frac) << "\n";
    out << "val_frac = " << fmt_double(c.val_frac) << "\n";
    out << "test_frac = " << fmt_double(c.test_frac) << "\n";
    out << "split_seed = " << c.split_seed << "\n";
    out << "span_days = " << fmt_double(c.span_days) << "\n";
    if (c.origin_policy == OriginPolicy::MinTimestamp) out << "origin = min\n";
    else out << "origin = " << c.origin_value << "\n";
    out << "embed_dim = " << c.embed_dim << "\n";
    out << "dropout = " << fmt_double(c.dropout) << "\n";
    out << "leaky_slope = " << fmt_double(c.leaky_slope) << "\n";
    out << "item_item_cap = " << c.item_item_cap << "\n";
    out << "epochs = " << c.epochs << "\n";
    out << "learning_rate = " << fmt_double(c.learning_rate) << "\n";
    out << "batch_size = " << c.batch_size << "\n";
    out << "use_edge_weights = " << (c.flags.use_edge_weights ? "true" : "false") << "\n";
    out << "use_span_nodes = " << (c.flags.use_span_nodes ? "true" : "false") << "\n";
    out << "use_item_item = " << (c.flags.use_item_item ? "true" : "false") << "\n";
    out << "use_user_user = " << (c.flags.use_user_user ? "true" : "false") << "\n";
    out << "seeds = ";
    for (std::size_t i = 0; i < c.seeds.size(); ++i) out << (i ? "," : "") << c.seeds[i];
    out << "\n";
    out << "outdir = " << c.outdir << "\n";
    return out.str();
}

std::string config_digest(const RunConfig& c) {
    std::ostringstream canon;
    canon << c.train_frac << '|' << c.val_frac << '|' << c.test_frac << '|' << c.split_seed << '|'
          << fmt_double(c.span_days) << '|'
          << (c.origin_policy == OriginPolicy::MinTimestamp ? "min" : std::to_string(c.origin_value))
          << '|' << c.embed_dim << '|' << fmt_double(c.dropout) << '|' << fmt_double(c.leaky_slope)
          << '|' << c.item_item_cap << '|' << c.epochs << '|' << fmt_double(c.learning_rate) << '|'
          << c.batch_size << '|' << c.flags.use_edge_weights << c.flags.use_span_nodes
          << c.flags.use_item_item << c.flags.use_user_user;
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(canon.str())));
    return buf;
}

void validate(const RunConfig& c) {
    if (!(c.train_frac > 0.0)) throw ValidationError("train_frac must be > 0");
    if (c.val_frac < 0.0 || c.test_frac < 0.0) throw ValidationError("split fractions must be >= 0");
    const double total = c.train_frac + c.val_frac + c.test_frac;
    if (std::fabs(total - 1.0) > 1e-9) throw ValidationError("split fractions must sum to 1");
    if (!(c.span_days > 0.0)) throw ValidationError("span_days must be > 0");
    if (c.embed_dim < 1) throw ValidationError("embed_dim must be >= 1");
    if (!(c.dropout >= 0.0 && c.dropout < 1.0)) throw ValidationError("dropout must be in [0,1)");
    if (c.item_item_cap < 0) throw ValidationError("item_item_cap must be >= 0");
    if (c.epochs < 0) throw ValidationError("epochs must be >= 0");
    if (!(c.learning_rate > 0.0)) throw ValidationError("learning_rate must be > 0");
    if (c.batch_size < 1) throw ValidationError("batch_size must be >= 1");
    if (c.seeds.empty()) throw ValidationError("seeds list is empty");
}

std::int64_t span_seconds(const RunConfig& c) {
    const double seconds = c.span_days * 86400.0;
    if (!(seconds >= 1.0)) throw ValidationError("span length must be at least one second");
    return std::llround(seconds);
}

std::int64_t resolve_origin(const RunConfig& c, const Dataset& data) {
    if (c.origin_policy == OriginPolicy::Explicit) return c.origin_value;
    return data.min_timestamp();
}

SplitSpec split_spec(const RunConfig& c) {
    SplitSpec s;
    s.train_fraction = c.train_frac;
    s.val_fraction = c.val_frac;
    s.test_fraction = c.test_frac;
    s.seed = c.split_seed;
    return s;
}

GraphConfig graph_config(const RunConfig& c, const Dataset& data) {
    GraphConfig g;
    g.span.origin = resolve_origin(c, data);
    g.span.span_length = span_seconds(c);
    g.flags = c.flags;
    g.item_item_cap = c.item_item_cap;
    g.item_item_seed = c.split_seed;
    return g;
}

ModelConfig model_config(const RunConfig& c) {
    ModelConfig m;
    m.embed_dim = c.embed_dim;
    m.leaky_slope = c.leaky_slope;
    m.dropout_rate = c.dropout;
    return m;
}

TrainConfig train_config(const RunConfig& c, std::uint64_t seed) {
    TrainConfig t;
    t.epochs = c.epochs;
    t.learning_rate = c.learning_rate;
    t.batch_size = c.batch_size;
    t.dropout_rate = c.dropout;
    t.seed = seed;
    return t;
}

}  // namespace spanrec
