#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "spanrec/dataset.hpp"
#include "spanrec/graph.hpp"
#include "spanrec/model.hpp"
#include "spanrec/training.hpp"

namespace spanrec {

enum class OriginPolicy { MinTimestamp, Explicit };

// Everything one run needs, loadable from a flat key = value file with CLI
// overrides on top.
struct RunConfig {
    std::string ratings_path;
    std::string trust_path;

    double train_frac = 0.8;
    double val_frac = 0.1;
    double test_frac = 0.1;
    std::uint64_t split_seed = 42;

    double span_days = 30.0;
    OriginPolicy origin_policy = OriginPolicy::MinTimestamp;
    std::int64_t origin_value = 0;  // seconds; used when policy is Explicit

    int embed_dim = 64;
    double dropout = 0.6;
    double leaky_slope = 0.2;
    int item_item_cap = 10;

    int epochs = 15;
    double learning_rate = 1e-3;
    int batch_size = 256;

    AblationFlags flags;
    std::vector<std::uint64_t> seeds = {0};
    std::string outdir = "out";

    bool operator==(const RunConfig&) const = default;
};

// Parses `key = value` lines; blank lines and # comments are skipped. Unknown
// keys and malformed values raise ParseError with the line number.
RunConfig parse_config_text(std::istream& in);
RunConfig load_config_file(const std::string& path);

// Applies one key/value pair (the same keys the file format uses); this is how
// CLI flag overrides are layered on top of a config file.
void apply_override(RunConfig& config, const std::string& key, const std::string& value,
                    std::size_t line = 0);

// Effective-config text; parse_config_text(serialize_config(c)) == c.
std::string serialize_config(const RunConfig& config);

// Hex digest over the semantic fields (splits, span, model, training,
// ablations). Paths, seeds list and output directory are excluded: the digest
// ties a checkpoint to a configuration, not to file locations.
std::string config_digest(const RunConfig& config);

void validate(const RunConfig& config);

std::int64_t span_seconds(const RunConfig& config);
std::int64_t resolve_origin(const RunConfig& config, const Dataset& data);
SplitSpec split_spec(const RunConfig& config);
// Item-item sampling is seeded by the split seed so every training seed shares
// one graph.
GraphConfig graph_config(const RunConfig& config, const Dataset& data);
ModelConfig model_config(const RunConfig& config);
TrainConfig train_config(const RunConfig& config, std::uint64_t seed);

}  // namespace spanrec
