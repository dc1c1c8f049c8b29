#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spanrec/config.hpp"
#include "spanrec/metrics.hpp"
#include "spanrec/model.hpp"
#include "spanrec/training.hpp"

namespace spanrec {

struct EvalOutcome {
    double mae = 0.0;
    double rmse = 0.0;
    double coverage = 1.0;  // fraction of pairs served without cold-start fallback
    std::size_t n = 0;
};

// Metrics over `examples` with predictions clamped to [1,5]; cold-start pairs
// (user or item absent from the training split) are served by the training
// mean and counted against coverage.
EvalOutcome evaluate_split(const Model& model, const HeteroGraph& graph,
                           const std::vector<IndexedRating>& train_split,
                           const std::vector<IndexedRating>& examples);

struct MetricsReport {
    double mae = 0.0;
    double rmse = 0.0;
    std::size_t n = 0;
    double coverage = 1.0;
    std::uint64_t seed = 0;
    std::string config_digest;
    double seconds = 0.0;  // wall time of this seed's train + evaluate
};

std::string metrics_report_json(const MetricsReport& report);

// Predicts the training mean rating for every pair.
class GlobalMeanBaseline {
public:
    explicit GlobalMeanBaseline(const std::vector<IndexedRating>& train);
    double predict() const { return mean_; }
    EvalOutcome evaluate(const std::vector<IndexedRating>& examples) const;

private:
    double mean_ = 0.0;
};

// split -> build graph (once, shared by all seeds) -> per seed: train on the
// training split, select by validation MAE, report test metrics.
std::vector<MetricsReport> run_experiment(const Dataset& data, const RunConfig& config);

enum class SweepAxis { EmbedDim, Dropout, SpanDays, Ablation };

SweepAxis parse_axis(const std::string& name);
const char* to_string(SweepAxis axis);

struct SweepSpec {
    SweepAxis axis = SweepAxis::SpanDays;
    std::vector<std::string> values;  // numbers, or ablation names (full,
                                      // no_edge_weights, no_span_nodes,
                                      // no_item_item, no_user_user)
    std::vector<std::uint64_t> seeds;
};

// The base config with one axis value applied.
RunConfig apply_axis_value(const RunConfig& base, SweepAxis axis, const std::string& value);

struct SweepRow {
    std::string axis;
    std::string value;
    std::uint64_t seed = 0;
    double mae = 0.0;
    double rmse = 0.0;
    double coverage = 1.0;
    double seconds = 0.0;
};

// Full cross product of values x seeds in stable (value-major) order.
std::vector<SweepRow> run_sweep(const Dataset& data, const RunConfig& base, const SweepSpec& spec);

std::string sweep_csv(const std::vector<SweepRow>& rows);
std::string sweep_jsonl(const std::vector<SweepRow>& rows);

}  // namespace spanrec
