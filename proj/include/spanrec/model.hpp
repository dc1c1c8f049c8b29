#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "spanrec/graph.hpp"
#include "spanrec/linalg.hpp"

namespace spanrec {

struct ModelConfig {
    int embed_dim = 64;
    double leaky_slope = 0.2;
    double dropout_rate = 0.6;
    int heads = 1;          // only 1 is supported
    int edge_feat_dim = 1;  // scalar edge weight

    bool operator==(const ModelConfig&) const = default;
};

struct EmbeddingTable {
    Matrix user;  // num_users x d
    Matrix item;  // num_items x d
    Matrix span;  // num_spans x d
};

struct AttentionParams {
    Matrix W;               // projection, d' x d
    std::vector<double> a;  // attention vector, 2d' + d_e
    Matrix W_e;             // edge feature map, d_e x 1
};

struct PredictorParams {
    std::vector<double> W_l;  // long-term head, 2d'
    std::vector<double> W_s;  // short-term head, 2d'
    double alpha = 1.0;       // fusion weight of the short-term prediction
    double beta = 1.0;        // fusion weight of the long-term prediction
};

struct Model {
    ModelConfig config;
    EmbeddingTable emb;
    AttentionParams att;
    PredictorParams pred;

    int embed_dim() const { return config.embed_dim; }
    int proj_dim() const { return att.W.rows; }

    // Embedding row backing a flat graph node id.
    const double* embedding_row(const HeteroGraph& graph, int node) const;
    double* embedding_row(const HeteroGraph& graph, int node);
};

// Free parameters initialized uniformly in [-1/sqrt(d), 1/sqrt(d)]; alpha and
// beta start at 1.
Model init_model(const HeteroGraph& graph, const ModelConfig& config, std::uint64_t seed);

// 1-dimensional edge feature: the scalar normalized weight.
inline std::vector<double> edge_feature(double weight) { return {weight}; }

// Lazily caches the shared projection W h_n per node. Valid only while the
// parameters are unchanged; call invalidate() after every update.
class ProjectionCache {
public:
    ProjectionCache(const Model& model, const HeteroGraph& graph);
    void invalidate();
    const double* get(int node);

private:
    const Model* model_;
    const HeteroGraph* graph_;
    std::vector<double> proj_;
    std::vector<std::uint32_t> stamp_;
    std::uint32_t current_ = 1;
};

// Draws inverted-dropout scale factors (0 with probability `rate`, else
// 1/(1-rate)) from its own stream.
class DropoutSampler {
public:
    DropoutSampler(double rate, std::uint64_t seed) : rate_(rate), rng_(seed) {}
    void sample(double* scales, int n);
    double rate() const { return rate_; }

private:
    double rate_;
    Rng rng_;
};

// Everything the backward pass needs from one node aggregation. Row 0 of every
// per-neighbor array is the self edge (feature weight 1).
struct AggregationTrace {
    int target = -1;
    std::vector<int> nbr;             // neighbor node ids, [0] = target
    std::vector<double> edge_weight;  // scalar features, [0] = 1.0
    std::vector<double> mask;         // n x d' dropout scales; empty when dropout off
    std::vector<double> q;            // n x d' masked projections
    std::vector<double> logits;       // n, pre-LeakyReLU attention logits
    std::vector<double> alpha;        // n, softmax coefficients
    std::vector<double> pre_act;      // d', sum before the output nonlinearity
    std::vector<double> h;            // d', aggregated representation

    int size() const { return static_cast<int>(nbr.size()); }
};

// One edge-weighted attention aggregation (the h'_a of the attention layer).
// `dropout` may be null (inference); `trace` may be null when intermediates
// are not needed.
void aggregate_node(const Model& model, const HeteroGraph& graph, ProjectionCache& cache, int node,
                    DropoutSampler* dropout, AggregationTrace* trace, std::vector<double>& out);

// Softmax attention coefficients over [self, neighbors...] with dropout off.
std::vector<double> attention_coefficients(const Model& model, const HeteroGraph& graph, int node);

double predict_long(const Model& model, const std::vector<double>& h_user,
                    const std::vector<double>& h_item);
double predict_short(const Model& model, const std::vector<double>& h_span,
                     const std::vector<double>& h_item);
double fuse(double r_s, double r_l, double alpha, double beta);

struct PredictionDetail {
    double y = 0.0;  // unclamped
    double r_s = 0.0;
    double r_l = 0.0;
    bool used_span = false;
    int span_slot = -1;
};

// Inference-path rating estimate (dropout off, unclamped). Span selection: the
// span containing the query timestamp, else the most recent earlier span, else
// the long-term head alone (y = beta * r_l).
double predict_rating(const Model& model, const HeteroGraph& graph, ProjectionCache& cache, int user,
                      int item, std::int64_t ts, PredictionDetail* detail = nullptr);

// Wraps predict_rating with the cold-start policy: pairs whose user or item has
// no training-split rating fall back to the training mean.
class RatingPredictor {
public:
    RatingPredictor(const Model& model, const HeteroGraph& graph,
                    const std::vector<IndexedRating>& train);

    struct Result {
        double y = 0.0;  // unclamped
        bool fallback = false;
    };
    Result predict(int user, int item, std::int64_t ts);

    double global_mean() const { return global_mean_; }
    void invalidate() { cache_.invalidate(); }

private:
    const Model* model_;
    const HeteroGraph* graph_;
    ProjectionCache cache_;
    double global_mean_ = 0.0;
    std::vector<std::uint8_t> user_seen_;
    std::vector<std::uint8_t> item_seen_;
};

}  // namespace spanrec
