#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "spanrec/model.hpp"

namespace spanrec {

struct TrainConfig {
    int epochs = 15;
    double learning_rate = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    int batch_size = 256;
    double dropout_rate = 0.6;
    std::uint64_t seed = 0;
};

void validate(const TrainConfig& config);

// Squared error on the raw (unclamped) prediction; batches take the mean.
inline double loss(double prediction, double target) {
    const double d = prediction - target;
    return d * d;
}

// One gradient accumulator per trainable tensor, shapes mirroring the model.
struct Gradients {
    Matrix emb_user, emb_item, emb_span;
    Matrix W;
    std::vector<double> a;
    Matrix W_e;
    std::vector<double> W_l, W_s;
    double alpha = 0.0;
    double beta = 0.0;

    void zero();
};

Gradients make_gradients(const Model& model);

// Throws TrainingError naming the first non-finite tensor, if any.
void check_finite(const Gradients& grads);

// Inverted dropout: coordinates survive with probability 1-rate and are scaled
// by 1/(1-rate); the mask holds the applied scale factors so a backward pass
// can replay the exact forward. rate 0 is the identity with an all-ones mask.
std::vector<double> apply_dropout(const std::vector<double>& v, double rate, Rng& rng,
                                  std::vector<double>* mask);

// Everything one example's backward pass needs from its forward pass. Dropout
// masks live inside the aggregation traces.
struct ExampleTape {
    int user = 0;
    int item = 0;
    double target = 0.0;
    AggregationTrace user_trace, item_trace, span_trace;
    bool used_span = false;
    double z_l = 0.0, r_l = 0.0;  // long-term head pre-activation and output
    double z_s = 0.0, r_s = 0.0;  // short-term head, meaningful when used_span
    double y = 0.0;
};

// Training-path forward for one example; returns the unclamped prediction.
// `dropout` may be null (used by the finite-difference oracle).
double forward_example(const Model& model, const HeteroGraph& graph, ProjectionCache& cache,
                       const IndexedRating& example, DropoutSampler* dropout, ExampleTape& tape);

// Gradient of the mean batch loss with respect to every trainable scalar,
// accumulated into `grads` (which is zeroed first). Hand-derived chain rule
// through the fusion, both heads, the attention softmax and the shared
// projection; per-node delta buffering keeps the d x d work proportional to
// the number of distinct touched nodes rather than edge visits.
void backward_batch(const Model& model, const HeteroGraph& graph,
                    const std::vector<ExampleTape>& tapes, Gradients& grads);

// Mean loss of a batch with dropout disabled; used by the gradient oracle.
double batch_loss(const Model& model, const HeteroGraph& graph,
                  const std::vector<IndexedRating>& batch);

// Central difference (f(x+eps) - f(x-eps)) / (2 eps).
double central_difference(const std::function<double(double)>& f, double x, double eps);

// Central-difference derivative of the mean batch loss with respect to one
// parameter coordinate (any double owned by the model).
double finite_diff_grad(Model& model, const HeteroGraph& graph,
                        const std::vector<IndexedRating>& batch, double* coordinate,
                        double eps = 1e-5);

// Adam moments with per-coordinate step counts: a coordinate whose gradient is
// exactly zero is skipped entirely, so untouched parameters (ablated
// components, embeddings outside the batch) never move and each coordinate
// follows the standard bias-corrected recurrence over its own update history.
struct AdamState {
    struct Tensor {
        std::vector<double> m, v;
        std::vector<std::uint32_t> t;

        void init(std::size_t n) {
            m.assign(n, 0.0);
            v.assign(n, 0.0);
            t.assign(n, 0);
        }
    };
    Tensor emb_user, emb_item, emb_span, W, a, W_e, W_l, W_s, fusion;
};

AdamState make_adam_state(const Model& model);

void adam_step(Model& model, const Gradients& grads, AdamState& state, const TrainConfig& config);

struct EpochStats {
    int epoch = 0;  // 1-based
    double train_loss = 0.0;
    double val_mae = 0.0;
    double val_rmse = 0.0;
    double seconds = 0.0;
};

struct TrainResult {
    Model model;  // parameters from the best-validation-MAE epoch
    std::vector<EpochStats> trace;
    int best_epoch = 0;  // 0 = initialized model (epochs == 0)
    double best_val_mae = 0.0;
    double best_val_rmse = 0.0;
};

using EpochCallback = std::function<void(const EpochStats&)>;

// Runs `config.epochs` over shuffled training batches, evaluating MAE/RMSE on
// the validation split each epoch; returns the best-validation-MAE epoch's
// parameters. Deterministic given the seed (the seconds field excepted).
// Validation MAE above 10 aborts with TrainingError after reporting the epoch.
TrainResult train(const HeteroGraph& graph, const std::vector<IndexedRating>& train_split,
                  const std::vector<IndexedRating>& val_split, const ModelConfig& model_config,
                  const TrainConfig& config, const EpochCallback& on_epoch = nullptr);

// Small seeded instance for the gradient oracle: 10 users, 15 items, span
// length forcing at least two spans per user. The generator re-salts until
// every LeakyReLU argument on the check batch is at least `kink_margin` from
// the kink, where finite differences would be invalid.
struct GradcheckFixture {
    std::vector<IndexedRating> train;
    std::vector<IndexedTrust> trusts;
    std::vector<int> category_of;
    HeteroGraph graph;
    Model model;
    std::vector<IndexedRating> batch;
    int salt = 0;
};

GradcheckFixture make_gradcheck_fixture(std::uint64_t seed, int embed_dim = 16,
                                        double kink_margin = 2e-4);

struct GradReport {
    struct Entry {
        std::string family;
        double max_rel_err = 0.0;
        std::size_t coords = 0;
    };
    std::vector<Entry> entries;
    double overall = 0.0;
    bool pass(double tol = 1e-4) const { return overall < tol; }
};

// Compares the analytic gradient of the mean batch loss against central
// differences for every coordinate of every parameter family, dropout off.
// `corrupt_delta` is a verification hook: it is added to one analytic W
// coordinate before the comparison so tests can prove the checker detects
// discrepancies.
GradReport gradient_check(const GradcheckFixture& fixture, double eps = 1e-5,
                          double corrupt_delta = 0.0);
GradReport gradient_check(std::uint64_t seed, double eps = 1e-5, double corrupt_delta = 0.0);

}  // namespace spanrec
