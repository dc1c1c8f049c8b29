#include "spanrec/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "spanrec/eval.hpp"

namespace spanrec {

void validate(const TrainConfig& config) {
    if (config.epochs < 0) throw ValidationError("epochs must be >= 0");
    if (!(config.learning_rate > 0.0)) throw ValidationError("learning_rate must be > 0");
    if (config.batch_size < 1) throw ValidationError("batch_size must be >= 1");
    if (!(config.dropout_rate >= 0.0 && config.dropout_rate < 1.0))
        throw ValidationError("dropout_rate must be in [0,1)");
    if (!(config.adam_beta1 >= 0.0 && config.adam_beta1 < 1.0))
        throw ValidationError("adam_beta1 must be in [0,1)");
    if (!(config.adam_beta2 >= 0.0 && config.adam_beta2 < 1.0))
        throw ValidationError("adam_beta2 must be in [0,1)");
    if (!(config.adam_eps > 0.0)) throw ValidationError("adam_eps must be > 0");
}

void Gradients::zero() {
    emb_user.zero();
    emb_item.zero();
    emb_span.zero();
    W.zero();
    std::fill(a.begin(), a.end(), 0.0);
    W_e.zero();
    std::fill(W_l.begin(), W_l.end(), 0.0);
    std::fill(W_s.begin(), W_s.end(), 0.0);
    alpha = 0.0;
    beta = 0.0;
}

Gradients make_gradients(const Model& model) {
    Gradients g;
    g.emb_user = Matrix(model.emb.user.rows, model.emb.user.cols);
    g.emb_item = Matrix(model.emb.item.rows, model.emb.item.cols);
    g.emb_span = Matrix(model.emb.span.rows, model.emb.span.cols);
    g.W = Matrix(model.att.W.rows, model.att.W.cols);
    g.a.assign(model.att.a.size(), 0.0);
    g.W_e = Matrix(model.att.W_e.rows, model.att.W_e.cols);
    g.W_l.assign(model.pred.W_l.size(), 0.0);
    g.W_s.assign(model.pred.W_s.size(), 0.0);
    return g;
}

namespace {

bool all_finite(const double* p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
        if (!std::isfinite(p[i])) return false;
    return true;
}

}  // namespace

void check_finite(const Gradients& grads) {
    struct View {
        const char* name;
        const double* p;
        std::size_t n;
    };
    const View views[] = {
        {"embeddings.user", grads.emb_user.data.data(), grads.emb_user.size()},
        {"embeddings.item", grads.emb_item.data.data(), grads.emb_item.size()},
        {"embeddings.span", grads.emb_span.data.data(), grads.emb_span.size()},
        {"attention.W", grads.W.data.data(), grads.W.size()},
        {"attention.a", grads.a.data(), grads.a.size()},
        {"attention.W_e", grads.W_e.data.data(), grads.W_e.size()},
        {"predictor.W_l", grads.W_l.data(), grads.W_l.size()},
        {"predictor.W_s", grads.W_s.data(), grads.W_s.size()},
        {"fusion.alpha", &grads.alpha, 1},
        {"fusion.beta", &grads.beta, 1},
    };
    for (const auto& v : views)
        if (!all_finite(v.p, v.n))
            throw TrainingError(std::string("non-finite gradient in ") + v.name);
}

std::vector<double> apply_dropout(const std::vector<double>& v, double rate, Rng& rng,
                                  std::vector<double>* mask) {
    if (!(rate >= 0.0 && rate < 1.0)) throw ValidationError("dropout rate must be in [0,1)");
    std::vector<double> out(v.size());
    if (mask) mask->assign(v.size(), 1.0);
    if (rate == 0.0) {
        out = v;
        return out;
    }
    const double keep_scale = 1.0 / (1.0 - rate);
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double scale = rng.uniform() < rate ? 0.0 : keep_scale;
        if (mask) (*mask)[i] = scale;
        out[i] = scale * v[i];
    }
    return out;
}

namespace {

std::optional<int> select_span(const HeteroGraph& graph, int user, std::int64_t ts) {
    if (graph.num_spans() == 0 || ts < graph.span_params.origin) return std::nullopt;
    return graph.latest_span_at_or_before(user, span_index(ts, graph.span_params));
}

}  // namespace

double forward_example(const Model& model, const HeteroGraph& graph, ProjectionCache& cache,
                       const IndexedRating& example, DropoutSampler* dropout, ExampleTape& tape) {
    const int dp = model.proj_dim();
    const double slope = model.config.leaky_slope;

    tape.user = example.user;
    tape.item = example.item;
    tape.target = example.rating;

    std::vector<double> scratch;
    aggregate_node(model, graph, cache, graph.user_node(example.user), dropout, &tape.user_trace,
                   scratch);
    aggregate_node(model, graph, cache, graph.item_node(example.item), dropout, &tape.item_trace,
                   scratch);
    const std::vector<double>& h_u = tape.user_trace.h;
    const std::vector<double>& h_i = tape.item_trace.h;

    tape.z_l = dot(model.pred.W_l.data(), h_u.data(), dp) +
               dot(model.pred.W_l.data() + dp, h_i.data(), dp);
    tape.r_l = leaky_relu(tape.z_l, slope);

    const std::optional<int> slot = select_span(graph, example.user, example.timestamp);
    tape.used_span = slot.has_value();
    if (slot) {
        aggregate_node(model, graph, cache, graph.span_node(*slot), dropout, &tape.span_trace,
                       scratch);
        const std::vector<double>& h_s = tape.span_trace.h;
        tape.z_s = dot(model.pred.W_s.data(), h_s.data(), dp) +
                   dot(model.pred.W_s.data() + dp, h_i.data(), dp);
        tape.r_s = leaky_relu(tape.z_s, slope);
        tape.y = fuse(tape.r_s, tape.r_l, model.pred.alpha, model.pred.beta);
    } else {
        tape.z_s = 0.0;
        tape.r_s = 0.0;
        tape.y = model.pred.beta * tape.r_l;
    }
    return tape.y;
}

namespace {

// Accumulates dL/d(W h_b) per node across a batch. Since W and the raw
// embeddings are fixed within a batch, the chain through the shared projection
// can run once per touched node at the end:
//   dW      += delta_n (outer) emb_n
//   demb_n  += W^T delta_n
class DeltaBuffer {
public:
    DeltaBuffer(int total_nodes, int dp)
        : dp_(dp), delta_(static_cast<std::size_t>(total_nodes) * dp, 0.0), hit_(total_nodes, 0) {}

    void add(int node, const double* v) {
        if (!hit_[static_cast<std::size_t>(node)]) {
            hit_[static_cast<std::size_t>(node)] = 1;
            touched_.push_back(node);
        }
        axpy(1.0, v, row(node), dp_);
    }

    double* row(int node) { return delta_.data() + static_cast<std::size_t>(node) * dp_; }
    const std::vector<int>& touched() const { return touched_; }

    void reset() {
        for (int node : touched_) {
            std::fill(row(node), row(node) + dp_, 0.0);
            hit_[static_cast<std::size_t>(node)] = 0;
        }
        touched_.clear();
    }

private:
    int dp_;
    std::vector<double> delta_;
    std::vector<std::uint8_t> hit_;
    std::vector<int> touched_;
};

// Backward through one recorded aggregation h = LeakyReLU(sum_b alpha_b q_b):
//   dpre      = gh * lrelu'(pre)                      (elementwise)
//   dalpha_b  = dpre . q_b
//   dact_b    = alpha_b (dalpha_b - sum_c alpha_c dalpha_c)   (softmax)
//   dlogit_b  = dact_b * lrelu'(logit_b)
//   da1 += (sum_b dlogit_b) q_0,  da2 += sum_b dlogit_b q_b
//   da3[k]   += (sum_b dlogit_b w_b) W_e[k],  dW_e[k] += (sum_b dlogit_b w_b) a3[k]
//   dq_b      = alpha_b dpre + dlogit_b a2  (+ (sum dlogit) a1 for b = 0)
//   delta[nbr_b] += mask_b * dq_b           (projection chain deferred)
void aggregation_backward(const Model& model, const AggregationTrace& t,
                          const std::vector<double>& gh, Gradients& grads, DeltaBuffer& delta) {
    const int dp = model.proj_dim();
    const int de = model.config.edge_feat_dim;
    const int n = t.size();
    const double slope = model.config.leaky_slope;

    std::vector<double> dpre(static_cast<std::size_t>(dp));
    for (int k = 0; k < dp; ++k)
        dpre[static_cast<std::size_t>(k)] =
            gh[static_cast<std::size_t>(k)] * leaky_relu_grad(t.pre_act[static_cast<std::size_t>(k)], slope);

    std::vector<double> dalpha(static_cast<std::size_t>(n));
    double weighted = 0.0;  // sum_c alpha_c dalpha_c
    for (int b = 0; b < n; ++b) {
        dalpha[static_cast<std::size_t>(b)] =
            dot(dpre.data(), t.q.data() + static_cast<std::size_t>(b) * dp, dp);
        weighted += t.alpha[static_cast<std::size_t>(b)] * dalpha[static_cast<std::size_t>(b)];
    }

    std::vector<double> dlogit(static_cast<std::size_t>(n));
    double dlogit_sum = 0.0;
    double dlogit_wsum = 0.0;
    for (int b = 0; b < n; ++b) {
        const double dact =
            t.alpha[static_cast<std::size_t>(b)] * (dalpha[static_cast<std::size_t>(b)] - weighted);
        dlogit[static_cast<std::size_t>(b)] =
            dact * leaky_relu_grad(t.logits[static_cast<std::size_t>(b)], slope);
        dlogit_sum += dlogit[static_cast<std::size_t>(b)];
        dlogit_wsum += dlogit[static_cast<std::size_t>(b)] * t.edge_weight[static_cast<std::size_t>(b)];
    }

    double* da1 = grads.a.data();
    double* da2 = da1 + dp;
    double* da3 = da2 + dp;
    const double* a1 = model.att.a.data();
    const double* a2 = a1 + dp;
    const double* a3 = a2 + dp;

    axpy(dlogit_sum, t.q.data(), da1, dp);
    for (int b = 0; b < n; ++b)
        axpy(dlogit[static_cast<std::size_t>(b)], t.q.data() + static_cast<std::size_t>(b) * dp, da2,
             dp);
    for (int k = 0; k < de; ++k) {
        da3[k] += dlogit_wsum * model.att.W_e(k, 0);
        grads.W_e(k, 0) += dlogit_wsum * a3[k];
    }

    std::vector<double> dq(static_cast<std::size_t>(dp));
    for (int b = 0; b < n; ++b) {
        const double ab = t.alpha[static_cast<std::size_t>(b)];
        const double db = dlogit[static_cast<std::size_t>(b)];
        for (int k = 0; k < dp; ++k)
            dq[static_cast<std::size_t>(k)] = ab * dpre[static_cast<std::size_t>(k)] + db * a2[k];
        if (b == 0) axpy(dlogit_sum, a1, dq.data(), dp);
        if (!t.mask.empty()) {
            const double* m = t.mask.data() + static_cast<std::size_t>(b) * dp;
            for (int k = 0; k < dp; ++k) dq[static_cast<std::size_t>(k)] *= m[k];
        }
        delta.add(t.nbr[static_cast<std::size_t>(b)], dq.data());
    }
}

double* grad_embedding_row(Gradients& grads, const HeteroGraph& graph, int node) {
    switch (graph.kind_of(node)) {
        case NodeKind::User: return grads.emb_user.row(node);
        case NodeKind::Item: return grads.emb_item.row(node - graph.num_users);
        case NodeKind::Span: return grads.emb_span.row(node - graph.num_users - graph.num_items);
    }
    return nullptr;
}

}  // namespace

void backward_batch(const Model& model, const HeteroGraph& graph,
                    const std::vector<ExampleTape>& tapes, Gradients& grads) {
    if (tapes.empty()) throw ValidationError("backward_batch needs a non-empty batch");
    grads.zero();
    const int dp = model.proj_dim();
    const double slope = model.config.leaky_slope;
    const double inv_b = 1.0 / static_cast<double>(tapes.size());

    DeltaBuffer delta(graph.total_nodes(), dp);
    std::vector<double> gh_u(static_cast<std::size_t>(dp));
    std::vector<double> gh_i(static_cast<std::size_t>(dp));
    std::vector<double> gh_s(static_cast<std::size_t>(dp));

    for (const ExampleTape& tape : tapes) {
        // Mean squared error over the batch.
        const double g = 2.0 * (tape.y - tape.target) * inv_b;

        double dr_l;
        double dr_s = 0.0;
        if (tape.used_span) {
            grads.alpha += g * tape.r_s;
            grads.beta += g * tape.r_l;
            dr_s = g * model.pred.alpha;
            dr_l = g * model.pred.beta;
        } else {
            grads.beta += g * tape.r_l;
            dr_l = g * model.pred.beta;
        }

        std::fill(gh_u.begin(), gh_u.end(), 0.0);
        std::fill(gh_i.begin(), gh_i.end(), 0.0);

        const double dz_l = dr_l * leaky_relu_grad(tape.z_l, slope);
        axpy(dz_l, tape.user_trace.h.data(), grads.W_l.data(), dp);
        axpy(dz_l, tape.item_trace.h.data(), grads.W_l.data() + dp, dp);
        axpy(dz_l, model.pred.W_l.data(), gh_u.data(), dp);
        axpy(dz_l, model.pred.W_l.data() + dp, gh_i.data(), dp);

        if (tape.used_span) {
            std::fill(gh_s.begin(), gh_s.end(), 0.0);
            const double dz_s = dr_s * leaky_relu_grad(tape.z_s, slope);
            axpy(dz_s, tape.span_trace.h.data(), grads.W_s.data(), dp);
            axpy(dz_s, tape.item_trace.h.data(), grads.W_s.data() + dp, dp);
            axpy(dz_s, model.pred.W_s.data(), gh_s.data(), dp);
            axpy(dz_s, model.pred.W_s.data() + dp, gh_i.data(), dp);
            aggregation_backward(model, tape.span_trace, gh_s, grads, delta);
        }

        aggregation_backward(model, tape.user_trace, gh_u, grads, delta);
        aggregation_backward(model, tape.item_trace, gh_i, grads, delta);
    }

    // Deferred projection chain, once per distinct node touched by the batch.
    for (int node : delta.touched()) {
        const double* d = delta.row(node);
        const double* emb = model.embedding_row(graph, node);
        outer_add(grads.W, d, emb);
        matvec_transpose_add(model.att.W, d, grad_embedding_row(grads, graph, node));
    }

    check_finite(grads);
}

double batch_loss(const Model& model, const HeteroGraph& graph,
                  const std::vector<IndexedRating>& batch) {
    if (batch.empty()) throw ValidationError("batch_loss needs a non-empty batch");
    ProjectionCache cache(model, graph);
    ExampleTape tape;
    double acc = 0.0;
    for (const auto& ex : batch) {
        forward_example(model, graph, cache, ex, nullptr, tape);
        acc += loss(tape.y, tape.target);
    }
    return acc / static_cast<double>(batch.size());
}

double central_difference(const std::function<double(double)>& f, double x, double eps) {
    return (f(x + eps) - f(x - eps)) / (2.0 * eps);
}

double finite_diff_grad(Model& model, const HeteroGraph& graph,
                        const std::vector<IndexedRating>& batch, double* coordinate, double eps) {
    const double saved = *coordinate;
    *coordinate = saved + eps;
    const double up = batch_loss(model, graph, batch);
    *coordinate = saved - eps;
    const double down = batch_loss(model, graph, batch);
    *coordinate = saved;
    return (up - down) / (2.0 * eps);
}

AdamState make_adam_state(const Model& model) {
    AdamState s;
    s.emb_user.init(model.emb.user.size());
    s.emb_item.init(model.emb.item.size());
    s.emb_span.init(model.emb.span.size());
    s.W.init(model.att.W.size());
    s.a.init(model.att.a.size());
    s.W_e.init(model.att.W_e.size());
    s.W_l.init(model.pred.W_l.size());
    s.W_s.init(model.pred.W_s.size());
    s.fusion.init(2);
    return s;
}

namespace {

void adam_update(double* params, const double* grads, AdamState::Tensor& st, std::size_t n,
                 const TrainConfig& c, const char* name) {
    for (std::size_t i = 0; i < n; ++i) {
        const double g = grads[i];
        if (g == 0.0) continue;  // untouched coordinates stay put
        ++st.t[i];
        st.m[i] = c.adam_beta1 * st.m[i] + (1.0 - c.adam_beta1) * g;
        st.v[i] = c.adam_beta2 * st.v[i] + (1.0 - c.adam_beta2) * g * g;
        const double t = static_cast<double>(st.t[i]);
        const double mhat = st.m[i] / (1.0 - std::pow(c.adam_beta1, t));
        const double vhat = st.v[i] / (1.0 - std::pow(c.adam_beta2, t));
        params[i] -= c.learning_rate * mhat / (std::sqrt(vhat) + c.adam_eps);
        if (!std::isfinite(params[i]))
            throw TrainingError(std::string("non-finite Adam update in ") + name);
    }
}

}  // namespace

void adam_step(Model& model, const Gradients& grads, AdamState& state, const TrainConfig& config) {
    adam_update(model.emb.user.data.data(), grads.emb_user.data.data(), state.emb_user,
                grads.emb_user.size(), config, "embeddings.user");
    adam_update(model.emb.item.data.data(), grads.emb_item.data.data(), state.emb_item,
                grads.emb_item.size(), config, "embeddings.item");
    adam_update(model.emb.span.data.data(), grads.emb_span.data.data(), state.emb_span,
                grads.emb_span.size(), config, "embeddings.span");
    adam_update(model.att.W.data.data(), grads.W.data.data(), state.W, grads.W.size(), config,
                "attention.W");
    adam_update(model.att.a.data(), grads.a.data(), state.a, grads.a.size(), config, "attention.a");
    adam_update(model.att.W_e.data.data(), grads.W_e.data.data(), state.W_e, grads.W_e.size(),
                config, "attention.W_e");
    adam_update(model.pred.W_l.data(), grads.W_l.data(), state.W_l, grads.W_l.size(), config,
                "predictor.W_l");
    adam_update(model.pred.W_s.data(), grads.W_s.data(), state.W_s, grads.W_s.size(), config,
                "predictor.W_s");
    const double fusion_grads[2] = {grads.alpha, grads.beta};
    double fusion_params[2] = {model.pred.alpha, model.pred.beta};
    adam_update(fusion_params, fusion_grads, state.fusion, 2, config, "fusion");
    model.pred.alpha = fusion_params[0];
    model.pred.beta = fusion_params[1];
}

TrainResult train(const HeteroGraph& graph, const std::vector<IndexedRating>& train_split,
                  const std::vector<IndexedRating>& val_split, const ModelConfig& model_config,
                  const TrainConfig& config, const EpochCallback& on_epoch) {
    validate(config);
    if (train_split.empty()) throw ValidationError("training split is empty");

    ModelConfig mc = model_config;
    mc.dropout_rate = config.dropout_rate;

    TrainResult result;
    result.model = init_model(graph, mc, config.seed);

    // No validation split: per-epoch metrics (and best-epoch selection) fall
    // back to the training split so the trace stays well-defined.
    const std::vector<IndexedRating>& val = val_split.empty() ? train_split : val_split;

    if (config.epochs == 0) {
        const EvalOutcome out = evaluate_split(result.model, graph, train_split, val);
        result.best_epoch = 0;
        result.best_val_mae = out.mae;
        result.best_val_rmse = out.rmse;
        return result;
    }

    Model model = result.model;
    ProjectionCache cache(model, graph);
    DropoutSampler dropout(config.dropout_rate, derive_seed(config.seed, "dropout"));
    Rng shuffle_rng(derive_seed(config.seed, "shuffle"));
    AdamState adam = make_adam_state(model);
    Gradients grads = make_gradients(model);

    std::vector<std::size_t> order(train_split.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    const std::size_t n = train_split.size();
    const std::size_t bs = static_cast<std::size_t>(config.batch_size);
    std::vector<ExampleTape> tapes;
    double best_mae = std::numeric_limits<double>::infinity();

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        const auto start = std::chrono::steady_clock::now();
        shuffle_rng.shuffle(order);

        double loss_sum = 0.0;
        for (std::size_t begin = 0; begin < n; begin += bs) {
            const std::size_t count = std::min(bs, n - begin);
            tapes.resize(count);
            for (std::size_t j = 0; j < count; ++j) {
                const IndexedRating& ex = train_split[order[begin + j]];
                forward_example(model, graph, cache, ex, &dropout, tapes[j]);
                loss_sum += loss(tapes[j].y, tapes[j].target);
            }
            backward_batch(model, graph, tapes, grads);
            adam_step(model, grads, adam, config);
            cache.invalidate();
        }

        const EvalOutcome out = evaluate_split(model, graph, train_split, val);
        const auto end = std::chrono::steady_clock::now();

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = loss_sum / static_cast<double>(n);
        stats.val_mae = out.mae;
        stats.val_rmse = out.rmse;
        stats.seconds = std::chrono::duration<double>(end - start).count();
        result.trace.push_back(stats);
        if (on_epoch) on_epoch(stats);

        if (out.mae < best_mae) {
            best_mae = out.mae;
            result.model = model;
            result.best_epoch = epoch;
            result.best_val_mae = out.mae;
            result.best_val_rmse = out.rmse;
        }

        if (out.mae > 10.0)
            throw TrainingError("validation MAE diverged at epoch " + std::to_string(epoch) + ": " +
                                std::to_string(out.mae));
    }
    return result;
}

GradcheckFixture make_gradcheck_fixture(std::uint64_t seed, int embed_dim, double kink_margin) {
    constexpr int kUsers = 10;
    constexpr int kItems = 15;
    constexpr int kCategories = 3;
    constexpr std::int64_t kSpanLength = 100;

    for (int salt = 0; salt < 200; ++salt) {
        Rng rng(derive_seed(seed, "gradcheck-fixture", static_cast<std::uint64_t>(salt)));

        GradcheckFixture fx;
        fx.salt = salt;
        fx.category_of.resize(kItems);
        for (int i = 0; i < kItems; ++i) fx.category_of[static_cast<std::size_t>(i)] = static_cast<int>(rng.below(kCategories));

        for (int u = 0; u < kUsers; ++u) {
            const int extra = static_cast<int>(rng.below(3));
            for (int k = 0; k < 3 + extra; ++k) {
                IndexedRating r;
                r.user = u;
                r.item = static_cast<int>(rng.below(kItems));
                r.category = fx.category_of[static_cast<std::size_t>(r.item)];
                r.rating = 1.0 + static_cast<double>(rng.below(5));
                // First two interactions pin down two distinct spans per user.
                if (k == 0) r.timestamp = static_cast<std::int64_t>(rng.below(kSpanLength));
                else if (k == 1) r.timestamp = kSpanLength + static_cast<std::int64_t>(rng.below(kSpanLength));
                else r.timestamp = static_cast<std::int64_t>(rng.below(3 * kSpanLength));
                fx.train.push_back(r);
            }
        }

        std::set<std::pair<int, int>> seen;
        for (int k = 0; k < 14; ++k) {
            const int a = static_cast<int>(rng.below(kUsers));
            const int b = static_cast<int>(rng.below(kUsers));
            if (a == b || !seen.insert({a, b}).second) continue;
            fx.trusts.push_back({a, b});
        }

        GraphConfig gc;
        gc.span.origin = 0;
        gc.span.span_length = kSpanLength;
        gc.item_item_seed = derive_seed(seed, "gradcheck-graph", static_cast<std::uint64_t>(salt));
        fx.graph = build_graph(fx.train, fx.trusts, fx.category_of, kUsers, kItems, gc);

        ModelConfig mc;
        mc.embed_dim = embed_dim;
        mc.dropout_rate = 0.0;
        fx.model = init_model(fx.graph, mc, derive_seed(seed, "gradcheck-model", static_cast<std::uint64_t>(salt)));

        std::vector<IndexedRating> pool = fx.train;
        rng.shuffle(pool);
        pool.resize(std::min<std::size_t>(pool.size(), 12));
        fx.batch = std::move(pool);

        // Finite differences are invalid on a LeakyReLU kink; demand a margin
        // on every pre-activation the check batch evaluates.
        ProjectionCache cache(fx.model, fx.graph);
        ExampleTape tape;
        double margin = std::numeric_limits<double>::infinity();
        auto scan_trace = [&margin](const AggregationTrace& t) {
            for (double v : t.logits) margin = std::min(margin, std::fabs(v));
            for (double v : t.pre_act) margin = std::min(margin, std::fabs(v));
        };
        for (const auto& ex : fx.batch) {
            forward_example(fx.model, fx.graph, cache, ex, nullptr, tape);
            scan_trace(tape.user_trace);
            scan_trace(tape.item_trace);
            margin = std::min(margin, std::fabs(tape.z_l));
            if (tape.used_span) {
                scan_trace(tape.span_trace);
                margin = std::min(margin, std::fabs(tape.z_s));
            }
        }
        if (margin >= kink_margin) return fx;
    }
    throw TrainingError("could not build a gradcheck fixture clear of activation kinks");
}

namespace {

double relative_error(double analytic, double fd) {
    const double denom = std::max(std::fabs(analytic), std::fabs(fd));
    if (denom < 1e-5) return std::fabs(analytic - fd);  // both effectively zero
    return std::fabs(analytic - fd) / denom;
}

}  // namespace

GradReport gradient_check(const GradcheckFixture& fixture, double eps, double corrupt_delta) {
    Model model = fixture.model;
    const HeteroGraph& graph = fixture.graph;

    ProjectionCache cache(model, graph);
    std::vector<ExampleTape> tapes(fixture.batch.size());
    for (std::size_t j = 0; j < fixture.batch.size(); ++j)
        forward_example(model, graph, cache, fixture.batch[j], nullptr, tapes[j]);
    Gradients grads = make_gradients(model);
    backward_batch(model, graph, tapes, grads);
    grads.W(0, 0) += corrupt_delta;

    GradReport report;
    auto check_family = [&](const std::string& name, double* params, const double* analytic,
                            std::size_t count) {
        GradReport::Entry entry;
        entry.family = name;
        entry.coords = count;
        for (std::size_t i = 0; i < count; ++i) {
            const double fd = finite_diff_grad(model, graph, fixture.batch, params + i, eps);
            entry.max_rel_err = std::max(entry.max_rel_err, relative_error(analytic[i], fd));
        }
        report.overall = std::max(report.overall, entry.max_rel_err);
        report.entries.push_back(entry);
    };

    check_family("embeddings.user", model.emb.user.data.data(), grads.emb_user.data.data(),
                 grads.emb_user.size());
    check_family("embeddings.item", model.emb.item.data.data(), grads.emb_item.data.data(),
                 grads.emb_item.size());
    check_family("embeddings.span", model.emb.span.data.data(), grads.emb_span.data.data(),
                 grads.emb_span.size());
    check_family("attention.W", model.att.W.data.data(), grads.W.data.data(), grads.W.size());
    check_family("attention.a", model.att.a.data(), grads.a.data(), grads.a.size());
    check_family("attention.W_e", model.att.W_e.data.data(), grads.W_e.data.data(),
                 grads.W_e.size());
    check_family("predictor.W_l", model.pred.W_l.data(), grads.W_l.data(), grads.W_l.size());
    check_family("predictor.W_s", model.pred.W_s.data(), grads.W_s.data(), grads.W_s.size());
    check_family("fusion.alpha", &model.pred.alpha, &grads.alpha, 1);
    check_family("fusion.beta", &model.pred.beta, &grads.beta, 1);
    return report;
}

GradReport gradient_check(std::uint64_t seed, double eps, double corrupt_delta) {
    return gradient_check(make_gradcheck_fixture(seed), eps, corrupt_delta);
}

}  // namespace spanrec
