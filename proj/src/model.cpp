#include "spanrec/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace spanrec {

const double* Model::embedding_row(const HeteroGraph& graph, int node) const {
    switch (graph.kind_of(node)) {
        case NodeKind::User: return emb.user.row(node);
        case NodeKind::Item: return emb.item.row(node - graph.num_users);
        case NodeKind::Span: return emb.span.row(node - graph.num_users - graph.num_items);
    }
    return nullptr;
}

double* Model::embedding_row(const HeteroGraph& graph, int node) {
    return const_cast<double*>(static_cast<const Model*>(this)->embedding_row(graph, node));
}

Model init_model(const HeteroGraph& graph, const ModelConfig& config, std::uint64_t seed) {
    if (config.embed_dim < 1) throw ValidationError("embed_dim must be >= 1");
    if (config.heads != 1) throw ValidationError("only a single attention head is supported");
    if (!(config.dropout_rate >= 0.0 && config.dropout_rate < 1.0))
        throw ValidationError("dropout_rate must be in [0,1)");
    if (config.edge_feat_dim < 1) throw ValidationError("edge_feat_dim must be >= 1");

    const int d = config.embed_dim;
    const int dp = d;  // shared projection keeps the embedding width
    const int de = config.edge_feat_dim;

    Model m;
    m.config = config;
    m.emb.user = Matrix(graph.num_users, d);
    m.emb.item = Matrix(graph.num_items, d);
    m.emb.span = Matrix(graph.num_spans(), d);
    m.att.W = Matrix(dp, d);
    m.att.a.assign(static_cast<std::size_t>(2 * dp + de), 0.0);
    m.att.W_e = Matrix(de, 1);
    m.pred.W_l.assign(static_cast<std::size_t>(2 * dp), 0.0);
    m.pred.W_s.assign(static_cast<std::size_t>(2 * dp), 0.0);
    m.pred.alpha = 1.0;
    m.pred.beta = 1.0;

    const double bound = 1.0 / std::sqrt(static_cast<double>(d));
    Rng rng(derive_seed(seed, "model-init"));
    auto fill = [&](double* data, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) data[i] = rng.uniform(-bound, bound);
    };
    fill(m.emb.user.data.data(), m.emb.user.size());
    fill(m.emb.item.data.data(), m.emb.item.size());
    fill(m.emb.span.data.data(), m.emb.span.size());
    fill(m.att.W.data.data(), m.att.W.size());
    fill(m.att.a.data(), m.att.a.size());
    fill(m.att.W_e.data.data(), m.att.W_e.size());
    fill(m.pred.W_l.data(), m.pred.W_l.size());
    fill(m.pred.W_s.data(), m.pred.W_s.size());
    return m;
}

ProjectionCache::ProjectionCache(const Model& model, const HeteroGraph& graph)
    : model_(&model),
      graph_(&graph),
      proj_(static_cast<std::size_t>(graph.total_nodes()) * model.proj_dim(), 0.0),
      stamp_(static_cast<std::size_t>(graph.total_nodes()), 0) {}

void ProjectionCache::invalidate() { ++current_; }

const double* ProjectionCache::get(int node) {
    double* slot = proj_.data() + static_cast<std::size_t>(node) * model_->proj_dim();
    if (stamp_[static_cast<std::size_t>(node)] != current_) {
        matvec(model_->att.W, model_->embedding_row(*graph_, node), slot);
        stamp_[static_cast<std::size_t>(node)] = current_;
    }
    return slot;
}

void DropoutSampler::sample(double* scales, int n) {
    const double keep_scale = 1.0 / (1.0 - rate_);
    for (int i = 0; i < n; ++i) scales[i] = rng_.uniform() < rate_ ? 0.0 : keep_scale;
}

void aggregate_node(const Model& model, const HeteroGraph& graph, ProjectionCache& cache, int node,
                    DropoutSampler* dropout, AggregationTrace* trace, std::vector<double>& out) {
    const int dp = model.proj_dim();
    const int de = model.config.edge_feat_dim;
    const double slope = model.config.leaky_slope;
    const auto& edges = graph.adj[static_cast<std::size_t>(node)];
    const int n = 1 + static_cast<int>(edges.size());

    AggregationTrace local;
    AggregationTrace& t = trace ? *trace : local;
    t.target = node;
    t.nbr.resize(static_cast<std::size_t>(n));
    t.edge_weight.resize(static_cast<std::size_t>(n));
    t.nbr[0] = node;
    t.edge_weight[0] = 1.0;  // self edge carries full weight
    for (int b = 1; b < n; ++b) {
        t.nbr[static_cast<std::size_t>(b)] = edges[static_cast<std::size_t>(b - 1)].to;
        t.edge_weight[static_cast<std::size_t>(b)] = edges[static_cast<std::size_t>(b - 1)].weight;
    }

    t.q.resize(static_cast<std::size_t>(n) * dp);
    if (dropout && dropout->rate() > 0.0) {
        t.mask.resize(static_cast<std::size_t>(n) * dp);
        dropout->sample(t.mask.data(), n * dp);
    } else {
        t.mask.clear();
    }
    for (int b = 0; b < n; ++b) {
        const double* p = cache.get(t.nbr[static_cast<std::size_t>(b)]);
        double* q = t.q.data() + static_cast<std::size_t>(b) * dp;
        if (!t.mask.empty()) {
            const double* m = t.mask.data() + static_cast<std::size_t>(b) * dp;
            for (int k = 0; k < dp; ++k) q[k] = m[k] * p[k];
        } else {
            std::copy(p, p + dp, q);
        }
    }

    // Logits: a^T [q_self || q_b || W_e e_b], then LeakyReLU, then softmax.
    const double* a1 = model.att.a.data();
    const double* a2 = a1 + dp;
    const double* a3 = a2 + dp;
    const double* q_self = t.q.data();
    const double self_term = dot(a1, q_self, dp);
    t.logits.resize(static_cast<std::size_t>(n));
    for (int b = 0; b < n; ++b) {
        const double* qb = t.q.data() + static_cast<std::size_t>(b) * dp;
        double logit = self_term + dot(a2, qb, dp);
        const double w = t.edge_weight[static_cast<std::size_t>(b)];
        for (int k = 0; k < de; ++k) logit += a3[k] * model.att.W_e(k, 0) * w;
        t.logits[static_cast<std::size_t>(b)] = logit;
    }

    t.alpha.resize(static_cast<std::size_t>(n));
    double max_act = -std::numeric_limits<double>::infinity();
    for (int b = 0; b < n; ++b)
        max_act = std::max(max_act, leaky_relu(t.logits[static_cast<std::size_t>(b)], slope));
    double z = 0.0;
    for (int b = 0; b < n; ++b) {
        const double e = std::exp(leaky_relu(t.logits[static_cast<std::size_t>(b)], slope) - max_act);
        t.alpha[static_cast<std::size_t>(b)] = e;
        z += e;
    }
    for (int b = 0; b < n; ++b) t.alpha[static_cast<std::size_t>(b)] /= z;

    t.pre_act.assign(static_cast<std::size_t>(dp), 0.0);
    for (int b = 0; b < n; ++b)
        axpy(t.alpha[static_cast<std::size_t>(b)], t.q.data() + static_cast<std::size_t>(b) * dp,
             t.pre_act.data(), dp);

    t.h.resize(static_cast<std::size_t>(dp));
    for (int k = 0; k < dp; ++k) t.h[static_cast<std::size_t>(k)] = leaky_relu(t.pre_act[static_cast<std::size_t>(k)], slope);
    out = t.h;
}

std::vector<double> attention_coefficients(const Model& model, const HeteroGraph& graph, int node) {
    ProjectionCache cache(model, graph);
    AggregationTrace trace;
    std::vector<double> h;
    aggregate_node(model, graph, cache, node, nullptr, &trace, h);
    return trace.alpha;
}

namespace {

double head(const std::vector<double>& w, const std::vector<double>& left,
            const std::vector<double>& right, double slope) {
    const int dp = static_cast<int>(left.size());
    double z = dot(w.data(), left.data(), dp) + dot(w.data() + dp, right.data(), dp);
    return leaky_relu(z, slope);
}

}  // namespace

double predict_long(const Model& model, const std::vector<double>& h_user,
                    const std::vector<double>& h_item) {
    return head(model.pred.W_l, h_user, h_item, model.config.leaky_slope);
}

double predict_short(const Model& model, const std::vector<double>& h_span,
                     const std::vector<double>& h_item) {
    return head(model.pred.W_s, h_span, h_item, model.config.leaky_slope);
}

double fuse(double r_s, double r_l, double alpha, double beta) { return alpha * r_s + beta * r_l; }

double predict_rating(const Model& model, const HeteroGraph& graph, ProjectionCache& cache, int user,
                      int item, std::int64_t ts, PredictionDetail* detail) {
    std::vector<double> h_user, h_item, h_span;
    aggregate_node(model, graph, cache, graph.user_node(user), nullptr, nullptr, h_user);
    aggregate_node(model, graph, cache, graph.item_node(item), nullptr, nullptr, h_item);

    // Query timestamps before the observation origin have no span; they use the
    // long-term head alone, like users without spans.
    std::optional<int> slot;
    if (ts >= graph.span_params.origin) {
        const int ordinal = span_index(ts, graph.span_params);
        slot = graph.latest_span_at_or_before(user, ordinal);
    }

    const double r_l = predict_long(model, h_user, h_item);
    double r_s = 0.0;
    double y;
    if (slot) {
        aggregate_node(model, graph, cache, graph.span_node(*slot), nullptr, nullptr, h_span);
        r_s = predict_short(model, h_span, h_item);
        y = fuse(r_s, r_l, model.pred.alpha, model.pred.beta);
    } else {
        y = model.pred.beta * r_l;
    }

    if (detail) {
        detail->y = y;
        detail->r_s = r_s;
        detail->r_l = r_l;
        detail->used_span = slot.has_value();
        detail->span_slot = slot.value_or(-1);
    }
    return y;
}

RatingPredictor::RatingPredictor(const Model& model, const HeteroGraph& graph,
                                 const std::vector<IndexedRating>& train)
    : model_(&model),
      graph_(&graph),
      cache_(model, graph),
      user_seen_(static_cast<std::size_t>(graph.num_users), 0),
      item_seen_(static_cast<std::size_t>(graph.num_items), 0) {
    double acc = 0.0;
    for (const auto& r : train) {
        user_seen_[static_cast<std::size_t>(r.user)] = 1;
        item_seen_[static_cast<std::size_t>(r.item)] = 1;
        acc += r.rating;
    }
    global_mean_ = train.empty() ? 3.0 : acc / static_cast<double>(train.size());
}

RatingPredictor::Result RatingPredictor::predict(int user, int item, std::int64_t ts) {
    const bool known_user =
        user >= 0 && user < graph_->num_users && user_seen_[static_cast<std::size_t>(user)];
    const bool known_item =
        item >= 0 && item < graph_->num_items && item_seen_[static_cast<std::size_t>(item)];
    if (!known_user || !known_item) return {global_mean_, true};
    return {predict_rating(*model_, *graph_, cache_, user, item, ts), false};
}

}  // namespace spanrec
