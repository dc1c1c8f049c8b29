#include "spanrec/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <tuple>

#include <json.hpp>

namespace spanrec {

const char* to_string(NodeKind kind) {
    switch (kind) {
        case NodeKind::User: return "user";
        case NodeKind::Item: return "item";
        case NodeKind::Span: return "span";
    }
    return "?";
}

const char* to_string(EdgeType type) {
    switch (type) {
        case EdgeType::UserUser: return "user_user";
        case EdgeType::ItemItem: return "item_item";
        case EdgeType::UserItem: return "user_item";
        case EdgeType::ItemSpan: return "item_span";
    }
    return "?";
}

int span_index(std::int64_t ts, const SpanParams& params) {
    if (params.span_length <= 0) throw ValidationError("span length must be positive");
    if (ts < params.origin)
        throw ValidationError("timestamp " + std::to_string(ts) + " precedes observation origin " +
                              std::to_string(params.origin));
    return static_cast<int>((ts - params.origin) / params.span_length);
}

std::int64_t raw_edge_weight(std::int64_t ts, const SpanParams& params) {
    if (ts < params.origin)
        throw ValidationError("timestamp " + std::to_string(ts) + " precedes observation origin " +
                              std::to_string(params.origin));
    return ts - params.origin;
}

namespace {

int category_checked(const std::vector<int>& category_of, int item) {
    if (item < 0 || item >= static_cast<int>(category_of.size()))
        throw ValidationError("item " + std::to_string(item) + " has no category entry");
    return category_of[static_cast<std::size_t>(item)];
}

// Shared cumulative rule. Interactions are grouped by `group_key(r)`; within a
// group and category, each interaction's weight is the sum of raw weights of
// all group interactions in that category with timestamp <= its own (equal
// timestamps included on both sides).
template <typename KeyFn, typename Emit>
void cumulative_weights(std::vector<IndexedRating> ratings, const std::vector<int>& category_of,
                        const SpanParams& params, KeyFn group_key, Emit emit) {
    std::sort(ratings.begin(), ratings.end(), [&](const IndexedRating& a, const IndexedRating& b) {
        const auto ka = group_key(a);
        const auto kb = group_key(b);
        if (ka != kb) return ka < kb;
        if (a.category != b.category) return a.category < b.category;
        if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
        return a.item < b.item;
    });

    std::size_t i = 0;
    const std::size_t n = ratings.size();
    while (i < n) {
        // [i, j): one (group, category) run
        std::size_t j = i;
        while (j < n && group_key(ratings[j]) == group_key(ratings[i]) &&
               ratings[j].category == ratings[i].category)
            ++j;
        category_checked(category_of, ratings[i].item);

        std::int64_t cumulative = 0;
        std::size_t k = i;
        while (k < j) {
            // [k, t): equal-timestamp block; all of it enters the sum before emitting
            std::size_t t = k;
            while (t < j && ratings[t].timestamp == ratings[k].timestamp) ++t;
            for (std::size_t m = k; m < t; ++m)
                cumulative += raw_edge_weight(ratings[m].timestamp, params);
            for (std::size_t m = k; m < t; ++m) emit(ratings[m], cumulative);
            k = t;
        }
        i = j;
    }
}

}  // namespace

std::vector<UserItemWeight> aggregate_user_item_weights(const std::vector<IndexedRating>& ratings,
                                                        const std::vector<int>& category_of,
                                                        const SpanParams& params) {
    // Latest interaction per (user, item) wins; emission order within a pair is
    // chronological, so overwriting keeps the latest.
    std::map<std::pair<int, int>, std::int64_t> latest;
    cumulative_weights(
        ratings, category_of, params, [](const IndexedRating& r) { return r.user; },
        [&](const IndexedRating& r, std::int64_t w) { latest[{r.user, r.item}] = w; });

    std::vector<UserItemWeight> out;
    out.reserve(latest.size());
    for (const auto& [key, w] : latest) out.push_back({key.first, key.second, w});
    return out;
}

std::vector<SpanItemWeight> aggregate_span_item_weights(const std::vector<IndexedRating>& ratings,
                                                        const std::vector<int>& category_of,
                                                        const SpanParams& params) {
    std::map<std::tuple<int, int, int>, std::int64_t> latest;
    cumulative_weights(
        ratings, category_of, params,
        [&](const IndexedRating& r) { return std::make_pair(r.user, span_index(r.timestamp, params)); },
        [&](const IndexedRating& r, std::int64_t w) {
            latest[{r.user, span_index(r.timestamp, params), r.item}] = w;
        });

    std::vector<SpanItemWeight> out;
    out.reserve(latest.size());
    for (const auto& [key, w] : latest)
        out.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), w});
    return out;
}

std::vector<double> normalize_weights(const std::vector<std::int64_t>& weights) {
    std::vector<double> out(weights.size(), 1.0);
    if (weights.empty()) return out;
    const auto [lo_it, hi_it] = std::minmax_element(weights.begin(), weights.end());
    const std::int64_t lo = *lo_it;
    const std::int64_t hi = *hi_it;
    if (lo == hi) return out;  // degenerate family -> all 1.0
    const double range = static_cast<double>(hi - lo);
    for (std::size_t i = 0; i < weights.size(); ++i)
        out[i] = static_cast<double>(weights[i] - lo) / range;
    return out;
}

NodeRef HeteroGraph::ref_of(int node) const {
    if (node < num_users) return {NodeKind::User, node, 0};
    if (node < num_users + num_items) return {NodeKind::Item, node - num_users, 0};
    const auto& [user, ordinal] = span_nodes[static_cast<std::size_t>(node - num_users - num_items)];
    return {NodeKind::Span, user, ordinal};
}

std::optional<int> HeteroGraph::find_span_slot(int user, int ordinal) const {
    if (user < 0 || user >= num_users) return std::nullopt;
    for (int slot : user_span_slots[static_cast<std::size_t>(user)])
        if (span_nodes[static_cast<std::size_t>(slot)].second == ordinal) return slot;
    return std::nullopt;
}

std::optional<int> HeteroGraph::latest_span_at_or_before(int user, int ordinal) const {
    if (user < 0 || user >= num_users) return std::nullopt;
    std::optional<int> best;
    for (int slot : user_span_slots[static_cast<std::size_t>(user)]) {
        if (span_nodes[static_cast<std::size_t>(slot)].second > ordinal) break;
        best = slot;
    }
    return best;
}

HeteroGraph build_graph(const std::vector<IndexedRating>& train,
                        const std::vector<IndexedTrust>& trusts,
                        const std::vector<int>& category_of,
                        int num_users,
                        int num_items,
                        const GraphConfig& config) {
    if (train.empty()) throw ValidationError("cannot build a graph from an empty training split");
    if (config.span.span_length <= 0) throw ValidationError("span length must be positive");
    for (const auto& r : train) {
        if (r.timestamp < config.span.origin)
            throw ValidationError("observation origin exceeds training timestamp " +
                                  std::to_string(r.timestamp));
        if (r.user < 0 || r.user >= num_users || r.item < 0 || r.item >= num_items)
            throw ValidationError("training rating references out-of-range user or item index");
    }

    HeteroGraph g;
    g.num_users = num_users;
    g.num_items = num_items;
    g.span_params = config.span;
    g.flags = config.flags;
    g.user_span_slots.resize(static_cast<std::size_t>(num_users));

    // Span nodes: one per non-empty (user, ordinal) pair.
    if (config.flags.use_span_nodes) {
        std::set<std::pair<int, int>> pairs;
        for (const auto& r : train) pairs.emplace(r.user, span_index(r.timestamp, config.span));
        g.span_nodes.assign(pairs.begin(), pairs.end());
        for (int slot = 0; slot < g.num_spans(); ++slot)
            g.user_span_slots[static_cast<std::size_t>(g.span_nodes[static_cast<std::size_t>(slot)].first)]
                .push_back(slot);
    }

    g.adj.resize(static_cast<std::size_t>(g.total_nodes()));
    auto add_edge = [&](int a, int b, EdgeType type, double w) {
        g.adj[static_cast<std::size_t>(a)].push_back({b, type, w});
        g.adj[static_cast<std::size_t>(b)].push_back({a, type, w});
    };

    // User-item edges, cumulative weights min-max normalized over the family.
    {
        const auto weighted = aggregate_user_item_weights(train, category_of, config.span);
        std::vector<std::int64_t> raw(weighted.size());
        for (std::size_t i = 0; i < weighted.size(); ++i) raw[i] = weighted[i].weight;
        const auto norm = normalize_weights(raw);
        for (std::size_t i = 0; i < weighted.size(); ++i) {
            const double w = config.flags.use_edge_weights ? norm[i] : 1.0;
            add_edge(g.user_node(weighted[i].user), g.item_node(weighted[i].item), EdgeType::UserItem, w);
        }
    }

    // Item-span edges, same rule restricted to a span.
    if (config.flags.use_span_nodes) {
        const auto weighted = aggregate_span_item_weights(train, category_of, config.span);
        std::vector<std::int64_t> raw(weighted.size());
        for (std::size_t i = 0; i < weighted.size(); ++i) raw[i] = weighted[i].weight;
        const auto norm = normalize_weights(raw);
        for (std::size_t i = 0; i < weighted.size(); ++i) {
            const auto slot = g.find_span_slot(weighted[i].user, weighted[i].ordinal);
            const double w = config.flags.use_edge_weights ? norm[i] : 1.0;
            add_edge(g.item_node(weighted[i].item), g.span_node(*slot), EdgeType::ItemSpan, w);
        }
    }

    // Same-category item pairs, weight 1, at most `cap` sampled partners per item.
    if (config.flags.use_item_item && config.item_item_cap > 0) {
        std::vector<std::vector<int>> by_category;
        for (int i = 0; i < num_items; ++i) {
            const int c = category_checked(category_of, i);
            if (c >= static_cast<int>(by_category.size())) by_category.resize(static_cast<std::size_t>(c) + 1);
            by_category[static_cast<std::size_t>(c)].push_back(i);
        }
        std::set<std::pair<int, int>> pairs;
        for (int i = 0; i < num_items; ++i) {
            const auto& peers = by_category[static_cast<std::size_t>(category_of[static_cast<std::size_t>(i)])];
            const int pool = static_cast<int>(peers.size()) - 1;
            if (pool <= 0) continue;
            Rng rng(derive_seed(config.item_item_seed, "item-item", static_cast<std::uint64_t>(i)));
            if (pool <= config.item_item_cap) {
                for (int peer : peers)
                    if (peer != i) pairs.emplace(std::min(i, peer), std::max(i, peer));
            } else {
                std::set<int> chosen;
                while (static_cast<int>(chosen.size()) < config.item_item_cap) {
                    const int peer = peers[static_cast<std::size_t>(rng.below(peers.size()))];
                    if (peer != i) chosen.insert(peer);
                }
                for (int peer : chosen) pairs.emplace(std::min(i, peer), std::max(i, peer));
            }
        }
        for (const auto& [a, b] : pairs) add_edge(g.item_node(a), g.item_node(b), EdgeType::ItemItem, 1.0);
    }

    // Symmetrized trust edges, weight 1.
    if (config.flags.use_user_user) {
        std::set<std::pair<int, int>> pairs;
        for (const auto& t : trusts) {
            if (t.truster < 0 || t.truster >= num_users || t.trustee < 0 || t.trustee >= num_users)
                throw ValidationError("trust edge references out-of-range user index");
            if (t.truster == t.trustee) continue;
            pairs.emplace(std::min(t.truster, t.trustee), std::max(t.truster, t.trustee));
        }
        for (const auto& [a, b] : pairs) add_edge(g.user_node(a), g.user_node(b), EdgeType::UserUser, 1.0);
    }

    for (auto& edges : g.adj)
        std::sort(edges.begin(), edges.end(),
                  [](const HeteroGraph::Edge& a, const HeteroGraph::Edge& b) { return a.to < b.to; });
    return g;
}

GraphAudit audit_graph(const HeteroGraph& graph, const std::vector<IndexedRating>& train) {
    GraphAudit audit;
    auto fail = [&](std::string msg) {
        audit.ok = false;
        if (audit.issues.size() < 32) audit.issues.push_back(std::move(msg));
    };

    double ui_lo = std::numeric_limits<double>::infinity(), ui_hi = -ui_lo;
    double is_lo = std::numeric_limits<double>::infinity(), is_hi = -is_lo;

    for (int node = 0; node < graph.total_nodes(); ++node) {
        for (const auto& e : graph.adj[static_cast<std::size_t>(node)]) {
            // Symmetry: the reverse edge exists with equal weight. Lists are
            // sorted by `to`, so scan the equal range.
            const auto& back = graph.adj[static_cast<std::size_t>(e.to)];
            auto it = std::lower_bound(back.begin(), back.end(), node,
                                       [](const HeteroGraph::Edge& r, int v) { return r.to < v; });
            bool mirrored = false;
            for (; it != back.end() && it->to == node; ++it)
                if (it->type == e.type && it->weight == e.weight) mirrored = true;
            if (!mirrored)
                fail("missing mirror edge " + std::to_string(node) + " <- " + std::to_string(e.to));

            if (e.to > node) continue;  // count each undirected edge once
            switch (e.type) {
                case EdgeType::UserUser:
                    ++audit.user_user_edges;
                    if (e.weight != 1.0) fail("user-user edge with weight != 1");
                    break;
                case EdgeType::ItemItem:
                    ++audit.item_item_edges;
                    if (e.weight != 1.0) fail("item-item edge with weight != 1");
                    break;
                case EdgeType::UserItem:
                    ++audit.user_item_edges;
                    if (e.weight < 0.0 || e.weight > 1.0) fail("user-item weight outside [0,1]");
                    ui_lo = std::min(ui_lo, e.weight);
                    ui_hi = std::max(ui_hi, e.weight);
                    break;
                case EdgeType::ItemSpan:
                    ++audit.item_span_edges;
                    if (e.weight < 0.0 || e.weight > 1.0) fail("item-span weight outside [0,1]");
                    is_lo = std::min(is_lo, e.weight);
                    is_hi = std::max(is_hi, e.weight);
                    break;
            }
        }
    }
    audit.min_user_item_weight = audit.user_item_edges ? ui_lo : 0.0;
    audit.max_user_item_weight = audit.user_item_edges ? ui_hi : 0.0;
    audit.min_item_span_weight = audit.item_span_edges ? is_lo : 0.0;
    audit.max_item_span_weight = audit.item_span_edges ? is_hi : 0.0;

    // Span containment: span (u, j) neighbors exactly the items u rated in span j;
    // user-item neighbors exactly the distinct items u rated.
    std::map<std::pair<int, int>, std::set<int>> expected_span_items;
    std::map<int, std::set<int>> expected_user_items;
    for (const auto& r : train) {
        expected_user_items[r.user].insert(r.item);
        if (graph.flags.use_span_nodes)
            expected_span_items[{r.user, span_index(r.timestamp, graph.span_params)}].insert(r.item);
    }

    if (graph.flags.use_span_nodes) {
        if (expected_span_items.size() != static_cast<std::size_t>(graph.num_spans()))
            fail("span node count mismatch");
        for (int slot = 0; slot < graph.num_spans(); ++slot) {
            const auto key = graph.span_nodes[static_cast<std::size_t>(slot)];
            std::set<int> actual;
            for (const auto& e : graph.adj[static_cast<std::size_t>(graph.span_node(slot))])
                actual.insert(e.to - graph.num_users);
            auto it = expected_span_items.find(key);
            if (it == expected_span_items.end() || it->second != actual)
                fail("span (" + std::to_string(key.first) + "," + std::to_string(key.second) +
                     ") item set mismatch");
        }
    } else if (graph.num_spans() != 0) {
        fail("span nodes present despite ablation");
    }

    for (int u = 0; u < graph.num_users; ++u) {
        std::set<int> actual;
        for (const auto& e : graph.adj[static_cast<std::size_t>(u)])
            if (e.type == EdgeType::UserItem) actual.insert(e.to - graph.num_users);
        auto it = expected_user_items.find(u);
        const bool empty_expected = it == expected_user_items.end() || it->second.empty();
        if (empty_expected ? !actual.empty() : it->second != actual)
            fail("user " + std::to_string(u) + " item neighborhood mismatch");
    }

    return audit;
}

std::string export_graph_json(const HeteroGraph& graph) {
    nlohmann::json j;
    auto& nodes = j["nodes"] = nlohmann::json::array();
    for (int node = 0; node < graph.total_nodes(); ++node) {
        const NodeRef ref = graph.ref_of(node);
        nlohmann::json n{{"id", node}, {"kind", to_string(ref.kind)}, {"index", ref.index}};
        if (ref.kind == NodeKind::Span) n["ordinal"] = ref.span_ordinal;
        nodes.push_back(std::move(n));
    }
    auto& edges = j["edges"] = nlohmann::json::array();
    for (int node = 0; node < graph.total_nodes(); ++node)
        for (const auto& e : graph.adj[static_cast<std::size_t>(node)])
            if (node < e.to) edges.push_back({node, e.to, to_string(e.type), e.weight});
    return j.dump(2);
}

std::string audit_report_json(const GraphAudit& audit) {
    nlohmann::json j;
    j["ok"] = audit.ok;
    j["issues"] = audit.issues;
    j["edges"] = {{"user_user", audit.user_user_edges},
                  {"item_item", audit.item_item_edges},
                  {"user_item", audit.user_item_edges},
                  {"item_span", audit.item_span_edges}};
    j["user_item_weight_range"] = {audit.min_user_item_weight, audit.max_user_item_weight};
    j["item_span_weight_range"] = {audit.min_item_span_weight, audit.max_item_span_weight};
    return j.dump(2);
}

}  // namespace spanrec
