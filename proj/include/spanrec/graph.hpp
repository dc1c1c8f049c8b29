#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "spanrec/dataset.hpp"

namespace spanrec {

enum class NodeKind { User, Item, Span };
enum class EdgeType { UserUser, ItemItem, UserItem, ItemSpan };

const char* to_string(NodeKind kind);
const char* to_string(EdgeType type);

struct NodeRef {
    NodeKind kind = NodeKind::User;
    int index = 0;         // user index, item index, or span owner user index
    int span_ordinal = 0;  // meaningful for Span only

    bool operator==(const NodeRef&) const = default;
};

struct SpanParams {
    std::int64_t origin = 0;       // observation start T, seconds
    std::int64_t span_length = 1;  // pt, seconds
};

// j = floor((ts - T) / pt); spans are half-open [T + j*pt, T + (j+1)*pt).
int span_index(std::int64_t ts, const SpanParams& params);

// Seconds elapsed since the observation start.
std::int64_t raw_edge_weight(std::int64_t ts, const SpanParams& params);

struct AblationFlags {
    bool use_edge_weights = true;
    bool use_span_nodes = true;
    bool use_item_item = true;
    bool use_user_user = true;

    bool operator==(const AblationFlags&) const = default;
};

struct GraphConfig {
    SpanParams span;
    AblationFlags flags;
    int item_item_cap = 10;           // max sampled same-category partners per item
    std::uint64_t item_item_seed = 0;
};

// Pre-normalization cumulative weights, integer seconds.
struct UserItemWeight {
    int user = 0;
    int item = 0;
    std::int64_t weight = 0;
};

struct SpanItemWeight {
    int user = 0;
    int ordinal = 0;
    int item = 0;
    std::int64_t weight = 0;
};

// Cumulative same-category aggregation over the whole observation window: the
// weight of edge (u, i) is the sum of raw weights of all of u's interactions
// with items of i's category at timestamps <= the interaction's timestamp.
// When (u, i) repeats, the latest interaction's value wins. Output sorted by
// (user, item).
std::vector<UserItemWeight> aggregate_user_item_weights(const std::vector<IndexedRating>& ratings,
                                                        const std::vector<int>& category_of,
                                                        const SpanParams& params);

// Same rule, but the sum never crosses a time span. Output sorted by
// (user, ordinal, item).
std::vector<SpanItemWeight> aggregate_span_item_weights(const std::vector<IndexedRating>& ratings,
                                                        const std::vector<int>& category_of,
                                                        const SpanParams& params);

// Min-max normalization over one whole edge family. A degenerate family
// (max == min, including a single edge) maps every weight to 1.0.
std::vector<double> normalize_weights(const std::vector<std::int64_t>& weights);

// Heterogeneous graph over user, item and per-user time-span nodes.
// Flat node ids: users [0, U), items [U, U+I), spans [U+I, U+I+S).
struct HeteroGraph {
    struct Edge {
        int to = 0;
        EdgeType type = EdgeType::UserItem;
        double weight = 0.0;
    };

    int num_users = 0;
    int num_items = 0;
    std::vector<std::pair<int, int>> span_nodes;     // slot -> (owner user, ordinal); sorted
    std::vector<std::vector<int>> user_span_slots;   // per user, slots in ascending ordinal
    std::vector<std::vector<Edge>> adj;              // symmetric; each list sorted by `to`
    SpanParams span_params;
    AblationFlags flags;

    int num_spans() const { return static_cast<int>(span_nodes.size()); }
    int total_nodes() const { return num_users + num_items + num_spans(); }

    int user_node(int u) const { return u; }
    int item_node(int i) const { return num_users + i; }
    int span_node(int slot) const { return num_users + num_items + slot; }

    NodeKind kind_of(int node) const {
        if (node < num_users) return NodeKind::User;
        if (node < num_users + num_items) return NodeKind::Item;
        return NodeKind::Span;
    }
    NodeRef ref_of(int node) const;

    std::optional<int> find_span_slot(int user, int ordinal) const;
    // Most recent span of `user` with ordinal <= `ordinal`; nullopt when none.
    std::optional<int> latest_span_at_or_before(int user, int ordinal) const;
};

// Builds the graph from the training split only. Trust edges are symmetrized
// with weight 1; same-category item pairs get weight-1 edges capped per item;
// user-item and item-span edges carry min-max normalized cumulative weights
// (all 1.0 when flags.use_edge_weights is off).
HeteroGraph build_graph(const std::vector<IndexedRating>& train,
                        const std::vector<IndexedTrust>& trusts,
                        const std::vector<int>& category_of,
                        int num_users,
                        int num_items,
                        const GraphConfig& config);

struct GraphAudit {
    bool ok = true;
    std::vector<std::string> issues;
    std::size_t user_user_edges = 0;  // undirected counts
    std::size_t item_item_edges = 0;
    std::size_t user_item_edges = 0;
    std::size_t item_span_edges = 0;
    double min_user_item_weight = 0.0;
    double max_user_item_weight = 0.0;
    double min_item_span_weight = 0.0;
    double max_item_span_weight = 0.0;
};

// Verifies weight ranges, symmetry and span containment against the training
// split the graph was built from.
GraphAudit audit_graph(const HeteroGraph& graph, const std::vector<IndexedRating>& train);

std::string export_graph_json(const HeteroGraph& graph);
std::string audit_report_json(const GraphAudit& audit);

}  // namespace spanrec
