// End-to-end acceptance gate. Each numbered criterion prints exactly one
// PASS/FAIL line on stdout; progress goes to stderr. Criterion 9 (proximity to
// the reference metrics) is informational and never gates the exit
// code.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "spanrec/cli.hpp"
#include "spanrec/config.hpp"
#include "spanrec/eval.hpp"
#include "spanrec/graph.hpp"
#include "spanrec/metrics.hpp"
#include "spanrec/model.hpp"
#include "spanrec/training.hpp"
#include "support/synthetic.hpp"

using namespace spanrec;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* format, ...) {
    char buf[512];
    va_list args;
    va_start(args, format);
    std::vsnprintf(buf, sizeof(buf), format, args);
    va_end(args);
    return buf;
}

IndexedRating make_rating(int user, int item, int category, std::int64_t ts, double value = 3.0) {
    IndexedRating r;
    r.user = user;
    r.item = item;
    r.category = category;
    r.rating = value;
    r.timestamp = ts;
    return r;
}

// ---------------------------------------------------------------------------
// Criterion 1: analytic gradients vs central differences, five fixture seeds.

Outcome criterion_gradients() {
    const auto start = Clock::now();
    double worst = 0.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const GradcheckFixture fixture = make_gradcheck_fixture(seed, 16);
        const GradReport report = gradient_check(fixture, 1e-5);
        worst = std::max(worst, report.overall);
    }
    const double elapsed = seconds_since(start);
    return {worst < 1e-4 && elapsed < 60.0,
            fmt("max relative gradient error %.3e over 5 seeds, all 10 parameter families "
                "(tolerance 1e-4, %.1fs)",
                worst, elapsed)};
}

// ---------------------------------------------------------------------------
// Criterion 2: cumulative weight aggregation vs an O(n^2) brute force.

std::map<std::pair<int, int>, std::int64_t> brute_user_item(
    const std::vector<IndexedRating>& ratings, const std::vector<int>& category_of,
    const SpanParams& params) {
    std::map<std::pair<int, int>, std::int64_t> latest_ts;
    for (const auto& r : ratings) {
        auto [it, inserted] = latest_ts.try_emplace({r.user, r.item}, r.timestamp);
        if (!inserted) it->second = std::max(it->second, r.timestamp);
    }
    std::map<std::pair<int, int>, std::int64_t> out;
    for (const auto& [key, ts] : latest_ts) {
        const int cat = category_of[static_cast<std::size_t>(key.second)];
        std::int64_t w = 0;
        for (const auto& r : ratings)
            if (r.user == key.first && category_of[static_cast<std::size_t>(r.item)] == cat &&
                r.timestamp <= ts)
                w += r.timestamp - params.origin;
        out[key] = w;
    }
    return out;
}

std::map<std::tuple<int, int, int>, std::int64_t> brute_span_item(
    const std::vector<IndexedRating>& ratings, const std::vector<int>& category_of,
    const SpanParams& params) {
    std::map<std::tuple<int, int, int>, std::int64_t> latest_ts;
    for (const auto& r : ratings) {
        const int j = span_index(r.timestamp, params);
        auto [it, inserted] = latest_ts.try_emplace({r.user, j, r.item}, r.timestamp);
        if (!inserted) it->second = std::max(it->second, r.timestamp);
    }
    std::map<std::tuple<int, int, int>, std::int64_t> out;
    for (const auto& [key, ts] : latest_ts) {
        const auto [user, j, item] = key;
        const int cat = category_of[static_cast<std::size_t>(item)];
        std::int64_t w = 0;
        for (const auto& r : ratings)
            if (r.user == user && span_index(r.timestamp, params) == j &&
                category_of[static_cast<std::size_t>(r.item)] == cat && r.timestamp <= ts)
                w += r.timestamp - params.origin;
        out[key] = w;
    }
    return out;
}

Outcome criterion_weight_oracle() {
    const auto start = Clock::now();
    Rng rng(0x5eedf00d);
    int mismatches = 0;
    for (int instance = 0; instance < 1000; ++instance) {
        const int users = 1 + static_cast<int>(rng.below(5));
        const int items = 1 + static_cast<int>(rng.below(8));
        const int categories = 1 + static_cast<int>(rng.below(4));
        const int n = 1 + static_cast<int>(rng.below(20));
        SpanParams p;
        p.origin = static_cast<std::int64_t>(rng.below(1000));
        p.span_length = 50 + static_cast<std::int64_t>(rng.below(100));

        std::vector<int> cats(static_cast<std::size_t>(items));
        for (auto& c : cats) c = static_cast<int>(rng.below(categories));
        std::vector<IndexedRating> rs;
        for (int k = 0; k < n; ++k) {
            const int item = static_cast<int>(rng.below(items));
            const std::int64_t ts =
                p.origin + static_cast<std::int64_t>(rng.below(3 * p.span_length));
            rs.push_back(make_rating(static_cast<int>(rng.below(users)), item,
                                     cats[static_cast<std::size_t>(item)], ts));
        }

        std::map<std::pair<int, int>, std::int64_t> got_ui;
        for (const auto& w : aggregate_user_item_weights(rs, cats, p))
            got_ui[{w.user, w.item}] = w.weight;
        std::map<std::tuple<int, int, int>, std::int64_t> got_si;
        for (const auto& w : aggregate_span_item_weights(rs, cats, p))
            got_si[{w.user, w.ordinal, w.item}] = w.weight;
        if (got_ui != brute_user_item(rs, cats, p) || got_si != brute_span_item(rs, cats, p))
            ++mismatches;
    }
    const double elapsed = seconds_since(start);
    return {mismatches == 0 && elapsed < 10.0,
            fmt("%d/1000 random instances deviate from the O(n^2) oracle, integer-exact (%.1fs)",
                mismatches, elapsed)};
}

// ---------------------------------------------------------------------------
// Weekly two-user toy shared by criteria 3 and 5.

struct WeeklyToy {
    std::vector<IndexedRating> train;
    std::vector<IndexedTrust> trusts;
    std::vector<int> category_of;
    GraphConfig config;
};

WeeklyToy weekly_toy() {
    constexpr std::int64_t kWeek = 7 * 86400;
    WeeklyToy toy;
    toy.train = {
        make_rating(0, 0, 0, 100000),         make_rating(0, 1, 2, 200000),
        make_rating(0, 2, 2, kWeek + 100000), make_rating(1, 1, 2, 0),
        make_rating(1, 2, 2, 300000),         make_rating(1, 0, 0, kWeek + 45200),
        make_rating(1, 3, 1, kWeek + 295200),
    };
    toy.trusts = {{0, 1}};
    toy.category_of = {0, 2, 2, 1};
    toy.config.span.origin = 0;
    toy.config.span.span_length = kWeek;
    return toy;
}

HeteroGraph weekly_graph() {
    const WeeklyToy toy = weekly_toy();
    return build_graph(toy.train, toy.trusts, toy.category_of, 2, 4, toy.config);
}

// Corpus for the end-to-end criteria: the generator defaults, which are sized
// so that thirty training runs fit the time budget while every generative
// signal (item/category quality, community affinity, monthly moods,
// familiarity-weighted timestamps) is visible to the graph component it feeds.
testing::SyntheticSpec corpus_spec() { return testing::SyntheticSpec{}; }

testing::SyntheticSpec tiny_spec() {
    testing::SyntheticSpec spec;
    spec.users = 40;
    spec.items = 30;
    spec.categories = 4;
    spec.communities = 4;
    spec.days = 120.0;
    spec.base_ratings_per_user = 5;
    spec.extra_ratings_per_user = 4;
    spec.trust_base = 3;
    spec.trust_extra = 2;
    return spec;
}

// ---------------------------------------------------------------------------
// Criterion 3: softmax normalization and neighbor-order invariance.

Outcome criterion_attention() {
    double worst_sum = 0.0;
    double worst_perm = 0.0;
    std::size_t nodes_checked = 0;

    const Dataset tiny = testing::synthetic_dataset(tiny_spec());
    RunConfig tiny_config;
    const std::vector<HeteroGraph> graphs = {
        weekly_graph(), build_graph(tiny.ratings, tiny.trusts, tiny.category_of, tiny.num_users(),
                                    tiny.num_items(), graph_config(tiny_config, tiny))};

    for (const HeteroGraph& graph : graphs) {
        ModelConfig mc;
        mc.embed_dim = 16;
        mc.dropout_rate = 0.0;
        const Model model = init_model(graph, mc, 3);

        HeteroGraph permuted = graph;  // same nodes, each adjacency list reversed
        for (auto& list : permuted.adj) std::reverse(list.begin(), list.end());

        ProjectionCache cache(model, graph);
        ProjectionCache cache_perm(model, permuted);
        std::vector<double> h, h_perm;
        for (int node = 0; node < graph.total_nodes(); ++node) {
            const std::vector<double> coefs = attention_coefficients(model, graph, node);
            double sum = 0.0;
            for (double c : coefs) sum += c;
            worst_sum = std::max(worst_sum, std::fabs(sum - 1.0));

            aggregate_node(model, graph, cache, node, nullptr, nullptr, h);
            aggregate_node(model, permuted, cache_perm, node, nullptr, nullptr, h_perm);
            for (std::size_t k = 0; k < h.size(); ++k)
                worst_perm = std::max(worst_perm, std::fabs(h[k] - h_perm[k]));
            ++nodes_checked;
        }
    }
    return {worst_sum <= 1e-9 && worst_perm <= 1e-12,
            fmt("softmax sums off by at most %.2e (tolerance 1e-9) and neighbor-order "
                "permutation shifts outputs by at most %.2e (tolerance 1e-12) across %zu nodes",
                worst_sum, worst_perm, nodes_checked)};
}

// ---------------------------------------------------------------------------
// Criterion 5: the two-user weekly toy produces the expected span structure.

std::set<int> typed_neighbors(const HeteroGraph& g, int node, EdgeType type) {
    std::set<int> out;
    for (const auto& e : g.adj[static_cast<std::size_t>(node)])
        if (e.type == type) out.insert(e.to);
    return out;
}

std::set<int> span_item_set(const HeteroGraph& g, int slot) {
    std::set<int> items;
    for (int node : typed_neighbors(g, g.span_node(slot), EdgeType::ItemSpan))
        items.insert(node - g.num_users);
    return items;
}

std::set<int> user_item_set(const HeteroGraph& g, int user) {
    std::set<int> items;
    for (int node : typed_neighbors(g, g.user_node(user), EdgeType::UserItem))
        items.insert(node - g.num_users);
    return items;
}

Outcome criterion_span_toy() {
    const HeteroGraph g = weekly_graph();
    std::vector<std::string> problems;
    if (g.span_nodes != std::vector<std::pair<int, int>>{{0, 0}, {0, 1}, {1, 0}, {1, 1}})
        problems.push_back("span node set");
    if (span_item_set(g, 0) != std::set<int>{0, 1}) problems.push_back("u1 week 1");
    if (span_item_set(g, 1) != std::set<int>{2}) problems.push_back("u1 week 2");
    if (span_item_set(g, 2) != std::set<int>{1, 2}) problems.push_back("u2 week 1");
    if (span_item_set(g, 3) != std::set<int>{0, 3}) problems.push_back("u2 week 2");
    if (user_item_set(g, 0) != std::set<int>{0, 1, 2}) problems.push_back("u1 item history");
    if (user_item_set(g, 1) != std::set<int>{0, 1, 2, 3}) problems.push_back("u2 item history");
    const GraphAudit audit = audit_graph(g, weekly_toy().train);
    if (!audit.ok) problems.push_back("audit");

    if (problems.empty())
        return {true,
                "2 users / 4 items / 4 week spans: every span holds exactly the items rated "
                "inside it and the audit passes"};
    std::string joined;
    for (const auto& p : problems) joined += (joined.empty() ? "" : ", ") + p;
    return {false, "mismatched: " + joined};
}

// ---------------------------------------------------------------------------
// Criteria 6-9: end-to-end quality on the synthetic corpus.

double mean_of(const std::vector<double>& xs) {
    double sum = 0.0;
    for (double x : xs) sum += x;
    return sum / static_cast<double>(xs.size());
}

struct EndToEnd {
    Outcome beats_baseline;   // criterion 6
    Outcome ablations;        // criterion 7
    Outcome span_sweep;       // criterion 8
    Outcome reference;        // criterion 9
    std::vector<std::pair<double, double>> run_metrics;  // (mae, rmse) of every run
};

EndToEnd run_end_to_end() {
    EndToEnd r;
    const Dataset data = testing::synthetic_dataset(corpus_spec());

    // Criterion 6: default 80/10/10 config, three seeds, each beating the
    // global-mean baseline on test MAE by at least 2% relative.
    RunConfig config;
    config.seeds = {1, 2, 3};
    const Split parts = split(data, split_spec(config));
    const EvalOutcome base = GlobalMeanBaseline(parts.train).evaluate(parts.test);

    std::cerr << "[acceptance] training 3 seeds at the 80/10/10 defaults...\n";
    const std::vector<MetricsReport> reports = run_experiment(data, config);
    bool all_beat = true;
    double worst_gain = 1.0;
    double max_seconds = 0.0;
    std::vector<double> maes, rmses;
    for (const auto& rep : reports) {
        const double gain = (base.mae - rep.mae) / base.mae;
        worst_gain = std::min(worst_gain, gain);
        all_beat = all_beat && gain >= 0.02;
        max_seconds = std::max(max_seconds, rep.seconds);
        maes.push_back(rep.mae);
        rmses.push_back(rep.rmse);
        r.run_metrics.emplace_back(rep.mae, rep.rmse);
        std::cerr << fmt("[acceptance]   seed %llu: test MAE %.4f RMSE %.4f (%.0fs)\n",
                         static_cast<unsigned long long>(rep.seed), rep.mae, rep.rmse,
                         rep.seconds);
    }
    r.beats_baseline = {
        all_beat && max_seconds <= 1800.0,
        fmt("test MAE {%.4f, %.4f, %.4f} vs global-mean %.4f: worst relative gain %.1f%% "
            "(needs >= 2%% on all 3 seeds; slowest seed %.0fs of the 1800s budget)",
            maes[0], maes[1], maes[2], base.mae, worst_gain * 100.0, max_seconds)};

    // Criterion 9 (non-gating): proximity to the reference numbers.
    const double mean_mae = mean_of(maes);
    const double mean_rmse = mean_of(rmses);
    r.reference = {std::fabs(mean_mae - 0.7302) <= 0.08 && std::fabs(mean_rmse - 0.9762) <= 0.08,
                   fmt("mean test MAE %.4f vs reference 0.7302, RMSE %.4f vs 0.9762 "
                       "(window 0.08); synthetic stand-in corpus, informational only",
                       mean_mae, mean_rmse)};

    // Criteria 7 and 8 run at a 60/20/20 split.
    RunConfig config60 = config;
    config60.train_frac = 0.6;
    config60.val_frac = 0.2;
    config60.test_frac = 0.2;

    std::cerr << "[acceptance] ablation study: 5 variants x 3 seeds at 60% train...\n";
    SweepSpec ablate;
    ablate.axis = SweepAxis::Ablation;
    ablate.values = {"full", "no_edge_weights", "no_span_nodes", "no_item_item", "no_user_user"};
    ablate.seeds = {1, 2, 3};
    const std::vector<SweepRow> ablation_rows = run_sweep(data, config60, ablate);

    std::map<std::string, std::vector<double>> by_variant;
    for (const auto& row : ablation_rows) {
        by_variant[row.value].push_back(row.mae);
        r.run_metrics.emplace_back(row.mae, row.rmse);
        std::cerr << fmt("[acceptance]   %-16s seed %llu: MAE %.4f (%.0fs)\n", row.value.c_str(),
                         static_cast<unsigned long long>(row.seed), row.mae, row.seconds);
    }
    const double full_mean = mean_of(by_variant.at("full"));
    bool full_wins = true;
    std::string ablation_detail = fmt("mean MAE over 3 seeds: full %.4f", full_mean);
    for (const auto& [variant, values] : by_variant) {
        if (variant == "full") continue;
        const double m = mean_of(values);
        full_wins = full_wins && full_mean < m;
        ablation_detail += fmt(", %s %.4f", variant.c_str(), m);
    }
    r.ablations = {full_wins, ablation_detail + (full_wins ? "; every removal hurts" : "")};

    std::cerr << "[acceptance] span-length sweep: {15,30,90,180} days x 3 seeds...\n";
    SweepSpec spans;
    spans.axis = SweepAxis::SpanDays;
    spans.values = {"15", "30", "90", "180"};
    spans.seeds = {1, 2, 3};
    const std::vector<SweepRow> span_rows = run_sweep(data, config60, spans);

    std::map<std::string, std::vector<double>> by_span;
    for (const auto& row : span_rows) {
        by_span[row.value].push_back(row.mae);
        r.run_metrics.emplace_back(row.mae, row.rmse);
        std::cerr << fmt("[acceptance]   span %-4s days seed %llu: MAE %.4f (%.0fs)\n",
                         row.value.c_str(), static_cast<unsigned long long>(row.seed), row.mae,
                         row.seconds);
    }
    double best_mean = 1e9;
    std::string span_detail = "mean MAE by span days:";
    for (const std::string& v : spans.values) {
        const double m = mean_of(by_span.at(v));
        best_mean = std::min(best_mean, m);
        span_detail += fmt(" %s=%.4f", v.c_str(), m);
    }
    const double mean30 = mean_of(by_span.at("30"));
    r.span_sweep = {mean30 - best_mean < 0.01,
                    span_detail + fmt("; 30 days within %.4f of the best (allowed 0.01)",
                                      mean30 - best_mean)};
    return r;
}

// ---------------------------------------------------------------------------
// Criterion 4: MAE <= RMSE identities over every training run above.

Outcome criterion_metric_identities(const std::vector<std::pair<double, double>>& runs) {
    const std::vector<double> pred{3.0, 3.0};
    const std::vector<double> truth{1.0, 5.0};
    if (mae(pred, truth) != 2.0 || rmse(pred, truth) != 2.0)
        return {false, "the constant-3 vs {1,5} spot check did not give exactly MAE = RMSE = 2"};
    for (const auto& [m, r] : runs)
        if (m > r + 1e-12)
            return {false, fmt("observed a run with MAE %.6f > RMSE %.6f", m, r)};
    return {true, fmt("MAE <= RMSE on all %zu training runs and the constant-predictor spot "
                      "check gives exactly 2.0/2.0",
                      runs.size())};
}

// ---------------------------------------------------------------------------
// Criterion 10: bit-identical traces and checkpoints for a repeated run.

std::string read_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// Same trace content with the wall-time field zeroed out.
std::string canonical_trace(const fs::path& path) {
    std::ifstream in(path);
    std::string line, out;
    while (std::getline(in, line)) {
        auto j = nlohmann::json::parse(line);
        j["seconds"] = 0.0;
        out += j.dump() + "\n";
    }
    return out;
}

Outcome criterion_determinism() {
    const fs::path dir = fs::temp_directory_path() / "spanrec_acceptance";
    fs::remove_all(dir);
    fs::create_directories(dir);

    const testing::SyntheticCorpus corpus = testing::make_synthetic_corpus(tiny_spec());
    testing::write_corpus_csv(corpus, (dir / "ratings.csv").string(), (dir / "trust.csv").string());
    {
        std::ofstream cfg(dir / "run.cfg");
        cfg << "ratings = " << (dir / "ratings.csv").string() << "\n"
            << "trust = " << (dir / "trust.csv").string() << "\n"
            << "embed_dim = 16\ndropout = 0.3\nepochs = 3\nbatch_size = 128\nseeds = 5\n"
            << "outdir = " << (dir / "out").string() << "\n";
    }

    // The in-process CLI prints its summary on stdout; keep that off the
    // one-line-per-criterion report. run_cli maps all failures to exit codes,
    // so nothing can throw while the buffer is swapped.
    const std::vector<std::string> args = {"train", "--config", (dir / "run.cfg").string()};
    std::ostringstream sink;
    auto silent_run = [&] {
        auto* cout_buf = std::cout.rdbuf(sink.rdbuf());
        const int code = run_cli(args);
        std::cout.rdbuf(cout_buf);
        return code;
    };

    if (silent_run() != 0) return {false, "first training run exited nonzero"};
    const fs::path out = dir / "out";
    const std::string trace1 = canonical_trace(out / "trace-seed5.jsonl");
    const std::string ckpt1 = read_bytes(out / "checkpoint-seed5.bin");
    const std::string summary1 = read_bytes(out / "summary-seed5.json");

    if (silent_run() != 0) return {false, "second training run exited nonzero"};
    const bool traces_equal = canonical_trace(out / "trace-seed5.jsonl") == trace1;
    const bool ckpts_equal = read_bytes(out / "checkpoint-seed5.bin") == ckpt1;
    const bool summaries_equal = read_bytes(out / "summary-seed5.json") == summary1;

    fs::remove_all(dir);
    return {traces_equal && ckpts_equal && summaries_equal,
            fmt("repeated run: trace %s (wall-time field excluded), checkpoint bytes %s, "
                "summary %s",
                traces_equal ? "identical" : "DIFFERS", ckpts_equal ? "identical" : "DIFFER",
                summaries_equal ? "identical" : "DIFFERS")};
}

}  // namespace

int main() {
    std::map<int, Outcome> results;
    const auto gated = [](int id) { return id != 9; };

    const auto guard = [&](int id, auto&& fn) {
        try {
            results[id] = fn();
        } catch (const std::exception& e) {
            results[id] = {false, std::string("unexpected exception: ") + e.what()};
        }
    };

    guard(1, criterion_gradients);
    guard(2, criterion_weight_oracle);
    guard(3, criterion_attention);
    guard(5, criterion_span_toy);

    EndToEnd e2e;
    try {
        e2e = run_end_to_end();
        results[6] = e2e.beats_baseline;
        results[7] = e2e.ablations;
        results[8] = e2e.span_sweep;
        results[9] = e2e.reference;
    } catch (const std::exception& e) {
        const Outcome failed{false, std::string("unexpected exception: ") + e.what()};
        results[6] = results[7] = results[8] = results[9] = failed;
    }
    guard(4, [&] { return criterion_metric_identities(e2e.run_metrics); });
    guard(10, criterion_determinism);

    int gating_failures = 0;
    for (int id = 1; id <= 10; ++id) {
        const Outcome& o = results[id];
        std::printf("criterion %2d %s: %s%s\n", id, o.pass ? "PASS" : "FAIL", o.detail.c_str(),
                    gated(id) ? "" : " [non-gating]");
        std::fflush(stdout);
        if (!o.pass && gated(id)) ++gating_failures;
    }
    std::printf("acceptance: %d/9 gating criteria passed%s\n", 9 - gating_failures,
                gating_failures ? "" : ", suite green");
    return gating_failures == 0 ? 0 : 1;
}
