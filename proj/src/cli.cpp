#include "spanrec/cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <map>

#include "spanrec/checkpoint.hpp"
#include "spanrec/config.hpp"
#include "spanrec/eval.hpp"
#include "spanrec/training.hpp"

namespace spanrec {
namespace {

struct ConfigOptions {
    std::string config_path;
    std::vector<std::string> sets;
    std::string ratings;
    std::string trust;
    std::string outdir;
};

void add_config_options(CLI::App* cmd, ConfigOptions& opts) {
    cmd->add_option("--config", opts.config_path, "config file (key = value lines)");
    cmd->add_option("--set", opts.sets, "override one config key, e.g. --set epochs=5");
    cmd->add_option("--ratings", opts.ratings, "ratings CSV (user,item,category,rating,timestamp)");
    cmd->add_option("--trust", opts.trust, "trust CSV (truster,trustee)");
    cmd->add_option("--outdir", opts.outdir, "output directory");
}

std::string strip(const std::string& s) {
    const auto first = s.find_first_not_of(" \t");
    if (first == std::string::npos) return "";
    const auto last = s.find_last_not_of(" \t");
    return s.substr(first, last - first + 1);
}

RunConfig resolve_config(const ConfigOptions& opts) {
    RunConfig config;
    if (!opts.config_path.empty()) config = load_config_file(opts.config_path);
    for (const std::string& kv : opts.sets) {
        const std::size_t eq = kv.find('=');
        if (eq == std::string::npos)
            throw ParseError("--set expects key=value, got '" + kv + "'");
        apply_override(config, strip(kv.substr(0, eq)), kv.substr(eq + 1));
    }
    if (!opts.ratings.empty()) config.ratings_path = opts.ratings;
    if (!opts.trust.empty()) config.trust_path = opts.trust;
    if (!opts.outdir.empty()) config.outdir = opts.outdir;
    return config;
}

Dataset load_dataset(const RunConfig& config) {
    if (config.ratings_path.empty()) throw ValidationError("a ratings path is required");
    std::ifstream rin(config.ratings_path);
    if (!rin) throw IoError("cannot open ratings file: " + config.ratings_path);
    const std::vector<RatingRecord> ratings = parse_ratings(rin);

    std::vector<TrustRecord> trust;
    if (!config.trust_path.empty()) {
        std::ifstream tin(config.trust_path);
        if (!tin) throw IoError("cannot open trust file: " + config.trust_path);
        trust = parse_trust(tin);
    }
    return build_dataset(ratings, trust);
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << content;
    if (!out) throw IoError("failed writing: " + path);
}

void prepare_outdir(const RunConfig& config) {
    std::filesystem::create_directories(config.outdir);
    write_text(config.outdir + "/effective-config.txt", serialize_config(config));
}

HeteroGraph build_from(const RunConfig& config, const Dataset& data, const Split& parts) {
    return build_graph(parts.train, data.trusts, data.category_of, data.num_users(),
                       data.num_items(), graph_config(config, data));
}

int cmd_stats(const RunConfig& config) {
    const Dataset data = load_dataset(config);
    std::cout << dataset_summary_json(data) << "\n";
    return 0;
}

// Inspects the graph over every rating record (training runs rebuild it from
// their training split).
int cmd_build_graph(const RunConfig& config) {
    validate(config);
    const Dataset data = load_dataset(config);
    const HeteroGraph graph = build_graph(data.ratings, data.trusts, data.category_of,
                                          data.num_users(), data.num_items(),
                                          graph_config(config, data));
    const GraphAudit audit = audit_graph(graph, data.ratings);

    prepare_outdir(config);
    write_text(config.outdir + "/graph.json", export_graph_json(graph));
    write_text(config.outdir + "/audit.json", audit_report_json(audit));
    std::cout << audit_report_json(audit) << "\n";
    return audit.ok ? 0 : 1;
}

int cmd_train(const RunConfig& config, std::int64_t seed_override) {
    validate(config);
    const Dataset data = load_dataset(config);
    const Split parts = split(data, split_spec(config));
    const HeteroGraph graph = build_from(config, data, parts);
    const std::uint64_t seed =
        seed_override >= 0 ? static_cast<std::uint64_t>(seed_override) : config.seeds.front();
    const std::string tag = std::to_string(seed);
    const std::string digest = config_digest(config);

    prepare_outdir(config);
    std::ofstream trace(config.outdir + "/trace-seed" + tag + ".jsonl", std::ios::trunc);
    if (!trace) throw IoError("cannot open trace file in " + config.outdir);
    const auto on_epoch = [&trace](const EpochStats& st) {
        nlohmann::json j;
        j["epoch"] = st.epoch;
        j["train_loss"] = st.train_loss;
        j["val_mae"] = st.val_mae;
        j["val_rmse"] = st.val_rmse;
        j["seconds"] = st.seconds;
        trace << j.dump() << "\n" << std::flush;
    };

    const TrainResult result = train(graph, parts.train, parts.val, model_config(config),
                                     train_config(config, seed), on_epoch);

    save_checkpoint(config.outdir + "/checkpoint-seed" + tag + ".bin", result.model, digest, seed);

    nlohmann::json summary;
    summary["seed"] = seed;
    summary["epochs_run"] = result.trace.size();
    summary["best_epoch"] = result.best_epoch;
    summary["best_val_mae"] = result.best_val_mae;
    summary["best_val_rmse"] = result.best_val_rmse;
    summary["config_digest"] = digest;
    write_text(config.outdir + "/summary-seed" + tag + ".json", summary.dump() + "\n");
    std::cout << summary.dump() << "\n";
    return 0;
}

int cmd_evaluate(const RunConfig& config, const std::string& checkpoint_path,
                 const std::string& which, bool baseline) {
    validate(config);
    const Dataset data = load_dataset(config);
    const Split parts = split(data, split_spec(config));
    const std::vector<IndexedRating>& examples = which == "val" ? parts.val : parts.test;

    MetricsReport report;
    report.config_digest = config_digest(config);
    if (baseline) {
        const GlobalMeanBaseline base(parts.train);
        const EvalOutcome out = base.evaluate(examples);
        report.mae = out.mae;
        report.rmse = out.rmse;
        report.n = out.n;
        report.coverage = out.coverage;
    } else {
        if (checkpoint_path.empty())
            throw ValidationError("--checkpoint is required (or pass --baseline)");
        const LoadedCheckpoint loaded = load_checkpoint(checkpoint_path);
        if (loaded.config_digest != report.config_digest)
            throw ValidationError("checkpoint config digest " + loaded.config_digest +
                                  " does not match this config (" + report.config_digest + ")");
        const HeteroGraph graph = build_from(config, data, parts);
        if (loaded.model.emb.user.rows != graph.num_users ||
            loaded.model.emb.item.rows != graph.num_items ||
            loaded.model.emb.span.rows != graph.num_spans())
            throw ValidationError("checkpoint shapes do not match the graph built from this data");
        const EvalOutcome out = evaluate_split(loaded.model, graph, parts.train, examples);
        report.mae = out.mae;
        report.rmse = out.rmse;
        report.n = out.n;
        report.coverage = out.coverage;
        report.seed = loaded.seed;
    }
    std::cout << metrics_report_json(report) << "\n";
    return 0;
}

int run_rows(const RunConfig& config, const SweepSpec& spec, const std::string& stem) {
    const Dataset data = load_dataset(config);
    const std::vector<SweepRow> rows = run_sweep(data, config, spec);
    prepare_outdir(config);
    write_text(config.outdir + "/" + stem + ".csv", sweep_csv(rows));
    write_text(config.outdir + "/" + stem + ".jsonl", sweep_jsonl(rows));
    std::cout << sweep_csv(rows);
    return 0;
}

int cmd_ablate(const RunConfig& config) {
    validate(config);
    SweepSpec spec;
    spec.axis = SweepAxis::Ablation;
    spec.values = {"full", "no_edge_weights", "no_span_nodes", "no_item_item", "no_user_user"};
    spec.seeds = config.seeds;
    return run_rows(config, spec, "ablate");
}

int cmd_sweep(const RunConfig& config, const std::string& axis, const std::string& values) {
    validate(config);
    SweepSpec spec;
    spec.axis = parse_axis(axis);
    std::size_t start = 0;
    while (start <= values.size()) {
        std::size_t comma = values.find(',', start);
        if (comma == std::string::npos) comma = values.size();
        const std::string part = strip(values.substr(start, comma - start));
        if (!part.empty()) spec.values.push_back(part);
        start = comma + 1;
    }
    spec.seeds = config.seeds;
    return run_rows(config, spec, "sweep");
}

int cmd_gradcheck(int seeds, int embed_dim, double eps, double tolerance, double corrupt) {
    char line[160];
    double overall = 0.0;
    std::map<std::string, double> family_worst;
    for (int s = 1; s <= seeds; ++s) {
        const GradcheckFixture fixture = make_gradcheck_fixture(static_cast<std::uint64_t>(s), embed_dim);
        const GradReport report = gradient_check(fixture, eps, corrupt);
        std::snprintf(line, sizeof(line), "seed %d: max relative error %.3e (fixture salt %d)", s,
                      report.overall, fixture.salt);
        std::cout << line << "\n";
        overall = std::max(overall, report.overall);
        for (const auto& e : report.entries)
            family_worst[e.family] = std::max(family_worst[e.family], e.max_rel_err);
    }
    for (const auto& [family, err] : family_worst) {
        std::snprintf(line, sizeof(line), "  %-18s %.3e", family.c_str(), err);
        std::cout << line << "\n";
    }
    const bool ok = overall < tolerance;
    std::snprintf(line, sizeof(line), "gradcheck %s: overall %.3e, tolerance %.1e",
                  ok ? "PASS" : "FAIL", overall, tolerance);
    std::cout << line << "\n";
    return ok ? 0 : 1;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"social recommender over a user/item/time-span graph"};
    app.require_subcommand(1);

    ConfigOptions opts;

    CLI::App* stats = app.add_subcommand("stats", "dataset summary counts");
    add_config_options(stats, opts);

    CLI::App* build = app.add_subcommand("build-graph",
                                         "build the graph from the whole corpus and audit it");
    add_config_options(build, opts);

    CLI::App* train_cmd = app.add_subcommand("train", "train one seed; writes checkpoint + trace");
    add_config_options(train_cmd, opts);
    std::int64_t seed_override = -1;
    train_cmd->add_option("--seed", seed_override, "training seed (default: first config seed)");

    CLI::App* eval_cmd = app.add_subcommand("evaluate", "evaluate a checkpoint on val or test");
    add_config_options(eval_cmd, opts);
    std::string checkpoint_path;
    std::string eval_split = "test";
    bool baseline = false;
    eval_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint file from train");
    eval_cmd->add_option("--split", eval_split, "val or test")
        ->check(CLI::IsMember({"val", "test"}));
    eval_cmd->add_flag("--baseline", baseline, "evaluate the global-mean baseline instead");

    CLI::App* ablate_cmd =
        app.add_subcommand("ablate", "full model vs single-component removals");
    add_config_options(ablate_cmd, opts);

    CLI::App* sweep_cmd = app.add_subcommand("sweep", "sweep one axis over a value list");
    add_config_options(sweep_cmd, opts);
    std::string axis;
    std::string values;
    sweep_cmd->add_option("--axis", axis, "embed_dim | dropout | span_days | ablation")->required();
    sweep_cmd->add_option("--values", values, "comma-separated values")->required();

    CLI::App* grad_cmd =
        app.add_subcommand("gradcheck", "compare backward against central finite differences");
    int grad_seeds = 5;
    int grad_dim = 16;
    double eps = 1e-5;
    double tolerance = 1e-4;
    double corrupt = 0.0;
    grad_cmd->add_option("--seeds", grad_seeds, "number of fixture seeds")->check(CLI::PositiveNumber);
    grad_cmd->add_option("--embed-dim", grad_dim, "fixture embedding size");
    grad_cmd->add_option("--eps", eps, "finite-difference step");
    grad_cmd->add_option("--tolerance", tolerance, "max relative error allowed");
    grad_cmd->add_option("--corrupt", corrupt)->group("");  // test hook, hidden from help

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (stats->parsed()) return cmd_stats(resolve_config(opts));
        if (build->parsed()) return cmd_build_graph(resolve_config(opts));
        if (train_cmd->parsed()) return cmd_train(resolve_config(opts), seed_override);
        if (eval_cmd->parsed())
            return cmd_evaluate(resolve_config(opts), checkpoint_path, eval_split, baseline);
        if (ablate_cmd->parsed()) return cmd_ablate(resolve_config(opts));
        if (sweep_cmd->parsed()) return cmd_sweep(resolve_config(opts), axis, values);
        if (grad_cmd->parsed()) return cmd_gradcheck(grad_seeds, grad_dim, eps, tolerance, corrupt);
    } catch (const ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 2;
    } catch (const ValidationError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return 1;
    } catch (const TrainingError& e) {
        std::cerr << "training error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

int run_cli(const std::vector<std::string>& args) {
    std::vector<const char*> argv;
    argv.push_back("spanrec");
    for (const std::string& a : args) argv.push_back(a.c_str());
    return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace spanrec
