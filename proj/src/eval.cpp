#include "spanrec/eval.hpp"

#include <charconv>
#include <chrono>
#include <json.hpp>
#include <sstream>

namespace spanrec {

EvalOutcome evaluate_split(const Model& model, const HeteroGraph& graph,
                           const std::vector<IndexedRating>& train_split,
                           const std::vector<IndexedRating>& examples) {
    if (examples.empty()) throw ValidationError("evaluation split is empty");
    RatingPredictor predictor(model, graph, train_split);

    std::vector<double> preds, targets;
    preds.reserve(examples.size());
    targets.reserve(examples.size());
    std::size_t fallbacks = 0;
    for (const auto& ex : examples) {
        const auto res = predictor.predict(ex.user, ex.item, ex.timestamp);
        if (res.fallback) ++fallbacks;
        preds.push_back(clamp_rating(res.y));
        targets.push_back(ex.rating);
    }

    EvalOutcome out;
    out.mae = mae(preds, targets);
    out.rmse = rmse(preds, targets);
    out.n = examples.size();
    out.coverage = 1.0 - static_cast<double>(fallbacks) / static_cast<double>(examples.size());
    return out;
}

std::string metrics_report_json(const MetricsReport& r) {
    nlohmann::json j;
    j["mae"] = r.mae;
    j["rmse"] = r.rmse;
    j["n"] = r.n;
    j["coverage"] = r.coverage;
    j["seed"] = r.seed;
    j["config_digest"] = r.config_digest;
    j["seconds"] = r.seconds;
    return j.dump();
}

GlobalMeanBaseline::GlobalMeanBaseline(const std::vector<IndexedRating>& train) {
    if (train.empty()) throw ValidationError("baseline needs a non-empty training split");
    double acc = 0.0;
    for (const auto& r : train) acc += r.rating;
    mean_ = acc / static_cast<double>(train.size());
}

EvalOutcome GlobalMeanBaseline::evaluate(const std::vector<IndexedRating>& examples) const {
    if (examples.empty()) throw ValidationError("evaluation split is empty");
    std::vector<double> preds(examples.size(), clamp_rating(mean_));
    std::vector<double> targets;
    targets.reserve(examples.size());
    for (const auto& ex : examples) targets.push_back(ex.rating);

    EvalOutcome out;
    out.mae = mae(preds, targets);
    out.rmse = rmse(preds, targets);
    out.n = examples.size();
    out.coverage = 1.0;
    return out;
}

std::vector<MetricsReport> run_experiment(const Dataset& data, const RunConfig& config) {
    validate(config);
    const Split parts = split(data, split_spec(config));
    const HeteroGraph graph = build_graph(parts.train, data.trusts, data.category_of,
                                          data.num_users(), data.num_items(),
                                          graph_config(config, data));
    const std::string digest = config_digest(config);

    std::vector<MetricsReport> reports;
    reports.reserve(config.seeds.size());
    for (const std::uint64_t seed : config.seeds) {
        const auto start = std::chrono::steady_clock::now();
        const TrainResult result = train(graph, parts.train, parts.val, model_config(config),
                                         train_config(config, seed));
        const EvalOutcome out = evaluate_split(result.model, graph, parts.train, parts.test);
        const auto end = std::chrono::steady_clock::now();

        MetricsReport report;
        report.mae = out.mae;
        report.rmse = out.rmse;
        report.n = out.n;
        report.coverage = out.coverage;
        report.seed = seed;
        report.config_digest = digest;
        report.seconds = std::chrono::duration<double>(end - start).count();
        reports.push_back(report);
    }
    return reports;
}

SweepAxis parse_axis(const std::string& name) {
    if (name == "embed_dim") return SweepAxis::EmbedDim;
    if (name == "dropout") return SweepAxis::Dropout;
    if (name == "span_days") return SweepAxis::SpanDays;
    if (name == "ablation") return SweepAxis::Ablation;
    throw ValidationError("unknown sweep axis '" + name + "'");
}

const char* to_string(SweepAxis axis) {
    switch (axis) {
        case SweepAxis::EmbedDim: return "embed_dim";
        case SweepAxis::Dropout: return "dropout";
        case SweepAxis::SpanDays: return "span_days";
        case SweepAxis::Ablation: return "ablation";
    }
    return "?";
}

RunConfig apply_axis_value(const RunConfig& base, SweepAxis axis, const std::string& value) {
    RunConfig c = base;
    switch (axis) {
        case SweepAxis::EmbedDim: apply_override(c, "embed_dim", value); break;
        case SweepAxis::Dropout: apply_override(c, "dropout", value); break;
        case SweepAxis::SpanDays: apply_override(c, "span_days", value); break;
        case SweepAxis::Ablation: {
            c.flags = AblationFlags{};
            if (value == "full") break;
            if (value == "no_edge_weights") c.flags.use_edge_weights = false;
            else if (value == "no_span_nodes") c.flags.use_span_nodes = false;
            else if (value == "no_item_item") c.flags.use_item_item = false;
            else if (value == "no_user_user") c.flags.use_user_user = false;
            else throw ValidationError("unknown ablation '" + value + "'");
            break;
        }
    }
    return c;
}

std::vector<SweepRow> run_sweep(const Dataset& data, const RunConfig& base, const SweepSpec& spec) {
    if (spec.values.empty()) throw ValidationError("sweep needs at least one value");
    if (spec.seeds.empty()) throw ValidationError("sweep needs at least one seed");

    std::vector<SweepRow> rows;
    rows.reserve(spec.values.size() * spec.seeds.size());
    for (const std::string& value : spec.values) {
        RunConfig cell = apply_axis_value(base, spec.axis, value);
        cell.seeds = spec.seeds;
        const std::vector<MetricsReport> reports = run_experiment(data, cell);
        for (const MetricsReport& r : reports) {
            SweepRow row;
            row.axis = to_string(spec.axis);
            row.value = value;
            row.seed = r.seed;
            row.mae = r.mae;
            row.rmse = r.rmse;
            row.coverage = r.coverage;
            row.seconds = r.seconds;
            rows.push_back(row);
        }
    }
    return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
    std::ostringstream out;
    out << "axis,value,seed,mae,rmse,coverage,seconds\n";
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%s,%s,%llu,%.6f,%.6f,%.6f,%.3f\n", r.axis.c_str(),
                      r.value.c_str(), static_cast<unsigned long long>(r.seed), r.mae, r.rmse,
                      r.coverage, r.seconds);
        out << buf;
    }
    return out.str();
}

std::string sweep_jsonl(const std::vector<SweepRow>& rows) {
    std::ostringstream out;
    for (const auto& r : rows) {
        nlohmann::json j;
        j["axis"] = r.axis;
        j["value"] = r.value;
        j["seed"] = r.seed;
        j["mae"] = r.mae;
        j["rmse"] = r.rmse;
        j["coverage"] = r.coverage;
        j["seconds"] = r.seconds;
        out << j.dump() << "\n";
    }
    return out.str();
}

}  // namespace spanrec
