#pragma once

// Experiment orchestration: per-split tuning and test evaluation, aggregation
// across splits, and condition sweeps sharing the same split plans.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "taskcast/corpus.hpp"
#include "taskcast/error.hpp"
#include "taskcast/io.hpp"
#include "taskcast/metrics.hpp"
#include "taskcast/perfdata.hpp"
#include "taskcast/predictors.hpp"
#include "taskcast/report.hpp"
#include "taskcast/stats.hpp"

namespace taskcast {

struct PredictorSpec {
    std::string name;
    PredictorKind family = PredictorKind::Mean;
    TuneGrid grid;
    std::shared_ptr<const PredictorModel> external; // family == External
};

struct TestPrediction {
    std::string task_id;
    double truth = 0.0;
    double predicted = 0.0; // clamped, as emitted
    double raw = 0.0;
};

struct SplitResult {
    std::int64_t seed = 0;
    std::string predictor;
    json hyperparameters = json::object();
    std::optional<double> val_rmse; // absent for external predictions
    double rmse = 0.0;
    std::vector<TestPrediction> predictions; // sorted by task id
};

namespace detail {

inline std::vector<TaskScore> gather(const std::vector<std::string>& ids, const PerfDataset& ds,
                                     const PerfDataset* extra, const char* part)
{
    std::vector<TaskScore> out;
    out.reserve(ids.size());
    for (const auto& id : ids) {
        if (const auto* s = ds.find(id))
            out.push_back(*s);
        else if (const auto* e = extra ? extra->find(id) : nullptr)
            out.push_back(*e);
        else
            throw Error(std::string(part) + " task \"" + id + "\" is not in the dataset");
    }
    return out;
}

} // namespace detail

// Tunes on the plan's train/val parts only, then predicts every test task.
// Test targets are read after prediction, for scoring.
inline SplitResult run_split(const PerfDataset& dataset, const SplitPlan& plan, const PredictorSpec& spec,
                             const PerfDataset* augmentation = nullptr)
{
    SplitResult result;
    result.seed = plan.seed;
    result.predictor = spec.name;

    std::optional<PredictorModel> fitted;
    const PredictorModel* model = nullptr;
    if (spec.family == PredictorKind::External) {
        if (!spec.external)
            throw Error("predictor \"" + spec.name + "\" has no external predictions loaded");
        model = spec.external.get();
    } else {
        const auto train = detail::gather(plan.train, dataset, augmentation, "train");
        const auto val = detail::gather(plan.val, dataset, nullptr, "validation");
        auto tuned = tune(spec.family, train, val, spec.grid);
        result.val_rmse = tuned.val_rmse;
        fitted.emplace(std::move(tuned.model));
        model = &*fitted;
        result.hyperparameters = model->hyperparameters();
    }

    std::vector<double> pred, truth;
    for (const auto& id : plan.test) {
        const auto* s = dataset.find(id);
        if (!s)
            throw Error("test task \"" + id + "\" is not in the dataset");
        const auto p = model->predict(id, s->instruction);
        result.predictions.push_back({id, 0.0, p.value, p.raw});
    }
    for (auto& tp : result.predictions) {
        tp.truth = dataset.at(tp.task_id).value;
        pred.push_back(tp.predicted);
        truth.push_back(tp.truth);
    }
    result.rmse = rmse(pred, truth);
    return result;
}

struct Condition {
    std::string label;
    std::string im;
    std::string prompt_format = "instruction";
    std::string augmentation = "none";
};

struct ExperimentConfig {
    Condition condition;
    std::filesystem::path tasks;
    std::vector<std::filesystem::path> generations;
    std::optional<std::filesystem::path> scores;
    MetricKind metric = MetricKind::RougeL;
    std::size_t n_splits = 10;
    std::int64_t seed = 0;
    Fractions fractions = kDefaultFractions;
    std::vector<PredictorKind> predictors{PredictorKind::Mean, PredictorKind::Ridge};
    TuneGrid grid;
    std::optional<std::filesystem::path> external_predictions;
    std::optional<std::filesystem::path> augment_tasks;
    std::optional<std::filesystem::path> augment_generations;
    std::optional<std::filesystem::path> augment_scores;
    std::optional<std::size_t> max_instances_per_task;
    std::uint64_t instance_seed = 0;
    NormalizationPolicy normalization;
    std::filesystem::path output_dir;

    // Label shown as the table column.
    std::string label() const
    {
        if (!condition.label.empty())
            return condition.label;
        if (!condition.im.empty())
            return condition.im;
        if (!generations.empty())
            return generations.front().stem().string();
        if (scores)
            return scores->stem().string();
        return "condition";
    }
};

namespace detail {

inline std::string trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_list(std::string_view s)
{
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos <= s.size()) {
        auto end = s.find(',', pos);
        if (end == std::string_view::npos)
            end = s.size();
        auto item = trim(s.substr(pos, end - pos));
        if (!item.empty())
            out.push_back(std::move(item));
        pos = end + 1;
    }
    return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& v)
{
    std::istringstream in(v);
    T out{};
    in >> out;
    if (in.fail() || !in.eof())
        throw UsageError("config key \"" + key + "\": bad number \"" + v + "\"");
    return out;
}

} // namespace detail

// Applies one `key = value` setting. Relative paths are resolved against
// `base_dir`. Throws UsageError on unknown keys or bad values.
inline void apply_config_setting(ExperimentConfig& c, const std::string& key, const std::string& value,
                                 const std::filesystem::path& base_dir = {})
{
    auto path = [&](const std::string& v) {
        std::filesystem::path p(v);
        return (p.is_relative() && !base_dir.empty()) ? base_dir / p : p;
    };
    try {
        if (key == "label")
            c.condition.label = value;
        else if (key == "im")
            c.condition.im = value;
        else if (key == "prompt_format")
            c.condition.prompt_format = value;
        else if (key == "augmentation")
            c.condition.augmentation = value;
        else if (key == "tasks")
            c.tasks = path(value);
        else if (key == "generations") {
            c.generations.clear();
            for (const auto& g : detail::split_list(value))
                c.generations.push_back(path(g));
        } else if (key == "scores")
            c.scores = path(value);
        else if (key == "metric")
            c.metric = parse_metric(value);
        else if (key == "n_splits")
            c.n_splits = detail::parse_number<std::size_t>(key, value);
        else if (key == "seed")
            c.seed = detail::parse_number<std::int64_t>(key, value);
        else if (key == "fractions") {
            const auto parts = detail::split_list(value);
            if (parts.size() != 3)
                throw UsageError("config key \"fractions\" needs three values");
            for (std::size_t i = 0; i < 3; ++i)
                c.fractions[i] = detail::parse_number<double>(key, parts[i]);
        } else if (key == "predictors") {
            c.predictors.clear();
            for (const auto& p : detail::split_list(value))
                c.predictors.push_back(parse_predictor_kind(p));
        } else if (key == "ridge_lambdas") {
            c.grid.lambdas.clear();
            for (const auto& p : detail::split_list(value))
                c.grid.lambdas.push_back(detail::parse_number<double>(key, p));
        } else if (key == "knn_ks") {
            c.grid.ks.clear();
            for (const auto& p : detail::split_list(value))
                c.grid.ks.push_back(detail::parse_number<std::size_t>(key, p));
        } else if (key == "featurizers") {
            c.grid.featurizers.clear();
            for (const auto& p : detail::split_list(value))
                c.grid.featurizers.push_back(parse_featurizer_config(p));
        } else if (key == "external_predictions")
            c.external_predictions = path(value);
        else if (key == "augment_tasks")
            c.augment_tasks = path(value);
        else if (key == "augment_generations")
            c.augment_generations = path(value);
        else if (key == "augment_scores")
            c.augment_scores = path(value);
        else if (key == "max_instances_per_task")
            c.max_instances_per_task = detail::parse_number<std::size_t>(key, value);
        else if (key == "instance_seed")
            c.instance_seed = detail::parse_number<std::uint64_t>(key, value);
        else if (key == "normalization") {
            NormalizationPolicy p{false, false, false};
            for (const auto& flag : detail::split_list(value)) {
                if (flag == "lowercase")
                    p.lowercase = true;
                else if (flag == "strip_punctuation")
                    p.strip_punctuation = true;
                else if (flag == "collapse_whitespace")
                    p.collapse_whitespace = true;
                else if (flag != "none")
                    throw UsageError("unknown normalization flag \"" + flag + "\"");
            }
            c.normalization = p;
        } else if (key == "output_dir")
            c.output_dir = path(value);
        else
            throw UsageError("unknown config key \"" + key + "\"");
    } catch (const UsageError&) {
        throw;
    } catch (const Error& e) {
        throw UsageError("config key \"" + key + "\": " + e.what());
    }
}

// Plain-text `key = value` lines; '#' starts a comment.
inline ExperimentConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = {},
                                     ExperimentConfig config = {})
{
    std::size_t pos = 0, line_no = 0;
    while (pos < text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos)
            end = text.size();
        auto line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string_view::npos)
            line = line.substr(0, hash);
        if (detail::trim(line).empty())
            continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos)
            throw UsageError("config line " + std::to_string(line_no) + ": expected key = value");
        apply_config_setting(config, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)), base_dir);
    }
    return config;
}

inline ExperimentConfig load_config(const std::filesystem::path& path)
{
    return parse_config(read_file(path), path.parent_path());
}

// Checks that the config is complete and its files exist.
inline void validate_config(const ExperimentConfig& c)
{
    auto must_exist = [](const std::filesystem::path& p, const char* what) {
        if (p.empty())
            throw UsageError(std::string("config: missing ") + what);
        if (!std::filesystem::exists(p))
            throw Error(std::string("config: ") + what + " file not found: " + p.string());
    };
    must_exist(c.tasks, "tasks");
    if (c.generations.empty() && !c.scores)
        throw UsageError("config: need generations or scores");
    for (const auto& g : c.generations)
        must_exist(g, "generations");
    if (c.scores)
        must_exist(*c.scores, "scores");
    if (c.n_splits < 1)
        throw UsageError("config: n_splits must be at least 1");
    if (c.predictors.empty())
        throw UsageError("config: no predictors");
    const bool wants_external =
        std::find(c.predictors.begin(), c.predictors.end(), PredictorKind::External) != c.predictors.end();
    if (wants_external && !c.external_predictions)
        throw UsageError("config: predictor \"external\" needs external_predictions");
    if (c.external_predictions)
        must_exist(*c.external_predictions, "external_predictions");
    if (c.augment_tasks) {
        must_exist(*c.augment_tasks, "augment_tasks");
        if (!c.augment_generations && !c.augment_scores)
            throw UsageError("config: augment_tasks needs augment_generations or augment_scores");
    }
    if (c.augment_generations)
        must_exist(*c.augment_generations, "augment_generations");
    if (c.augment_scores)
        must_exist(*c.augment_scores, "augment_scores");
}

// Loads tasks and generations (or precomputed scores) into a PerfDataset.
inline PerfDataset load_perf_dataset(const std::filesystem::path& tasks_path,
                                     const std::vector<std::filesystem::path>& generation_paths,
                                     const std::optional<std::filesystem::path>& scores_path, MetricKind metric,
                                     const NormalizationPolicy& policy, const LoadOptions& load = {})
{
    const auto tasks = load_tasks(tasks_path, load);
    if (scores_path) {
        const auto scores = load_scores(*scores_path);
        return build_dataset(tasks, scores, metric, {tasks_path.string(), scores_path->string()});
    }
    GenerationSet gens;
    std::string label;
    for (const auto& g : generation_paths) {
        for (const auto& [key, rec] : load_generations(g, tasks))
            if (!gens.insert(rec))
                throw Error("generation for (" + key.first + ", " + key.second + ") appears in more than one file");
        label += (label.empty() ? "" : ",") + g.string();
    }
    const auto scores = score_tasks(tasks, gens, metric, policy);
    return build_dataset(scores, metric, {tasks_path.string(), label});
}

struct PredictorSummary {
    std::string name;
    PredictorKind family = PredictorKind::Mean;
    double mean_rmse = 0.0;
    std::optional<double> std_rmse; // sample std, n - 1 denominator
    std::vector<SplitResult> splits; // seed order
};

struct ExperimentReport {
    Condition condition;
    std::string label;
    MetricKind metric = MetricKind::RougeL;
    std::size_t n_splits = 0;
    std::int64_t seed = 0;
    Fractions fractions = kDefaultFractions;
    NormalizationPolicy normalization;
    std::size_t n_tasks = 0;
    std::size_t n_augmentation_tasks = 0;
    Provenance provenance;
    std::vector<PredictorSummary> predictors;

    const PredictorSummary* find(std::string_view name) const
    {
        for (const auto& p : predictors)
            if (p.name == name)
                return &p;
        return nullptr;
    }
};

inline void aggregate(PredictorSummary& s)
{
    std::vector<double> r;
    for (const auto& sr : s.splits)
        r.push_back(sr.rmse);
    s.mean_rmse = mean(r);
    s.std_rmse = sample_std(r);
}

inline std::vector<PredictorSpec> predictor_specs(const ExperimentConfig& c)
{
    std::vector<PredictorSpec> specs;
    std::set<PredictorKind> seen;
    auto add = [&](PredictorKind k) {
        if (!seen.insert(k).second)
            return;
        PredictorSpec spec{std::string(to_string(k)), k, c.grid, nullptr};
        if (k == PredictorKind::External)
            spec.external = std::make_shared<PredictorModel>(load_external(*c.external_predictions, c.metric));
        specs.push_back(std::move(spec));
    };
    add(PredictorKind::Mean); // the lower bound is always reported
    for (auto k : c.predictors)
        add(k);
    return specs;
}

// Runs every predictor over the given plans (or plans derived from the config
// seed). Nothing is written here; see write_report_bundle.
inline ExperimentReport run_experiment_plans(const ExperimentConfig& c, const PerfDataset& dataset,
                                             const std::optional<PerfDataset>& augmentation,
                                             const std::vector<SplitPlan>& plans)
{
    ExperimentReport report;
    report.condition = c.condition;
    report.label = c.label();
    report.metric = c.metric;
    report.n_splits = plans.size();
    report.seed = c.seed;
    report.fractions = c.fractions;
    report.normalization = c.normalization;
    report.n_tasks = dataset.size();
    report.n_augmentation_tasks = augmentation ? augmentation->size() : 0;
    report.provenance = dataset.provenance();

    for (const auto& spec : predictor_specs(c)) {
        PredictorSummary summary{spec.name, spec.family, 0.0, std::nullopt, {}};
        for (const auto& plan : plans) {
            const SplitPlan effective =
                augmentation ? augment_train(plan, *augmentation, dataset.metric()) : plan;
            summary.splits.push_back(run_split(dataset, effective, spec, augmentation ? &*augmentation : nullptr));
        }
        aggregate(summary);
        report.predictors.push_back(std::move(summary));
    }
    return report;
}

struct PreparedExperiment {
    PerfDataset dataset;
    std::optional<PerfDataset> augmentation;
};

inline PreparedExperiment prepare_experiment(const ExperimentConfig& c)
{
    validate_config(c);
    LoadOptions load{c.max_instances_per_task, c.instance_seed};
    PreparedExperiment p{load_perf_dataset(c.tasks, c.generations, c.scores, c.metric, c.normalization, load), {}};
    if (c.augment_tasks) {
        std::vector<std::filesystem::path> gens;
        if (c.augment_generations)
            gens.push_back(*c.augment_generations);
        p.augmentation = load_perf_dataset(*c.augment_tasks, gens, c.augment_scores, c.metric, c.normalization, load);
    }
    return p;
}

// ---- persistence ---------------------------------------------------------

inline json to_json(const SplitResult& r)
{
    json preds = json::array();
    for (const auto& p : r.predictions)
        preds.push_back({{"task_id", p.task_id}, {"true", p.truth}, {"predicted", p.predicted}, {"raw", p.raw}});
    json j{{"seed", r.seed}, {"hyperparameters", r.hyperparameters}, {"rmse", r.rmse}, {"predictions", std::move(preds)}};
    j["val_rmse"] = r.val_rmse ? json(*r.val_rmse) : json(nullptr);
    return j;
}

inline json to_json(const ExperimentReport& r)
{
    json preds = json::array();
    for (const auto& p : r.predictors) {
        json splits = json::array();
        for (const auto& s : p.splits)
            splits.push_back(to_json(s));
        preds.push_back({{"name", p.name},
                         {"family", to_string(p.family)},
                         {"mean_rmse", p.mean_rmse},
                         {"std_rmse", p.std_rmse ? json(*p.std_rmse) : json(nullptr)},
                         {"splits", std::move(splits)}});
    }
    return {{"condition",
             {{"label", r.label},
              {"im", r.condition.im},
              {"metric", to_string(r.metric)},
              {"prompt_format", r.condition.prompt_format},
              {"augmentation", r.condition.augmentation}}},
            {"metric", to_string(r.metric)},
            {"n_splits", r.n_splits},
            {"seed", r.seed},
            {"fractions", r.fractions},
            {"std_kind", "sample (n-1 denominator); null when n_splits < 2"},
            {"normalization", to_json(r.normalization)},
            {"dataset",
             {{"n_tasks", r.n_tasks},
              {"n_augmentation_tasks", r.n_augmentation_tasks},
              {"tasks", r.provenance.tasks},
              {"generations", r.provenance.generations}}},
            {"predictors", std::move(preds)}};
}

inline ExperimentReport report_from_json(const json& j)
{
    try {
        ExperimentReport r;
        const auto& cond = j.at("condition");
        r.label = cond.at("label").get<std::string>();
        r.condition = {r.label, cond.at("im").get<std::string>(), cond.at("prompt_format").get<std::string>(),
                       cond.at("augmentation").get<std::string>()};
        r.metric = parse_metric(j.at("metric").get<std::string>());
        r.n_splits = j.at("n_splits").get<std::size_t>();
        r.seed = j.at("seed").get<std::int64_t>();
        for (std::size_t i = 0; i < 3; ++i)
            r.fractions[i] = j.at("fractions").at(i).get<double>();
        r.normalization = policy_from_json(j.at("normalization"));
        const auto& ds = j.at("dataset");
        r.n_tasks = ds.at("n_tasks").get<std::size_t>();
        r.n_augmentation_tasks = ds.at("n_augmentation_tasks").get<std::size_t>();
        r.provenance = {ds.at("tasks").get<std::string>(), ds.at("generations").get<std::string>()};
        for (const auto& p : j.at("predictors")) {
            PredictorSummary s;
            s.name = p.at("name").get<std::string>();
            s.family = parse_predictor_kind(p.at("family").get<std::string>());
            s.mean_rmse = p.at("mean_rmse").get<double>();
            if (!p.at("std_rmse").is_null())
                s.std_rmse = p.at("std_rmse").get<double>();
            for (const auto& sj : p.at("splits")) {
                SplitResult sr;
                sr.seed = sj.at("seed").get<std::int64_t>();
                sr.predictor = s.name;
                sr.hyperparameters = sj.at("hyperparameters");
                if (!sj.at("val_rmse").is_null())
                    sr.val_rmse = sj.at("val_rmse").get<double>();
                sr.rmse = sj.at("rmse").get<double>();
                for (const auto& tp : sj.at("predictions"))
                    sr.predictions.push_back({tp.at("task_id").get<std::string>(), tp.at("true").get<double>(),
                                              tp.at("predicted").get<double>(), tp.at("raw").get<double>()});
                s.splits.push_back(std::move(sr));
            }
            r.predictors.push_back(std::move(s));
        }
        return r;
    } catch (const json::exception& e) {
        throw SchemaError(std::string("malformed report: ") + e.what());
    }
}

inline ExperimentReport load_report(const std::filesystem::path& path)
{
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw ParseError(path.string(), 1, std::string("malformed JSON: ") + e.what());
    }
    return report_from_json(j);
}

inline ComparisonTable table_of(const std::vector<const ExperimentReport*>& reports)
{
    ComparisonTable t;
    for (const auto* r : reports) {
        if (std::find(t.conditions.begin(), t.conditions.end(), r->label) != t.conditions.end())
            throw Error("duplicate condition label \"" + r->label + "\"");
        t.conditions.push_back(r->label);
        for (const auto& p : r->predictors) {
            if (std::find(t.predictors.begin(), t.predictors.end(), p.name) == t.predictors.end())
                t.predictors.push_back(p.name);
            t.cells[{p.name, r->label}] = {p.mean_rmse, p.std_rmse, p.splits.size()};
        }
    }
    return t;
}

inline ComparisonTable table_of(const ExperimentReport& r) { return table_of(std::vector{&r}); }

inline std::string render_scatter_csv(const ExperimentReport& r)
{
    std::string out = "predictor,task_id,true,predicted,seed\n";
    for (const auto& p : r.predictors)
        for (const auto& s : p.splits)
            for (const auto& tp : s.predictions)
                out += csv_field(p.name) + "," + csv_field(tp.task_id) + "," + format_full(tp.truth) + ","
                       + format_full(tp.predicted) + "," + std::to_string(s.seed) + "\n";
    return out;
}

inline ScatterSpec scatter_spec(const ExperimentReport& r, const PredictorSummary& p)
{
    ScatterSpec spec;
    for (const auto& s : p.splits)
        for (const auto& tp : s.predictions)
            spec.points.push_back({tp.truth, tp.predicted, s.seed});
    spec.axis_min = 0.0;
    spec.axis_max = is_percent_metric(r.metric) ? 100.0 : loss_axis_max(spec.points);
    spec.title = r.label + " / " + p.name + " (" + std::string(to_string(r.metric)) + ")";
    return spec;
}

// Writes report.json, table.md, table.csv, scatter.csv and one
// scatter_<predictor>.svg into `dir`. Everything is rendered before the first
// write.
inline void write_report_bundle(const ExperimentReport& r, const std::filesystem::path& dir)
{
    std::vector<std::pair<std::string, std::string>> files;
    files.emplace_back("report.json", to_json(r).dump(2) + "\n");
    const auto table = table_of(r);
    files.emplace_back("table.md", render_markdown(table));
    files.emplace_back("table.csv", render_csv(table));
    files.emplace_back("scatter.csv", render_scatter_csv(r));
    for (const auto& p : r.predictors)
        files.emplace_back("scatter_" + p.name + ".svg", render_scatter(scatter_spec(r, p)));
    std::filesystem::create_directories(dir);
    for (const auto& [name, body] : files)
        atomic_write(dir / name, body);
}

inline ExperimentReport run_experiment(const ExperimentConfig& c)
{
    const auto prepared = prepare_experiment(c);
    const auto plans = make_splits(prepared.dataset, c.n_splits, c.seed, c.fractions);
    auto report = run_experiment_plans(c, prepared.dataset, prepared.augmentation, plans);
    if (!c.output_dir.empty())
        write_report_bundle(report, c.output_dir);
    return report;
}

struct Comparison {
    ComparisonTable table;
    std::vector<ExperimentReport> reports;
};

// Runs each condition. With shared splits (the default) every condition uses
// the same plans, so they must agree on n_splits, seed, fractions and the task
// id set. Independent splits offset condition i's seed by i * n_splits.
inline Comparison compare_conditions(const std::vector<ExperimentConfig>& configs, bool shared_splits = true)
{
    if (configs.empty())
        throw UsageError("compare: no conditions");
    const auto& first = configs.front();
    for (const auto& c : configs)
        if (c.n_splits != first.n_splits || c.seed != first.seed || c.fractions != first.fractions)
            throw Error("misaligned conditions: \"" + c.label() + "\" differs from \"" + first.label()
                        + "\" in n_splits, seed or fractions");

    Comparison out;
    std::optional<std::vector<std::string>> ids;
    std::vector<SplitPlan> plans;
    for (std::size_t i = 0; i < configs.size(); ++i) {
        const auto& c = configs[i];
        const auto prepared = prepare_experiment(c);
        if (shared_splits) {
            const auto these = prepared.dataset.sorted_ids();
            if (!ids) {
                ids = these;
                plans = make_splits(prepared.dataset, c.n_splits, c.seed, c.fractions);
            } else if (*ids != these) {
                throw Error("misaligned conditions: \"" + c.label() + "\" covers a different task set");
            }
        } else {
            plans = make_splits(prepared.dataset, c.n_splits,
                                c.seed + static_cast<std::int64_t>(i * c.n_splits), c.fractions);
        }
        auto report = run_experiment_plans(c, prepared.dataset, prepared.augmentation, plans);
        if (!c.output_dir.empty())
            write_report_bundle(report, c.output_dir);
        out.reports.push_back(std::move(report));
    }
    std::vector<const ExperimentReport*> ptrs;
    for (const auto& r : out.reports)
        ptrs.push_back(&r);
    out.table = table_of(ptrs);
    return out;
}

} // namespace taskcast
