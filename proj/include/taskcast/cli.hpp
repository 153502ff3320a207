#pragma once

// `taskcast` command-line entry point. Exit codes: 0 success, 1 domain error,
// 2 usage error. Diagnostics go to the error stream; data goes to files or the
// output stream.

#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "taskcast/collector.hpp"
#include "taskcast/corpus.hpp"
#include "taskcast/error.hpp"
#include "taskcast/metrics.hpp"
#include "taskcast/perfdata.hpp"
#include "taskcast/predictors.hpp"
#include "taskcast/report.hpp"
#include "taskcast/runner.hpp"

namespace taskcast::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitDomain = 1;
inline constexpr int kExitUsage = 2;

namespace detail {

const std::vector<std::string> kMetricNames{"exact_match", "rouge_l", "avg_token_loss"};

struct PolicyFlags {
    bool no_lowercase = false;
    bool keep_punctuation = false;
    bool keep_whitespace = false;

    void add(CLI::App* app)
    {
        app->add_flag("--no-lowercase", no_lowercase, "Do not lowercase before comparing");
        app->add_flag("--keep-punctuation", keep_punctuation, "Do not map punctuation to spaces");
        app->add_flag("--keep-whitespace", keep_whitespace, "Split on every whitespace character");
    }

    NormalizationPolicy policy() const { return {!no_lowercase, !keep_punctuation, !keep_whitespace}; }
};

struct LoadFlags {
    std::optional<std::size_t> max_instances;
    std::uint64_t seed = 0;

    void add(CLI::App* app)
    {
        app->add_option("--max-instances-per-task", max_instances, "Seeded subsample cap per task")
            ->check(CLI::PositiveNumber);
        app->add_option("--instance-seed", seed, "Seed for the instance subsample");
    }

    LoadOptions options() const { return {max_instances, seed}; }
};

struct GridFlags {
    std::vector<double> lambdas;
    std::vector<std::size_t> ks;
    std::vector<std::string> featurizers;

    void add(CLI::App* app)
    {
        app->add_option("--lambdas", lambdas, "Ridge regularization grid")->delimiter(',');
        app->add_option("--ks", ks, "kNN neighbour-count grid")->delimiter(',');
        app->add_option("--featurizers", featurizers, "Featurizer variants, e.g. w1-2+c3-5")->delimiter(',');
    }

    TuneGrid grid() const
    {
        TuneGrid g;
        if (!lambdas.empty())
            g.lambdas = lambdas;
        if (!ks.empty())
            g.ks = ks;
        if (!featurizers.empty()) {
            g.featurizers.clear();
            for (const auto& f : featurizers) {
                try {
                    g.featurizers.push_back(parse_featurizer_config(f));
                } catch (const Error& e) {
                    throw UsageError(e.what());
                }
            }
        }
        return g;
    }
};

inline std::string part_name_check(const std::string& v)
{
    return (v == "train" || v == "val" || v == "test") ? std::string() : "must be train, val or test";
}

inline const std::vector<std::string>& plan_part(const SplitPlan& plan, const std::string& part)
{
    if (part == "train")
        return plan.train;
    if (part == "val")
        return plan.val;
    return plan.test;
}

} // namespace detail

inline int dispatch(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr)
{
    CLI::App app{"taskcast: predict instruction-following performance from task instructions", "taskcast"};
    app.require_subcommand(1);
    app.fallthrough(false);
    std::map<CLI::App*, std::function<void()>> handlers;

    // ingest
    {
        auto* sub = app.add_subcommand("ingest", "Convert SuperNI task files to a task JSONL file");
        auto inputs = std::make_shared<std::vector<std::string>>();
        auto out_path = std::make_shared<std::string>();
        auto load = std::make_shared<detail::LoadFlags>();
        sub->add_option("--superni", *inputs, "SuperNI task JSON files or directories")->required()->check(CLI::ExistingPath);
        sub->add_option("--out", *out_path, "Output task JSONL")->required();
        load->add(sub);
        handlers[sub] = [=, &out] {
            std::vector<std::filesystem::path> files;
            for (const auto& in : *inputs) {
                if (std::filesystem::is_directory(in)) {
                    for (const auto& e : std::filesystem::directory_iterator(in))
                        if (e.path().extension() == ".json")
                            files.push_back(e.path());
                } else {
                    files.emplace_back(in);
                }
            }
            std::sort(files.begin(), files.end());
            TaskSet set;
            for (const auto& f : files) {
                Task t = ingest_superni(f);
                if (load->max_instances)
                    taskcast::detail::subsample_instances(t, *load->max_instances, load->seed);
                set.add(std::move(t));
            }
            write_tasks(*out_path, set);
            out << "ingested " << set.size() << " tasks, " << set.instance_count() << " instances\n";
        };
    }

    // validate
    {
        auto* sub = app.add_subcommand("validate", "Check that generations cover every task instance");
        auto tasks = std::make_shared<std::string>();
        auto gens = std::make_shared<std::string>();
        sub->add_option("--tasks", *tasks, "Task JSONL")->required()->check(CLI::ExistingFile);
        sub->add_option("--gens", *gens, "Generation JSONL")->required()->check(CLI::ExistingFile);
        handlers[sub] = [=, &out] {
            const auto report = validate(load_tasks(*tasks), read_generations(*gens));
            out << to_json(report).dump(2) << "\n";
            if (!report.ok())
                throw Error(std::to_string(report.issue_count()) + " validation issue(s)");
        };
    }

    // collect
    {
        auto* sub = app.add_subcommand("collect", "Query a chat-completions endpoint for every instance");
        auto tasks = std::make_shared<std::string>();
        auto out_path = std::make_shared<std::string>();
        auto endpoint = std::make_shared<EndpointConfig>();
        auto tmpl = std::make_shared<PromptTemplate>();
        auto cache_dir = std::make_shared<std::string>(".taskcast-cache");
        auto load = std::make_shared<detail::LoadFlags>();
        sub->add_option("--tasks", *tasks, "Task JSONL")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", *out_path, "Output generation JSONL")->required();
        sub->add_option("--endpoint", endpoint->url, "Chat-completions URL")->required();
        sub->add_option("--model", endpoint->model, "Model name")->required();
        sub->add_option("--k-demos", tmpl->k_demonstrations, "Demonstrations per prompt")->default_val(0);
        sub->add_option("--cache-dir", *cache_dir, "Response cache directory")->default_val(".taskcast-cache");
        sub->add_option("--rpm", endpoint->requests_per_minute, "Requests-per-minute cap (0 = none)")->default_val(60);
        sub->add_option("--max-inflight", endpoint->max_inflight, "Concurrent requests")
            ->default_val(4)
            ->check(CLI::PositiveNumber);
        sub->add_option("--max-attempts", endpoint->retry.max_attempts, "Attempts per prompt")
            ->default_val(3)
            ->check(CLI::PositiveNumber);
        sub->add_option("--backoff", endpoint->retry.backoff_base_seconds, "Backoff base in seconds")
            ->default_val(1.0)
            ->check(CLI::NonNegativeNumber);
        sub->add_option("--timeout", endpoint->timeout_seconds, "Per-request timeout in seconds")->default_val(120.0);
        sub->add_flag("--logprobs", endpoint->request_logprobs, "Request token log-probabilities");
        load->add(sub);
        handlers[sub] = [=, &out, &err] {
            const auto set = load_tasks(*tasks, load->options());
            CollectOptions opts;
            opts.cache_dir = *cache_dir;
            opts.log = [&err](const std::string& m) { err << m << "\n"; };
            CollectStats stats;
            const auto gens = collect(set, *endpoint, *tmpl, opts, &stats);
            atomic_write(*out_path, generations_to_jsonl(gens));
            out << "collected " << gens.size() << " generations (" << stats.cache_hits << " cached, " << stats.requests
                << " requests, " << stats.retries << " retries)\n";
        };
    }

    // score
    {
        auto* sub = app.add_subcommand("score", "Compute per-task metric scores");
        auto tasks = std::make_shared<std::string>();
        auto gens = std::make_shared<std::vector<std::string>>();
        auto metric = std::make_shared<std::string>();
        auto out_path = std::make_shared<std::string>();
        auto policy = std::make_shared<detail::PolicyFlags>();
        auto load = std::make_shared<detail::LoadFlags>();
        sub->add_option("--tasks", *tasks, "Task JSONL")->required()->check(CLI::ExistingFile);
        sub->add_option("--gens", *gens, "Generation JSONL (repeatable)")->required()->check(CLI::ExistingFile);
        sub->add_option("--metric", *metric, "Metric")->required()->check(CLI::IsMember(detail::kMetricNames));
        sub->add_option("--out", *out_path, "Output scores JSONL")->required();
        policy->add(sub);
        load->add(sub);
        handlers[sub] = [=, &out] {
            const auto m = parse_metric(*metric);
            std::vector<std::filesystem::path> paths(gens->begin(), gens->end());
            const auto ds = load_perf_dataset(*tasks, paths, std::nullopt, m, policy->policy(), load->options());
            atomic_write(*out_path, scores_to_jsonl(ds.entries(), policy->policy()));
            out << "scored " << ds.size() << " tasks (" << to_string(m) << ")\n";
        };
    }

    // dataset
    {
        auto* sub = app.add_subcommand("dataset", "Join instructions with scores into a performance dataset");
        auto tasks = std::make_shared<std::string>();
        auto scores = std::make_shared<std::string>();
        auto metric = std::make_shared<std::string>();
        auto out_path = std::make_shared<std::string>();
        sub->add_option("--tasks", *tasks, "Task JSONL")->required()->check(CLI::ExistingFile);
        sub->add_option("--scores", *scores, "Scores JSONL")->required()->check(CLI::ExistingFile);
        sub->add_option("--metric", *metric, "Metric")->required()->check(CLI::IsMember(detail::kMetricNames));
        sub->add_option("--out", *out_path, "Output dataset JSON")->required();
        handlers[sub] = [=, &out] {
            const auto m = parse_metric(*metric);
            const auto records = load_scores(*scores);
            const auto ds = build_dataset(load_tasks(*tasks), records, m, {*tasks, *scores});
            save_dataset(*out_path, ds);
            out << "dataset of " << ds.size() << " tasks\n";
        };
    }

    // split
    {
        auto* sub = app.add_subcommand("split", "Write seeded train/val/test split plans");
        auto dataset = std::make_shared<std::string>();
        auto n_splits = std::make_shared<std::size_t>(10);
        auto seed = std::make_shared<std::int64_t>(0);
        auto fractions = std::make_shared<std::vector<double>>();
        auto out_dir = std::make_shared<std::string>();
        sub->add_option("--dataset", *dataset, "Dataset JSON")->required()->check(CLI::ExistingFile);
        sub->add_option("--n-splits", *n_splits, "Number of plans")->default_val(10)->check(CLI::PositiveNumber);
        sub->add_option("--seed", *seed, "Base seed (plan i uses seed + i)")->default_val(0);
        sub->add_option("--fractions", *fractions, "train,val,test fractions")->delimiter(',')->expected(3);
        sub->add_option("--out-dir", *out_dir, "Directory for split_NNN.json")->required();
        handlers[sub] = [=, &out] {
            Fractions f = kDefaultFractions;
            if (!fractions->empty())
                std::copy(fractions->begin(), fractions->end(), f.begin());
            const auto ds = load_dataset(*dataset);
            const auto plans = make_splits(ds, *n_splits, *seed, f);
            for (std::size_t i = 0; i < plans.size(); ++i) {
                char name[32];
                std::snprintf(name, sizeof name, "split_%03zu.json", i);
                save_plan(std::filesystem::path(*out_dir) / name, plans[i]);
            }
            const auto& p = plans.front();
            out << plans.size() << " plans, sizes " << p.train.size() << "/" << p.val.size() << "/" << p.test.size()
                << "\n";
        };
    }

    // train
    {
        auto* sub = app.add_subcommand("train", "Tune and fit a predictor on one split's train/val parts");
        auto dataset = std::make_shared<std::string>();
        auto split = std::make_shared<std::string>();
        auto predictor = std::make_shared<std::string>();
        auto out_path = std::make_shared<std::string>();
        auto grid = std::make_shared<detail::GridFlags>();
        auto augment = std::make_shared<std::string>();
        sub->add_option("--dataset", *dataset, "Dataset JSON")->required()->check(CLI::ExistingFile);
        sub->add_option("--split", *split, "Split plan JSON")->required()->check(CLI::ExistingFile);
        sub->add_option("--predictor", *predictor, "mean, ridge or knn")
            ->required()
            ->check(CLI::IsMember({"mean", "ridge", "knn"}));
        sub->add_option("--out", *out_path, "Output model JSON")->required();
        sub->add_option("--augment", *augment, "Extra dataset JSON added to the training part")->check(CLI::ExistingFile);
        grid->add(sub);
        handlers[sub] = [=, &out] {
            const auto g = grid->grid();
            const auto ds = load_dataset(*dataset);
            auto plan = load_plan(*split);
            std::optional<PerfDataset> extra;
            if (!augment->empty()) {
                extra = load_dataset(*augment);
                plan = augment_train(plan, *extra, ds.metric());
            }
            const auto train = taskcast::detail::gather(plan.train, ds, extra ? &*extra : nullptr, "train");
            const auto val = taskcast::detail::gather(plan.val, ds, nullptr, "validation");
            const auto result = tune(parse_predictor_kind(*predictor), train, val, g);
            save_model(*out_path, result.model);
            out << json{{"predictor", *predictor},
                        {"hyperparameters", result.model.hyperparameters()},
                        {"val_rmse", result.val_rmse}}
                       .dump()
                << "\n";
        };
    }

    // predict
    {
        auto* sub = app.add_subcommand("predict", "Emit predictions in the external-predictions format");
        auto model = std::make_shared<std::string>();
        auto dataset = std::make_shared<std::string>();
        auto tasks = std::make_shared<std::string>();
        auto out_path = std::make_shared<std::string>();
        sub->add_option("--model", *model, "Model JSON")->required()->check(CLI::ExistingFile);
        auto* ds_opt = sub->add_option("--dataset", *dataset, "Dataset JSON")->check(CLI::ExistingFile);
        auto* t_opt = sub->add_option("--tasks", *tasks, "Task JSONL")->check(CLI::ExistingFile);
        ds_opt->excludes(t_opt);
        sub->add_option("--out", *out_path, "Output predictions JSONL (default: stdout)");
        handlers[sub] = [=, &out] {
            if (dataset->empty() && tasks->empty())
                throw UsageError("predict: need --dataset or --tasks");
            const auto m = load_model(*model);
            std::vector<std::pair<std::string, std::string>> items;
            if (!dataset->empty()) {
                for (const auto& s : load_dataset(*dataset))
                    items.emplace_back(s.task_id, s.instruction);
            } else {
                for (const auto& t : load_tasks(*tasks))
                    items.emplace_back(t.task_id, t.instruction);
            }
            std::string body;
            for (const auto& [id, text] : items)
                body += json{{"task_id", id}, {"prediction", m.predict(id, text).value}}.dump() + "\n";
            if (out_path->empty())
                out << body;
            else
                atomic_write(*out_path, body);
        };
    }

    // evaluate
    {
        auto* sub = app.add_subcommand("evaluate", "RMSE of a fitted model on one part of a split");
        auto model = std::make_shared<std::string>();
        auto dataset = std::make_shared<std::string>();
        auto split = std::make_shared<std::string>();
        auto part = std::make_shared<std::string>("test");
        sub->add_option("--model", *model, "Model JSON")->required()->check(CLI::ExistingFile);
        sub->add_option("--dataset", *dataset, "Dataset JSON")->required()->check(CLI::ExistingFile);
        sub->add_option("--split", *split, "Split plan JSON")->required()->check(CLI::ExistingFile);
        sub->add_option("--part", *part, "train, val or test")->default_val("test")->check(detail::part_name_check);
        handlers[sub] = [=, &out] {
            const auto m = load_model(*model);
            const auto ds = load_dataset(*dataset);
            const auto plan = load_plan(*split);
            std::vector<double> pred, truth;
            for (const auto& id : detail::plan_part(plan, *part)) {
                const auto& s = ds.at(id);
                pred.push_back(m.predict(id, s.instruction).value);
                truth.push_back(s.value);
            }
            out << json{{"part", *part}, {"n", pred.size()}, {"rmse", rmse(pred, truth)}}.dump() << "\n";
        };
    }

    // experiment
    {
        auto* sub = app.add_subcommand("experiment", "Run the repeated-split experiment and write a report bundle");
        auto config = std::make_shared<std::string>();
        auto sets = std::make_shared<std::vector<std::string>>();
        auto overrides = std::make_shared<std::vector<std::pair<std::string, std::string>>>();
        sub->add_option("--config", *config, "Experiment config file (key = value)")->check(CLI::ExistingFile);
        sub->add_option("--set", *sets, "Override any config key: key=value (repeatable)");
        // Shorthand flags for common keys; all override the file.
        struct Flag {
            const char* flag;
            const char* key;
            const char* help;
        };
        static constexpr Flag kFlags[] = {
            {"--tasks", "tasks", "Task JSONL"},
            {"--gens", "generations", "Generation JSONL (comma-separated)"},
            {"--scores", "scores", "Scores JSONL instead of generations"},
            {"--metric", "metric", "exact_match, rouge_l or avg_token_loss"},
            {"--n-splits", "n_splits", "Number of random splits"},
            {"--seed", "seed", "Base seed"},
            {"--predictors", "predictors", "Predictor families, comma-separated"},
            {"--label", "label", "Condition label (table column)"},
            {"--out-dir", "output_dir", "Report bundle directory"},
            {"--augment-tasks", "augment_tasks", "Extra training-only tasks"},
            {"--augment-scores", "augment_scores", "Scores for the extra tasks"},
            {"--external", "external_predictions", "External predictions JSONL"},
        };
        auto values = std::make_shared<std::map<std::string, std::string>>();
        for (const auto& f : kFlags)
            sub->add_option(f.flag, (*values)[f.key], f.help);
        handlers[sub] = [=, &out] {
            ExperimentConfig c = config->empty() ? ExperimentConfig{} : load_config(*config);
            for (const auto& [key, v] : *values)
                if (!v.empty())
                    apply_config_setting(c, key, v);
            for (const auto& s : *sets) {
                const auto eq = s.find('=');
                if (eq == std::string::npos)
                    throw UsageError("--set expects key=value, got \"" + s + "\"");
                apply_config_setting(c, taskcast::detail::trim(s.substr(0, eq)), taskcast::detail::trim(s.substr(eq + 1)));
            }
            if (c.output_dir.empty())
                throw UsageError("experiment: no output directory (--out-dir or output_dir)");
            const auto report = run_experiment(c);
            out << render_markdown(table_of(report));
        };
    }

    // compare
    {
        auto* sub = app.add_subcommand("compare", "Run several conditions on shared splits and tabulate them");
        auto configs = std::make_shared<std::vector<std::string>>();
        auto out_dir = std::make_shared<std::string>();
        auto independent = std::make_shared<bool>(false);
        sub->add_option("--config", *configs, "Condition config (repeatable)")->required()->check(CLI::ExistingFile);
        sub->add_option("--out-dir", *out_dir, "Directory for table.md, table.csv, comparison.json")->required();
        sub->add_flag("--independent-splits", *independent, "Do not share split plans across conditions");
        handlers[sub] = [=, &out] {
            std::vector<ExperimentConfig> cs;
            for (std::size_t i = 0; i < configs->size(); ++i) {
                auto c = load_config((*configs)[i]);
                if (c.output_dir.empty())
                    c.output_dir = std::filesystem::path(*out_dir) / ("condition_" + std::to_string(i));
                cs.push_back(std::move(c));
            }
            const auto cmp = compare_conditions(cs, !*independent);
            json summary = json::array();
            for (const auto& r : cmp.reports)
                summary.push_back(to_json(r));
            const auto md = render_markdown(cmp.table);
            atomic_write(std::filesystem::path(*out_dir) / "table.md", md);
            atomic_write(std::filesystem::path(*out_dir) / "table.csv", render_csv(cmp.table));
            atomic_write(std::filesystem::path(*out_dir) / "comparison.json", summary.dump(2) + "\n");
            out << md;
        };
    }

    // report
    {
        auto* sub = app.add_subcommand("report", "Re-render tables and scatter plots from report.json");
        auto report = std::make_shared<std::string>();
        auto out_dir = std::make_shared<std::string>();
        sub->add_option("--report", *report, "report.json")->required()->check(CLI::ExistingFile);
        sub->add_option("--out-dir", *out_dir, "Output directory")->required();
        handlers[sub] = [=, &out] {
            const auto r = load_report(*report);
            write_report_bundle(r, *out_dir);
            out << render_markdown(table_of(r));
        };
    }

    if (argc > 1 && argv[1][0] != '-') {
        bool known = false;
        for (const auto* sub : app.get_subcommands({}))
            known = known || sub->get_name() == argv[1];
        if (!known) {
            err << "taskcast: unknown subcommand \"" << argv[1] << "\"\n" << app.help();
            return kExitUsage;
        }
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
    } catch (const CLI::ParseError& e) {
        app.exit(e, err, err);
        err << app.help();
        return kExitUsage;
    }

    for (auto* sub : app.get_subcommands()) {
        auto it = handlers.find(sub);
        if (it == handlers.end())
            continue;
        try {
            it->second();
        } catch (const UsageError& e) {
            err << "taskcast " << sub->get_name() << ": " << e.what() << "\n";
            return kExitUsage;
        } catch (const std::exception& e) {
            err << "taskcast " << sub->get_name() << ": " << e.what() << "\n";
            return kExitDomain;
        }
    }
    return kExitOk;
}

} // namespace taskcast::cli
