// Scores a handful of generations, builds an instruction -> ROUGE-L dataset,
// and compares the mean baseline with ridge and kNN over 10 random splits.
//
//   quickstart [OUT_DIR]
//
// With OUT_DIR, the full report bundle (report.json, tables, scatter plots) is
// written there.

#include <iostream>
#include <random>

#include "taskcast/runner.hpp"

using namespace taskcast;

int main(int argc, char** argv)
{
    std::cout << "rouge_l(\"the cat sat\", {\"the cat was sat\"}) = "
              << format_full(rouge_l("the cat sat", std::vector<std::string>{"the cat was sat"})) << "\n\n";

    // 60 made-up tasks. Instructions mentioning "translate" score lower; the
    // rest is noise, so the learned predictors have something to find.
    const std::vector<std::string> verbs{"summarize", "classify", "translate", "answer", "rewrite", "extract"};
    const std::vector<std::string> objects{"the review", "a news article", "the question", "each sentence",
                                           "the dialogue", "a product description", "the tweet"};
    std::mt19937_64 rng(42);
    std::normal_distribution<double> noise(0.0, 6.0);
    PerfDataset dataset(MetricKind::RougeL, {"quickstart", "demo"});
    for (int i = 0; i < 60; ++i) {
        const auto& verb = verbs[rng() % verbs.size()];
        const auto& object = objects[rng() % objects.size()];
        const std::string instruction = "In this task you " + verb + " " + object + ".";
        const double value = (verb == "translate" ? 25.0 : 55.0) + noise(rng);
        dataset.add({"task" + std::to_string(100 + i), instruction, MetricKind::RougeL,
                     clamp_to_range(MetricKind::RougeL, value), 1});
    }

    ExperimentConfig config;
    config.condition.label = "demo";
    config.n_splits = 10;
    config.predictors = {PredictorKind::Ridge, PredictorKind::Knn};
    const auto plans = make_splits(dataset, config.n_splits, config.seed, config.fractions);
    std::cout << plans.size() << " splits of " << plans.front().train.size() << "/" << plans.front().val.size() << "/"
              << plans.front().test.size() << " tasks\n\n";

    const auto report = run_experiment_plans(config, dataset, std::nullopt, plans);
    std::cout << render_markdown(table_of(report));

    for (const auto& p : report.predictors) {
        const auto& first = p.splits.front();
        std::cout << "\n" << p.name << ", split 0: rmse " << format_fixed(first.rmse, 2);
        if (!first.hyperparameters.empty())
            std::cout << ", chose " << first.hyperparameters.dump();
    }
    std::cout << "\n";

    if (argc > 1) {
        write_report_bundle(report, argv[1]);
        std::cout << "report bundle written to " << argv[1] << "\n";
    }
}
