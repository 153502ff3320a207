#pragma once

// Regression datasets of (instruction, score) pairs and seeded
// train/validation/test split plans over task ids.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "taskcast/corpus.hpp"
#include "taskcast/error.hpp"
#include "taskcast/io.hpp"
#include "taskcast/metrics.hpp"
#include "taskcast/pcg.hpp"

namespace taskcast {

struct Provenance {
    std::string tasks;
    std::string generations;

    bool operator==(const Provenance&) const = default;
};

// One TaskScore per task, all under the same metric.
class PerfDataset {
public:
    PerfDataset() = default;
    explicit PerfDataset(MetricKind metric, Provenance provenance = {})
        : metric_(metric), provenance_(std::move(provenance)) {}

    void add(TaskScore score)
    {
        if (score.metric != metric_)
            throw Error("metric mismatch: dataset is " + std::string(to_string(metric_)) + ", task \""
                        + score.task_id + "\" is " + std::string(to_string(score.metric)));
        if (index_.contains(score.task_id))
            throw Error("duplicate task_id \"" + score.task_id + "\" in dataset");
        index_.emplace(score.task_id, entries_.size());
        entries_.push_back(std::move(score));
    }

    const TaskScore* find(const std::string& id) const
    {
        auto it = index_.find(id);
        return it == index_.end() ? nullptr : &entries_[it->second];
    }

    const TaskScore& at(const std::string& id) const
    {
        if (const auto* s = find(id))
            return *s;
        throw Error("task \"" + id + "\" not in dataset");
    }

    bool contains(const std::string& id) const { return index_.contains(id); }
    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }
    auto begin() const noexcept { return entries_.begin(); }
    auto end() const noexcept { return entries_.end(); }
    const std::vector<TaskScore>& entries() const noexcept { return entries_; }
    MetricKind metric() const noexcept { return metric_; }
    const Provenance& provenance() const noexcept { return provenance_; }

    std::vector<std::string> sorted_ids() const
    {
        std::vector<std::string> ids;
        ids.reserve(index_.size());
        for (const auto& [id, _] : index_)
            ids.push_back(id);
        return ids;
    }

    bool operator==(const PerfDataset& o) const
    {
        return metric_ == o.metric_ && provenance_ == o.provenance_ && entries_ == o.entries_;
    }

private:
    MetricKind metric_ = MetricKind::RougeL;
    Provenance provenance_;
    std::vector<TaskScore> entries_;
    std::map<std::string, std::size_t> index_;
};

// Joins task instructions with per-task scores. Every task needs exactly one
// score under `metric`.
inline PerfDataset build_dataset(const TaskSet& tasks, std::span<const ScoreRecord> scores, MetricKind metric,
                                 Provenance provenance = {})
{
    std::map<std::string, const ScoreRecord*> by_id;
    for (const auto& s : scores) {
        if (s.metric != metric)
            throw Error("metric mismatch: expected " + std::string(to_string(metric)) + ", score for \"" + s.task_id
                        + "\" is " + std::string(to_string(s.metric)));
        if (!tasks.contains(s.task_id))
            throw Error("score for unknown task \"" + s.task_id + "\"");
        if (!by_id.emplace(s.task_id, &s).second)
            throw Error("duplicate score for task \"" + s.task_id + "\"");
    }
    if (provenance.tasks.empty())
        provenance.tasks = tasks.source().string();
    PerfDataset ds(metric, std::move(provenance));
    for (const auto& task : tasks) {
        auto it = by_id.find(task.task_id);
        if (it == by_id.end())
            throw Error("no " + std::string(to_string(metric)) + " score for task \"" + task.task_id + "\"");
        ds.add({task.task_id, task.instruction, metric, it->second->value, it->second->n_instances});
    }
    return ds;
}

inline PerfDataset build_dataset(std::span<const TaskScore> scores, MetricKind metric, Provenance provenance = {})
{
    PerfDataset ds(metric, std::move(provenance));
    for (const auto& s : scores)
        ds.add(s);
    return ds;
}

// Dataset file (JSON): {"metric", "provenance": {"tasks", "generations"},
// "entries": [{"task_id", "instruction", "value", "n_instances"}]}
inline json to_json(const PerfDataset& ds)
{
    json entries = json::array();
    for (const auto& s : ds)
        entries.push_back(
            {{"task_id", s.task_id}, {"instruction", s.instruction}, {"value", s.value}, {"n_instances", s.n_instances}});
    return {{"metric", to_string(ds.metric())},
            {"provenance", {{"tasks", ds.provenance().tasks}, {"generations", ds.provenance().generations}}},
            {"entries", std::move(entries)}};
}

inline PerfDataset dataset_from_json(const json& doc, const std::string& where)
{
    if (!doc.is_object())
        throw SchemaError(where + ": expected a JSON object");
    MetricKind metric;
    try {
        metric = parse_metric(detail::require_string(doc, "metric", where));
    } catch (const SchemaError&) {
        throw;
    } catch (const Error& e) {
        throw SchemaError(where + ": " + e.what());
    }
    Provenance prov;
    if (auto it = doc.find("provenance"); it != doc.end() && it->is_object()) {
        prov.tasks = it->value("tasks", "");
        prov.generations = it->value("generations", "");
    }
    PerfDataset ds(metric, prov);
    const auto& entries = detail::require_field(doc, "entries", where);
    if (!entries.is_array())
        throw SchemaError(where + ": \"entries\" must be an array");
    for (const auto& e : entries) {
        TaskScore s;
        s.task_id = detail::require_string(e, "task_id", where);
        s.instruction = detail::require_string(e, "instruction", where);
        s.metric = metric;
        s.value = detail::require_number(e, "value", where);
        if (!in_range(metric, s.value))
            throw SchemaError(where + ": value out of range for task \"" + s.task_id + "\"");
        s.n_instances = e.value("n_instances", std::size_t{1});
        try {
            ds.add(std::move(s));
        } catch (const Error& err) {
            throw SchemaError(where + ": " + err.what());
        }
    }
    return ds;
}

inline void save_dataset(const std::filesystem::path& path, const PerfDataset& ds)
{
    atomic_write(path, to_json(ds).dump(2) + "\n");
}

inline PerfDataset load_dataset(const std::filesystem::path& path)
{
    json doc;
    try {
        doc = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw ParseError(path.string(), 1, std::string("malformed JSON: ") + e.what());
    }
    return dataset_from_json(doc, path.string());
}

using Fractions = std::array<double, 3>; // train, val, test

inline constexpr Fractions kDefaultFractions{0.8, 0.1, 0.1};

struct SplitPlan {
    std::int64_t seed = 0;
    Fractions fractions = kDefaultFractions;
    std::vector<std::string> train; // each part sorted
    std::vector<std::string> val;
    std::vector<std::string> test;

    std::size_t size() const { return train.size() + val.size() + test.size(); }
    bool operator==(const SplitPlan&) const = default;
};

struct SplitSizes {
    std::size_t train = 0;
    std::size_t val = 0;
    std::size_t test = 0;
};

// |val| and |test| are round-half-up of fraction * n, floored at one task each;
// train takes the remainder and must be non-empty.
inline SplitSizes split_sizes(std::size_t n, const Fractions& fractions = kDefaultFractions)
{
    for (double f : fractions)
        if (!(f > 0.0) || !std::isfinite(f))
            throw Error("split fractions must be positive");
    if (std::abs(fractions[0] + fractions[1] + fractions[2] - 1.0) > 1e-9)
        throw Error("split fractions must sum to 1");
    auto part = [n](double f) {
        // The epsilon keeps exact halves (e.g. 0.1 * 5) from rounding down.
        const auto r = static_cast<std::size_t>(std::floor(f * static_cast<double>(n) + 0.5 + 1e-9));
        return std::max<std::size_t>(r, 1);
    };
    SplitSizes s;
    s.val = part(fractions[1]);
    s.test = part(fractions[2]);
    if (n < 3 || s.val + s.test >= n)
        throw Error("dataset of " + std::to_string(n) + " tasks is too small to give each split part at least one task");
    s.train = n - s.val - s.test;
    return s;
}

// Plan i shuffles the sorted task ids with Pcg32(seed + i) and takes
// test | val | train from the front in that order.
inline SplitPlan make_split(std::vector<std::string> ids, std::int64_t seed, const Fractions& fractions = kDefaultFractions)
{
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
        throw Error("duplicate task ids given to make_split");
    const auto sizes = split_sizes(ids.size(), fractions);
    Pcg32 rng(static_cast<std::uint64_t>(seed));
    pcg_shuffle(std::span<std::string>(ids), rng);

    SplitPlan plan;
    plan.seed = seed;
    plan.fractions = fractions;
    auto first = ids.begin();
    plan.test.assign(first, first + static_cast<std::ptrdiff_t>(sizes.test));
    first += static_cast<std::ptrdiff_t>(sizes.test);
    plan.val.assign(first, first + static_cast<std::ptrdiff_t>(sizes.val));
    first += static_cast<std::ptrdiff_t>(sizes.val);
    plan.train.assign(first, ids.end());
    std::sort(plan.train.begin(), plan.train.end());
    std::sort(plan.val.begin(), plan.val.end());
    std::sort(plan.test.begin(), plan.test.end());
    return plan;
}

inline std::vector<SplitPlan> make_splits(const PerfDataset& dataset, std::size_t n_splits, std::int64_t seed,
                                          const Fractions& fractions = kDefaultFractions)
{
    if (n_splits < 1)
        throw Error("n_splits must be at least 1");
    const auto ids = dataset.sorted_ids();
    std::vector<SplitPlan> plans;
    plans.reserve(n_splits);
    for (std::size_t i = 0; i < n_splits; ++i)
        plans.push_back(make_split(ids, seed + static_cast<std::int64_t>(i), fractions));
    return plans;
}

// Adds every task of `extra` to the training part only.
inline SplitPlan augment_train(const SplitPlan& plan, const PerfDataset& extra, MetricKind metric)
{
    if (extra.empty())
        return plan;
    if (extra.metric() != metric)
        throw Error("metric mismatch: plan dataset is " + std::string(to_string(metric)) + ", augmentation is "
                    + std::string(to_string(extra.metric())));
    std::set<std::string> existing;
    existing.insert(plan.train.begin(), plan.train.end());
    existing.insert(plan.val.begin(), plan.val.end());
    existing.insert(plan.test.begin(), plan.test.end());
    SplitPlan out = plan;
    for (const auto& s : extra) {
        if (existing.contains(s.task_id))
            throw Error("augmentation task id \"" + s.task_id + "\" collides with the split's dataset");
        out.train.push_back(s.task_id);
    }
    std::sort(out.train.begin(), out.train.end());
    return out;
}

// Split file (JSON): {"seed", "fractions", "train", "val", "test"}.
inline json to_json(const SplitPlan& plan)
{
    return {{"seed", plan.seed},
            {"fractions", plan.fractions},
            {"train", plan.train},
            {"val", plan.val},
            {"test", plan.test}};
}

inline SplitPlan plan_from_json(const json& doc, const std::string& where)
{
    if (!doc.is_object())
        throw SchemaError(where + ": expected a JSON object");
    SplitPlan plan;
    const auto& seed = detail::require_field(doc, "seed", where);
    if (!seed.is_number_integer())
        throw SchemaError(where + ": \"seed\" must be an integer");
    plan.seed = seed.get<std::int64_t>();
    if (auto it = doc.find("fractions"); it != doc.end()) {
        if (!it->is_array() || it->size() != 3)
            throw SchemaError(where + ": \"fractions\" must have three entries");
        for (std::size_t i = 0; i < 3; ++i)
            plan.fractions[i] = (*it)[i].get<double>();
    }
    auto part = [&](const char* key) {
        auto ids = detail::string_array(detail::require_field(doc, key, where), where, key);
        std::sort(ids.begin(), ids.end());
        return ids;
    };
    plan.train = part("train");
    plan.val = part("val");
    plan.test = part("test");
    std::set<std::string> all;
    for (const auto* p : {&plan.train, &plan.val, &plan.test})
        for (const auto& id : *p)
            if (!all.insert(id).second)
                throw SchemaError(where + ": task \"" + id + "\" appears in more than one split part");
    return plan;
}

inline void save_plan(const std::filesystem::path& path, const SplitPlan& plan)
{
    atomic_write(path, to_json(plan).dump(2) + "\n");
}

inline SplitPlan load_plan(const std::filesystem::path& path)
{
    json doc;
    try {
        doc = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw ParseError(path.string(), 1, std::string("malformed JSON: ") + e.what());
    }
    return plan_from_json(doc, path.string());
}

} // namespace taskcast
