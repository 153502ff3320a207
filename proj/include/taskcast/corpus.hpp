#pragma once

// Task corpora and generation logs.
//
// Task file (JSONL), one task per line:
//   {"task_id": str, "instruction": str, "category": str?,
//    "demonstrations": [{"input": str, "output": str}]?,
//    "instances": [{"instance_id": str, "input": str, "references": [str]}]}
//
// Generation file (JSONL), one model output per line:
//   {"task_id": str, "instance_id": str, "output": str, "token_logprobs": [float]?}

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "taskcast/error.hpp"
#include "taskcast/hash.hpp"
#include "taskcast/io.hpp"
#include "taskcast/pcg.hpp"

namespace taskcast {

struct Demonstration {
    std::string input;
    std::string output;

    bool operator==(const Demonstration&) const = default;
};

struct Instance {
    std::string instance_id;
    std::string input;
    std::vector<std::string> references;

    bool operator==(const Instance&) const = default;
};

struct Task {
    std::string task_id;
    std::string instruction;
    std::vector<Instance> instances;
    std::vector<Demonstration> demonstrations;
    std::optional<std::string> category;

    bool operator==(const Task&) const = default;
};

using InstanceKey = std::pair<std::string, std::string>; // (task_id, instance_id)

// Tasks in file order, addressable by id. Immutable once loaded.
class TaskSet {
public:
    TaskSet() = default;
    explicit TaskSet(std::filesystem::path source) : source_(std::move(source)) {}

    // Throws SchemaError on a duplicate id or a task violating its invariants.
    void add(Task task)
    {
        check(task);
        if (index_.contains(task.task_id))
            throw SchemaError("duplicate task_id \"" + task.task_id + "\"");
        index_.emplace(task.task_id, tasks_.size());
        tasks_.push_back(std::move(task));
    }

    const Task* find(const std::string& task_id) const
    {
        auto it = index_.find(task_id);
        return it == index_.end() ? nullptr : &tasks_[it->second];
    }

    const Task& at(const std::string& task_id) const
    {
        if (const Task* t = find(task_id))
            return *t;
        throw Error("unknown task_id \"" + task_id + "\"");
    }

    bool contains(const std::string& task_id) const { return index_.contains(task_id); }
    std::size_t size() const noexcept { return tasks_.size(); }
    bool empty() const noexcept { return tasks_.empty(); }
    auto begin() const noexcept { return tasks_.begin(); }
    auto end() const noexcept { return tasks_.end(); }
    const std::filesystem::path& source() const noexcept { return source_; }

    std::size_t instance_count() const
    {
        std::size_t n = 0;
        for (const auto& t : tasks_)
            n += t.instances.size();
        return n;
    }

    bool operator==(const TaskSet& other) const { return tasks_ == other.tasks_; }

    static void check(const Task& task)
    {
        const std::string who = "task \"" + task.task_id + "\"";
        if (task.task_id.empty())
            throw SchemaError("empty task_id");
        if (task.instruction.find_first_not_of(" \t\r\n\f\v") == std::string::npos)
            throw SchemaError(who + ": empty instruction");
        if (task.instances.empty())
            throw SchemaError(who + ": no instances");
        std::map<std::string, int> seen;
        for (const auto& inst : task.instances) {
            if (inst.references.empty())
                throw SchemaError(who + ", instance \"" + inst.instance_id + "\": no references");
            if (++seen[inst.instance_id] > 1)
                throw SchemaError(who + ": duplicate instance_id \"" + inst.instance_id + "\"");
        }
        for (const auto& demo : task.demonstrations)
            if (demo.output.empty())
                throw SchemaError(who + ": demonstration with empty output");
    }

private:
    std::filesystem::path source_;
    std::vector<Task> tasks_;
    std::map<std::string, std::size_t> index_;
};

struct GenerationRecord {
    std::string task_id;
    std::string instance_id;
    std::string output;
    std::optional<std::vector<double>> token_logprobs;

    InstanceKey key() const { return {task_id, instance_id}; }
    bool operator==(const GenerationRecord&) const = default;
};

// Generations keyed by (task_id, instance_id). Duplicate keys are kept aside so
// that validation can report them.
class GenerationSet {
public:
    GenerationSet() = default;
    explicit GenerationSet(std::string model_label) : model_(std::move(model_label)) {}

    // Returns false (and remembers the key as a duplicate) if already present.
    bool insert(GenerationRecord rec)
    {
        auto key = rec.key();
        auto [it, inserted] = records_.try_emplace(key, std::move(rec));
        if (!inserted)
            duplicates_.push_back(std::move(key));
        return inserted;
    }

    const GenerationRecord* find(const std::string& task_id, const std::string& instance_id) const
    {
        auto it = records_.find(InstanceKey{task_id, instance_id});
        return it == records_.end() ? nullptr : &it->second;
    }

    std::size_t size() const noexcept { return records_.size(); }
    auto begin() const noexcept { return records_.begin(); }
    auto end() const noexcept { return records_.end(); }
    const std::vector<InstanceKey>& duplicates() const noexcept { return duplicates_; }
    const std::string& model() const noexcept { return model_; }
    void set_model(std::string m) { model_ = std::move(m); }

private:
    std::string model_;
    std::map<InstanceKey, GenerationRecord> records_;
    std::vector<InstanceKey> duplicates_;
};

struct LoadOptions {
    // Keep at most this many instances per task, chosen by a seeded subsample.
    std::optional<std::size_t> max_instances_per_task;
    std::uint64_t seed = 0;
};

namespace detail {

inline std::vector<std::string> string_array(const json& v, const std::string& where, const char* name)
{
    if (!v.is_array())
        throw SchemaError(where + ": \"" + name + "\" must be an array of strings");
    std::vector<std::string> out;
    out.reserve(v.size());
    for (const auto& s : v) {
        if (!s.is_string())
            throw SchemaError(where + ": \"" + name + "\" must be an array of strings");
        out.push_back(s.get<std::string>());
    }
    return out;
}

inline Task task_from_json(const json& obj, const std::string& where)
{
    Task task;
    task.task_id = require_string(obj, "task_id", where);
    if (task.task_id.empty())
        throw SchemaError(where + ": empty task_id");
    task.instruction = require_string(obj, "instruction", where);
    if (task.instruction.find_first_not_of(" \t\r\n\f\v") == std::string::npos)
        throw SchemaError(where + ": empty instruction");

    if (auto it = obj.find("category"); it != obj.end() && !it->is_null()) {
        if (!it->is_string())
            throw SchemaError(where + ": \"category\" must be a string");
        task.category = it->get<std::string>();
    }

    if (auto it = obj.find("demonstrations"); it != obj.end() && !it->is_null()) {
        if (!it->is_array())
            throw SchemaError(where + ": \"demonstrations\" must be an array");
        for (const auto& d : *it) {
            if (!d.is_object())
                throw SchemaError(where + ": demonstration must be an object");
            Demonstration demo{require_string(d, "input", where), require_string(d, "output", where)};
            if (demo.output.empty())
                throw SchemaError(where + ": demonstration with empty output");
            task.demonstrations.push_back(std::move(demo));
        }
    }

    const auto& instances = require_field(obj, "instances", where);
    if (!instances.is_array())
        throw SchemaError(where + ": \"instances\" must be an array");
    for (const auto& i : instances) {
        if (!i.is_object())
            throw SchemaError(where + ": instance must be an object");
        Instance inst;
        inst.instance_id = require_string(i, "instance_id", where);
        inst.input = require_string(i, "input", where);
        inst.references = string_array(require_field(i, "references", where), where, "references");
        if (inst.references.empty())
            throw SchemaError(where + ": instance \"" + inst.instance_id + "\" has no references");
        task.instances.push_back(std::move(inst));
    }
    if (task.instances.empty())
        throw SchemaError(where + ": no instances");
    return task;
}

inline void subsample_instances(Task& task, std::size_t cap, std::uint64_t seed)
{
    if (task.instances.size() <= cap)
        return;
    std::vector<std::size_t> order(task.instances.size());
    for (std::size_t i = 0; i < order.size(); ++i)
        order[i] = i;
    Pcg32 rng(seed, fnv1a64(task.task_id));
    pcg_shuffle(std::span<std::size_t>(order), rng);
    order.resize(cap);
    std::sort(order.begin(), order.end());
    std::vector<Instance> kept;
    kept.reserve(cap);
    for (auto idx : order)
        kept.push_back(std::move(task.instances[idx]));
    task.instances = std::move(kept);
}

} // namespace detail

inline json to_json(const Task& task)
{
    json obj;
    obj["task_id"] = task.task_id;
    obj["instruction"] = task.instruction;
    if (task.category)
        obj["category"] = *task.category;
    json demos = json::array();
    for (const auto& d : task.demonstrations)
        demos.push_back({{"input", d.input}, {"output", d.output}});
    obj["demonstrations"] = std::move(demos);
    json insts = json::array();
    for (const auto& i : task.instances)
        insts.push_back({{"instance_id", i.instance_id}, {"input", i.input}, {"references", i.references}});
    obj["instances"] = std::move(insts);
    return obj;
}

inline json to_json(const GenerationRecord& rec)
{
    json obj{{"task_id", rec.task_id}, {"instance_id", rec.instance_id}, {"output", rec.output}};
    if (rec.token_logprobs)
        obj["token_logprobs"] = *rec.token_logprobs;
    return obj;
}

inline TaskSet load_tasks(const std::filesystem::path& path, const LoadOptions& opts = {})
{
    TaskSet set(path);
    std::map<std::string, std::size_t> first_line;
    for_each_jsonl(path, [&](const json& obj, std::size_t line) {
        const auto where = detail::where(path, line);
        Task task = detail::task_from_json(obj, where);
        if (auto it = first_line.find(task.task_id); it != first_line.end())
            throw SchemaError(where + ": duplicate task_id \"" + task.task_id + "\" (lines "
                              + std::to_string(it->second) + " and " + std::to_string(line) + ")");
        first_line.emplace(task.task_id, line);
        if (opts.max_instances_per_task)
            detail::subsample_instances(task, *opts.max_instances_per_task, opts.seed);
        try {
            set.add(std::move(task));
        } catch (const SchemaError& e) {
            throw SchemaError(where + ": " + e.what());
        }
    });
    return set;
}

inline std::string tasks_to_jsonl(const TaskSet& tasks)
{
    std::string out;
    for (const auto& t : tasks) {
        out += to_json(t).dump();
        out += '\n';
    }
    return out;
}

inline void write_tasks(const std::filesystem::path& path, const TaskSet& tasks)
{
    atomic_write(path, tasks_to_jsonl(tasks));
}

namespace detail {

inline GenerationRecord generation_from_json(const json& obj, const std::string& where)
{
    GenerationRecord rec;
    rec.task_id = require_string(obj, "task_id", where);
    rec.instance_id = require_string(obj, "instance_id", where);
    rec.output = require_string(obj, "output", where);
    if (auto it = obj.find("token_logprobs"); it != obj.end() && !it->is_null()) {
        if (!it->is_array())
            throw SchemaError(where + ": \"token_logprobs\" must be an array");
        std::vector<double> lps;
        lps.reserve(it->size());
        for (const auto& v : *it) {
            if (!v.is_number())
                throw SchemaError(where + ": non-numeric log-prob");
            const double lp = v.get<double>();
            if (!std::isfinite(lp))
                throw SchemaError(where + ": non-finite log-prob");
            if (lp > 0.0)
                throw SchemaError(where + ": positive log-prob " + v.dump());
            lps.push_back(lp);
        }
        rec.token_logprobs = std::move(lps);
    }
    return rec;
}

} // namespace detail

// Reads a generation file without resolving ids against a task set. Duplicate
// keys are kept in GenerationSet::duplicates().
inline GenerationSet read_generations(const std::filesystem::path& path, std::string model_label = {})
{
    GenerationSet gens(model_label.empty() ? path.stem().string() : std::move(model_label));
    for_each_jsonl(path, [&](const json& obj, std::size_t line) {
        gens.insert(detail::generation_from_json(obj, detail::where(path, line)));
    });
    return gens;
}

// Strict load: every record must resolve to an instance of `tasks` and appear
// once.
inline GenerationSet load_generations(const std::filesystem::path& path, const TaskSet& tasks,
                                      std::string model_label = {})
{
    GenerationSet gens(model_label.empty() ? path.stem().string() : std::move(model_label));
    for_each_jsonl(path, [&](const json& obj, std::size_t line) {
        const auto where = detail::where(path, line);
        auto rec = detail::generation_from_json(obj, where);
        const Task* task = tasks.find(rec.task_id);
        if (!task)
            throw SchemaError(where + ": unknown task_id \"" + rec.task_id + "\"");
        const bool known = std::any_of(task->instances.begin(), task->instances.end(),
                                       [&](const Instance& i) { return i.instance_id == rec.instance_id; });
        if (!known)
            throw SchemaError(where + ": unknown instance_id \"" + rec.instance_id + "\" for task \""
                              + rec.task_id + "\"");
        const auto key = rec.key();
        if (!gens.insert(std::move(rec)))
            throw SchemaError(where + ": duplicate generation for (" + key.first + ", " + key.second + ")");
    });
    return gens;
}

inline std::string generations_to_jsonl(const GenerationSet& gens)
{
    std::string out;
    for (const auto& [key, rec] : gens) {
        out += to_json(rec).dump();
        out += '\n';
    }
    return out;
}

struct ValidationReport {
    struct TaskCoverage {
        std::size_t instances = 0;
        std::size_t covered = 0;
    };

    std::vector<InstanceKey> missing;
    std::vector<InstanceKey> orphans;
    std::vector<InstanceKey> duplicates;
    std::map<std::string, TaskCoverage> per_task;

    std::size_t issue_count() const { return missing.size() + orphans.size() + duplicates.size(); }
    bool ok() const { return issue_count() == 0; }
};

inline ValidationReport validate(const TaskSet& tasks, const GenerationSet& gens)
{
    ValidationReport report;
    for (const auto& task : tasks) {
        auto& cov = report.per_task[task.task_id];
        cov.instances = task.instances.size();
        for (const auto& inst : task.instances) {
            if (gens.find(task.task_id, inst.instance_id))
                ++cov.covered;
            else
                report.missing.emplace_back(task.task_id, inst.instance_id);
        }
    }
    for (const auto& [key, rec] : gens) {
        const Task* task = tasks.find(key.first);
        const bool known = task && std::any_of(task->instances.begin(), task->instances.end(),
                                               [&](const Instance& i) { return i.instance_id == key.second; });
        if (!known)
            report.orphans.push_back(key);
    }
    report.duplicates = gens.duplicates();
    return report;
}

inline json to_json(const ValidationReport& report)
{
    auto pairs = [](const std::vector<InstanceKey>& keys) {
        json arr = json::array();
        for (const auto& [t, i] : keys)
            arr.push_back({{"task_id", t}, {"instance_id", i}});
        return arr;
    };
    json per_task = json::object();
    for (const auto& [id, cov] : report.per_task)
        per_task[id] = {{"instances", cov.instances}, {"covered", cov.covered}};
    return {{"ok", report.ok()},
            {"issues", report.issue_count()},
            {"missing", pairs(report.missing)},
            {"orphans", pairs(report.orphans)},
            {"duplicates", pairs(report.duplicates)},
            {"per_task", std::move(per_task)}};
}

// Converts one Super-NaturalInstructions task file (nested JSON with
// "Definition", "Positive Examples", "Instances") into a Task. The task id is
// the file stem.
inline Task ingest_superni(const std::filesystem::path& path)
{
    json doc;
    try {
        doc = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw ParseError(path.string(), 1, std::string("malformed JSON: ") + e.what());
    }
    const std::string where = path.string();
    if (!doc.is_object())
        throw SchemaError(where + ": expected a JSON object");

    Task task;
    task.task_id = path.stem().string();

    const auto& def = detail::require_field(doc, "Definition", where);
    if (def.is_array()) {
        auto parts = detail::string_array(def, where, "Definition");
        for (std::size_t i = 0; i < parts.size(); ++i)
            task.instruction += (i ? "\n" : "") + parts[i];
    } else if (def.is_string()) {
        task.instruction = def.get<std::string>();
    } else {
        throw SchemaError(where + ": \"Definition\" must be a string or array of strings");
    }

    if (auto it = doc.find("Categories"); it != doc.end() && it->is_array() && !it->empty() && (*it)[0].is_string())
        task.category = (*it)[0].get<std::string>();

    if (auto it = doc.find("Positive Examples"); it != doc.end() && it->is_array()) {
        for (const auto& ex : *it) {
            if (!ex.is_object())
                continue;
            Demonstration demo{detail::require_string(ex, "input", where), detail::require_string(ex, "output", where)};
            if (!demo.output.empty())
                task.demonstrations.push_back(std::move(demo));
        }
    }

    const auto& instances = detail::require_field(doc, "Instances", where);
    if (!instances.is_array())
        throw SchemaError(where + ": \"Instances\" must be an array");
    for (const auto& i : instances) {
        Instance inst;
        inst.instance_id = detail::require_string(i, "id", where);
        inst.input = detail::require_string(i, "input", where);
        const auto& out = detail::require_field(i, "output", where);
        if (out.is_string())
            inst.references = {out.get<std::string>()};
        else
            inst.references = detail::string_array(out, where, "output");
        task.instances.push_back(std::move(inst));
    }
    TaskSet::check(task);
    return task;
}

} // namespace taskcast
