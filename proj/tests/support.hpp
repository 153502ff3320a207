#pragma once

// Shared fixtures for the unit and acceptance tests.

#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "taskcast/corpus.hpp"
#include "taskcast/io.hpp"
#include "taskcast/metrics.hpp"
#include "taskcast/perfdata.hpp"

namespace support {

namespace fs = std::filesystem;

class TempDir {
public:
    TempDir()
    {
        static std::mt19937_64 rng{std::random_device{}()};
        for (;;) {
            path_ = fs::temp_directory_path() / ("taskcast-test-" + std::to_string(rng()));
            if (fs::create_directory(path_))
                break;
        }
    }
    ~TempDir()
    {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
};

inline void write_text(const fs::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    out << text;
}

// Pseudo-words built from syllables, so instructions have realistic n-gram
// overlap without carrying any signal.
inline std::vector<std::string> word_pool(std::size_t n, std::uint64_t seed)
{
    static const char* syllables[] = {"ka", "lo", "mi", "ne", "ru", "ta", "vo", "si", "pe", "da",
                                      "go", "fu", "be", "zi", "ha", "wo", "ty", "qu", "ex", "an"};
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> syl(0, 19), len(2, 4);
    std::vector<std::string> words;
    while (words.size() < n) {
        std::string w;
        for (int i = len(rng); i > 0; --i)
            w += syllables[syl(rng)];
        words.push_back(w);
    }
    return words;
}

inline std::string random_instruction(std::mt19937_64& rng, const std::vector<std::string>& pool)
{
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1), len(8, 15);
    std::string s;
    for (std::size_t i = len(rng); i > 0; --i) {
        if (!s.empty())
            s += ' ';
        s += pool[pick(rng)];
    }
    return s;
}

inline std::string task_name(std::size_t i)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "task%03zu", i);
    return buf;
}

// Instructions are random text; y is independent noise in [0, 100].
inline taskcast::PerfDataset noise_dataset(std::size_t n, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    const auto pool = word_pool(500, seed ^ 0x5eed);
    std::normal_distribution<double> y(50.0, 15.0);
    taskcast::PerfDataset ds(taskcast::MetricKind::RougeL);
    for (std::size_t i = 0; i < n; ++i) {
        const auto text = random_instruction(rng, pool);
        ds.add({task_name(i), text, taskcast::MetricKind::RougeL, taskcast::clamp_to_range(taskcast::MetricKind::RougeL, y(rng)), 1});
    }
    return ds;
}

inline constexpr const char* kMarker = "xylophone";

// y = 80 when the instruction contains the marker token, else 20.
inline taskcast::PerfDataset signal_dataset(std::size_t n, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    const auto pool = word_pool(500, seed ^ 0x5eed);
    taskcast::PerfDataset ds(taskcast::MetricKind::RougeL);
    for (std::size_t i = 0; i < n; ++i) {
        auto text = random_instruction(rng, pool);
        const bool marked = rng() % 2 == 0;
        if (marked)
            text += std::string(" ") + kMarker;
        ds.add({task_name(i), text, taskcast::MetricKind::RougeL, marked ? 80.0 : 20.0, 1});
    }
    return ds;
}

// Toy corpus: `n_tasks` tasks x `n_inst` instances, with mock generations
// whose quality varies by task. Writes tasks.jsonl and gens.jsonl.
inline void write_toy_corpus(const fs::path& dir, std::size_t n_tasks, std::size_t n_inst, std::uint64_t seed = 7)
{
    std::mt19937_64 rng(seed);
    const auto pool = word_pool(200, seed);
    std::string tasks, gens;
    for (std::size_t t = 0; t < n_tasks; ++t) {
        taskcast::Task task;
        task.task_id = task_name(t);
        task.instruction = random_instruction(rng, pool);
        task.demonstrations.push_back({"example input", "example output"});
        for (std::size_t i = 0; i < n_inst; ++i) {
            taskcast::Instance inst;
            inst.instance_id = "i" + std::to_string(i);
            inst.input = random_instruction(rng, pool);
            inst.references.push_back(random_instruction(rng, pool));
            // The mock model copies a task-dependent prefix of the reference.
            const auto ref_tokens = taskcast::normalize(inst.references[0]);
            const std::size_t keep = ref_tokens.size() * ((t * 7 + i) % 11) / 10;
            std::string out;
            for (std::size_t k = 0; k < std::min(keep, ref_tokens.size()); ++k)
                out += (k ? " " : "") + ref_tokens[k];
            taskcast::GenerationRecord rec{task.task_id, inst.instance_id, out, std::vector<double>{-0.25 * (1 + (t % 5)), -0.5}};
            gens += taskcast::to_json(rec).dump() + "\n";
            task.instances.push_back(std::move(inst));
        }
        tasks += taskcast::to_json(task).dump() + "\n";
    }
    write_text(dir / "tasks.jsonl", tasks);
    write_text(dir / "gens.jsonl", gens);
}

} // namespace support
