#pragma once

// Instance- and task-level evaluation metrics: Exact Match, ROUGE-L (LCS F1)
// and average per-token cross-entropy loss.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "taskcast/corpus.hpp"
#include "taskcast/error.hpp"
#include "taskcast/io.hpp"

namespace taskcast {

enum class MetricKind { ExactMatch, RougeL, AvgTokenLoss };

inline std::string_view to_string(MetricKind kind)
{
    switch (kind) {
    case MetricKind::ExactMatch: return "exact_match";
    case MetricKind::RougeL: return "rouge_l";
    case MetricKind::AvgTokenLoss: return "avg_token_loss";
    }
    return "?";
}

inline MetricKind parse_metric(std::string_view name)
{
    if (name == "exact_match")
        return MetricKind::ExactMatch;
    if (name == "rouge_l")
        return MetricKind::RougeL;
    if (name == "avg_token_loss")
        return MetricKind::AvgTokenLoss;
    throw Error("unknown metric \"" + std::string(name) + "\" (expected exact_match, rouge_l or avg_token_loss)");
}

// ExactMatch and RougeL live in [0, 100]; AvgTokenLoss in [0, inf).
inline bool is_percent_metric(MetricKind kind) { return kind != MetricKind::AvgTokenLoss; }

inline double clamp_to_range(MetricKind kind, double v)
{
    if (std::isnan(v))
        return 0.0;
    v = std::max(v, 0.0);
    return is_percent_metric(kind) ? std::min(v, 100.0) : v;
}

inline bool in_range(MetricKind kind, double v)
{
    return std::isfinite(v) && v >= 0.0 && (!is_percent_metric(kind) || v <= 100.0);
}

struct NormalizationPolicy {
    bool lowercase = true;
    bool strip_punctuation = true; // non-alphanumeric codepoints become spaces
    bool collapse_whitespace = true;

    bool operator==(const NormalizationPolicy&) const = default;
};

inline json to_json(const NormalizationPolicy& p)
{
    return {{"lowercase", p.lowercase},
            {"strip_punctuation", p.strip_punctuation},
            {"collapse_whitespace", p.collapse_whitespace}};
}

inline NormalizationPolicy policy_from_json(const json& obj)
{
    NormalizationPolicy p;
    if (!obj.is_object())
        throw SchemaError("normalization must be an object");
    p.lowercase = obj.value("lowercase", true);
    p.strip_punctuation = obj.value("strip_punctuation", true);
    p.collapse_whitespace = obj.value("collapse_whitespace", true);
    return p;
}

namespace text {

constexpr char32_t kInvalid = 0xFFFFFFFF;

// Decodes UTF-8; malformed sequences decode to kInvalid, one per bad byte.
inline std::u32string decode_utf8(std::string_view s)
{
    std::u32string out;
    out.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size()) {
        const auto b0 = static_cast<unsigned char>(s[i]);
        int len = 0;
        char32_t cp = 0;
        if (b0 < 0x80) {
            len = 1;
            cp = b0;
        } else if ((b0 & 0xE0) == 0xC0) {
            len = 2;
            cp = b0 & 0x1F;
        } else if ((b0 & 0xF0) == 0xE0) {
            len = 3;
            cp = b0 & 0x0F;
        } else if ((b0 & 0xF8) == 0xF0) {
            len = 4;
            cp = b0 & 0x07;
        }
        bool ok = len > 0 && i + static_cast<std::size_t>(len) <= s.size();
        for (int k = 1; ok && k < len; ++k) {
            const auto b = static_cast<unsigned char>(s[i + k]);
            if ((b & 0xC0) != 0x80)
                ok = false;
            else
                cp = (cp << 6) | (b & 0x3F);
        }
        static constexpr char32_t kMin[] = {0, 0, 0x80, 0x800, 0x10000};
        if (ok && (cp < kMin[len] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)))
            ok = false;
        if (!ok) {
            out.push_back(kInvalid);
            ++i;
            continue;
        }
        out.push_back(cp);
        i += static_cast<std::size_t>(len);
    }
    return out;
}

inline void append_utf8(std::string& out, char32_t cp)
{
    if (cp < 0x80) {
        out += static_cast<char>(cp);
    } else if (cp < 0x800) {
        out += static_cast<char>(0xC0 | (cp >> 6));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else if (cp < 0x10000) {
        out += static_cast<char>(0xE0 | (cp >> 12));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else {
        out += static_cast<char>(0xF0 | (cp >> 18));
        out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    }
}

inline bool is_space(char32_t c)
{
    return c == U' ' || (c >= U'\t' && c <= U'\r') || c == 0x85 || c == 0xA0 || c == 0x1680
           || (c >= 0x2000 && c <= 0x200B) || c == 0x2028 || c == 0x2029 || c == 0x202F || c == 0x205F
           || c == 0x3000;
}

// ASCII is classified exactly; outside ASCII, codepoints in the punctuation,
// symbol and space blocks are non-alphanumeric and everything else counts as a
// letter.
inline bool is_alnum(char32_t c)
{
    if (c < 0x80)
        return (c >= U'0' && c <= U'9') || (c >= U'a' && c <= U'z') || (c >= U'A' && c <= U'Z');
    if (c == kInvalid)
        return false;
    if (c <= 0xBF || c == 0xD7 || c == 0xF7)
        return false;
    if (c >= 0x2000 && c <= 0x2BFF)
        return false;
    if ((c >= 0x3000 && c <= 0x303F) || (c >= 0xFE30 && c <= 0xFE4F))
        return false;
    if ((c >= 0xFF00 && c <= 0xFF0F) || (c >= 0xFF1A && c <= 0xFF20) || (c >= 0xFF3B && c <= 0xFF40)
        || (c >= 0xFF5B && c <= 0xFF65))
        return false;
    return true;
}

inline char32_t to_lower(char32_t c)
{
    if (c >= U'A' && c <= U'Z')
        return c + 0x20;
    if (c < 0xC0)
        return c;
    if (c <= 0xDE && c != 0xD7)
        return c + 0x20;
    if (c >= 0x100 && c <= 0x137)
        return (c == 0x130) ? U'i' : (c | 1u);
    if ((c >= 0x139 && c <= 0x148) || (c >= 0x179 && c <= 0x17E))
        return (c & 1u) ? c + 1 : c;
    if (c >= 0x14A && c <= 0x177)
        return c | 1u;
    if (c == 0x178)
        return 0xFF;
    if (c >= 0x391 && c <= 0x3A9 && c != 0x3A2)
        return c + 0x20;
    if (c >= 0x400 && c <= 0x40F)
        return c + 0x50;
    if (c >= 0x410 && c <= 0x42F)
        return c + 0x20;
    return c;
}

} // namespace text

// Tokenizes `s` under `policy`. With the default policy: lowercase, map every
// non-alphanumeric codepoint to a space, split on whitespace runs. Without
// collapse_whitespace every whitespace codepoint separates, so runs yield
// empty tokens.
inline std::vector<std::string> normalize(std::string_view s, const NormalizationPolicy& policy = {})
{
    std::vector<std::string> tokens;
    std::string current;
    bool pending = false; // a token (possibly empty) is open
    for (char32_t c : text::decode_utf8(s)) {
        if (policy.lowercase)
            c = text::to_lower(c);
        bool sep = text::is_space(c);
        if (!sep && policy.strip_punctuation && !text::is_alnum(c))
            sep = true;
        if (sep) {
            if (policy.collapse_whitespace) {
                if (!current.empty())
                    tokens.push_back(std::move(current));
            } else {
                tokens.push_back(std::move(current));
            }
            current.clear();
            pending = !policy.collapse_whitespace;
            continue;
        }
        text::append_utf8(current, c == text::kInvalid ? char32_t{0xFFFD} : c);
        pending = true;
    }
    if (!current.empty() || (pending && !policy.collapse_whitespace))
        tokens.push_back(std::move(current));
    return tokens;
}

inline std::string join_tokens(const std::vector<std::string>& tokens)
{
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i)
            out += ' ';
        out += tokens[i];
    }
    return out;
}

// Returns 100 when the normalized candidate equals any normalized reference,
// else 0.
inline double exact_match(std::string_view candidate, std::span<const std::string> references,
                          const NormalizationPolicy& policy = {})
{
    const auto cand = normalize(candidate, policy);
    for (const auto& ref : references)
        if (normalize(ref, policy) == cand)
            return 100.0;
    return 0.0;
}

// Longest common subsequence length, O(|a|*|b|) time and O(|b|) memory.
template <typename T>
std::size_t lcs_length(std::span<const T> a, std::span<const T> b)
{
    if (a.empty() || b.empty())
        return 0;
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            if (a[i - 1] == b[j - 1])
                cur[j] = prev[j - 1] + 1;
            else
                cur[j] = std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

inline std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b)
{
    return lcs_length<std::string>(std::span<const std::string>(a), std::span<const std::string>(b));
}

// Sentence-level LCS F1 (beta = 1) between two token sequences, on [0, 1].
// Empty vs empty is a perfect match; empty vs non-empty scores 0.
inline double lcs_f1(const std::vector<std::string>& cand, const std::vector<std::string>& ref)
{
    if (cand.empty() && ref.empty())
        return 1.0;
    if (cand.empty() || ref.empty())
        return 0.0;
    const auto lcs = static_cast<double>(lcs_length(cand, ref));
    const double p = lcs / static_cast<double>(cand.size());
    const double r = lcs / static_cast<double>(ref.size());
    if (p + r == 0.0)
        return 0.0;
    return 2.0 * p * r / (p + r);
}

// ROUGE-L F1 scaled to [0, 100], max over references.
inline double rouge_l(std::string_view candidate, std::span<const std::string> references,
                      const NormalizationPolicy& policy = {})
{
    const auto cand = normalize(candidate, policy);
    double best = 0.0;
    for (const auto& ref : references)
        best = std::max(best, lcs_f1(cand, normalize(ref, policy)));
    return 100.0 * best;
}

// Negative mean log-probability, in nats per token.
inline double avg_token_loss(std::span<const double> logprobs)
{
    if (logprobs.empty())
        throw Error("no tokens");
    double sum = 0.0;
    for (double lp : logprobs) {
        if (!std::isfinite(lp))
            throw Error("non-finite log-prob");
        if (lp > 0.0)
            throw Error("positive log-prob");
        sum += lp;
    }
    return 0.0 - sum / static_cast<double>(logprobs.size());
}

struct TaskScore {
    std::string task_id;
    std::string instruction;
    MetricKind metric = MetricKind::RougeL;
    double value = 0.0;
    std::size_t n_instances = 0;

    bool operator==(const TaskScore&) const = default;
};

// Unweighted mean of per-instance metric values over every instance of `task`.
inline TaskScore score_task(const Task& task, const GenerationSet& gens, MetricKind metric,
                            const NormalizationPolicy& policy = {})
{
    double sum = 0.0;
    for (const auto& inst : task.instances) {
        const auto* rec = gens.find(task.task_id, inst.instance_id);
        if (!rec)
            throw Error("missing generation for (" + task.task_id + ", " + inst.instance_id + ")");
        switch (metric) {
        case MetricKind::ExactMatch:
            sum += exact_match(rec->output, inst.references, policy);
            break;
        case MetricKind::RougeL:
            sum += rouge_l(rec->output, inst.references, policy);
            break;
        case MetricKind::AvgTokenLoss:
            if (!rec->token_logprobs)
                throw Error("missing token_logprobs for (" + task.task_id + ", " + inst.instance_id + ")");
            try {
                sum += avg_token_loss(*rec->token_logprobs);
            } catch (const Error& e) {
                throw Error(std::string(e.what()) + " for (" + task.task_id + ", " + inst.instance_id + ")");
            }
            break;
        }
    }
    const auto n = task.instances.size();
    return {task.task_id, task.instruction, metric, sum / static_cast<double>(n), n};
}

inline std::vector<TaskScore> score_tasks(const TaskSet& tasks, const GenerationSet& gens, MetricKind metric,
                                          const NormalizationPolicy& policy = {})
{
    std::vector<TaskScore> out;
    out.reserve(tasks.size());
    for (const auto& task : tasks)
        out.push_back(score_task(task, gens, metric, policy));
    return out;
}

// Scores file (JSONL):
//   {"task_id", "metric", "value", "n_instances", "normalization": {...}}
struct ScoreRecord {
    std::string task_id;
    MetricKind metric = MetricKind::RougeL;
    double value = 0.0;
    std::size_t n_instances = 0;
    NormalizationPolicy normalization;
};

inline std::string scores_to_jsonl(std::span<const TaskScore> scores, const NormalizationPolicy& policy)
{
    std::string out;
    for (const auto& s : scores) {
        json row{{"task_id", s.task_id},
                 {"metric", to_string(s.metric)},
                 {"value", s.value},
                 {"n_instances", s.n_instances},
                 {"normalization", to_json(policy)}};
        out += row.dump();
        out += '\n';
    }
    return out;
}

inline std::vector<ScoreRecord> load_scores(const std::filesystem::path& path)
{
    std::vector<ScoreRecord> out;
    for_each_jsonl(path, [&](const json& obj, std::size_t line) {
        const auto where = detail::where(path, line);
        ScoreRecord rec;
        rec.task_id = detail::require_string(obj, "task_id", where);
        try {
            rec.metric = parse_metric(detail::require_string(obj, "metric", where));
        } catch (const SchemaError&) {
            throw;
        } catch (const Error& e) {
            throw SchemaError(where + ": " + e.what());
        }
        rec.value = detail::require_number(obj, "value", where);
        if (!in_range(rec.metric, rec.value))
            throw SchemaError(where + ": value out of range for " + std::string(to_string(rec.metric)));
        const auto& n = detail::require_field(obj, "n_instances", where);
        if (!n.is_number_integer() || n.get<long long>() < 1)
            throw SchemaError(where + ": \"n_instances\" must be a positive integer");
        rec.n_instances = n.get<std::size_t>();
        if (auto it = obj.find("normalization"); it != obj.end() && !it->is_null())
            rec.normalization = policy_from_json(*it);
        out.push_back(std::move(rec));
    });
    return out;
}

} // namespace taskcast
