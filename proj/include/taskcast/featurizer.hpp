#pragma once

// TF-IDF text features for instructions: word and character n-grams over the
// normalized token stream, smoothed idf, L2-normalized rows.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "taskcast/error.hpp"
#include "taskcast/io.hpp"
#include "taskcast/linalg.hpp"
#include "taskcast/metrics.hpp"

namespace taskcast {

struct NgramRange {
    std::size_t min = 0; // 0 disables the family
    std::size_t max = 0;

    bool enabled() const { return min > 0 && max >= min; }
    bool operator==(const NgramRange&) const = default;
};

struct FeaturizerConfig {
    NgramRange word{1, 2};
    NgramRange chars{3, 5};
    std::size_t min_df = 1;
    bool sublinear_tf = false;

    // e.g. "w1-2+c3-5", "w1-1", "c2-4+df2+sub"
    std::string name() const
    {
        std::string s;
        if (word.enabled())
            s += "w" + std::to_string(word.min) + "-" + std::to_string(word.max);
        if (chars.enabled())
            s += (s.empty() ? "c" : "+c") + std::to_string(chars.min) + "-" + std::to_string(chars.max);
        if (min_df > 1)
            s += "+df" + std::to_string(min_df);
        if (sublinear_tf)
            s += "+sub";
        return s;
    }

    bool operator==(const FeaturizerConfig&) const = default;
};

// Inverse of FeaturizerConfig::name().
inline FeaturizerConfig parse_featurizer_config(std::string_view name)
{
    FeaturizerConfig c;
    c.word = {};
    c.chars = {};
    auto bad = [&] { return Error("bad featurizer spec \"" + std::string(name) + "\""); };
    auto range = [&](std::string_view r) {
        const auto dash = r.find('-');
        if (dash == std::string_view::npos)
            throw bad();
        try {
            NgramRange out{std::stoul(std::string(r.substr(0, dash))), std::stoul(std::string(r.substr(dash + 1)))};
            if (!out.enabled())
                throw bad();
            return out;
        } catch (const std::logic_error&) {
            throw bad();
        }
    };
    std::size_t pos = 0;
    while (pos <= name.size()) {
        auto end = name.find('+', pos);
        if (end == std::string_view::npos)
            end = name.size();
        const auto part = name.substr(pos, end - pos);
        if (part.starts_with("df")) {
            try {
                c.min_df = std::stoul(std::string(part.substr(2)));
            } catch (const std::logic_error&) {
                throw bad();
            }
        } else if (part == "sub") {
            c.sublinear_tf = true;
        } else if (part.starts_with("w")) {
            c.word = range(part.substr(1));
        } else if (part.starts_with("c")) {
            c.chars = range(part.substr(1));
        } else {
            throw bad();
        }
        pos = end + 1;
    }
    if (!c.word.enabled() && !c.chars.enabled())
        throw bad();
    if (c.min_df < 1)
        throw bad();
    return c;
}

inline json to_json(const FeaturizerConfig& c)
{
    return {{"word_ngram", {c.word.min, c.word.max}},
            {"char_ngram", {c.chars.min, c.chars.max}},
            {"min_df", c.min_df},
            {"sublinear_tf", c.sublinear_tf}};
}

inline FeaturizerConfig featurizer_config_from_json(const json& j)
{
    FeaturizerConfig c;
    c.word = {j.at("word_ngram").at(0).get<std::size_t>(), j.at("word_ngram").at(1).get<std::size_t>()};
    c.chars = {j.at("char_ngram").at(0).get<std::size_t>(), j.at("char_ngram").at(1).get<std::size_t>()};
    c.min_df = j.at("min_df").get<std::size_t>();
    c.sublinear_tf = j.at("sublinear_tf").get<bool>();
    return c;
}

// Term multiset of one document. Keys carry a kind prefix: "w:" for word
// n-grams, "c:" for character n-grams.
inline std::map<std::string, std::size_t> extract_terms(std::string_view text, const FeaturizerConfig& config)
{
    std::map<std::string, std::size_t> counts;
    const auto tokens = normalize(text);
    if (config.word.enabled()) {
        for (std::size_t n = config.word.min; n <= config.word.max; ++n) {
            for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
                std::string key = "w:";
                for (std::size_t k = 0; k < n; ++k) {
                    if (k)
                        key += ' ';
                    key += tokens[i + k];
                }
                ++counts[key];
            }
        }
    }
    if (config.chars.enabled() && !tokens.empty()) {
        const auto padded = text::decode_utf8(" " + join_tokens(tokens) + " ");
        for (std::size_t n = config.chars.min; n <= config.chars.max; ++n) {
            for (std::size_t i = 0; i + n <= padded.size(); ++i) {
                std::string key = "c:";
                for (std::size_t k = 0; k < n; ++k)
                    text::append_utf8(key, padded[i + k]);
                ++counts[key];
            }
        }
    }
    return counts;
}

class Featurizer {
public:
    Featurizer() = default;
    Featurizer(FeaturizerConfig config, std::map<std::string, std::uint32_t> vocabulary, std::vector<double> idf)
        : config_(std::move(config)), vocabulary_(std::move(vocabulary)), idf_(std::move(idf))
    {
        if (idf_.size() != vocabulary_.size())
            throw Error("featurizer idf/vocabulary size mismatch");
        std::vector<bool> seen(idf_.size(), false);
        for (const auto& [term, idx] : vocabulary_) {
            if (idx >= idf_.size() || seen[idx])
                throw Error("featurizer vocabulary indices must be dense 0..V-1");
            seen[idx] = true;
        }
        for (double w : idf_)
            if (!std::isfinite(w) || !(w > 0.0))
                throw Error("featurizer idf values must be finite and positive");
    }

    const FeaturizerConfig& config() const noexcept { return config_; }
    const std::map<std::string, std::uint32_t>& vocabulary() const noexcept { return vocabulary_; }
    const std::vector<double>& idf() const noexcept { return idf_; }
    std::size_t dimension() const noexcept { return idf_.size(); }

    // Unseen terms are ignored; nonzero rows have unit L2 norm.
    SparseVector transform(std::string_view instruction) const
    {
        SparseVector v;
        std::vector<std::pair<std::uint32_t, double>> cells;
        for (const auto& [term, count] : extract_terms(instruction, config_)) {
            auto it = vocabulary_.find(term);
            if (it == vocabulary_.end())
                continue;
            const double tf = config_.sublinear_tf ? 1.0 + std::log(static_cast<double>(count))
                                                   : static_cast<double>(count);
            cells.emplace_back(it->second, tf * idf_[it->second]);
        }
        std::sort(cells.begin(), cells.end());
        double norm = 0.0;
        for (const auto& [i, x] : cells)
            norm += x * x;
        norm = std::sqrt(norm);
        for (const auto& [i, x] : cells) {
            v.index.push_back(i);
            v.value.push_back(x / norm);
        }
        return v;
    }

    SparseMatrix transform(std::span<const std::string> instructions) const
    {
        SparseMatrix m(dimension());
        for (const auto& s : instructions)
            m.add_row(transform(s));
        return m;
    }

private:
    FeaturizerConfig config_;
    std::map<std::string, std::uint32_t> vocabulary_;
    std::vector<double> idf_;
};

// Builds the vocabulary from the given (training) instructions only, with
// idf(t) = ln((1 + N) / (1 + df(t))) + 1. Indices follow sorted term order.
inline Featurizer fit_featurizer(std::span<const std::string> instructions, const FeaturizerConfig& config = {})
{
    if (instructions.empty())
        throw Error("cannot fit featurizer on an empty corpus");
    std::map<std::string, std::size_t> df;
    for (const auto& doc : instructions)
        for (const auto& [term, count] : extract_terms(doc, config))
            ++df[term];

    const auto n = static_cast<double>(instructions.size());
    std::map<std::string, std::uint32_t> vocab;
    std::vector<double> idf;
    for (const auto& [term, d] : df) {
        if (d < config.min_df)
            continue;
        vocab.emplace(term, static_cast<std::uint32_t>(idf.size()));
        idf.push_back(std::log((1.0 + n) / (1.0 + static_cast<double>(d))) + 1.0);
    }
    return Featurizer(config, std::move(vocab), std::move(idf));
}

inline json to_json(const Featurizer& f)
{
    json vocab = json::object();
    for (const auto& [term, idx] : f.vocabulary())
        vocab[term] = idx;
    return {{"config", to_json(f.config())}, {"vocab", std::move(vocab)}, {"idf", f.idf()}};
}

inline Featurizer featurizer_from_json(const json& j)
{
    std::map<std::string, std::uint32_t> vocab;
    for (const auto& [term, idx] : j.at("vocab").items())
        vocab.emplace(term, idx.get<std::uint32_t>());
    return Featurizer(featurizer_config_from_json(j.at("config")), std::move(vocab),
                      j.at("idf").get<std::vector<double>>());
}

} // namespace taskcast
