#pragma once

#include <cmath>
#include <optional>
#include <span>

#include "taskcast/error.hpp"

namespace taskcast {

inline double mean(std::span<const double> xs)
{
    if (xs.empty())
        throw Error("mean of an empty sequence");
    double s = 0.0;
    for (double x : xs)
        s += x;
    return s / static_cast<double>(xs.size());
}

// Population standard deviation (n denominator).
inline double population_std(std::span<const double> xs)
{
    const double m = mean(xs);
    double ss = 0.0;
    for (double x : xs)
        ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(xs.size()));
}

// Sample standard deviation (n - 1 denominator); undefined below two values.
inline std::optional<double> sample_std(std::span<const double> xs)
{
    if (xs.size() < 2)
        return std::nullopt;
    const double m = mean(xs);
    double ss = 0.0;
    for (double x : xs)
        ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

inline double rmse(std::span<const double> pred, std::span<const double> truth)
{
    if (pred.size() != truth.size())
        throw Error("rmse: length mismatch (" + std::to_string(pred.size()) + " vs " + std::to_string(truth.size()) + ")");
    if (pred.empty())
        throw Error("rmse: empty input");
    double ss = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - truth[i];
        ss += d * d;
    }
    return std::sqrt(ss / static_cast<double>(pred.size()));
}

} // namespace taskcast
