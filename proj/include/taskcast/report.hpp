#pragma once

// Table-1-style RMSE tables (markdown + CSV) and predicted-vs-true SVG
// scatter plots.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "taskcast/error.hpp"

namespace taskcast {

struct TableCell {
    double mean = 0.0;
    std::optional<double> std; // absent for a single split
    std::size_t n_splits = 0;
};

// Predictors as rows, conditions as columns.
struct ComparisonTable {
    std::vector<std::string> predictors;
    std::vector<std::string> conditions;
    std::map<std::pair<std::string, std::string>, TableCell> cells; // (predictor, condition)

    std::size_t cell_count() const { return cells.size(); }
};

inline std::string format_fixed(double v, int digits)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

inline std::string format_full(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// "27.4 (5.4)", or "27.4 (—)" when the spread is undefined.
inline std::string format_cell(const TableCell& c)
{
    return format_fixed(c.mean, 1) + " (" + (c.std ? format_fixed(*c.std, 1) : std::string("—")) + ")";
}

inline std::string render_markdown(const ComparisonTable& t)
{
    std::string out = "| predictor |";
    for (const auto& c : t.conditions)
        out += " " + c + " |";
    out += "\n|---|";
    for (std::size_t i = 0; i < t.conditions.size(); ++i)
        out += "---|";
    out += "\n";
    for (const auto& p : t.predictors) {
        out += "| " + p + " |";
        for (const auto& c : t.conditions) {
            auto it = t.cells.find({p, c});
            out += " " + (it == t.cells.end() ? std::string("n/a") : format_cell(it->second)) + " |";
        }
        out += "\n";
    }
    return out;
}

inline std::string csv_field(const std::string& s)
{
    if (s.find_first_of(",\"\n") == std::string::npos)
        return s;
    std::string q = "\"";
    for (char c : s)
        q += (c == '"') ? std::string("\"\"") : std::string(1, c);
    return q + "\"";
}

// One row per cell, full precision. An undefined std is left empty.
inline std::string render_csv(const ComparisonTable& t)
{
    std::string out = "predictor,condition,mean_rmse,std_rmse,n_splits\n";
    for (const auto& p : t.predictors)
        for (const auto& c : t.conditions) {
            auto it = t.cells.find({p, c});
            if (it == t.cells.end())
                continue;
            const auto& cell = it->second;
            out += csv_field(p) + "," + csv_field(c) + "," + format_full(cell.mean) + ","
                   + (cell.std ? format_full(*cell.std) : std::string()) + "," + std::to_string(cell.n_splits) + "\n";
        }
    return out;
}

struct ScatterPoint {
    double truth = 0.0;
    double predicted = 0.0;
    std::int64_t seed = 0;
};

struct ScatterSpec {
    std::vector<ScatterPoint> points;
    double axis_min = 0.0;
    double axis_max = 100.0;
    bool identity_line = true;
    std::string title;
    std::string x_label = "true";
    std::string y_label = "predicted";
};

// Axis upper bound for a loss-valued plot: the largest value rounded up to a
// whole number (at least 1).
inline double loss_axis_max(const std::vector<ScatterPoint>& pts)
{
    double m = 0.0;
    for (const auto& p : pts)
        m = std::max({m, p.truth, p.predicted});
    return std::max(1.0, std::ceil(m));
}

struct ScatterGeometry {
    static constexpr double kSize = 480.0;
    static constexpr double kMargin = 56.0;
    double lo = 0.0;
    double hi = 100.0;

    double x(double v) const { return kMargin + (v - lo) / (hi - lo) * (kSize - 2 * kMargin); }
    double y(double v) const { return kSize - kMargin - (v - lo) / (hi - lo) * (kSize - 2 * kMargin); }
};

inline std::string xml_escape(const std::string& s)
{
    std::string out;
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

// Self-contained SVG: square axes with five tick intervals, an optional
// identity diagonal and one <circle class="point"> per point. Output bytes
// depend only on the spec. Points outside the axis range are clipped to it.
inline std::string render_scatter(const ScatterSpec& spec)
{
    if (spec.points.empty())
        throw Error("scatter plot needs at least one point");
    if (!(spec.axis_max > spec.axis_min))
        throw Error("scatter plot axis range is empty");
    const ScatterGeometry g{spec.axis_min, spec.axis_max};
    const double size = ScatterGeometry::kSize;
    const double m = ScatterGeometry::kMargin;
    auto f = [](double v) { return format_fixed(v, 2); };

    std::string s;
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + f(size) + "\" height=\"" + f(size)
         + "\" viewBox=\"0 0 " + f(size) + " " + f(size) + "\">\n";
    s += "<rect x=\"0\" y=\"0\" width=\"" + f(size) + "\" height=\"" + f(size) + "\" fill=\"white\"/>\n";
    if (!spec.title.empty())
        s += "<text x=\"" + f(size / 2) + "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">"
             + xml_escape(spec.title) + "</text>\n";

    // axes
    s += "<g class=\"axes\" stroke=\"black\" stroke-width=\"1\">\n";
    s += "<line x1=\"" + f(m) + "\" y1=\"" + f(size - m) + "\" x2=\"" + f(size - m) + "\" y2=\"" + f(size - m) + "\"/>\n";
    s += "<line x1=\"" + f(m) + "\" y1=\"" + f(m) + "\" x2=\"" + f(m) + "\" y2=\"" + f(size - m) + "\"/>\n";
    s += "</g>\n";

    s += "<g class=\"ticks\" font-family=\"sans-serif\" font-size=\"10\">\n";
    constexpr int kTicks = 5;
    for (int i = 0; i <= kTicks; ++i) {
        const double v = spec.axis_min + (spec.axis_max - spec.axis_min) * i / kTicks;
        const std::string label = format_fixed(v, (spec.axis_max - spec.axis_min) >= 10 ? 0 : 1);
        s += "<line class=\"tick\" x1=\"" + f(g.x(v)) + "\" y1=\"" + f(size - m) + "\" x2=\"" + f(g.x(v)) + "\" y2=\""
             + f(size - m + 5) + "\" stroke=\"black\"/>\n";
        s += "<text x=\"" + f(g.x(v)) + "\" y=\"" + f(size - m + 18) + "\" text-anchor=\"middle\">" + label + "</text>\n";
        s += "<line class=\"tick\" x1=\"" + f(m - 5) + "\" y1=\"" + f(g.y(v)) + "\" x2=\"" + f(m) + "\" y2=\"" + f(g.y(v))
             + "\" stroke=\"black\"/>\n";
        s += "<text x=\"" + f(m - 8) + "\" y=\"" + f(g.y(v) + 3) + "\" text-anchor=\"end\">" + label + "</text>\n";
    }
    s += "</g>\n";
    s += "<text x=\"" + f(size / 2) + "\" y=\"" + f(size - 14) + "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">"
         + xml_escape(spec.x_label) + "</text>\n";
    s += "<text x=\"16\" y=\"" + f(size / 2) + "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 16 "
         + f(size / 2) + ")\">" + xml_escape(spec.y_label) + "</text>\n";

    if (spec.identity_line)
        s += "<line class=\"identity\" x1=\"" + f(g.x(spec.axis_min)) + "\" y1=\"" + f(g.y(spec.axis_min)) + "\" x2=\""
             + f(g.x(spec.axis_max)) + "\" y2=\"" + f(g.y(spec.axis_max))
             + "\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n";

    s += "<g class=\"points\" fill=\"steelblue\" fill-opacity=\"0.6\">\n";
    for (const auto& p : spec.points) {
        const double tx = std::clamp(p.truth, spec.axis_min, spec.axis_max);
        const double py = std::clamp(p.predicted, spec.axis_min, spec.axis_max);
        s += "<circle class=\"point\" cx=\"" + f(g.x(tx)) + "\" cy=\"" + f(g.y(py)) + "\" r=\"3\" data-seed=\""
             + std::to_string(p.seed) + "\"/>\n";
    }
    s += "</g>\n</svg>\n";
    return s;
}

} // namespace taskcast
