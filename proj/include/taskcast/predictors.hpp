#pragma once

// Performance predictors: instruction -> predicted task metric.
//
// Model file (JSON, sorted keys):
//   {"format_version": 1, "kind": "mean"|"ridge"|"knn"|"external",
//    "metric": ..., "featurizer": {"config", "vocab", "idf"}?, "params": {...}}
// External predictions file (JSONL): {"task_id": str, "prediction": float}

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "taskcast/error.hpp"
#include "taskcast/featurizer.hpp"
#include "taskcast/io.hpp"
#include "taskcast/linalg.hpp"
#include "taskcast/metrics.hpp"
#include "taskcast/stats.hpp"

namespace taskcast {

inline constexpr int kModelFormatVersion = 1;

enum class PredictorKind { Mean, Ridge, Knn, External };

inline std::string_view to_string(PredictorKind k)
{
    switch (k) {
    case PredictorKind::Mean: return "mean";
    case PredictorKind::Ridge: return "ridge";
    case PredictorKind::Knn: return "knn";
    case PredictorKind::External: return "external";
    }
    return "?";
}

inline PredictorKind parse_predictor_kind(std::string_view s)
{
    if (s == "mean")
        return PredictorKind::Mean;
    if (s == "ridge")
        return PredictorKind::Ridge;
    if (s == "knn")
        return PredictorKind::Knn;
    if (s == "external")
        return PredictorKind::External;
    throw Error("unknown predictor \"" + std::string(s) + "\" (expected mean, ridge, knn or external)");
}

struct RidgeSolution {
    std::vector<double> weights;
    double intercept = 0.0;
    double lambda = 0.0;
    std::size_t iterations = 0;
    double residual_norm = 0.0; // ||(X^T X + lambda I) w - X^T (y - b)||
    double rhs_norm = 0.0;      // ||X^T (y - b)||
};

struct RidgeOptions {
    double rel_tol = 1e-8;
    double abs_tol = 1e-10;
    // Iteration cap for CG across restarts; 0 selects 20 * (min(rows, cols) + 1) + 100.
    std::size_t max_iterations = 0;
};

// Ridge with a centered target: b = mean(y), then
// (X^T X + lambda I) w = X^T (y - b) by conjugate gradient. Throws if inputs are
// non-finite or the residual bound is not reached.
inline RidgeSolution solve_ridge(const SparseMatrix& x, std::span<const double> y, double lambda,
                                 const RidgeOptions& opts = {})
{
    if (x.rows() != y.size() || y.empty())
        throw Error("ridge: design matrix has " + std::to_string(x.rows()) + " rows for " + std::to_string(y.size())
                    + " targets");
    if (!std::isfinite(lambda) || lambda < 0.0)
        throw Error("ridge: lambda must be finite and non-negative");
    for (double v : y)
        if (!std::isfinite(v))
            throw Error("ridge: non-finite target");
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (double v : x.row(i).value)
            if (!std::isfinite(v))
                throw Error("ridge: non-finite feature value in row " + std::to_string(i));

    RidgeSolution sol;
    sol.lambda = lambda;
    sol.intercept = mean(y);
    sol.weights.assign(x.cols(), 0.0);

    std::vector<double> centered(y.begin(), y.end());
    for (double& v : centered)
        v -= sol.intercept;
    std::vector<double> rhs(x.cols());
    x.multiply_transpose(centered, rhs);
    sol.rhs_norm = norm2(rhs);

    std::vector<double> tmp(x.rows());
    auto apply = [&](std::span<const double> in, std::span<double> out) {
        x.multiply(in, tmp);
        x.multiply_transpose(tmp, out);
        for (std::size_t j = 0; j < out.size(); ++j)
            out[j] += lambda * in[j];
    };
    const std::size_t cap =
        opts.max_iterations ? opts.max_iterations : 20 * (std::min(x.rows(), x.cols()) + 1) + 100;
    const auto cg = conjugate_gradient(apply, rhs, sol.weights, cap, opts.rel_tol, opts.abs_tol);
    sol.iterations = cg.iterations;
    sol.residual_norm = cg.residual_norm;
    if (!cg.converged)
        throw Error("ridge: conjugate gradient did not converge in " + std::to_string(cap)
                    + " iterations (residual " + std::to_string(cg.residual_norm) + ", rhs "
                    + std::to_string(sol.rhs_norm) + ")");
    return sol;
}

struct MeanParams {
    double mean = 0.0;
};

struct RidgeParams {
    RidgeSolution solution;
};

struct KnnParams {
    std::size_t k = 1;
    SparseMatrix train;
    std::vector<double> y;
};

struct ExternalParams {
    std::map<std::string, double> predictions;
};

struct Prediction {
    double value = 0.0; // clamped to the metric's range
    double raw = 0.0;   // before clamping
};

class PredictorModel {
public:
    using Params = std::variant<MeanParams, RidgeParams, KnnParams, ExternalParams>;

    PredictorModel(MetricKind metric, Params params, std::optional<Featurizer> featurizer = std::nullopt)
        : metric_(metric), params_(std::move(params)), featurizer_(std::move(featurizer)) {}

    PredictorKind kind() const { return static_cast<PredictorKind>(params_.index()); }
    MetricKind metric() const noexcept { return metric_; }
    const Params& params() const noexcept { return params_; }
    const std::optional<Featurizer>& featurizer() const noexcept { return featurizer_; }

    // Prediction from a precomputed feature row (ridge/knn) or for any input
    // (mean). External models need a task id; see predict().
    Prediction predict_features(const SparseVector& row) const
    {
        return std::visit(
            [&](const auto& p) -> Prediction {
                using P = std::decay_t<decltype(p)>;
                if constexpr (std::is_same_v<P, MeanParams>) {
                    return emit(p.mean);
                } else if constexpr (std::is_same_v<P, RidgeParams>) {
                    return emit(dot(row, p.solution.weights) + p.solution.intercept);
                } else if constexpr (std::is_same_v<P, KnnParams>) {
                    return emit(knn_average(p, row));
                } else {
                    throw Error("external predictor answers by task id only");
                }
            },
            params_);
    }

    Prediction predict(const std::string& task_id, std::string_view instruction) const
    {
        if (const auto* ext = std::get_if<ExternalParams>(&params_)) {
            auto it = ext->predictions.find(task_id);
            if (it == ext->predictions.end())
                throw Error("missing external prediction for task \"" + task_id + "\"");
            return emit(it->second);
        }
        if (std::holds_alternative<MeanParams>(params_))
            return predict_features({});
        if (!featurizer_)
            throw Error("model has no featurizer; use predict_features");
        return predict_features(featurizer_->transform(instruction));
    }

    // Chosen hyperparameters, for reports.
    json hyperparameters() const
    {
        json h = json::object();
        if (const auto* r = std::get_if<RidgeParams>(&params_))
            h["lambda"] = r->solution.lambda;
        if (const auto* k = std::get_if<KnnParams>(&params_))
            h["k"] = k->k;
        if (featurizer_)
            h["featurizer"] = featurizer_->config().name();
        return h;
    }

private:
    Prediction emit(double raw) const { return {clamp_to_range(metric_, raw), raw}; }

    static double knn_average(const KnnParams& p, const SparseVector& row)
    {
        const double qn = row.norm();
        std::vector<std::pair<double, std::size_t>> sims;
        sims.reserve(p.train.rows());
        for (std::size_t i = 0; i < p.train.rows(); ++i) {
            const auto& t = p.train.row(i);
            const double tn = t.norm();
            const double cos = (qn > 0.0 && tn > 0.0) ? dot(row, t) / (qn * tn) : 0.0;
            sims.emplace_back(-cos, i); // ascending: most similar first, lower index on ties
        }
        std::partial_sort(sims.begin(), sims.begin() + static_cast<std::ptrdiff_t>(p.k), sims.end());
        double s = 0.0;
        for (std::size_t j = 0; j < p.k; ++j)
            s += p.y[sims[j].second];
        return s / static_cast<double>(p.k);
    }

    MetricKind metric_;
    Params params_;
    std::optional<Featurizer> featurizer_;
};

inline PredictorModel fit_mean(std::span<const double> train_y, MetricKind metric)
{
    if (train_y.empty())
        throw Error("cannot fit mean baseline on an empty training set");
    return PredictorModel(metric, MeanParams{mean(train_y)});
}

inline PredictorModel fit_mean(std::span<const TaskScore> train)
{
    if (train.empty())
        throw Error("cannot fit mean baseline on an empty training set");
    std::vector<double> y;
    for (const auto& s : train)
        y.push_back(s.value);
    return fit_mean(y, train.front().metric);
}

inline PredictorModel fit_ridge(const SparseMatrix& x, std::span<const double> y, double lambda, MetricKind metric,
                                std::optional<Featurizer> featurizer = std::nullopt, const RidgeOptions& opts = {})
{
    return PredictorModel(metric, RidgeParams{solve_ridge(x, y, lambda, opts)}, std::move(featurizer));
}

inline PredictorModel fit_knn(const SparseMatrix& x, std::span<const double> y, std::size_t k, MetricKind metric,
                              std::optional<Featurizer> featurizer = std::nullopt)
{
    if (x.rows() != y.size())
        throw Error("knn: row/target count mismatch");
    if (k < 1)
        throw Error("knn: k must be at least 1");
    if (k > x.rows())
        throw Error("knn: k = " + std::to_string(k) + " exceeds " + std::to_string(x.rows()) + " training rows");
    return PredictorModel(metric, KnnParams{k, x, std::vector<double>(y.begin(), y.end())}, std::move(featurizer));
}

inline PredictorModel load_external(const std::filesystem::path& path, MetricKind metric)
{
    ExternalParams params;
    for_each_jsonl(path, [&](const json& obj, std::size_t line) {
        const auto where = detail::where(path, line);
        auto id = detail::require_string(obj, "task_id", where);
        const double v = detail::require_number(obj, "prediction", where);
        if (!std::isfinite(v) || !in_range(metric, v))
            throw SchemaError(where + ": prediction " + obj.at("prediction").dump() + " out of range for "
                              + std::string(to_string(metric)));
        if (!params.predictions.emplace(id, v).second)
            throw SchemaError(where + ": duplicate prediction for task \"" + id + "\"");
    });
    return PredictorModel(metric, std::move(params));
}

// ---- serialization -------------------------------------------------------

inline json to_json(const PredictorModel& m)
{
    json params = std::visit(
        [](const auto& p) -> json {
            using P = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<P, MeanParams>) {
                return {{"mean", p.mean}};
            } else if constexpr (std::is_same_v<P, RidgeParams>) {
                return {{"lambda", p.solution.lambda},
                        {"intercept", p.solution.intercept},
                        {"weights", p.solution.weights},
                        {"iterations", p.solution.iterations},
                        {"residual_norm", p.solution.residual_norm},
                        {"rhs_norm", p.solution.rhs_norm}};
            } else if constexpr (std::is_same_v<P, KnnParams>) {
                json rows = json::array();
                for (std::size_t i = 0; i < p.train.rows(); ++i)
                    rows.push_back({{"index", p.train.row(i).index}, {"value", p.train.row(i).value}});
                return {{"k", p.k}, {"dimension", p.train.cols()}, {"rows", std::move(rows)}, {"y", p.y}};
            } else {
                json preds = json::object();
                for (const auto& [id, v] : p.predictions)
                    preds[id] = v;
                return {{"predictions", std::move(preds)}};
            }
        },
        m.params());
    json doc{{"format_version", kModelFormatVersion},
             {"kind", to_string(m.kind())},
             {"metric", to_string(m.metric())},
             {"params", std::move(params)}};
    if (m.featurizer())
        doc["featurizer"] = to_json(*m.featurizer());
    return doc;
}

inline std::string serialize(const PredictorModel& m) { return to_json(m).dump() + "\n"; }

inline PredictorModel model_from_json(const json& doc)
{
    try {
        if (doc.at("format_version").get<int>() != kModelFormatVersion)
            throw SchemaError("unsupported model format_version " + doc.at("format_version").dump());
        const auto kind = parse_predictor_kind(doc.at("kind").get<std::string>());
        const auto metric = parse_metric(doc.at("metric").get<std::string>());
        const auto& p = doc.at("params");
        std::optional<Featurizer> feat;
        if (auto it = doc.find("featurizer"); it != doc.end())
            feat = featurizer_from_json(*it);
        switch (kind) {
        case PredictorKind::Mean:
            return PredictorModel(metric, MeanParams{p.at("mean").get<double>()});
        case PredictorKind::Ridge: {
            RidgeSolution s;
            s.lambda = p.at("lambda").get<double>();
            s.intercept = p.at("intercept").get<double>();
            s.weights = p.at("weights").get<std::vector<double>>();
            s.iterations = p.at("iterations").get<std::size_t>();
            s.residual_norm = p.at("residual_norm").get<double>();
            s.rhs_norm = p.at("rhs_norm").get<double>();
            if (feat && feat->dimension() != s.weights.size())
                throw SchemaError("ridge weights do not match featurizer dimension");
            return PredictorModel(metric, RidgeParams{std::move(s)}, std::move(feat));
        }
        case PredictorKind::Knn: {
            SparseMatrix rows(p.at("dimension").get<std::size_t>());
            for (const auto& r : p.at("rows"))
                rows.add_row({r.at("index").get<std::vector<std::uint32_t>>(), r.at("value").get<std::vector<double>>()});
            auto y = p.at("y").get<std::vector<double>>();
            return fit_knn(rows, y, p.at("k").get<std::size_t>(), metric, std::move(feat));
        }
        case PredictorKind::External: {
            ExternalParams e;
            for (const auto& [id, v] : p.at("predictions").items())
                e.predictions.emplace(id, v.get<double>());
            return PredictorModel(metric, std::move(e));
        }
        }
    } catch (const json::exception& e) {
        throw SchemaError(std::string("malformed model file: ") + e.what());
    }
    throw SchemaError("malformed model file");
}

inline PredictorModel deserialize(std::string_view text)
{
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw SchemaError(std::string("malformed model file: ") + e.what());
    }
    return model_from_json(doc);
}

inline void save_model(const std::filesystem::path& path, const PredictorModel& m) { atomic_write(path, serialize(m)); }

inline PredictorModel load_model(const std::filesystem::path& path) { return deserialize(read_file(path)); }

// ---- tuning --------------------------------------------------------------

struct TuneGrid {
    std::vector<double> lambdas{0.01, 0.1, 1.0, 10.0, 100.0};
    std::vector<std::size_t> ks{1, 3, 5, 10};
    std::vector<FeaturizerConfig> featurizers{FeaturizerConfig{}};
};

struct GridPoint {
    json hyperparameters;
    double val_rmse = 0.0;
};

struct TuneResult {
    PredictorModel model;
    double val_rmse = 0.0;
    std::vector<GridPoint> trace; // grid order; infeasible points omitted
};

namespace detail {

inline std::vector<std::string> instructions_of(std::span<const TaskScore> s)
{
    std::vector<std::string> out;
    out.reserve(s.size());
    for (const auto& t : s)
        out.push_back(t.instruction);
    return out;
}

inline std::vector<double> targets_of(std::span<const TaskScore> s)
{
    std::vector<double> out;
    out.reserve(s.size());
    for (const auto& t : s)
        out.push_back(t.value);
    return out;
}

inline double val_rmse(const PredictorModel& m, const SparseMatrix& xv, std::span<const double> yv)
{
    std::vector<double> pred(xv.rows());
    for (std::size_t i = 0; i < xv.rows(); ++i)
        pred[i] = m.predict_features(xv.row(i)).value;
    return rmse(pred, yv);
}

inline bool rmse_tie(double a, double b) { return std::abs(a - b) <= 1e-12 * std::max({1.0, std::abs(a), std::abs(b)}); }

} // namespace detail

// Fits one model per grid point on `train`, scores each by validation RMSE
// and returns the argmin. Ties prefer larger lambda (ridge) or larger k (knn),
// then earlier grid order. Only train and val are visible here.
inline TuneResult tune(PredictorKind family, std::span<const TaskScore> train, std::span<const TaskScore> val,
                       const TuneGrid& grid)
{
    if (train.empty())
        throw Error("tune: empty training set");
    if (val.empty())
        throw Error("tune: empty validation set");
    const MetricKind metric = train.front().metric;
    const auto ytr = detail::targets_of(train);
    const auto yv = detail::targets_of(val);

    if (family == PredictorKind::Mean) {
        auto model = fit_mean(ytr, metric);
        std::vector<double> pred(val.size(), model.predict_features({}).value);
        const double r = rmse(pred, yv);
        return {std::move(model), r, {{json::object(), r}}};
    }
    if (family == PredictorKind::External)
        throw Error("tune: external predictions are not fitted");
    if (grid.featurizers.empty() || (family == PredictorKind::Ridge && grid.lambdas.empty())
        || (family == PredictorKind::Knn && grid.ks.empty()))
        throw Error("tune: empty grid");

    std::optional<TuneResult> best;
    double best_param = 0.0;
    std::vector<GridPoint> trace;
    const auto texts_tr = detail::instructions_of(train);
    const auto texts_v = detail::instructions_of(val);

    for (const auto& fc : grid.featurizers) {
        auto feat = fit_featurizer(texts_tr, fc);
        const auto xtr = feat.transform(texts_tr);
        const auto xv = feat.transform(texts_v);
        auto consider = [&](PredictorModel model, double param) {
            const double r = detail::val_rmse(model, xv, yv);
            trace.push_back({model.hyperparameters(), r});
            const bool better = !best || (r < best->val_rmse && !detail::rmse_tie(r, best->val_rmse))
                                || (detail::rmse_tie(r, best->val_rmse) && param > best_param);
            if (better) {
                best.emplace(TuneResult{std::move(model), r, {}});
                best_param = param;
            }
        };
        if (family == PredictorKind::Ridge) {
            for (double lambda : grid.lambdas)
                consider(fit_ridge(xtr, ytr, lambda, metric, feat), lambda);
        } else {
            for (std::size_t k : grid.ks) {
                if (k > xtr.rows())
                    continue;
                consider(fit_knn(xtr, ytr, k, metric, feat), static_cast<double>(k));
            }
        }
    }
    if (!best)
        throw Error("tune: no feasible grid point (k larger than the training set?)");
    best->trace = std::move(trace);
    return std::move(*best);
}

} // namespace taskcast
