#pragma once

// Cross-validation, grid search over the Table 4 spaces, and the experiment
// runners that turn a manifest into a directory of reports.

#include <cmath>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "asdml/classifiers.hpp"
#include "asdml/clustering.hpp"
#include "asdml/io.hpp"
#include "asdml/metrics.hpp"
#include "asdml/pipeline.hpp"

namespace asdml {

/// An error raised inside one stage of an experiment ("load", "split", ...).
class StageError : public Error {
public:
    StageError(std::string stage, const std::string& what)
        : Error("[" + stage + "] " + what), stage_(std::move(stage)) {}
    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

// ------------------------------------------------------------------ grids

struct ParamAxis {
    std::string name;
    std::vector<ParamValue> values;
};

/// Cartesian hyperparameter space; points enumerate with the last axis fastest.
struct ParamGrid {
    ModelKind kind = ModelKind::logistic_regression;
    std::vector<ParamAxis> axes;

    std::size_t size() const {
        if (axes.empty()) return 0;
        std::size_t n = 1;
        for (const auto& a : axes) n *= a.values.size();
        return n;
    }

    ParamPoint point(std::size_t i) const {
        if (i >= size()) throw InvalidArgument("grid: point index out of range");
        ParamPoint p;
        p.values.resize(axes.size());
        for (std::size_t a = axes.size(); a-- > 0;) {
            const auto& ax = axes[a];
            p.values[a] = {ax.name, ax.values[i % ax.values.size()]};
            i /= ax.values.size();
        }
        return p;
    }

    /// Axis names must be exactly the kind's hyperparameters.
    void validate() const {
        if (size() == 0) throw InvalidArgument("grid: empty");
        ModelSpec probe{kind, {}, {}};
        for (const auto& a : axes) {
            if (a.values.empty()) throw InvalidArgument("grid: axis '" + a.name + "' has no values");
            probe.params.set(a.name, a.values.front());
        }
        validate_params(probe);
        if (probe.params.values.size() != axes.size()) throw InvalidArgument("grid: repeated axis");
    }
};

inline void to_json(nlohmann::json& j, const ParamGrid& g) {
    j = nlohmann::json::object();
    j["kind"] = to_string(g.kind);
    auto axes = nlohmann::json::array();
    for (const auto& a : g.axes) {
        auto vals = nlohmann::json::array();
        for (const auto& v : a.values) {
            nlohmann::json jv;
            to_json(jv, v);
            vals.push_back(jv);
        }
        axes.push_back({{"name", a.name}, {"values", vals}});
    }
    j["axes"] = axes;
}

inline void from_json(const nlohmann::json& j, ParamGrid& g) {
    g.kind = model_kind_from_string(j.at("kind").get<std::string>());
    g.axes.clear();
    for (const auto& a : j.at("axes")) {
        ParamAxis ax;
        a.at("name").get_to(ax.name);
        for (const auto& v : a.at("values")) {
            ParamValue pv;
            from_json(v, pv);
            ax.values.push_back(pv);
        }
        g.axes.push_back(std::move(ax));
    }
}

namespace detail {

inline std::vector<ParamValue> ints(std::initializer_list<std::int64_t> v) { return {v.begin(), v.end()}; }
inline std::vector<ParamValue> reals(std::initializer_list<double> v) { return {v.begin(), v.end()}; }
inline std::vector<ParamValue> words(std::initializer_list<const char*> v) {
    std::vector<ParamValue> out;
    for (auto s : v) out.emplace_back(std::string(s));
    return out;
}
inline std::vector<ParamValue> int_range(std::int64_t lo, std::int64_t hi, std::int64_t step) {
    std::vector<ParamValue> out;
    for (auto v = lo; v < hi; v += step) out.emplace_back(v);
    return out;
}

}  // namespace detail

/// The "Initial Parameters" column of Table 4.
inline ParamGrid table4_grid(ModelKind kind) {
    using namespace detail;
    const auto spaced = ints({1, 112, 223, 334, 445, 556, 667, 778, 889, 1000});
    switch (kind) {
        case ModelKind::naive_bayes: {
            // np.logspace(0, -9, num=100)
            std::vector<ParamValue> vs;
            for (int i = 0; i < 100; ++i) vs.emplace_back(std::pow(10.0, -9.0 * i / 99.0));
            return {kind, {{"var_smoothing", vs}}};
        }
        case ModelKind::knn:
            return {kind,
                    {{"n_neighbors", spaced},
                     {"weights", words({"uniform", "distance"})},
                     {"algorithm", words({"auto", "ball_tree", "kd_tree", "brute"})},
                     {"leaf_size", spaced}}};
        case ModelKind::svm:
            return {kind,
                    {{"C", ints({1, 3, 5, 7, 9, 11, 13, 15, 17, 20})},
                     {"kernel", words({"linear", "poly", "rbf", "sigmoid"})},
                     {"degree", int_range(1, 11, 1)}}};
        case ModelKind::random_forest:
            return {kind,
                    {{"n_estimators", int_range(200, 2001, 200)},
                     {"max_features", words({"auto", "sqrt", "log2"})},
                     {"max_depth", ints({10, 120, 230, 340, 450, 560, 670, 780, 890, 1000})},
                     {"min_samples_split", ints({2, 5, 10, 14})},
                     {"min_samples_leaf", ints({1, 2, 4, 6, 8})},
                     {"criterion", words({"entropy", "gini"})}}};
        case ModelKind::decision_tree:
            return {kind,
                    {{"criterion", words({"gini", "entropy"})},
                     {"max_depth", ints({150, 155, 160})},
                     {"min_samples_split", int_range(1, 10, 1)},
                     {"min_samples_leaf", int_range(1, 5, 1)}}};
        case ModelKind::gradient_boost:
            return {kind,
                    {{"max_depth", int_range(2, 10, 1)},
                     {"n_estimators", int_range(60, 220, 40)},
                     {"learning_rate", reals({0.1, 0.01, 0.05})}}};
        case ModelKind::logistic_regression:
            return {kind,
                    {{"penalty", words({"l1", "l2"})},
                     {"C", reals({0.001, 0.01, 0.1, 1, 10, 100, 1000})}}};
        case ModelKind::ann:
            return {kind,
                    {{"optimizer", words({"sgd", "adam", "rmsprop"})},
                     {"loss", words({"binary_crossentropy"})},
                     {"batch_size", ints({8, 16, 32, 64})},
                     {"factor", reals({0.8})},
                     {"patience", ints({10})}}};
    }
    throw InvalidArgument("table4_grid: bad model kind");
}

/// The "Optimized Parameters" column of Table 4 for children / adult / combined.
inline ParamPoint table4_preset(ModelKind kind, const std::string& dataset) {
    int d = dataset == "children" ? 0 : dataset == "adult" ? 1 : dataset == "combined" ? 2 : -1;
    if (d < 0) throw InvalidArgument("no Table 4 preset for dataset '" + dataset + "'");
    using S = std::string;
    switch (kind) {
        case ModelKind::naive_bayes:
            return {{"var_smoothing", std::array{0.4328, 0.2848, 0.0284}[d]}};
        case ModelKind::knn:
            if (d == 0)
                return {{"n_neighbors", std::int64_t{1}}, {"weights", S("uniform")}, {"algorithm", S("brute")},
                        {"leaf_size", std::int64_t{445}}};
            return {{"n_neighbors", std::int64_t{1}}, {"weights", S("distance")}, {"algorithm", S("ball_tree")},
                    {"leaf_size", std::int64_t{112}}};
        case ModelKind::svm:
            return {{"C", std::int64_t{13}}, {"kernel", S("linear")}, {"degree", std::int64_t{3}}};
        case ModelKind::random_forest:
            if (d < 2)
                return {{"n_estimators", std::int64_t{800}}, {"max_features", S("log2")},
                        {"max_depth", std::int64_t{450}}, {"min_samples_split", std::int64_t{2}},
                        {"min_samples_leaf", std::int64_t{4}}, {"criterion", S("entropy")}};
            return {{"n_estimators", std::int64_t{800}}, {"max_features", S("sqrt")},
                    {"max_depth", std::int64_t{560}}, {"min_samples_split", std::int64_t{5}},
                    {"min_samples_leaf", std::int64_t{1}}, {"criterion", S("entropy")}};
        case ModelKind::decision_tree: {
            const std::array<ParamPoint, 3> p{
                ParamPoint{{"criterion", S("gini")}, {"max_depth", std::int64_t{155}},
                           {"min_samples_split", std::int64_t{2}}, {"min_samples_leaf", std::int64_t{1}}},
                ParamPoint{{"criterion", S("entropy")}, {"max_depth", std::int64_t{150}},
                           {"min_samples_split", std::int64_t{3}}, {"min_samples_leaf", std::int64_t{1}}},
                ParamPoint{{"criterion", S("gini")}, {"max_depth", std::int64_t{160}},
                           {"min_samples_split", std::int64_t{3}}, {"min_samples_leaf", std::int64_t{3}}}};
            return p[d];
        }
        case ModelKind::gradient_boost:
            return {{"max_depth", std::int64_t{d == 2 ? 2 : 4}}, {"n_estimators", std::int64_t{140}},
                    {"learning_rate", 0.1}};
        case ModelKind::logistic_regression:
            return {{"penalty", S("l2")}, {"C", d == 0 ? 1000.0 : 100.0}};
        case ModelKind::ann:
            return {{"optimizer", S("adam")}, {"loss", S("binary_crossentropy")}, {"batch_size", std::int64_t{32}},
                    {"factor", 0.8}, {"patience", std::int64_t{10}}};
    }
    throw InvalidArgument("table4_preset: bad model kind");
}

/// The point as the trainer actually sees it: no-op knobs dropped, clamps and
/// aliases applied. Two points with equal keys train identical models.
inline std::string effective_params_key(ModelKind kind, const ParamPoint& p) {
    ParamPoint e;
    for (const auto& [k, v] : p.values) {
        if (kind == ModelKind::knn && (k == "algorithm" || k == "leaf_size")) continue;
        if (kind == ModelKind::svm && k == "degree" && p.get_string("kernel") != "poly") continue;
        ParamValue w = v;
        if ((kind == ModelKind::decision_tree || kind == ModelKind::random_forest) && k == "min_samples_split" &&
            p.get_int(k) < 2)
            w = std::int64_t{2};
        if (kind == ModelKind::random_forest && k == "max_features" && p.get_string(k) == "auto")
            w = std::string("sqrt");
        if (auto* i = std::get_if<std::int64_t>(&w)) w = double(*i);
        e.values.emplace_back(k, w);
    }
    return nlohmann::json(e).dump();
}

// ------------------------------------------------------------------ folds

/// Stratified k-fold: each class is shuffled and dealt round-robin, the deal
/// continuing across classes, so fold sizes differ by at most one and every
/// fold's class counts are within one of the ideal. Folds are sorted.
inline std::vector<std::vector<std::size_t>> k_fold_indices(std::span<const int> strata, std::size_t k,
                                                            SeededRng rng) {
    const std::size_t n = strata.size();
    if (k < 2) throw InvalidArgument("k_fold: k must be >= 2");
    if (k > n) throw InvalidArgument("k_fold: k=" + std::to_string(k) + " exceeds " + std::to_string(n) + " rows");
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < n; ++i) by_class[strata[i]].push_back(i);
    std::vector<std::vector<std::size_t>> folds(k);
    std::size_t deal = 0;
    for (auto& [cls, idx] : by_class) {
        const auto perm = rng_shuffle(rng, idx.size());
        for (auto p : perm) folds[deal++ % k].push_back(idx[p]);
    }
    for (auto& f : folds) std::sort(f.begin(), f.end());
    return folds;
}

inline constexpr std::array<const char*, 8> kMetricNames{"accuracy", "precision", "recall", "specificity",
                                                         "f1",       "auc",       "kappa",  "log_loss"};

inline double metric_value(const MetricsReport& r, std::string_view name) {
    if (name == "accuracy") return r.accuracy;
    if (name == "precision") return r.precision;
    if (name == "recall") return r.recall;
    if (name == "specificity") return r.specificity;
    if (name == "f1") return r.f1;
    if (name == "auc") return r.auc;
    if (name == "kappa") return r.kappa;
    if (name == "log_loss") return r.log_loss;
    throw InvalidArgument("unknown metric '" + std::string(name) + "'");
}

/// log loss is the only metric where lower is better.
inline bool metric_better(std::string_view name, double a, double b) {
    return name == "log_loss" ? a < b : a > b;
}

struct FoldScores {
    std::vector<MetricsReport> folds;

    double mean(std::string_view metric) const {
        double s = 0;
        for (const auto& f : folds) s += metric_value(f, metric);
        return folds.empty() ? std::numeric_limits<double>::quiet_NaN() : s / double(folds.size());
    }
    /// Population standard deviation over folds.
    double std(std::string_view metric) const {
        if (folds.empty()) return std::numeric_limits<double>::quiet_NaN();
        const double mu = mean(metric);
        double s = 0;
        for (const auto& f : folds) s += (metric_value(f, metric) - mu) * (metric_value(f, metric) - mu);
        return std::sqrt(s / double(folds.size()));
    }
};

inline void to_json(nlohmann::json& j, const FoldScores& f) {
    j = nlohmann::json::object();
    j["folds"] = f.folds;
    nlohmann::json mean = nlohmann::json::object(), sd = nlohmann::json::object();
    for (auto m : kMetricNames) {
        mean[m] = f.mean(m);
        sd[m] = f.std(m);
    }
    j["mean"] = mean;
    j["std"] = sd;
}

inline void from_json(const nlohmann::json& j, FoldScores& f) { j.at("folds").get_to(f.folds); }

/// Train on k-1 folds, score the held-out fold. Folds come from rng.split(0);
/// fold f trains with rng.split(1 + f).
inline FoldScores cross_validate(const ModelSpec& spec, const DesignMatrix& m, std::size_t k, const SeededRng& rng,
                                 Diagnostics* diag = nullptr) {
    const auto folds = k_fold_indices(m.y, k, rng.split(0));
    FoldScores out;
    std::vector<char> in_fold(m.rows());
    for (std::size_t f = 0; f < k; ++f) {
        std::fill(in_fold.begin(), in_fold.end(), 0);
        for (auto i : folds[f]) in_fold[i] = 1;
        std::vector<std::size_t> train;
        for (std::size_t i = 0; i < m.rows(); ++i)
            if (!in_fold[i]) train.push_back(i);
        const auto tr = m.select_rows(train);
        const auto te = m.select_rows(folds[f]);
        try {
            const auto model = train_model(spec, tr, rng.split(1 + f), diag);
            out.folds.push_back(evaluate_classification(te.y, predict_proba1(model, te.x), diag));
        } catch (const NumericError& e) {
            throw NumericError("fold " + std::to_string(f) + ": " + e.what());
        } catch (const InvalidArgument& e) {
            throw InvalidArgument("fold " + std::to_string(f) + ": " + e.what());
        } catch (const Error& e) {
            throw Error("fold " + std::to_string(f) + ": " + e.what());
        }
    }
    return out;
}

// ------------------------------------------------------------ grid search

struct GridRow {
    ParamPoint point;
    double mean = std::numeric_limits<double>::quiet_NaN();  ///< NaN when training failed
    double std = std::numeric_limits<double>::quiet_NaN();
    std::string error;
    bool reused = false;  ///< same effective point as an earlier row
};

struct GridResult {
    std::string objective;
    ParamPoint best;
    std::size_t best_index = 0;
    double best_score = std::numeric_limits<double>::quiet_NaN();
    std::size_t distinct = 0;  ///< cross-validations actually run
    std::vector<GridRow> table;
};

/// Exhaustive search; every point is cross-validated on the same folds. Points
/// that train identically are scored once. Failing points score NaN and are
/// skipped; ties keep the earliest point in enumeration order.
inline GridResult grid_search(const ParamGrid& grid, const DesignMatrix& m, std::size_t k,
                              const std::string& objective, const SeededRng& rng, const ModelSettings& settings = {},
                              Diagnostics* diag = nullptr) {
    grid.validate();
    metric_value(MetricsReport{}, objective);
    GridResult out;
    out.objective = objective;
    std::map<std::string, std::size_t> seen;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        GridRow row;
        row.point = grid.point(i);
        const auto key = effective_params_key(grid.kind, row.point);
        if (auto it = seen.find(key); it != seen.end()) {
            const auto& prev = out.table[it->second];
            row.mean = prev.mean;
            row.std = prev.std;
            row.error = prev.error;
            row.reused = true;
        } else {
            seen.emplace(key, i);
            ++out.distinct;
            try {
                const auto scores = cross_validate({grid.kind, row.point, settings}, m, k, rng, diag);
                row.mean = scores.mean(objective);
                row.std = scores.std(objective);
            } catch (const Error& e) {
                row.error = e.what();
                warn(diag, "grid_point_failed", row.point.describe() + ": " + e.what());
            }
        }
        if (!std::isnan(row.mean) && (std::isnan(out.best_score) || metric_better(objective, row.mean, out.best_score))) {
            out.best_score = row.mean;
            out.best_index = i;
        }
        out.table.push_back(std::move(row));
    }
    if (std::isnan(out.best_score)) throw Error("grid search: every grid point failed");
    out.best = out.table[out.best_index].point;
    return out;
}

namespace detail {
inline nlohmann::json number_or_null(double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); }
}  // namespace detail

inline nlohmann::json grid_result_json(const GridResult& g) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : g.table) {
        nlohmann::json jr = {{"params", r.point}, {"mean", detail::number_or_null(r.mean)},
                             {"std", detail::number_or_null(r.std)}};
        if (!r.error.empty()) jr["error"] = r.error;
        rows.push_back(jr);
    }
    return {{"objective", g.objective}, {"best", g.best},         {"best_index", g.best_index},
            {"best_score", g.best_score}, {"evaluated", g.table.size()}, {"distinct", g.distinct},
            {"table", rows}};
}

inline std::string grid_result_csv(const GridResult& g) {
    std::string out = "index";
    if (!g.table.empty())
        for (const auto& [k, v] : g.table.front().point.values) out += "," + k;
    out += ",mean_" + g.objective + ",std,status\n";
    for (std::size_t i = 0; i < g.table.size(); ++i) {
        const auto& r = g.table[i];
        out += std::to_string(i);
        for (const auto& [k, v] : r.point.values) out += "," + to_string(v);
        auto num = [](double v) { return std::isnan(v) ? std::string("nan") : nlohmann::json(v).dump(); };
        out += "," + num(r.mean) + "," + num(r.std) + "," + (r.error.empty() ? "ok" : "failed") + "\n";
    }
    return out;
}

// ------------------------------------------------------------- manifests

/// Everything a classification run depends on. The resolved copy written next
/// to the results (chosen params, data hash) reruns to the same bytes.
struct ExperimentManifest {
    std::string dataset = "children";  ///< children | adult | combined | ARFF path
    std::string data_hash;             ///< filled in by the runner
    PreprocessConfig preprocess;
    std::uint64_t seed = 42;
    double test_fraction = 0.3;
    std::size_t cv_folds = 5;  ///< 0 skips cross-validation (no grid search then)
    ModelSpec model;
    std::string params_source = "table4";  ///< table4 | file | grid
    bool grid_search = false;
    std::string objective = "accuracy";
    std::optional<ParamGrid> grid;  ///< defaults to the Table 4 grid of the model kind
};

inline void to_json(nlohmann::json& j, const ExperimentManifest& m) {
    j = nlohmann::json::object();
    j["format_version"] = 1;
    j["dataset"] = m.dataset;
    j["data_hash"] = m.data_hash;
    j["preprocess"] = m.preprocess;
    j["seed"] = m.seed;
    j["test_fraction"] = m.test_fraction;
    j["cv_folds"] = m.cv_folds;
    j["model"] = m.model;
    j["params_source"] = m.params_source;
    j["search"] = {{"enabled", m.grid_search}, {"objective", m.objective}};
    j["grid"] = m.grid ? nlohmann::json(*m.grid) : nlohmann::json(nullptr);
}

inline void from_json(const nlohmann::json& j, ExperimentManifest& m) {
    if (j.value("format_version", 1) != 1) throw ParseError("unsupported manifest format version");
    m.dataset = j.at("dataset").get<std::string>();
    m.data_hash = j.value("data_hash", std::string{});
    m.preprocess = j.value("preprocess", PreprocessConfig{});
    m.seed = j.value("seed", std::uint64_t{42});
    m.test_fraction = j.value("test_fraction", 0.3);
    m.cv_folds = j.value("cv_folds", std::size_t{5});
    m.model = j.at("model").get<ModelSpec>();
    m.params_source = j.value("params_source", std::string("file"));
    if (j.contains("search")) {
        m.grid_search = j["search"].value("enabled", false);
        m.objective = j["search"].value("objective", std::string("accuracy"));
    }
    if (j.contains("grid") && !j["grid"].is_null()) m.grid = j["grid"].get<ParamGrid>();
}

inline std::string manifest_hash(const nlohmann::json& manifest) { return hex64(fnv1a64(manifest.dump())); }

/// Hash of the raw dataset bytes (both files for "combined").
inline std::string dataset_hash(const std::string& id, const std::filesystem::path& dir = data_dir()) {
    std::string bytes;
    if (id == "children" || id == "combined") bytes += read_file(dir / kChildrenFile);
    if (id == "adult" || id == "combined") bytes += read_file(dir / kAdultFile);
    if (id != "children" && id != "adult" && id != "combined") bytes = read_file(id);
    return hex64(fnv1a64(bytes));
}

namespace detail {

/// Warnings grouped by (code, message) with a count, in first-seen order.
inline nlohmann::json warnings_json(const Diagnostics& d) {
    std::vector<std::pair<const Warning*, std::size_t>> uniq;
    for (const auto& w : d.warnings) {
        auto it = std::find_if(uniq.begin(), uniq.end(), [&](const auto& u) {
            return u.first->code == w.code && u.first->message == w.message;
        });
        if (it == uniq.end()) uniq.emplace_back(&w, 1);
        else ++it->second;
    }
    nlohmann::json out = nlohmann::json::array();
    for (const auto& [w, n] : uniq) out.push_back({{"code", w->code}, {"message", w->message}, {"count", n}});
    return out;
}

template <class F>
auto stage(const char* name, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(name, e.what());
    }
}

inline std::string number17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace detail

struct ExperimentResult {
    ExperimentManifest manifest;  ///< resolved
    std::string manifest_hash;
    PreparedData data;
    SplitIndices split;
    TrainedModel model;
    MetricsReport test;
    std::optional<FoldScores> cv;
    std::optional<GridResult> search;
    std::vector<double> test_proba;  ///< aligned with split.test
    Diagnostics diag;
    nlohmann::json report;  ///< report.json content
};

/// Figure-1 pipeline: preprocess (impute, encode, scale, chi-square top-k) on
/// the full table, stratified holdout split, optional grid search and CV on the
/// training part, final fit, single scoring of the holdout.
/// Streams: split = seed.split(1), CV / search = split(2), final fit = split(3).
inline ExperimentResult run_experiment(ExperimentManifest manifest, const std::filesystem::path& dir = data_dir()) {
    ExperimentResult r;
    auto& diag = r.diag;
    if (!(manifest.test_fraction > 0 && manifest.test_fraction < 1))
        throw StageError("manifest", "test_fraction must lie in (0, 1)");
    if (manifest.cv_folds == 1) throw StageError("manifest", "cv_folds must be 0 or >= 2");
    if (manifest.grid_search && manifest.cv_folds == 0) throw StageError("manifest", "grid search needs cv_folds >= 2");
    const DataTable raw = detail::stage("load", [&] {
        if (!dataset_available(manifest.dataset, dir))
            throw Error("dataset '" + manifest.dataset + "' not found (data directory: " + dir.string() + ")");
        manifest.data_hash = dataset_hash(manifest.dataset, dir);
        return load_dataset(manifest.dataset, dir);
    });
    r.data = detail::stage("preprocess", [&] { return prepare(raw, manifest.preprocess, &diag); });
    const auto& m = r.data.selected;
    const SeededRng master(manifest.seed);
    r.split = detail::stage("split", [&] {
        SeededRng s = master.split(1);
        return stratified_split_indices(m.y, manifest.test_fraction, s);
    });
    const auto train = m.select_rows(r.split.train);
    const auto test = m.select_rows(r.split.test);
    const SeededRng cv_rng = master.split(2);

    if (manifest.grid_search) {
        if (!manifest.grid) manifest.grid = table4_grid(manifest.model.kind);
        if (manifest.grid->kind != manifest.model.kind) throw StageError("search", "grid kind differs from model kind");
        r.search = detail::stage("search", [&] {
            return grid_search(*manifest.grid, train, manifest.cv_folds, manifest.objective, cv_rng,
                               manifest.model.settings, &diag);
        });
        manifest.model.params = r.search->best;
        manifest.params_source = "grid";
    }
    detail::stage("manifest", [&] { validate_params(manifest.model); });
    if (manifest.cv_folds >= 2)
        r.cv = detail::stage("cv", [&] { return cross_validate(manifest.model, train, manifest.cv_folds, cv_rng, &diag); });
    r.model = detail::stage("train", [&] { return train_model(manifest.model, train, master.split(3), &diag); });
    r.model.pipeline_hash = r.data.pipeline.hash();
    r.test_proba = predict_proba1(r.model, test.x);
    r.test = detail::stage("evaluate", [&] { return evaluate_classification(test.y, r.test_proba, &diag); });

    r.manifest = manifest;
    const nlohmann::json mj = manifest;
    r.manifest_hash = manifest_hash(mj);

    auto& j = r.report;
    j = nlohmann::json::object();
    j["format_version"] = 1;
    j["manifest_hash"] = r.manifest_hash;
    j["dataset"] = manifest.dataset;
    j["model"] = to_string(manifest.model.kind);
    j["display_name"] = display_name(manifest.model.kind);
    j["params"] = manifest.model.params;
    j["pipeline_hash"] = r.model.pipeline_hash;
    j["selected_features"] = r.data.pipeline.feature_names();
    j["rows"] = {{"total", m.rows() + r.data.rows_dropped},
                 {"dropped", r.data.rows_dropped},
                 {"train", train.rows()},
                 {"test", test.rows()}};
    j["test"] = r.test;
    j["cv"] = r.cv ? nlohmann::json(*r.cv) : nlohmann::json(nullptr);
    if (r.search)
        j["search"] = {{"objective", r.search->objective}, {"best_index", r.search->best_index},
                       {"best_score", r.search->best_score}, {"evaluated", r.search->table.size()},
                       {"distinct", r.search->distinct}};
    else
        j["search"] = nullptr;
    j["train_log"] = {{"iterations", r.model.log.iterations},
                      {"converged", r.model.log.converged},
                      {"final_loss", r.model.log.final_loss}};
    j["warnings"] = detail::warnings_json(diag);
    return r;
}

inline std::string experiment_markdown(const ExperimentResult& r) {
    return std::string(metrics_markdown_header()) + metrics_markdown_row(display_name(r.manifest.model.kind), r.test);
}

/// Held-out rows with their class-1 probability (%.17g, exact round trip).
inline std::string predictions_csv(const ExperimentResult& r) {
    const auto& y = r.data.selected.y;
    std::string out = "row_id,label,asd_probability\n";
    for (std::size_t i = 0; i < r.split.test.size(); ++i)
        out += std::to_string(r.split.test[i]) + "," + std::to_string(y[r.split.test[i]]) + "," +
               detail::number17(r.test_proba[i]) + "\n";
    return out;
}

/// manifest.json, pipeline.json, ranking.csv, model.json, report.{json,md,csv},
/// predictions.csv, plus grid.csv / grid.json after a search. No timestamps:
/// equal manifests give byte-identical files.
inline void write_experiment(const ExperimentResult& r, const std::filesystem::path& out) {
    detail::stage("write", [&] {
        std::filesystem::create_directories(out);
        write_file(out / "manifest.json", nlohmann::json(r.manifest).dump(2) + "\n");
        write_file(out / "pipeline.json", r.data.pipeline.to_json().dump(2) + "\n");
        write_file(out / "ranking.csv", ranking_to_csv(r.data.ranking));
        write_file(out / "model.json", model_to_json(r.model).dump() + "\n");
        write_file(out / "report.json", r.report.dump(2) + "\n");
        write_file(out / "report.md", experiment_markdown(r));
        write_file(out / "report.csv",
                   std::string(metrics_csv_header()) + metrics_csv_row(display_name(r.manifest.model.kind), r.test));
        write_file(out / "predictions.csv", predictions_csv(r));
        if (r.search) {
            write_file(out / "grid.csv", grid_result_csv(*r.search));
            write_file(out / "grid.json", grid_result_json(*r.search).dump(2) + "\n");
        }
        return 0;
    });
}

// -------------------------------------------------------------- clustering

struct ClusterManifest {
    std::string dataset = "children";
    std::string data_hash;
    PreprocessConfig preprocess;
    std::uint64_t seed = 42;
    ClusterConfig cluster;
    std::size_t seeds = 10;                     ///< restarts of each stochastic algorithm
    std::string seed_selection = "nmi";         ///< nmi | objective
    std::vector<std::string> algorithms{"kmeans", "agglomerative", "gmm", "spectral", "birch"};
};

inline void to_json(nlohmann::json& j, const ClusterManifest& m) {
    j = nlohmann::json::object();
    j["format_version"] = 1;
    j["dataset"] = m.dataset;
    j["data_hash"] = m.data_hash;
    j["preprocess"] = m.preprocess;
    j["seed"] = m.seed;
    j["cluster"] = m.cluster;
    j["seeds"] = m.seeds;
    j["seed_selection"] = m.seed_selection;
    j["algorithms"] = m.algorithms;
}

inline void from_json(const nlohmann::json& j, ClusterManifest& m) {
    if (j.value("format_version", 1) != 1) throw ParseError("unsupported manifest format version");
    m.dataset = j.at("dataset").get<std::string>();
    m.data_hash = j.value("data_hash", std::string{});
    m.preprocess = j.value("preprocess", PreprocessConfig{});
    m.seed = j.value("seed", std::uint64_t{42});
    m.cluster = j.value("cluster", ClusterConfig{});
    m.seeds = j.value("seeds", std::size_t{10});
    m.seed_selection = j.value("seed_selection", std::string("nmi"));
    m.algorithms = j.value("algorithms", ClusterManifest{}.algorithms);
}

struct ClusterRow {
    ClusterAlgorithm algorithm;
    ClusterReport scores;
    ClusterAssignment assignment;
    std::size_t seed_index = 0;  ///< winning restart
};

struct ClusterExperimentResult {
    ClusterManifest manifest;
    std::string manifest_hash;
    PreparedData data;
    std::vector<ClusterRow> rows;
    Diagnostics diag;
    nlohmann::json report;
};

namespace detail {

inline bool stochastic(ClusterAlgorithm a) {
    return a == ClusterAlgorithm::kmeans || a == ClusterAlgorithm::gmm || a == ClusterAlgorithm::spectral;
}

/// Objective-based preference: lower SSE for k-means / spectral, higher
/// likelihood for GMM.
inline bool objective_better(ClusterAlgorithm a, const ClusterAssignment& x, const ClusterAssignment& y) {
    if (!x.objective || !y.objective) return bool(x.objective) && !y.objective;
    return a == ClusterAlgorithm::gmm ? *x.objective > *y.objective : *x.objective < *y.objective;
}

inline ClusterReport score_clustering(const Matrix& m, std::span<const int> truth, const ClusterAssignment& a,
                                      Diagnostics* diag) {
    ClusterReport r;
    r.nmi = nmi(truth, a.labels, diag);
    r.ari = ari(truth, a.labels);
    if (a.used_clusters() < 2 || a.used_clusters() >= m.rows()) {
        warn(diag, "silhouette_undefined", "silhouette needs 2..n-1 clusters; reported as 0");
        r.silhouette = 0.0;
    } else {
        r.silhouette = silhouette(m, a.labels);
    }
    return r;
}

}  // namespace detail

/// Five-algorithm sweep on the selected (label-free) feature matrix; scores
/// against the ASD label. Stochastic algorithms run `seeds` times with
/// seed.split(algo * 1000 + s) and keep the best run by `seed_selection`.
inline ClusterExperimentResult run_clustering_experiment(ClusterManifest manifest,
                                                         const std::filesystem::path& dir = data_dir()) {
    ClusterExperimentResult r;
    auto& diag = r.diag;
    if (manifest.seeds < 1) throw StageError("manifest", "seeds must be >= 1");
    if (manifest.seed_selection != "nmi" && manifest.seed_selection != "objective")
        throw StageError("manifest", "seed_selection must be 'nmi' or 'objective'");
    std::vector<ClusterAlgorithm> algos;
    detail::stage("manifest", [&] {
        for (const auto& a : manifest.algorithms) algos.push_back(cluster_algorithm_from_string(a));
        return 0;
    });
    const DataTable raw = detail::stage("load", [&] {
        if (!dataset_available(manifest.dataset, dir))
            throw Error("dataset '" + manifest.dataset + "' not found (data directory: " + dir.string() + ")");
        manifest.data_hash = dataset_hash(manifest.dataset, dir);
        return load_dataset(manifest.dataset, dir);
    });
    r.data = detail::stage("preprocess", [&] { return prepare(raw, manifest.preprocess, &diag); });
    const auto& m = r.data.selected;
    const SeededRng master(manifest.seed);

    for (auto a : algos) {
        detail::stage("cluster", [&] {
            const std::size_t runs = detail::stochastic(a) ? manifest.seeds : 1;
            std::optional<ClusterRow> best;
            for (std::size_t s = 0; s < runs; ++s) {
                ClusterRow row{a, {}, run_clusterer(a, m.x, manifest.cluster, master.split(std::size_t(a) * 1000 + s), &diag), s};
                row.scores = detail::score_clustering(m.x, m.y, row.assignment, &diag);
                const bool better =
                    !best || (manifest.seed_selection == "nmi" ? row.scores.nmi > best->scores.nmi
                                                               : detail::objective_better(a, row.assignment, best->assignment));
                if (better) best = std::move(row);
            }
            r.rows.push_back(std::move(*best));
            return 0;
        });
    }

    r.manifest = manifest;
    const nlohmann::json mj = manifest;
    r.manifest_hash = manifest_hash(mj);
    auto& j = r.report;
    j = nlohmann::json::object();
    j["format_version"] = 1;
    j["manifest_hash"] = r.manifest_hash;
    j["dataset"] = manifest.dataset;
    j["pipeline_hash"] = r.data.pipeline.hash();
    j["selected_features"] = r.data.pipeline.feature_names();
    j["rows"] = m.rows();
    auto rows = nlohmann::json::array();
    for (const auto& row : r.rows) {
        nlohmann::json jr = row.scores;
        jr["algorithm"] = to_string(row.algorithm);
        jr["display_name"] = display_name(row.algorithm);
        jr["seed_index"] = row.seed_index;
        jr["clusters_used"] = row.assignment.used_clusters();
        jr["objective"] = row.assignment.objective ? nlohmann::json(*row.assignment.objective) : nlohmann::json(nullptr);
        rows.push_back(jr);
    }
    j["algorithms"] = rows;
    j["warnings"] = detail::warnings_json(diag);
    return r;
}

inline std::string cluster_markdown(const ClusterExperimentResult& r) {
    std::string out = cluster_markdown_header();
    for (const auto& row : r.rows) out += cluster_markdown_row(display_name(row.algorithm), row.scores);
    return out;
}

inline std::string cluster_csv(const ClusterExperimentResult& r) {
    std::string out = "model,nmi,ari,silhouette\n";
    for (const auto& row : r.rows)
        out += display_name(row.algorithm) + "," + detail::fixed(row.scores.nmi, 3) + "," +
               detail::fixed(row.scores.ari, 3) + "," + detail::fixed(row.scores.silhouette, 3) + "\n";
    return out;
}

inline void write_clustering(const ClusterExperimentResult& r, const std::filesystem::path& out) {
    detail::stage("write", [&] {
        std::filesystem::create_directories(out);
        write_file(out / "manifest.json", nlohmann::json(r.manifest).dump(2) + "\n");
        write_file(out / "pipeline.json", r.data.pipeline.to_json().dump(2) + "\n");
        write_file(out / "report.json", r.report.dump(2) + "\n");
        write_file(out / "report.md", cluster_markdown(r));
        write_file(out / "report.csv", cluster_csv(r));
        for (const auto& row : r.rows)
            write_file(out / "assignments" / (to_string(row.algorithm) + ".csv"), assignment_to_csv(row.assignment));
        return 0;
    });
}

}  // namespace asdml
