#pragma once

// One train / predict / predict_proba contract over the eight classifiers.

#include <variant>

#include "asdml/classifiers/ann.hpp"
#include "asdml/classifiers/boosting.hpp"
#include "asdml/classifiers/knn.hpp"
#include "asdml/classifiers/logistic.hpp"
#include "asdml/classifiers/naive_bayes.hpp"
#include "asdml/classifiers/params.hpp"
#include "asdml/classifiers/svm.hpp"
#include "asdml/classifiers/tree.hpp"
#include "asdml/metrics.hpp"

namespace asdml {

inline constexpr int kModelFormatVersion = 1;

using ModelState = std::variant<NaiveBayesModel, KnnModel, SvmModel, DecisionTree, ForestModel,
                                BoostedModel, LogisticModel, AnnModel>;

struct TrainedModel {
    ModelSpec spec;
    ModelState state;
    std::size_t n_features = 0;
    std::vector<std::string> feature_names;  ///< encoded column names, in order
    std::string pipeline_hash;               ///< hash of the preprocessing that produced the columns
    TrainLog log;
};

namespace detail {

inline std::size_t positive_count(const ParamPoint& p, std::string_view key) {
    const auto v = p.get_int(key);
    if (v < 1) throw InvalidArgument("hyperparameter '" + std::string(key) + "' must be >= 1");
    return std::size_t(v);
}

inline TreeParams tree_params(const ParamPoint& p, Diagnostics* diag) {
    TreeParams t;
    t.criterion = criterion_from_string(p.get_string("criterion"));
    t.max_depth = positive_count(p, "max_depth");
    auto split = p.get_int("min_samples_split");
    if (split < 2) {
        warn(diag, "param_clamped", "min_samples_split=" + std::to_string(split) + " clamped to 2");
        split = 2;
    }
    t.min_samples_split = std::size_t(split);
    t.min_samples_leaf = positive_count(p, "min_samples_leaf");
    return t;
}

inline void check_knn_algorithm(const std::string& a) {
    if (a != "auto" && a != "ball_tree" && a != "kd_tree" && a != "brute")
        throw InvalidArgument("knn: algorithm must be auto, ball_tree, kd_tree or brute, got '" + a + "'");
}

}  // namespace detail

/// Trains `spec` on (x, y). Stochastic models draw only from `rng`, so equal
/// inputs give identical models.
inline TrainedModel train_model(const ModelSpec& spec, const Matrix& x, std::span<const int> y,
                                const SeededRng& rng, Diagnostics* diag = nullptr) {
    validate_params(spec);
    const ParamPoint& p = spec.params;
    const ModelSettings& s = spec.settings;
    TrainedModel out;
    out.spec = spec;
    out.n_features = x.cols();
    switch (spec.kind) {
        case ModelKind::naive_bayes:
            out.state = train_naive_bayes(x, y, p.get_double("var_smoothing"));
            break;
        case ModelKind::knn:
            detail::check_knn_algorithm(p.get_string("algorithm"));
            detail::positive_count(p, "leaf_size");
            out.state = train_knn(x, y, detail::positive_count(p, "n_neighbors"),
                                  knn_weights_from_string(p.get_string("weights")));
            break;
        case ModelKind::svm:
            out.state = train_svm(x, y, p.get_double("C"), kernel_from_string(p.get_string("kernel")),
                                  int(p.get_int("degree")), s, &out.log);
            break;
        case ModelKind::decision_tree:
            out.state = train_decision_tree(x, y, detail::tree_params(p, diag));
            break;
        case ModelKind::random_forest:
            out.state = train_random_forest(x, y, detail::positive_count(p, "n_estimators"),
                                            detail::tree_params(p, diag),
                                            max_features_from_string(p.get_string("max_features")), rng,
                                            s.forest_bootstrap);
            break;
        case ModelKind::gradient_boost: {
            BoostParams bp;
            bp.n_estimators = detail::positive_count(p, "n_estimators");
            bp.max_depth = detail::positive_count(p, "max_depth");
            bp.learning_rate = p.get_double("learning_rate");
            bp.lambda = s.boost_lambda;
            bp.gamma = s.boost_gamma;
            bp.min_child_weight = s.boost_min_child_weight;
            bp.base_margin = s.boost_base_margin;
            out.state = train_gradient_boost(x, y, bp, &out.log);
            break;
        }
        case ModelKind::logistic_regression:
            out.state = train_logistic_regression(x, y, penalty_from_string(p.get_string("penalty")),
                                                  p.get_double("C"), s, &out.log);
            if (!out.log.converged)
                warn(diag, "not_converged", "logistic_regression stopped before the gradient tolerance");
            break;
        case ModelKind::ann: {
            if (p.get_string("loss") != "binary_crossentropy")
                throw InvalidArgument("ann: only loss='binary_crossentropy' is supported");
            AnnParams ap;
            ap.optimizer = optimizer_from_string(p.get_string("optimizer"));
            ap.batch_size = detail::positive_count(p, "batch_size");
            ap.lr_factor = p.get_double("factor");
            ap.lr_patience = detail::positive_count(p, "patience");
            out.state = train_ann(x, y, ap, s, rng, &out.log, diag);
            break;
        }
    }
    return out;
}

inline TrainedModel train_model(const ModelSpec& spec, const DesignMatrix& m, const SeededRng& rng,
                                Diagnostics* diag = nullptr) {
    auto model = train_model(spec, m.x, m.y, rng, diag);
    for (const auto& c : m.columns) model.feature_names.push_back(c.name());
    return model;
}

/// Class-1 probabilities, clipped to [1e-15, 1 - 1e-15].
inline std::vector<double> predict_proba1(const TrainedModel& model, const Matrix& x) {
    if (x.cols() != model.n_features)
        throw InvalidArgument("predict: model expects " + std::to_string(model.n_features) + " columns, got " +
                              std::to_string(x.cols()));
    auto p = std::visit([&](const auto& st) { return st.proba1(x); }, model.state);
    for (auto& v : p) v = clip_probability(v);
    return p;
}

/// n x 2 matrix of (P(class 0), P(class 1)).
inline Matrix predict_proba(const TrainedModel& model, const Matrix& x) {
    const auto p = predict_proba1(model, x);
    Matrix out(p.size(), 2);
    for (std::size_t i = 0; i < p.size(); ++i) {
        out(i, 1) = p[i];
        out(i, 0) = 1.0 - p[i];
    }
    return out;
}

/// Class 1 iff P(class 1) >= 0.5; an exact tie screens positive.
inline std::vector<int> predict(const TrainedModel& model, const Matrix& x) {
    const auto p = predict_proba1(model, x);
    std::vector<int> out(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) out[i] = p[i] >= 0.5 ? 1 : 0;
    return out;
}

inline nlohmann::json model_to_json(const TrainedModel& m) {
    nlohmann::json j;
    j["format_version"] = kModelFormatVersion;
    j["spec"] = m.spec;
    j["n_features"] = m.n_features;
    j["feature_names"] = m.feature_names;
    j["pipeline_hash"] = m.pipeline_hash;
    j["train_log"] = m.log;
    std::visit([&](const auto& st) { j["state"] = st; }, m.state);
    return j;
}

inline TrainedModel model_from_json(const nlohmann::json& j) {
    try {
        const int version = j.at("format_version").get<int>();
        if (version != kModelFormatVersion)
            throw ParseError("unsupported model format version " + std::to_string(version));
        TrainedModel m;
        m.spec = j.at("spec").get<ModelSpec>();
        m.n_features = j.at("n_features").get<std::size_t>();
        m.feature_names = j.value("feature_names", std::vector<std::string>{});
        m.pipeline_hash = j.value("pipeline_hash", std::string{});
        if (j.contains("train_log")) m.log = j.at("train_log").get<TrainLog>();
        const auto& st = j.at("state");
        switch (m.spec.kind) {
            case ModelKind::naive_bayes: m.state = st.get<NaiveBayesModel>(); break;
            case ModelKind::knn: m.state = st.get<KnnModel>(); break;
            case ModelKind::svm: m.state = st.get<SvmModel>(); break;
            case ModelKind::decision_tree: m.state = st.get<DecisionTree>(); break;
            case ModelKind::random_forest: m.state = st.get<ForestModel>(); break;
            case ModelKind::gradient_boost: m.state = st.get<BoostedModel>(); break;
            case ModelKind::logistic_regression: m.state = st.get<LogisticModel>(); break;
            case ModelKind::ann: m.state = st.get<AnnModel>(); break;
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed model document: ") + e.what());
    }
}

}  // namespace asdml
