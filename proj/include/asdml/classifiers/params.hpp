#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "asdml/core.hpp"
#include "asdml/numerics.hpp"
#include "json.hpp"

namespace asdml {

enum class ModelKind {
    naive_bayes,
    knn,
    svm,
    decision_tree,
    random_forest,
    gradient_boost,
    logistic_regression,
    ann
};

inline constexpr std::array<ModelKind, 8> kAllModelKinds{
    ModelKind::naive_bayes,   ModelKind::knn,           ModelKind::svm,
    ModelKind::random_forest, ModelKind::decision_tree, ModelKind::gradient_boost,
    ModelKind::logistic_regression, ModelKind::ann};

inline const char* to_string(ModelKind k) {
    switch (k) {
        case ModelKind::naive_bayes: return "naive_bayes";
        case ModelKind::knn: return "knn";
        case ModelKind::svm: return "svm";
        case ModelKind::decision_tree: return "decision_tree";
        case ModelKind::random_forest: return "random_forest";
        case ModelKind::gradient_boost: return "gradient_boost";
        case ModelKind::logistic_regression: return "logistic_regression";
        case ModelKind::ann: return "ann";
    }
    return "?";
}

/// Row label used in result tables.
inline const char* display_name(ModelKind k) {
    switch (k) {
        case ModelKind::naive_bayes: return "Naive Bayes";
        case ModelKind::knn: return "k-Nearest Neighbors";
        case ModelKind::svm: return "Support Vector Machine";
        case ModelKind::decision_tree: return "Decision Tree";
        case ModelKind::random_forest: return "Random Forest";
        case ModelKind::gradient_boost: return "Extreme Gradient Boosting";
        case ModelKind::logistic_regression: return "Logistic Regression";
        case ModelKind::ann: return "Artificial Neural Network";
    }
    return "?";
}

/// Accepts the canonical names plus the short aliases used on the command line.
inline ModelKind model_kind_from_string(std::string_view s) {
    for (ModelKind k : kAllModelKinds)
        if (s == to_string(k)) return k;
    if (s == "nb") return ModelKind::naive_bayes;
    if (s == "dt" || s == "tree") return ModelKind::decision_tree;
    if (s == "rf" || s == "forest") return ModelKind::random_forest;
    if (s == "xgb" || s == "xgboost" || s == "boost") return ModelKind::gradient_boost;
    if (s == "lr" || s == "logistic") return ModelKind::logistic_regression;
    if (s == "nn" || s == "mlp") return ModelKind::ann;
    throw InvalidArgument("unknown model kind '" + std::string(s) + "'");
}

using ParamValue = std::variant<std::int64_t, double, std::string>;

inline std::string to_string(const ParamValue& v) {
    if (auto* i = std::get_if<std::int64_t>(&v)) return std::to_string(*i);
    if (auto* d = std::get_if<double>(&v)) {
        nlohmann::json j = *d;
        return j.dump();
    }
    return std::get<std::string>(v);
}

/// One hyperparameter assignment; keys keep grid-axis order.
struct ParamPoint {
    std::vector<std::pair<std::string, ParamValue>> values;

    ParamPoint() = default;
    ParamPoint(std::initializer_list<std::pair<std::string, ParamValue>> init) : values(init) {}

    const ParamValue* find(std::string_view key) const {
        for (const auto& [k, v] : values)
            if (k == key) return &v;
        return nullptr;
    }
    const ParamValue& at(std::string_view key) const {
        if (auto* v = find(key)) return *v;
        throw InvalidArgument("missing hyperparameter '" + std::string(key) + "'");
    }
    void set(std::string key, ParamValue v) {
        for (auto& [k, old] : values)
            if (k == key) {
                old = std::move(v);
                return;
            }
        values.emplace_back(std::move(key), std::move(v));
    }

    std::int64_t get_int(std::string_view key) const {
        const auto& v = at(key);
        if (auto* i = std::get_if<std::int64_t>(&v)) return *i;
        if (auto* d = std::get_if<double>(&v); d && std::floor(*d) == *d) return std::int64_t(*d);
        throw InvalidArgument("hyperparameter '" + std::string(key) + "' must be an integer");
    }
    double get_double(std::string_view key) const {
        const auto& v = at(key);
        if (auto* d = std::get_if<double>(&v)) return *d;
        if (auto* i = std::get_if<std::int64_t>(&v)) return double(*i);
        throw InvalidArgument("hyperparameter '" + std::string(key) + "' must be numeric");
    }
    const std::string& get_string(std::string_view key) const {
        const auto& v = at(key);
        if (auto* s = std::get_if<std::string>(&v)) return *s;
        throw InvalidArgument("hyperparameter '" + std::string(key) + "' must be a string");
    }

    /// "k=v, k=v" in key order.
    std::string describe() const {
        std::string s;
        for (const auto& [k, v] : values) s += (s.empty() ? "" : ", ") + k + "=" + to_string(v);
        return s;
    }

    friend bool operator==(const ParamPoint&, const ParamPoint&) = default;
};

inline void to_json(nlohmann::json& j, const ParamValue& v) {
    std::visit([&](const auto& x) { j = x; }, v);
}
inline void from_json(const nlohmann::json& j, ParamValue& v) {
    if (j.is_number_integer())
        v = j.get<std::int64_t>();
    else if (j.is_number())
        v = j.get<double>();
    else if (j.is_string())
        v = j.get<std::string>();
    else
        throw ParseError("hyperparameter values must be numbers or strings");
}

/// Serialized as an array of [key, value] pairs so that axis order survives.
inline void to_json(nlohmann::json& j, const ParamPoint& p) {
    j = nlohmann::json::array();
    for (const auto& [k, v] : p.values) {
        nlohmann::json jv;
        to_json(jv, v);
        j.push_back(nlohmann::json::array({k, jv}));
    }
}
inline void from_json(const nlohmann::json& j, ParamPoint& p) {
    p.values.clear();
    auto value = [](const nlohmann::json& jv) {
        ParamValue v;
        from_json(jv, v);
        return v;
    };
    if (j.is_object()) {
        for (const auto& [k, v] : j.items()) p.values.emplace_back(k, value(v));
        return;
    }
    for (const auto& kv : j) p.values.emplace_back(kv.at(0).get<std::string>(), value(kv.at(1)));
}

/// Hyperparameter names each kind accepts (the axes of its search grid).
inline std::vector<std::string> param_keys(ModelKind k) {
    switch (k) {
        case ModelKind::naive_bayes: return {"var_smoothing"};
        case ModelKind::knn: return {"n_neighbors", "weights", "algorithm", "leaf_size"};
        case ModelKind::svm: return {"C", "kernel", "degree"};
        case ModelKind::random_forest:
            return {"n_estimators", "max_features", "max_depth", "min_samples_split",
                    "min_samples_leaf", "criterion"};
        case ModelKind::decision_tree:
            return {"criterion", "max_depth", "min_samples_split", "min_samples_leaf"};
        case ModelKind::gradient_boost: return {"max_depth", "n_estimators", "learning_rate"};
        case ModelKind::logistic_regression: return {"penalty", "C"};
        case ModelKind::ann: return {"optimizer", "loss", "batch_size", "factor", "patience"};
    }
    return {};
}

/// Settings that are fixed by design rather than searched. Recorded in every
/// manifest so a run can be reproduced exactly.
struct ModelSettings {
    // Gradient boosting.
    double boost_lambda = 1.0;
    double boost_gamma = 0.0;
    double boost_min_child_weight = 1.0;
    double boost_base_margin = 0.0;
    // Random forest.
    bool forest_bootstrap = true;
    // SVM.
    double svm_tolerance = 1e-3;
    std::int64_t svm_max_iter = 2'000'000;
    // Logistic regression.
    double logistic_tolerance = 1e-6;
    std::int64_t logistic_max_iter = 200;  // Newton steps; the L1 solver gets 1000x this
    // Neural network.
    std::vector<std::size_t> ann_hidden{1024, 512, 512};
    std::int64_t ann_epochs = 200;
    std::int64_t ann_early_stop_patience = 25;
    double ann_validation_fraction = 0.1;
    double ann_learning_rate = 1e-3;  ///< adam / rmsprop; sgd uses 1e-2
    double ann_bn_momentum = 0.99;
    double ann_bn_epsilon = 1e-3;
    double ann_min_delta = 1e-4;
    bool ann_restore_best = true;

    friend bool operator==(const ModelSettings&, const ModelSettings&) = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(
    ModelSettings, boost_lambda, boost_gamma, boost_min_child_weight, boost_base_margin,
    forest_bootstrap, svm_tolerance, svm_max_iter, logistic_tolerance, logistic_max_iter, ann_hidden,
    ann_epochs, ann_early_stop_patience, ann_validation_fraction, ann_learning_rate,
    ann_bn_momentum, ann_bn_epsilon, ann_min_delta, ann_restore_best)

struct ModelSpec {
    ModelKind kind = ModelKind::logistic_regression;
    ParamPoint params;
    ModelSettings settings;
};

/// Throws unless `spec.params` has exactly the keys of its kind.
inline void validate_params(const ModelSpec& spec) {
    const auto keys = param_keys(spec.kind);
    for (const auto& k : keys)
        if (!spec.params.find(k))
            throw InvalidArgument(std::string(to_string(spec.kind)) + ": missing hyperparameter '" + k + "'");
    for (const auto& [k, v] : spec.params.values)
        if (std::find(keys.begin(), keys.end(), k) == keys.end())
            throw InvalidArgument(std::string(to_string(spec.kind)) + ": unknown hyperparameter '" + k + "'");
}

inline void to_json(nlohmann::json& j, const ModelSpec& s) {
    j = {{"kind", to_string(s.kind)}, {"params", s.params}, {"settings", s.settings}};
}
inline void from_json(const nlohmann::json& j, ModelSpec& s) {
    s.kind = model_kind_from_string(j.at("kind").get<std::string>());
    s.params = j.at("params").get<ParamPoint>();
    if (j.contains("settings")) s.settings = j.at("settings").get<ModelSettings>();
}

/// Per-iteration record of an iterative trainer.
struct TrainLog {
    std::vector<double> objective;       ///< training loss per round / epoch / iteration
    std::vector<double> validation;      ///< ANN validation loss per epoch
    std::vector<double> learning_rate;   ///< ANN learning rate per epoch
    std::size_t iterations = 0;
    bool converged = true;
    double final_loss = 0.0;
};

inline void to_json(nlohmann::json& j, const TrainLog& l) {
    j = {{"objective", l.objective},   {"validation", l.validation},
         {"learning_rate", l.learning_rate}, {"iterations", l.iterations},
         {"converged", l.converged},   {"final_loss", l.final_loss}};
}
inline void from_json(const nlohmann::json& j, TrainLog& l) {
    l.objective = j.value("objective", std::vector<double>{});
    l.validation = j.value("validation", std::vector<double>{});
    l.learning_rate = j.value("learning_rate", std::vector<double>{});
    l.iterations = j.value("iterations", std::size_t{0});
    l.converged = j.value("converged", true);
    l.final_loss = j.value("final_loss", 0.0);
}

namespace detail {

inline void check_training_data(const Matrix& x, std::span<const int> y, const char* who) {
    if (x.rows() == 0) throw InvalidArgument(std::string(who) + ": empty training set");
    if (x.rows() != y.size()) throw InvalidArgument(std::string(who) + ": label count mismatch");
    bool seen[2] = {false, false};
    for (int v : y) {
        if (v != 0 && v != 1) throw InvalidArgument(std::string(who) + ": labels must be 0 or 1");
        seen[v] = true;
    }
    if (!seen[0] || !seen[1])
        throw InvalidArgument(std::string(who) + ": training data must contain both classes");
}

inline void check_columns(const Matrix& x, std::size_t expected, const char* who) {
    if (x.cols() != expected)
        throw InvalidArgument(std::string(who) + ": expected " + std::to_string(expected) +
                              " columns, got " + std::to_string(x.cols()));
}

inline void matrix_to_json(nlohmann::json& j, const Matrix& m) {
    j = {{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.data()}};
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
    return Matrix(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
                  j.at("data").get<std::vector<double>>());
}

}  // namespace detail

}  // namespace asdml
