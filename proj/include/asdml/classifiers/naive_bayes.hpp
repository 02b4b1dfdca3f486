#pragma once

#include "asdml/classifiers/params.hpp"

namespace asdml {

/// Gaussian naive Bayes. Every class variance is widened by
/// var_smoothing * (largest per-feature variance of the training data).
struct NaiveBayesModel {
    std::array<double, 2> log_prior{};
    std::array<std::vector<double>, 2> mean, var;
    double epsilon = 0.0;

    std::size_t n_features() const { return mean[0].size(); }

    std::array<double, 2> joint_log_likelihood(std::span<const double> row) const {
        std::array<double, 2> jll{};
        for (int c = 0; c < 2; ++c) {
            double s = log_prior[c];
            for (std::size_t j = 0; j < row.size(); ++j) {
                const double d = row[j] - mean[c][j];
                s -= 0.5 * std::log(2.0 * 3.14159265358979323846 * var[c][j]) + 0.5 * d * d / var[c][j];
            }
            jll[c] = s;
        }
        return jll;
    }

    std::vector<double> proba1(const Matrix& x) const {
        detail::check_columns(x, n_features(), "naive_bayes");
        std::vector<double> p(x.rows());
        for (std::size_t r = 0; r < x.rows(); ++r) {
            const auto jll = joint_log_likelihood(x.row(r));
            p[r] = sigmoid(jll[1] - jll[0]);
        }
        return p;
    }
};

inline NaiveBayesModel train_naive_bayes(const Matrix& x, std::span<const int> y, double var_smoothing) {
    detail::check_training_data(x, y, "naive_bayes");
    if (!(var_smoothing >= 0.0)) throw InvalidArgument("naive_bayes: var_smoothing must be >= 0");
    const std::size_t n = x.rows(), d = x.cols();
    auto variance = [&](std::size_t j, int cls, double mu) {
        double s = 0.0, cnt = 0.0;
        for (std::size_t r = 0; r < n; ++r)
            if (cls < 0 || y[r] == cls) {
                s += (x(r, j) - mu) * (x(r, j) - mu);
                cnt += 1.0;
            }
        return s / cnt;
    };
    auto average = [&](std::size_t j, int cls) {
        double s = 0.0, cnt = 0.0;
        for (std::size_t r = 0; r < n; ++r)
            if (cls < 0 || y[r] == cls) {
                s += x(r, j);
                cnt += 1.0;
            }
        return s / cnt;
    };
    NaiveBayesModel m;
    double max_var = 0.0;
    for (std::size_t j = 0; j < d; ++j) max_var = std::max(max_var, variance(j, -1, average(j, -1)));
    m.epsilon = var_smoothing * max_var;
    double count[2] = {0, 0};
    for (int v : y) count[v] += 1.0;
    for (int c = 0; c < 2; ++c) {
        m.log_prior[c] = std::log(count[c] / double(n));
        m.mean[c].resize(d);
        m.var[c].resize(d);
        for (std::size_t j = 0; j < d; ++j) {
            m.mean[c][j] = average(j, c);
            m.var[c][j] = variance(j, c, m.mean[c][j]) + m.epsilon;
            if (!(m.var[c][j] > 0.0))
                throw NumericError("naive_bayes: zero variance in column " + std::to_string(j) +
                                   "; use var_smoothing > 0");
        }
    }
    return m;
}

inline void to_json(nlohmann::json& j, const NaiveBayesModel& m) {
    j = {{"log_prior", m.log_prior}, {"mean", m.mean}, {"var", m.var}, {"epsilon", m.epsilon}};
}
inline void from_json(const nlohmann::json& j, NaiveBayesModel& m) {
    j.at("log_prior").get_to(m.log_prior);
    j.at("mean").get_to(m.mean);
    j.at("var").get_to(m.var);
    j.at("epsilon").get_to(m.epsilon);
}

}  // namespace asdml
