#pragma once

#include "asdml/classifiers/params.hpp"

namespace asdml {

enum class Penalty { l1, l2 };

inline Penalty penalty_from_string(const std::string& s) {
    if (s == "l1") return Penalty::l1;
    if (s == "l2") return Penalty::l2;
    throw InvalidArgument("logistic_regression: penalty must be 'l1' or 'l2', got '" + s + "'");
}

/// J(w, b) = mean binary cross-entropy + (1/c) R(w), with R = ||w||^2 / 2 (l2)
/// or ||w||_1 (l1). The intercept b is not penalized. Parameters are packed
/// as theta = [w_0 .. w_{d-1}, b].
struct LogisticObjective {
    const Matrix& x;
    std::span<const int> y;
    Penalty penalty;
    double c;

    std::size_t dim() const { return x.cols() + 1; }

    double margin(std::span<const double> theta, std::size_t r) const {
        const std::size_t d = x.cols();
        return dot(x.row(r), theta.first(d)) + theta[d];
    }

    double loss(std::span<const double> theta) const {
        double s = 0.0;
        for (std::size_t r = 0; r < x.rows(); ++r) {
            const double z = margin(theta, r);
            // softplus(z) - y z, evaluated stably.
            s += (z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z))) - y[r] * z;
        }
        return s / double(x.rows());
    }

    double penalty_value(std::span<const double> theta) const {
        double r = 0.0;
        for (std::size_t j = 0; j + 1 < theta.size(); ++j)
            r += penalty == Penalty::l2 ? 0.5 * theta[j] * theta[j] : std::abs(theta[j]);
        return r / c;
    }

    double value(std::span<const double> theta) const { return loss(theta) + penalty_value(theta); }

    /// Gradient of the smooth part (loss, plus the l2 term when applicable).
    std::vector<double> gradient(std::span<const double> theta) const {
        const std::size_t d = x.cols(), n = x.rows();
        std::vector<double> g(d + 1, 0.0);
        for (std::size_t r = 0; r < n; ++r) {
            const double e = sigmoid(margin(theta, r)) - y[r];
            const auto row = x.row(r);
            for (std::size_t j = 0; j < d; ++j) g[j] += e * row[j];
            g[d] += e;
        }
        for (auto& v : g) v /= double(n);
        if (penalty == Penalty::l2)
            for (std::size_t j = 0; j < d; ++j) g[j] += theta[j] / c;
        return g;
    }

    /// Norm of the minimum-norm subgradient; zero exactly at the optimum.
    double optimality(std::span<const double> theta, const std::vector<double>& g) const {
        double s = 0.0;
        const std::size_t d = x.cols();
        for (std::size_t j = 0; j <= d; ++j) {
            double v = g[j];
            if (penalty == Penalty::l1 && j < d) {
                if (theta[j] > 0) v += 1.0 / c;
                else if (theta[j] < 0) v -= 1.0 / c;
                else v = std::max(0.0, std::abs(v) - 1.0 / c);
            }
            s += v * v;
        }
        return std::sqrt(s);
    }
};

struct LogisticModel {
    std::vector<double> coef;
    double intercept = 0.0;

    std::size_t n_features() const { return coef.size(); }

    std::vector<double> proba1(const Matrix& x) const {
        detail::check_columns(x, n_features(), "logistic_regression");
        std::vector<double> p(x.rows());
        for (std::size_t r = 0; r < x.rows(); ++r) p[r] = sigmoid(dot(x.row(r), coef) + intercept);
        return p;
    }
};

namespace detail {

/// Damped Newton for the l2 problem.
inline std::vector<double> logistic_newton(const LogisticObjective& f, const ModelSettings& s,
                                           TrainLog& log) {
    const std::size_t d = f.x.cols(), n = f.x.rows(), dim = d + 1;
    std::vector<double> theta(dim, 0.0);
    double value = f.value(theta);
    log.objective.push_back(value);
    for (std::int64_t it = 0; it < s.logistic_max_iter; ++it) {
        auto g = f.gradient(theta);
        if (f.optimality(theta, g) < s.logistic_tolerance) {
            log.iterations = std::size_t(it);
            return theta;
        }
        Matrix h(dim, dim);
        for (std::size_t r = 0; r < n; ++r) {
            const double p = sigmoid(f.margin(theta, r));
            const double w = p * (1.0 - p) / double(n);
            const auto row = f.x.row(r);
            for (std::size_t a = 0; a < dim; ++a) {
                const double xa = a < d ? row[a] : 1.0;
                if (xa == 0.0) continue;
                for (std::size_t b = 0; b <= a; ++b) h(a, b) += w * xa * (b < d ? row[b] : 1.0);
            }
        }
        for (std::size_t a = 0; a < dim; ++a) {
            for (std::size_t b = 0; b < a; ++b) h(b, a) = h(a, b);
            h(a, a) += (a < d ? 1.0 / f.c : 0.0) + 1e-12;
        }
        Matrix l;
        for (double jitter = 0.0;; jitter = jitter == 0.0 ? 1e-10 : jitter * 100) {
            try {
                Matrix hj = h;
                for (std::size_t a = 0; a < dim; ++a) hj(a, a) += jitter;
                l = cholesky(hj);
                break;
            } catch (const NumericError&) {
                if (jitter > 1.0) throw;
            }
        }
        // Solve L L^T step = g.
        std::vector<double> z(dim), step(dim);
        for (std::size_t a = 0; a < dim; ++a) {
            double v = g[a];
            for (std::size_t b = 0; b < a; ++b) v -= l(a, b) * z[b];
            z[a] = v / l(a, a);
        }
        for (std::size_t a = dim; a-- > 0;) {
            double v = z[a];
            for (std::size_t b = a + 1; b < dim; ++b) v -= l(b, a) * step[b];
            step[a] = v / l(a, a);
        }
        const double slope = -dot(g, step);
        double t = 1.0;
        std::vector<double> trial(dim);
        for (int ls = 0; ls < 60; ++ls, t *= 0.5) {
            for (std::size_t a = 0; a < dim; ++a) trial[a] = theta[a] - t * step[a];
            const double v = f.value(trial);
            if (v <= value + 1e-4 * t * slope) break;
        }
        const double next = f.value(trial);
        if (!(next <= value)) break;  // no further progress possible in floating point
        theta = trial;
        value = next;
        log.objective.push_back(value);
    }
    log.iterations = std::size_t(s.logistic_max_iter);
    log.converged = f.optimality(theta, f.gradient(theta)) < s.logistic_tolerance;
    return theta;
}

/// Proximal Newton for the l1 problem: quadratic model of the loss minimized
/// by cyclic coordinate descent, then a backtracking line search on the full
/// objective.
inline std::vector<double> logistic_prox_newton(const LogisticObjective& f, const ModelSettings& s,
                                                TrainLog& log) {
    const std::size_t d = f.x.cols(), n = f.x.rows(), dim = d + 1;
    const double lam = 1.0 / f.c;
    std::vector<double> theta(dim, 0.0);
    auto col = [&](std::size_t r, std::size_t j) { return j < d ? f.x(r, j) : 1.0; };
    double value = f.value(theta);
    log.objective.push_back(value);
    const std::int64_t max_outer = s.logistic_max_iter * 5;
    for (std::int64_t it = 0; it < max_outer; ++it) {
        const auto g = f.gradient(theta);
        if (f.optimality(theta, g) < s.logistic_tolerance) {
            log.iterations = std::size_t(it);
            return theta;
        }
        std::vector<double> w(n);
        for (std::size_t r = 0; r < n; ++r) {
            const double p = sigmoid(f.margin(theta, r));
            w[r] = std::max(p * (1.0 - p), 1e-10) / double(n);
        }
        std::vector<double> hdiag(dim, 0.0);
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t j = 0; j < dim; ++j) hdiag[j] += w[r] * col(r, j) * col(r, j);
        // Coordinate descent on g'delta + delta'H delta/2 + lam |theta + delta|_1.
        std::vector<double> delta(dim, 0.0), xd(n, 0.0);
        for (int sweep = 0; sweep < 200; ++sweep) {
            double biggest = 0.0;
            for (std::size_t j = 0; j < dim; ++j) {
                if (hdiag[j] <= 0.0) continue;
                double hd = 0.0;  // (H delta)_j
                for (std::size_t r = 0; r < n; ++r) hd += w[r] * col(r, j) * xd[r];
                const double gj = g[j] + hd;
                double nd;
                if (j == d) {
                    nd = delta[j] - gj / hdiag[j];
                } else {
                    const double u = theta[j] + delta[j] - gj / hdiag[j];
                    const double shrunk = std::copysign(std::max(0.0, std::abs(u) - lam / hdiag[j]), u);
                    nd = shrunk - theta[j];
                }
                const double change = nd - delta[j];
                if (change != 0.0) {
                    for (std::size_t r = 0; r < n; ++r) xd[r] += change * col(r, j);
                    delta[j] = nd;
                    biggest = std::max(biggest, std::abs(change) * std::sqrt(hdiag[j]));
                }
            }
            if (biggest < 1e-12) break;
        }
        double l1_now = 0.0, l1_next = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            l1_now += std::abs(theta[j]);
            l1_next += std::abs(theta[j] + delta[j]);
        }
        const double decrease = dot(g, delta) + lam * (l1_next - l1_now);
        if (!(decrease < 0.0)) break;
        std::vector<double> trial(dim);
        double t = 1.0, next = value;
        for (int ls = 0; ls < 60; ++ls, t *= 0.5) {
            for (std::size_t j = 0; j < dim; ++j) trial[j] = theta[j] + t * delta[j];
            next = f.value(trial);
            if (next <= value + 1e-4 * t * decrease) break;
        }
        if (!(next <= value)) break;
        theta = trial;
        value = next;
        log.objective.push_back(value);
    }
    log.iterations = std::size_t(max_outer);
    log.converged = f.optimality(theta, f.gradient(theta)) < s.logistic_tolerance;
    return theta;
}

}  // namespace detail

/// Non-convergence is recorded in `log` (converged = false), not thrown.
inline LogisticModel train_logistic_regression(const Matrix& x, std::span<const int> y, Penalty penalty,
                                               double c, const ModelSettings& s = {},
                                               TrainLog* log_out = nullptr) {
    detail::check_training_data(x, y, "logistic_regression");
    if (!(c > 0.0)) throw InvalidArgument("logistic_regression: C must be > 0");
    LogisticObjective f{x, y, penalty, c};
    TrainLog log;
    auto theta = penalty == Penalty::l2 ? detail::logistic_newton(f, s, log)
                                        : detail::logistic_prox_newton(f, s, log);
    log.final_loss = f.value(theta);
    if (!log.converged) log.converged = f.optimality(theta, f.gradient(theta)) < s.logistic_tolerance;
    LogisticModel m;
    m.coef.assign(theta.begin(), theta.end() - 1);
    m.intercept = theta.back();
    if (log_out) *log_out = std::move(log);
    return m;
}

inline void to_json(nlohmann::json& j, const LogisticModel& m) {
    j = {{"coef", m.coef}, {"intercept", m.intercept}};
}
inline void from_json(const nlohmann::json& j, LogisticModel& m) {
    j.at("coef").get_to(m.coef);
    j.at("intercept").get_to(m.intercept);
}

}  // namespace asdml
