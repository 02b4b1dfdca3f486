#pragma once

#include "asdml/classifiers/params.hpp"

namespace asdml {

enum class KernelKind { linear, poly, rbf, sigmoid };

inline KernelKind kernel_from_string(const std::string& s) {
    if (s == "linear") return KernelKind::linear;
    if (s == "poly") return KernelKind::poly;
    if (s == "rbf") return KernelKind::rbf;
    if (s == "sigmoid") return KernelKind::sigmoid;
    throw InvalidArgument("svm: kernel must be linear, poly, rbf or sigmoid, got '" + s + "'");
}

inline const char* to_string(KernelKind k) {
    switch (k) {
        case KernelKind::linear: return "linear";
        case KernelKind::poly: return "poly";
        case KernelKind::rbf: return "rbf";
        case KernelKind::sigmoid: return "sigmoid";
    }
    return "?";
}

/// k(a, b) with coef0 = 0; gamma fixed at training time.
struct Kernel {
    KernelKind kind = KernelKind::linear;
    double gamma = 1.0;
    int degree = 3;

    double operator()(std::span<const double> a, std::span<const double> b) const {
        switch (kind) {
            case KernelKind::linear: return dot(a, b);
            case KernelKind::poly: return std::pow(gamma * dot(a, b), degree);
            case KernelKind::rbf: return std::exp(-gamma * squared_distance(a, b));
            case KernelKind::sigmoid: return std::tanh(gamma * dot(a, b));
        }
        return 0.0;
    }
};

/// gamma = 1 / (n_features * variance of all training entries), or 1 if that
/// variance is zero.
inline double scale_gamma(const Matrix& x) {
    const auto& v = x.data();
    if (v.empty()) return 1.0;
    const double mu = mean(v);
    double s = 0;
    for (double a : v) s += (a - mu) * (a - mu);
    const double var = s / double(v.size());
    return var > 0 ? 1.0 / (double(x.cols()) * var) : 1.0;
}

struct SvmModel {
    Kernel kernel;
    Matrix support;             ///< support vectors (rows)
    std::vector<double> coef;   ///< alpha_i * y_i
    double rho = 0.0;           ///< decision(x) = sum coef_i k(sv_i, x) - rho
    double platt_a = 0.0, platt_b = 0.0;  ///< P(y=1 | f) = 1 / (1 + exp(a f + b))
    std::size_t n_features = 0;

    double decision(std::span<const double> row) const {
        double s = -rho;
        for (std::size_t i = 0; i < support.rows(); ++i) s += coef[i] * kernel(support.row(i), row);
        return s;
    }

    std::vector<double> decision_function(const Matrix& x) const {
        detail::check_columns(x, n_features, "svm");
        std::vector<double> f(x.rows());
        for (std::size_t r = 0; r < x.rows(); ++r) f[r] = decision(x.row(r));
        return f;
    }

    std::vector<double> proba1(const Matrix& x) const {
        auto f = decision_function(x);
        for (auto& v : f) v = sigmoid(-(platt_a * v + platt_b));
        return f;
    }

    /// Primal weights; meaningful for the linear kernel only.
    std::vector<double> linear_weights() const {
        std::vector<double> w(n_features, 0.0);
        for (std::size_t i = 0; i < support.rows(); ++i)
            for (std::size_t j = 0; j < n_features; ++j) w[j] += coef[i] * support(i, j);
        return w;
    }
};

namespace detail {

/// Sigmoid fit of decision values to smoothed targets (Newton with
/// backtracking, as in Lin, Lin & Weng's note on Platt scaling).
inline std::pair<double, double> platt_fit(std::span<const double> dec, std::span<const int> y) {
    double prior1 = 0, prior0 = 0;
    for (int v : y) (v == 1 ? prior1 : prior0) += 1;
    const double hi = (prior1 + 1.0) / (prior1 + 2.0), lo = 1.0 / (prior0 + 2.0);
    const std::size_t n = dec.size();
    std::vector<double> t(n);
    for (std::size_t i = 0; i < n; ++i) t[i] = y[i] == 1 ? hi : lo;
    double a = 0.0, b = std::log((prior0 + 1.0) / (prior1 + 1.0));
    auto objective = [&](double aa, double bb) {
        double f = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double z = dec[i] * aa + bb;
            f += z >= 0 ? t[i] * z + std::log1p(std::exp(-z)) : (t[i] - 1.0) * z + std::log1p(std::exp(z));
        }
        return f;
    };
    double fval = objective(a, b);
    for (int it = 0; it < 100; ++it) {
        double h11 = 1e-12, h22 = 1e-12, h21 = 0, g1 = 0, g2 = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double z = dec[i] * a + b;
            double p, q;
            if (z >= 0) {
                p = std::exp(-z) / (1.0 + std::exp(-z));
                q = 1.0 / (1.0 + std::exp(-z));
            } else {
                p = 1.0 / (1.0 + std::exp(z));
                q = std::exp(z) / (1.0 + std::exp(z));
            }
            const double d2 = p * q;
            h11 += dec[i] * dec[i] * d2;
            h22 += d2;
            h21 += dec[i] * d2;
            const double d1 = t[i] - p;
            g1 += dec[i] * d1;
            g2 += d1;
        }
        if (std::abs(g1) < 1e-5 && std::abs(g2) < 1e-5) break;
        const double det = h11 * h22 - h21 * h21;
        const double da = -(h22 * g1 - h21 * g2) / det;
        const double db = -(-h21 * g1 + h11 * g2) / det;
        const double gd = g1 * da + g2 * db;
        double step = 1.0;
        while (step >= 1e-10) {
            const double na = a + step * da, nb = b + step * db;
            const double nf = objective(na, nb);
            if (nf < fval + 1e-4 * step * gd) {
                a = na;
                b = nb;
                fval = nf;
                break;
            }
            step /= 2.0;
        }
        if (step < 1e-10) break;
    }
    return {a, b};
}

}  // namespace detail

/// Soft-margin C-SVC dual solved by SMO with second-order working-set
/// selection, stopping when the maximal KKT violation drops below
/// `tolerance`. Throws NumericError if `max_iter` is reached first.
inline SvmModel train_svm(const Matrix& x, std::span<const int> labels, double c, KernelKind kind,
                          int degree, const ModelSettings& s = {}, TrainLog* log = nullptr) {
    detail::check_training_data(x, labels, "svm");
    if (!(c > 0.0)) throw InvalidArgument("svm: C must be > 0");
    if (kind == KernelKind::poly && degree < 1) throw InvalidArgument("svm: degree must be >= 1");
    const std::size_t n = x.rows();
    SvmModel model;
    model.n_features = x.cols();
    model.kernel = {kind, scale_gamma(x), degree};

    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = labels[i] == 1 ? 1.0 : -1.0;
    Matrix k(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j <= i; ++j) k(i, j) = k(j, i) = model.kernel(x.row(i), x.row(j));

    constexpr double tau = 1e-12;
    std::vector<double> alpha(n, 0.0), grad(n, -1.0);
    auto upper = [&](std::size_t t) { return alpha[t] >= c; };
    auto lower = [&](std::size_t t) { return alpha[t] <= 0.0; };

    std::int64_t iter = 0;
    for (;; ++iter) {
        double gmax = -std::numeric_limits<double>::infinity();
        std::ptrdiff_t i_sel = -1;
        for (std::size_t t = 0; t < n; ++t) {
            if (y[t] > 0 ? !upper(t) : !lower(t)) {
                const double v = -y[t] * grad[t];
                if (v >= gmax) {
                    gmax = v;
                    i_sel = std::ptrdiff_t(t);
                }
            }
        }
        double gmax2 = -std::numeric_limits<double>::infinity(), best = std::numeric_limits<double>::infinity();
        std::ptrdiff_t j_sel = -1;
        if (i_sel >= 0) {
            const std::size_t i = std::size_t(i_sel);
            for (std::size_t t = 0; t < n; ++t) {
                if (y[t] > 0 ? lower(t) : upper(t)) continue;
                const double v = y[t] * grad[t];
                gmax2 = std::max(gmax2, v);
                const double diff = gmax + v;
                if (diff > 0) {
                    double quad = k(i, i) + k(t, t) - 2.0 * k(i, t);
                    if (quad <= 0) quad = tau;
                    const double obj = -diff * diff / quad;
                    if (obj <= best) {
                        best = obj;
                        j_sel = std::ptrdiff_t(t);
                    }
                }
            }
        }
        if (i_sel < 0 || j_sel < 0 || gmax + gmax2 < s.svm_tolerance) break;
        if (iter >= s.svm_max_iter)
            throw NumericError("svm: SMO did not reach tolerance after " + std::to_string(iter) + " iterations");

        const std::size_t i = std::size_t(i_sel), j = std::size_t(j_sel);
        const double ai_old = alpha[i], aj_old = alpha[j];
        const double qij = y[i] * y[j] * k(i, j);
        if (y[i] != y[j]) {
            double quad = k(i, i) + k(j, j) + 2.0 * qij;
            if (quad <= 0) quad = tau;
            const double delta = (-grad[i] - grad[j]) / quad;
            const double diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if (diff > 0) {
                if (alpha[j] < 0) {
                    alpha[j] = 0;
                    alpha[i] = diff;
                }
            } else if (alpha[i] < 0) {
                alpha[i] = 0;
                alpha[j] = -diff;
            }
            if (diff > 0) {
                if (alpha[i] > c) {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if (alpha[j] > c) {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            double quad = k(i, i) + k(j, j) - 2.0 * qij;
            if (quad <= 0) quad = tau;
            const double delta = (grad[i] - grad[j]) / quad;
            const double sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if (sum > c) {
                if (alpha[i] > c) {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if (alpha[j] < 0) {
                alpha[j] = 0;
                alpha[i] = sum;
            }
            if (sum > c) {
                if (alpha[j] > c) {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if (alpha[i] < 0) {
                alpha[i] = 0;
                alpha[j] = sum;
            }
        }
        const double dai = alpha[i] - ai_old, daj = alpha[j] - aj_old;
        for (std::size_t t = 0; t < n; ++t)
            grad[t] += y[t] * (y[i] * k(t, i) * dai + y[j] * k(t, j) * daj);
    }

    // Offset from free vectors, else the midpoint of the feasible interval.
    double ub = std::numeric_limits<double>::infinity(), lb = -ub, sum_free = 0;
    std::size_t n_free = 0;
    for (std::size_t t = 0; t < n; ++t) {
        const double yg = y[t] * grad[t];
        if (upper(t)) {
            if (y[t] < 0) ub = std::min(ub, yg);
            else lb = std::max(lb, yg);
        } else if (lower(t)) {
            if (y[t] > 0) ub = std::min(ub, yg);
            else lb = std::max(lb, yg);
        } else {
            ++n_free;
            sum_free += yg;
        }
    }
    model.rho = n_free > 0 ? sum_free / double(n_free) : (ub + lb) / 2.0;

    std::vector<std::size_t> sv;
    for (std::size_t t = 0; t < n; ++t)
        if (alpha[t] > 0) sv.push_back(t);
    model.support = x.select_rows(sv);
    for (auto t : sv) model.coef.push_back(alpha[t] * y[t]);

    std::vector<double> dec(n);
    for (std::size_t t = 0; t < n; ++t) dec[t] = model.decision(x.row(t));
    std::tie(model.platt_a, model.platt_b) = detail::platt_fit(dec, labels);

    if (log) {
        // Dual objective 0.5 a'Qa - e'a = 0.5 * sum a_t (grad_t - 1).
        double dual = 0;
        for (std::size_t t = 0; t < n; ++t) dual += 0.5 * alpha[t] * (grad[t] - 1.0);
        log->iterations = std::size_t(iter);
        log->final_loss = dual;
        log->converged = true;
    }
    return model;
}

inline void to_json(nlohmann::json& j, const SvmModel& m) {
    j = {{"kernel", to_string(m.kernel.kind)}, {"gamma", m.kernel.gamma}, {"degree", m.kernel.degree},
         {"coef", m.coef}, {"rho", m.rho}, {"platt_a", m.platt_a}, {"platt_b", m.platt_b},
         {"n_features", m.n_features}};
    detail::matrix_to_json(j["support"], m.support);
}
inline void from_json(const nlohmann::json& j, SvmModel& m) {
    m.kernel.kind = kernel_from_string(j.at("kernel").get<std::string>());
    j.at("gamma").get_to(m.kernel.gamma);
    j.at("degree").get_to(m.kernel.degree);
    j.at("coef").get_to(m.coef);
    j.at("rho").get_to(m.rho);
    j.at("platt_a").get_to(m.platt_a);
    j.at("platt_b").get_to(m.platt_b);
    j.at("n_features").get_to(m.n_features);
    m.support = detail::matrix_from_json(j.at("support"));
}

}  // namespace asdml
