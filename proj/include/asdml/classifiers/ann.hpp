#pragma once

#include "asdml/classifiers/params.hpp"
#include "asdml/dataset.hpp"

namespace asdml {

enum class Optimizer { sgd, adam, rmsprop };

inline Optimizer optimizer_from_string(std::string s) {
    s = detail::lower(s);
    if (s == "sgd") return Optimizer::sgd;
    if (s == "adam") return Optimizer::adam;
    if (s == "rmsprop") return Optimizer::rmsprop;
    throw InvalidArgument("ann: optimizer must be sgd, adam or rmsprop, got '" + s + "'");
}

/// Feed-forward network: [dense(ReLU) -> batch-norm] x hidden, then
/// dense(1, sigmoid). Batch-norm normalizes with batch statistics while
/// training and with running statistics at inference.
struct AnnModel {
    std::vector<Matrix> weights;               ///< layer l: in x out
    std::vector<std::vector<double>> biases;
    std::vector<std::vector<double>> gamma, beta, running_mean, running_var;  ///< one per hidden layer
    double epsilon = 1e-3;

    std::size_t n_features() const { return weights.empty() ? 0 : weights.front().rows(); }
    std::size_t hidden_layers() const { return gamma.size(); }

    std::vector<double> proba1(const Matrix& x) const;
};

/// Gradients with the same layout as the model's trainable parameters.
struct AnnGradients {
    std::vector<Matrix> weights;
    std::vector<std::vector<double>> biases, gamma, beta;
};

namespace detail {

/// c (+)= a * b for row-major a (n x k), b (k x m). Zero entries of `a` are
/// skipped, which pays off on ReLU outputs and one-hot inputs.
inline void gemm_nn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate = false) {
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    if (!accumulate) c = Matrix(n, m);
    for (std::size_t i = 0; i < n; ++i) {
        double* ci = c.row(i).data();
        for (std::size_t t = 0; t < k; ++t) {
            const double av = a(i, t);
            if (av == 0.0) continue;
            const double* bt = b.row(t).data();
            for (std::size_t j = 0; j < m; ++j) ci[j] += av * bt[j];
        }
    }
}

/// c = a^T * b for a (n x k), b (n x m) -> c (k x m).
inline void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c) {
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    c = Matrix(k, m);
    for (std::size_t i = 0; i < n; ++i) {
        const double* bi = b.row(i).data();
        for (std::size_t t = 0; t < k; ++t) {
            const double av = a(i, t);
            if (av == 0.0) continue;
            double* ct = c.row(t).data();
            for (std::size_t j = 0; j < m; ++j) ct[j] += av * bi[j];
        }
    }
}

/// c = a * b^T for a (n x m), b (k x m) -> c (n x k).
inline void gemm_nt(const Matrix& a, const Matrix& b, Matrix& c) {
    const std::size_t n = a.rows(), m = a.cols(), k = b.rows();
    c = Matrix(n, k);
    for (std::size_t i = 0; i < n; ++i) {
        const double* ai = a.row(i).data();
        double* ci = c.row(i).data();
        for (std::size_t t = 0; t < k; ++t) {
            const double* bt = b.row(t).data();
            double s = 0.0;
            for (std::size_t j = 0; j < m; ++j) s += ai[j] * bt[j];
            ci[t] = s;
        }
    }
}

/// Per-layer intermediates of a training-mode forward pass.
struct AnnCache {
    std::vector<Matrix> input;   ///< input to dense layer l
    std::vector<Matrix> pre;     ///< dense output before ReLU
    std::vector<Matrix> xhat;    ///< normalized activations
    std::vector<std::vector<double>> mean, var, inv_std;
    std::vector<double> logits;
};

inline double softplus_loss(double z, int y) {
    return (z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z))) - y * z;
}

/// Training-mode forward pass (batch statistics). Returns the mean binary
/// cross-entropy; fills `cache` for backprop. Running statistics are not
/// touched.
inline double ann_forward_train(const AnnModel& m, const Matrix& x, std::span<const int> y, AnnCache& cache) {
    const std::size_t layers = m.hidden_layers(), b = x.rows();
    cache = {};
    Matrix a = x;
    for (std::size_t l = 0; l < layers; ++l) {
        cache.input.push_back(a);
        Matrix z;
        gemm_nn(a, m.weights[l], z);
        const std::size_t width = z.cols();
        for (std::size_t i = 0; i < b; ++i)
            for (std::size_t j = 0; j < width; ++j) z(i, j) += m.biases[l][j];
        cache.pre.push_back(z);
        std::vector<double> mu(width, 0.0), var(width, 0.0), inv(width);
        for (std::size_t i = 0; i < b; ++i)
            for (std::size_t j = 0; j < width; ++j) mu[j] += std::max(0.0, z(i, j));
        for (auto& v : mu) v /= double(b);
        for (std::size_t i = 0; i < b; ++i)
            for (std::size_t j = 0; j < width; ++j) {
                const double d = std::max(0.0, z(i, j)) - mu[j];
                var[j] += d * d;
            }
        for (std::size_t j = 0; j < width; ++j) {
            var[j] /= double(b);
            inv[j] = 1.0 / std::sqrt(var[j] + m.epsilon);
        }
        Matrix xhat(b, width), out(b, width);
        for (std::size_t i = 0; i < b; ++i)
            for (std::size_t j = 0; j < width; ++j) {
                xhat(i, j) = (std::max(0.0, z(i, j)) - mu[j]) * inv[j];
                out(i, j) = m.gamma[l][j] * xhat(i, j) + m.beta[l][j];
            }
        cache.xhat.push_back(std::move(xhat));
        cache.mean.push_back(std::move(mu));
        cache.var.push_back(std::move(var));
        cache.inv_std.push_back(std::move(inv));
        a = std::move(out);
    }
    cache.input.push_back(a);
    Matrix z;
    gemm_nn(a, m.weights[layers], z);
    cache.logits.resize(b);
    double loss = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        cache.logits[i] = z(i, 0) + m.biases[layers][0];
        loss += softplus_loss(cache.logits[i], y[i]);
    }
    return loss / double(b);
}

inline AnnGradients ann_backward(const AnnModel& m, std::span<const int> y, const AnnCache& cache) {
    const std::size_t layers = m.hidden_layers(), b = y.size();
    AnnGradients g;
    g.weights.resize(layers + 1);
    g.biases.resize(layers + 1);
    g.gamma.resize(layers);
    g.beta.resize(layers);
    Matrix delta(b, 1);
    for (std::size_t i = 0; i < b; ++i) delta(i, 0) = (sigmoid(cache.logits[i]) - y[i]) / double(b);
    gemm_tn(cache.input[layers], delta, g.weights[layers]);
    g.biases[layers] = {0.0};
    for (std::size_t i = 0; i < b; ++i) g.biases[layers][0] += delta(i, 0);
    Matrix upstream;
    gemm_nt(delta, m.weights[layers], upstream);
    for (std::size_t l = layers; l-- > 0;) {
        const Matrix& xhat = cache.xhat[l];
        const std::size_t width = xhat.cols();
        auto& dg = g.gamma[l];
        auto& db = g.beta[l];
        dg.assign(width, 0.0);
        db.assign(width, 0.0);
        std::vector<double> sum_dxhat(width, 0.0), sum_dxhat_xhat(width, 0.0);
        Matrix dxhat(b, width);
        for (std::size_t i = 0; i < b; ++i)
            for (std::size_t j = 0; j < width; ++j) {
                const double d = upstream(i, j);
                dg[j] += d * xhat(i, j);
                db[j] += d;
                dxhat(i, j) = d * m.gamma[l][j];
                sum_dxhat[j] += dxhat(i, j);
                sum_dxhat_xhat[j] += dxhat(i, j) * xhat(i, j);
            }
        Matrix dz(b, width);
        for (std::size_t i = 0; i < b; ++i)
            for (std::size_t j = 0; j < width; ++j) {
                const double dr = cache.inv_std[l][j] / double(b) *
                                  (double(b) * dxhat(i, j) - sum_dxhat[j] - xhat(i, j) * sum_dxhat_xhat[j]);
                dz(i, j) = cache.pre[l](i, j) > 0.0 ? dr : 0.0;
            }
        gemm_tn(cache.input[l], dz, g.weights[l]);
        g.biases[l].assign(width, 0.0);
        for (std::size_t i = 0; i < b; ++i)
            for (std::size_t j = 0; j < width; ++j) g.biases[l][j] += dz(i, j);
        if (l > 0) gemm_nt(dz, m.weights[l], upstream);
    }
    return g;
}

/// Trainable parameters as flat blocks: per hidden layer W, b, gamma, beta;
/// then the output W, b.
inline std::vector<std::span<double>> ann_parameter_blocks(AnnModel& m) {
    std::vector<std::span<double>> out;
    for (std::size_t l = 0; l < m.hidden_layers(); ++l) {
        out.emplace_back(m.weights[l].data());
        out.emplace_back(m.biases[l]);
        out.emplace_back(m.gamma[l]);
        out.emplace_back(m.beta[l]);
    }
    out.emplace_back(m.weights.back().data());
    out.emplace_back(m.biases.back());
    return out;
}

inline std::vector<std::span<double>> ann_gradient_blocks(AnnGradients& g) {
    std::vector<std::span<double>> out;
    for (std::size_t l = 0; l < g.gamma.size(); ++l) {
        out.emplace_back(g.weights[l].data());
        out.emplace_back(g.biases[l]);
        out.emplace_back(g.gamma[l]);
        out.emplace_back(g.beta[l]);
    }
    out.emplace_back(g.weights.back().data());
    out.emplace_back(g.biases.back());
    return out;
}

}  // namespace detail

inline std::vector<double> AnnModel::proba1(const Matrix& x) const {
    detail::check_columns(x, n_features(), "ann");
    Matrix a = x;
    for (std::size_t l = 0; l < hidden_layers(); ++l) {
        Matrix z;
        detail::gemm_nn(a, weights[l], z);
        for (std::size_t i = 0; i < z.rows(); ++i)
            for (std::size_t j = 0; j < z.cols(); ++j) {
                const double r = std::max(0.0, z(i, j) + biases[l][j]);
                z(i, j) = gamma[l][j] * (r - running_mean[l][j]) / std::sqrt(running_var[l][j] + epsilon) +
                          beta[l][j];
            }
        a = std::move(z);
    }
    Matrix z;
    detail::gemm_nn(a, weights.back(), z);
    std::vector<double> p(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) p[i] = sigmoid(z(i, 0) + biases.back()[0]);
    return p;
}

/// Glorot-uniform weights, zero biases, unit batch-norm scale.
inline AnnModel init_ann(std::size_t n_features, const std::vector<std::size_t>& hidden, double epsilon,
                         SeededRng& rng) {
    AnnModel m;
    m.epsilon = epsilon;
    std::size_t in = n_features;
    auto dense = [&](std::size_t out) {
        Matrix w(in, out);
        const double limit = std::sqrt(6.0 / double(in + out));
        for (auto& v : w.data()) v = (2.0 * rng.uniform() - 1.0) * limit;
        m.weights.push_back(std::move(w));
        m.biases.emplace_back(out, 0.0);
        in = out;
    };
    for (std::size_t width : hidden) {
        dense(width);
        m.gamma.emplace_back(width, 1.0);
        m.beta.emplace_back(width, 0.0);
        m.running_mean.emplace_back(width, 0.0);
        m.running_var.emplace_back(width, 1.0);
    }
    dense(1);
    return m;
}

/// Mean training-mode loss and its gradient on one batch.
inline double ann_loss_and_gradient(const AnnModel& m, const Matrix& x, std::span<const int> y,
                                    AnnGradients* grad) {
    detail::AnnCache cache;
    const double loss = detail::ann_forward_train(m, x, y, cache);
    if (grad) *grad = detail::ann_backward(m, y, cache);
    return loss;
}

struct AnnParams {
    Optimizer optimizer = Optimizer::adam;
    std::size_t batch_size = 32;
    double lr_factor = 0.8;
    std::size_t lr_patience = 10;
};

namespace detail {

inline double ann_mean_loss(const AnnModel& m, const Matrix& x, std::span<const int> y) {
    const auto p = m.proba1(x);
    double s = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double q = std::clamp(p[i], 1e-7, 1.0 - 1e-7);
        s -= y[i] ? std::log(q) : std::log1p(-q);
    }
    return s / double(p.size());
}

}  // namespace detail

/// Mini-batch training with learning-rate reduction on validation plateaus
/// and early stopping. Streams: rng.split(0) initializes weights,
/// split(1) draws the validation rows, split(2) shuffles batches.
inline AnnModel train_ann(const Matrix& x, std::span<const int> y, const AnnParams& p,
                          const ModelSettings& s, const SeededRng& rng, TrainLog* log_out = nullptr,
                          Diagnostics* diag = nullptr) {
    detail::check_training_data(x, y, "ann");
    if (p.batch_size < 1) throw InvalidArgument("ann: batch_size must be >= 1");
    if (!(p.lr_factor > 0.0 && p.lr_factor <= 1.0)) throw InvalidArgument("ann: factor must be in (0, 1]");

    SeededRng init_rng = rng.split(0), val_rng = rng.split(1), shuffle_rng = rng.split(2);
    AnnModel model = init_ann(x.cols(), s.ann_hidden, s.ann_bn_epsilon, init_rng);

    std::vector<std::size_t> train_rows, val_rows;
    if (s.ann_validation_fraction > 0.0) {
        try {
            auto split = stratified_split_indices(y, s.ann_validation_fraction, val_rng);
            train_rows = std::move(split.train);
            val_rows = std::move(split.test);
        } catch (const InvalidArgument&) {
            warn(diag, "ann_no_validation", "training set too small for a validation split; monitoring training loss");
        }
    }
    if (train_rows.empty()) {
        train_rows.resize(x.rows());
        std::iota(train_rows.begin(), train_rows.end(), std::size_t{0});
    }
    const Matrix xv = val_rows.empty() ? Matrix() : x.select_rows(val_rows);
    std::vector<int> yv;
    for (auto r : val_rows) yv.push_back(y[r]);

    auto params = detail::ann_parameter_blocks(model);
    std::vector<std::vector<double>> m1(params.size()), m2(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        m1[i].assign(params[i].size(), 0.0);
        m2[i].assign(params[i].size(), 0.0);
    }
    double lr = p.optimizer == Optimizer::sgd ? 1e-2 : s.ann_learning_rate;
    std::int64_t step = 0;

    TrainLog log;
    double best_monitor = std::numeric_limits<double>::infinity();
    double plateau_best = std::numeric_limits<double>::infinity();
    std::size_t plateau_wait = 0, stop_wait = 0;
    AnnModel best_model = model;
    // Zero-started running averages, divided by (1 - momentum^t) like Adam's
    // moments. Keras starts from mean 0 / var 1 instead; with a few batches per
    // epoch that prior still dominates the tiny post-ReLU variances when the
    // best epoch is restored, and the inference outputs drift off calibration.
    auto ema_mean = model.running_mean, ema_var = model.running_var;
    for (auto& v : ema_mean) std::fill(v.begin(), v.end(), 0.0);
    for (auto& v : ema_var) std::fill(v.begin(), v.end(), 0.0);
    double ema_weight = 1.0;
    for (std::int64_t epoch = 0; epoch < s.ann_epochs; ++epoch) {
        std::vector<std::size_t> order = train_rows;
        shuffle_in_place(order, shuffle_rng);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += p.batch_size) {
            const std::size_t end = std::min(order.size(), start + p.batch_size);
            std::vector<std::size_t> idx(order.begin() + std::ptrdiff_t(start), order.begin() + std::ptrdiff_t(end));
            const Matrix xb = x.select_rows(idx);
            std::vector<int> yb;
            for (auto r : idx) yb.push_back(y[r]);
            detail::AnnCache cache;
            const double loss = detail::ann_forward_train(model, xb, yb, cache);
            if (!std::isfinite(loss))
                throw NumericError("ann: non-finite training loss at epoch " + std::to_string(epoch));
            epoch_loss += loss * double(idx.size());
            AnnGradients g = detail::ann_backward(model, yb, cache);
            auto grads = detail::ann_gradient_blocks(g);
            ++step;
            const double b1 = 0.9, b2 = 0.999, eps = 1e-7, rho = 0.9;
            const double lr_t = lr * std::sqrt(1.0 - std::pow(b2, double(step))) / (1.0 - std::pow(b1, double(step)));
            for (std::size_t blk = 0; blk < params.size(); ++blk) {
                auto w = params[blk];
                auto gr = grads[blk];
                auto& ma = m1[blk];
                auto& va = m2[blk];
                for (std::size_t i = 0; i < w.size(); ++i) {
                    switch (p.optimizer) {
                        case Optimizer::sgd: w[i] -= lr * gr[i]; break;
                        case Optimizer::adam:
                            ma[i] = b1 * ma[i] + (1 - b1) * gr[i];
                            va[i] = b2 * va[i] + (1 - b2) * gr[i] * gr[i];
                            w[i] -= lr_t * ma[i] / (std::sqrt(va[i]) + eps);
                            break;
                        case Optimizer::rmsprop:
                            va[i] = rho * va[i] + (1 - rho) * gr[i] * gr[i];
                            w[i] -= lr * gr[i] / (std::sqrt(va[i]) + eps);
                            break;
                    }
                }
            }
            // Running statistics follow the batch statistics of this step.
            ema_weight *= s.ann_bn_momentum;
            for (std::size_t l = 0; l < model.hidden_layers(); ++l)
                for (std::size_t j = 0; j < model.running_mean[l].size(); ++j) {
                    auto& em = ema_mean[l][j];
                    auto& ev = ema_var[l][j];
                    em = s.ann_bn_momentum * em + (1 - s.ann_bn_momentum) * cache.mean[l][j];
                    ev = s.ann_bn_momentum * ev + (1 - s.ann_bn_momentum) * cache.var[l][j];
                    model.running_mean[l][j] = ema_weight < 1.0 ? em / (1.0 - ema_weight) : cache.mean[l][j];
                    model.running_var[l][j] = ema_weight < 1.0 ? ev / (1.0 - ema_weight) : cache.var[l][j];
                }
        }
        epoch_loss /= double(order.size());
        const double monitor = val_rows.empty() ? epoch_loss : detail::ann_mean_loss(model, xv, yv);
        if (!std::isfinite(monitor))
            throw NumericError("ann: non-finite validation loss at epoch " + std::to_string(epoch));
        log.objective.push_back(epoch_loss);
        log.validation.push_back(monitor);
        log.learning_rate.push_back(lr);
        log.iterations = std::size_t(epoch + 1);

        if (monitor < best_monitor) {
            best_monitor = monitor;
            stop_wait = 0;
            if (s.ann_restore_best) best_model = model;
        } else if (++stop_wait >= std::size_t(s.ann_early_stop_patience)) {
            break;
        }
        if (monitor < plateau_best - s.ann_min_delta) {
            plateau_best = monitor;
            plateau_wait = 0;
        } else if (++plateau_wait >= p.lr_patience) {
            lr *= p.lr_factor;
            plateau_wait = 0;
        }
    }
    if (s.ann_restore_best) model = std::move(best_model);
    log.final_loss = log.objective.empty() ? 0.0 : log.objective.back();
    if (log_out) *log_out = std::move(log);
    return model;
}

inline void to_json(nlohmann::json& j, const AnnModel& m) {
    j = nlohmann::json::object();
    j["epsilon"] = m.epsilon;
    j["weights"] = nlohmann::json::array();
    for (const auto& w : m.weights) {
        nlohmann::json jw;
        detail::matrix_to_json(jw, w);
        j["weights"].push_back(std::move(jw));
    }
    j["biases"] = m.biases;
    j["gamma"] = m.gamma;
    j["beta"] = m.beta;
    j["running_mean"] = m.running_mean;
    j["running_var"] = m.running_var;
}
inline void from_json(const nlohmann::json& j, AnnModel& m) {
    m = {};
    j.at("epsilon").get_to(m.epsilon);
    for (const auto& jw : j.at("weights")) m.weights.push_back(detail::matrix_from_json(jw));
    j.at("biases").get_to(m.biases);
    j.at("gamma").get_to(m.gamma);
    j.at("beta").get_to(m.beta);
    j.at("running_mean").get_to(m.running_mean);
    j.at("running_var").get_to(m.running_var);
}

}  // namespace asdml
