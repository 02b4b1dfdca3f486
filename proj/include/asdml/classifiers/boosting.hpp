#pragma once

#include "asdml/classifiers/tree.hpp"

namespace asdml {

/// Additive logistic model: margin(x) = base_margin + sum_m f_m(x), each f_m a
/// regression tree whose leaves carry weights w = -eta * G / (H + lambda).
struct BoostedModel {
    std::vector<DecisionTree> trees;
    double base_margin = 0.0;
    std::size_t n_features = 0;

    double margin(std::span<const double> row) const {
        double s = base_margin;
        for (const auto& t : trees) s += t.evaluate(row);
        return s;
    }

    std::vector<double> proba1(const Matrix& x) const {
        detail::check_columns(x, n_features, "gradient_boost");
        std::vector<double> p(x.rows());
        for (std::size_t r = 0; r < x.rows(); ++r) p[r] = sigmoid(margin(x.row(r)));
        return p;
    }
};

struct BoostParams {
    std::size_t n_estimators = 100;
    std::size_t max_depth = 6;
    double learning_rate = 0.3;
    double lambda = 1.0;
    double gamma = 0.0;
    double min_child_weight = 1.0;
    double base_margin = 0.0;
};

namespace detail {

inline double boost_score(double g, double h, double lambda) { return g * g / (h + lambda); }

/// Exact greedy second-order tree, grown depth-wise to `max_depth`.
inline DecisionTree grow_boost_tree(const Matrix& x, std::span<const double> g, std::span<const double> h,
                                    const BoostParams& p) {
    DecisionTree tree;
    tree.n_features = x.cols();
    struct Pending {
        std::vector<std::size_t> rows;
        std::size_t depth;
        int node;
    };
    std::vector<std::size_t> all(x.rows());
    std::iota(all.begin(), all.end(), std::size_t{0});
    tree.nodes.push_back({});
    std::vector<Pending> stack;
    stack.push_back({std::move(all), 0, 0});
    std::vector<std::pair<double, std::size_t>> vals;
    while (!stack.empty()) {
        Pending cur = std::move(stack.back());
        stack.pop_back();
        double G = 0, H = 0;
        for (auto r : cur.rows) {
            G += g[r];
            H += h[r];
        }
        {
            TreeNode& node = tree.nodes[std::size_t(cur.node)];
            node.samples = cur.rows.size();
            node.value = -p.learning_rate * G / (H + p.lambda);
        }
        if (cur.depth >= p.max_depth || cur.rows.size() < 2) continue;
        const double parent = boost_score(G, H, p.lambda);
        double best_gain = 0.0, best_thr = 0.0;
        int best_f = -1;
        for (std::size_t f = 0; f < x.cols(); ++f) {
            vals.clear();
            for (auto r : cur.rows) vals.emplace_back(x(r, f), r);
            std::sort(vals.begin(), vals.end());
            double gl = 0, hl = 0;
            for (std::size_t i = 0; i + 1 < vals.size(); ++i) {
                gl += g[vals[i].second];
                hl += h[vals[i].second];
                if (vals[i].first == vals[i + 1].first) continue;
                const double gr = G - gl, hr = H - hl;
                if (hl < p.min_child_weight || hr < p.min_child_weight) continue;
                const double gain =
                    0.5 * (boost_score(gl, hl, p.lambda) + boost_score(gr, hr, p.lambda) - parent) - p.gamma;
                if (gain > best_gain) {
                    best_gain = gain;
                    best_f = int(f);
                    best_thr = midpoint(vals[i].first, vals[i + 1].first);
                }
            }
        }
        if (best_f < 0) continue;
        std::vector<std::size_t> left, right;
        for (auto r : cur.rows) (x(r, std::size_t(best_f)) <= best_thr ? left : right).push_back(r);
        const int li = int(tree.nodes.size()), ri = li + 1;
        tree.nodes.push_back({});
        tree.nodes.push_back({});
        TreeNode& node = tree.nodes[std::size_t(cur.node)];
        node.feature = best_f;
        node.threshold = best_thr;
        node.left = li;
        node.right = ri;
        stack.push_back({std::move(right), cur.depth + 1, ri});
        stack.push_back({std::move(left), cur.depth + 1, li});
    }
    // Internal nodes keep their would-be leaf weight in `value` for inspection;
    // evaluate() only ever returns leaf values.
    return tree;
}

inline double mean_log_loss_from_margins(std::span<const double> margin, std::span<const int> y) {
    double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double z = margin[i];
        s += (z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z))) - y[i] * z;
    }
    return s / double(y.size());
}

}  // namespace detail

/// log->objective[m] is the training log loss after m rounds (index 0 = base).
inline BoostedModel train_gradient_boost(const Matrix& x, std::span<const int> y, const BoostParams& p,
                                         TrainLog* log = nullptr) {
    detail::check_training_data(x, y, "gradient_boost");
    if (!(p.learning_rate > 0.0 && p.learning_rate <= 1.0))
        throw InvalidArgument("gradient_boost: learning_rate must be in (0, 1]");
    if (p.max_depth < 1) throw InvalidArgument("gradient_boost: max_depth must be >= 1");
    const std::size_t n = x.rows();
    BoostedModel model;
    model.base_margin = p.base_margin;
    model.n_features = x.cols();
    std::vector<double> margin(n, p.base_margin), g(n), h(n);
    TrainLog local;
    local.objective.push_back(detail::mean_log_loss_from_margins(margin, y));
    for (std::size_t m = 0; m < p.n_estimators; ++m) {
        for (std::size_t i = 0; i < n; ++i) {
            const double q = sigmoid(margin[i]);
            g[i] = q - y[i];
            h[i] = q * (1.0 - q);
        }
        model.trees.push_back(detail::grow_boost_tree(x, g, h, p));
        const auto& t = model.trees.back();
        for (std::size_t i = 0; i < n; ++i) margin[i] += t.evaluate(x.row(i));
        local.objective.push_back(detail::mean_log_loss_from_margins(margin, y));
    }
    local.iterations = p.n_estimators;
    local.final_loss = local.objective.back();
    if (log) *log = std::move(local);
    return model;
}

inline void to_json(nlohmann::json& j, const BoostedModel& m) {
    j = {{"n_features", m.n_features}, {"base_margin", m.base_margin}, {"trees", m.trees}};
}
inline void from_json(const nlohmann::json& j, BoostedModel& m) {
    j.at("n_features").get_to(m.n_features);
    j.at("base_margin").get_to(m.base_margin);
    j.at("trees").get_to(m.trees);
}

}  // namespace asdml
