#pragma once

#include <limits>

#include "asdml/classifiers/params.hpp"

namespace asdml {

enum class Criterion { gini, entropy };

inline Criterion criterion_from_string(const std::string& s) {
    if (s == "gini") return Criterion::gini;
    if (s == "entropy") return Criterion::entropy;
    throw InvalidArgument("criterion must be 'gini' or 'entropy', got '" + s + "'");
}

/// Binary split node or leaf. Rows with x[feature] <= threshold go left.
struct TreeNode {
    int feature = -1;  ///< -1 for leaves
    double threshold = 0.0;
    int left = -1, right = -1;
    double value = 0.0;  ///< class-1 fraction (classification) or leaf weight (boosting)
    std::size_t samples = 0;

    bool is_leaf() const { return feature < 0; }
    friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct DecisionTree {
    std::vector<TreeNode> nodes;
    std::size_t n_features = 0;

    double evaluate(std::span<const double> row) const {
        std::size_t i = 0;
        while (!nodes[i].is_leaf())
            i = std::size_t(row[std::size_t(nodes[i].feature)] <= nodes[i].threshold ? nodes[i].left
                                                                                    : nodes[i].right);
        return nodes[i].value;
    }

    std::size_t depth() const {
        std::vector<std::size_t> d(nodes.size(), 0);
        std::size_t best = 0;
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            best = std::max(best, d[i]);
            if (!nodes[i].is_leaf()) d[std::size_t(nodes[i].left)] = d[std::size_t(nodes[i].right)] = d[i] + 1;
        }
        return best;
    }

    std::size_t leaves() const {
        std::size_t c = 0;
        for (const auto& n : nodes) c += n.is_leaf();
        return c;
    }

    std::vector<double> proba1(const Matrix& x) const {
        detail::check_columns(x, n_features, "decision_tree");
        std::vector<double> p(x.rows());
        for (std::size_t r = 0; r < x.rows(); ++r) p[r] = evaluate(x.row(r));
        return p;
    }

    friend bool operator==(const DecisionTree&, const DecisionTree&) = default;
};

struct TreeParams {
    Criterion criterion = Criterion::gini;
    std::size_t max_depth = std::numeric_limits<std::size_t>::max();
    std::size_t min_samples_split = 2;
    std::size_t min_samples_leaf = 1;
    std::size_t max_features = 0;  ///< features tried per split; 0 = all, in column order
};

namespace detail {

inline double impurity(Criterion c, double pos, double total) {
    if (total <= 0.0) return 0.0;
    const double p = pos / total, q = 1.0 - p;
    if (c == Criterion::gini) return 1.0 - p * p - q * q;
    double h = 0.0;
    if (p > 0) h -= p * std::log2(p);
    if (q > 0) h -= q * std::log2(q);
    return h;
}

struct SplitChoice {
    bool found = false;
    std::size_t feature = 0;
    double threshold = 0.0;
    double improvement = -std::numeric_limits<double>::infinity();
};

inline double midpoint(double a, double b) {
    const double m = a + (b - a) / 2.0;
    return m == b ? a : m;
}

/// Best-first over features, then ascending threshold; a later candidate
/// replaces the incumbent only when strictly better.
inline SplitChoice best_class_split(const Matrix& x, std::span<const int> y,
                                    std::span<const std::size_t> rows, const TreeParams& p,
                                    SeededRng* rng) {
    const std::size_t m = rows.size(), d = x.cols();
    double pos = 0;
    for (auto r : rows) pos += y[r];
    const double parent = impurity(p.criterion, pos, double(m));

    std::vector<std::size_t> order(d);
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t budget = p.max_features == 0 || p.max_features >= d ? d : p.max_features;
    if (budget < d && rng) shuffle_in_place(order, *rng);

    SplitChoice best;
    std::vector<std::pair<double, int>> vals(m);
    std::size_t evaluated = 0;
    for (std::size_t f : order) {
        if (evaluated >= budget) break;
        for (std::size_t i = 0; i < m; ++i) vals[i] = {x(rows[i], f), y[rows[i]]};
        std::sort(vals.begin(), vals.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
        if (vals.front().first == vals.back().first) continue;  // constant here: not counted
        ++evaluated;
        double left_pos = 0;
        for (std::size_t i = 0; i + 1 < m; ++i) {
            left_pos += vals[i].second;
            if (vals[i].first == vals[i + 1].first) continue;
            const std::size_t nl = i + 1, nr = m - nl;
            if (nl < p.min_samples_leaf || nr < p.min_samples_leaf) continue;
            const double child = (double(nl) * impurity(p.criterion, left_pos, double(nl)) +
                                  double(nr) * impurity(p.criterion, pos - left_pos, double(nr))) /
                                 double(m);
            const double imp = parent - child;
            if (imp > best.improvement) {
                best = {true, f, midpoint(vals[i].first, vals[i + 1].first), imp};
            }
        }
    }
    return best;
}

}  // namespace detail

/// CART growth on `rows` (duplicates allowed, e.g. bootstrap samples).
/// Splits are taken whenever constraints allow, even with zero impurity
/// decrease; growth stops on purity, depth, or sample-count limits.
inline DecisionTree grow_classification_tree(const Matrix& x, std::span<const int> y,
                                             std::vector<std::size_t> rows, const TreeParams& p,
                                             SeededRng* rng = nullptr) {
    if (rows.empty()) throw InvalidArgument("decision_tree: no training rows");
    DecisionTree tree;
    tree.n_features = x.cols();
    struct Pending {
        std::vector<std::size_t> rows;
        std::size_t depth;
        int node;
    };
    std::vector<Pending> stack;
    tree.nodes.push_back({});
    stack.push_back({std::move(rows), 0, 0});
    while (!stack.empty()) {
        Pending cur = std::move(stack.back());
        stack.pop_back();
        const std::size_t m = cur.rows.size();
        double pos = 0;
        for (auto r : cur.rows) pos += y[r];
        TreeNode& node = tree.nodes[std::size_t(cur.node)];
        node.samples = m;
        node.value = pos / double(m);
        const bool pure = pos == 0 || pos == double(m);
        if (pure || cur.depth >= p.max_depth || m < p.min_samples_split || m < 2 * p.min_samples_leaf)
            continue;
        const auto split = detail::best_class_split(x, y, cur.rows, p, rng);
        if (!split.found) continue;
        std::vector<std::size_t> left, right;
        for (auto r : cur.rows) (x(r, split.feature) <= split.threshold ? left : right).push_back(r);
        const int li = int(tree.nodes.size()), ri = li + 1;
        tree.nodes.push_back({});
        tree.nodes.push_back({});
        TreeNode& parent = tree.nodes[std::size_t(cur.node)];
        parent.feature = int(split.feature);
        parent.threshold = split.threshold;
        parent.left = li;
        parent.right = ri;
        stack.push_back({std::move(right), cur.depth + 1, ri});
        stack.push_back({std::move(left), cur.depth + 1, li});
    }
    return tree;
}

inline DecisionTree train_decision_tree(const Matrix& x, std::span<const int> y, const TreeParams& p) {
    detail::check_training_data(x, y, "decision_tree");
    if (p.max_depth < 1 || p.min_samples_split < 2 || p.min_samples_leaf < 1)
        throw InvalidArgument("decision_tree: max_depth >= 1, min_samples_split >= 2, min_samples_leaf >= 1");
    std::vector<std::size_t> rows(x.rows());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    TreeParams all = p;
    all.max_features = 0;
    return grow_classification_tree(x, y, std::move(rows), all);
}

enum class MaxFeatures { sqrt, log2, all };

/// 'auto' is the classic alias of 'sqrt' for classification forests.
inline MaxFeatures max_features_from_string(const std::string& s) {
    if (s == "sqrt" || s == "auto") return MaxFeatures::sqrt;
    if (s == "log2") return MaxFeatures::log2;
    if (s == "all" || s == "none" || s == "None") return MaxFeatures::all;
    throw InvalidArgument("max_features must be 'auto', 'sqrt', 'log2' or 'all', got '" + s + "'");
}

inline std::size_t resolve_max_features(MaxFeatures mf, std::size_t d) {
    switch (mf) {
        case MaxFeatures::sqrt: return std::max<std::size_t>(1, std::size_t(std::sqrt(double(d))));
        case MaxFeatures::log2: return std::max<std::size_t>(1, std::size_t(std::log2(double(d))));
        case MaxFeatures::all: return d;
    }
    return d;
}

struct ForestModel {
    std::vector<DecisionTree> trees;
    std::size_t n_features = 0;

    std::vector<double> proba1(const Matrix& x) const {
        detail::check_columns(x, n_features, "random_forest");
        std::vector<double> p(x.rows(), 0.0);
        for (const auto& t : trees)
            for (std::size_t r = 0; r < x.rows(); ++r) p[r] += t.evaluate(x.row(r));
        for (auto& v : p) v /= double(trees.size());
        return p;
    }
};

/// Tree t draws its bootstrap sample and feature subsets from rng.split(t), so
/// every tree is reproducible on its own.
inline ForestModel train_random_forest(const Matrix& x, std::span<const int> y, std::size_t n_estimators,
                                       TreeParams p, MaxFeatures max_features, const SeededRng& rng,
                                       bool bootstrap = true) {
    detail::check_training_data(x, y, "random_forest");
    if (n_estimators < 1) throw InvalidArgument("random_forest: n_estimators must be >= 1");
    if (p.max_depth < 1 || p.min_samples_split < 2 || p.min_samples_leaf < 1)
        throw InvalidArgument("random_forest: max_depth >= 1, min_samples_split >= 2, min_samples_leaf >= 1");
    p.max_features = resolve_max_features(max_features, x.cols());
    ForestModel f;
    f.n_features = x.cols();
    const std::size_t n = x.rows();
    for (std::size_t t = 0; t < n_estimators; ++t) {
        SeededRng tr = rng.split(t);
        std::vector<std::size_t> rows(n);
        if (bootstrap)
            for (auto& r : rows) r = tr.uniform_int(n);
        else
            std::iota(rows.begin(), rows.end(), std::size_t{0});
        f.trees.push_back(grow_classification_tree(x, y, std::move(rows), p, &tr));
    }
    return f;
}

inline void to_json(nlohmann::json& j, const TreeNode& n) {
    if (n.is_leaf())
        j = {{"value", n.value}, {"samples", n.samples}};
    else
        j = {{"feature", n.feature}, {"threshold", n.threshold}, {"left", n.left},
             {"right", n.right},     {"value", n.value},         {"samples", n.samples}};
}
inline void from_json(const nlohmann::json& j, TreeNode& n) {
    n = {};
    n.value = j.at("value").get<double>();
    n.samples = j.value("samples", std::size_t{0});
    if (j.contains("feature")) {
        n.feature = j.at("feature").get<int>();
        n.threshold = j.at("threshold").get<double>();
        n.left = j.at("left").get<int>();
        n.right = j.at("right").get<int>();
    }
}
inline void to_json(nlohmann::json& j, const DecisionTree& t) {
    j = {{"n_features", t.n_features}, {"nodes", t.nodes}};
}
inline void from_json(const nlohmann::json& j, DecisionTree& t) {
    j.at("n_features").get_to(t.n_features);
    j.at("nodes").get_to(t.nodes);
}
inline void to_json(nlohmann::json& j, const ForestModel& f) {
    j = {{"n_features", f.n_features}, {"trees", f.trees}};
}
inline void from_json(const nlohmann::json& j, ForestModel& f) {
    j.at("n_features").get_to(f.n_features);
    j.at("trees").get_to(f.trees);
}

}  // namespace asdml
