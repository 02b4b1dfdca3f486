#pragma once

#include "asdml/classifiers/params.hpp"

namespace asdml {

enum class KnnWeights { uniform, distance };

/// Brute-force Euclidean k-nearest neighbours. Equidistant neighbours are
/// ordered by training-row index.
struct KnnModel {
    Matrix x;
    std::vector<int> y;
    std::size_t k = 1;
    KnnWeights weights = KnnWeights::uniform;

    std::size_t n_features() const { return x.cols(); }

    double proba1_row(std::span<const double> q) const {
        const std::size_t n = x.rows();
        std::vector<std::pair<double, std::size_t>> d(n);
        for (std::size_t i = 0; i < n; ++i) d[i] = {squared_distance(q, x.row(i)), i};
        std::partial_sort(d.begin(), d.begin() + std::ptrdiff_t(k), d.end());
        if (weights == KnnWeights::uniform) {
            double pos = 0;
            for (std::size_t t = 0; t < k; ++t) pos += y[d[t].second];
            return pos / double(k);
        }
        // Inverse distance; exact matches, if any, take all the weight.
        double pos = 0, total = 0;
        const bool exact = d[0].first == 0.0;
        for (std::size_t t = 0; t < k; ++t) {
            double w;
            if (exact)
                w = d[t].first == 0.0 ? 1.0 : 0.0;
            else
                w = 1.0 / std::sqrt(d[t].first);
            pos += w * y[d[t].second];
            total += w;
        }
        return pos / total;
    }

    std::vector<double> proba1(const Matrix& q) const {
        detail::check_columns(q, n_features(), "knn");
        std::vector<double> p(q.rows());
        for (std::size_t r = 0; r < q.rows(); ++r) p[r] = proba1_row(q.row(r));
        return p;
    }
};

inline KnnWeights knn_weights_from_string(const std::string& s) {
    if (s == "uniform") return KnnWeights::uniform;
    if (s == "distance") return KnnWeights::distance;
    throw InvalidArgument("knn: weights must be 'uniform' or 'distance', got '" + s + "'");
}

/// `leaf_size` and `algorithm` only matter for tree-based search; the brute
/// force search used here gives identical neighbours, so they are accepted and
/// ignored.
inline KnnModel train_knn(const Matrix& x, std::span<const int> y, std::size_t n_neighbors,
                          KnnWeights weights) {
    detail::check_training_data(x, y, "knn");
    if (n_neighbors < 1 || n_neighbors > x.rows())
        throw InvalidArgument("knn: n_neighbors=" + std::to_string(n_neighbors) + " must be in [1, " +
                              std::to_string(x.rows()) + "]");
    return {x, std::vector<int>(y.begin(), y.end()), n_neighbors, weights};
}

inline void to_json(nlohmann::json& j, const KnnModel& m) {
    detail::matrix_to_json(j["x"], m.x);
    j["y"] = m.y;
    j["k"] = m.k;
    j["weights"] = m.weights == KnnWeights::uniform ? "uniform" : "distance";
}
inline void from_json(const nlohmann::json& j, KnnModel& m) {
    m.x = detail::matrix_from_json(j.at("x"));
    j.at("y").get_to(m.y);
    j.at("k").get_to(m.k);
    m.weights = knn_weights_from_string(j.at("weights").get<std::string>());
}

}  // namespace asdml
