#pragma once

// Hard-assignment clusterers: k-means, agglomerative, Gaussian mixture,
// spectral and BIRCH. All are pure functions of (data, config, seed).

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "asdml/core.hpp"
#include "asdml/numerics.hpp"
#include "json.hpp"

namespace asdml {

struct ClusterAssignment {
    std::vector<int> labels;           ///< 0..k-1, numbered by first appearance
    std::size_t k = 0;                 ///< requested cluster count
    std::optional<double> objective;   ///< k-means SSE, GMM mean log-likelihood
    std::vector<double> history;       ///< per-iteration objective of the winning run
    std::size_t iterations = 0;
    bool converged = true;

    std::size_t used_clusters() const {
        int mx = -1;
        for (int l : labels) mx = std::max(mx, l);
        return std::size_t(mx + 1);
    }
};

namespace detail {

inline void check_cluster_input(const Matrix& m, std::size_t k, const char* who) {
    if (m.rows() == 0) throw InvalidArgument(std::string(who) + ": empty matrix");
    if (k < 1 || k > m.rows())
        throw InvalidArgument(std::string(who) + ": k must be in [1, n], got k=" + std::to_string(k) +
                              " for n=" + std::to_string(m.rows()));
    for (double v : m.data())
        if (!std::isfinite(v)) throw InvalidArgument(std::string(who) + ": non-finite value in matrix");
}

/// Renumbers labels by first appearance; warns when fewer than k are used.
inline std::vector<int> canonical_labels(std::span<const int> raw, std::size_t k, Diagnostics* diag,
                                         const char* who) {
    std::vector<int> map;
    std::vector<int> out(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const auto r = std::size_t(raw[i]);
        if (r >= map.size()) map.resize(r + 1, -1);
        if (map[r] < 0) map[r] = int(std::count_if(map.begin(), map.end(), [](int v) { return v >= 0; }));
        out[i] = map[r];
    }
    const auto used = std::size_t(std::count_if(map.begin(), map.end(), [](int v) { return v >= 0; }));
    if (used < k)
        warn(diag, "empty_cluster", std::string(who) + ": " + std::to_string(k - used) + " of " +
                                        std::to_string(k) + " clusters ended empty");
    return out;
}

inline std::size_t nearest_center(std::span<const double> row, const Matrix& centers, double* dist = nullptr) {
    std::size_t best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centers.rows(); ++c) {
        const double d = squared_distance(row, centers.row(c));
        if (d < bd) {
            bd = d;
            best = c;
        }
    }
    if (dist) *dist = bd;
    return best;
}

/// Greedy k-means++ seeding: the first centre is uniform; each later one is the
/// best of 2 + floor(ln k) candidates drawn proportional to D(x)^2, judged by
/// the resulting potential.
inline Matrix kmeans_pp(const Matrix& m, std::size_t k, SeededRng& rng) {
    const std::size_t n = m.rows(), d = m.cols();
    const std::size_t trials = 2 + std::size_t(std::log(double(k)));
    Matrix centers(k, d);
    std::vector<double> dist(n), cand(n), best_dist(n);
    std::size_t pick = rng.uniform_int(n);
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) total += dist[i] = squared_distance(m.row(i), m.row(pick));
    std::copy(m.row(pick).begin(), m.row(pick).end(), centers.row(0).begin());
    for (std::size_t c = 1; c < k; ++c) {
        double best_total = std::numeric_limits<double>::infinity();
        for (std::size_t t = 0; t < trials; ++t) {
            std::size_t x = rng.uniform_int(n);
            if (total > 0) {  // otherwise fewer distinct points than k: any row will do
                double u = rng.uniform() * total;
                x = n - 1;
                for (std::size_t i = 0; i < n; ++i) {
                    u -= dist[i];
                    if (u < 0 && dist[i] > 0) {
                        x = i;
                        break;
                    }
                }
            }
            double pot = 0;
            for (std::size_t i = 0; i < n; ++i) pot += cand[i] = std::min(dist[i], squared_distance(m.row(i), m.row(x)));
            if (pot < best_total) {
                best_total = pot;
                pick = x;
                best_dist.swap(cand);
            }
        }
        dist.swap(best_dist);
        total = best_total;
        std::copy(m.row(pick).begin(), m.row(pick).end(), centers.row(c).begin());
    }
    return centers;
}

struct LloydRun {
    std::vector<int> labels;
    Matrix centers;
    double objective = 0;
    std::vector<double> history;
    std::size_t iterations = 0;
    bool converged = false;
};

inline double assign_all(const Matrix& m, const Matrix& centers, std::vector<int>& labels,
                         std::vector<double>& dist) {
    double f = 0;
    for (std::size_t i = 0; i < m.rows(); ++i) {
        labels[i] = int(nearest_center(m.row(i), centers, &dist[i]));
        f += dist[i];
    }
    return f;
}

/// Lloyd iterations from given centres. history[t] is the objective after the
/// t-th assignment step, so it can only go down.
inline LloydRun lloyd(const Matrix& m, Matrix centers, std::size_t max_iter) {
    const std::size_t n = m.rows(), d = m.cols(), k = centers.rows();
    LloydRun run;
    run.labels.assign(n, -1);
    std::vector<double> dist(n);
    run.objective = assign_all(m, centers, run.labels, dist);
    run.history.push_back(run.objective);
    std::vector<int> prev;
    for (std::size_t it = 0; it < max_iter; ++it) {
        run.iterations = it + 1;
        // Update step.
        Matrix sum(k, d);
        std::vector<std::size_t> count(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            const auto c = std::size_t(run.labels[i]);
            ++count[c];
            for (std::size_t j = 0; j < d; ++j) sum(c, j) += m(i, j);
        }
        std::vector<char> taken(n, 0);
        for (std::size_t c = 0; c < k; ++c) {
            if (count[c] > 0) {
                for (std::size_t j = 0; j < d; ++j) centers(c, j) = sum(c, j) / double(count[c]);
                continue;
            }
            // Empty cluster: reseed to the point farthest from its centre.
            std::size_t far = 0;
            double fd = -1;
            for (std::size_t i = 0; i < n; ++i)
                if (!taken[i] && dist[i] > fd) {
                    fd = dist[i];
                    far = i;
                }
            taken[far] = 1;
            dist[far] = 0;
            std::copy(m.row(far).begin(), m.row(far).end(), centers.row(c).begin());
        }
        prev = run.labels;
        run.objective = assign_all(m, centers, run.labels, dist);
        run.history.push_back(run.objective);
        if (run.labels == prev) {
            run.converged = true;
            break;
        }
    }
    run.centers = std::move(centers);
    return run;
}

}  // namespace detail

/// Best of `n_init` k-means++ / Lloyd restarts by objective; restart r draws
/// from rng.split(r).
inline ClusterAssignment kmeans(const Matrix& m, std::size_t k, std::size_t n_init, std::size_t max_iter,
                                const SeededRng& rng, Diagnostics* diag = nullptr, Matrix* centers_out = nullptr) {
    detail::check_cluster_input(m, k, "kmeans");
    if (n_init < 1) throw InvalidArgument("kmeans: n_init must be >= 1");
    if (max_iter < 1) throw InvalidArgument("kmeans: max_iter must be >= 1");
    std::optional<detail::LloydRun> best;
    for (std::size_t r = 0; r < n_init; ++r) {
        SeededRng stream = rng.split(r);
        auto run = detail::lloyd(m, detail::kmeans_pp(m, k, stream), max_iter);
        if (!best || run.objective < best->objective) best = std::move(run);
    }
    if (!best->converged) warn(diag, "not_converged", "kmeans: best restart hit max_iter");
    ClusterAssignment out;
    out.k = k;
    out.labels = detail::canonical_labels(best->labels, k, diag, "kmeans");
    out.objective = best->objective;
    out.history = std::move(best->history);
    out.iterations = best->iterations;
    out.converged = best->converged;
    if (centers_out) *centers_out = std::move(best->centers);
    return out;
}

/// Sum of squared distances to cluster means.
inline double within_cluster_sse(const Matrix& m, std::span<const int> labels) {
    int k = 0;
    for (int l : labels) k = std::max(k, l + 1);
    Matrix sum(std::size_t(k), m.cols());
    std::vector<double> count(std::size_t(k), 0);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        count[std::size_t(labels[i])] += 1;
        for (std::size_t j = 0; j < m.cols(); ++j) sum(std::size_t(labels[i]), j) += m(i, j);
    }
    double f = 0;
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) {
            const double c = sum(std::size_t(labels[i]), j) / count[std::size_t(labels[i])];
            f += (m(i, j) - c) * (m(i, j) - c);
        }
    return f;
}

// ----------------------------------------------------------- agglomerative

enum class Linkage { ward, average, complete, single };

inline std::string to_string(Linkage l) {
    switch (l) {
        case Linkage::ward: return "ward";
        case Linkage::average: return "average";
        case Linkage::complete: return "complete";
        case Linkage::single: return "single";
    }
    return "?";
}

inline Linkage linkage_from_string(const std::string& s) {
    for (auto l : {Linkage::ward, Linkage::average, Linkage::complete, Linkage::single})
        if (to_string(l) == s) return l;
    throw InvalidArgument("unknown linkage '" + s + "' (expected ward, average, complete or single)");
}

namespace detail {

/// Lance-Williams merging over a dense dissimilarity matrix. Ward runs on
/// squared Euclidean distances, the others on Euclidean ones. Ties merge the
/// lexicographically smallest pair (i, j), i < j. Returns root ids, not 0..k-1.
inline std::vector<int> agglomerate(const Matrix& m, std::size_t k, Linkage linkage) {
    const std::size_t n = m.rows();
    Matrix dist(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double d2 = squared_distance(m.row(i), m.row(j));
            dist(i, j) = dist(j, i) = linkage == Linkage::ward ? d2 : std::sqrt(d2);
        }
    std::vector<double> size(n, 1.0);
    std::vector<char> active(n, 1);
    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    constexpr double inf = std::numeric_limits<double>::infinity();
    // nn[i]: nearest active j > i (so each pair is owned by its smaller index).
    std::vector<std::size_t> nn(n, n);
    std::vector<double> nnd(n, inf);
    auto refresh = [&](std::size_t i) {
        nn[i] = n;
        nnd[i] = inf;
        for (std::size_t j = i + 1; j < n; ++j)
            if (active[j] && dist(i, j) < nnd[i]) {
                nnd[i] = dist(i, j);
                nn[i] = j;
            }
    };
    for (std::size_t i = 0; i < n; ++i) refresh(i);
    for (std::size_t clusters = n; clusters > k; --clusters) {
        std::size_t a = n;
        double best = inf;
        for (std::size_t i = 0; i < n; ++i)
            if (active[i] && nnd[i] < best) {
                best = nnd[i];
                a = i;
            }
        const std::size_t b = nn[a];
        const double na = size[a], nb = size[b], dab = dist(a, b);
        for (std::size_t c = 0; c < n; ++c) {
            if (!active[c] || c == a || c == b) continue;
            const double dac = dist(a, c), dbc = dist(b, c), nc = size[c];
            double v = 0;
            switch (linkage) {
                case Linkage::ward: v = ((na + nc) * dac + (nb + nc) * dbc - nc * dab) / (na + nb + nc); break;
                case Linkage::average: v = (na * dac + nb * dbc) / (na + nb); break;
                case Linkage::complete: v = std::max(dac, dbc); break;
                case Linkage::single: v = std::min(dac, dbc); break;
            }
            dist(a, c) = dist(c, a) = v;
        }
        active[b] = 0;
        size[a] = na + nb;
        parent[b] = a;
        for (std::size_t i = 0; i < n; ++i) {
            if (!active[i]) continue;
            if (i == a || nn[i] == a || nn[i] == b) {
                refresh(i);
            } else if (i < a && dist(i, a) < nnd[i]) {
                nnd[i] = dist(i, a);
                nn[i] = a;
            }
        }
    }
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t r = i;
        while (parent[r] != r) r = parent[r];
        labels[i] = int(r);
    }
    return labels;
}

}  // namespace detail

inline ClusterAssignment agglomerative(const Matrix& m, std::size_t k, Linkage linkage = Linkage::ward,
                                       Diagnostics* diag = nullptr) {
    detail::check_cluster_input(m, k, "agglomerative");
    ClusterAssignment out;
    out.k = k;
    out.labels = detail::canonical_labels(detail::agglomerate(m, k, linkage), k, diag, "agglomerative");
    out.iterations = m.rows() - k;
    return out;
}

// --------------------------------------------------------------------- GMM

struct GaussianMixture {
    std::vector<double> weights;
    Matrix means;                   ///< k x d
    std::vector<Matrix> covariances;
};

namespace detail {

inline double log_sum_exp(std::span<const double> v) {
    const double mx = *std::max_element(v.begin(), v.end());
    if (!std::isfinite(mx)) return mx;
    double s = 0;
    for (double x : v) s += std::exp(x - mx);
    return mx + std::log(s);
}

inline GaussianMixture gmm_m_step(const Matrix& m, const Matrix& resp, double reg) {
    const std::size_t n = m.rows(), d = m.cols(), k = resp.cols();
    GaussianMixture g;
    g.weights.assign(k, 0.0);
    g.means = Matrix(k, d);
    g.covariances.assign(k, Matrix(d, d));
    const double tiny = 10 * std::numeric_limits<double>::epsilon();
    for (std::size_t c = 0; c < k; ++c) {
        double nk = tiny;
        for (std::size_t i = 0; i < n; ++i) nk += resp(i, c);
        g.weights[c] = nk / double(n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) g.means(c, j) += resp(i, c) * m(i, j);
        for (std::size_t j = 0; j < d; ++j) g.means(c, j) /= nk;
        Matrix& cov = g.covariances[c];
        std::vector<double> diff(d);
        for (std::size_t i = 0; i < n; ++i) {
            const double r = resp(i, c);
            if (r == 0.0) continue;
            for (std::size_t j = 0; j < d; ++j) diff[j] = m(i, j) - g.means(c, j);
            for (std::size_t a = 0; a < d; ++a)
                for (std::size_t b = 0; b <= a; ++b) cov(a, b) += r * diff[a] * diff[b];
        }
        for (std::size_t a = 0; a < d; ++a) {
            for (std::size_t b = 0; b <= a; ++b) cov(b, a) = cov(a, b) = cov(a, b) / nk;
            cov(a, a) += reg;
        }
    }
    return g;
}

/// E-step: fills `resp` and returns the mean per-sample log-likelihood.
inline double gmm_e_step(const Matrix& m, const GaussianMixture& g, Matrix& resp) {
    const std::size_t n = m.rows(), d = m.cols(), k = g.weights.size();
    constexpr double log2pi = 1.8378770664093454836;
    Matrix logp(n, k);
    std::vector<double> z(d);
    for (std::size_t c = 0; c < k; ++c) {
        Matrix l;
        try {
            l = cholesky(g.covariances[c]);
        } catch (const NumericError&) {
            throw NumericError("gmm: covariance of component " + std::to_string(c) +
                               " is singular despite regularization; increase reg");
        }
        double logdet = 0;
        for (std::size_t j = 0; j < d; ++j) logdet += 2 * std::log(l(j, j));
        const double base = std::log(g.weights[c]) - 0.5 * (double(d) * log2pi + logdet);
        for (std::size_t i = 0; i < n; ++i) {
            double q = 0;
            for (std::size_t a = 0; a < d; ++a) {  // forward solve L z = x - mu
                double s = m(i, a) - g.means(c, a);
                for (std::size_t b = 0; b < a; ++b) s -= l(a, b) * z[b];
                z[a] = s / l(a, a);
                q += z[a] * z[a];
            }
            logp(i, c) = base - 0.5 * q;
        }
    }
    resp = Matrix(n, k);
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double lse = log_sum_exp(logp.row(i));
        total += lse;
        for (std::size_t c = 0; c < k; ++c) resp(i, c) = std::exp(logp(i, c) - lse);
    }
    return total / double(n);
}

}  // namespace detail

/// Full-covariance EM started from a k-means partition (rng.split(0), one
/// restart). history holds the mean log-likelihood after each E-step.
inline ClusterAssignment gmm_em(const Matrix& m, std::size_t k, std::size_t max_iter, double reg,
                                const SeededRng& rng, Diagnostics* diag = nullptr, double tol = 1e-3,
                                GaussianMixture* model_out = nullptr) {
    detail::check_cluster_input(m, k, "gmm");
    if (!(reg > 0.0)) throw InvalidArgument("gmm: reg must be > 0");
    if (max_iter < 1) throw InvalidArgument("gmm: max_iter must be >= 1");
    const auto init = kmeans(m, k, 1, 300, rng.split(0));
    Matrix resp(m.rows(), k);
    for (std::size_t i = 0; i < m.rows(); ++i) resp(i, std::size_t(init.labels[i])) = 1.0;
    ClusterAssignment out;
    out.k = k;
    out.converged = false;
    GaussianMixture g = detail::gmm_m_step(m, resp, reg);
    for (std::size_t it = 0; it < max_iter; ++it) {
        const double ll = detail::gmm_e_step(m, g, resp);
        out.history.push_back(ll);
        out.iterations = it + 1;
        if (it > 0 && std::abs(ll - out.history[it - 1]) < tol) {
            out.converged = true;
            break;
        }
        g = detail::gmm_m_step(m, resp, reg);
    }
    if (!out.converged) {
        out.history.push_back(detail::gmm_e_step(m, g, resp));
        warn(diag, "not_converged", "gmm: EM hit max_iter before the log-likelihood settled");
    }
    std::vector<int> raw(m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < k; ++c)
            if (resp(i, c) > resp(i, best)) best = c;
        raw[i] = int(best);
    }
    out.labels = detail::canonical_labels(raw, k, diag, "gmm");
    out.objective = out.history.back();
    if (model_out) *model_out = std::move(g);
    return out;
}

// ---------------------------------------------------------------- spectral

enum class AffinityKind { rbf, knn_graph };

inline std::string to_string(AffinityKind a) { return a == AffinityKind::rbf ? "rbf" : "knn_graph"; }

inline AffinityKind affinity_from_string(const std::string& s) {
    if (s == "rbf") return AffinityKind::rbf;
    if (s == "knn_graph" || s == "nearest_neighbors") return AffinityKind::knn_graph;
    throw InvalidArgument("unknown affinity '" + s + "' (expected rbf or knn_graph)");
}

struct Affinity {
    AffinityKind kind = AffinityKind::rbf;
    double gamma = 0.0;          ///< rbf; <= 0 means 1 / n_features
    std::size_t n_neighbors = 10;  ///< knn_graph
};

/// Affinity matrix with a zero diagonal.
inline Matrix affinity_matrix(const Matrix& m, const Affinity& a) {
    const std::size_t n = m.rows();
    Matrix w(n, n);
    if (a.kind == AffinityKind::rbf) {
        const double gamma = a.gamma > 0 ? a.gamma : 1.0 / double(std::max<std::size_t>(m.cols(), 1));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j)
                w(i, j) = w(j, i) = std::exp(-gamma * squared_distance(m.row(i), m.row(j)));
        return w;
    }
    if (a.n_neighbors < 1 || a.n_neighbors >= n)
        throw InvalidArgument("spectral: n_neighbors must be in [1, n-1]");
    std::vector<std::pair<double, std::size_t>> d;
    for (std::size_t i = 0; i < n; ++i) {
        d.clear();
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) d.emplace_back(squared_distance(m.row(i), m.row(j)), j);
        std::partial_sort(d.begin(), d.begin() + std::ptrdiff_t(a.n_neighbors), d.end());
        for (std::size_t t = 0; t < a.n_neighbors; ++t) {
            w(i, d[t].second) += 0.5;
            w(d[t].second, i) += 0.5;
        }
    }
    return w;
}

/// Connected components of the graph w > 0, numbered by first row.
inline std::vector<int> graph_components(const Matrix& w, std::size_t* count = nullptr) {
    const std::size_t n = w.rows();
    std::vector<int> comp(n, -1);
    int next = 0;
    std::vector<std::size_t> stack;
    for (std::size_t s = 0; s < n; ++s) {
        if (comp[s] >= 0) continue;
        comp[s] = next;
        stack.assign(1, s);
        while (!stack.empty()) {
            const auto u = stack.back();
            stack.pop_back();
            for (std::size_t v = 0; v < n; ++v)
                if (comp[v] < 0 && w(u, v) > 0) {
                    comp[v] = next;
                    stack.push_back(v);
                }
        }
        ++next;
    }
    if (count) *count = std::size_t(next);
    return comp;
}

/// Rows of the k smallest-eigenvalue eigenvectors of I - D^-1/2 W D^-1/2,
/// each scaled to unit length (zero rows stay zero).
inline Matrix spectral_embedding(const Matrix& w, std::size_t k) {
    const std::size_t n = w.rows();
    std::vector<double> inv_sqrt(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double deg = 0;
        for (std::size_t j = 0; j < n; ++j) deg += w(i, j);
        if (deg > 0) inv_sqrt[i] = 1.0 / std::sqrt(deg);
    }
    Matrix lap(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            lap(i, j) = (i == j ? 1.0 : 0.0) - inv_sqrt[i] * w(i, j) * inv_sqrt[j];
    const auto eig = sym_eig(lap);
    Matrix emb(n, k);
    for (std::size_t i = 0; i < n; ++i) {
        double norm = 0;
        for (std::size_t c = 0; c < k; ++c) {
            emb(i, c) = eig.vectors(i, c);
            norm += emb(i, c) * emb(i, c);
        }
        norm = std::sqrt(norm);
        if (norm > 0)
            for (std::size_t c = 0; c < k; ++c) emb(i, c) /= norm;
    }
    return emb;
}

/// Spectral clustering from a precomputed affinity. If the graph has more
/// components than k, the components are returned as clusters (warned).
inline ClusterAssignment spectral_from_affinity(const Matrix& w, std::size_t k, const SeededRng& rng,
                                                Diagnostics* diag = nullptr, std::size_t n_init = 10) {
    if (w.rows() != w.cols()) throw InvalidArgument("spectral: affinity must be square");
    detail::check_cluster_input(w, k, "spectral");
    std::size_t ncomp = 0;
    const auto comp = graph_components(w, &ncomp);
    ClusterAssignment out;
    out.k = k;
    if (ncomp > k) {
        warn(diag, "disconnected_graph", "spectral: affinity graph has " + std::to_string(ncomp) +
                                             " components for k=" + std::to_string(k) +
                                             "; components returned as clusters");
        out.labels = comp;
        out.k = ncomp;
        return out;
    }
    const Matrix emb = spectral_embedding(w, k);
    auto km = kmeans(emb, k, n_init, 300, rng, diag);
    out.labels = std::move(km.labels);
    out.objective = km.objective;  // SSE in the embedding
    out.iterations = km.iterations;
    out.converged = km.converged;
    return out;
}

inline ClusterAssignment spectral(const Matrix& m, std::size_t k, const Affinity& affinity, const SeededRng& rng,
                                  Diagnostics* diag = nullptr) {
    detail::check_cluster_input(m, k, "spectral");
    return spectral_from_affinity(affinity_matrix(m, affinity), k, rng, diag);
}

// ------------------------------------------------------------------- BIRCH

/// Clustering feature: count, linear sum, sum of squared norms.
struct ClusteringFeature {
    double n = 0;
    std::vector<double> ls;
    double ss = 0;

    static ClusteringFeature of(std::span<const double> x) {
        return {1.0, std::vector<double>(x.begin(), x.end()), dot(x, x)};
    }
    void merge(const ClusteringFeature& o) {
        if (ls.empty()) ls.assign(o.ls.size(), 0.0);
        n += o.n;
        for (std::size_t j = 0; j < ls.size(); ++j) ls[j] += o.ls[j];
        ss += o.ss;
    }
    std::vector<double> centroid() const {
        std::vector<double> c(ls);
        for (auto& v : c) v /= n;
        return c;
    }
    /// Root-mean-square distance of members to the centroid.
    double radius() const {
        const double r2 = ss / n - dot(ls, ls) / (n * n);
        return std::sqrt(std::max(r2, 0.0));
    }
};

namespace detail {

struct CfNode;

struct CfEntry {
    ClusteringFeature cf;
    std::unique_ptr<CfNode> child;  ///< null in leaves
};

struct CfNode {
    std::vector<CfEntry> entries;
    bool leaf() const { return entries.empty() || !entries.front().child; }
};

inline std::size_t closest_entry(const CfNode& node, std::span<const double> x) {
    std::size_t best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (std::size_t e = 0; e < node.entries.size(); ++e) {
        const double d = squared_distance(x, node.entries[e].cf.centroid());
        if (d < bd) {
            bd = d;
            best = e;
        }
    }
    return best;
}

inline ClusteringFeature node_cf(const CfNode& node) {
    ClusteringFeature cf;
    for (const auto& e : node.entries) cf.merge(e.cf);
    return cf;
}

/// Splits an overfull node around its two most distant entries.
inline std::pair<std::unique_ptr<CfNode>, std::unique_ptr<CfNode>> split_node(CfNode& node) {
    const std::size_t m = node.entries.size();
    std::vector<std::vector<double>> cen(m);
    for (std::size_t e = 0; e < m; ++e) cen[e] = node.entries[e].cf.centroid();
    std::size_t s1 = 0, s2 = 1;
    double far = -1;
    for (std::size_t a = 0; a < m; ++a)
        for (std::size_t b = a + 1; b < m; ++b) {
            const double d = squared_distance(cen[a], cen[b]);
            if (d > far) {
                far = d;
                s1 = a;
                s2 = b;
            }
        }
    auto left = std::make_unique<CfNode>(), right = std::make_unique<CfNode>();
    for (std::size_t e = 0; e < m; ++e) {
        const bool to_left =
            e == s1 || (e != s2 && squared_distance(cen[e], cen[s1]) <= squared_distance(cen[e], cen[s2]));
        (to_left ? left : right)->entries.push_back(std::move(node.entries[e]));
    }
    return {std::move(left), std::move(right)};
}

/// Inserts x below `node`; returns true when `node` overflowed and was split
/// into `out` (which the caller must replace `node` with).
inline bool cf_insert(CfNode& node, const ClusteringFeature& x, double threshold, std::size_t branching,
                      std::pair<std::unique_ptr<CfNode>, std::unique_ptr<CfNode>>& out) {
    if (node.entries.empty()) {
        node.entries.push_back({x, nullptr});
        return false;
    }
    const std::size_t e = closest_entry(node, x.ls);
    if (node.leaf()) {
        ClusteringFeature merged = node.entries[e].cf;
        merged.merge(x);
        if (merged.radius() <= threshold) {
            node.entries[e].cf = std::move(merged);
            return false;
        }
        node.entries.push_back({x, nullptr});
    } else {
        CfEntry& entry = node.entries[e];
        std::pair<std::unique_ptr<CfNode>, std::unique_ptr<CfNode>> halves;
        if (cf_insert(*entry.child, x, threshold, branching, halves)) {
            ClusteringFeature lcf = node_cf(*halves.first), rcf = node_cf(*halves.second);
            entry = CfEntry{std::move(lcf), std::move(halves.first)};
            node.entries.insert(node.entries.begin() + std::ptrdiff_t(e) + 1,
                                CfEntry{std::move(rcf), std::move(halves.second)});
        } else {
            entry.cf.merge(x);
        }
    }
    if (node.entries.size() <= branching) return false;
    out = split_node(node);
    return true;
}

inline void collect_leaf_entries(const CfNode& node, std::vector<ClusteringFeature>& out) {
    for (const auto& e : node.entries) {
        if (e.child)
            collect_leaf_entries(*e.child, out);
        else
            out.push_back(e.cf);
    }
}

}  // namespace detail

/// Builds the CF-tree in row order and returns its leaf subclusters.
inline std::vector<ClusteringFeature> birch_subclusters(const Matrix& m, double threshold, std::size_t branching) {
    if (!(threshold > 0.0)) throw InvalidArgument("birch: threshold must be > 0");
    if (branching < 2) throw InvalidArgument("birch: branching_factor must be >= 2");
    auto root = std::make_unique<detail::CfNode>();
    for (std::size_t i = 0; i < m.rows(); ++i) {
        std::pair<std::unique_ptr<detail::CfNode>, std::unique_ptr<detail::CfNode>> halves;
        if (detail::cf_insert(*root, ClusteringFeature::of(m.row(i)), threshold, branching, halves)) {
            auto fresh = std::make_unique<detail::CfNode>();
            ClusteringFeature lcf = detail::node_cf(*halves.first), rcf = detail::node_cf(*halves.second);
            fresh->entries.push_back({std::move(lcf), std::move(halves.first)});
            fresh->entries.push_back({std::move(rcf), std::move(halves.second)});
            root = std::move(fresh);
        }
    }
    std::vector<ClusteringFeature> leaves;
    detail::collect_leaf_entries(*root, leaves);
    return leaves;
}

/// CF-tree summaries, ward-merged into k groups; rows go to the nearest
/// group centroid. With fewer subclusters than k the global step is skipped.
inline ClusterAssignment birch(const Matrix& m, std::size_t k, double threshold = 0.5, std::size_t branching = 50,
                               Diagnostics* diag = nullptr) {
    detail::check_cluster_input(m, k, "birch");
    const auto subs = birch_subclusters(m, threshold, branching);
    std::vector<int> group(subs.size());
    if (subs.size() <= k) {
        if (subs.size() < k)
            warn(diag, "birch_few_subclusters", "birch: only " + std::to_string(subs.size()) +
                                                    " subclusters for k=" + std::to_string(k) +
                                                    "; global step skipped");
        std::iota(group.begin(), group.end(), 0);
    } else {
        Matrix cen(subs.size(), m.cols());
        for (std::size_t s = 0; s < subs.size(); ++s) {
            const auto c = subs[s].centroid();
            std::copy(c.begin(), c.end(), cen.row(s).begin());
        }
        group = detail::agglomerate(cen, k, Linkage::ward);
    }
    // Final centroids from the merged CFs of each group.
    std::vector<int> ids(group);
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    std::vector<ClusteringFeature> merged(ids.size());
    for (std::size_t s = 0; s < subs.size(); ++s) {
        const auto g = std::size_t(std::lower_bound(ids.begin(), ids.end(), group[s]) - ids.begin());
        merged[g].merge(subs[s]);
    }
    Matrix centers(merged.size(), m.cols());
    for (std::size_t g = 0; g < merged.size(); ++g) {
        const auto c = merged[g].centroid();
        std::copy(c.begin(), c.end(), centers.row(g).begin());
    }
    std::vector<int> raw(m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) raw[i] = int(detail::nearest_center(m.row(i), centers));
    ClusterAssignment out;
    out.k = k;
    out.labels = detail::canonical_labels(raw, k, diag, "birch");
    out.iterations = subs.size();
    return out;
}

// --------------------------------------------------------------- dispatch

enum class ClusterAlgorithm { kmeans, agglomerative, gmm, spectral, birch };

inline constexpr ClusterAlgorithm kAllClusterAlgorithms[] = {
    ClusterAlgorithm::kmeans, ClusterAlgorithm::agglomerative, ClusterAlgorithm::gmm,
    ClusterAlgorithm::spectral, ClusterAlgorithm::birch};

inline std::string to_string(ClusterAlgorithm a) {
    switch (a) {
        case ClusterAlgorithm::kmeans: return "kmeans";
        case ClusterAlgorithm::agglomerative: return "agglomerative";
        case ClusterAlgorithm::gmm: return "gmm";
        case ClusterAlgorithm::spectral: return "spectral";
        case ClusterAlgorithm::birch: return "birch";
    }
    return "?";
}

inline std::string display_name(ClusterAlgorithm a) {
    switch (a) {
        case ClusterAlgorithm::kmeans: return "K-means";
        case ClusterAlgorithm::agglomerative: return "Agglomerative";
        case ClusterAlgorithm::gmm: return "GMM";
        case ClusterAlgorithm::spectral: return "Spectral";
        case ClusterAlgorithm::birch: return "BIRCH";
    }
    return "?";
}

inline ClusterAlgorithm cluster_algorithm_from_string(const std::string& s) {
    for (auto a : kAllClusterAlgorithms)
        if (to_string(a) == s) return a;
    if (s == "k-means") return ClusterAlgorithm::kmeans;
    if (s == "ward" || s == "hierarchical") return ClusterAlgorithm::agglomerative;
    throw InvalidArgument("unknown clustering algorithm '" + s + "'");
}

/// Every knob the five algorithms take; recorded in manifests.
struct ClusterConfig {
    std::size_t k = 2;
    std::size_t kmeans_n_init = 10;
    std::size_t kmeans_max_iter = 300;
    std::string linkage = "ward";
    std::size_t gmm_max_iter = 100;
    double gmm_reg = 1e-6;
    double gmm_tol = 1e-3;
    std::string affinity = "rbf";
    double spectral_gamma = 0.0;  ///< 0 = 1 / n_features
    std::size_t spectral_n_neighbors = 10;
    double birch_threshold = 0.5;
    std::size_t birch_branching_factor = 50;

    friend bool operator==(const ClusterConfig&, const ClusterConfig&) = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ClusterConfig, k, kmeans_n_init, kmeans_max_iter, linkage,
                                                gmm_max_iter, gmm_reg, gmm_tol, affinity, spectral_gamma,
                                                spectral_n_neighbors, birch_threshold, birch_branching_factor)

inline ClusterAssignment run_clusterer(ClusterAlgorithm a, const Matrix& m, const ClusterConfig& cfg,
                                       const SeededRng& rng, Diagnostics* diag = nullptr) {
    switch (a) {
        case ClusterAlgorithm::kmeans: return kmeans(m, cfg.k, cfg.kmeans_n_init, cfg.kmeans_max_iter, rng, diag);
        case ClusterAlgorithm::agglomerative: return agglomerative(m, cfg.k, linkage_from_string(cfg.linkage), diag);
        case ClusterAlgorithm::gmm: return gmm_em(m, cfg.k, cfg.gmm_max_iter, cfg.gmm_reg, rng, diag, cfg.gmm_tol);
        case ClusterAlgorithm::spectral:
            return spectral(m, cfg.k,
                            Affinity{affinity_from_string(cfg.affinity), cfg.spectral_gamma, cfg.spectral_n_neighbors},
                            rng, diag);
        case ClusterAlgorithm::birch:
            return birch(m, cfg.k, cfg.birch_threshold, cfg.birch_branching_factor, diag);
    }
    throw InvalidArgument("run_clusterer: bad algorithm");
}

inline std::string assignment_to_csv(const ClusterAssignment& a) {
    std::string out = "row_id,cluster\n";
    for (std::size_t i = 0; i < a.labels.size(); ++i)
        out += std::to_string(i) + "," + std::to_string(a.labels[i]) + "\n";
    return out;
}

inline void to_json(nlohmann::json& j, const ClusterAssignment& a) {
    j = {{"k", a.k}, {"labels", a.labels}, {"iterations", a.iterations}, {"converged", a.converged}};
    j["objective"] = a.objective ? nlohmann::json(*a.objective) : nlohmann::json(nullptr);
}

}  // namespace asdml
