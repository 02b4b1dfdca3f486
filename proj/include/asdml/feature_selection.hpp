#pragma once

#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include "asdml/dataset.hpp"

namespace asdml {

struct RankedFeature {
    std::string name;  ///< source attribute, or column name for per-column rankings
    double score = 0.0;
    friend bool operator==(const RankedFeature&, const RankedFeature&) = default;
};

struct FeatureRanking {
    std::vector<RankedFeature> entries;  ///< descending by score
    std::size_t k_selected = 0;
    bool per_column = false;

    std::vector<std::string> top(std::size_t k) const {
        std::vector<std::string> out;
        for (std::size_t i = 0; i < std::min(k, entries.size()); ++i) out.push_back(entries[i].name);
        return out;
    }
};

struct ChiSquareOptions {
    /// Sum member-column scores back to their source attribute.
    bool aggregate_groups = true;
};

namespace detail {

/// Feature-sum chi-square of one nonnegative column against binary labels:
/// observed = per-class sums of the column, expected = column total split by
/// class frequency.
inline double chi2_column(const Matrix& x, std::size_t j, std::span<const int> y, bool complement,
                          double n_pos, double n_neg, bool& degenerate) {
    double obs_pos = 0.0, obs_neg = 0.0;
    for (std::size_t r = 0; r < x.rows(); ++r) {
        const double v = complement ? 1.0 - x(r, j) : x(r, j);
        (y[r] == 1 ? obs_pos : obs_neg) += v;
    }
    const double total = obs_pos + obs_neg;
    const double n = n_pos + n_neg;
    const double exp_pos = total * n_pos / n;
    const double exp_neg = total * n_neg / n;
    if (!(exp_pos > 0.0) || !(exp_neg > 0.0)) {
        degenerate = true;
        return 0.0;
    }
    return (obs_pos - exp_pos) * (obs_pos - exp_pos) / exp_pos +
           (obs_neg - exp_neg) * (obs_neg - exp_neg) / exp_neg;
}

}  // namespace detail

/// Chi-square dependence between every feature and the class.
///
/// Continuous and one-hot columns use the feature-sum contingency (observed =
/// class-conditional column sum). A binary column is scored together with its
/// complement, which makes it the Pearson statistic of its 2x2 table. With
/// `aggregate_groups`, one-hot members are summed per source attribute, which
/// likewise equals the Pearson statistic of the attribute's r x 2 table.
/// Ties keep column order.
inline FeatureRanking chi_square_scores(const DesignMatrix& m, ChiSquareOptions opt = {},
                                        Diagnostics* diag = nullptr) {
    if (m.y.size() != m.rows()) throw InvalidArgument("chi_square_scores: label count mismatch");
    for (double v : m.x.data())
        if (v < 0.0) throw InvalidArgument("chi_square_scores: features must be nonnegative");
    double n_pos = 0.0, n_neg = 0.0;
    for (int label : m.y) {
        if (label != 0 && label != 1) throw InvalidArgument("chi_square_scores: non-binary label");
        (label == 1 ? n_pos : n_neg) += 1.0;
    }
    FeatureRanking ranking;
    ranking.per_column = !opt.aggregate_groups;
    for (std::size_t j = 0; j < m.columns.size(); ++j) {
        const auto& col = m.columns[j];
        bool degenerate = false, degenerate_c = false;
        double score = detail::chi2_column(m.x, j, m.y, false, n_pos, n_neg, degenerate);
        if (col.kind == AttributeKind::binary)
            score += detail::chi2_column(m.x, j, m.y, true, n_pos, n_neg, degenerate_c);
        if (degenerate && (col.kind != AttributeKind::binary || degenerate_c))
            warn(diag, "chi2_zero_expected", col.name() + ": zero expected count, score set to 0");
        const std::string key = opt.aggregate_groups ? col.attribute : col.name();
        auto it = std::find_if(ranking.entries.begin(), ranking.entries.end(),
                               [&](const RankedFeature& e) { return e.name == key; });
        if (it == ranking.entries.end())
            ranking.entries.push_back({key, score});
        else
            it->score += score;
    }
    std::stable_sort(ranking.entries.begin(), ranking.entries.end(),
                     [](const RankedFeature& a, const RankedFeature& b) { return a.score > b.score; });
    return ranking;
}

/// Keeps the columns whose source attribute (or column, for per-column
/// rankings) is among the top `k` ranked entries. Column order is preserved.
inline DesignMatrix select_top_k(const DesignMatrix& m, FeatureRanking& ranking, std::size_t k) {
    if (k < 1 || k > ranking.entries.size())
        throw InvalidArgument("select_top_k: k=" + std::to_string(k) + " outside [1, " +
                              std::to_string(ranking.entries.size()) + "]");
    ranking.k_selected = k;
    const auto keep_list = ranking.top(k);
    const std::set<std::string> keep(keep_list.begin(), keep_list.end());
    std::vector<std::size_t> cols;
    for (std::size_t j = 0; j < m.columns.size(); ++j) {
        const std::string key = ranking.per_column ? m.columns[j].name() : m.columns[j].attribute;
        if (keep.count(key)) cols.push_back(j);
    }
    return m.select_columns(cols);
}

inline std::string ranking_to_csv(const FeatureRanking& r) {
    std::string out = "attribute,score\n";
    for (const auto& e : r.entries)
        out += detail::csv_quote(e.name) + "," + detail::format_double(e.score) + "\n";
    return out;
}

}  // namespace asdml
