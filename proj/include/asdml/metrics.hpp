#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "asdml/core.hpp"
#include "asdml/numerics.hpp"
#include "json.hpp"

namespace asdml {

/// Probability clip shared with every classifier's predict_proba.
inline constexpr double kProbClip = 1e-15;

inline double clip_probability(double p) { return std::clamp(p, kProbClip, 1.0 - kProbClip); }

struct ConfusionCounts {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    std::size_t n() const { return tp + fp + tn + fn; }
    friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

namespace detail {

inline void check_binary(std::span<const int> v, const char* what) {
    for (int x : v)
        if (x != 0 && x != 1) throw InvalidArgument(std::string(what) + ": labels must be 0 or 1");
}

inline void check_lengths(std::size_t a, std::size_t b, const char* what) {
    if (a != b)
        throw InvalidArgument(std::string(what) + ": length mismatch (" + std::to_string(a) +
                              " vs " + std::to_string(b) + ")");
}

inline double safe_ratio(double num, double den, const char* name, Diagnostics* diag) {
    if (den == 0.0) {
        warn(diag, "zero_denominator", std::string(name) + " has a zero denominator; reported as 0");
        return 0.0;
    }
    return num / den;
}

/// Maps arbitrary cluster ids to 0..k-1 in order of first appearance.
inline std::vector<std::size_t> compact_labels(std::span<const int> labels, std::size_t& k) {
    std::map<int, std::size_t> ids;
    std::vector<std::size_t> out(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        auto [it, inserted] = ids.emplace(labels[i], ids.size());
        out[i] = it->second;
    }
    k = ids.size();
    return out;
}

struct Contingency {
    std::size_t ka = 0, kb = 0;
    std::vector<double> cells;  // ka x kb
    std::vector<double> a, b;   // marginals
};

inline Contingency contingency(std::span<const int> la, std::span<const int> lb) {
    Contingency c;
    auto ia = compact_labels(la, c.ka);
    auto ib = compact_labels(lb, c.kb);
    c.cells.assign(c.ka * c.kb, 0.0);
    c.a.assign(c.ka, 0.0);
    c.b.assign(c.kb, 0.0);
    for (std::size_t i = 0; i < ia.size(); ++i) {
        c.cells[ia[i] * c.kb + ib[i]] += 1.0;
        c.a[ia[i]] += 1.0;
        c.b[ib[i]] += 1.0;
    }
    return c;
}

inline double comb2(double x) { return x * (x - 1.0) / 2.0; }

}  // namespace detail

/// Class 1 is the positive (ASD) class.
inline ConfusionCounts confusion(std::span<const int> y_true, std::span<const int> y_pred) {
    detail::check_lengths(y_true.size(), y_pred.size(), "confusion");
    detail::check_binary(y_true, "confusion");
    detail::check_binary(y_pred, "confusion");
    ConfusionCounts c;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        if (y_true[i] == 1)
            (y_pred[i] == 1 ? c.tp : c.fn)++;
        else
            (y_pred[i] == 1 ? c.fp : c.tn)++;
    }
    return c;
}

struct RateMetrics {
    double accuracy = 0, precision = 0, recall = 0, specificity = 0, f1 = 0;
};

inline RateMetrics classification_metrics(const ConfusionCounts& c, Diagnostics* diag = nullptr) {
    if (c.n() == 0) throw InvalidArgument("classification_metrics: empty confusion matrix");
    const double tp = double(c.tp), fp = double(c.fp), tn = double(c.tn), fn = double(c.fn);
    RateMetrics r;
    r.accuracy = (tp + tn) / double(c.n());
    r.precision = detail::safe_ratio(tp, tp + fp, "precision", diag);
    r.recall = detail::safe_ratio(tp, tp + fn, "recall", diag);
    r.specificity = detail::safe_ratio(tn, tn + fp, "specificity", diag);
    r.f1 = detail::safe_ratio(2.0 * r.precision * r.recall, r.precision + r.recall, "f1", diag);
    return r;
}

inline double cohen_kappa(const ConfusionCounts& c, Diagnostics* diag = nullptr) {
    if (c.n() == 0) throw InvalidArgument("cohen_kappa: empty confusion matrix");
    const double n = double(c.n());
    const double p0 = double(c.tp + c.tn) / n;
    const double true_pos = double(c.tp + c.fn) / n, pred_pos = double(c.tp + c.fp) / n;
    const double pe = true_pos * pred_pos + (1.0 - true_pos) * (1.0 - pred_pos);
    if (pe == 1.0) {
        warn(diag, "kappa_degenerate", "chance agreement is 1; kappa defined by identity");
        return c.fp == 0 && c.fn == 0 ? 1.0 : 0.0;
    }
    return (p0 - pe) / (1.0 - pe);
}

inline double cohen_kappa(std::span<const int> y_true, std::span<const int> y_pred,
                          Diagnostics* diag = nullptr) {
    return cohen_kappa(confusion(y_true, y_pred), diag);
}

/// Mann–Whitney estimate: fraction of (positive, negative) pairs ranked
/// correctly, ties counting one half. O(n log n) via midranks.
inline double roc_auc(std::span<const int> y_true, std::span<const double> scores) {
    detail::check_lengths(y_true.size(), scores.size(), "roc_auc");
    detail::check_binary(y_true, "roc_auc");
    const std::size_t n = y_true.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double rank_sum_pos = 0.0, n_pos = 0.0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double midrank = (double(i) + double(j - 1)) / 2.0 + 1.0;
        for (std::size_t t = i; t < j; ++t)
            if (y_true[order[t]] == 1) {
                rank_sum_pos += midrank;
                n_pos += 1.0;
            }
        i = j;
    }
    const double n_neg = double(n) - n_pos;
    if (n_pos == 0.0 || n_neg == 0.0) throw InvalidArgument("roc_auc: both classes must be present");
    return (rank_sum_pos - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

inline double log_loss(std::span<const int> y_true, std::span<const double> scores) {
    detail::check_lengths(y_true.size(), scores.size(), "log_loss");
    detail::check_binary(y_true, "log_loss");
    if (y_true.empty()) throw InvalidArgument("log_loss: empty input");
    double s = 0.0;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        const double p = clip_probability(scores[i]);
        s += y_true[i] == 1 ? std::log(p) : std::log1p(-p);
    }
    return -s / double(y_true.size());
}

/// Mutual information over the arithmetic mean of the two entropies.
inline double nmi(std::span<const int> a, std::span<const int> b, Diagnostics* diag = nullptr) {
    detail::check_lengths(a.size(), b.size(), "nmi");
    if (a.empty()) throw InvalidArgument("nmi: empty labelings");
    const auto c = detail::contingency(a, b);
    if (c.ka == 1 && c.kb == 1) {
        warn(diag, "nmi_degenerate", "both labelings have a single cluster");
        return 1.0;
    }
    const double n = double(a.size());
    auto entropy = [n](const std::vector<double>& m) {
        double h = 0.0;
        for (double v : m)
            if (v > 0) h -= v / n * std::log(v / n);
        return h;
    };
    double mi = 0.0;
    for (std::size_t i = 0; i < c.ka; ++i)
        for (std::size_t j = 0; j < c.kb; ++j) {
            const double v = c.cells[i * c.kb + j];
            if (v > 0) mi += v / n * std::log(v * n / (c.a[i] * c.b[j]));
        }
    const double denom = 0.5 * (entropy(c.a) + entropy(c.b));
    return std::clamp(mi / denom, 0.0, 1.0);
}

inline double ari(std::span<const int> a, std::span<const int> b) {
    detail::check_lengths(a.size(), b.size(), "ari");
    if (a.empty()) throw InvalidArgument("ari: empty labelings");
    const auto c = detail::contingency(a, b);
    double index = 0.0, sa = 0.0, sb = 0.0;
    for (double v : c.cells) index += detail::comb2(v);
    for (double v : c.a) sa += detail::comb2(v);
    for (double v : c.b) sb += detail::comb2(v);
    const double total = detail::comb2(double(a.size()));
    const double expected = total > 0 ? sa * sb / total : 0.0;
    const double max_index = 0.5 * (sa + sb);
    // Both labelings trivial (all singletons or one cluster): perfect agreement.
    if (max_index == expected) return 1.0;
    return (index - expected) / (max_index - expected);
}

/// Mean silhouette with Euclidean distance; points in singleton clusters score 0.
inline double silhouette(const Matrix& m, std::span<const int> labels) {
    detail::check_lengths(m.rows(), labels.size(), "silhouette");
    std::size_t k = 0;
    const auto id = detail::compact_labels(labels, k);
    if (k < 2) throw InvalidArgument("silhouette: needs at least two clusters");
    const std::size_t n = m.rows();
    std::vector<double> size(k, 0.0);
    for (auto c : id) size[c] += 1.0;
    std::vector<double> sums(n * k, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double d = std::sqrt(squared_distance(m.row(i), m.row(j)));
            sums[i * k + id[j]] += d;
            sums[j * k + id[i]] += d;
        }
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t own = id[i];
        if (size[own] <= 1.0) continue;
        const double a = sums[i * k + own] / (size[own] - 1.0);
        double b = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < k; ++c)
            if (c != own) b = std::min(b, sums[i * k + c] / size[c]);
        const double denom = std::max(a, b);
        if (denom > 0) total += (b - a) / denom;
    }
    return total / double(n);
}

struct MetricsReport {
    double accuracy = 0, precision = 0, recall = 0, specificity = 0, f1 = 0, auc = 0, kappa = 0,
           log_loss = 0;
    ConfusionCounts counts;
};

struct ClusterReport {
    double nmi = 0, ari = 0, silhouette = 0;
};

/// Scores class-1 probabilities against true labels; predictions use p >= 0.5.
/// AUC is reported as 0.5 with a warning when the test set holds one class.
inline MetricsReport evaluate_classification(std::span<const int> y_true,
                                             std::span<const double> proba,
                                             Diagnostics* diag = nullptr) {
    detail::check_lengths(y_true.size(), proba.size(), "evaluate_classification");
    std::vector<int> pred(proba.size());
    for (std::size_t i = 0; i < proba.size(); ++i) pred[i] = proba[i] >= 0.5 ? 1 : 0;
    MetricsReport r;
    r.counts = confusion(y_true, pred);
    const auto rates = classification_metrics(r.counts, diag);
    r.accuracy = rates.accuracy;
    r.precision = rates.precision;
    r.recall = rates.recall;
    r.specificity = rates.specificity;
    r.f1 = rates.f1;
    r.kappa = cohen_kappa(r.counts, diag);
    if (r.counts.tp + r.counts.fn == 0 || r.counts.tn + r.counts.fp == 0) {
        warn(diag, "auc_single_class", "only one class present; AUC reported as 0.5");
        r.auc = 0.5;
    } else {
        r.auc = roc_auc(y_true, proba);
    }
    r.log_loss = log_loss(y_true, proba);
    return r;
}

inline ClusterReport evaluate_clustering(const Matrix& m, std::span<const int> truth,
                                         std::span<const int> labels, Diagnostics* diag = nullptr) {
    return {nmi(truth, labels, diag), ari(truth, labels), silhouette(m, labels)};
}

inline void to_json(nlohmann::json& j, const ConfusionCounts& c) {
    j = {{"tp", c.tp}, {"fp", c.fp}, {"tn", c.tn}, {"fn", c.fn}};
}
inline void from_json(const nlohmann::json& j, ConfusionCounts& c) {
    j.at("tp").get_to(c.tp);
    j.at("fp").get_to(c.fp);
    j.at("tn").get_to(c.tn);
    j.at("fn").get_to(c.fn);
}

inline void to_json(nlohmann::json& j, const MetricsReport& r) {
    j = {{"accuracy", r.accuracy}, {"precision", r.precision}, {"recall", r.recall},
         {"specificity", r.specificity}, {"f1", r.f1}, {"auc", r.auc},
         {"kappa", r.kappa}, {"log_loss", r.log_loss}, {"confusion", r.counts}};
}
inline void from_json(const nlohmann::json& j, MetricsReport& r) {
    j.at("accuracy").get_to(r.accuracy);
    j.at("precision").get_to(r.precision);
    j.at("recall").get_to(r.recall);
    j.at("specificity").get_to(r.specificity);
    j.at("f1").get_to(r.f1);
    j.at("auc").get_to(r.auc);
    j.at("kappa").get_to(r.kappa);
    j.at("log_loss").get_to(r.log_loss);
    if (j.contains("confusion")) j.at("confusion").get_to(r.counts);
}

inline void to_json(nlohmann::json& j, const ClusterReport& r) {
    j = {{"nmi", r.nmi}, {"ari", r.ari}, {"silhouette", r.silhouette}};
}
inline void from_json(const nlohmann::json& j, ClusterReport& r) {
    j.at("nmi").get_to(r.nmi);
    j.at("ari").get_to(r.ari);
    j.at("silhouette").get_to(r.silhouette);
}

namespace detail {
inline std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}
}  // namespace detail

inline const char* metrics_markdown_header() {
    return "| Model | Accuracy (%) | Precision (%) | Recall (%) | Specificity (%) | F1-score (%) "
           "| AUC (%) | Kappa (%) | Log Loss |\n"
           "|---|---|---|---|---|---|---|---|---|\n";
}

/// One results-table row: rates as percentages with 2 decimals, log loss with 3.
inline std::string metrics_markdown_row(const std::string& model, const MetricsReport& r) {
    auto pct = [](double v) { return detail::fixed(100.0 * v, 2); };
    return "| " + model + " | " + pct(r.accuracy) + " | " + pct(r.precision) + " | " +
           pct(r.recall) + " | " + pct(r.specificity) + " | " + pct(r.f1) + " | " + pct(r.auc) +
           " | " + pct(r.kappa) + " | " + detail::fixed(r.log_loss, 3) + " |\n";
}

inline const char* metrics_csv_header() {
    return "model,accuracy,precision,recall,specificity,f1,auc,kappa,log_loss\n";
}

inline std::string metrics_csv_row(const std::string& model, const MetricsReport& r) {
    auto pct = [](double v) { return detail::fixed(100.0 * v, 2); };
    return model + "," + pct(r.accuracy) + "," + pct(r.precision) + "," + pct(r.recall) + "," +
           pct(r.specificity) + "," + pct(r.f1) + "," + pct(r.auc) + "," + pct(r.kappa) + "," +
           detail::fixed(r.log_loss, 3) + "\n";
}

inline const char* cluster_markdown_header() {
    return "| Model | NMI | ARI | SC |\n|---|---|---|---|\n";
}

inline std::string cluster_markdown_row(const std::string& model, const ClusterReport& r) {
    return "| " + model + " | " + detail::fixed(r.nmi, 3) + " | " + detail::fixed(r.ari, 3) +
           " | " + detail::fixed(r.silhouette, 3) + " |\n";
}

}  // namespace asdml
