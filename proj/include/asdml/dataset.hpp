#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "asdml/core.hpp"
#include "asdml/numerics.hpp"

namespace asdml {

enum class AttributeKind { binary, categorical, continuous };

inline std::string_view to_string(AttributeKind k) {
    switch (k) {
        case AttributeKind::binary: return "binary";
        case AttributeKind::categorical: return "categorical";
        case AttributeKind::continuous: return "continuous";
    }
    return "?";
}

inline AttributeKind attribute_kind_from_string(std::string_view s) {
    if (s == "binary") return AttributeKind::binary;
    if (s == "categorical") return AttributeKind::categorical;
    if (s == "continuous") return AttributeKind::continuous;
    throw ParseError("unknown attribute kind '" + std::string(s) + "'");
}

namespace detail {

inline std::string lower(std::string_view s) {
    std::string out(s);
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

inline std::optional<double> parse_double(std::string_view s) {
    s = trim(s);
    if (s.empty()) return std::nullopt;
    if (s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

/// Shortest representation that round-trips exactly.
inline std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

}  // namespace detail

struct Attribute {
    std::string name;
    AttributeKind kind = AttributeKind::continuous;
    std::vector<std::string> categories;  ///< declared tokens for binary / categorical
    bool is_label = false;

    std::optional<std::size_t> category_index(std::string_view token) const {
        for (std::size_t i = 0; i < categories.size(); ++i)
            if (categories[i] == token) return i;
        return std::nullopt;
    }

    /// Token encoded as 1 for a binary attribute (or the positive label class):
    /// "1", "yes", otherwise the lexicographically larger token.
    std::string positive_token() const {
        for (const auto& c : categories)
            if (c == "1" || detail::lower(c) == "yes") return c;
        if (categories.empty()) return {};
        return *std::max_element(categories.begin(), categories.end(),
                                 [](const std::string& a, const std::string& b) {
                                     return detail::lower(a) < detail::lower(b);
                                 });
    }

    friend bool operator==(const Attribute&, const Attribute&) = default;
};

inline AttributeKind kind_for_categories(std::size_t count) {
    return count == 2 ? AttributeKind::binary : AttributeKind::categorical;
}

struct FeatureSchema {
    std::vector<Attribute> attributes;

    std::size_t size() const noexcept { return attributes.size(); }

    std::optional<std::size_t> index_of(std::string_view name) const {
        for (std::size_t i = 0; i < attributes.size(); ++i)
            if (attributes[i].name == name) return i;
        return std::nullopt;
    }

    std::size_t label_index() const {
        for (std::size_t i = 0; i < attributes.size(); ++i)
            if (attributes[i].is_label) return i;
        throw InvalidArgument("schema has no label attribute");
    }

    friend bool operator==(const FeatureSchema&, const FeatureSchema&) = default;
};

/// Marker for a '?' / empty source cell.
struct Missing {
    friend bool operator==(Missing, Missing) { return true; }
};

using Cell = std::variant<Missing, double, std::string>;

inline bool is_missing(const Cell& c) { return std::holds_alternative<Missing>(c); }

struct DataTable {
    std::string relation;
    FeatureSchema schema;
    std::vector<std::vector<Cell>> rows;

    std::size_t row_count() const noexcept { return rows.size(); }

    friend bool operator==(const DataTable&, const DataTable&) = default;
};

// ---------------------------------------------------------------------------
// Tokenising

namespace detail {

/// Split one ARFF/CSV record on commas honouring single and double quotes.
/// `quoted` receives whether each field was quoted, so "" can be told apart
/// from an empty field.
inline std::vector<std::string> split_record(std::string_view line, bool allow_single_quotes,
                                             std::vector<bool>* quoted = nullptr) {
    std::vector<std::string> out;
    if (quoted) quoted->clear();
    std::string cur;
    bool was_quoted = false;
    std::size_t i = 0;
    auto flush = [&] {
        if (was_quoted)
            out.push_back(cur);
        else
            out.emplace_back(trim(cur));
        if (quoted) quoted->push_back(was_quoted);
        cur.clear();
        was_quoted = false;
    };
    while (i < line.size()) {
        char c = line[i];
        if ((c == '"' || (allow_single_quotes && c == '\'')) && trim(cur).empty()) {
            const char q = c;
            cur.clear();
            was_quoted = true;
            ++i;
            bool closed = false;
            while (i < line.size()) {
                if (line[i] == q) {
                    if (i + 1 < line.size() && line[i + 1] == q) {
                        cur.push_back(q);
                        i += 2;
                        continue;
                    }
                    closed = true;
                    ++i;
                    break;
                }
                if (line[i] == '\\' && q == '\'' && i + 1 < line.size()) {
                    cur.push_back(line[i + 1]);
                    i += 2;
                    continue;
                }
                cur.push_back(line[i++]);
            }
            if (!closed) throw ParseError("unterminated quoted field");
            while (i < line.size() && line[i] != ',') {
                if (!std::isspace(static_cast<unsigned char>(line[i])))
                    throw ParseError("text after closing quote");
                ++i;
            }
            continue;
        }
        if (c == ',') {
            flush();
            ++i;
            continue;
        }
        cur.push_back(c);
        ++i;
    }
    flush();
    return out;
}

inline std::vector<std::string_view> lines_of(std::string_view text) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        std::string_view l = text.substr(start, end - start);
        if (!l.empty() && l.back() == '\r') l.remove_suffix(1);
        out.push_back(l);
        if (end == text.size()) break;
        start = end + 1;
    }
    return out;
}

inline bool starts_with_ci(std::string_view s, std::string_view prefix) {
    if (s.size() < prefix.size()) return false;
    for (std::size_t i = 0; i < prefix.size(); ++i)
        if (std::tolower(static_cast<unsigned char>(s[i])) !=
            std::tolower(static_cast<unsigned char>(prefix[i])))
            return false;
    return true;
}

/// Reads a possibly quoted ARFF identifier from the front of `s`.
inline std::string take_name(std::string_view& s) {
    s = trim(s);
    if (s.empty()) throw ParseError("expected a name");
    if (s.front() == '\'' || s.front() == '"') {
        const char q = s.front();
        std::size_t end = s.find(q, 1);
        if (end == std::string_view::npos) throw ParseError("unterminated quoted name");
        std::string name(s.substr(1, end - 1));
        s.remove_prefix(end + 1);
        return name;
    }
    std::size_t end = 0;
    while (end < s.size() && !std::isspace(static_cast<unsigned char>(s[end])) && s[end] != '{')
        ++end;
    std::string name(s.substr(0, end));
    s.remove_prefix(end);
    return name;
}

inline bool is_label_name(std::string_view name) {
    const std::string l = lower(name);
    return l == "class/asd" || l == "class";
}

inline void flag_label(FeatureSchema& schema) {
    for (auto& a : schema.attributes)
        if (is_label_name(a.name)) {
            a.is_label = true;
            return;
        }
    if (!schema.attributes.empty() && schema.attributes.back().kind != AttributeKind::continuous)
        schema.attributes.back().is_label = true;
}

inline Cell parse_cell(const Attribute& attr, const std::string& token, bool quoted,
                       std::size_t line_no) {
    if (!quoted && (token.empty() || token == "?")) return Missing{};
    if (attr.kind == AttributeKind::continuous) {
        auto v = parse_double(token);
        if (!v)
            throw ParseError("line " + std::to_string(line_no) + ": attribute '" + attr.name +
                             "': unparseable numeric value '" + token + "'");
        return *v;
    }
    if (!attr.category_index(token))
        throw ParseError("line " + std::to_string(line_no) + ": attribute '" + attr.name +
                         "': unknown category '" + token + "'");
    return token;
}

inline bool needs_arff_quotes(std::string_view s) {
    if (s.empty() || s == "?") return true;
    for (char c : s)
        if (std::isspace(static_cast<unsigned char>(c)) || c == ',' || c == '\'' || c == '"' ||
            c == '{' || c == '}' || c == '%')
            return true;
    return false;
}

inline std::string arff_quote(std::string_view s) {
    if (!needs_arff_quotes(s)) return std::string(s);
    std::string out = "'";
    for (char c : s) {
        if (c == '\'' || c == '\\') out.push_back('\\');
        out.push_back(c);
    }
    out.push_back('\'');
    return out;
}

inline std::string csv_quote(std::string_view s) {
    bool need = s.empty() || s == "?";
    for (char c : s)
        if (c == ',' || c == '"' || c == '\n' || c == '\r' ||
            std::isspace(static_cast<unsigned char>(c)))
            need = true;
    if (!need) return std::string(s);
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// ARFF / CSV

/// Parses the ARFF subset used by the UCI screening files: @relation,
/// @attribute (nominal {..} or numeric/real/integer), @data with CSV rows,
/// '?' for missing values and '%' comments.
inline DataTable parse_arff(std::string_view text) {
    DataTable t;
    bool in_data = false;
    std::size_t line_no = 0;
    for (std::string_view raw : detail::lines_of(text)) {
        ++line_no;
        std::string_view line = detail::trim(raw);
        if (line.empty() || line.front() == '%') continue;
        if (!in_data) {
            if (detail::starts_with_ci(line, "@relation")) {
                std::string_view rest = line.substr(9);
                t.relation = detail::take_name(rest);
            } else if (detail::starts_with_ci(line, "@attribute")) {
                std::string_view rest = line.substr(10);
                Attribute a;
                a.name = detail::take_name(rest);
                rest = detail::trim(rest);
                if (!rest.empty() && rest.front() == '{') {
                    const std::size_t close = rest.rfind('}');
                    if (close == std::string_view::npos)
                        throw ParseError("line " + std::to_string(line_no) +
                                         ": unterminated category list");
                    a.categories = detail::split_record(rest.substr(1, close - 1), true);
                    if (a.categories.empty() ||
                        (a.categories.size() == 1 && a.categories.front().empty()))
                        throw ParseError("line " + std::to_string(line_no) +
                                         ": empty category list");
                    a.kind = kind_for_categories(a.categories.size());
                } else {
                    const std::string type = detail::lower(detail::trim(rest));
                    if (type != "numeric" && type != "real" && type != "integer")
                        throw ParseError("line " + std::to_string(line_no) +
                                         ": unsupported attribute type '" + std::string(rest) +
                                         "'");
                    a.kind = AttributeKind::continuous;
                }
                if (t.schema.index_of(a.name))
                    throw ParseError("duplicate attribute '" + a.name + "'");
                t.schema.attributes.push_back(std::move(a));
            } else if (detail::starts_with_ci(line, "@data")) {
                if (t.schema.attributes.empty()) throw ParseError("@data before any @attribute");
                detail::flag_label(t.schema);
                in_data = true;
            } else {
                throw ParseError("line " + std::to_string(line_no) + ": malformed header line");
            }
            continue;
        }
        std::vector<bool> quoted;
        auto fields = detail::split_record(line, true, &quoted);
        if (fields.size() != t.schema.size())
            throw ParseError("line " + std::to_string(line_no) + ": expected " +
                             std::to_string(t.schema.size()) + " values, found " +
                             std::to_string(fields.size()));
        std::vector<Cell> row;
        row.reserve(fields.size());
        for (std::size_t i = 0; i < fields.size(); ++i)
            row.push_back(detail::parse_cell(t.schema.attributes[i], fields[i], quoted[i], line_no));
        t.rows.push_back(std::move(row));
    }
    if (!in_data) throw ParseError("missing @data section");
    return t;
}

inline std::string to_arff(const DataTable& t) {
    std::string out = "@relation " + detail::arff_quote(t.relation.empty() ? "data" : t.relation) +
                      "\n\n";
    for (const auto& a : t.schema.attributes) {
        out += "@attribute " + detail::arff_quote(a.name) + " ";
        if (a.kind == AttributeKind::continuous) {
            out += "numeric\n";
        } else {
            out += "{";
            for (std::size_t i = 0; i < a.categories.size(); ++i) {
                if (i) out += ",";
                out += detail::arff_quote(a.categories[i]);
            }
            out += "}\n";
        }
    }
    out += "\n@data\n";
    for (const auto& row : t.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out += ",";
            if (is_missing(row[i]))
                out += "?";
            else if (auto* d = std::get_if<double>(&row[i]))
                out += detail::format_double(*d);
            else
                out += detail::arff_quote(std::get<std::string>(row[i]));
        }
        out += "\n";
    }
    return out;
}

/// Parses RFC-4180 CSV whose header must list `schema`'s attribute names in
/// order. Empty unquoted cells (and '?') are missing.
inline DataTable parse_csv(std::string_view text, const FeatureSchema& schema) {
    DataTable t;
    t.schema = schema;
    // Records may contain quoted newlines; re-join physical lines when a quote is open.
    std::vector<std::string> records;
    {
        std::string cur;
        bool open = false;
        for (std::string_view l : detail::lines_of(text)) {
            if (!cur.empty() || open) cur += "\n";
            cur += l;
            for (char c : l)
                if (c == '"') open = !open;
            if (!open) {
                records.push_back(cur);
                cur.clear();
            }
        }
        if (open) throw ParseError("unterminated quoted field");
    }
    while (!records.empty() && detail::trim(records.back()).empty()) records.pop_back();
    if (records.empty()) throw ParseError("CSV: missing header row");
    auto header = detail::split_record(records.front(), false);
    if (header.size() != schema.size())
        throw ParseError("CSV header has " + std::to_string(header.size()) +
                         " columns, schema has " + std::to_string(schema.size()));
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] != schema.attributes[i].name)
            throw ParseError("CSV header mismatch at column " + std::to_string(i) + ": '" +
                             header[i] + "' vs '" + schema.attributes[i].name + "'");
    for (std::size_t r = 1; r < records.size(); ++r) {
        if (detail::trim(records[r]).empty()) continue;
        std::vector<bool> quoted;
        auto fields = detail::split_record(records[r], false, &quoted);
        if (fields.size() != schema.size())
            throw ParseError("CSV row " + std::to_string(r) + ": expected " +
                             std::to_string(schema.size()) + " values, found " +
                             std::to_string(fields.size()));
        std::vector<Cell> row;
        for (std::size_t i = 0; i < fields.size(); ++i)
            row.push_back(detail::parse_cell(schema.attributes[i], fields[i], quoted[i], r + 1));
        t.rows.push_back(std::move(row));
    }
    return t;
}

inline std::string to_csv(const DataTable& t) {
    std::string out;
    for (std::size_t i = 0; i < t.schema.size(); ++i) {
        if (i) out += ",";
        out += detail::csv_quote(t.schema.attributes[i].name);
    }
    out += "\n";
    for (const auto& row : t.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out += ",";
            if (is_missing(row[i])) continue;
            if (auto* d = std::get_if<double>(&row[i]))
                out += detail::format_double(*d);
            else
                out += detail::csv_quote(std::get<std::string>(row[i]));
        }
        out += "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Missing values

struct MissingCounts {
    std::vector<std::size_t> per_attribute;
    std::size_t total = 0;
};

inline MissingCounts count_missing(const DataTable& t) {
    MissingCounts mc;
    mc.per_attribute.assign(t.schema.size(), 0);
    for (const auto& row : t.rows)
        for (std::size_t i = 0; i < row.size(); ++i)
            if (is_missing(row[i])) {
                ++mc.per_attribute[i];
                ++mc.total;
            }
    return mc;
}

struct LabelCounts {
    std::size_t positive = 0;
    std::size_t negative = 0;
};

inline LabelCounts count_labels(const DataTable& t) {
    const std::size_t li = t.schema.label_index();
    const std::string pos = t.schema.attributes[li].positive_token();
    LabelCounts lc;
    for (const auto& row : t.rows) {
        if (is_missing(row[li])) continue;
        if (std::get<std::string>(row[li]) == pos)
            ++lc.positive;
        else
            ++lc.negative;
    }
    return lc;
}

enum class ImputeKind { median, knn, drop_rows };

struct ImputeStrategy {
    ImputeKind kind = ImputeKind::median;
    std::size_t k = 5;            ///< neighbours for knn
    std::size_t max_missing = 3;  ///< drop_rows: rows with more missing cells are removed

    static ImputeStrategy median() { return {}; }
    static ImputeStrategy knn(std::size_t k) { return {ImputeKind::knn, k, 3}; }
    static ImputeStrategy drop_rows(std::size_t max_missing) {
        return {ImputeKind::drop_rows, 5, max_missing};
    }
};

inline std::string_view to_string(ImputeKind k) {
    switch (k) {
        case ImputeKind::median: return "median";
        case ImputeKind::knn: return "knn";
        case ImputeKind::drop_rows: return "drop_rows";
    }
    return "?";
}

inline ImputeKind impute_kind_from_string(std::string_view s) {
    if (s == "median") return ImputeKind::median;
    if (s == "knn") return ImputeKind::knn;
    if (s == "drop_rows" || s == "drop") return ImputeKind::drop_rows;
    throw InvalidArgument("unknown imputation strategy '" + std::string(s) + "'");
}

/// Frozen imputation state: per-attribute fill values (median for continuous,
/// mode for nominal) plus, for knn, the donor rows.
struct Imputer {
    ImputeStrategy strategy;
    std::vector<Cell> fill;  ///< indexed by attribute
    std::vector<double> range_min, range_max;
    std::vector<std::vector<Cell>> donors;

    /// Fill every missing cell of `row` (row must match the fitted schema).
    void fill_row(std::vector<Cell>& row, const FeatureSchema& schema) const;
};

namespace detail {

inline Cell mode_of(const Attribute& a, const std::vector<std::size_t>& counts) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < counts.size(); ++c)
        if (counts[c] > counts[best]) best = c;
    return a.categories[best];
}

inline double knn_distance(const std::vector<Cell>& q, const std::vector<Cell>& d,
                           const FeatureSchema& schema, const Imputer& imp) {
    double sum = 0.0;
    std::size_t present = 0, total = 0;
    for (std::size_t i = 0; i < schema.size(); ++i) {
        const auto& a = schema.attributes[i];
        if (a.is_label) continue;
        ++total;
        if (is_missing(q[i]) || is_missing(d[i])) continue;
        ++present;
        if (a.kind == AttributeKind::continuous) {
            const double span = imp.range_max[i] - imp.range_min[i];
            const double diff =
                span > 0 ? (std::get<double>(q[i]) - std::get<double>(d[i])) / span : 0.0;
            sum += diff * diff;
        } else if (std::get<std::string>(q[i]) != std::get<std::string>(d[i])) {
            sum += a.kind == AttributeKind::categorical ? 2.0 : 1.0;
        }
    }
    if (present == 0) return std::numeric_limits<double>::infinity();
    return std::sqrt(sum * static_cast<double>(total) / static_cast<double>(present));
}

}  // namespace detail

inline void Imputer::fill_row(std::vector<Cell>& row, const FeatureSchema& schema) const {
    if (row.size() != schema.size()) throw InvalidArgument("fill_row: arity mismatch");
    std::vector<std::size_t> missing;
    for (std::size_t i = 0; i < row.size(); ++i)
        if (is_missing(row[i])) missing.push_back(i);
    if (missing.empty()) return;
    if (strategy.kind != ImputeKind::knn || donors.empty()) {
        for (std::size_t i : missing) row[i] = fill[i];
        return;
    }
    std::vector<std::pair<double, std::size_t>> dist;
    dist.reserve(donors.size());
    for (std::size_t d = 0; d < donors.size(); ++d)
        dist.emplace_back(detail::knn_distance(row, donors[d], schema, *this), d);
    std::stable_sort(dist.begin(), dist.end(),
                     [](const auto& x, const auto& y) { return x.first < y.first; });
    for (std::size_t i : missing) {
        const auto& a = schema.attributes[i];
        std::vector<std::size_t> chosen;
        for (const auto& [dv, d] : dist) {
            if (!std::isfinite(dv)) break;
            if (is_missing(donors[d][i])) continue;
            chosen.push_back(d);
            if (chosen.size() == strategy.k) break;
        }
        if (chosen.empty()) {
            row[i] = fill[i];
            continue;
        }
        if (a.kind == AttributeKind::continuous) {
            double s = 0.0;
            for (std::size_t d : chosen) s += std::get<double>(donors[d][i]);
            row[i] = s / static_cast<double>(chosen.size());
        } else {
            std::vector<std::size_t> counts(a.categories.size(), 0);
            for (std::size_t d : chosen)
                ++counts[*a.category_index(std::get<std::string>(donors[d][i]))];
            row[i] = detail::mode_of(a, counts);
        }
    }
}

/// Learns fill values (and knn donors) from `t`.
inline Imputer fit_imputer(const DataTable& t, ImputeStrategy strategy) {
    if (strategy.kind == ImputeKind::knn && strategy.k < 1)
        throw InvalidArgument("knn imputation requires k >= 1");
    Imputer imp;
    imp.strategy = strategy;
    const std::size_t m = t.schema.size();
    imp.fill.assign(m, Missing{});
    imp.range_min.assign(m, 0.0);
    imp.range_max.assign(m, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        const auto& a = t.schema.attributes[i];
        if (a.kind == AttributeKind::continuous) {
            std::vector<double> vals;
            for (const auto& row : t.rows)
                if (!is_missing(row[i])) vals.push_back(std::get<double>(row[i]));
            if (vals.empty()) {
                if (count_missing(t).per_attribute[i] > 0)
                    throw InvalidArgument("cannot impute attribute '" + a.name +
                                          "': every value is missing");
                continue;
            }
            imp.fill[i] = median(vals);
            imp.range_min[i] = *std::min_element(vals.begin(), vals.end());
            imp.range_max[i] = *std::max_element(vals.begin(), vals.end());
        } else {
            std::vector<std::size_t> counts(a.categories.size(), 0);
            std::size_t seen = 0;
            for (const auto& row : t.rows)
                if (!is_missing(row[i])) {
                    ++counts[*a.category_index(std::get<std::string>(row[i]))];
                    ++seen;
                }
            if (seen == 0) {
                if (!t.rows.empty())
                    throw InvalidArgument("cannot impute attribute '" + a.name +
                                          "': every value is missing");
                continue;
            }
            imp.fill[i] = detail::mode_of(a, counts);
        }
    }
    if (strategy.kind == ImputeKind::knn) imp.donors = t.rows;
    return imp;
}

/// Fills missing cells. median: median / mode per attribute; knn: mean (or
/// mode) of the k nearest donor rows on the cells both rows have; drop_rows:
/// removes rows with more than `max_missing` missing cells, then fills any
/// remainder with median / mode.
inline DataTable impute(const DataTable& t, ImputeStrategy strategy) {
    const std::size_t li = t.schema.label_index();
    for (const auto& row : t.rows)
        if (is_missing(row[li])) throw InvalidArgument("impute: missing class label");
    DataTable src = t;
    if (strategy.kind == ImputeKind::drop_rows) {
        std::erase_if(src.rows, [&](const std::vector<Cell>& row) {
            return static_cast<std::size_t>(std::count_if(row.begin(), row.end(), is_missing)) >
                   strategy.max_missing;
        });
    }
    Imputer imp = fit_imputer(src, strategy);
    for (auto& row : src.rows) imp.fill_row(row, src.schema);
    return src;
}

// ---------------------------------------------------------------------------
// Encoding

struct ColumnInfo {
    std::string attribute;
    std::string category;  ///< one-hot member, empty otherwise
    AttributeKind kind = AttributeKind::continuous;

    std::string name() const { return category.empty() ? attribute : attribute + "=" + category; }
    friend bool operator==(const ColumnInfo&, const ColumnInfo&) = default;
};

struct DesignMatrix {
    Matrix x;
    std::vector<ColumnInfo> columns;
    std::vector<int> y;  ///< 1 = ASD

    std::size_t rows() const noexcept { return x.rows(); }

    /// Source attributes in column order, without repeats.
    std::vector<std::string> attribute_groups() const {
        std::vector<std::string> out;
        for (const auto& c : columns)
            if (std::find(out.begin(), out.end(), c.attribute) == out.end())
                out.push_back(c.attribute);
        return out;
    }

    DesignMatrix select_rows(std::span<const std::size_t> idx) const {
        DesignMatrix out;
        out.x = x.select_rows(idx);
        out.columns = columns;
        out.y.reserve(idx.size());
        for (std::size_t i : idx) out.y.push_back(y[i]);
        return out;
    }

    DesignMatrix select_columns(std::span<const std::size_t> idx) const {
        DesignMatrix out;
        out.x = x.select_cols(idx);
        for (std::size_t j : idx) out.columns.push_back(columns[j]);
        out.y = y;
        return out;
    }
};

/// Column layout implied by a schema: binary -> one 0/1 column, categorical ->
/// one indicator per declared category, continuous -> as is. Label excluded.
inline std::vector<ColumnInfo> encoded_columns(const FeatureSchema& schema) {
    std::vector<ColumnInfo> cols;
    for (const auto& a : schema.attributes) {
        if (a.is_label) continue;
        if (a.kind == AttributeKind::categorical) {
            for (const auto& c : a.categories) cols.push_back({a.name, c, a.kind});
        } else {
            cols.push_back({a.name, "", a.kind});
        }
    }
    return cols;
}

/// Encodes one complete row. Categories unknown to the schema produce an
/// all-zero one-hot group (binary: 0) and a warning.
inline std::vector<double> encode_row(const FeatureSchema& schema, const std::vector<Cell>& row,
                                      Diagnostics* diag = nullptr) {
    std::vector<double> out;
    for (std::size_t i = 0; i < schema.size(); ++i) {
        const auto& a = schema.attributes[i];
        if (a.is_label) continue;
        if (is_missing(row[i]))
            throw InvalidArgument("encode: attribute '" + a.name + "' is missing");
        if (a.kind == AttributeKind::continuous) {
            out.push_back(std::get<double>(row[i]));
            continue;
        }
        const std::string& tok = std::get<std::string>(row[i]);
        if (a.kind == AttributeKind::binary) {
            if (!a.category_index(tok))
                warn(diag, "unseen_category", a.name + "=" + tok);
            out.push_back(tok == a.positive_token() ? 1.0 : 0.0);
            continue;
        }
        auto idx = a.category_index(tok);
        if (!idx) warn(diag, "unseen_category", a.name + "=" + tok);
        for (std::size_t c = 0; c < a.categories.size(); ++c)
            out.push_back(idx && *idx == c ? 1.0 : 0.0);
    }
    return out;
}

inline int encode_label(const Attribute& label, const Cell& c) {
    if (is_missing(c)) throw InvalidArgument("encode: missing class label");
    return std::get<std::string>(c) == label.positive_token() ? 1 : 0;
}

inline DesignMatrix encode(const DataTable& t) {
    const std::size_t li = t.schema.label_index();
    DesignMatrix m;
    m.columns = encoded_columns(t.schema);
    m.x = Matrix(t.row_count(), m.columns.size());
    m.y.reserve(t.row_count());
    for (std::size_t r = 0; r < t.row_count(); ++r) {
        auto enc = encode_row(t.schema, t.rows[r]);
        std::copy(enc.begin(), enc.end(), m.x.row(r).begin());
        m.y.push_back(encode_label(t.schema.attributes[li], t.rows[r][li]));
    }
    return m;
}

// ---------------------------------------------------------------------------
// Scaling

struct ScaledColumn {
    std::string column;  ///< ColumnInfo::name()
    double min = 0.0;
    double max = 0.0;

    double apply(double v) const { return max > min ? (v - min) / (max - min) : 0.0; }
    friend bool operator==(const ScaledColumn&, const ScaledColumn&) = default;
};

struct MinMaxScaler {
    std::vector<ScaledColumn> columns;

    /// Applies the fitted ranges to matching columns of `m` (by name).
    void transform(Matrix& x, const std::vector<ColumnInfo>& layout) const {
        for (const auto& sc : columns)
            for (std::size_t j = 0; j < layout.size(); ++j)
                if (layout[j].name() == sc.column)
                    for (std::size_t r = 0; r < x.rows(); ++r) x(r, j) = sc.apply(x(r, j));
    }
};

inline std::vector<std::size_t> continuous_columns(const DesignMatrix& m) {
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < m.columns.size(); ++j)
        if (m.columns[j].kind == AttributeKind::continuous) out.push_back(j);
    return out;
}

struct ScaleResult {
    DesignMatrix matrix;
    MinMaxScaler scaler;
};

/// p' = (p - min) / (max - min) per selected column; constant columns map to 0.
inline ScaleResult min_max_scale(const DesignMatrix& m, std::span<const std::size_t> columns) {
    ScaleResult out{m, {}};
    for (std::size_t j : columns) {
        if (j >= m.columns.size()) throw InvalidArgument("min_max_scale: column out of range");
        ScaledColumn sc{m.columns[j].name(), 0.0, 0.0};
        if (m.rows() > 0) {
            sc.min = sc.max = m.x(0, j);
            for (std::size_t r = 1; r < m.rows(); ++r) {
                sc.min = std::min(sc.min, m.x(r, j));
                sc.max = std::max(sc.max, m.x(r, j));
            }
        }
        for (std::size_t r = 0; r < m.rows(); ++r) out.matrix.x(r, j) = sc.apply(m.x(r, j));
        out.scaler.columns.push_back(sc);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Combining and splitting

/// Row-wise union of two tables with the same attribute names and kinds.
/// Nominal category lists are merged (first table's order, then new tokens).
inline DataTable combine(const DataTable& a, const DataTable& b) {
    if (a.schema.size() != b.schema.size())
        throw InvalidArgument("combine: attribute counts differ");
    DataTable out;
    out.relation = a.relation == b.relation ? a.relation : a.relation + "+" + b.relation;
    for (std::size_t i = 0; i < a.schema.size(); ++i) {
        const auto& x = a.schema.attributes[i];
        const auto& y = b.schema.attributes[i];
        if (x.name != y.name)
            throw InvalidArgument("combine: attribute " + std::to_string(i) + " is '" + x.name +
                                  "' vs '" + y.name + "'");
        const bool x_num = x.kind == AttributeKind::continuous;
        const bool y_num = y.kind == AttributeKind::continuous;
        if (x_num != y_num)
            throw InvalidArgument("combine: attribute '" + x.name + "' changes type");
        if (x.is_label != y.is_label)
            throw InvalidArgument("combine: label attribute differs at '" + x.name + "'");
        Attribute merged = x;
        if (!x_num) {
            for (const auto& c : y.categories)
                if (!merged.category_index(c)) merged.categories.push_back(c);
            merged.kind = kind_for_categories(merged.categories.size());
        }
        out.schema.attributes.push_back(std::move(merged));
    }
    if (out.schema.attributes[out.schema.label_index()].categories.size() != 2)
        throw InvalidArgument("combine: label classes do not align");
    out.rows = a.rows;
    out.rows.insert(out.rows.end(), b.rows.begin(), b.rows.end());
    return out;
}

/// Removes an attribute (e.g. the leaky `result` score) from a table.
inline DataTable drop_attribute(const DataTable& t, std::string_view name) {
    auto idx = t.schema.index_of(name);
    if (!idx) return t;
    DataTable out = t;
    out.schema.attributes.erase(out.schema.attributes.begin() + static_cast<std::ptrdiff_t>(*idx));
    for (auto& row : out.rows) row.erase(row.begin() + static_cast<std::ptrdiff_t>(*idx));
    return out;
}

struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/// Stratified holdout split. |test| = floor(n * test_fraction); per-class test
/// quotas are floor(n_c * f) with the remainder handed out by largest
/// fractional part (ties: lower class first). Indices are returned sorted.
inline SplitIndices stratified_split_indices(std::span<const int> y, double test_fraction,
                                             SeededRng& rng) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw InvalidArgument("train_test_split: test_fraction must lie in (0, 1)");
    const std::size_t n = y.size();
    const auto total_test = static_cast<std::size_t>(std::floor(static_cast<double>(n) * test_fraction));
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < n; ++i) by_class[y[i]].push_back(i);
    std::vector<std::pair<int, double>> frac;
    std::map<int, std::size_t> quota;
    std::size_t assigned = 0;
    for (const auto& [cls, idx] : by_class) {
        const double exact = static_cast<double>(idx.size()) * test_fraction;
        quota[cls] = static_cast<std::size_t>(std::floor(exact));
        assigned += quota[cls];
        frac.emplace_back(cls, exact - std::floor(exact));
    }
    std::stable_sort(frac.begin(), frac.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    for (std::size_t i = 0; assigned < total_test && i < frac.size(); ++i, ++assigned)
        ++quota[frac[i].first];
    SplitIndices s;
    for (auto& [cls, idx] : by_class) {
        auto perm = rng_shuffle(rng, idx.size());
        const std::size_t q = quota[cls];
        if (q == 0 || q >= idx.size())
            throw InvalidArgument("train_test_split: class " + std::to_string(cls) +
                                  " cannot appear on both sides of the split");
        for (std::size_t i = 0; i < idx.size(); ++i)
            (i < q ? s.test : s.train).push_back(idx[perm[i]]);
    }
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.test.begin(), s.test.end());
    return s;
}

struct TrainTestSplit {
    DesignMatrix train;
    DesignMatrix test;
    SplitIndices indices;
};

inline TrainTestSplit train_test_split(const DesignMatrix& m, double test_fraction,
                                       SeededRng& rng) {
    TrainTestSplit out;
    out.indices = stratified_split_indices(m.y, test_fraction, rng);
    out.train = m.select_rows(out.indices.train);
    out.test = m.select_rows(out.indices.test);
    return out;
}

}  // namespace asdml
