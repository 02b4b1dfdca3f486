#pragma once

// Frozen preprocessing: everything needed to turn a raw screening record into
// the feature row a trained model expects (imputation fills, one-hot layout,
// min/max ranges, selected columns), serialisable so the service applies the
// exact training-time transform.

#include <map>
#include <string>
#include <vector>

#include "asdml/dataset.hpp"
#include "asdml/feature_selection.hpp"
#include "json.hpp"

namespace asdml {

struct PreprocessConfig {
    std::string impute = "median";  ///< median | knn | drop_rows
    std::size_t knn_k = 5;
    std::size_t drop_max_missing = 3;
    bool drop_leaky = false;  ///< remove the AQ-10 `result` sum
    std::size_t top_k = 10;

    ImputeStrategy strategy() const {
        switch (impute_kind_from_string(impute)) {
            case ImputeKind::median: return ImputeStrategy::median();
            case ImputeKind::knn: return ImputeStrategy::knn(knn_k);
            case ImputeKind::drop_rows: return ImputeStrategy::drop_rows(drop_max_missing);
        }
        return {};
    }

    friend bool operator==(const PreprocessConfig&, const PreprocessConfig&) = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(PreprocessConfig, impute, knn_k, drop_max_missing, drop_leaky, top_k)

inline constexpr const char* kLeakyAttribute = "result";

// ----------------------------------------------------------- JSON plumbing

inline void to_json(nlohmann::json& j, const Attribute& a) {
    j = {{"name", a.name}, {"kind", std::string(to_string(a.kind))}, {"categories", a.categories},
         {"is_label", a.is_label}};
}
inline void from_json(const nlohmann::json& j, Attribute& a) {
    j.at("name").get_to(a.name);
    a.kind = attribute_kind_from_string(j.at("kind").get<std::string>());
    a.categories = j.value("categories", std::vector<std::string>{});
    a.is_label = j.value("is_label", false);
}

inline nlohmann::json cell_to_json(const Cell& c) {
    if (is_missing(c)) return nullptr;
    if (const auto* d = std::get_if<double>(&c)) return *d;
    return std::get<std::string>(c);
}

inline Cell cell_from_json(const nlohmann::json& j) {
    if (j.is_null()) return Missing{};
    if (j.is_number()) return j.get<double>();
    if (j.is_string()) return j.get<std::string>();
    throw ParseError("cell must be null, a number or a string");
}

inline void to_json(nlohmann::json& j, const RankedFeature& f) { j = {{"name", f.name}, {"score", f.score}}; }
inline void from_json(const nlohmann::json& j, RankedFeature& f) {
    j.at("name").get_to(f.name);
    j.at("score").get_to(f.score);
}

// ------------------------------------------------------------------ pipeline

struct FrozenPipeline {
    PreprocessConfig config;
    FeatureSchema schema;          ///< after dropping leaky attributes; label included
    std::vector<Cell> fill;        ///< per attribute: median / mode used for absent fields
    MinMaxScaler scaler;
    std::vector<ColumnInfo> encoded;        ///< full one-hot layout
    std::vector<std::size_t> selected;      ///< indices into `encoded`
    std::vector<RankedFeature> ranking;

    std::vector<std::string> feature_names() const {
        std::vector<std::string> out;
        for (auto j : selected) out.push_back(encoded[j].name());
        return out;
    }

    /// Raw row (schema order, label cell ignored) -> selected, scaled features.
    std::vector<double> transform_row(std::vector<Cell> row, Diagnostics* diag = nullptr) const {
        if (row.size() != schema.size())
            throw InvalidArgument("pipeline: row has " + std::to_string(row.size()) + " cells, schema has " +
                                  std::to_string(schema.size()));
        const std::size_t li = schema.label_index();
        for (std::size_t i = 0; i < row.size(); ++i)
            if (i != li && is_missing(row[i])) row[i] = fill[i];
        auto enc = encode_row(schema, row, diag);
        Matrix x(1, enc.size());
        std::copy(enc.begin(), enc.end(), x.row(0).begin());
        scaler.transform(x, encoded);
        std::vector<double> out;
        out.reserve(selected.size());
        for (auto j : selected) out.push_back(x(0, j));
        return out;
    }

    /// Rows of a table sharing this schema (labels kept when present).
    DesignMatrix transform(const DataTable& t, Diagnostics* diag = nullptr) const {
        DataTable src = t;
        if (src.schema.index_of(kLeakyAttribute) && !schema.index_of(kLeakyAttribute))
            src = drop_attribute(src, kLeakyAttribute);
        if (src.schema.size() != schema.size())
            throw InvalidArgument("pipeline: table schema does not match the fitted schema");
        for (std::size_t i = 0; i < schema.size(); ++i)
            if (src.schema.attributes[i].name != schema.attributes[i].name)
                throw InvalidArgument("pipeline: attribute " + std::to_string(i) + " is '" +
                                      src.schema.attributes[i].name + "', expected '" +
                                      schema.attributes[i].name + "'");
        DesignMatrix m;
        for (auto j : selected) m.columns.push_back(encoded[j]);
        m.x = Matrix(src.row_count(), selected.size());
        const std::size_t li = schema.label_index();
        for (std::size_t r = 0; r < src.row_count(); ++r) {
            const auto row = transform_row(src.rows[r], diag);
            std::copy(row.begin(), row.end(), m.x.row(r).begin());
            if (!is_missing(src.rows[r][li])) m.y.push_back(encode_label(schema.attributes[li], src.rows[r][li]));
        }
        if (!m.y.empty() && m.y.size() != m.rows()) throw InvalidArgument("pipeline: some rows lack a label");
        return m;
    }

    /// Builds a schema-ordered row from named fields; absent names stay missing.
    /// Values are numbers or tokens; numeric tokens for nominal attributes are
    /// accepted as their string form ("1" for A-scores).
    std::vector<Cell> row_from_fields(const std::map<std::string, nlohmann::json>& fields) const {
        std::vector<Cell> row(schema.size(), Missing{});
        for (const auto& [name, value] : fields) {
            const auto idx = schema.index_of(name);
            if (!idx) throw InvalidArgument("unknown field '" + name + "'");
            const auto& a = schema.attributes[*idx];
            if (value.is_null()) continue;
            if (a.kind == AttributeKind::continuous) {
                if (value.is_number()) {
                    row[*idx] = value.get<double>();
                } else if (value.is_string()) {
                    auto v = detail::parse_double(value.get<std::string>());
                    if (!v) throw InvalidArgument("field '" + name + "' must be numeric");
                    row[*idx] = *v;
                } else {
                    throw InvalidArgument("field '" + name + "' must be numeric");
                }
            } else if (value.is_string()) {
                row[*idx] = value.get<std::string>();
            } else if (value.is_number_integer()) {
                row[*idx] = std::to_string(value.get<long long>());
            } else {
                throw InvalidArgument("field '" + name + "' must be a category token");
            }
        }
        return row;
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["format_version"] = 1;
        j["config"] = config;
        j["schema"] = schema.attributes;
        nlohmann::json f = nlohmann::json::object();
        for (std::size_t i = 0; i < schema.size(); ++i)
            if (!schema.attributes[i].is_label) f[schema.attributes[i].name] = cell_to_json(fill[i]);
        j["fill"] = f;
        nlohmann::json sc = nlohmann::json::array();
        for (const auto& c : scaler.columns) sc.push_back({{"column", c.column}, {"min", c.min}, {"max", c.max}});
        j["scaler"] = sc;
        nlohmann::json sel = nlohmann::json::array();
        for (const auto& name : feature_names()) sel.push_back(name);
        j["selected_columns"] = sel;
        j["ranking"] = ranking;
        return j;
    }

    static FrozenPipeline from_json(const nlohmann::json& j) {
        try {
            if (j.value("format_version", 0) != 1) throw ParseError("unsupported pipeline format version");
            FrozenPipeline p;
            p.config = j.at("config").get<PreprocessConfig>();
            p.schema.attributes = j.at("schema").get<std::vector<Attribute>>();
            p.schema.label_index();
            p.fill.assign(p.schema.size(), Missing{});
            const auto& f = j.at("fill");
            for (std::size_t i = 0; i < p.schema.size(); ++i)
                if (f.contains(p.schema.attributes[i].name)) p.fill[i] = cell_from_json(f.at(p.schema.attributes[i].name));
            for (const auto& c : j.at("scaler"))
                p.scaler.columns.push_back({c.at("column").get<std::string>(), c.at("min").get<double>(),
                                            c.at("max").get<double>()});
            p.encoded = encoded_columns(p.schema);
            for (const auto& name : j.at("selected_columns")) {
                const auto want = name.get<std::string>();
                auto it = std::find_if(p.encoded.begin(), p.encoded.end(),
                                       [&](const ColumnInfo& c) { return c.name() == want; });
                if (it == p.encoded.end()) throw ParseError("pipeline: selected column '" + want + "' not in schema");
                p.selected.push_back(std::size_t(it - p.encoded.begin()));
            }
            p.ranking = j.value("ranking", std::vector<RankedFeature>{});
            return p;
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("malformed pipeline document: ") + e.what());
        } catch (const InvalidArgument& e) {
            throw ParseError(std::string("malformed pipeline document: ") + e.what());
        }
    }

    /// Identity of the transform: hash of its canonical JSON.
    std::string hash() const { return hex64(fnv1a64(to_json().dump())); }
};

struct PreparedData {
    FrozenPipeline pipeline;
    FeatureRanking ranking;
    DesignMatrix encoded;   ///< imputed, encoded, scaled; every column
    DesignMatrix selected;  ///< top-k attributes only
    std::size_t rows_dropped = 0;
};

/// Fits the preprocessing chain on `raw` (impute -> encode -> min-max scale
/// continuous columns -> chi-square rank -> top-k) and returns both the frozen
/// transform and the transformed data.
inline PreparedData prepare(const DataTable& raw, const PreprocessConfig& cfg, Diagnostics* diag = nullptr) {
    if (cfg.top_k < 1) throw InvalidArgument("preprocess: top_k must be >= 1");
    DataTable t = cfg.drop_leaky ? drop_attribute(raw, kLeakyAttribute) : raw;
    PreparedData out;
    const auto strategy = cfg.strategy();
    const DataTable imputed = impute(t, strategy);
    out.rows_dropped = t.row_count() - imputed.row_count();
    if (out.rows_dropped > 0)
        warn(diag, "rows_dropped", std::to_string(out.rows_dropped) + " rows removed by drop_rows imputation");
    // Absent fields at serve time fall back to median / mode of the kept rows.
    const Imputer fallback = fit_imputer(imputed, ImputeStrategy::median());
    const DesignMatrix enc = encode(imputed);
    auto scaled = min_max_scale(enc, continuous_columns(enc));
    out.encoded = std::move(scaled.matrix);
    out.ranking = chi_square_scores(out.encoded, {}, diag);
    if (cfg.top_k > out.ranking.entries.size())
        throw InvalidArgument("preprocess: top_k=" + std::to_string(cfg.top_k) + " exceeds " +
                              std::to_string(out.ranking.entries.size()) + " attributes");
    out.selected = select_top_k(out.encoded, out.ranking, cfg.top_k);

    FrozenPipeline& p = out.pipeline;
    p.config = cfg;
    p.schema = imputed.schema;
    p.fill = fallback.fill;
    p.scaler = std::move(scaled.scaler);
    p.encoded = out.encoded.columns;
    for (const auto& c : out.selected.columns)
        p.selected.push_back(std::size_t(std::find(p.encoded.begin(), p.encoded.end(), c) - p.encoded.begin()));
    p.ranking = out.ranking.entries;
    return out;
}

}  // namespace asdml
