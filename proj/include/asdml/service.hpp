#pragma once

// Screening service: loads trained artifacts (pipeline.json + model.json +
// report.json) and answers screening requests. The handler here is pure
// (request in, reply out); service_http.hpp binds it to an HTTP server.

#include <array>
#include <cctype>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "asdml/classifiers.hpp"
#include "asdml/io.hpp"
#include "asdml/pipeline.hpp"

namespace asdml {

/// A trained model plus the exact preprocessing it was trained behind.
struct LoadedModel {
    std::string model_id;
    std::string kind;
    std::string dataset;
    std::optional<double> accuracy;  ///< headline test accuracy from report.json
    FrozenPipeline pipeline;
    TrainedModel model;
};

/// Reads an experiment output directory. The model must have been trained on
/// this pipeline (matching hashes).
inline LoadedModel load_model_dir(const std::filesystem::path& dir, std::string model_id = {}) {
    LoadedModel m;
    m.pipeline = FrozenPipeline::from_json(nlohmann::json::parse(read_file(dir / "pipeline.json")));
    m.model = model_from_json(nlohmann::json::parse(read_file(dir / "model.json")));
    if (m.model.pipeline_hash != m.pipeline.hash())
        throw ParseError("'" + dir.string() + "': model was trained on a different pipeline (" + m.model.pipeline_hash +
                         " vs " + m.pipeline.hash() + ")");
    if (m.model.feature_names != m.pipeline.feature_names())
        throw ParseError("'" + dir.string() + "': model features differ from the pipeline's selected columns");
    m.kind = to_string(m.model.spec.kind);
    m.dataset = "unknown";
    if (std::filesystem::exists(dir / "report.json")) {
        const auto report = nlohmann::json::parse(read_file(dir / "report.json"));
        m.dataset = report.value("dataset", m.dataset);
        if (report.contains("test") && report["test"].contains("accuracy"))
            m.accuracy = report["test"]["accuracy"].get<double>();
    }
    if (model_id.empty()) {
        const auto stem = std::filesystem::path(m.dataset).stem().string();
        model_id = (stem.empty() ? m.dataset : stem) + "-" + m.kind;
    }
    m.model_id = std::move(model_id);
    return m;
}

inline nlohmann::json model_descriptor(const LoadedModel& m) {
    return {{"model_id", m.model_id},
            {"kind", m.kind},
            {"display_name", display_name(m.model.spec.kind)},
            {"dataset", m.dataset},
            {"accuracy", m.accuracy ? nlohmann::json(*m.accuracy) : nlohmann::json(nullptr)},
            {"features", m.pipeline.feature_names()},
            {"pipeline_hash", m.pipeline.hash()}};
}

// ------------------------------------------------------------------ request

struct ScreeningRequest {
    std::array<int, 10> a{};
    std::optional<double> age;
    std::optional<std::string> gender, ethnicity, jaundice, family_autism, country, used_app_before, relation;

    int aq10_sum() const { return std::accumulate(a.begin(), a.end(), 0); }
};

/// Request failed validation; carries one message per offending field.
class ValidationError : public InvalidArgument {
public:
    explicit ValidationError(std::vector<std::string> details)
        : InvalidArgument(join(details)), details_(std::move(details)) {}
    const std::vector<std::string>& details() const noexcept { return details_; }

private:
    static std::string join(const std::vector<std::string>& d) {
        std::string s;
        for (const auto& x : d) s += (s.empty() ? "" : "; ") + x;
        return s;
    }
    std::vector<std::string> details_;
};

namespace detail {

inline const std::vector<std::string>& request_text_fields() {
    static const std::vector<std::string> v{"gender",  "ethnicity",       "jaundice", "family_autism",
                                            "country", "used_app_before", "relation"};
    return v;
}

}  // namespace detail

/// a1..a10 are required (0/1); every demographic field is optional and is
/// imputed with the training-time fill when absent or null.
inline ScreeningRequest parse_screening_request(const nlohmann::json& j) {
    std::vector<std::string> errs;
    ScreeningRequest r;
    if (!j.is_object()) throw ValidationError({"request body must be a JSON object"});
    for (const auto& [key, value] : j.items()) {
        const bool known = (key.size() >= 2 && key[0] == 'a' &&
                            (key == "a10" || (key.size() == 2 && key[1] >= '1' && key[1] <= '9'))) ||
                           key == "age" ||
                           std::find(detail::request_text_fields().begin(), detail::request_text_fields().end(),
                                     key) != detail::request_text_fields().end();
        if (!known) errs.push_back("unknown field '" + key + "'");
    }
    for (int q = 1; q <= 10; ++q) {
        const std::string key = "a" + std::to_string(q);
        if (!j.contains(key) || j[key].is_null()) {
            errs.push_back(key + " is required");
            continue;
        }
        const auto& v = j[key];
        if (v.is_boolean()) {
            r.a[q - 1] = v.get<bool>() ? 1 : 0;
        } else if (v.is_number_integer() && (v.get<long long>() == 0 || v.get<long long>() == 1)) {
            r.a[q - 1] = int(v.get<long long>());
        } else {
            errs.push_back(key + " must be 0 or 1");
        }
    }
    if (j.contains("age") && !j["age"].is_null()) {
        if (!j["age"].is_number() || !(j["age"].get<double>() > 0) || !std::isfinite(j["age"].get<double>()))
            errs.push_back("age must be a positive number of years");
        else
            r.age = j["age"].get<double>();
    }
    auto text = [&](const char* key, std::optional<std::string>& out) {
        if (!j.contains(key) || j[key].is_null()) return;
        if (!j[key].is_string() || j[key].get<std::string>().empty()) {
            errs.push_back(std::string(key) + " must be a non-empty string");
            return;
        }
        out = j[key].get<std::string>();
    };
    auto yes_no = [&](const char* key, std::optional<std::string>& out) {
        if (!j.contains(key) || j[key].is_null()) return;
        if (j[key].is_boolean()) {
            out = j[key].get<bool>() ? "yes" : "no";
            return;
        }
        const auto s = j[key].is_string() ? detail::lower(j[key].get<std::string>()) : "";
        if (s != "yes" && s != "no") errs.push_back(std::string(key) + " must be 'yes' or 'no'");
        else out = s;
    };
    text("gender", r.gender);
    text("ethnicity", r.ethnicity);
    yes_no("jaundice", r.jaundice);
    yes_no("family_autism", r.family_autism);
    text("country", r.country);
    yes_no("used_app_before", r.used_app_before);
    text("relation", r.relation);
    if (r.gender) {
        const auto g = detail::lower(*r.gender);
        if (g == "m" || g == "male") r.gender = "m";
        else if (g == "f" || g == "female") r.gender = "f";
        else errs.push_back("gender must be 'm' or 'f'");
    }
    if (!errs.empty()) throw ValidationError(std::move(errs));
    return r;
}

namespace detail {

/// Schema token for a free-text value: exact, else case/space/quote-insensitive.
inline std::string match_category(const Attribute& a, const std::string& v) {
    if (a.category_index(v)) return v;
    auto norm = [](std::string s) {
        std::string out;
        for (char c : s)
            if (!std::isspace(static_cast<unsigned char>(c)) && c != '\'' && c != '"' && c != '-' && c != '_')
                out += char(std::tolower(static_cast<unsigned char>(c)));
        return out;
    };
    const auto want = norm(v);
    for (const auto& c : a.categories)
        if (norm(c) == want) return c;
    return v;  // unseen: encodes as all-zero and is reported
}

}  // namespace detail

/// Named pipeline fields for a request. Fields the schema lacks are skipped;
/// `result` carries the AQ-10 sum.
inline std::map<std::string, nlohmann::json> request_fields(const ScreeningRequest& r, const FeatureSchema& schema) {
    std::map<std::string, nlohmann::json> f;
    auto put = [&](const std::string& name, const std::optional<std::string>& v) {
        const auto idx = schema.index_of(name);
        if (!v || !idx) return;
        f[name] = detail::match_category(schema.attributes[*idx], *v);
    };
    for (int q = 0; q < 10; ++q) {
        const std::string name = "A" + std::to_string(q + 1) + "_Score";
        if (schema.index_of(name)) f[name] = std::to_string(r.a[q]);
    }
    if (r.age && schema.index_of("age")) f["age"] = *r.age;
    put("gender", r.gender);
    put("ethnicity", r.ethnicity);
    put("jundice", r.jaundice);
    put("austim", r.family_autism);
    put("contry_of_res", r.country);
    put("used_app_before", r.used_app_before);
    put("relation", r.relation);
    if (schema.index_of(kLeakyAttribute)) f[kLeakyAttribute] = double(r.aq10_sum());
    return f;
}

struct ScreeningResult {
    double asd_probability = 0;
    double non_asd_probability = 0;
    std::string predicted_label;
    std::string model_id;
    int aq10_sum = 0;
    std::vector<double> features;  ///< the encoded row the model saw
    Diagnostics diag;
};

inline ScreeningResult screen(const LoadedModel& m, const ScreeningRequest& r) {
    ScreeningResult out;
    const auto row = m.pipeline.row_from_fields(request_fields(r, m.pipeline.schema));
    out.features = m.pipeline.transform_row(row, &out.diag);
    Matrix x(1, out.features.size());
    std::copy(out.features.begin(), out.features.end(), x.row(0).begin());
    out.asd_probability = predict_proba1(m.model, x)[0];
    out.non_asd_probability = 1.0 - out.asd_probability;
    out.predicted_label = out.asd_probability >= 0.5 ? "ASD" : "non-ASD";
    out.model_id = m.model_id;
    out.aq10_sum = r.aq10_sum();
    return out;
}

inline nlohmann::json to_json(const ScreeningResult& r) {
    nlohmann::json j = {{"asd_probability", r.asd_probability},
                        {"non_asd_probability", r.non_asd_probability},
                        {"predicted_label", r.predicted_label},
                        {"model_id", r.model_id},
                        {"aq10_sum", r.aq10_sum}};
    auto w = nlohmann::json::array();
    for (const auto& x : r.diag.warnings) w.push_back(x.code + ": " + x.message);
    j["warnings"] = w;
    return j;
}

// ------------------------------------------------------------------ handler

struct HttpReply {
    int status = 200;
    std::string body;
    std::string content_type = "application/json";
};

/// Model registry plus the request handler. Loaded models are immutable; a
/// swap replaces the whole registry under a lock, so in-flight requests keep
/// the snapshot they started with.
class ScreeningService {
public:
    struct Registry {
        std::vector<std::shared_ptr<const LoadedModel>> models;
        std::string default_id;
    };

    void add(LoadedModel m, bool make_default = false) {
        std::lock_guard lock(mu_);
        auto next = std::make_shared<Registry>(*registry_);
        std::erase_if(next->models, [&](const auto& x) { return x->model_id == m.model_id; });
        if (make_default || next->default_id.empty()) next->default_id = m.model_id;
        next->models.push_back(std::make_shared<const LoadedModel>(std::move(m)));
        registry_ = std::move(next);
    }

    std::shared_ptr<const Registry> snapshot() const {
        std::lock_guard lock(mu_);
        return registry_;
    }

    HttpReply handle(const std::string& method, const std::string& path, const std::string& body,
                     const std::map<std::string, std::string>& query = {}) const {
        if (method == "OPTIONS") return {204, "", "text/plain"};
        if (path == "/health") {
            if (method != "GET") return error(405, "method not allowed");
            return {200, "ok", "text/plain"};
        }
        if (path == "/models") {
            if (method != "GET") return error(405, "method not allowed");
            const auto reg = snapshot();
            auto list = nlohmann::json::array();
            for (const auto& m : reg->models) {
                auto d = model_descriptor(*m);
                d["default"] = m->model_id == reg->default_id;
                list.push_back(d);
            }
            return {200, list.dump()};
        }
        if (path == "/screen") {
            if (method != "POST") return error(405, "method not allowed");
            const auto reg = snapshot();
            if (reg->models.empty()) return error(503, "no model loaded");
            std::string id = reg->default_id;
            if (auto it = query.find("model"); it != query.end()) id = it->second;
            const LoadedModel* model = nullptr;
            for (const auto& m : reg->models)
                if (m->model_id == id) model = m.get();
            if (!model) return error(404, "unknown model '" + id + "'");
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(body);
            } catch (const nlohmann::json::exception&) {
                return error(400, "request body is not valid JSON");
            }
            try {
                return {200, to_json(screen(*model, parse_screening_request(j))).dump()};
            } catch (const ValidationError& e) {
                return {400, nlohmann::json{{"error", "validation failed"}, {"details", e.details()}}.dump()};
            } catch (const InvalidArgument& e) {
                return error(400, e.what());
            } catch (const std::exception& e) {
                return error(500, e.what());
            }
        }
        return error(404, "not found");
    }

private:
    static HttpReply error(int status, const std::string& msg) {
        return {status, nlohmann::json{{"error", msg}}.dump()};
    }

    mutable std::mutex mu_;
    std::shared_ptr<const Registry> registry_ = std::make_shared<Registry>();
};

}  // namespace asdml
