#pragma once

// HTTP binding of ScreeningService (cpp-httplib). Adds CORS headers to every
// reply and answers preflight requests.

#include <string>

#include "asdml/service.hpp"
#include "httplib.h"

namespace asdml {

inline void bind_routes(httplib::Server& server, const ScreeningService& service, std::string cors_origin = "*") {
    auto dispatch = [&service, cors_origin](const httplib::Request& req, httplib::Response& res) {
        std::map<std::string, std::string> query;
        for (const auto& [k, v] : req.params) query.emplace(k, v);
        const auto reply = service.handle(req.method, req.path, req.body, query);
        res.status = reply.status;
        res.set_header("Access-Control-Allow-Origin", cors_origin);
        res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
        res.set_header("Access-Control-Allow-Headers", "Content-Type");
        if (!reply.body.empty()) res.set_content(reply.body, reply.content_type);
    };
    for (const char* p : {"/health", "/models", "/screen"}) {
        server.Get(p, dispatch);
        server.Post(p, dispatch);
        server.Options(p, dispatch);
    }
    server.set_error_handler([cors_origin](const httplib::Request&, httplib::Response& res) {
        res.set_header("Access-Control-Allow-Origin", cors_origin);
        if (res.body.empty()) res.set_content(nlohmann::json{{"error", "not found"}}.dump(), "application/json");
    });
}

}  // namespace asdml
