#pragma once

// HTTP routes for the replay service:
//   GET /scenarios
//   GET /scenarios/{id}/detections?from&to[&cursor]
//   GET /scenarios/{id}/track?from&to[&cursor]
//   GET /model/info
// and the static console under /ui/.

#include <memory>
#include <optional>
#include <string>

#include "httplib.h"
#include "uranus/console_api.hpp"

namespace uranus::console {

struct ServiceOptions {
    std::optional<json> bundle;  // bundle.json contents, when a model is loaded
    std::optional<fs::path> ui_dir;
};

namespace detail {

inline void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

inline std::optional<std::string> param(const httplib::Request& req, const char* name) {
    if (!req.has_param(name)) return std::nullopt;
    return req.get_param_value(name);
}

inline WindowQuery window_query(const httplib::Request& req) {
    WindowQuery q;
    q.scenario = req.matches[1];
    q.from = parse_query_time(param(req, "from"), q.from, "from");
    q.to = parse_query_time(param(req, "to"), q.to, "to");
    q.cursor = parse_cursor(param(req, "cursor"));
    return q;
}

template <class Fn>
void guarded(httplib::Response& res, Fn&& fn) {
    try {
        fn();
    } catch (const ApiError& e) {
        send_json(res, e.status(), error_body(e));
    } catch (const std::exception& e) {
        send_json(res, 500, {{"error", e.what()}, {"code", "internal"}});
    }
}

}  // namespace detail

/// Builds a server over `store`. The store must outlive the server.
inline std::unique_ptr<httplib::Server> make_server(const PredictionStore& store, ServiceOptions options = {}) {
    auto server = std::make_unique<httplib::Server>();
    const std::optional<json> info = options.bundle ? std::optional(model_info(*options.bundle)) : std::nullopt;

    server->Get("/scenarios", [&store](const httplib::Request&, httplib::Response& res) {
        detail::guarded(res, [&] { detail::send_json(res, 200, scenarios_body(store)); });
    });
    server->Get(R"(/scenarios/([^/]+)/detections)", [&store](const httplib::Request& req, httplib::Response& res) {
        detail::guarded(res, [&] {
            const auto q = detail::window_query(req);
            detail::send_json(res, 200, detections_body(q, query_window(store, q)));
        });
    });
    server->Get(R"(/scenarios/([^/]+)/track)", [&store](const httplib::Request& req, httplib::Response& res) {
        detail::guarded(res, [&] {
            const auto q = detail::window_query(req);
            detail::send_json(res, 200, track_body(q, query_window(store, q)));
        });
    });
    server->Get("/model/info", [info](const httplib::Request&, httplib::Response& res) {
        detail::guarded(res, [&] {
            if (!info) throw ApiError(404, "not_found", "no model bundle loaded");
            detail::send_json(res, 200, *info);
        });
    });
    if (options.ui_dir) server->set_mount_point("/ui", options.ui_dir->string());
    server->set_error_handler([](const httplib::Request&, httplib::Response& res) {
        if (res.status == 404 && res.body.empty())
            detail::send_json(res, 404, {{"error", "no such endpoint"}, {"code", "not_found"}});
    });
    return server;
}

}  // namespace uranus::console
