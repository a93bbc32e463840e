#include <httplib.h>

#include <spdlog/spdlog.h>

#include "fata/error.hpp"
#include "fata/service.hpp"

namespace fata::service {

struct HttpServer::Impl {
    SessionService& service;
    ServerOptions options;
    httplib::Server server;

    void reply(httplib::Response& res, const Response& r) {
        res.status = r.status;
        res.set_content(r.body.dump(), "application/json");
    }

    bool parse_body(const httplib::Request& req, httplib::Response& res, json& out) {
        if (req.body.empty()) {
            out = json::object();
            return true;
        }
        try {
            out = json::parse(req.body);
            return true;
        } catch (const json::parse_error& e) {
            reply(res, {400, json{{"error", {{"code", "InvalidRequest"}, {"message", std::string("invalid JSON: ") + e.what()}}}}});
            return false;
        }
    }

    Impl(SessionService& s, ServerOptions o) : service(s), options(std::move(o)) {
        server.set_default_headers({{"Access-Control-Allow-Origin", options.cors_origin},
                                    {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                                    {"Access-Control-Allow-Headers", "Content-Type"}});
        server.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
        server.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
            json body;
            if (parse_body(req, res, body)) reply(res, service.create_session(body));
        });
        server.Post(R"(/sessions/([A-Za-z0-9_-]+)/answers)", [this](const httplib::Request& req, httplib::Response& res) {
            json body;
            if (parse_body(req, res, body)) reply(res, service.submit_answers(req.matches[1], body));
        });
        server.Post(R"(/sessions/([A-Za-z0-9_-]+)/reask)", [this](const httplib::Request& req, httplib::Response& res) {
            reply(res, service.reask(req.matches[1]));
        });
        server.Get(R"(/sessions/([A-Za-z0-9_-]+))", [this](const httplib::Request& req, httplib::Response& res) {
            reply(res, service.get_session(req.matches[1]));
        });
        server.set_logger([](const httplib::Request& req, const httplib::Response& res) {
            spdlog::info("{} {} -> {}", req.method, req.path, res.status);
        });
    }
};

HttpServer::HttpServer(SessionService& service, ServerOptions options)
    : impl_(std::make_unique<Impl>(service, std::move(options))) {}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
    int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw Error(ErrorCode::IoError, "cannot bind " + host + ":" + std::to_string(port));
    return bound;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
    if (impl_) impl_->server.stop();
}

} // namespace fata::service
