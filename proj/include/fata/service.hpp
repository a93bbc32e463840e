#pragma once

// Interactive FATA sessions over REST: create (stage one), answer (stage two),
// reask and read-only snapshots.

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>

#include "fata/gateway.hpp"
#include "fata/protocol.hpp"

namespace fata::service {

using Clock = std::function<std::chrono::system_clock::time_point()>;

struct ServiceConfig {
    std::chrono::seconds ttl{24 * 3600};
    protocol::TemplateVariant default_variant = protocol::TemplateVariant::Standard;
    std::optional<std::filesystem::path> templates_dir; // built-in templates when unset
    std::optional<std::filesystem::path> persist_dir;   // in-memory only when unset
    protocol::ParseOptions parse;
    Clock clock;                                        // default: system_clock::now
    std::function<std::string()> token_source;          // default: 128 random bits, hex
};

struct Session {
    std::string session_id;
    protocol::SessionState state;
    std::string query;
    protocol::TemplateVariant variant = protocol::TemplateVariant::Standard;
    std::optional<protocol::QuestionSet> question_set;
    std::optional<protocol::UserAnswers> user_answers;
    std::optional<std::string> final_answer;
    std::chrono::system_clock::time_point created_at;
    std::chrono::system_clock::time_point expires_at;
};

json session_to_json(const Session& s);
Session session_from_json(const json& j);

struct Response {
    int status = 200;
    json body;
};

/// Transport-independent service logic; every method is thread-safe and
/// mutations of one session are serialized.
class SessionService {
public:
    SessionService(const gateway::Gateway& generator, ServiceConfig config = {});

    Response create_session(const json& body);
    Response submit_answers(const std::string& session_id, const json& body);
    Response reask(const std::string& session_id);
    Response get_session(const std::string& session_id) const;

    std::size_t size() const;
    std::optional<Session> find(const std::string& session_id) const;

private:
    struct Entry {
        std::mutex mu;
        Session session;
    };

    std::shared_ptr<Entry> entry(const std::string& session_id) const;
    protocol::TemplateSet templates_for(protocol::TemplateVariant v) const;
    std::string now_iso() const;
    void persist(const Session& s) const;
    void load_persisted();

    const gateway::Gateway& generator_;
    ServiceConfig config_;
    mutable std::shared_mutex mu_;
    std::map<std::string, std::shared_ptr<Entry>> sessions_;
};

/// 32 lowercase hex characters from the OpenSSL CSPRNG.
std::string random_token();

struct ServerOptions {
    std::string cors_origin = "*";
};

/// HTTP front end for SessionService.
class HttpServer {
public:
    HttpServer(SessionService& service, ServerOptions options = {});
    ~HttpServer();
    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    /// Binds and returns the port (an ephemeral one when port == 0);
    /// throws IoError when binding fails.
    int bind(const std::string& host, int port);
    /// Blocks until stop().
    void listen();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace fata::service
