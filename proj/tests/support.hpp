#pragma once

// Shared fixtures for the unit tests: scripted transports, temp directories
// and gateway options that never sleep or read the real environment.

#include <atomic>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <random>
#include <string>
#include <vector>

#include "fata/gateway.hpp"
#include "fata/util.hpp"

namespace fata::test {

inline std::filesystem::path source_dir() { return FATA_SOURCE_DIR; }
inline std::filesystem::path data_dir() { return source_dir() / "data"; }

/// OpenAI style response body carrying one assistant message.
inline std::string chat_body(const std::string& text) {
    return json{{"choices", json::array({{{"index", 0}, {"message", {{"role", "assistant"}, {"content", text}}}}})}}
        .dump();
}

/// Text of the last user message of a chat-completions request body.
inline std::string last_user_message(const std::string& body) {
    auto j = json::parse(body);
    std::string out;
    for (const auto& m : j.at("messages"))
        if (m.at("role") == "user") out = m.at("content").get<std::string>();
    return out;
}

/// Transport driven by a callback; counts every call.
class FnTransport : public gateway::ChatTransport {
public:
    using Fn = std::function<gateway::HttpResponse(const std::string& body)>;

    explicit FnTransport(Fn fn) : fn_(std::move(fn)) {}

    gateway::HttpResponse post_chat(const gateway::ModelEndpoint&, const std::string&, const std::string& body) override {
        ++calls_;
        {
            std::lock_guard lock(mu_);
            bodies_.push_back(body);
        }
        return fn_(body);
    }

    int calls() const { return calls_.load(); }
    std::vector<std::string> bodies() const {
        std::lock_guard lock(mu_);
        return bodies_;
    }

private:
    Fn fn_;
    std::atomic<int> calls_{0};
    mutable std::mutex mu_;
    std::vector<std::string> bodies_;
};

inline std::shared_ptr<FnTransport> reply_with(std::function<std::string(const std::string& prompt)> fn) {
    return std::make_shared<FnTransport>([fn = std::move(fn)](const std::string& body) {
        return gateway::HttpResponse{200, chat_body(fn(last_user_message(body)))};
    });
}

inline gateway::ModelEndpoint test_endpoint(std::string id = "gen", std::string model = "test-model", int conc = 4) {
    gateway::ModelEndpoint e;
    e.endpoint_id = std::move(id);
    e.base_url = "http://127.0.0.1:9/v1";
    e.model_name = std::move(model);
    e.api_key_env = "FATA_TEST_KEY";
    e.max_concurrency = conc;
    e.timeout_seconds = 5;
    return e;
}

inline constexpr const char* kFixedTime = "2026-01-01T00:00:00.000Z";

/// No real sleeping, a fixed key and a fixed clock.
inline gateway::GatewayOptions quiet_options(std::shared_ptr<std::vector<long long>> sleeps = nullptr) {
    gateway::GatewayOptions o;
    o.sleep = [sleeps](std::chrono::milliseconds ms) {
        if (sleeps) sleeps->push_back(ms.count());
    };
    o.env_lookup = [](const std::string&) -> std::optional<std::string> { return std::string("test-key"); };
    o.clock = [] { return std::string(kFixedTime); };
    return o;
}

class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("fata-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

private:
    std::filesystem::path path_;
};

} // namespace fata::test
