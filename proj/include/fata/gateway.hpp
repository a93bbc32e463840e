#pragma once

// Chat-completion access for every pipeline stage: OpenAI-compatible wire
// format, retries with exponential backoff, a per-endpoint in-flight limit and
// record/replay keyed by a canonical request digest.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "fata/error.hpp"
#include "fata/util.hpp"

namespace fata::gateway {

struct ModelEndpoint {
    std::string endpoint_id;
    std::string base_url;    // e.g. "https://api.openai.com/v1"
    std::string model_name;
    std::string api_key_env; // name of the environment variable holding the key
    int max_concurrency = 1;
    double timeout_seconds = 120.0;
};

/// Throws ConfigError when max_concurrency < 1, timeout <= 0 or ids are empty.
void validate(const ModelEndpoint& endpoint);
void from_json(const json& j, ModelEndpoint& e);
void to_json(json& j, const ModelEndpoint& e);

struct ChatMessage {
    std::string role; // system | user | assistant
    std::string content;

    bool operator==(const ChatMessage&) const = default;
};

struct ChatRequest {
    std::vector<ChatMessage> messages;
    double temperature = 0.0;
    std::optional<std::string> seed_tag;

    bool operator==(const ChatRequest&) const = default;
};

ChatRequest user_request(std::string content, double temperature = 0.0);

/// Throws InvalidRequest unless there is a user message, every role is in the
/// closed set and temperature >= 0.
void validate(const ChatRequest& req);

ChatRequest chat_request_from_json(const json& j);

/// Canonical form hashed for replay keying: sorted keys, compact dump. The
/// model name is part of the key so one prompt sent to several judges stays
/// distinguishable.
std::string canonical_request(const ChatRequest& req, std::string_view model_name);
std::string request_hash(const ChatRequest& req, std::string_view model_name);

struct Transcript {
    std::string request_hash;
    std::string response_text;
    std::string model_name;
    std::int64_t latency_ms = 0;
    std::string timestamp;

    bool operator==(const Transcript&) const = default;
};

void to_json(json& j, const Transcript& t);
void from_json(const json& j, Transcript& t);

struct Completion {
    std::string text;
    Transcript transcript;
};

struct HttpResponse {
    int status = 0;
    std::string body;
};

/// One POST of a chat-completions body. Implementations throw Error(Timeout)
/// when the provider does not answer in time and Error(ProviderError) when no
/// HTTP response could be obtained at all.
class ChatTransport {
public:
    virtual ~ChatTransport() = default;
    virtual HttpResponse post_chat(const ModelEndpoint& endpoint, const std::string& api_key,
                                   const std::string& body) = 0;
};

/// cpp-httplib backed transport; POST {base_url}/chat/completions.
std::shared_ptr<ChatTransport> make_http_transport();

/// In-memory view of a JSON-lines transcript archive. The first record for a
/// hash wins when an archive holds duplicates.
class ReplayStore {
public:
    ReplayStore() = default;
    static ReplayStore load(const std::filesystem::path& path);

    void add(Transcript t);
    const Transcript* find(const std::string& hash) const;
    std::size_t size() const noexcept { return records_.size(); }

private:
    std::vector<Transcript> records_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Recorded response for req; throws ReplayMiss when the archive lacks it.
std::string replay(const ReplayStore& store, const ChatRequest& req, std::string_view model_name);

/// Append-only JSON-lines writer shared by every gateway of a run.
class TranscriptSink {
public:
    explicit TranscriptSink(std::filesystem::path path);
    void append(const Transcript& t);
    const std::filesystem::path& path() const noexcept { return path_; }

private:
    std::filesystem::path path_;
    std::mutex mu_;
};

enum class ReplayMode { Off, Strict, FallThrough };

struct RetryPolicy {
    int retry_budget = 3;
    std::chrono::milliseconds initial_backoff{1000};
    double multiplier = 2.0;
};

struct GatewayOptions {
    RetryPolicy retry;
    ReplayMode replay_mode = ReplayMode::Off;
    std::shared_ptr<const ReplayStore> replay_store;
    std::shared_ptr<TranscriptSink> sink;
    std::function<void(std::chrono::milliseconds)> sleep;                   // default: this_thread::sleep_for
    std::function<std::optional<std::string>(const std::string&)> env_lookup; // default: getenv
    std::function<std::string()> clock;                                     // default: utc_now_iso8601
};

class Gateway {
public:
    struct Result {
        std::optional<Completion> completion;
        std::optional<Error> error;
        bool ok() const noexcept { return completion.has_value(); }
    };

    Gateway(ModelEndpoint endpoint, std::shared_ptr<ChatTransport> transport, GatewayOptions options = {});

    /// Replay lookup first (when enabled), then the provider with retries.
    Completion complete(const ChatRequest& req) const;

    /// Results come back in input order; at most max_concurrency provider calls
    /// are in flight at once and a failed item never aborts the batch.
    std::vector<Result> run_bounded(const std::vector<ChatRequest>& requests) const;

    const ModelEndpoint& endpoint() const noexcept { return endpoint_; }
    /// Provider calls attempted so far, retries included.
    std::uint64_t provider_calls() const noexcept { return shared_->provider_calls.load(); }
    std::uint64_t replay_hits() const noexcept { return shared_->replay_hits.load(); }

private:
    struct Shared {
        std::mutex mu;
        std::condition_variable cv;
        int in_flight = 0;
        std::atomic<std::uint64_t> provider_calls{0};
        std::atomic<std::uint64_t> replay_hits{0};
    };

    Completion call_provider(const ChatRequest& req, const std::string& hash) const;

    ModelEndpoint endpoint_;
    std::shared_ptr<ChatTransport> transport_;
    GatewayOptions options_;
    std::shared_ptr<Shared> shared_;
};

} // namespace fata::gateway
