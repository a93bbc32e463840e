#include "fata/gateway.hpp"

#include <cmath>
#include <condition_variable>
#include <cstdlib>
#include <fstream>
#include <thread>

namespace fata::gateway {

void validate(const ModelEndpoint& e) {
    if (e.endpoint_id.empty()) throw Error(ErrorCode::ConfigError, "endpoint_id is empty");
    if (e.model_name.empty()) throw Error(ErrorCode::ConfigError, e.endpoint_id + ": model_name is empty");
    if (e.max_concurrency < 1) throw Error(ErrorCode::ConfigError, e.endpoint_id + ": max_concurrency must be >= 1");
    if (!(e.timeout_seconds > 0)) throw Error(ErrorCode::ConfigError, e.endpoint_id + ": timeout must be > 0");
}

void from_json(const json& j, ModelEndpoint& e) {
    e.endpoint_id = j.at("endpoint_id").get<std::string>();
    e.base_url = j.value("base_url", std::string{});
    e.model_name = j.at("model_name").get<std::string>();
    e.api_key_env = j.value("api_key_env", std::string{});
    e.max_concurrency = j.value("max_concurrency", 1);
    e.timeout_seconds = j.value("timeout", 120.0);
    validate(e);
}

void to_json(json& j, const ModelEndpoint& e) {
    j = json{{"endpoint_id", e.endpoint_id}, {"base_url", e.base_url},       {"model_name", e.model_name},
             {"api_key_env", e.api_key_env}, {"max_concurrency", e.max_concurrency}, {"timeout", e.timeout_seconds}};
}

ChatRequest user_request(std::string content, double temperature) {
    ChatRequest req;
    req.messages.push_back({"user", std::move(content)});
    req.temperature = temperature;
    return req;
}

void validate(const ChatRequest& req) {
    bool has_user = false;
    for (const auto& m : req.messages) {
        if (m.role != "system" && m.role != "user" && m.role != "assistant")
            throw Error(ErrorCode::InvalidRequest, "unknown role '" + m.role + "'");
        has_user = has_user || m.role == "user";
    }
    if (!has_user) throw Error(ErrorCode::InvalidRequest, "request has no user message");
    if (!(req.temperature >= 0)) throw Error(ErrorCode::InvalidRequest, "temperature must be >= 0");
}

ChatRequest chat_request_from_json(const json& j) {
    ChatRequest req;
    try {
        for (const auto& m : j.at("messages"))
            req.messages.push_back({m.at("role").get<std::string>(), m.at("content").get<std::string>()});
        req.temperature = j.value("temperature", 0.0);
        if (j.contains("seed_tag") && !j.at("seed_tag").is_null()) req.seed_tag = j.at("seed_tag").get<std::string>();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidRequest, e.what());
    }
    validate(req);
    return req;
}

std::string canonical_request(const ChatRequest& req, std::string_view model_name) {
    // nlohmann::json objects are std::map backed, so keys serialize sorted.
    json messages = json::array();
    for (const auto& m : req.messages) messages.push_back({{"content", m.content}, {"role", m.role}});
    json j = {{"messages", messages}, {"model", model_name}, {"temperature", req.temperature}};
    j["seed_tag"] = req.seed_tag ? json(*req.seed_tag) : json(nullptr);
    return j.dump();
}

std::string request_hash(const ChatRequest& req, std::string_view model_name) {
    return sha256_hex(canonical_request(req, model_name));
}

void to_json(json& j, const Transcript& t) {
    j = json{{"request_hash", t.request_hash}, {"response_text", t.response_text}, {"model_name", t.model_name},
             {"latency_ms", t.latency_ms},     {"timestamp", t.timestamp}};
}

void from_json(const json& j, Transcript& t) {
    t.request_hash = j.at("request_hash").get<std::string>();
    t.response_text = j.at("response_text").get<std::string>();
    t.model_name = j.at("model_name").get<std::string>();
    t.latency_ms = j.at("latency_ms").get<std::int64_t>();
    t.timestamp = j.at("timestamp").get<std::string>();
}

ReplayStore ReplayStore::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open replay archive " + path.string());
    ReplayStore store;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        try {
            store.add(json::parse(line).get<Transcript>());
        } catch (const json::exception& e) {
            throw Error(ErrorCode::SchemaError, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return store;
}

void ReplayStore::add(Transcript t) {
    if (index_.count(t.request_hash)) return;
    index_.emplace(t.request_hash, records_.size());
    records_.push_back(std::move(t));
}

const Transcript* ReplayStore::find(const std::string& hash) const {
    auto it = index_.find(hash);
    return it == index_.end() ? nullptr : &records_[it->second];
}

std::string replay(const ReplayStore& store, const ChatRequest& req, std::string_view model_name) {
    auto hash = request_hash(req, model_name);
    if (const auto* t = store.find(hash)) return t->response_text;
    throw Error(ErrorCode::ReplayMiss, "no recorded response for request " + hash.substr(0, 16));
}

TranscriptSink::TranscriptSink(std::filesystem::path path) : path_(std::move(path)) {
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
}

void TranscriptSink::append(const Transcript& t) {
    std::lock_guard lock(mu_);
    std::ofstream out(path_, std::ios::app | std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot append to " + path_.string());
    out << json(t).dump() << '\n';
    out.flush();
}

Gateway::Gateway(ModelEndpoint endpoint, std::shared_ptr<ChatTransport> transport, GatewayOptions options)
    : endpoint_(std::move(endpoint)), transport_(std::move(transport)), options_(std::move(options)),
      shared_(std::make_shared<Shared>()) {
    validate(endpoint_);
    if (options_.retry.retry_budget < 0) throw Error(ErrorCode::ConfigError, "retry budget must be >= 0");
    if (!options_.sleep) options_.sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
    if (!options_.env_lookup) {
        options_.env_lookup = [](const std::string& name) -> std::optional<std::string> {
            const char* v = std::getenv(name.c_str());
            if (v == nullptr || *v == '\0') return std::nullopt;
            return std::string(v);
        };
    }
    if (!options_.clock) options_.clock = utc_now_iso8601;
    if (options_.replay_mode != ReplayMode::Off && !options_.replay_store)
        options_.replay_store = std::make_shared<ReplayStore>();
}

Completion Gateway::complete(const ChatRequest& req) const {
    validate(req);
    auto hash = request_hash(req, endpoint_.model_name);
    if (options_.replay_mode != ReplayMode::Off) {
        if (const auto* t = options_.replay_store->find(hash)) {
            shared_->replay_hits.fetch_add(1);
            return Completion{t->response_text, *t};
        }
        if (options_.replay_mode == ReplayMode::Strict)
            throw Error(ErrorCode::ReplayMiss, "no recorded response for " + endpoint_.endpoint_id + " request " +
                                                   hash.substr(0, 16));
    }

    std::unique_lock lock(shared_->mu);
    shared_->cv.wait(lock, [&] { return shared_->in_flight < endpoint_.max_concurrency; });
    ++shared_->in_flight;
    lock.unlock();
    struct Release {
        Shared& s;
        ~Release() {
            {
                std::lock_guard g(s.mu);
                --s.in_flight;
            }
            s.cv.notify_one();
        }
    } release{*shared_};
    return call_provider(req, hash);
}

Completion Gateway::call_provider(const ChatRequest& req, const std::string& hash) const {
    auto key = endpoint_.api_key_env.empty() ? std::optional<std::string>{} : options_.env_lookup(endpoint_.api_key_env);
    if (!key)
        throw Error(ErrorCode::AuthError, endpoint_.endpoint_id + ": credentials not found in environment variable '" +
                                              endpoint_.api_key_env + "'");

    json messages = json::array();
    for (const auto& m : req.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
    std::string body =
        json{{"model", endpoint_.model_name}, {"messages", messages}, {"temperature", req.temperature}}.dump();

    const int attempts = 1 + options_.retry.retry_budget;
    std::optional<Error> last;
    for (int attempt = 0; attempt < attempts; ++attempt) {
        if (attempt > 0) {
            auto factor = std::pow(options_.retry.multiplier, attempt - 1);
            options_.sleep(std::chrono::milliseconds(
                static_cast<std::int64_t>(static_cast<double>(options_.retry.initial_backoff.count()) * factor)));
        }
        shared_->provider_calls.fetch_add(1);
        auto started = std::chrono::steady_clock::now();
        HttpResponse resp;
        try {
            resp = transport_->post_chat(endpoint_, *key, body);
        } catch (const Error& e) {
            if (e.code() == ErrorCode::Timeout || e.code() == ErrorCode::ProviderError) {
                last = e;
                continue;
            }
            throw;
        }
        auto latency = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started);

        if (resp.status == 200) {
            std::string text;
            try {
                auto j = json::parse(resp.body);
                text = j.at("choices").at(0).at("message").at("content").get<std::string>();
            } catch (const json::exception& e) {
                throw Error(ErrorCode::ProviderError, "200 with malformed body: " + std::string(e.what()));
            }
            Transcript t{hash, text, endpoint_.model_name, latency.count(), options_.clock()};
            if (options_.sink) options_.sink->append(t);
            return Completion{std::move(text), std::move(t)};
        }
        auto excerpt = resp.body.substr(0, 200);
        if (resp.status == 401 || resp.status == 403)
            throw Error(ErrorCode::AuthError, endpoint_.endpoint_id + ": HTTP " + std::to_string(resp.status) + " " + excerpt);
        if (resp.status == 429) {
            last = Error(ErrorCode::RateLimited, endpoint_.endpoint_id + ": HTTP 429 " + excerpt);
        } else if (resp.status >= 500) {
            last = Error(ErrorCode::ProviderError, "HTTP " + std::to_string(resp.status) + " " + excerpt);
        } else {
            throw Error(ErrorCode::ProviderError, "HTTP " + std::to_string(resp.status) + " " + excerpt);
        }
    }
    throw *last;
}

std::vector<Gateway::Result> Gateway::run_bounded(const std::vector<ChatRequest>& requests) const {
    std::vector<Result> results(requests.size());
    parallel_for(requests.size(), static_cast<std::size_t>(endpoint_.max_concurrency), [&](std::size_t i) {
        try {
            results[i].completion = complete(requests[i]);
        } catch (const Error& e) {
            results[i].error = e;
        } catch (const std::exception& e) {
            results[i].error = Error(ErrorCode::ProviderError, e.what());
        }
    });
    return results;
}

} // namespace fata::gateway
