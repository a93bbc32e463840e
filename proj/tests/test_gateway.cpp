#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <thread>

#include <openssl/evp.h>

#include "fata/error.hpp"
#include "fata/gateway.hpp"
#include "support.hpp"

using namespace fata;
using namespace fata::gateway;
using fata::test::FnTransport;

namespace {

// Independent digest: OpenSSL one-shot EVP_Digest over the raw bytes.
std::string oracle_sha256(const std::string& s) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(s.data(), s.size(), md, &len, EVP_sha256(), nullptr);
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned i = 0; i < len; ++i) {
        out.push_back(hex[md[i] >> 4]);
        out.push_back(hex[md[i] & 0xf]);
    }
    return out;
}

template <typename Code>
void require_code(Code code, const std::function<void()>& fn) {
    try {
        fn();
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == code);
    }
}

} // namespace

TEST_CASE("canonical request has sorted keys and a compact layout") {
    ChatRequest req = user_request("hi \"there\"", 0.0);
    auto canon = canonical_request(req, "m1");
    CHECK(canon == R"({"messages":[{"content":"hi \"there\"","role":"user"}],"model":"m1","seed_tag":null,"temperature":0.0})");
    CHECK(request_hash(req, "m1") == oracle_sha256(canon));
}

TEST_CASE("request hash is stable under permuted field order") {
    auto a = chat_request_from_json(json::parse(
        R"({"temperature":0.5,"seed_tag":"s","messages":[{"role":"system","content":"sys"},{"content":"q","role":"user"}]})"));
    auto b = chat_request_from_json(json::parse(
        R"({"messages":[{"content":"sys","role":"system"},{"role":"user","content":"q"}],"seed_tag":"s","temperature":0.5})"));
    CHECK(request_hash(a, "m") == request_hash(b, "m"));
    CHECK(request_hash(a, "m") != request_hash(a, "other-model"));
    auto c = b;
    c.temperature = 0.6;
    CHECK(request_hash(a, "m") != request_hash(c, "m"));

    ReplayStore store;
    store.add(Transcript{request_hash(a, "m"), "recorded", "m", 3, test::kFixedTime});
    CHECK(replay(store, b, "m") == "recorded");
}

TEST_CASE("request validation") {
    ChatRequest r;
    require_code(ErrorCode::InvalidRequest, [&] { validate(r); });
    r.messages = {{"user", "x"}};
    r.temperature = -0.1;
    require_code(ErrorCode::InvalidRequest, [&] { validate(r); });
    r.temperature = 0.0;
    r.messages.push_back({"tool", "x"});
    require_code(ErrorCode::InvalidRequest, [&] { validate(r); });
    r.messages = {{"system", "s"}};
    require_code(ErrorCode::InvalidRequest, [&] { validate(r); });
}

TEST_CASE("endpoint validation") {
    auto e = test::test_endpoint();
    e.max_concurrency = 0;
    require_code(ErrorCode::ConfigError, [&] { validate(e); });
    e = test::test_endpoint();
    e.timeout_seconds = 0;
    require_code(ErrorCode::ConfigError, [&] { validate(e); });
}

TEST_CASE("mock provider passthrough") {
    auto tr = test::reply_with([](const std::string&) { return "ok"; });
    Gateway gw(test::test_endpoint(), tr, test::quiet_options());
    auto req = user_request("hello");
    auto c = gw.complete(req);
    CHECK(c.text == "ok");
    CHECK(c.transcript.request_hash == request_hash(req, "test-model"));
    CHECK(c.transcript.model_name == "test-model");
    CHECK(c.transcript.timestamp == test::kFixedTime);
    CHECK(tr->calls() == 1);
    auto body = json::parse(tr->bodies().at(0));
    CHECK(body.at("model") == "test-model");
    CHECK(body.at("messages").at(0).at("content") == "hello");
}

TEST_CASE("missing credentials raise AuthError without a provider call") {
    auto tr = test::reply_with([](const std::string&) { return "ok"; });
    auto opts = test::quiet_options();
    opts.env_lookup = [](const std::string&) -> std::optional<std::string> { return std::nullopt; };
    Gateway gw(test::test_endpoint(), tr, opts);
    require_code(ErrorCode::AuthError, [&] { gw.complete(user_request("x")); });
    CHECK(tr->calls() == 0);
}

TEST_CASE("429 three times with a retry budget of two") {
    auto tr = std::make_shared<FnTransport>([](const std::string&) { return HttpResponse{429, "slow down"}; });
    auto sleeps = std::make_shared<std::vector<long long>>();
    auto opts = test::quiet_options(sleeps);
    opts.retry.retry_budget = 2;
    Gateway gw(test::test_endpoint(), tr, opts);
    require_code(ErrorCode::RateLimited, [&] { gw.complete(user_request("x")); });
    CHECK(tr->calls() == 3);
    CHECK(gw.provider_calls() == 3);
    CHECK(*sleeps == std::vector<long long>{1000, 2000});
}

TEST_CASE("transient failures are retried, auth failures are not") {
    SUBCASE("timeout then success") {
        int n = 0;
        auto tr = std::make_shared<FnTransport>([&](const std::string&) {
            if (n++ == 0) throw Error(ErrorCode::Timeout, "slow");
            return HttpResponse{200, test::chat_body("late")};
        });
        Gateway gw(test::test_endpoint(), tr, test::quiet_options());
        CHECK(gw.complete(user_request("x")).text == "late");
        CHECK(tr->calls() == 2);
    }
    SUBCASE("500 then success") {
        int n = 0;
        auto tr = std::make_shared<FnTransport>([&](const std::string&) {
            return n++ == 0 ? HttpResponse{503, "busy"} : HttpResponse{200, test::chat_body("fine")};
        });
        Gateway gw(test::test_endpoint(), tr, test::quiet_options());
        CHECK(gw.complete(user_request("x")).text == "fine");
    }
    SUBCASE("401") {
        auto tr = std::make_shared<FnTransport>([](const std::string&) { return HttpResponse{401, "bad key"}; });
        Gateway gw(test::test_endpoint(), tr, test::quiet_options());
        require_code(ErrorCode::AuthError, [&] { gw.complete(user_request("x")); });
        CHECK(tr->calls() == 1);
    }
    SUBCASE("malformed 200 body") {
        auto tr = std::make_shared<FnTransport>([](const std::string&) { return HttpResponse{200, "{}"}; });
        Gateway gw(test::test_endpoint(), tr, test::quiet_options());
        require_code(ErrorCode::ProviderError, [&] { gw.complete(user_request("x")); });
    }
}

TEST_CASE("replay modes") {
    auto req = user_request("recorded prompt");
    auto store = std::make_shared<ReplayStore>();
    store->add(Transcript{request_hash(req, "test-model"), "from archive", "test-model", 1, test::kFixedTime});
    auto tr = test::reply_with([](const std::string&) { return "live"; });

    SUBCASE("strict hit and miss") {
        auto opts = test::quiet_options();
        opts.replay_mode = ReplayMode::Strict;
        opts.replay_store = store;
        Gateway gw(test::test_endpoint(), tr, opts);
        CHECK(gw.complete(req).text == "from archive");
        require_code(ErrorCode::ReplayMiss, [&] { gw.complete(user_request("new prompt")); });
        CHECK(tr->calls() == 0);
        CHECK(gw.replay_hits() == 1);
    }
    SUBCASE("fall-through goes live on a miss only") {
        auto opts = test::quiet_options();
        opts.replay_mode = ReplayMode::FallThrough;
        opts.replay_store = store;
        Gateway gw(test::test_endpoint(), tr, opts);
        CHECK(gw.complete(req).text == "from archive");
        CHECK(gw.complete(user_request("new prompt")).text == "live");
        CHECK(tr->calls() == 1);
    }
    SUBCASE("free function") {
        CHECK(replay(*store, req, "test-model") == "from archive");
        require_code(ErrorCode::ReplayMiss, [&] { replay(*store, req, "another-model"); });
    }
}

TEST_CASE("sink records exactly the five transcript fields and loads back") {
    test::TempDir dir;
    auto sink = std::make_shared<TranscriptSink>(dir / "replay.jsonl");
    auto tr = test::reply_with([](const std::string& p) { return "echo " + p; });
    auto opts = test::quiet_options();
    opts.sink = sink;
    Gateway gw(test::test_endpoint(), tr, opts);
    gw.complete(user_request("a"));
    gw.complete(user_request("b"));

    std::ifstream in(dir / "replay.jsonl");
    std::string line;
    int lines = 0;
    while (std::getline(in, line)) {
        auto j = json::parse(line);
        std::vector<std::string> keys;
        for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
        std::sort(keys.begin(), keys.end());
        CHECK(keys == std::vector<std::string>{"latency_ms", "model_name", "request_hash", "response_text", "timestamp"});
        ++lines;
    }
    CHECK(lines == 2);

    auto store = std::make_shared<ReplayStore>(ReplayStore::load(dir / "replay.jsonl"));
    CHECK(store->size() == 2);
    auto ro = test::quiet_options();
    ro.replay_mode = ReplayMode::Strict;
    ro.replay_store = store;
    Gateway offline(test::test_endpoint(), tr, ro);
    CHECK(offline.complete(user_request("b")).text == "echo b");
    CHECK(tr->calls() == 2);
}

TEST_CASE("first record wins on duplicate hashes") {
    ReplayStore s;
    s.add(Transcript{"h", "first", "m", 0, ""});
    s.add(Transcript{"h", "second", "m", 0, ""});
    REQUIRE(s.find("h") != nullptr);
    CHECK(s.find("h")->response_text == "first");
    CHECK(s.find("nope") == nullptr);
}

TEST_CASE("run_bounded respects max_concurrency and keeps input order") {
    std::atomic<int> in_flight{0};
    std::atomic<int> peak{0};
    auto tr = std::make_shared<FnTransport>([&](const std::string& body) {
        int now = ++in_flight;
        int prev = peak.load();
        while (now > prev && !peak.compare_exchange_weak(prev, now)) {
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
        --in_flight;
        return HttpResponse{200, test::chat_body("r:" + test::last_user_message(body))};
    });
    Gateway gw(test::test_endpoint("gen", "test-model", 3), tr, test::quiet_options());
    std::vector<ChatRequest> reqs;
    for (int i = 0; i < 10; ++i) reqs.push_back(user_request("p" + std::to_string(i)));
    auto results = gw.run_bounded(reqs);
    REQUIRE(results.size() == 10);
    for (int i = 0; i < 10; ++i) {
        REQUIRE(results[i].ok());
        CHECK(results[i].completion->text == "r:p" + std::to_string(i));
    }
    CHECK(peak.load() <= 3);
    CHECK(tr->calls() == 10);
}

TEST_CASE("run_bounded embeds a per-item timeout") {
    auto tr = std::make_shared<FnTransport>([](const std::string& body) {
        auto p = test::last_user_message(body);
        if (p == "p2") throw Error(ErrorCode::Timeout, "no answer");
        return HttpResponse{200, test::chat_body(p)};
    });
    auto opts = test::quiet_options();
    opts.retry.retry_budget = 0;
    Gateway gw(test::test_endpoint(), tr, opts);
    std::vector<ChatRequest> reqs;
    for (int i = 0; i < 4; ++i) reqs.push_back(user_request("p" + std::to_string(i)));
    auto results = gw.run_bounded(reqs);
    for (int i = 0; i < 4; ++i) {
        if (i == 2) {
            REQUIRE(results[i].error);
            CHECK(results[i].error->code() == ErrorCode::Timeout);
        } else {
            REQUIRE(results[i].ok());
            CHECK(results[i].completion->text == "p" + std::to_string(i));
        }
    }
}

TEST_CASE("single request batch equals complete") {
    auto tr = test::reply_with([](const std::string& p) { return "x" + p; });
    Gateway gw(test::test_endpoint(), tr, test::quiet_options());
    auto one = gw.run_bounded({user_request("q")});
    REQUIRE(one.size() == 1);
    auto direct = gw.complete(user_request("q"));
    CHECK(one[0].completion->text == direct.text);
    CHECK(one[0].completion->transcript.request_hash == direct.transcript.request_hash);
}
