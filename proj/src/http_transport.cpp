#include <httplib.h>

#include <regex>

#include "fata/gateway.hpp"

namespace fata::gateway {

namespace {

struct SplitUrl {
    std::string origin; // scheme://host[:port]
    std::string prefix; // path before /chat/completions, no trailing slash
};

SplitUrl split_url(const std::string& base_url) {
    static const std::regex re(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(base_url, m, re))
        throw Error(ErrorCode::ConfigError, "base_url '" + base_url + "' is not an http(s) URL");
    std::string prefix = m[2].matched ? m[2].str() : "";
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    return {m[1].str(), prefix};
}

class HttpTransport final : public ChatTransport {
public:
    HttpResponse post_chat(const ModelEndpoint& endpoint, const std::string& api_key, const std::string& body) override {
        auto url = split_url(endpoint.base_url);
        httplib::Client client(url.origin);
        auto secs = static_cast<time_t>(endpoint.timeout_seconds);
        auto usecs = static_cast<time_t>((endpoint.timeout_seconds - static_cast<double>(secs)) * 1e6);
        client.set_connection_timeout(secs, usecs);
        client.set_read_timeout(secs, usecs);
        client.set_write_timeout(secs, usecs);
        httplib::Headers headers = {{"Authorization", "Bearer " + api_key}};
        auto res = client.Post(url.prefix + "/chat/completions", headers, body, "application/json");
        if (!res) {
            auto err = res.error();
            if (err == httplib::Error::Read || err == httplib::Error::Write || err == httplib::Error::ConnectionTimeout)
                throw Error(ErrorCode::Timeout, endpoint.endpoint_id + ": " + httplib::to_string(err));
            throw Error(ErrorCode::ProviderError, endpoint.endpoint_id + ": " + httplib::to_string(err));
        }
        return HttpResponse{res->status, res->body};
    }
};

} // namespace

std::shared_ptr<ChatTransport> make_http_transport() { return std::make_shared<HttpTransport>(); }

} // namespace fata::gateway
