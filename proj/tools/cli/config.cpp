#include "config.hpp"

#include "fata/error.hpp"

namespace fata::cli {

namespace fs = std::filesystem;

gateway::ReplayMode parse_replay_mode(std::string_view name) {
    auto n = to_lower(name);
    if (n == "off") return gateway::ReplayMode::Off;
    if (n == "strict") return gateway::ReplayMode::Strict;
    if (n == "fallthrough" || n == "fall-through") return gateway::ReplayMode::FallThrough;
    throw Error(ErrorCode::ConfigError, "replay mode must be off, strict or fallthrough, got '" + std::string(name) + "'");
}

std::string_view to_string(gateway::ReplayMode m) noexcept {
    switch (m) {
        case gateway::ReplayMode::Off: return "off";
        case gateway::ReplayMode::Strict: return "strict";
        case gateway::ReplayMode::FallThrough: return "fallthrough";
    }
    return "off";
}

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
    fs::path path(p);
    return path.is_absolute() ? path : (base / path).lexically_normal();
}

std::optional<fs::path> opt_path(const json& j, const char* key, const fs::path& base) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    if (!j.at(key).is_string()) throw Error(ErrorCode::ConfigError, std::string(key) + " must be a path string");
    return resolve(base, j.at(key).get<std::string>());
}

gateway::ModelEndpoint endpoint_from(const json& j, const std::string& where) {
    try {
        auto e = j.get<gateway::ModelEndpoint>();
        gateway::validate(e);
        return e;
    } catch (const json::exception& ex) {
        throw Error(ErrorCode::ConfigError, where + ": " + ex.what());
    } catch (const Error& ex) {
        throw Error(ErrorCode::ConfigError, where + ": " + ex.detail());
    }
}

} // namespace

CliConfig parse_config(const json& j, const fs::path& base_dir) {
    if (!j.is_object()) throw Error(ErrorCode::ConfigError, "configuration must be a JSON object");
    static const std::vector<std::string> known = {
        "endpoints",  "template_variant", "templates_dir", "replay_mode", "replay",      "record",
        "output_dir", "corpus",           "industries",    "rubric",      "weights",     "batch_seed",
        "concurrency", "temperature",     "strict_shape",  "retry",       "server",      "$schema"};
    for (const auto& [key, _] : j.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw Error(ErrorCode::ConfigError, "unknown configuration key '" + key + "'");
    }
    CliConfig c;
    try {
        if (j.contains("endpoints")) {
            const auto& e = j.at("endpoints");
            if (e.contains("generator")) c.generator = endpoint_from(e.at("generator"), "endpoints.generator");
            if (e.contains("judges")) {
                std::size_t i = 0;
                for (const auto& jj : e.at("judges"))
                    c.judges.push_back(endpoint_from(jj, "endpoints.judges[" + std::to_string(i++) + "]"));
            }
        }
        if (j.contains("template_variant"))
            c.template_variant = protocol::parse_variant(j.at("template_variant").get<std::string>());
        c.templates_dir = opt_path(j, "templates_dir", base_dir);
        if (j.contains("replay_mode")) {
            c.replay_mode = parse_replay_mode(j.at("replay_mode").get<std::string>());
            c.replay_mode_set = true;
        }
        c.replay = opt_path(j, "replay", base_dir);
        c.record = opt_path(j, "record", base_dir);
        if (auto o = opt_path(j, "output_dir", base_dir)) c.output_dir = *o;
        c.corpus = opt_path(j, "corpus", base_dir);
        c.industries = opt_path(j, "industries", base_dir);
        c.rubric = opt_path(j, "rubric", base_dir);
        c.weights = opt_path(j, "weights", base_dir);
        c.batch_seed = j.value("batch_seed", c.batch_seed);
        c.concurrency = j.value("concurrency", c.concurrency);
        c.temperature = j.value("temperature", c.temperature);
        c.strict_shape = j.value("strict_shape", c.strict_shape);
        if (j.contains("retry")) {
            const auto& r = j.at("retry");
            c.retry.retry_budget = r.value("retry_budget", c.retry.retry_budget);
            c.retry.initial_backoff = std::chrono::milliseconds(
                r.value("initial_backoff_ms", static_cast<std::int64_t>(c.retry.initial_backoff.count())));
            c.retry.multiplier = r.value("multiplier", c.retry.multiplier);
        }
        if (j.contains("server")) {
            const auto& s = j.at("server");
            c.server.host = s.value("host", c.server.host);
            c.server.port = s.value("port", c.server.port);
            c.server.ttl_seconds = s.value("ttl_seconds", c.server.ttl_seconds);
            c.server.persist_dir = opt_path(s, "persist_dir", base_dir);
            c.server.cors_origin = s.value("cors_origin", c.server.cors_origin);
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ConfigError, e.what());
    }
    if (c.concurrency == 0) throw Error(ErrorCode::ConfigError, "concurrency must be at least 1");
    if (c.server.ttl_seconds <= 0) throw Error(ErrorCode::ConfigError, "server.ttl_seconds must be positive");
    return c;
}

CliConfig load_config(const fs::path& path) {
    if (!fs::exists(path)) throw Error(ErrorCode::ConfigError, "configuration file " + path.string() + " does not exist");
    json j;
    try {
        j = read_json_file(path);
    } catch (const Error& e) {
        throw Error(ErrorCode::ConfigError, e.detail());
    }
    auto c = parse_config(j, fs::absolute(path).parent_path());
    c.config_path = path;
    return c;
}

std::optional<fs::path> resolve_config_path(const std::optional<std::string>& flag, const EnvLookup& env) {
    if (flag && !flag->empty()) return fs::path(*flag);
    if (auto v = env("FATA_CONFIG"); v && !v->empty()) return fs::path(*v);
    if (fs::exists("fata.json")) return fs::path("fata.json");
    return std::nullopt;
}

void apply_env_overrides(CliConfig& cfg, const EnvLookup& env) {
    if (auto bind = env("FATA_BIND"); bind && !bind->empty()) {
        auto colon = bind->rfind(':');
        if (colon == std::string::npos) throw Error(ErrorCode::ConfigError, "FATA_BIND must be host:port");
        cfg.server.host = bind->substr(0, colon);
        try {
            cfg.server.port = std::stoi(bind->substr(colon + 1));
        } catch (const std::exception&) {
            throw Error(ErrorCode::ConfigError, "FATA_BIND port is not a number");
        }
    }
    if (auto ttl = env("FATA_SESSION_TTL"); ttl && !ttl->empty()) {
        try {
            cfg.server.ttl_seconds = std::stoll(*ttl);
        } catch (const std::exception&) {
            throw Error(ErrorCode::ConfigError, "FATA_SESSION_TTL is not a number");
        }
        if (cfg.server.ttl_seconds <= 0) throw Error(ErrorCode::ConfigError, "FATA_SESSION_TTL must be positive");
    }
    if (auto out = env("FATA_OUTPUT_DIR"); out && !out->empty()) cfg.output_dir = *out;
}

void validate_paths(const CliConfig& cfg) {
    auto check = [](const std::optional<fs::path>& p, const char* what) {
        if (p && !fs::exists(*p)) throw Error(ErrorCode::ConfigError, std::string(what) + " " + p->string() + " does not exist");
    };
    check(cfg.templates_dir, "templates_dir");
    check(cfg.corpus, "corpus");
    check(cfg.industries, "industries");
    check(cfg.rubric, "rubric");
    check(cfg.weights, "weights");
    if (cfg.replay_mode != gateway::ReplayMode::Off) check(cfg.replay, "replay archive");
}

} // namespace fata::cli
