#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fata/gateway.hpp"
#include "fata/protocol.hpp"

namespace fata::cli {

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

struct ServerConfig {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::int64_t ttl_seconds = 24 * 3600;
    std::optional<std::filesystem::path> persist_dir;
    std::string cors_origin = "*";
};

/// Parsed configuration file. Relative paths resolve against the directory of
/// the file they appear in.
struct CliConfig {
    std::optional<std::filesystem::path> config_path;
    std::optional<gateway::ModelEndpoint> generator;
    std::vector<gateway::ModelEndpoint> judges;
    protocol::TemplateVariant template_variant = protocol::TemplateVariant::Standard;
    std::optional<std::filesystem::path> templates_dir;
    gateway::ReplayMode replay_mode = gateway::ReplayMode::Off;
    bool replay_mode_set = false;
    std::optional<std::filesystem::path> replay;
    std::optional<std::filesystem::path> record;
    std::filesystem::path output_dir = "out";
    std::optional<std::filesystem::path> corpus;
    std::optional<std::filesystem::path> industries;
    std::optional<std::filesystem::path> rubric;
    std::optional<std::filesystem::path> weights;
    std::uint64_t batch_seed = 1;
    std::size_t concurrency = 4;
    double temperature = 0.0;
    bool strict_shape = false;
    gateway::RetryPolicy retry;
    ServerConfig server;
};

gateway::ReplayMode parse_replay_mode(std::string_view name);
std::string_view to_string(gateway::ReplayMode m) noexcept;

CliConfig parse_config(const json& j, const std::filesystem::path& base_dir);
CliConfig load_config(const std::filesystem::path& path);

/// --config wins, then $FATA_CONFIG, then ./fata.json when present.
std::optional<std::filesystem::path> resolve_config_path(const std::optional<std::string>& flag, const EnvLookup& env);

/// FATA_BIND=host:port, FATA_SESSION_TTL=seconds, FATA_OUTPUT_DIR=path.
void apply_env_overrides(CliConfig& cfg, const EnvLookup& env);

/// Throws ConfigError naming the first referenced path that does not exist.
void validate_paths(const CliConfig& cfg);

} // namespace fata::cli
