#pragma once

#include <functional>
#include <iosfwd>
#include <memory>

#include "config.hpp"
#include "fata/gateway.hpp"

namespace fata::cli {

struct CliEnv {
    std::istream* in = nullptr;  // default std::cin
    std::ostream* out = nullptr; // default std::cout
    std::ostream* err = nullptr; // default std::cerr
    EnvLookup env;               // default getenv
    /// Transport used for provider calls; default is the HTTP transport.
    std::function<std::shared_ptr<gateway::ChatTransport>()> transport;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

int dispatch(int argc, const char* const* argv, CliEnv env = {});

} // namespace fata::cli
