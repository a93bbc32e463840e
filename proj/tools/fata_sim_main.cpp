// The fata CLI wired to the scripted provider; used to (re)record the bundled
// replay archive without network access.
#include "cli/cli.hpp"
#include "sim/scripted_transport.hpp"

int main(int argc, char** argv) {
    fata::cli::CliEnv env;
    env.transport = [] { return fata::sim::make_scripted_transport(); };
    return fata::cli::dispatch(argc, argv, env);
}
