#pragma once

// Deterministic stand-in for a chat-completions provider. It recognizes the
// prompts the pipeline sends (persona, stage one, simulated answers, C-Prompt
// rewrite, stage two, reask, judge) and answers each in the expected shape.
// Used to record the bundled replay archive and in tests.

#include <atomic>
#include <memory>
#include <string>

#include "fata/gateway.hpp"

namespace fata::sim {

class ScriptedTransport : public gateway::ChatTransport {
public:
    gateway::HttpResponse post_chat(const gateway::ModelEndpoint& endpoint, const std::string& api_key,
                                    const std::string& body) override;

    std::uint64_t calls() const noexcept { return calls_.load(); }

    /// Reply text for one prompt (the first user message of the conversation).
    static std::string reply(const std::string& model_name, const std::string& prompt);

private:
    std::atomic<std::uint64_t> calls_{0};
};

std::shared_ptr<ScriptedTransport> make_scripted_transport();

} // namespace fata::sim
