#pragma once

// Three-arm answer generation: B (incomplete query as is), F (ask, simulated or
// human answers, then answer) and C (expert reformulated query).

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fata/corpus.hpp"
#include "fata/gateway.hpp"
#include "fata/protocol.hpp"

namespace fata::experiment {

enum class Arm { B, F, C };
inline constexpr std::array<Arm, 3> kAllArms = {Arm::B, Arm::F, Arm::C};

std::string_view to_string(Arm a) noexcept;
Arm parse_arm(std::string_view name);

/// Generation conditions copied into every answer so identical conditions
/// across the arms of a case can be checked after the fact.
struct Provenance {
    std::string endpoint_id;
    std::string model_name;
    std::string template_id;
    double temperature = 0.0;

    bool operator==(const Provenance&) const = default;
};

struct ArmAnswer {
    std::string case_ref;
    Arm arm = Arm::B;
    std::string answer_text;
    std::string model_name;
    std::vector<std::string> stage_transcript_hashes;
    bool direct_flag = false;
    std::string created_at;
    Provenance provenance;

    bool operator==(const ArmAnswer&) const = default;
};

ordered_json to_json(const ArmAnswer& a);
ArmAnswer arm_answer_from_json(const json& j);

struct RunConfig {
    const gateway::Gateway* generator = nullptr;
    protocol::TemplateSet templates = protocol::builtin_templates(protocol::TemplateVariant::Standard);
    std::vector<Arm> arms = {Arm::B, Arm::F, Arm::C};
    std::size_t concurrency = 4;
    double temperature = 0.0;
    protocol::ParseOptions parse;
};

/// Throws PreconditionViolation when arms is empty or no generator is set.
void validate(const RunConfig& cfg);

/// Error raised by an arm, labelled with the pipeline stage that failed
/// ("B", "F1", "F1-parse", "answers", "F2", "C").
class ArmError : public Error {
public:
    ArmError(std::string stage, const Error& cause) : Error(cause.code(), cause.detail()), stage_(std::move(stage)) {}
    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

ArmAnswer run_arm_b(const corpus::CaseSpec& c, const RunConfig& cfg);

/// Inputs arm F can reuse instead of regenerating. Questions and answers built
/// by the corpus pipeline are reused; supplied answers (interactive mode)
/// replace simulation.
struct ArmFInputs {
    std::optional<protocol::QuestionSet> questions;
    std::vector<std::string> question_hashes;
    std::string questions_created_at;
    std::optional<protocol::UserAnswers> answers;
    std::optional<corpus::Persona> persona;
};

ArmFInputs arm_f_inputs(const corpus::CaseSpec& c, const corpus::ArtifactStore& artifacts);

ArmAnswer run_arm_f(const corpus::CaseSpec& c, const RunConfig& cfg, const ArmFInputs& inputs = {});

/// Throws MissingArtifact when the case has no C-Prompt.
ArmAnswer run_arm_c(const corpus::CaseSpec& c, const RunConfig& cfg, const std::optional<corpus::CPrompt>& cprompt);

struct ArmFailure {
    std::string case_id;
    Arm arm = Arm::B;
    std::string stage;
    std::string error_code;
    std::string message;
};

/// results/{case_id}/{arm}.json, failures in results/{case_id}/{arm}.failed.json.
class ResultStore {
public:
    explicit ResultStore(std::filesystem::path root);

    const std::filesystem::path& root() const noexcept { return root_; }
    std::filesystem::path path(std::string_view case_id, Arm arm) const;
    std::filesystem::path failure_path(std::string_view case_id, Arm arm) const;
    bool has(std::string_view case_id, Arm arm) const;
    std::optional<ArmAnswer> load(std::string_view case_id, Arm arm) const;

    void put(const ArmAnswer& a);
    void put_failure(const ArmFailure& f);
    void clear_failure(std::string_view case_id, Arm arm);

private:
    std::filesystem::path root_;
};

struct RunSummary {
    std::size_t requested = 0; // cases x arms
    std::size_t completed = 0; // answers generated by this run
    std::size_t skipped = 0;   // answers already present
    std::vector<ArmFailure> failures;

    int exit_status() const noexcept { return failures.empty() ? 0 : 1; }
};

/// Cases run in parallel, the arms of one case sequentially in B, F, C order.
/// Completed (case, arm) pairs are skipped so a partial run can be resumed.
RunSummary run_experiment(const corpus::Corpus& corpus, const corpus::ArtifactStore& artifacts, ResultStore& results,
                          const RunConfig& cfg);

} // namespace fata::experiment
