#include "fata/experiment.hpp"

#include <algorithm>
#include <mutex>

#include "fata/error.hpp"

namespace fata::experiment {

using corpus::CaseSpec;
using protocol::QuestionSet;
using protocol::UserAnswers;

std::string_view to_string(Arm a) noexcept {
    switch (a) {
        case Arm::B: return "B";
        case Arm::F: return "F";
        case Arm::C: return "C";
    }
    return "B";
}

Arm parse_arm(std::string_view name) {
    if (name == "B" || name == "b") return Arm::B;
    if (name == "F" || name == "f") return Arm::F;
    if (name == "C" || name == "c") return Arm::C;
    throw Error(ErrorCode::SchemaError, "unknown arm '" + std::string(name) + "'");
}

ordered_json to_json(const ArmAnswer& a) {
    return ordered_json{
        {"case_id", a.case_ref},
        {"arm", to_string(a.arm)},
        {"answer_text", a.answer_text},
        {"model_name", a.model_name},
        {"stage_transcript_hashes", a.stage_transcript_hashes},
        {"direct_flag", a.direct_flag},
        {"created_at", a.created_at},
        {"provenance",
         {{"endpoint_id", a.provenance.endpoint_id},
          {"model_name", a.provenance.model_name},
          {"template_id", a.provenance.template_id},
          {"temperature", a.provenance.temperature}}},
    };
}

ArmAnswer arm_answer_from_json(const json& j) {
    ArmAnswer a;
    try {
        a.case_ref = j.at("case_id").get<std::string>();
        a.arm = parse_arm(j.at("arm").get<std::string>());
        a.answer_text = j.at("answer_text").get<std::string>();
        a.model_name = j.at("model_name").get<std::string>();
        a.stage_transcript_hashes = j.at("stage_transcript_hashes").get<std::vector<std::string>>();
        a.direct_flag = j.at("direct_flag").get<bool>();
        a.created_at = j.at("created_at").get<std::string>();
        if (j.contains("provenance")) {
            const auto& p = j.at("provenance");
            a.provenance = {p.value("endpoint_id", ""), p.value("model_name", ""), p.value("template_id", ""),
                            p.value("temperature", 0.0)};
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::SchemaError, std::string("arm answer: ") + e.what());
    }
    return a;
}

void validate(const RunConfig& cfg) {
    if (cfg.generator == nullptr) throw Error(ErrorCode::PreconditionViolation, "no generation endpoint configured");
    if (cfg.arms.empty()) throw Error(ErrorCode::PreconditionViolation, "no arms requested");
}

namespace {

Provenance provenance_of(const RunConfig& cfg) {
    return Provenance{cfg.generator->endpoint().endpoint_id, cfg.generator->endpoint().model_name,
                      cfg.templates.ask.template_id, cfg.temperature};
}

ArmAnswer base_answer(const CaseSpec& c, Arm arm, const RunConfig& cfg) {
    ArmAnswer a;
    a.case_ref = c.case_id;
    a.arm = arm;
    a.model_name = cfg.generator->endpoint().model_name;
    a.provenance = provenance_of(cfg);
    return a;
}

template <typename Fn>
auto staged(const std::string& stage, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const ArmError&) {
        throw;
    } catch (const Error& e) {
        throw ArmError(stage, e);
    }
}

gateway::Completion single_completion(const std::string& prompt, const RunConfig& cfg) {
    return cfg.generator->complete(gateway::user_request(prompt, cfg.temperature));
}

} // namespace

ArmAnswer run_arm_b(const CaseSpec& c, const RunConfig& cfg) {
    validate(cfg);
    if (trim(c.b_prompt).empty())
        throw ArmError("B", Error(ErrorCode::PreconditionViolation, c.case_id + ": empty b_prompt"));
    auto completion = staged("B", [&] { return single_completion(c.b_prompt, cfg); });
    auto a = base_answer(c, Arm::B, cfg);
    a.answer_text = completion.text;
    a.stage_transcript_hashes = {completion.transcript.request_hash};
    a.created_at = completion.transcript.timestamp;
    return a;
}

ArmFInputs arm_f_inputs(const CaseSpec& c, const corpus::ArtifactStore& artifacts) {
    ArmFInputs in;
    in.questions = artifacts.questions(c.case_id);
    if (in.questions) {
        in.question_hashes = artifacts.transcript_hashes(c.case_id, corpus::ArtifactKind::Questions);
        in.questions_created_at = artifacts.questions_created_at(c.case_id);
    }
    in.answers = artifacts.answers(c.case_id);
    in.persona = c.persona ? c.persona : artifacts.persona(c.case_id);
    return in;
}

ArmAnswer run_arm_f(const CaseSpec& c, const RunConfig& cfg, const ArmFInputs& inputs) {
    validate(cfg);
    if (!inputs.answers && !inputs.persona && !c.persona)
        throw ArmError("answers", Error(ErrorCode::PreconditionViolation,
                                        c.case_id + ": arm F needs a persona or supplied answers"));
    auto a = base_answer(c, Arm::F, cfg);

    QuestionSet qs;
    std::string f1_created_at;
    if (inputs.questions) {
        qs = *inputs.questions;
        a.stage_transcript_hashes = inputs.question_hashes;
        f1_created_at = inputs.questions_created_at;
    } else {
        auto f1 = staged("F1", [&] { return single_completion(protocol::render_f1_prompt(c.b_prompt, cfg.templates.ask), cfg); });
        a.stage_transcript_hashes = {f1.transcript.request_hash};
        f1_created_at = f1.transcript.timestamp;
        qs = staged("F1-parse", [&] { return protocol::parse_question_set(f1.text, c.case_id, cfg.parse); });
    }

    if (qs.is_direct()) {
        a.answer_text = *qs.direct_answer;
        a.direct_flag = true;
        a.created_at = f1_created_at;
        return a;
    }

    UserAnswers answers = staged("answers", [&] {
        if (inputs.answers) return *inputs.answers;
        const auto& persona = inputs.persona ? *inputs.persona : *c.persona;
        return corpus::simulate_user_answers(persona, qs, *cfg.generator);
    });

    auto f2 = staged("F2", [&] {
        return single_completion(protocol::render_f2_prompt(c.b_prompt, qs, answers, cfg.templates.answer), cfg);
    });
    a.stage_transcript_hashes.push_back(f2.transcript.request_hash);
    a.answer_text = f2.text;
    a.created_at = f2.transcript.timestamp;
    return a;
}

ArmAnswer run_arm_c(const CaseSpec& c, const RunConfig& cfg, const std::optional<corpus::CPrompt>& cprompt) {
    validate(cfg);
    if (!cprompt || trim(cprompt->text).empty())
        throw ArmError("C", Error(ErrorCode::MissingArtifact, c.case_id + ": no C-Prompt"));
    auto completion = staged("C", [&] { return single_completion(cprompt->text, cfg); });
    auto a = base_answer(c, Arm::C, cfg);
    a.answer_text = completion.text;
    a.stage_transcript_hashes = {completion.transcript.request_hash};
    a.created_at = completion.transcript.timestamp;
    return a;
}

ResultStore::ResultStore(std::filesystem::path root) : root_(std::move(root)) {}

std::filesystem::path ResultStore::path(std::string_view case_id, Arm arm) const {
    return root_ / std::string(case_id) / (std::string(to_string(arm)) + ".json");
}

std::filesystem::path ResultStore::failure_path(std::string_view case_id, Arm arm) const {
    return root_ / std::string(case_id) / (std::string(to_string(arm)) + ".failed.json");
}

bool ResultStore::has(std::string_view case_id, Arm arm) const { return std::filesystem::exists(path(case_id, arm)); }

std::optional<ArmAnswer> ResultStore::load(std::string_view case_id, Arm arm) const {
    if (!has(case_id, arm)) return std::nullopt;
    return arm_answer_from_json(read_json_file(path(case_id, arm)));
}

void ResultStore::put(const ArmAnswer& a) { write_json_file(path(a.case_ref, a.arm), to_json(a)); }

void ResultStore::put_failure(const ArmFailure& f) {
    write_json_file(failure_path(f.case_id, f.arm), ordered_json{{"case_id", f.case_id},
                                                                  {"arm", to_string(f.arm)},
                                                                  {"stage", f.stage},
                                                                  {"error_code", f.error_code},
                                                                  {"message", f.message}});
}

void ResultStore::clear_failure(std::string_view case_id, Arm arm) {
    std::error_code ec;
    std::filesystem::remove(failure_path(case_id, arm), ec);
}

RunSummary run_experiment(const corpus::Corpus& corpus, const corpus::ArtifactStore& artifacts, ResultStore& results,
                          const RunConfig& cfg) {
    validate(cfg);
    std::vector<Arm> arms;
    for (auto arm : kAllArms) {
        if (std::find(cfg.arms.begin(), cfg.arms.end(), arm) != cfg.arms.end()) arms.push_back(arm);
    }

    RunSummary summary;
    summary.requested = corpus.cases.size() * arms.size();
    std::mutex mu;
    parallel_for(corpus.cases.size(), cfg.concurrency, [&](std::size_t i) {
        const auto& c = corpus.cases[i];
        for (auto arm : arms) {
            if (results.has(c.case_id, arm)) {
                std::lock_guard lock(mu);
                ++summary.skipped;
                continue;
            }
            try {
                ArmAnswer a;
                switch (arm) {
                    case Arm::B: a = run_arm_b(c, cfg); break;
                    case Arm::F: a = run_arm_f(c, cfg, arm_f_inputs(c, artifacts)); break;
                    case Arm::C: a = run_arm_c(c, cfg, artifacts.cprompt(c.case_id)); break;
                }
                results.put(a);
                results.clear_failure(c.case_id, arm);
                std::lock_guard lock(mu);
                ++summary.completed;
            } catch (const ArmError& e) {
                ArmFailure f{c.case_id, arm, e.stage(), std::string(fata::to_string(e.code())), e.detail()};
                results.put_failure(f);
                std::lock_guard lock(mu);
                summary.failures.push_back(std::move(f));
            } catch (const Error& e) {
                ArmFailure f{c.case_id, arm, std::string(to_string(arm)), std::string(fata::to_string(e.code())), e.detail()};
                results.put_failure(f);
                std::lock_guard lock(mu);
                summary.failures.push_back(std::move(f));
            }
        }
    });
    std::sort(summary.failures.begin(), summary.failures.end(), [](const ArmFailure& x, const ArmFailure& y) {
        return std::tie(x.case_id, x.arm) < std::tie(y.case_id, y.arm);
    });
    return summary;
}

} // namespace fata::experiment
