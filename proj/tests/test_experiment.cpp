#include <doctest.h>

#include "fata/error.hpp"
#include "fata/experiment.hpp"
#include "sim_support.hpp"

using namespace fata;
using namespace fata::experiment;
using corpus::ArtifactStore;

namespace {

struct Built {
    test::TempDir dir;
    std::shared_ptr<sim::ScriptedTransport> transport = sim::make_scripted_transport();
    gateway::Gateway gw = test::sim_gateway(transport);
    ArtifactStore artifacts{dir / "artifacts"};
    ResultStore results{dir / "results"};
    corpus::Corpus corpus;

    explicit Built(const std::vector<std::string>& ids) : corpus(test::sample_subset(ids)) {
        auto s = corpus::build_corpus(corpus, gw, artifacts, protocol::builtin_templates(protocol::TemplateVariant::Standard));
        REQUIRE(s.failures.empty());
    }

    RunConfig config(std::vector<Arm> arms = {Arm::B, Arm::F, Arm::C}) const {
        RunConfig cfg;
        cfg.generator = &gw;
        cfg.arms = std::move(arms);
        return cfg;
    }
};

ArmError arm_error_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const ArmError& e) {
        return e;
    }
    FAIL("expected an ArmError");
    return ArmError("", Error(ErrorCode::IoError, ""));
}

} // namespace

TEST_CASE("arm B makes one call") {
    Built b({"hc-002"});
    auto a = run_arm_b(b.corpus.cases[0], b.config());
    CHECK(a.stage_transcript_hashes.size() == 1);
    CHECK(a.arm == Arm::B);
    CHECK_FALSE(a.answer_text.empty());
    CHECK(a.created_at == test::kFixedTime);

    auto empty = b.corpus.cases[0];
    empty.b_prompt = "  ";
    auto e = arm_error_of([&] { run_arm_b(empty, b.config()); });
    CHECK(e.code() == ErrorCode::PreconditionViolation);
    CHECK(e.stage() == "B");
}

TEST_CASE("arm F from scratch has two stage transcripts") {
    Built b({"hc-002"});
    auto before = b.transport->calls();
    auto a = run_arm_f(b.corpus.cases[0], b.config(), ArmFInputs{std::nullopt, {}, {}, std::nullopt, b.artifacts.persona("hc-002")});
    CHECK(a.stage_transcript_hashes.size() == 2);
    CHECK_FALSE(a.direct_flag);
    CHECK(b.transport->calls() - before == 3); // F1, simulated answers, F2
    CHECK(a.answer_text.rfind("Based on what you shared", 0) == 0);
}

TEST_CASE("arm F reuses the corpus questions and answers") {
    Built b({"hc-002"});
    auto inputs = arm_f_inputs(b.corpus.cases[0], b.artifacts);
    REQUIRE(inputs.questions);
    REQUIRE(inputs.answers);
    auto before = b.transport->calls();
    auto a = run_arm_f(b.corpus.cases[0], b.config(), inputs);
    CHECK(b.transport->calls() - before == 1);
    REQUIRE(a.stage_transcript_hashes.size() == 2);
    CHECK(a.stage_transcript_hashes[0] == b.artifacts.transcript_hashes("hc-002", corpus::ArtifactKind::Questions)[0]);
}

TEST_CASE("arm F on a direct answer is flagged with one transcript") {
    Built b({"fin-006"});
    auto a = run_arm_f(b.corpus.cases[0], b.config(), arm_f_inputs(b.corpus.cases[0], b.artifacts));
    CHECK(a.direct_flag);
    CHECK(a.stage_transcript_hashes.size() == 1);
    CHECK(a.answer_text == *b.artifacts.questions("fin-006")->direct_answer);
}

TEST_CASE("supplied answers replace simulation") {
    test::TempDir dir;
    std::vector<std::string> prompts;
    auto tr = test::reply_with([&](const std::string& p) {
        prompts.push_back(p);
        return sim::ScriptedTransport::reply("sim", p);
    });
    auto gw = test::sim_gateway(tr);
    RunConfig cfg;
    cfg.generator = &gw;
    corpus::CaseSpec c{"x", "Healthcare", "s", "How should I change my diet?", std::nullopt};
    protocol::UserAnswers human;
    human.entries = {{1, "I am 61 and retired"}};
    human.declined = {2, 3, 4, 5};
    auto a = run_arm_f(c, cfg, ArmFInputs{std::nullopt, {}, {}, human, std::nullopt});
    REQUIRE(prompts.size() == 2);
    CHECK(prompts[0].rfind("User request:", 0) == 0);
    CHECK(prompts[1].find("I am 61 and retired") != std::string::npos);
    CHECK(prompts[1].find("A2: not provided") != std::string::npos);
    CHECK(a.stage_transcript_hashes.size() == 2);
}

TEST_CASE("arm F needs a persona or answers") {
    Built b({"hc-002"});
    corpus::CaseSpec c{"x", "Healthcare", "s", "q", std::nullopt};
    CHECK(arm_error_of([&] { run_arm_f(c, b.config()); }).stage() == "answers");
}

TEST_CASE("arm C") {
    Built b({"hc-002"});
    const auto& c = b.corpus.cases[0];
    auto a = run_arm_c(c, b.config(), b.artifacts.cprompt("hc-002"));
    CHECK(a.stage_transcript_hashes.size() == 1);
    CHECK(a.answer_text.rfind("Given your situation", 0) == 0);
    auto e = arm_error_of([&] { run_arm_c(c, b.config(), std::nullopt); });
    CHECK(e.code() == ErrorCode::MissingArtifact);
    CHECK(run_arm_c(c, b.config(), b.artifacts.cprompt("hc-002")).answer_text == a.answer_text);
}

TEST_CASE("run config validation") {
    RunConfig cfg;
    CHECK_THROWS_AS(validate(cfg), Error);
    Built b({"hc-002"});
    CHECK_THROWS_AS(validate(b.config({})), Error);
}

TEST_CASE("four-case run, resume and identical conditions") {
    Built b({"hc-001", "fin-002", "ins-004", "edu-001"});
    auto s = run_experiment(b.corpus, b.artifacts, b.results, b.config());
    CHECK(s.requested == 12);
    CHECK(s.completed == 12);
    CHECK(s.failures.empty());
    CHECK(s.exit_status() == 0);
    for (const auto& c : b.corpus.cases) {
        std::vector<ArmAnswer> arms;
        for (auto arm : kAllArms) {
            auto a = b.results.load(c.case_id, arm);
            REQUIRE(a);
            arms.push_back(*a);
        }
        CHECK(arms[0].provenance == arms[1].provenance);
        CHECK(arms[1].provenance == arms[2].provenance);
        CHECK(arms[0].provenance.template_id == b.config().templates.ask.template_id);
    }

    std::filesystem::remove(b.results.path("fin-002", Arm::B));
    auto before = b.transport->calls();
    auto again = run_experiment(b.corpus, b.artifacts, b.results, b.config());
    CHECK(again.completed == 1);
    CHECK(again.skipped == 11);
    CHECK(b.transport->calls() - before == 1);

    auto reloaded = b.results.load("hc-001", Arm::F);
    CHECK(arm_answer_from_json(json::parse(to_json(*reloaded).dump())) == *reloaded);
}

TEST_CASE("arm filter") {
    Built b({"hc-001", "fin-002", "ins-004", "edu-001"});
    auto s = run_experiment(b.corpus, b.artifacts, b.results, b.config({Arm::B}));
    CHECK(s.completed == 4);
    for (const auto& c : b.corpus.cases) {
        CHECK(b.results.has(c.case_id, Arm::B));
        CHECK_FALSE(b.results.has(c.case_id, Arm::F));
        CHECK_FALSE(b.results.has(c.case_id, Arm::C));
    }
}

TEST_CASE("a timeout marks one case failed and the run continues") {
    Built b({"hc-001", "fin-002"});
    auto tr = std::make_shared<test::FnTransport>([](const std::string& body) {
        auto p = test::last_user_message(body);
        if (p.find("pay off my debt") != std::string::npos && p.rfind("User request:", 0) != 0)
            throw Error(ErrorCode::Timeout, "provider did not answer");
        return gateway::HttpResponse{200, test::chat_body(sim::ScriptedTransport::reply("sim", p))};
    });
    auto opts = test::quiet_options();
    opts.retry.retry_budget = 1;
    gateway::Gateway gw(test::test_endpoint("generator", "sim-generator"), tr, opts);
    RunConfig cfg;
    cfg.generator = &gw;
    cfg.arms = {Arm::B};
    auto s = run_experiment(b.corpus, b.artifacts, b.results, cfg);
    REQUIRE(s.failures.size() == 1);
    CHECK(s.failures[0].case_id == "fin-002");
    CHECK(s.failures[0].stage == "B");
    CHECK(s.failures[0].error_code == "Timeout");
    CHECK(s.exit_status() == 1);
    CHECK(std::filesystem::exists(b.results.failure_path("fin-002", Arm::B)));
    CHECK(b.results.has("hc-001", Arm::B));
}

TEST_CASE("replayed arm answers are identical across runs") {
    auto tr = test::reply_with([](const std::string&) { return "network"; });
    auto gw = test::replay_gateway(tr);
    test::TempDir dir;
    ArtifactStore artifacts(dir / "artifacts");
    auto sub = test::sample_subset({"hc-001", "edu-001"});
    auto templates = protocol::load_templates(test::data_dir() / "templates", protocol::TemplateVariant::Standard);
    REQUIRE(corpus::build_corpus(sub, gw, artifacts, templates).failures.empty());
    RunConfig cfg;
    cfg.generator = &gw;
    cfg.templates = templates;
    ResultStore r1(dir / "r1"), r2(dir / "r2");
    CHECK(run_experiment(sub, artifacts, r1, cfg).failures.empty());
    CHECK(run_experiment(sub, artifacts, r2, cfg).failures.empty());
    for (const auto& c : sub.cases)
        for (auto arm : kAllArms) CHECK(read_text_file(r1.path(c.case_id, arm)) == read_text_file(r2.path(c.case_id, arm)));
    CHECK(tr->calls() == 0);
}
