#include <doctest.h>

#include <chrono>

#include "cli/config.hpp"
#include "fata/error.hpp"
#include "fata/judge.hpp"
#include "fata/report.hpp"
#include "pipeline_support.hpp"

using namespace fata;
using namespace fata::test;
namespace fs = std::filesystem;

namespace {

std::string sample_config() { return (sample_dir() / "fata.json").string(); }

std::shared_ptr<FnTransport> refusing_transport() {
    return std::make_shared<FnTransport>([](const std::string&) { return gateway::HttpResponse{500, "no network"}; });
}

} // namespace

TEST_CASE("usage errors exit with 2 and help exits with 0") {
    CHECK(run_cli({}).code == 2);
    CHECK(run_cli({"frobnicate"}).code == 2);
    CHECK(run_cli({"report", "--no-such-flag"}).code == 2);
    CHECK(run_cli({"report", "--grouping", "dimension"}).code == 2);

    auto help = run_cli({"--help"});
    CHECK(help.code == 0);
    for (const char* cmd : {"build-corpus", "run-experiment", "judge", "report", "serve", "chat"})
        CHECK(help.out.find(cmd) != std::string::npos);
    CHECK(run_cli({"judge", "--help"}).code == 0);
}

TEST_CASE("runtime errors exit with 1") {
    TempDir dir;
    auto missing = run_cli({"--output", dir.path().string(), "report", "--scores", (dir / "absent.jsonl").string()});
    CHECK(missing.code == 1);
    CHECK(missing.err.rfind("fata: ", 0) == 0);

    auto bad_mode = run_cli({"--config", sample_config(), "--replay-mode", "sometimes", "report"});
    CHECK(bad_mode.code == 1);

    auto no_archive = run_cli({"--replay-mode", "strict", "--output", dir.path().string(), "report"});
    CHECK(no_archive.code == 1);
    CHECK(no_archive.err.find("replay archive") != std::string::npos);
}

TEST_CASE("report on the bundled scores matches the library and the frozen markdown") {
    TempDir dir;
    auto scores = sample_dir() / "scores.jsonl";
    auto r = run_cli({"--config", sample_config(), "--output", dir.path().string(), "report", "--scores",
                      scores.string(), "--out", dir.path().string()});
    REQUIRE(r.code == 0);
    CHECK(r.out == read_text(dir / "report.md"));
    CHECK(read_text(dir / "report.md") == read_text(source_dir() / "tests" / "golden" / "sample_report.md"));

    auto expected = report::build_report(judge::read_score_file(scores), judge::WeightProfile::uniform(),
                                         report::Grouping::Industry, {experiment::Arm::B, experiment::Arm::F, experiment::Arm::C});
    CHECK(read_json_file(dir / "report.json") == json::parse(report::report_to_json(expected).dump()));
}

TEST_CASE("run-experiment over the replay archive never reaches the transport") {
    TempDir dir;
    auto tr = refusing_transport();
    auto r = run_cli({"--config", sample_config(), "--replay", (sample_dir() / "replay.jsonl").string(), "--output",
                      dir.path().string(), "run-experiment", "--arms", "B"},
                     {}, {}, [tr] { return tr; });
    CHECK(r.code == 0);
    CHECK(tr->calls() == 0);
    CHECK(r.out.find("24 answers requested, 24 generated") != std::string::npos);
    experiment::ResultStore results(dir / "results");
    CHECK(results.has("hc-001", experiment::Arm::B));
    CHECK_FALSE(results.has("hc-001", experiment::Arm::F));
}

TEST_CASE("strict replay turns an archive miss into an error") {
    TempDir dir;
    auto tr = refusing_transport();
    auto r = run_cli({"--config", sample_config(), "--output", dir.path().string(), "chat", "--query",
                      "A request nobody has recorded?"},
                     {}, {}, [tr] { return tr; });
    CHECK(r.code == 1);
    CHECK(tr->calls() == 0);
    CHECK(r.err.find("no recorded response") != std::string::npos);
}

TEST_CASE("config resolution prefers the flag, then FATA_CONFIG, then the working directory") {
    auto env_with = [](std::optional<std::string> v) {
        return [v](const std::string& k) -> std::optional<std::string> {
            if (k == "FATA_CONFIG") return v;
            return std::nullopt;
        };
    };
    CHECK(cli::resolve_config_path(std::string("a.json"), env_with("b.json")) == fs::path("a.json"));
    CHECK(cli::resolve_config_path(std::nullopt, env_with("b.json")) == fs::path("b.json"));
    CHECK(cli::resolve_config_path(std::string(""), env_with("b.json")) == fs::path("b.json"));

    TempDir dir;
    auto old = fs::current_path();
    fs::current_path(dir.path());
    CHECK_FALSE(cli::resolve_config_path(std::nullopt, env_with(std::nullopt)).has_value());
    write_text_file(dir / "fata.json", "{}");
    CHECK(cli::resolve_config_path(std::nullopt, env_with(std::nullopt)) == fs::path("fata.json"));
    CHECK(cli::resolve_config_path(std::nullopt, env_with("")) == fs::path("fata.json"));
    fs::current_path(old);
}

TEST_CASE("FATA_CONFIG selects the configuration used by a command") {
    TempDir dir;
    auto cfg = read_json_file(sample_dir() / "fata.json");
    cfg["output_dir"] = (dir / "from-env").string();
    cfg["weights"] = (sample_dir() / ".." / "weights" / "uniform.json").string();
    cfg["corpus"] = (sample_dir() / "corpus.json").string();
    cfg["industries"] = (data_dir() / "industries.json").string();
    cfg["rubric"] = (data_dir() / "rubric.json").string();
    cfg["templates_dir"] = (data_dir() / "templates").string();
    cfg["replay"] = (sample_dir() / "replay.jsonl").string();
    write_json_file(dir / "env.json", cfg);

    auto scores = (sample_dir() / "scores.jsonl").string();
    auto r = run_cli({"report", "--scores", scores}, {{"FATA_CONFIG", (dir / "env.json").string()}});
    REQUIRE(r.code == 0);
    CHECK(fs::exists(dir / "from-env" / "report.md"));

    auto flag = run_cli({"--output", (dir / "from-flag").string(), "report", "--scores", scores},
                        {{"FATA_CONFIG", (dir / "env.json").string()}});
    REQUIRE(flag.code == 0);
    CHECK(fs::exists(dir / "from-flag" / "report.md"));

    auto output_env = run_cli({"report", "--scores", scores},
                              {{"FATA_CONFIG", (dir / "env.json").string()}, {"FATA_OUTPUT_DIR", (dir / "from-var").string()}});
    REQUIRE(output_env.code == 0);
    CHECK(fs::exists(dir / "from-var" / "report.md"));

    auto broken = run_cli({"report", "--scores", scores}, {{"FATA_CONFIG", (dir / "nowhere.json").string()}});
    CHECK(broken.code == 1);
}

TEST_CASE("config files reject unknown keys and missing paths") {
    CHECK_THROWS_AS(cli::parse_config(json{{"no_such_key", 1}}, "."), Error);
    TempDir dir;
    auto cfg = cli::parse_config(json{{"corpus", "missing.json"}}, dir.path());
    CHECK(cfg.corpus == dir / "missing.json");
    CHECK_THROWS_AS(cli::validate_paths(cfg), Error);
}

TEST_CASE("chat replays the scripted session from the archive") {
    TempDir dir;
    auto tr = refusing_transport();
    auto r = run_cli({"--config", sample_config(), "--output", dir.path().string(), "chat"}, {},
                     read_text(sample_dir() / "chat_session.txt"), [tr] { return tr; });
    REQUIRE(r.code == 0);
    CHECK(tr->calls() == 0);
    CHECK(r.out.find("Your request: ") == 0);
    CHECK(r.out.find("\n1. ") != std::string::npos);
    CHECK(r.out.find("=== Answer ===") != std::string::npos);
    CHECK(r.out.find("I tried intermittent fasting for a month last spring") != std::string::npos);
    CHECK(r.out.find("You did not say") != std::string::npos);
}

TEST_CASE("the whole pipeline runs offline and reproduces itself byte for byte") {
    CountingServer server;
    TempDir first, second;
    auto start = std::chrono::steady_clock::now();
    auto a = run_pipeline(first.path(), server.base_url());
    auto b = run_pipeline(second.path(), server.base_url());
    auto elapsed = std::chrono::steady_clock::now() - start;

    for (const auto& s : a.steps) CHECK_MESSAGE(s.code == 0, s.err);
    CHECK(a.ok());
    CHECK(b.ok());
    CHECK(server.hits() == 0);
    CHECK(elapsed < std::chrono::seconds(60));

    REQUIRE_FALSE(a.outputs.empty());
    CHECK(a.outputs.size() == b.outputs.size());
    CHECK(a.outputs == b.outputs);
    CHECK(a.chat_output == b.chat_output);
    CHECK(a.outputs.count("report.md") == 1);
    CHECK(a.outputs.count("scores.jsonl") == 1);
    CHECK(a.outputs.count("results/hc-001/F.json") == 1);

    // Fall-through must also stay offline when every request is archived.
    TempDir third;
    auto c = run_pipeline(third.path(), server.base_url(), "fallthrough");
    CHECK(c.ok());
    CHECK(server.hits() == 0);
    CHECK(c.outputs == a.outputs);
}

TEST_CASE("the counting server does see requests when replay is off") {
    CountingServer server;
    TempDir dir;
    auto cfg = write_pipeline_config(dir.path(), server.base_url(), "off");
    auto r = run_cli({"--config", cfg.string(), "chat", "--query", "How do I fix my bike?"}, {{"FATA_API_KEY", "k"}});
    CHECK(r.code == 1);
    CHECK(server.hits() >= 1);
}
