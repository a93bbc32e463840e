#include "cli.hpp"

#include <csignal>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <sstream>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "fata/corpus.hpp"
#include "fata/error.hpp"
#include "fata/experiment.hpp"
#include "fata/judge.hpp"
#include "fata/report.hpp"
#include "fata/service.hpp"

namespace fata::cli {

namespace fs = std::filesystem;
using experiment::Arm;

namespace {

struct GlobalFlags {
    std::optional<std::string> config;
    std::optional<std::string> replay;
    std::optional<std::string> record;
    std::optional<std::string> replay_mode;
    std::optional<std::string> output;
    std::string log_level = "warn";
};

struct Context {
    CliEnv env;
    CliConfig cfg;
    std::shared_ptr<gateway::ChatTransport> transport;
    std::shared_ptr<const gateway::ReplayStore> replay_store;
    std::shared_ptr<gateway::TranscriptSink> sink;
    std::vector<std::shared_ptr<gateway::Gateway>> gateways;

    std::ostream& out() { return *env.out; }

    fs::path artifacts_dir() const { return cfg.output_dir / "artifacts"; }
    fs::path results_dir() const { return cfg.output_dir / "results"; }
    fs::path batches_dir() const { return cfg.output_dir / "batches"; }
    fs::path scores_dir() const { return cfg.output_dir / "scores"; }
    fs::path scores_file() const { return cfg.output_dir / "scores.jsonl"; }

    const gateway::Gateway& make_gateway(const gateway::ModelEndpoint& endpoint) {
        if (!transport) transport = env.transport ? env.transport() : gateway::make_http_transport();
        gateway::GatewayOptions opts;
        opts.retry = cfg.retry;
        opts.replay_mode = cfg.replay_mode;
        opts.replay_store = replay_store;
        opts.sink = sink;
        opts.env_lookup = env.env;
        gateways.push_back(std::make_shared<gateway::Gateway>(endpoint, transport, opts));
        return *gateways.back();
    }

    const gateway::Gateway& generator() {
        if (!cfg.generator) throw Error(ErrorCode::ConfigError, "no endpoints.generator configured");
        return make_gateway(*cfg.generator);
    }

    corpus::Corpus load_corpus(const std::optional<std::string>& flag) {
        auto path = flag ? std::optional<fs::path>(*flag) : cfg.corpus;
        if (!path) throw Error(ErrorCode::ConfigError, "no corpus given (--corpus or config 'corpus')");
        corpus::LoadOptions opts;
        opts.strict_shape = cfg.strict_shape;
        if (cfg.industries) opts.industries = corpus::load_industry_manifest(*cfg.industries);
        return corpus::load_corpus(*path, opts);
    }

    protocol::TemplateSet templates() const {
        if (cfg.templates_dir) return protocol::load_templates(*cfg.templates_dir, cfg.template_variant);
        return protocol::builtin_templates(cfg.template_variant);
    }

    judge::WeightProfile weights(const std::optional<std::string>& flag) const {
        if (flag) return *flag == "uniform" ? judge::WeightProfile::uniform() : judge::load_weights(*flag);
        if (cfg.weights) return judge::load_weights(*cfg.weights);
        return judge::WeightProfile::uniform();
    }
};

std::vector<Arm> parse_arms(const std::string& spec) {
    std::vector<Arm> arms;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) {
        auto t = trim(item);
        if (t.empty()) continue;
        auto arm = experiment::parse_arm(t);
        if (std::find(arms.begin(), arms.end(), arm) == arms.end()) arms.push_back(arm);
    }
    if (arms.empty()) throw Error(ErrorCode::ConfigError, "--arms selects no arm");
    return arms;
}

void setup_logging(const std::string& level) {
    static std::once_flag once;
    std::call_once(once, [] {
        auto logger = spdlog::stderr_color_mt("fata");
        spdlog::set_default_logger(logger);
    });
    spdlog::set_level(spdlog::level::from_str(level));
}

void prepare(Context& ctx, const GlobalFlags& g) {
    setup_logging(g.log_level);
    auto path = resolve_config_path(g.config, ctx.env.env);
    if (path) ctx.cfg = load_config(*path);
    apply_env_overrides(ctx.cfg, ctx.env.env);
    if (g.output) ctx.cfg.output_dir = *g.output;
    if (g.replay) ctx.cfg.replay = *g.replay;
    if (g.record) ctx.cfg.record = *g.record;
    if (g.replay_mode) {
        ctx.cfg.replay_mode = parse_replay_mode(*g.replay_mode);
        ctx.cfg.replay_mode_set = true;
    }
    if (!ctx.cfg.replay_mode_set && ctx.cfg.replay)
        ctx.cfg.replay_mode = ctx.cfg.record ? gateway::ReplayMode::FallThrough : gateway::ReplayMode::Strict;
    if (ctx.cfg.replay_mode != gateway::ReplayMode::Off && !ctx.cfg.replay)
        throw Error(ErrorCode::ConfigError, "replay mode " + std::string(to_string(ctx.cfg.replay_mode)) +
                                                " needs a replay archive (--replay)");
    validate_paths(ctx.cfg);
    if (ctx.cfg.replay_mode != gateway::ReplayMode::Off)
        ctx.replay_store = std::make_shared<gateway::ReplayStore>(gateway::ReplayStore::load(*ctx.cfg.replay));
    if (ctx.cfg.record) ctx.sink = std::make_shared<gateway::TranscriptSink>(*ctx.cfg.record);
}

// ---------------------------------------------------------------------------

int cmd_build_corpus(Context& ctx, const std::optional<std::string>& corpus_flag, std::optional<std::size_t> conc) {
    auto corpus = ctx.load_corpus(corpus_flag);
    const auto& gw = ctx.generator();
    corpus::ArtifactStore store(ctx.artifacts_dir());
    corpus::BuildOptions opts;
    opts.concurrency = conc.value_or(ctx.cfg.concurrency);
    auto summary = corpus::build_corpus(corpus, gw, store, ctx.templates(), opts);
    ctx.out() << "build-corpus: " << summary.cases << " cases, " << summary.generated << " artifacts generated, "
              << summary.skipped << " reused, " << summary.failures.size() << " failures\n";
    for (const auto& f : summary.failures)
        ctx.out() << "  failed " << f.case_id << " [" << f.stage << "]: " << f.error << "\n";
    return summary.failures.empty() ? kExitOk : kExitFailure;
}

int cmd_run_experiment(Context& ctx, const std::optional<std::string>& corpus_flag, const std::string& arms_flag,
                       std::optional<std::size_t> conc) {
    auto corpus = ctx.load_corpus(corpus_flag);
    corpus::ArtifactStore artifacts(ctx.artifacts_dir());
    experiment::ResultStore results(ctx.results_dir());
    experiment::RunConfig rc;
    rc.generator = &ctx.generator();
    rc.templates = ctx.templates();
    rc.arms = parse_arms(arms_flag);
    rc.concurrency = conc.value_or(ctx.cfg.concurrency);
    rc.temperature = ctx.cfg.temperature;
    auto summary = experiment::run_experiment(corpus, artifacts, results, rc);
    ctx.out() << "run-experiment: " << summary.requested << " answers requested, " << summary.completed
              << " generated, " << summary.skipped << " reused, " << summary.failures.size() << " failures\n";
    for (const auto& f : summary.failures)
        ctx.out() << "  failed " << f.case_id << "/" << experiment::to_string(f.arm) << " [" << f.stage
                  << "] " << f.error_code << ": " << f.message << "\n";
    return summary.exit_status();
}

int cmd_judge(Context& ctx, const std::optional<std::string>& corpus_flag, const std::optional<std::string>& weights_flag,
              const std::optional<std::string>& rubric_flag, std::optional<std::uint64_t> seed_flag,
              std::optional<std::size_t> conc) {
    if (ctx.cfg.judges.empty()) throw Error(ErrorCode::ConfigError, "no endpoints.judges configured");
    auto corpus = ctx.load_corpus(corpus_flag);
    corpus::ArtifactStore artifacts(ctx.artifacts_dir());
    experiment::ResultStore results(ctx.results_dir());
    auto rubric = rubric_flag ? judge::load_rubric(*rubric_flag)
                              : (ctx.cfg.rubric ? judge::load_rubric(*ctx.cfg.rubric) : judge::default_rubric());
    auto weights = ctx.weights(weights_flag);

    auto cases = judge::collect_judge_cases(corpus, artifacts, results);
    auto batches = judge::make_batches(cases, seed_flag.value_or(ctx.cfg.batch_seed));
    for (const auto& b : batches) write_json_file(ctx.batches_dir() / (b.batch_id + ".json"), judge::batch_to_json(b));

    std::vector<std::string> failures;
    std::mutex mu;
    std::vector<judge::ScoreRecord> all;
    for (const auto& endpoint : ctx.cfg.judges) {
        const auto& gw = ctx.make_gateway(endpoint);
        auto dir = ctx.scores_dir() / endpoint.endpoint_id;
        std::vector<std::vector<judge::ScoreRecord>> per_batch(batches.size());
        parallel_for(batches.size(), conc.value_or(ctx.cfg.concurrency), [&](std::size_t i) {
            auto file = dir / (batches[i].batch_id + ".jsonl");
            try {
                if (fs::exists(file)) {
                    per_batch[i] = judge::read_score_file(file);
                    return;
                }
                per_batch[i] = judge::evaluate_batch(gw, batches[i], rubric, weights);
                judge::write_score_file(file, per_batch[i]);
            } catch (const Error& e) {
                std::lock_guard lock(mu);
                failures.push_back(endpoint.endpoint_id + "/" + batches[i].batch_id + ": " + e.what());
            }
        });
        for (auto& v : per_batch) all.insert(all.end(), v.begin(), v.end());
    }
    judge::write_score_file(ctx.scores_file(), all);
    std::sort(failures.begin(), failures.end());
    ctx.out() << "judge: " << cases.size() << " cases in " << batches.size() << " batches, " << ctx.cfg.judges.size()
              << " judges, " << all.size() << " score records, " << failures.size() << " failures\n";
    for (const auto& f : failures) ctx.out() << "  failed " << f << "\n";
    return failures.empty() ? kExitOk : kExitFailure;
}

int cmd_report(Context& ctx, const std::optional<std::string>& scores_flag, const std::optional<std::string>& weights_flag,
               const std::string& grouping, const std::string& arms, const std::optional<std::string>& out_flag) {
    auto scores = scores_flag ? fs::path(*scores_flag) : ctx.scores_file();
    auto records = judge::read_score_file(scores);
    auto rep = report::build_report(records, ctx.weights(weights_flag), report::parse_grouping(grouping), parse_arms(arms));
    auto dir = out_flag ? fs::path(*out_flag) : ctx.cfg.output_dir;
    write_json_file(dir / "report.json", report::report_to_json(rep));
    auto md = report::render_markdown(rep);
    write_text_file(dir / "report.md", md);
    ctx.out() << md;
    return kExitOk;
}

service::HttpServer* g_server = nullptr;

extern "C" void on_signal(int) {
    if (g_server) g_server->stop();
}

service::ServiceConfig service_config(const Context& ctx) {
    service::ServiceConfig sc;
    sc.ttl = std::chrono::seconds(ctx.cfg.server.ttl_seconds);
    sc.default_variant = ctx.cfg.template_variant;
    sc.templates_dir = ctx.cfg.templates_dir;
    sc.persist_dir = ctx.cfg.server.persist_dir;
    return sc;
}

int cmd_serve(Context& ctx, const std::optional<std::string>& host, std::optional<int> port) {
    service::SessionService svc(ctx.generator(), service_config(ctx));
    service::HttpServer server(svc, service::ServerOptions{ctx.cfg.server.cors_origin});
    auto h = host.value_or(ctx.cfg.server.host);
    int bound = server.bind(h, port.value_or(ctx.cfg.server.port));
    ctx.out() << "listening on http://" << h << ":" << bound << "\n" << std::flush;
    g_server = &server;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    server.listen();
    g_server = nullptr;
    return kExitOk;
}

bool read_line(std::istream& in, std::string& line) {
    if (!std::getline(in, line)) return false;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
}

int cmd_chat(Context& ctx, const std::optional<std::string>& query_flag, const std::optional<std::string>& variant) {
    auto& in = *ctx.env.in;
    auto& out = ctx.out();
    service::SessionService svc(ctx.generator(), service_config(ctx));

    std::string query;
    if (query_flag) {
        query = *query_flag;
    } else {
        out << "Your request: " << std::flush;
        if (!read_line(in, query)) query.clear();
    }
    json body = {{"query", query}};
    if (variant) body["template_variant"] = *variant;
    auto created = svc.create_session(body);
    if (created.status != 201) {
        *ctx.env.err << "error (" << created.status << "): " << created.body["error"]["message"].get<std::string>() << "\n";
        return kExitFailure;
    }
    const auto id = created.body["session_id"].get<std::string>();
    if (created.body.contains("direct_answer")) {
        out << "\n=== Answer ===\n" << created.body["direct_answer"].get<std::string>() << "\n";
        return kExitOk;
    }

    out << "\nTo give you a personalized answer, please answer these questions.\n"
        << "Press Enter or type 'skip' to leave one out.\n";
    json answers = json::object();
    json declined = json::array();
    bool eof = false;
    for (const auto& group : created.body["question_groups"]) {
        out << "\n[" << group["dimension"].get<std::string>() << "]\n";
        for (const auto& q : group["questions"]) {
            int idx = q["index"].get<int>();
            out << idx << ". " << q["text"].get<std::string>() << "\n";
            if (q.contains("example_hint") && q["example_hint"].is_string())
                out << "   (" << q["example_hint"].get<std::string>() << ")\n";
            out << "> " << std::flush;
            std::string line;
            if (eof || !read_line(in, line)) {
                eof = true;
                line.clear();
            }
            auto t = trim(line);
            if (t.empty() || to_lower(t) == "skip")
                declined.push_back(idx);
            else
                answers[std::to_string(idx)] = t;
        }
    }
    auto answered = svc.submit_answers(id, json{{"answers", answers}, {"declined", declined}});
    if (answered.status != 200) {
        *ctx.env.err << "error (" << answered.status << "): " << answered.body["error"]["message"].get<std::string>() << "\n";
        return kExitFailure;
    }
    out << "\n=== Answer ===\n" << answered.body["final_answer"].get<std::string>() << "\n";
    return kExitOk;
}

} // namespace

int dispatch(int argc, const char* const* argv, CliEnv env) {
    if (!env.in) env.in = &std::cin;
    if (!env.out) env.out = &std::cout;
    if (!env.err) env.err = &std::cerr;
    if (!env.env)
        env.env = [](const std::string& k) -> std::optional<std::string> {
            const char* v = std::getenv(k.c_str());
            return v ? std::optional<std::string>(v) : std::nullopt;
        };

    CLI::App app{"First-ask-then-answer protocol engine and evaluation pipeline", "fata"};
    app.require_subcommand(1);
    app.fallthrough();
    GlobalFlags g;
    app.add_option("--config", g.config, "Configuration file (default: $FATA_CONFIG, then ./fata.json)");
    app.add_option("--replay", g.replay, "Replay archive (JSON lines); implies --replay-mode strict");
    app.add_option("--record", g.record, "Append provider transcripts to this archive");
    app.add_option("--replay-mode", g.replay_mode, "off | strict | fallthrough");
    app.add_option("--output", g.output, "Output directory (default: config output_dir)");
    app.add_option("--log-level", g.log_level, "trace | debug | info | warn | error | off");

    std::optional<std::string> corpus_path, weights, rubric, scores, out_dir, host, query, variant;
    std::optional<std::size_t> conc;
    std::optional<std::uint64_t> seed;
    std::optional<int> port;
    std::string arms = "B,F,C", grouping = "industry";

    auto* build = app.add_subcommand("build-corpus", "Synthesize personas, questions, answers and C-Prompts");
    build->add_option("--corpus", corpus_path, "Corpus file");
    build->add_option("--concurrency", conc, "Parallel cases");

    auto* run = app.add_subcommand("run-experiment", "Generate B, F and C answers for every case");
    run->add_option("--corpus", corpus_path, "Corpus file");
    run->add_option("--arms", arms, "Comma-separated arms (B,F,C)");
    run->add_option("--concurrency", conc, "Parallel cases");

    auto* jdg = app.add_subcommand("judge", "Score arm answers with every configured judge");
    jdg->add_option("--corpus", corpus_path, "Corpus file");
    jdg->add_option("--weights", weights, "Weight profile file or 'uniform'");
    jdg->add_option("--rubric", rubric, "Rubric file");
    jdg->add_option("--seed", seed, "Base seed for batch blinding");
    jdg->add_option("--concurrency", conc, "Parallel batches per judge");

    auto* rep = app.add_subcommand("report", "Compute statistics and write report.json / report.md");
    rep->add_option("--scores", scores, "Score file (default: <output>/scores.jsonl)");
    rep->add_option("--weights", weights, "Weight profile file or 'uniform'");
    rep->add_option("--grouping", grouping, "case | industry")->check(CLI::IsMember({"case", "industry"}));
    rep->add_option("--arms", arms, "Comma-separated arms (B,F,C)");
    rep->add_option("--out", out_dir, "Directory for report files (default: <output>)");

    auto* srv = app.add_subcommand("serve", "Serve the interactive session REST API");
    srv->add_option("--host", host, "Bind address");
    srv->add_option("--port", port, "Port (0 picks a free port)");

    auto* chat = app.add_subcommand("chat", "Interactive two-stage session in the terminal");
    chat->add_option("--query", query, "Request text (read from stdin when omitted)");
    chat->add_option("--variant", variant, "Template variant");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, *env.out, *env.err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, *env.out, *env.err);
    } catch (const CLI::ParseError& e) {
        *env.err << e.what() << "\n\n" << app.help();
        return kExitUsage;
    }

    Context ctx{env, {}, nullptr, nullptr, nullptr, {}};
    try {
        prepare(ctx, g);
        if (*build) return cmd_build_corpus(ctx, corpus_path, conc);
        if (*run) return cmd_run_experiment(ctx, corpus_path, arms, conc);
        if (*jdg) return cmd_judge(ctx, corpus_path, weights, rubric, seed, conc);
        if (*rep) return cmd_report(ctx, scores, weights, grouping, arms, out_dir);
        if (*srv) return cmd_serve(ctx, host, port);
        if (*chat) return cmd_chat(ctx, query, variant);
    } catch (const Error& e) {
        *env.err << "fata: " << e.what() << "\n";
        return kExitFailure;
    } catch (const std::exception& e) {
        *env.err << "fata: " << e.what() << "\n";
        return kExitFailure;
    }
    *env.err << app.help();
    return kExitUsage;
}

} // namespace fata::cli
