// Acceptance checks: one PASS/FAIL line per criterion, exit status 1 when any
// criterion fails.

#include <boost/math/distributions/students_t.hpp>

#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "fata/error.hpp"
#include "fata/judge.hpp"
#include "fata/protocol.hpp"
#include "fata/stats.hpp"
#include "oracles.hpp"
#include "published_values.hpp"
#include "pipeline_support.hpp"

using namespace fata;
using namespace fata::test;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances.
constexpr double kImprovementSlack = 0.1;   // percentage points, published rounding
constexpr double kTTestStatTol = 1e-9;      // t and Cohen's d vs the 50-digit reference
constexpr double kTTestPTol = 1e-6;         // two-sided p vs Boost
constexpr double kCriticalTol = 1e-3;       // t-table critical values at p = 0.05
constexpr auto kPipelineBudget = std::chrono::seconds(60);

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            if (!pass) detail << "; ";
            else detail.str("");
            pass = false;
            detail << what;
        }
    }
};

using Check = std::function<void(Outcome&)>;

std::string fmt(double x, int decimals = 2) { return stats::format_fixed(x, decimals); }

void improvement_arithmetic(Outcome& o) {
    std::ostringstream all;
    for (const auto& row : kOverall) {
        double vs_b = stats::mean_improvement(row.b, row.f);
        double vs_c = stats::mean_improvement(row.c, row.f);
        all << row.model << " " << fmt(vs_b) << "/" << fmt(vs_c) << " ";
        o.require(std::abs(vs_b - row.vs_b) <= kImprovementSlack,
                  row.model + " vs B " + fmt(vs_b) + " printed " + fmt(row.vs_b, 1));
        o.require(std::abs(vs_c - row.vs_c) <= kImprovementSlack,
                  row.model + " vs C " + fmt(vs_c) + " printed " + fmt(row.vs_c, 1));
    }
    double avg_b = stats::mean_improvement(kAverageB, kAverageF);
    double avg_c = stats::mean_improvement(kAverageC, kAverageF);
    all << "average " << fmt(avg_b) << "/" << fmt(avg_c);
    o.require(std::abs(avg_b - kAverageVsB) <= kImprovementSlack, "average vs B " + fmt(avg_b));
    o.require(std::abs(avg_c - kAverageVsC) <= kImprovementSlack, "average vs C " + fmt(avg_c));
    if (o.pass) o.detail << all.str();
}

void stability_cells(Outcome& o) {
    int rows = 0;
    for (const auto& ref : stability_refs()) {
        if (ref.method != "FATA") continue;
        std::optional<double> base;
        if (ref.reduction >= 0) base = ref.baseline_cv;
        auto row = stats::stability_row(ref.method, ref.cvs, base);
        ++rows;
        o.require(stats::round_to(row.mean_cv, 4) == ref.mean_cv, ref.model + " mean CV " + fmt(row.mean_cv, 4));
        o.require(row.stable_dimensions == ref.stable, ref.model + " stable count");
        o.require(stats::round_to(row.stability_rate, 1) == ref.rate,
                  ref.model + " stability rate " + fmt(row.stability_rate, 1));
        o.require(row.cv_reduction && stats::round_to(*row.cv_reduction, 1) == ref.reduction,
                  ref.model + " CV reduction");
    }
    auto openai = stats::stability_row("FATA", split_cvs(0.0803, 9, 0.0803), 0.2009);
    auto claude = stats::stability_row("FATA", split_cvs(0.0723, 9, 0.0723), 0.2234);
    auto deepseek = stats::stability_row("FATA", stability_refs()[5].cvs, 0.1856);
    o.require(rows == 3, "missing reference rows");
    if (o.pass)
        o.detail << "reductions " << fmt(*openai.cv_reduction, 1) << "% and " << fmt(*claude.cv_reduction, 1)
                 << "%, rates " << fmt(openai.stability_rate, 1) << "% and " << fmt(deepseek.stability_rate, 1) << "% ("
                 << deepseek.stable_dimensions << " of 9)";
}

void statistics_oracles(Outcome& o) {
    std::mt19937 rng(20251014);
    std::uniform_int_distribution<int> size(10, 30);
    std::uniform_real_distribution<double> score(3.0, 10.0), shift(-1.5, 1.5);
    double worst_t = 0, worst_d = 0, worst_p = 0;
    for (int trial = 0; trial < 100; ++trial) {
        int n = size(rng);
        double delta = shift(rng);
        stats::PairedSample s;
        for (int i = 0; i < n; ++i) {
            double b = score(rng);
            s.x.push_back(b);
            s.y.push_back(b + delta + std::normal_distribution<double>(0, 0.8)(rng));
        }
        auto r = stats::paired_t_test(s);
        auto ref = reference_t_test(s.x, s.y);
        worst_t = std::max(worst_t, std::abs(r.t - ref.t));
        worst_d = std::max(worst_d, std::abs(r.cohens_d - ref.d));
        worst_p = std::max(worst_p, std::abs(r.p - ref.p));
    }
    o.require(worst_t <= kTTestStatTol && worst_d <= kTTestStatTol, "t/d error " + std::to_string(std::max(worst_t, worst_d)));
    o.require(worst_p <= kTTestPTol, "p error " + std::to_string(worst_p));

    const std::vector<std::pair<double, int>> criticals = {{12.706, 1}, {2.262, 9}, {2.042, 30}};
    double worst_crit = 0;
    for (auto [t, df] : criticals) worst_crit = std::max(worst_crit, std::abs(stats::t_sf(t, df) - 0.05));
    o.require(worst_crit <= kCriticalTol, "critical value error " + std::to_string(worst_crit));

    int mismatches = 0;
    for (unsigned seed = 0; seed < 1000; ++seed) {
        std::mt19937 r(seed);
        int n = 2 + static_cast<int>(seed % 7);
        std::vector<double> a(n), b(n);
        for (int i = 0; i < n; ++i) a[i] = b[i] = i + 1;
        std::shuffle(a.begin(), a.end(), r);
        std::shuffle(b.begin(), b.end(), r);
        if (stats::kendall_tau(a, b) != brute_tau(a, b)) ++mismatches;
    }
    o.require(mismatches == 0, std::to_string(mismatches) + " kendall mismatches");
    if (o.pass) {
        std::ostringstream s;
        s.precision(2);
        s << std::scientific << "max |dt|=" << worst_t << " |dd|=" << worst_d << " |dp|=" << worst_p
          << " critical=" << worst_crit << ", kendall 1000/1000";
        o.detail << s.str();
    }
}

void replay_end_to_end(Outcome& o) {
    CountingServer server;
    TempDir first, second;
    auto start = std::chrono::steady_clock::now();
    auto a = run_pipeline(first.path(), server.base_url());
    auto b = run_pipeline(second.path(), server.base_url());
    auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start);

    for (const auto& s : a.steps) o.require(s.code == 0, "step failed: " + s.err);
    o.require(b.ok(), "second run failed");
    o.require(server.hits() == 0, std::to_string(server.hits()) + " network calls");
    o.require(elapsed < kPipelineBudget, "took " + std::to_string(elapsed.count()) + " ms");
    o.require(!a.outputs.empty() && a.outputs == b.outputs, "outputs differ between runs");
    if (!a.ok()) return;

    const auto& corpus = sample_corpus();
    o.require(corpus.cases.size() >= 20, "sample corpus too small");
    experiment::ResultStore results(first.path() / "out" / "results");
    for (const auto& c : corpus.cases)
        for (auto arm : experiment::kAllArms)
            o.require(results.has(c.case_id, arm), c.case_id + " lacks arm " + std::string(experiment::to_string(arm)));

    auto records = judge::read_score_file(first.path() / "out" / "scores.jsonl");
    std::set<std::string> judges;
    std::map<std::tuple<std::string, experiment::Arm, std::string>, int> per;
    for (const auto& r : records) {
        judges.insert(r.judge_id);
        ++per[{r.case_ref, r.arm, r.judge_id}];
    }
    o.require(judges.size() == 2, "expected 2 judges");
    for (const auto& c : corpus.cases)
        for (auto arm : experiment::kAllArms)
            for (const auto& j : judges) o.require(per[{c.case_id, arm, j}] >= 1, c.case_id + " unscored by " + j);
    o.require(a.outputs.count("report.md") && a.outputs.count("report.json"), "no report");
    if (o.pass)
        o.detail << corpus.cases.size() << " cases, " << records.size() << " score records, " << a.outputs.size()
                 << " identical files, 0 network calls, " << elapsed.count() << " ms for two runs";
}

void protocol_invariants(Outcome& o) {
    std::mt19937 rng(20251014);
    int round_trips = 0;
    for (int trial = 0; trial < 500; ++trial) {
        auto qs = random_question_set(rng);
        try {
            if (protocol::parse_question_set(protocol::render_question_list(qs), qs.case_ref) == qs) ++round_trips;
        } catch (const Error&) {
        }
    }
    o.require(round_trips == 500, std::to_string(500 - round_trips) + " round trips failed");

    auto ask = protocol::builtin_templates(protocol::TemplateVariant::Standard).ask;
    int anchors = 0;
    for (const auto& a : protocol::component_anchors())
        if (ask.body.find(a.phrase) != std::string::npos) ++anchors;
    o.require(anchors == 6 && protocol::component_anchors().size() == 6, std::to_string(anchors) + "/6 anchors");

    int rejected = 0, off_graph = 0, wrong = 0;
    for (auto p : protocol::kAllPhases)
        for (auto e : protocol::kAllEvents)
            for (bool recorded : {false, true}) {
                auto s = state_in(p, recorded);
                bool legal = kLegal.count({p, e, recorded}) > 0;
                try {
                    auto out = protocol::advance_session(s, e, "t", kFixedTime);
                    if (!legal || out.phase != kTarget.at({p, e})) ++wrong;
                } catch (const Error& err) {
                    if (legal || err.code() != ErrorCode::IllegalTransition) ++wrong;
                }
                if (!legal) {
                    ++off_graph;
                    try {
                        protocol::advance_session(s, e, "t", kFixedTime);
                    } catch (const Error&) {
                        ++rejected;
                    }
                }
            }
    o.require(wrong == 0 && rejected == off_graph, std::to_string(wrong) + " sweep mismatches");
    if (o.pass)
        o.detail << "500/500 round trips, 6/6 anchors, " << rejected << "/" << off_graph
                 << " off-graph transitions rejected";
}

void batching(Outcome& o) {
    std::size_t batches_seen = 0;
    for (std::size_t n = 1; n <= 100; ++n) {
        auto cases = make_cases(n);
        auto batches = judge::make_batches(cases, 42);
        std::multiset<std::string> seen;
        for (std::size_t b = 0; b < batches.size(); ++b) {
            auto size = batches[b].items.size();
            if (b + 1 < batches.size())
                o.require(size >= 8 && size <= 9, "n=" + std::to_string(n) + " batch " + std::to_string(b));
            for (const auto& item : batches[b].items) seen.insert(item.case_id);
        }
        batches_seen += batches.size();
        o.require(seen.size() == n, "n=" + std::to_string(n) + " not a partition");
        for (const auto& c : cases) o.require(seen.count(c.case_id) == 1, c.case_id + " not covered once");
    }
    if (o.pass) o.detail << "n = 1..100, " << batches_seen << " batches, all partitions";
}

void cli_chat(Outcome& o) {
    TempDir dir;
    auto tr = std::make_shared<FnTransport>([](const std::string&) { return gateway::HttpResponse{500, "offline"}; });
    auto r = run_cli({"--config", (sample_dir() / "fata.json").string(), "--output", dir.path().string(), "chat"}, {},
                     read_text(sample_dir() / "chat_session.txt"), [tr] { return tr; });
    o.require(r.code == 0, "exit " + std::to_string(r.code) + ": " + r.err);
    o.require(tr->calls() == 0, "provider was called");
    auto asked = r.out.find("please answer these questions");
    auto answered = r.out.find("=== Answer ===");
    o.require(asked != std::string::npos, "no questions shown");
    o.require(answered != std::string::npos && answered > asked, "no final answer after the questions");
    if (o.pass) o.detail << "questions then final answer, 0 provider calls";
}

} // namespace

int main() {
    spdlog::set_level(spdlog::level::off);
    const std::vector<std::pair<std::string, Check>> criteria = {
        {"improvement-arithmetic", improvement_arithmetic},
        {"stability-cells", stability_cells},
        {"statistics-oracles", statistics_oracles},
        {"replay-end-to-end", replay_end_to_end},
        {"protocol-invariants", protocol_invariants},
        {"batching", batching},
        {"cli-chat", cli_chat},
    };
    int failed = 0;
    for (const auto& [name, check] : criteria) {
        Outcome o;
        try {
            check(o);
        } catch (const std::exception& e) {
            o.require(false, std::string("exception: ") + e.what());
        }
        if (!o.pass) ++failed;
        std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail.str() << std::endl;
    }
    std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
    return failed == 0 ? 0 : 1;
}
