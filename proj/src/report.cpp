#include "fata/report.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "fata/error.hpp"

namespace fata::report {

using judge::DimensionScores;
using judge::kAllDimensions;
using judge::kDimensionCount;
using judge::ScoreRecord;

std::string_view to_string(Grouping g) noexcept { return g == Grouping::Case ? "case" : "industry"; }

Grouping parse_grouping(std::string_view name) {
    if (name == "case") return Grouping::Case;
    if (name == "industry") return Grouping::Industry;
    throw Error(ErrorCode::ConfigError, "grouping must be 'case' or 'industry', got '" + std::string(name) + "'");
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string arm_title(Arm a) {
    switch (a) {
        case Arm::B: return "B-Prompt";
        case Arm::F: return "FATA";
        case Arm::C: return "C-Prompt";
    }
    return "?";
}

bool has_arm(const std::vector<Arm>& arms, Arm a) { return std::find(arms.begin(), arms.end(), a) != arms.end(); }

// Table column order: baseline, upper bound, protocol.
std::vector<Arm> display_order(const std::vector<Arm>& arms) {
    std::vector<Arm> out;
    for (auto a : {Arm::B, Arm::C, Arm::F})
        if (has_arm(arms, a)) out.push_back(a);
    return out;
}

struct UnitAcc {
    DimensionScores dims_sum;
    double total_sum = 0.0;
    std::size_t n = 0;

    void add(const DimensionScores& d, double total) {
        for (std::size_t i = 0; i < kDimensionCount; ++i) dims_sum.values[i] += d.values[i];
        total_sum += total;
        ++n;
    }
    double total() const { return total_sum / static_cast<double>(n); }
    double dim(std::size_t i) const { return dims_sum.values[i] / static_cast<double>(n); }
};

double cv_or_nan(const std::vector<double>& xs) {
    try {
        return stats::coefficient_of_variation(xs);
    } catch (const Error&) {
        return kNaN;
    }
}

} // namespace

StatsReport build_report(const std::vector<ScoreRecord>& records, const judge::WeightProfile& weights,
                         Grouping grouping, const std::vector<Arm>& requested) {
    judge::validate(weights);
    StatsReport r;
    r.grouping = grouping;
    for (auto a : experiment::kAllArms) {
        if (has_arm(requested, a)) r.arms.push_back(a);
    }
    if (r.arms.empty()) throw Error(ErrorCode::InsufficientData, "no arms requested");

    std::vector<ScoreRecord> used;
    for (const auto& rec : records) {
        if (!has_arm(r.arms, rec.arm)) continue;
        auto copy = rec;
        copy.weighted_total = judge::weighted_total(copy.dims, weights);
        used.push_back(std::move(copy));
    }
    if (used.empty()) throw Error(ErrorCode::InsufficientData, "no score records for the requested arms");

    std::map<std::string, std::string> industry_of;
    std::set<std::string> judges;
    for (const auto& rec : used) {
        judges.insert(rec.judge_id);
        auto& ind = industry_of[rec.case_ref];
        if (ind.empty()) ind = rec.industry;
    }
    auto agg = judge::aggregate_judges(used, weights);

    auto unit_of = [&](const std::string& case_id) -> std::string {
        if (grouping == Grouping::Case) return case_id;
        const auto& ind = industry_of.at(case_id);
        if (ind.empty()) throw Error(ErrorCode::InsufficientData, "case " + case_id + " has no industry label");
        return ind;
    };

    std::set<std::string> unit_set;
    for (const auto& [case_id, ind] : industry_of) unit_set.insert(unit_of(case_id));
    r.units.assign(unit_set.begin(), unit_set.end());

    std::map<Arm, std::map<std::string, UnitAcc>> by_unit;
    std::map<Arm, std::map<std::string, UnitAcc>> by_industry;
    std::map<Arm, UnitAcc> by_arm;
    for (const auto& s : agg.means) {
        by_unit[s.arm][unit_of(s.case_ref)].add(s.mean, s.weighted_total);
        by_industry[s.arm][s.industry].add(s.mean, s.weighted_total);
        by_arm[s.arm].add(s.mean, s.weighted_total);
    }
    for (auto a : r.arms) {
        for (const auto& u : r.units) {
            if (!by_unit[a].count(u))
                throw Error(ErrorCode::InsufficientData,
                            "no scores for arm " + std::string(experiment::to_string(a)) + " in " +
                                std::string(to_string(grouping)) + " " + u);
        }
    }

    // Table 1: means per judge and across judges.
    std::map<std::string, std::map<Arm, UnitAcc>> per_judge;
    for (const auto& rec : used) per_judge[rec.judge_id][rec.arm].add(rec.dims, rec.weighted_total);
    for (const auto& j : judges) {
        r.rows.push_back(j);
        for (auto a : r.arms) {
            auto it = per_judge[j].find(a);
            r.means[j][a] = it == per_judge[j].end() ? kNaN : it->second.total();
        }
    }
    r.rows.push_back(kAverageRow);
    for (auto a : r.arms) {
        r.means[kAverageRow][a] = by_arm[a].total();
        DimensionScores d;
        for (std::size_t i = 0; i < kDimensionCount; ++i) d.values[i] = by_arm[a].dim(i);
        r.dimension_means[a] = d;
    }

    if (has_arm(r.arms, Arm::F)) {
        for (auto base : {Arm::B, Arm::C}) {
            if (!has_arm(r.arms, base)) continue;
            for (const auto& row : r.rows) {
                Improvement imp{row, Arm::F, base, r.means[row][base], r.means[row][Arm::F], kNaN};
                if (!std::isnan(imp.baseline_mean) && !std::isnan(imp.treatment_mean))
                    imp.percent = stats::mean_improvement(imp.baseline_mean, imp.treatment_mean);
                r.improvements.push_back(imp);
            }
        }
        // Table 3: paired tests over grouping units.
        for (auto other : {Arm::B, Arm::C}) {
            if (!has_arm(r.arms, other)) continue;
            TTestEntry e{other, Arm::F, std::nullopt, {}};
            stats::PairedSample s;
            for (const auto& u : r.units) {
                s.labels.push_back(u);
                s.x.push_back(by_unit[other][u].total());
                s.y.push_back(by_unit[Arm::F][u].total());
            }
            try {
                e.result = stats::paired_t_test(s);
            } catch (const Error& err) {
                e.error = std::string(fata::to_string(err.code())) + ": " + err.detail();
            }
            r.ttests.push_back(std::move(e));
        }
    }

    // Table 4: CV across units per dimension.
    if (r.units.size() >= 2) {
        std::optional<double> baseline;
        for (auto a : r.arms) {
            StabilityEntry e;
            e.arm = a;
            for (std::size_t i = 0; i < kDimensionCount; ++i) {
                std::vector<double> xs;
                for (const auto& u : r.units) xs.push_back(by_unit[a][u].dim(i));
                e.per_dimension_cv[i] = cv_or_nan(xs);
            }
            std::optional<double> base_for_row = (a == Arm::B) ? std::nullopt : baseline;
            if (base_for_row && !(*base_for_row > 0.0)) base_for_row.reset();
            e.row = stats::stability_row(arm_title(a), e.per_dimension_cv, base_for_row);
            if (a == Arm::B) baseline = e.row.mean_cv;
            r.stability.push_back(std::move(e));
        }
    }

    if (has_arm(r.arms, Arm::B)) {
        for (auto other : {Arm::C, Arm::F}) {
            if (!has_arm(r.arms, other)) continue;
            std::map<std::string, double> ra, rb;
            for (const auto& [ind, acc] : by_industry[Arm::B]) ra[ind] = acc.total();
            for (const auto& [ind, acc] : by_industry[other]) rb[ind] = acc.total();
            TauEntry t{Arm::B, other, kNaN, ra.size()};
            if (ra.size() >= 2) t.tau = stats::kendall_tau(ra, rb);
            r.taus.push_back(t);
        }
    }
    return r;
}

namespace {

ordered_json num(double v) { return std::isnan(v) ? ordered_json(nullptr) : ordered_json(v); }

} // namespace

ordered_json report_to_json(const StatsReport& r) {
    ordered_json arms = ordered_json::array();
    for (auto a : r.arms) arms.push_back(experiment::to_string(a));

    ordered_json means = ordered_json::array();
    for (const auto& row : r.rows) {
        ordered_json m = ordered_json::object();
        for (auto a : r.arms) m[std::string(experiment::to_string(a))] = num(r.means.at(row).at(a));
        means.push_back({{"model", row}, {"means", m}});
    }

    ordered_json dims = ordered_json::object();
    for (const auto& [a, d] : r.dimension_means) {
        ordered_json m = ordered_json::object();
        for (auto dim : kAllDimensions) m[std::string(judge::to_string(dim))] = d[dim];
        dims[std::string(experiment::to_string(a))] = m;
    }

    ordered_json imps = ordered_json::array();
    for (const auto& i : r.improvements)
        imps.push_back({{"model", i.row},
                        {"treatment", experiment::to_string(i.treatment)},
                        {"baseline", experiment::to_string(i.baseline)},
                        {"baseline_mean", num(i.baseline_mean)},
                        {"treatment_mean", num(i.treatment_mean)},
                        {"percent", num(i.percent)}});

    ordered_json tests = ordered_json::array();
    for (const auto& t : r.ttests) {
        ordered_json e = {{"x", experiment::to_string(t.x)}, {"y", experiment::to_string(t.y)}};
        if (t.result) {
            e["n"] = t.result->n;
            e["t"] = num(t.result->t);
            e["df"] = t.result->df;
            e["p"] = num(t.result->p);
            e["cohens_d"] = num(t.result->cohens_d);
            e["mean_diff"] = num(t.result->mean_diff);
        } else {
            e["error"] = t.error;
        }
        tests.push_back(std::move(e));
    }

    ordered_json stab = ordered_json::array();
    for (const auto& s : r.stability) {
        ordered_json cvs = ordered_json::object();
        for (auto dim : kAllDimensions) cvs[std::string(judge::to_string(dim))] = num(s.per_dimension_cv[judge::index_of(dim)]);
        stab.push_back({{"arm", experiment::to_string(s.arm)},
                        {"method", s.row.method},
                        {"mean_cv", num(s.row.mean_cv)},
                        {"stable_dimensions", s.row.stable_dimensions},
                        {"stability_rate", num(s.row.stability_rate)},
                        {"cv_reduction", s.row.cv_reduction ? num(*s.row.cv_reduction) : ordered_json(nullptr)},
                        {"per_dimension_cv", cvs}});
    }

    ordered_json taus = ordered_json::array();
    for (const auto& t : r.taus)
        taus.push_back({{"a", experiment::to_string(t.a)},
                        {"b", experiment::to_string(t.b)},
                        {"industries", t.industries},
                        {"tau", num(t.tau)}});

    return ordered_json{{"grouping", to_string(r.grouping)},
                        {"arms", arms},
                        {"units", r.units},
                        {"means", means},
                        {"dimension_means", dims},
                        {"improvements", imps},
                        {"ttests", tests},
                        {"stability", stab},
                        {"kendall_tau", taus}};
}

std::string render_markdown(const StatsReport& r) {
    using stats::format_fixed;
    using stats::format_percent;
    std::ostringstream os;
    os << "# FATA evaluation report\n\n"
       << "Grouping unit: " << to_string(r.grouping) << " (" << r.units.size() << " units)\n\n";
    const auto arms = display_order(r.arms);

    os << "## Overall weighted scores\n\n| Model |";
    for (auto a : arms) os << " " << arm_title(a) << " |";
    std::vector<Arm> bases;
    if (has_arm(arms, Arm::F)) {
        for (auto b : {Arm::B, Arm::C})
            if (has_arm(arms, b)) bases.push_back(b);
    }
    for (auto b : bases) os << " FATA vs " << experiment::to_string(b) << " |";
    os << "\n|---|";
    for (std::size_t i = 0; i < arms.size() + bases.size(); ++i) os << "---|";
    os << "\n";
    for (const auto& row : r.rows) {
        os << "| " << row << " |";
        for (auto a : arms) os << " " << format_fixed(r.means.at(row).at(a), 2) << " |";
        for (auto b : bases) {
            for (const auto& i : r.improvements)
                if (i.row == row && i.baseline == b) os << " " << format_percent(i.percent) << " |";
        }
        os << "\n";
    }

    os << "\n## Per-dimension means\n\n| Layer | Dimension |";
    for (auto a : arms) os << " " << arm_title(a) << " |";
    os << "\n|---|---|";
    for (std::size_t i = 0; i < arms.size(); ++i) os << "---|";
    os << "\n";
    for (auto dim : kAllDimensions) {
        os << "| " << judge::to_string(judge::layer_of(dim)) << " | " << judge::to_string(dim) << " |";
        for (auto a : arms) os << " " << format_fixed(r.dimension_means.at(a)[dim], 2) << " |";
        os << "\n";
    }

    if (!r.ttests.empty()) {
        os << "\n## Paired comparisons\n\n| Comparison | n | t | df | p | Cohen's d | Effect |\n"
              "|---|---|---|---|---|---|---|\n";
        for (const auto& t : r.ttests) {
            os << "| " << arm_title(t.x) << " vs " << arm_title(t.y) << " |";
            if (t.result) {
                const auto& x = *t.result;
                os << " " << x.n << " | " << format_fixed(x.t, 3) << " | " << x.df << " | "
                   << (x.p < 0.001 ? std::string("< 0.001") : format_fixed(x.p, 3)) << " | "
                   << format_fixed(x.cohens_d, 2) << " | " << stats::effect_size_label(x.cohens_d) << " |\n";
            } else {
                os << " - | - | - | - | - | " << t.error << " |\n";
            }
        }
    }

    if (!r.stability.empty()) {
        os << "\n## Stability and ranking correlation\n\n"
              "| Method | Mean CV | Stable Dimensions | Stability Rate (%) | CV Reduction | Ranking Correlation (tau) |\n"
              "|---|---|---|---|---|---|\n";
        for (auto a : arms) {
            auto it = std::find_if(r.stability.begin(), r.stability.end(), [&](const StabilityEntry& e) { return e.arm == a; });
            if (it == r.stability.end()) continue;
            const auto& s = *it;
            os << "| " << s.row.method << " | " << format_fixed(s.row.mean_cv, 4) << " | " << s.row.stable_dimensions
               << "/9 | " << format_fixed(s.row.stability_rate, 1) << " | "
               << (s.row.cv_reduction ? format_fixed(*s.row.cv_reduction, 1) + "%" : std::string("-")) << " | ";
            std::string tau = "-";
            for (const auto& t : r.taus)
                if (t.b == s.arm) tau = format_fixed(t.tau, 3);
            os << tau << " |\n";
        }
    }
    return os.str();
}

} // namespace fata::report
