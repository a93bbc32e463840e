#pragma once

// Report over stored judge scores: arm means, improvement matrix, paired
// t-tests, stability rows and ranking correlations, as JSON and Markdown.

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fata/judge.hpp"
#include "fata/stats.hpp"

namespace fata::report {

using experiment::Arm;

enum class Grouping { Case, Industry };
std::string_view to_string(Grouping g) noexcept;
Grouping parse_grouping(std::string_view name);

inline constexpr const char* kAverageRow = "Average";

struct Improvement {
    std::string row;        // judge id or "Average"
    Arm treatment = Arm::F;
    Arm baseline = Arm::B;
    double baseline_mean = 0.0;
    double treatment_mean = 0.0;
    double percent = 0.0;
};

struct TTestEntry {
    Arm x = Arm::B;
    Arm y = Arm::F;
    std::optional<stats::TTestResult> result;
    std::string error; // set when the test could not be computed
};

struct StabilityEntry {
    Arm arm = Arm::B;
    std::array<double, judge::kDimensionCount> per_dimension_cv{};
    stats::StabilityRow row;
};

struct TauEntry {
    Arm a = Arm::B;
    Arm b = Arm::C;
    double tau = 0.0; // NaN when undefined
    std::size_t industries = 0;
};

struct StatsReport {
    Grouping grouping = Grouping::Industry;
    std::vector<Arm> arms;
    std::vector<std::string> rows;  // judges, then "Average"
    std::vector<std::string> units; // grouping units, sorted
    std::map<std::string, std::map<Arm, double>> means;
    std::map<Arm, judge::DimensionScores> dimension_means;
    std::vector<Improvement> improvements;
    std::vector<TTestEntry> ttests;
    std::vector<StabilityEntry> stability;
    std::vector<TauEntry> taus;
};

/// Weighted totals are recomputed under `weights`. Throws InsufficientData
/// naming the first missing (arm, group).
StatsReport build_report(const std::vector<judge::ScoreRecord>& records, const judge::WeightProfile& weights,
                         Grouping grouping, const std::vector<Arm>& arms = {Arm::B, Arm::F, Arm::C});

ordered_json report_to_json(const StatsReport& r);
std::string render_markdown(const StatsReport& r);

} // namespace fata::report
