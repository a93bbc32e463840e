#pragma once

// Arm comparison statistics: improvement percentages, paired t-tests with
// Cohen's d, coefficient of variation and stability rows, Kendall's tau-b.
// All functions are pure.

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fata::stats {

/// (treatment - baseline) / baseline * 100. Throws NonPositiveBaseline.
double mean_improvement(double baseline_mean, double treatment_mean);

struct PairedSample {
    std::vector<std::string> labels;
    std::vector<double> x;
    std::vector<double> y;
};

struct TTestResult {
    double t = 0.0;
    int df = 0;
    double p = 1.0; // two-sided
    double cohens_d = 0.0;
    double mean_diff = 0.0;
    double sd_diff = 0.0;
    std::size_t n = 0;
};

/// d = x - y, sample sd. A zero mean difference gives t = 0, p = 1 even when
/// sd = 0; otherwise sd = 0 throws DegenerateSample.
TTestResult paired_t_test(const PairedSample& s);

/// Regularized incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x);

/// Two-sided Student-t tail probability P(|T| >= |t|).
double t_sf(double t, int df);

double mean(std::span<const double> xs);
/// Sample standard deviation (n - 1 denominator).
double sample_sd(std::span<const double> xs);

/// sd / mean. Throws TooFewPoints for fewer than two values, NonPositiveMean.
double coefficient_of_variation(std::span<const double> xs);

inline constexpr double kStableCv = 0.10;

struct StabilityRow {
    std::string method;
    double mean_cv = 0.0;
    int stable_dimensions = 0;
    double stability_rate = 0.0; // percent
    std::optional<double> cv_reduction; // percent vs baseline mean CV
};

/// Nine per-dimension CVs; throws WrongDimensionCount otherwise.
StabilityRow stability_row(std::string method, std::span<const double> per_dimension_cvs,
                           std::optional<double> baseline_mean_cv = std::nullopt);

/// Tau-b over paired scores (ties allowed). NaN when either side is all ties.
double kendall_tau(std::span<const double> a, std::span<const double> b);
/// Same, over labelled scores; throws ItemMismatch unless both maps hold the
/// same labels.
double kendall_tau(const std::map<std::string, double>& a, const std::map<std::string, double>& b);

/// Half-away-from-zero rounding at display precision.
double round_to(double x, int decimals);
std::string format_fixed(double x, int decimals);
/// "+43.7%" style.
std::string format_percent(double x, int decimals = 1);

/// Conventional magnitude label for |d|.
std::string effect_size_label(double d);

} // namespace fata::stats
