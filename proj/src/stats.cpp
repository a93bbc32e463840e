#include "fata/stats.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

#include "fata/error.hpp"

namespace fata::stats {

double mean_improvement(double baseline_mean, double treatment_mean) {
    if (!(baseline_mean > 0.0))
        throw Error(ErrorCode::NonPositiveBaseline, "baseline mean " + std::to_string(baseline_mean) + " is not positive");
    return (treatment_mean - baseline_mean) / baseline_mean * 100.0;
}

double mean(std::span<const double> xs) {
    if (xs.empty()) throw Error(ErrorCode::TooFewPoints, "mean of an empty series");
    double s = 0.0;
    for (double v : xs) s += v;
    return s / static_cast<double>(xs.size());
}

double sample_sd(std::span<const double> xs) {
    if (xs.size() < 2) throw Error(ErrorCode::TooFewPoints, "sample sd needs at least two values");
    const double m = mean(xs);
    double ss = 0.0;
    for (double v : xs) ss += (v - m) * (v - m);
    return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

TTestResult paired_t_test(const PairedSample& s) {
    const auto n = s.x.size();
    if (s.y.size() != n || (!s.labels.empty() && s.labels.size() != n))
        throw Error(ErrorCode::ValidationError, "paired sample has unequal lengths");
    if (n < 2) throw Error(ErrorCode::TooFewPoints, "paired t-test needs at least two pairs");

    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = s.x[i] - s.y[i];

    TTestResult r;
    r.n = n;
    r.df = static_cast<int>(n - 1);
    r.mean_diff = mean(d);
    r.sd_diff = sample_sd(d);
    if (r.mean_diff == 0.0) {
        r.t = 0.0;
        r.cohens_d = 0.0;
        r.p = 1.0;
        return r;
    }
    if (r.sd_diff == 0.0)
        throw Error(ErrorCode::DegenerateSample, "all paired differences are identical (sd = 0)");
    r.cohens_d = r.mean_diff / r.sd_diff;
    r.t = r.cohens_d * std::sqrt(static_cast<double>(n));
    r.p = t_sf(r.t, r.df);
    return r;
}

namespace {

// Continued fraction for I_x(a, b), modified Lentz.
double beta_cf(double a, double b, double x) {
    constexpr int kMaxIter = 10000;
    constexpr double kEps = 1e-15;
    constexpr double kTiny = 1e-300;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) break;
    }
    return h;
}

} // namespace

double incomplete_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double log_front =
        std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(log_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(a, b, x) / a;
    return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

double t_sf(double t, int df) {
    if (df < 1) throw Error(ErrorCode::ValidationError, "t_sf needs df >= 1");
    if (std::isnan(t)) return std::numeric_limits<double>::quiet_NaN();
    if (t == 0.0) return 1.0;
    if (std::isinf(t)) return 0.0;
    const double v = static_cast<double>(df);
    const double t2 = t * t;
    const double x = v / (v + t2);
    double p = incomplete_beta(v / 2.0, 0.5, x);
    if (p < 0.0) p = 0.0;
    if (p > 1.0) p = 1.0;
    return p;
}

double coefficient_of_variation(std::span<const double> xs) {
    if (xs.size() < 2)
        throw Error(ErrorCode::TooFewPoints, "coefficient of variation needs at least two values, got " +
                                                 std::to_string(xs.size()));
    const double m = mean(xs);
    if (!(m > 0.0)) throw Error(ErrorCode::NonPositiveMean, "series mean " + std::to_string(m) + " is not positive");
    return sample_sd(xs) / m;
}

StabilityRow stability_row(std::string method, std::span<const double> per_dimension_cvs,
                           std::optional<double> baseline_mean_cv) {
    if (per_dimension_cvs.size() != 9)
        throw Error(ErrorCode::WrongDimensionCount,
                    "stability row needs 9 CVs, got " + std::to_string(per_dimension_cvs.size()));
    StabilityRow row;
    row.method = std::move(method);
    row.mean_cv = mean(per_dimension_cvs);
    for (double cv : per_dimension_cvs) {
        if (cv <= kStableCv) ++row.stable_dimensions;
    }
    row.stability_rate = row.stable_dimensions / 9.0 * 100.0;
    if (baseline_mean_cv) {
        if (!(*baseline_mean_cv > 0.0))
            throw Error(ErrorCode::NonPositiveBaseline, "baseline mean CV is not positive");
        row.cv_reduction = (*baseline_mean_cv - row.mean_cv) / *baseline_mean_cv * 100.0;
    }
    return row;
}

double kendall_tau(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw Error(ErrorCode::ItemMismatch, "rankings differ in length");
    if (a.size() < 2) throw Error(ErrorCode::TooFewPoints, "kendall tau needs at least two items");
    long long concordant = 0, discordant = 0, ties_a = 0, ties_b = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = i + 1; j < a.size(); ++j) {
            const double da = a[i] - a[j];
            const double db = b[i] - b[j];
            if (da == 0.0 && db == 0.0) continue;
            if (da == 0.0) {
                ++ties_a;
            } else if (db == 0.0) {
                ++ties_b;
            } else if ((da > 0) == (db > 0)) {
                ++concordant;
            } else {
                ++discordant;
            }
        }
    }
    const double denom = std::sqrt(static_cast<double>(concordant + discordant + ties_a) *
                                   static_cast<double>(concordant + discordant + ties_b));
    if (denom == 0.0) return std::numeric_limits<double>::quiet_NaN();
    return static_cast<double>(concordant - discordant) / denom;
}

double kendall_tau(const std::map<std::string, double>& a, const std::map<std::string, double>& b) {
    std::vector<double> xs, ys;
    for (const auto& [label, v] : a) {
        auto it = b.find(label);
        if (it == b.end()) throw Error(ErrorCode::ItemMismatch, "item '" + label + "' missing from second ranking");
        xs.push_back(v);
        ys.push_back(it->second);
    }
    if (a.size() != b.size()) {
        for (const auto& [label, v] : b) {
            if (!a.count(label)) throw Error(ErrorCode::ItemMismatch, "item '" + label + "' missing from first ranking");
        }
    }
    return kendall_tau(xs, ys);
}

double round_to(double x, int decimals) {
    const double scale = std::pow(10.0, decimals);
    // Nudge by a few ulps so values like 43.65 stored as 43.6499999 round up.
    const double scaled = x * scale;
    const double nudged = scaled + std::copysign(std::abs(scaled) * 4 * std::numeric_limits<double>::epsilon(), scaled);
    return std::round(nudged) / scale;
}

std::string format_fixed(double x, int decimals) {
    if (std::isnan(x)) return "n/a";
    char buf[64];
    double r = round_to(x, decimals);
    if (r == 0.0) r = 0.0; // drop negative zero
    std::snprintf(buf, sizeof buf, "%.*f", decimals, r);
    return buf;
}

std::string format_percent(double x, int decimals) {
    if (std::isnan(x)) return "n/a";
    auto s = format_fixed(x, decimals);
    if (round_to(x, decimals) > 0.0) s = "+" + s;
    return s + "%";
}

std::string effect_size_label(double d) {
    const double m = std::abs(d);
    if (std::isnan(m)) return "n/a";
    if (m < 0.2) return "negligible";
    if (m < 0.5) return "small";
    if (m < 0.8) return "medium";
    if (m < 1.2) return "large";
    return "very large";
}

} // namespace fata::stats
