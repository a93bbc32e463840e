#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <boost/multiprecision/cpp_dec_float.hpp>

#include "fata/error.hpp"
#include "fata/stats.hpp"
#include "published_values.hpp"

#include "oracles.hpp"

using namespace fata;
using namespace fata::test;
using namespace fata::stats;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return ErrorCode::IoError;
}


} // namespace

TEST_CASE("improvement examples") {
    CHECK(round_to(mean_improvement(5.95, 8.55), 1) == 43.7);
    CHECK(round_to(mean_improvement(6.01, 8.86), 1) == 47.4);
    CHECK(mean_improvement(7.0, 7.0) == 0.0);
    CHECK(code_of([] { mean_improvement(0.0, 1.0); }) == ErrorCode::NonPositiveBaseline);
    CHECK(code_of([] { mean_improvement(-1.0, 1.0); }) == ErrorCode::NonPositiveBaseline);
}

TEST_CASE("improvement identity") {
    std::mt19937 rng(1);
    std::uniform_real_distribution<double> u(0.5, 10.0);
    for (int i = 0; i < 1000; ++i) {
        double b = u(rng), t = u(rng);
        CHECK(b * (1 + mean_improvement(b, t) / 100) == doctest::Approx(t).epsilon(1e-12));
    }
}

TEST_CASE("published improvement cells") {
    for (const auto& row : test::kOverall) {
        double vs_c = mean_improvement(row.c, row.f);
        CHECK_MESSAGE(std::abs(vs_c - row.vs_c) <= 0.1 + 1e-9, row.model);
    }
    CHECK(std::abs(mean_improvement(5.95, 8.55) - 43.7) <= 0.1);
    CHECK(std::abs(mean_improvement(6.01, 8.86) - 47.4) <= 0.1);
    // (8.56 - 6.71) / 6.71 = 27.57 %, which the table prints as +27.7 %.
    CHECK(round_to(mean_improvement(6.71, 8.56), 1) == 27.6);
    CHECK(std::abs(mean_improvement(test::kAverageB, test::kAverageF) - test::kAverageVsB) <= 0.1);
    CHECK(std::abs(mean_improvement(test::kAverageC, test::kAverageF) - test::kAverageVsC) <= 0.1);
}

TEST_CASE("paired t-test examples") {
    CHECK(code_of([] { paired_t_test({{}, {1, 2, 3}, {2, 3, 4}}); }) == ErrorCode::DegenerateSample);
    auto z = paired_t_test({{}, {1, 2}, {2, 1}});
    CHECK(z.t == 0.0);
    CHECK(z.p == 1.0);
    CHECK(z.df == 1);
    CHECK(code_of([] { paired_t_test({{}, {1}, {2}}); }) == ErrorCode::TooFewPoints);
    CHECK(code_of([] { paired_t_test({{}, {1, 2}, {2}}); }) == ErrorCode::ValidationError);
}

TEST_CASE("paired t-test against a 50-digit reference on 100 random samples") {
    std::mt19937 rng(20251014);
    std::uniform_int_distribution<int> size(10, 30);
    std::uniform_real_distribution<double> score(3.0, 10.0), shift(-1.5, 1.5);
    double worst_t = 0, worst_d = 0, worst_p = 0;
    for (int trial = 0; trial < 100; ++trial) {
        int n = size(rng);
        double delta = shift(rng);
        PairedSample s;
        for (int i = 0; i < n; ++i) {
            double base = score(rng);
            s.x.push_back(base);
            s.y.push_back(base + delta + std::normal_distribution<double>(0, 0.8)(rng));
        }
        auto r = paired_t_test(s);
        auto ref = reference_t_test(s.x, s.y);
        CHECK(r.df == n - 1);
        CHECK(r.n == static_cast<std::size_t>(n));
        worst_t = std::max(worst_t, std::abs(r.t - ref.t));
        worst_d = std::max(worst_d, std::abs(r.cohens_d - ref.d));
        worst_p = std::max(worst_p, std::abs(r.p - ref.p));
        CHECK(r.t == doctest::Approx(r.cohens_d * std::sqrt(static_cast<double>(n))).epsilon(1e-12));
    }
    CHECK(worst_t <= 1e-9);
    CHECK(worst_d <= 1e-9);
    CHECK(worst_p <= 1e-6);
}

TEST_CASE("t distribution tail against the critical value table") {
    CHECK(std::abs(t_sf(12.706, 1) - 0.05) <= 1e-3);
    CHECK(std::abs(t_sf(2.262, 9) - 0.05) <= 1e-3);
    CHECK(std::abs(t_sf(2.042, 30) - 0.05) <= 1e-3);
    CHECK(std::abs(t_sf(3.169, 10) - 0.01) <= 1e-3);
    CHECK(t_sf(0.0, 5) == 1.0);
    CHECK(code_of([] { t_sf(1.0, 0); }) == ErrorCode::ValidationError);
}

TEST_CASE("t distribution tail agrees with Boost and is monotone") {
    std::mt19937 rng(5);
    std::uniform_real_distribution<double> tv(-40, 40);
    std::uniform_int_distribution<int> dfv(1, 200);
    for (int i = 0; i < 2000; ++i) {
        double t = tv(rng);
        int df = dfv(rng);
        boost::math::students_t dist(df);
        double ref = 2 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
        double p = t_sf(t, df);
        CHECK(p >= 0.0);
        CHECK(p <= 1.0);
        CHECK(std::abs(p - ref) <= 1e-10 + 1e-8 * ref);
        CHECK(t_sf(-t, df) == p);
        CHECK(t_sf(std::abs(t) + 0.5, df) <= p);
    }
}

TEST_CASE("incomplete beta agrees with Boost") {
    std::mt19937 rng(9);
    std::uniform_real_distribution<double> ab(0.1, 60), xv(0, 1);
    for (int i = 0; i < 2000; ++i) {
        double a = ab(rng), b = ab(rng), x = xv(rng);
        CHECK(incomplete_beta(a, b, x) == doctest::Approx(boost::math::ibeta(a, b, x)).epsilon(1e-9));
    }
    CHECK(incomplete_beta(2, 3, 0) == 0.0);
    CHECK(incomplete_beta(2, 3, 1) == 1.0);
}

TEST_CASE("significance of the published C-Prompt comparison with 12 pairs") {
    // t = 1.512 with the 11 degrees of freedom implied by t / d = sqrt(12).
    CHECK(std::abs(1.512 / 0.437 - std::sqrt(12.0)) < 0.01);
    CHECK(std::abs(t_sf(1.512, 11) - 0.159) <= 1e-3);
}

TEST_CASE("effect size labels") {
    CHECK(effect_size_label(0.1) == "negligible");
    CHECK(effect_size_label(0.437) == "small");
    CHECK(effect_size_label(-0.682) == "medium");
    CHECK(effect_size_label(-1.076) == "large");
    CHECK(effect_size_label(-5.147) == "very large");
}

TEST_CASE("coefficient of variation") {
    std::vector<double> flat = {5, 5, 5, 5};
    CHECK(coefficient_of_variation(flat) == 0.0);
    std::vector<double> three = {8, 9, 10};
    CHECK(coefficient_of_variation(three) == doctest::Approx(1.0 / 9.0).epsilon(1e-15));
    std::vector<double> none;
    CHECK(code_of([&] { coefficient_of_variation(none); }) == ErrorCode::TooFewPoints);
    std::vector<double> neg = {-1, -2};
    CHECK(code_of([&] { coefficient_of_variation(neg); }) == ErrorCode::NonPositiveMean);

    std::mt19937 rng(3);
    std::uniform_real_distribution<double> u(1, 10), k(0.01, 100);
    for (int i = 0; i < 200; ++i) {
        std::vector<double> xs(5);
        for (auto& v : xs) v = u(rng);
        double scale = k(rng);
        auto scaled = xs;
        for (auto& v : scaled) v *= scale;
        CHECK(coefficient_of_variation(scaled) == doctest::Approx(coefficient_of_variation(xs)).epsilon(1e-12));
    }
}

TEST_CASE("stability rows") {
    std::vector<double> all_stable(9, 0.05);
    auto r = stability_row("FATA", all_stable);
    CHECK(r.stable_dimensions == 9);
    CHECK(r.stability_rate == 100.0);
    CHECK_FALSE(r.cv_reduction);
    std::vector<double> eight(8, 0.05);
    CHECK(code_of([&] { stability_row("x", eight); }) == ErrorCode::WrongDimensionCount);
    std::vector<double> edge(9, 0.10);
    CHECK(stability_row("x", edge).stable_dimensions == 9);
}

TEST_CASE("published stability cells from consistent per-dimension vectors") {
    for (const auto& ref : test::stability_refs()) {
        INFO(ref.model << " " << ref.method);
        REQUIRE(ref.cvs.size() == 9);
        std::optional<double> base;
        if (ref.reduction >= 0) base = ref.baseline_cv;
        auto row = stability_row(ref.method, ref.cvs, base);
        CHECK(row.mean_cv == doctest::Approx(ref.mean_cv).epsilon(1e-12));
        CHECK(row.stable_dimensions == ref.stable);
        CHECK(round_to(row.stability_rate, 1) == ref.rate);
        if (ref.reduction >= 0) {
            REQUIRE(row.cv_reduction);
            CHECK(round_to(*row.cv_reduction, 1) == ref.reduction);
        }
    }
}

TEST_CASE("kendall tau equals the brute force count on 1000 random rankings") {
    for (unsigned seed = 0; seed < 1000; ++seed) {
        std::mt19937 rng(seed);
        int n = 2 + static_cast<int>(seed % 7);
        std::vector<double> a(n), b(n);
        for (int i = 0; i < n; ++i) a[i] = b[i] = i + 1;
        std::shuffle(a.begin(), a.end(), rng);
        std::shuffle(b.begin(), b.end(), rng);
        CHECK(kendall_tau(a, b) == brute_tau(a, b));
    }
}

TEST_CASE("kendall tau-b with ties matches the brute force count") {
    std::mt19937 rng(77);
    std::uniform_int_distribution<int> v(1, 4);
    for (int trial = 0; trial < 500; ++trial) {
        int n = 3 + trial % 6;
        std::vector<double> a(n), b(n);
        for (int i = 0; i < n; ++i) {
            a[i] = v(rng);
            b[i] = v(rng);
        }
        double expect = brute_tau(a, b);
        double got = kendall_tau(a, b);
        if (std::isnan(expect)) {
            CHECK(std::isnan(got));
        } else {
            CHECK(got == doctest::Approx(expect).epsilon(1e-14));
        }
    }
}

TEST_CASE("kendall tau properties") {
    std::mt19937 rng(8);
    for (int n = 2; n <= 12; ++n) {
        std::vector<double> id(n);
        for (int i = 0; i < n; ++i) id[i] = i;
        CHECK(kendall_tau(id, id) == 1.0);
        auto rev = id;
        std::reverse(rev.begin(), rev.end());
        CHECK(kendall_tau(id, rev) == -1.0);
        for (int k = 0; k + 1 < n; ++k) {
            auto swapped = id;
            std::swap(swapped[k], swapped[k + 1]);
            CHECK(kendall_tau(id, swapped) == doctest::Approx(1.0 - 4.0 / (n * (n - 1))).epsilon(1e-14));
        }
        auto a = id, b = id;
        std::shuffle(a.begin(), a.end(), rng);
        std::shuffle(b.begin(), b.end(), rng);
        CHECK(kendall_tau(a, b) == kendall_tau(b, a));
    }
    std::vector<double> one = {1};
    CHECK(code_of([&] { kendall_tau(one, one); }) == ErrorCode::TooFewPoints);
    std::vector<double> two = {1, 2}, three = {1, 2, 3};
    CHECK(code_of([&] { kendall_tau(two, three); }) == ErrorCode::ItemMismatch);
    std::vector<double> flat = {1, 1, 1};
    CHECK(std::isnan(kendall_tau(flat, three)));

    std::map<std::string, double> ma{{"a", 1}, {"b", 2}, {"c", 3}}, mb{{"a", 3}, {"b", 2}, {"c", 1}}, mc{{"a", 1}, {"b", 2}};
    CHECK(kendall_tau(ma, mb) == -1.0);
    CHECK(code_of([&] { kendall_tau(ma, mc); }) == ErrorCode::ItemMismatch);
}

TEST_CASE("display helpers") {
    CHECK(round_to(2.25, 1) == 2.3);
    CHECK(round_to(-2.25, 1) == -2.3);
    CHECK(round_to(60.0299, 1) == 60.0);
    CHECK(format_fixed(8.555, 2) == "8.56");
    CHECK(format_fixed(-0.0001, 2) == "0.00");
    CHECK(format_fixed(std::numeric_limits<double>::quiet_NaN(), 3) == "n/a");
    CHECK(format_percent(43.697) == "+43.7%");
    CHECK(format_percent(-2.04) == "-2.0%");
}
