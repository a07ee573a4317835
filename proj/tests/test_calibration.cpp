#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "helpers.hpp"
#include "oracles.hpp"
#include "riskstab/calibration.hpp"
#include "riskstab/rng.hpp"

using namespace riskstab;

TEST_CASE("already isotonic labels are reproduced exactly") {
    auto model = fit_isotonic({0.1, 0.2, 0.3}, std::vector<int>{0, 1, 1});
    CHECK(apply_isotonic(model, 0.1) == 0.0);
    CHECK(apply_isotonic(model, 0.2) == 1.0);
    CHECK(apply_isotonic(model, 0.3) == 1.0);
}

TEST_CASE("a violating middle label pools into a half block") {
    auto model = fit_isotonic({0.1, 0.2, 0.3}, std::vector<int>{0, 1, 0});
    CHECK(apply_isotonic(model, 0.1) == 0.0);
    CHECK(apply_isotonic(model, 0.2) == 0.5);
    CHECK(apply_isotonic(model, 0.3) == 0.5);
    // Step function: the pooled value applies through the block's interval.
    CHECK(apply_isotonic(model, 0.25) == 0.5);
    // And matches the exhaustive minimizer on n=3.
    auto brute = oracles::isotonic_brute_force({0.0, 1.0, 0.0});
    CHECK(brute[0] == 0.0);
    CHECK(brute[1] == 0.5);
    CHECK(brute[2] == 0.5);
}

TEST_CASE("constant labels give a constant fit") {
    auto model = fit_isotonic({0.5, 0.1, 0.9}, std::vector<int>{1, 1, 1});
    for (double q : {-1.0, 0.0, 0.5, 2.0}) CHECK(apply_isotonic(model, q) == 1.0);
}

TEST_CASE("extrapolation is constant beyond the knots") {
    auto model = fit_isotonic({0.2, 0.4, 0.6}, std::vector<int>{0, 1, 1});
    CHECK(apply_isotonic(model, -5.0) == model.knot_values.front());
    CHECK(apply_isotonic(model, 0.2) == model.knot_values.front());
    CHECK(apply_isotonic(model, 99.0) == model.knot_values.back());
}

TEST_CASE("empty input is rejected") {
    CHECK_THROWS_AS(fit_isotonic(std::vector<double>{}, std::vector<int>{}),
                    ConfigError);
}

TEST_CASE("fit matches the brute-force minimizer on random small instances") {
    Rng rng(77);
    for (int trial = 0; trial < 300; ++trial) {
        const int n = 2 + static_cast<int>(rng.next_below(7));
        std::vector<double> scores, targets;
        for (int i = 0; i < n; ++i) {
            scores.push_back(static_cast<double>(i));  // ascending, distinct
            targets.push_back(rng.next_bernoulli(0.5) ? 1.0 : 0.0);
        }
        auto model = fit_isotonic(scores, targets);
        auto brute = oracles::isotonic_brute_force(targets);
        for (int i = 0; i < n; ++i)
            REQUIRE(std::abs(apply_isotonic(model, scores[i]) - brute[i]) < 1e-9);
    }
}

TEST_CASE("monotonicity and mean preservation on random instances") {
    Rng rng(78);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 1 + static_cast<int>(rng.next_below(60));
        std::vector<double> scores;
        std::vector<int> labels;
        for (int i = 0; i < n; ++i) {
            // Coarse grid forces score ties.
            scores.push_back(static_cast<double>(rng.next_below(10)) / 10.0);
            labels.push_back(rng.next_bernoulli(0.3) ? 1 : 0);
        }
        auto model = fit_isotonic(scores, labels);
        // Monotone in the query.
        for (int q = 0; q < 20; ++q) {
            const double a = rng.next_uniform(-0.5, 1.5);
            const double b = rng.next_uniform(-0.5, 1.5);
            const double fa = apply_isotonic(model, std::min(a, b));
            const double fb = apply_isotonic(model, std::max(a, b));
            REQUIRE(fa <= fb);
        }
        // Mean of fitted values over the training points equals the label mean.
        double fit_sum = 0.0, label_sum = 0.0;
        for (int i = 0; i < n; ++i) {
            fit_sum += apply_isotonic(model, scores[i]);
            label_sum += labels[i];
        }
        REQUIRE(std::abs(fit_sum - label_sum) / static_cast<double>(n) < 1e-12);
    }
}

TEST_CASE("refitting on the fitted values returns the same function") {
    Rng rng(79);
    std::vector<double> scores;
    std::vector<int> labels;
    for (int i = 0; i < 40; ++i) {
        scores.push_back(rng.next_double());
        labels.push_back(rng.next_bernoulli(0.4) ? 1 : 0);
    }
    auto first = fit_isotonic(scores, labels);
    std::vector<double> fitted;
    for (double s : scores) fitted.push_back(apply_isotonic(first, s));
    auto second = fit_isotonic(scores, fitted);
    for (int q = 0; q < 200; ++q) {
        const double s = rng.next_uniform(-0.2, 1.2);
        REQUIRE(apply_isotonic(first, s) == apply_isotonic(second, s));
    }
}

TEST_CASE("calibrator CSV round trip") {
    auto model = fit_isotonic({0.1, 0.2, 0.3, 0.7}, std::vector<int>{0, 1, 0, 1});
    auto dir = helpers::temp_dir("calibrator_io");
    save_isotonic(model, dir / "cal.csv");
    auto loaded = load_isotonic(dir / "cal.csv");
    CHECK(loaded.knot_scores == model.knot_scores);
    CHECK(loaded.knot_values == model.knot_values);
}
