#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "sparsenet/contrast_norm.hpp"

using namespace sparsenet;

namespace {

Tensor3 random_tensor(int m, int h, int w, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<real> uni(-1.0, 1.0);
    Tensor3 t(m, h, w);
    for (auto& v : t.data) v = uni(rng);
    return t;
}

// scalar objective for finite-difference checks
real probe(const Tensor3& t, const Tensor3& w) { return dot(t, w); }

}  // namespace

TEST_CASE("subtractive norm removes a constant offset exactly") {
    // [DERIVED] weights are renormalized per pixel, so a constant image has
    // local mean equal to that constant everywhere, including the border
    NormConfig cfg;
    cfg.window = 5;
    Tensor3 t(3, 9, 9);
    t.fill(2.5);
    Tensor3 o = subtractive_norm(t, cfg);
    for (real v : o.data) CHECK(v == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("subtractive norm is invariant to adding a constant") {
    NormConfig cfg;
    cfg.window = 5;
    Tensor3 t = random_tensor(2, 8, 8, 3);
    Tensor3 shifted = t;
    for (auto& v : shifted.data) v += 7.0;
    Tensor3 a = subtractive_norm(t, cfg);
    Tensor3 b = subtractive_norm(shifted, cfg);
    for (size_t i = 0; i < a.data.size(); ++i) CHECK(a.data[i] == Catch::Approx(b.data[i]).margin(1e-10));
}

TEST_CASE("subtractive norm output has zero weighted local mean at the center") {
    // spot check: joint local average of the output, evaluated away from the
    // border, is much smaller than the input scale
    NormConfig cfg;
    cfg.window = 5;
    Tensor3 t = random_tensor(2, 11, 11, 4);
    Tensor3 o = subtractive_norm(t, cfg);
    auto mean = detail::joint_local_average(o, cfg, [](real v) { return v; });
    // interior pixels only; subtracting a smoothed field leaves a small residual
    real worst = 0;
    for (int i = 3; i < 8; ++i)
        for (int j = 3; j < 8; ++j) worst = std::max(worst, std::abs(mean[size_t(i) * 11 + j]));
    CHECK(worst < 0.2);
}

TEST_CASE("divisive norm yields unit-scale local variability") {
    NormConfig cfg;
    cfg.window = 5;
    cfg.floor_mode = FloorMode::FixedConstant;
    cfg.floor_constant = 1e-6;
    Tensor3 t = random_tensor(1, 9, 9, 5);
    for (auto& v : t.data) v *= 10.0;  // large scale so sigma > floor everywhere
    DivisiveCache cache;
    Tensor3 o = divisive_norm(t, cfg, &cache);
    // [DERIVED] out = t / max(sigma, floor); with sigma live, local second
    // moment of the output around each divisor is 1 by construction at the
    // pixel where sigma was computed from the same window -- check directly
    for (int i = 0; i < 9; ++i)
        for (int j = 0; j < 9; ++j) {
            real sig = cache.sigma_local[size_t(i) * 9 + j];
            CHECK(sig > cfg.floor_constant);
            CHECK(o.at(0, i, j) == Catch::Approx(t.at(0, i, j) / sig).epsilon(1e-12));
        }
}

TEST_CASE("divisive norm floor prevents amplification of faint regions") {
    NormConfig cfg;
    cfg.window = 5;
    cfg.floor_mode = FloorMode::PerImageMeanSigma;
    Tensor3 t = random_tensor(1, 9, 9, 6);
    // one faint corner
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) t.at(0, i, j) *= 1e-4;
    DivisiveCache cache;
    Tensor3 o = divisive_norm(t, cfg, &cache);
    // faint pixels divided by the floor, not their tiny sigma
    CHECK(std::abs(o.at(0, 1, 1)) <= std::abs(t.at(0, 1, 1)) / cache.floor + 1e-12);
    CHECK(cache.floor > 0);
}

TEST_CASE("subtractive norm backward matches finite differences") {
    NormConfig cfg;
    cfg.window = 5;
    Tensor3 t = random_tensor(2, 7, 7, 7);
    Tensor3 w = random_tensor(2, 7, 7, 8);
    Tensor3 g = subtractive_norm_grad(w, cfg);
    real eps = 1e-6;
    std::mt19937_64 rng(9);
    std::uniform_int_distribution<size_t> pick(0, t.data.size() - 1);
    for (int trial = 0; trial < 20; ++trial) {
        size_t i = pick(rng);
        Tensor3 tp = t, tm = t;
        tp.data[i] += eps;
        tm.data[i] -= eps;
        real fd = (probe(subtractive_norm(tp, cfg), w) - probe(subtractive_norm(tm, cfg), w)) / (2 * eps);
        CHECK(g.data[i] == Catch::Approx(fd).margin(1e-6));
    }
}

TEST_CASE("divisive norm backward matches finite differences") {
    NormConfig cfg;
    cfg.window = 5;
    Tensor3 w = random_tensor(2, 7, 7, 11);
    SECTION("fixed floor") {
        cfg.floor_mode = FloorMode::FixedConstant;
        cfg.floor_constant = 0.05;
        Tensor3 t = random_tensor(2, 7, 7, 10);
        DivisiveCache cache;
        Tensor3 o = divisive_norm(t, cfg, &cache);
        (void)o;
        Tensor3 g = divisive_norm_grad(t, cfg, cache, w);
        real eps = 1e-6;
        std::mt19937_64 rng(12);
        std::uniform_int_distribution<size_t> pick(0, t.data.size() - 1);
        for (int trial = 0; trial < 20; ++trial) {
            size_t i = pick(rng);
            Tensor3 tp = t, tm = t;
            tp.data[i] += eps;
            tm.data[i] -= eps;
            real fd = (probe(divisive_norm(tp, cfg), w) - probe(divisive_norm(tm, cfg), w)) / (2 * eps);
            REQUIRE(std::abs(g.data[i] - fd) / std::max(std::abs(fd), real(1e-4)) < 1e-4);
        }
    }
    SECTION("per-image mean floor") {
        cfg.floor_mode = FloorMode::PerImageMeanSigma;
        // scale up so no pixel sits exactly at the floor switch
        Tensor3 t = random_tensor(2, 7, 7, 13);
        DivisiveCache cache;
        divisive_norm(t, cfg, &cache);
        Tensor3 g = divisive_norm_grad(t, cfg, cache, w);
        real eps = 1e-7;
        std::mt19937_64 rng(14);
        std::uniform_int_distribution<size_t> pick(0, t.data.size() - 1);
        for (int trial = 0; trial < 20; ++trial) {
            size_t i = pick(rng);
            Tensor3 tp = t, tm = t;
            tp.data[i] += eps;
            tm.data[i] -= eps;
            real fd = (probe(divisive_norm(tp, cfg), w) - probe(divisive_norm(tm, cfg), w)) / (2 * eps);
            REQUIRE(std::abs(g.data[i] - fd) / std::max(std::abs(fd), real(1e-3)) < 1e-3);
        }
    }
}

TEST_CASE("valid-mode contrast normalization crops the border") {
    NormConfig cfg;
    cfg.window = 9;
    Tensor3 t = random_tensor(1, 151, 151, 15);
    Tensor3 o = local_cn_valid(t, cfg);
    // [DERIVED] 151 - 2*(9/2) = 143
    CHECK(o.maps == 1);
    CHECK(o.height == 143);
    CHECK(o.width == 143);
    Tensor3 full = local_cn(t, cfg);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) CHECK(o.at(0, i, j) == full.at(0, i + 4, j + 4));
}

TEST_CASE("norm config validation") {
    NormConfig cfg;
    Tensor3 t = random_tensor(1, 9, 9, 16);
    cfg.window = 4;
    CHECK_THROWS_AS(subtractive_norm(t, cfg), parameter_error);
    cfg.window = 9;
    cfg.sigma = 0;
    CHECK_THROWS_AS(subtractive_norm(t, cfg), parameter_error);
    cfg.sigma = 1.6;
    cfg.window = 11;
    CHECK_THROWS_AS(subtractive_norm(t, cfg), dimension_error);
}

TEST_CASE("all-zero input does not produce NaN") {
    NormConfig cfg;
    cfg.window = 5;
    Tensor3 t(2, 7, 7);
    Tensor3 o = local_cn(t, cfg);
    for (real v : o.data) CHECK(v == 0.0);
}
