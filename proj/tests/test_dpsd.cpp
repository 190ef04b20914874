#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "sparsenet/dpsd.hpp"

using namespace sparsenet;

namespace {

// synthetic sparse-dictionary data: samples are sparse combinations of a
// ground-truth dictionary plus light noise
std::vector<std::vector<real>> synthetic_samples(int m, int n_atoms, int count, uint64_t seed,
                                                 std::vector<int>* labels = nullptr) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<real> nd(0.0, 1.0);
    std::uniform_int_distribution<int> atom(0, n_atoms - 1);
    std::uniform_real_distribution<real> coef(0.5, 1.5);
    Matrix D(m, n_atoms);
    for (auto& v : D.a) v = nd(rng);
    normalize_columns(D);
    std::vector<std::vector<real>> out;
    for (int c = 0; c < count; ++c) {
        std::vector<real> x(size_t(m), 0.0);
        int a1 = atom(rng), a2 = atom(rng);
        real c1 = coef(rng), c2 = coef(rng);
        for (int i = 0; i < m; ++i)
            x[size_t(i)] = c1 * D.at(i, a1) + c2 * D.at(i, a2) + 0.01 * nd(rng);
        out.push_back(std::move(x));
        if (labels) labels->push_back(a1 % 2);
    }
    return out;
}

std::vector<Tensor3> synthetic_regions(int maps, int side, int count, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<real> nd(0.0, 0.5);
    std::vector<Tensor3> out;
    for (int c = 0; c < count; ++c) {
        Tensor3 t(maps, side, side);
        // oriented stripes of random phase so codes have structure
        std::uniform_int_distribution<int> ph(0, 3);
        int phase = ph(rng);
        for (int m = 0; m < maps; ++m)
            for (int i = 0; i < side; ++i)
                for (int j = 0; j < side; ++j)
                    t.at(m, i, j) = std::sin(0.7 * (i + j) + phase) + 0.1 * nd(rng);
        out.push_back(std::move(t));
    }
    return out;
}

}  // namespace

TEST_CASE("patch DPSD keeps dictionary columns unit norm") {
    auto samples = synthetic_samples(16, 8, 80, 1);
    DpsdConfig cfg;
    cfg.n = 8;
    cfg.niter = 2;
    cfg.seed = 2;
    TrainStats stats;
    auto model = dpsd_train(samples, {}, cfg, &stats);
    for (int j = 0; j < model.D.cols; ++j) {
        real s = 0;
        for (int i = 0; i < model.D.rows; ++i) s += model.D.at(i, j) * model.D.at(i, j);
        CHECK(std::sqrt(s) == Catch::Approx(1.0).margin(1e-10));
    }
}

TEST_CASE("patch DPSD reduces the encoder prediction error over epochs") {
    auto samples = synthetic_samples(16, 8, 150, 3);
    DpsdConfig cfg;
    cfg.n = 8;
    cfg.niter = 4;
    cfg.seed = 4;
    TrainStats stats;
    dpsd_train(samples, {}, cfg, &stats);
    REQUIRE(stats.epoch_encoder_mse.size() == 4);
    CHECK(stats.epoch_encoder_mse.back() < stats.epoch_encoder_mse.front());
}

TEST_CASE("patch DPSD improves the sparse-coding objective versus the random init") {
    auto samples = synthetic_samples(16, 10, 200, 5);
    DpsdConfig cfg;
    cfg.n = 10;
    cfg.niter = 3;
    cfg.seed = 6;
    TrainStats stats;
    dpsd_train(samples, {}, cfg, &stats);
    REQUIRE(stats.epoch_objective.size() == 3);
    CHECK(stats.epoch_objective.back() < stats.epoch_objective.front());
}

TEST_CASE("discriminative DPSD trains the discriminant jointly") {
    std::vector<int> labels;
    auto samples = synthetic_samples(12, 6, 120, 7, &labels);
    DpsdConfig cfg;
    cfg.discriminative = true;
    cfg.n = 6;
    cfg.n_classes = 2;
    cfg.niter = 2;
    cfg.seed = 8;
    TrainStats stats;
    auto model = dpsd_train(samples, labels, cfg, &stats);
    CHECK(model.theta.u.rows == 2);
    CHECK(model.theta.u.cols == 6);
    // theta moved away from its tiny random init
    real norm = 0;
    for (real v : model.theta.u.a) norm += v * v;
    CHECK(norm > 1e-4);
    // missing labels rejected
    CHECK_THROWS_AS(dpsd_train(samples, {}, cfg, nullptr), parameter_error);
}

TEST_CASE("mask restricts dictionary and encoder support") {
    int m = 12, n = 4;
    Matrix mask(n, m);
    // each code unit sees only one third of the input dims
    for (int k = 0; k < n; ++k)
        for (int j = 0; j < m; ++j)
            if (j % n == k) mask.at(k, j) = 1.0;
    auto samples = synthetic_samples(m, 6, 60, 9);
    DpsdConfig cfg;
    cfg.n = n;
    cfg.niter = 2;
    cfg.seed = 10;
    auto model = dpsd_train(samples, {}, cfg, nullptr, mask);
    for (int k = 0; k < n; ++k)
        for (int j = 0; j < m; ++j)
            if (mask.at(k, j) == 0) {
                CHECK(model.D.at(j, k) == 0.0);
                CHECK(model.si.W.at(k, j) == 0.0);
            }
}

TEST_CASE("tanh-encoder DPSD works end to end") {
    auto samples = synthetic_samples(10, 5, 80, 11);
    DpsdConfig cfg;
    cfg.encoder = EncoderKind::Tanh;
    cfg.n = 5;
    cfg.niter = 2;
    cfg.seed = 12;
    TrainStats stats;
    auto model = dpsd_train(samples, {}, cfg, &stats);
    CHECK(model.kind == EncoderKind::Tanh);
    CHECK(stats.epoch_encoder_mse.back() <= stats.epoch_encoder_mse.front());
    auto z = model.predict(samples.front());
    CHECK(z.size() == 5);
}

TEST_CASE("conv smooth term gradient matches finite differences") {
    std::mt19937_64 rng(13);
    ConnectionTable wiring;
    for (int p = 0; p < 3; ++p)
        for (int q = 0; q < 2; ++q) wiring.entries.push_back({p, q});  // code p -> channel q
    KernelBank dec = random_kernel_bank(wiring, 3, rng);
    Tensor3 x(2, 6, 6);
    std::normal_distribution<real> nd(0.0, 1.0);
    for (auto& v : x.data) v = nd(rng);
    ConvSmoothTerm H;
    H.x = &x;
    H.decoder = &dec;
    H.n_code = 3;
    H.code_h = 4;
    H.code_w = 4;
    std::vector<real> z(3 * 4 * 4);
    for (auto& v : z) v = nd(rng);
    auto g = H.grad(z);
    real eps = 1e-6;
    for (size_t k = 0; k < z.size(); k += 5) {
        auto zp = z, zm = z;
        zp[k] += eps;
        zm[k] -= eps;
        real fd = (H.value(zp) - H.value(zm)) / (2 * eps);
        CHECK(g[k] == Catch::Approx(fd).margin(1e-5));
    }
}

TEST_CASE("convolutional DPSD keeps decoder kernels unit norm and trains the encoder") {
    auto regions = synthetic_regions(1, 8, 40, 14);
    ConnectionTable wiring;
    for (int p = 0; p < 4; ++p) wiring.entries.push_back({0, p});
    DpsdConfig cfg;
    cfg.convolutional = true;
    cfg.n = 4;
    cfg.niter = 2;
    cfg.seed = 15;
    cfg.solve.max_iter = 60;
    TrainStats stats;
    auto model = conv_dpsd_train(regions, {}, cfg, wiring, 5, &stats);
    for (const auto& ker : model.decoder.kernels) {
        real s = 0;
        for (real v : ker.w) s += v * v;
        CHECK(std::sqrt(s) == Catch::Approx(1.0).margin(1e-10));
    }
    REQUIRE(stats.epoch_encoder_mse.size() == 2);
    CHECK(stats.epoch_encoder_mse.back() < stats.epoch_encoder_mse.front());
    Tensor3 z = model.predict(regions.front());
    CHECK(z.maps == 4);
    CHECK(z.height == 4);
    CHECK(z.width == 4);
}

TEST_CASE("dpsd config validation") {
    DpsdConfig cfg;
    cfg.n = 0;
    CHECK_THROWS_AS(cfg.validate(), parameter_error);
    cfg.n = 4;
    cfg.lr_dict = 0;
    CHECK_THROWS_AS(cfg.validate(), parameter_error);
    cfg = DpsdConfig{};
    cfg.n = 4;
    CHECK_THROWS_AS(dpsd_train({}, {}, cfg), parameter_error);
}
