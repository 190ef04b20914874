#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "sparsenet/invert.hpp"

using namespace sparsenet;

namespace {

Tensor3 random_tensor(int m, int h, int w, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<real> nd(0.0, 1.0);
    Tensor3 t(m, h, w);
    for (auto& v : t.data) v = nd(rng);
    return t;
}

Model tiny_model(uint64_t seed, NormPlacement norm) {
    StageConfig s1;
    s1.encoder = EncoderKind::Si;
    s1.n_out = 3;
    s1.kernel = 3;
    s1.norm = norm;
    s1.norm_cfg.window = 3;
    s1.norm_cfg.floor_mode = FloorMode::FixedConstant;
    s1.norm_cfg.floor_constant = 0.1;
    s1.pool = PoolSpec{PoolKind::Avg, 2, 2};
    return build_model({s1}, 1, 11, 11, 2, seed);
}

}  // namespace

TEST_CASE("inversion loss trace is non-increasing") {
    Model model = tiny_model(1, NormPlacement::BeforePool);
    Tensor3 target_img = random_tensor(1, 11, 11, 2);
    InversionTask task;
    task.model = &model;
    task.target = feature_maps(model, target_img);
    task.seed = 3;
    task.steps = 60;
    InversionResult res = hallucinate(task);
    REQUIRE(res.loss_trace.size() >= 2);
    for (size_t i = 1; i < res.loss_trace.size(); ++i)
        CHECK(res.loss_trace[i] <= res.loss_trace[i - 1] + 1e-12);
    CHECK(res.loss_trace.back() < res.loss_trace.front());
}

TEST_CASE("inversion recovers features, not necessarily pixels") {
    Model model = tiny_model(4, NormPlacement::None);
    Tensor3 target_img = random_tensor(1, 11, 11, 5);
    Tensor3 target = feature_maps(model, target_img);
    InversionTask task;
    task.model = &model;
    task.target = target;
    task.seed = 6;
    task.steps = 300;
    InversionResult res = hallucinate(task);
    Tensor3 achieved = feature_maps(model, res.image);
    real num = 0, den = 0;
    for (size_t i = 0; i < target.data.size(); ++i) {
        real d = achieved.data[i] - target.data[i];
        num += d * d;
        den += target.data[i] * target.data[i];
    }
    CHECK(num / std::max(den, real(1e-12)) < 0.5);  // big reduction from random init
}

TEST_CASE("inversion starting at the true image stays there") {
    Model model = tiny_model(7, NormPlacement::BeforePool);
    Tensor3 target_img = random_tensor(1, 11, 11, 8);
    InversionTask task;
    task.model = &model;
    task.target = feature_maps(model, target_img);
    task.init_image = target_img;
    task.steps = 10;
    InversionResult res = hallucinate(task);
    CHECK(res.loss_trace.front() == Catch::Approx(0.0).margin(1e-20));
    for (size_t i = 0; i < res.image.data.size(); ++i)
        CHECK(res.image.data[i] == target_img.data[i]);
}

TEST_CASE("inversion rejects a wrong-shape target") {
    Model model = tiny_model(9, NormPlacement::None);
    InversionTask task;
    task.model = &model;
    task.target = Tensor3(3, 2, 2);  // wrong spatial dims
    task.seed = 10;
    CHECK_THROWS_AS(hallucinate(task), dimension_error);
}
