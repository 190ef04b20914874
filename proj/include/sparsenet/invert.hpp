#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "sparsenet/netstack.hpp"

namespace sparsenet {

struct InversionTask {
    const Model* model = nullptr;  // frozen; never mutated
    Tensor3 target;                // recorded final-stage output
    Tensor3 init_image;            // empty = seeded random init
    uint64_t seed = 0;
    int steps = 200;
    real step_size = 1.0;  // initial; backtracking halves as needed
    real min_step = 1e-10;
};

struct InversionResult {
    Tensor3 image;
    std::vector<real> loss_trace;
    bool zero_gradient = false;  // gradient vanished at init even after re-seed
};

/// Final-stage feature maps for an input (forward only, no classifier).
inline Tensor3 feature_maps(const Model& model, const Tensor3& image) {
    Tensor3 cur = image;
    for (const auto& stage : model.stages) {
        StageCache c;
        stage_forward(stage, cur, c);
        cur = c.output;
    }
    return cur;
}

namespace detail {

/// Loss ||F(img) - target||^2 and its gradient w.r.t. the input image.
inline std::pair<real, Tensor3> inversion_loss_grad(const Model& model, const Tensor3& image,
                                                    const Tensor3& target) {
    std::vector<StageCache> caches(model.stages.size());
    const Tensor3* cur = &image;
    for (size_t s = 0; s < model.stages.size(); ++s) {
        stage_forward(model.stages[s], *cur, caches[s]);
        cur = &caches[s].output;
    }
    if (!cur->same_shape(target)) throw dimension_error("inversion: target shape mismatch");
    real loss = 0;
    Tensor3 g = *cur;
    for (size_t i = 0; i < g.data.size(); ++i) {
        real d = cur->data[i] - target.data[i];
        loss += d * d;
        g.data[i] = 2.0 * d;
    }
    std::vector<real> unused_vec;
    for (size_t s = model.stages.size(); s-- > 0;) {
        StageGrads pg;
        g = stage_backward(model.stages[s], caches[s], g, unused_vec, pg);
    }
    return {loss, g};
}

}  // namespace detail

inline Tensor3 random_init_image(int maps, int h, int w, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<real> nd(0.0, 0.1);
    Tensor3 img(maps, h, w);
    for (auto& v : img.data) v = nd(rng);
    return img;
}

/// Steepest descent in input space with Armijo backtracking (factor 0.5);
/// the loss trace is non-increasing by construction.
inline InversionResult hallucinate(const InversionTask& task) {
    const Model& model = *task.model;
    Tensor3 img = task.init_image.size() > 0
                      ? task.init_image
                      : random_init_image(model.in_maps, model.in_h, model.in_w, task.seed);
    InversionResult res;
    auto [loss, grad] = detail::inversion_loss_grad(model, img, task.target);
    real gnorm = std::sqrt(sq_norm(grad));
    if (gnorm == 0 && task.init_image.size() == 0) {
        img = random_init_image(model.in_maps, model.in_h, model.in_w, task.seed + 1);
        std::tie(loss, grad) = detail::inversion_loss_grad(model, img, task.target);
        gnorm = std::sqrt(sq_norm(grad));
        if (gnorm == 0) res.zero_gradient = true;
    }
    res.loss_trace.push_back(loss);
    real step = task.step_size;
    for (int it = 0; it < task.steps && gnorm > 0 && loss > 0; ++it) {
        bool accepted = false;
        while (step >= task.min_step) {
            Tensor3 cand = img;
            for (size_t i = 0; i < cand.data.size(); ++i) cand.data[i] -= step * grad.data[i];
            auto [cand_loss, cand_grad] = detail::inversion_loss_grad(model, cand, task.target);
            // Armijo sufficient decrease
            if (cand_loss <= loss - 1e-4 * step * gnorm * gnorm) {
                img = std::move(cand);
                loss = cand_loss;
                grad = std::move(cand_grad);
                gnorm = std::sqrt(sq_norm(grad));
                accepted = true;
                step *= 2.0;  // allow recovery after shrinking
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;
        res.loss_trace.push_back(loss);
    }
    res.image = std::move(img);
    return res;
}

}  // namespace sparsenet
