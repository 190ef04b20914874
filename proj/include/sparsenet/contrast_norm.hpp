#pragma once

#include <cmath>
#include <vector>

#include "sparsenet/tensor.hpp"

namespace sparsenet {

enum class FloorMode { PerImageMeanSigma, FixedConstant };

struct NormConfig {
    int window = 9;
    real sigma = 1.6;
    FloorMode floor_mode = FloorMode::PerImageMeanSigma;
    real floor_constant = 1.0;

    void validate() const {
        if (window < 3 || window % 2 == 0) throw parameter_error("norm: window must be odd and >= 3");
        if (sigma <= 0) throw parameter_error("norm: sigma must be positive");
        if (floor_mode == FloorMode::FixedConstant && floor_constant <= 0)
            throw parameter_error("norm: floor constant must be positive");
    }
};

namespace detail {

inline std::vector<real> gaussian_window(int window, real sigma) {
    std::vector<real> w(size_t(window) * window);
    int mid = window / 2;
    for (int i = 0; i < window; ++i) {
        for (int j = 0; j < window; ++j) {
            real di = i - mid, dj = j - mid;
            w[size_t(i) * window + j] = std::exp(-(di * di + dj * dj) / (2 * sigma * sigma));
        }
    }
    return w;
}

// Weighted local mean of f over the window, jointly across all maps.
// Weights renormalized over in-bounds support so they always sum to 1.
// f maps a tensor value; out is maps-agnostic (height x width plane).
template <class F>
inline std::vector<real> joint_local_average(const Tensor3& t, const NormConfig& cfg, F f) {
    int win = cfg.window, mid = win / 2;
    auto g = gaussian_window(win, cfg.sigma);
    std::vector<real> out(size_t(t.height) * t.width, 0.0);
    for (int i = 0; i < t.height; ++i) {
        for (int j = 0; j < t.width; ++j) {
            real sum = 0, wsum = 0;
            for (int u = 0; u < win; ++u) {
                int ii = i + u - mid;
                if (ii < 0 || ii >= t.height) continue;
                for (int v = 0; v < win; ++v) {
                    int jj = j + v - mid;
                    if (jj < 0 || jj >= t.width) continue;
                    real w = g[size_t(u) * win + v];
                    wsum += w;
                    for (int m = 0; m < t.maps; ++m) sum += w * f(t.at(m, ii, jj));
                }
            }
            out[size_t(i) * t.width + j] = sum / (wsum * t.maps);
        }
    }
    return out;
}

// Adjoint of joint_local_average: scatter a per-pixel coefficient plane back
// to tensor entries with the same renormalized weights.
inline void joint_local_average_adjoint(const Tensor3& shape, const NormConfig& cfg,
                                        const std::vector<real>& coef, Tensor3& accum) {
    int win = cfg.window, mid = win / 2;
    auto g = gaussian_window(win, cfg.sigma);
    for (int i = 0; i < shape.height; ++i) {
        for (int j = 0; j < shape.width; ++j) {
            real c = coef[size_t(i) * shape.width + j];
            if (c == 0) continue;
            real wsum = 0;
            for (int u = 0; u < win; ++u) {
                int ii = i + u - mid;
                if (ii < 0 || ii >= shape.height) continue;
                for (int v = 0; v < win; ++v) {
                    int jj = j + v - mid;
                    if (jj < 0 || jj >= shape.width) continue;
                    wsum += g[size_t(u) * win + v];
                }
            }
            real scale = c / (wsum * shape.maps);
            for (int u = 0; u < win; ++u) {
                int ii = i + u - mid;
                if (ii < 0 || ii >= shape.height) continue;
                for (int v = 0; v < win; ++v) {
                    int jj = j + v - mid;
                    if (jj < 0 || jj >= shape.width) continue;
                    real w = g[size_t(u) * win + v] * scale;
                    for (int m = 0; m < shape.maps; ++m) accum.at(m, ii, jj) += w;
                }
            }
        }
    }
}

}  // namespace detail

/// Subtract the Gaussian-weighted local mean (taken jointly over all maps).
inline Tensor3 subtractive_norm(const Tensor3& t, const NormConfig& cfg) {
    cfg.validate();
    if (cfg.window > t.height || cfg.window > t.width)
        throw dimension_error("subtractive_norm: window larger than image");
    auto mean = detail::joint_local_average(t, cfg, [](real v) { return v; });
    Tensor3 out = t;
    for (int m = 0; m < t.maps; ++m)
        for (int i = 0; i < t.height; ++i)
            for (int j = 0; j < t.width; ++j)
                out.at(m, i, j) -= mean[size_t(i) * t.width + j];
    return out;
}

struct DivisiveCache {
    std::vector<real> sigma_local;  // per pixel
    real floor = 0;
};

inline Tensor3 divisive_norm(const Tensor3& t, const NormConfig& cfg, DivisiveCache* cache = nullptr) {
    cfg.validate();
    auto msq = detail::joint_local_average(t, cfg, [](real v) { return v * v; });
    std::vector<real> sig(msq.size());
    for (size_t i = 0; i < msq.size(); ++i) sig[i] = std::sqrt(msq[i]);
    real floor;
    if (cfg.floor_mode == FloorMode::FixedConstant) {
        floor = cfg.floor_constant;
    } else {
        real s = 0;
        for (real v : sig) s += v;
        floor = s / real(sig.size());
        if (floor <= 0) floor = 1.0;  // all-zero input
    }
    Tensor3 out = t;
    for (int m = 0; m < t.maps; ++m)
        for (int i = 0; i < t.height; ++i)
            for (int j = 0; j < t.width; ++j) {
                real d = std::max(sig[size_t(i) * t.width + j], floor);
                out.at(m, i, j) /= d;
            }
    if (cache) {
        cache->sigma_local = std::move(sig);
        cache->floor = floor;
    }
    return out;
}

/// Full N module: subtractive mean removal then divisive normalization.
inline Tensor3 local_cn(const Tensor3& t, const NormConfig& cfg) {
    return divisive_norm(subtractive_norm(t, cfg), cfg);
}

/// Valid-mode variant used for input preprocessing: crops window-1 pixels
/// per axis so every retained pixel has full Gaussian support.
inline Tensor3 local_cn_valid(const Tensor3& t, const NormConfig& cfg) {
    Tensor3 full = local_cn(t, cfg);
    int crop = cfg.window / 2;
    int oh = t.height - 2 * crop, ow = t.width - 2 * crop;
    if (oh <= 0 || ow <= 0) throw dimension_error("local_cn_valid: image too small");
    Tensor3 out(t.maps, oh, ow);
    for (int m = 0; m < t.maps; ++m)
        for (int i = 0; i < oh; ++i)
            for (int j = 0; j < ow; ++j)
                out.at(m, i, j) = full.at(m, i + crop, j + crop);
    return out;
}

// ---- backward -------------------------------------------------------------

// Subtractive is linear; its backward is the adjoint: g - scatter(mean-of-g).
inline Tensor3 subtractive_norm_grad(const Tensor3& grad_out, const NormConfig& cfg) {
    std::vector<real> coef(size_t(grad_out.height) * grad_out.width, 0.0);
    for (int m = 0; m < grad_out.maps; ++m)
        for (int i = 0; i < grad_out.height; ++i)
            for (int j = 0; j < grad_out.width; ++j)
                coef[size_t(i) * grad_out.width + j] -= grad_out.at(m, i, j);
    Tensor3 gin = grad_out;
    detail::joint_local_average_adjoint(grad_out, cfg, coef, gin);
    return gin;
}

// Backward of divisive_norm. `v` is the forward input (subtractive output).
// The max(sigma, floor) switch is frozen at the forward branch; where the
// sigma branch is live the dependence of sigma on v is chained through, and
// in per-image-mean mode the floor's dependence on the sigma map is chained
// through as well.
inline Tensor3 divisive_norm_grad(const Tensor3& v, const NormConfig& cfg,
                                  const DivisiveCache& cache, const Tensor3& grad_out) {
    const auto& sig = cache.sigma_local;
    real floor = cache.floor;
    size_t npix = sig.size();
    Tensor3 gin = grad_out;
    // direct term g / d
    std::vector<real> denom(npix);
    for (size_t p = 0; p < npix; ++p) denom[p] = std::max(sig[p], floor);
    for (int m = 0; m < v.maps; ++m)
        for (int i = 0; i < v.height; ++i)
            for (int j = 0; j < v.width; ++j)
                gin.at(m, i, j) /= denom[size_t(i) * v.width + j];
    // per-pixel coefficient on d(denominator): sum_m -g v / d^2
    std::vector<real> dcoef(npix, 0.0);
    for (int m = 0; m < v.maps; ++m)
        for (int i = 0; i < v.height; ++i)
            for (int j = 0; j < v.width; ++j) {
                size_t p = size_t(i) * v.width + j;
                dcoef[p] -= grad_out.at(m, i, j) * v.at(m, i, j) / (denom[p] * denom[p]);
            }
    // route the denominator coefficient to sigma coefficients
    std::vector<real> scoef(npix, 0.0);
    real floor_coef = 0;
    for (size_t p = 0; p < npix; ++p) {
        if (sig[p] > floor)
            scoef[p] = dcoef[p];
        else
            floor_coef += dcoef[p];
    }
    if (cfg.floor_mode == FloorMode::PerImageMeanSigma && floor_coef != 0) {
        real share = floor_coef / real(npix);
        for (size_t p = 0; p < npix; ++p) scoef[p] += share;
    }
    // d sigma / d v: sigma = sqrt(joint avg of v^2), so coefficient on the
    // averaged square is scoef / (2 sigma); the average itself is linear in v^2.
    std::vector<real> mcoef(npix, 0.0);
    for (size_t p = 0; p < npix; ++p) {
        if (scoef[p] != 0 && sig[p] > 1e-12) mcoef[p] = scoef[p] / (2 * sig[p]);
    }
    Tensor3 scatter(v.maps, v.height, v.width);
    detail::joint_local_average_adjoint(v, cfg, mcoef, scatter);
    // chain through v^2: factor 2 v
    for (int m = 0; m < v.maps; ++m)
        for (int i = 0; i < v.height; ++i)
            for (int j = 0; j < v.width; ++j)
                gin.at(m, i, j) += scatter.at(m, i, j) * 2 * v.at(m, i, j);
    return gin;
}

}  // namespace sparsenet
