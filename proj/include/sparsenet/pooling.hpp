#pragma once

#include <vector>

#include "sparsenet/tensor.hpp"

namespace sparsenet {

enum class PoolKind { Avg, Max };

struct PoolSpec {
    PoolKind kind = PoolKind::Avg;
    int window = 2;
    int stride = 2;

    void validate(int h, int w) const {
        if (stride < 1 || stride > window) throw parameter_error("pool: need 1 <= stride <= window");
        if (window > h || window > w) throw dimension_error("pool: window larger than input");
    }

    static int out_dim(int in, int window, int stride) { return (in - window) / stride + 1; }
};

struct PyramidSpec {
    std::vector<std::pair<int, int>> levels;  // (window, stride)

    void validate(int h, int w) const {
        if (levels.empty()) throw parameter_error("pyramid: no levels");
        for (auto [win, st] : levels) {
            PoolSpec s{PoolKind::Avg, win, st};
            s.validate(h, w);
        }
    }
};

struct PoolCache {
    std::vector<int> argmax;  // flat input index per output element (max pooling)
};

inline Tensor3 pool(const Tensor3& t, const PoolSpec& spec, PoolCache* cache = nullptr) {
    spec.validate(t.height, t.width);
    int oh = PoolSpec::out_dim(t.height, spec.window, spec.stride);
    int ow = PoolSpec::out_dim(t.width, spec.window, spec.stride);
    Tensor3 out(t.maps, oh, ow);
    if (cache) cache->argmax.assign(out.size(), -1);
    real inv = 1.0 / (real(spec.window) * spec.window);
    for (int m = 0; m < t.maps; ++m) {
        for (int i = 0; i < oh; ++i) {
            for (int j = 0; j < ow; ++j) {
                int i0 = i * spec.stride, j0 = j * spec.stride;
                if (spec.kind == PoolKind::Avg) {
                    real s = 0;
                    for (int u = 0; u < spec.window; ++u)
                        for (int v = 0; v < spec.window; ++v)
                            s += t.at(m, i0 + u, j0 + v);
                    out.at(m, i, j) = s * inv;
                } else {
                    real best = t.at(m, i0, j0);
                    int bu = 0, bv = 0;
                    for (int u = 0; u < spec.window; ++u)
                        for (int v = 0; v < spec.window; ++v) {
                            real val = t.at(m, i0 + u, j0 + v);
                            if (val > best) {  // ties keep first in scan order
                                best = val;
                                bu = u;
                                bv = v;
                            }
                        }
                    out.at(m, i, j) = best;
                    if (cache)
                        cache->argmax[(size_t(m) * oh + i) * ow + j] =
                            int((size_t(m) * t.height + (i0 + bu)) * t.width + (j0 + bv));
                }
            }
        }
    }
    return out;
}

inline Tensor3 pool_grad(const Tensor3& input, const PoolSpec& spec, const Tensor3& grad_out,
                         const PoolCache* cache = nullptr) {
    int oh = PoolSpec::out_dim(input.height, spec.window, spec.stride);
    int ow = PoolSpec::out_dim(input.width, spec.window, spec.stride);
    if (grad_out.maps != input.maps || grad_out.height != oh || grad_out.width != ow)
        throw dimension_error("pool_grad: grad_out shape mismatch");
    Tensor3 gin(input.maps, input.height, input.width);
    if (spec.kind == PoolKind::Avg) {
        real inv = 1.0 / (real(spec.window) * spec.window);
        for (int m = 0; m < input.maps; ++m)
            for (int i = 0; i < oh; ++i)
                for (int j = 0; j < ow; ++j) {
                    real g = grad_out.at(m, i, j) * inv;
                    int i0 = i * spec.stride, j0 = j * spec.stride;
                    for (int u = 0; u < spec.window; ++u)
                        for (int v = 0; v < spec.window; ++v)
                            gin.at(m, i0 + u, j0 + v) += g;
                }
    } else {
        if (!cache) throw config_error("pool_grad: max pooling needs the forward cache");
        for (size_t o = 0; o < grad_out.size(); ++o) gin.data[size_t(cache->argmax[o])] += grad_out.data[o];
    }
    return gin;
}

/// Concatenation of average-pooled maps at every pyramid level, flattened in
/// level order.
inline std::vector<real> pyramid_pool(const Tensor3& t, const PyramidSpec& spec) {
    spec.validate(t.height, t.width);
    std::vector<real> out;
    for (auto [win, st] : spec.levels) {
        Tensor3 p = pool(t, PoolSpec{PoolKind::Avg, win, st});
        out.insert(out.end(), p.data.begin(), p.data.end());
    }
    return out;
}

inline Tensor3 pyramid_pool_grad(const Tensor3& input, const PyramidSpec& spec,
                                 const std::vector<real>& grad_out) {
    Tensor3 gin(input.maps, input.height, input.width);
    size_t off = 0;
    for (auto [win, st] : spec.levels) {
        PoolSpec ps{PoolKind::Avg, win, st};
        int oh = PoolSpec::out_dim(input.height, win, st);
        int ow = PoolSpec::out_dim(input.width, win, st);
        Tensor3 g(input.maps, oh, ow);
        std::copy(grad_out.begin() + off, grad_out.begin() + off + g.size(), g.data.begin());
        off += g.size();
        Tensor3 part = pool_grad(input, ps, g);
        for (size_t i = 0; i < gin.size(); ++i) gin.data[i] += part.data[i];
    }
    if (off != grad_out.size()) throw dimension_error("pyramid_pool_grad: grad length mismatch");
    return gin;
}

inline size_t pyramid_length(int maps, int h, int w, const PyramidSpec& spec) {
    size_t n = 0;
    for (auto [win, st] : spec.levels)
        n += size_t(maps) * PoolSpec::out_dim(h, win, st) * PoolSpec::out_dim(w, win, st);
    return n;
}

}  // namespace sparsenet
