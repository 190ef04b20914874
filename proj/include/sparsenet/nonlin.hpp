#pragma once

#include <cmath>
#include <vector>

#include "sparsenet/tensor.hpp"

namespace sparsenet {

// log(1 + e^u) without overflow
inline real softplus(real u) {
    return std::max(u, 0.0) + std::log1p(std::exp(-std::abs(u)));
}

inline real sigmoid(real u) {
    if (u >= 0) return 1.0 / (1.0 + std::exp(-u));
    real e = std::exp(u);
    return e / (1.0 + e);
}

inline real sgn(real x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); }

/// Smooth soft-shrinkage: per-component threshold b, shared smoothness beta.
struct ShrinkParams {
    std::vector<real> b;
    real beta = 5.0;

    void validate() const {
        if (beta <= 0) throw parameter_error("shrink: beta must be positive");
    }
};

inline ShrinkParams default_shrink(int n) {
    ShrinkParams p;
    p.b.assign(size_t(n), 0.1);
    p.beta = 5.0;
    return p;
}

// sh(x) = sgn(x) * (|x| + (1/beta) log(1+e^{beta (b-|x|)}) - b)
inline real soft_shrink_one(real x, real b, real beta) {
    real a = std::abs(x);
    return sgn(x) * (a + softplus(beta * (b - a)) / beta - b);
}

inline std::vector<real> soft_shrink(const std::vector<real>& x, const ShrinkParams& p) {
    p.validate();
    std::vector<real> y(x.size());
    for (size_t k = 0; k < x.size(); ++k) y[k] = soft_shrink_one(x[k], p.b[k], p.beta);
    return y;
}

struct ShrinkGrad {
    std::vector<real> dx;   // d sh / d x, per component
    std::vector<real> db;   // d sh / d b_k
    std::vector<real> dbeta;  // d sh / d beta, per component (sum for shared beta)
};

// Partials of the smooth shrinkage. With s = sigmoid(beta (b-|x|)):
//   d/d|x| = 1 - s      d/db = sgn(x) (s - 1)
//   d/dbeta = sgn(x) [ (b-|x|) s / beta - softplus(beta (b-|x|)) / beta^2 ]
inline ShrinkGrad soft_shrink_grad(const std::vector<real>& x, const ShrinkParams& p) {
    p.validate();
    ShrinkGrad g;
    g.dx.resize(x.size());
    g.db.resize(x.size());
    g.dbeta.resize(x.size());
    for (size_t k = 0; k < x.size(); ++k) {
        real a = std::abs(x[k]);
        real u = p.beta * (p.b[k] - a);
        real s = sigmoid(u);
        g.dx[k] = 1.0 - s;  // chain through |x| keeps sgn^2 = 1; exact 0 at x=0
        g.db[k] = sgn(x[k]) * (s - 1.0);
        g.dbeta[k] = sgn(x[k]) * ((p.b[k] - a) * s / p.beta - softplus(u) / (p.beta * p.beta));
    }
    return g;
}

inline Tensor3 abs_rectify(const Tensor3& t) {
    Tensor3 r = t;
    for (auto& v : r.data) v = std::abs(v);
    return r;
}

/// Backward of abs: multiply incoming grad by sgn of the forward input.
inline Tensor3 abs_rectify_grad(const Tensor3& input, const Tensor3& grad_out) {
    if (!input.same_shape(grad_out)) throw dimension_error("abs grad: shape mismatch");
    Tensor3 g = grad_out;
    for (size_t i = 0; i < g.data.size(); ++i) g.data[i] *= sgn(input.data[i]);
    return g;
}

}  // namespace sparsenet
