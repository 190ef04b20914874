#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "sparsenet/tensor.hpp"

namespace sparsenet {

/// Row-major dense matrix.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<real> a;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), a(size_t(r) * c, 0.0) {}

    real& at(int i, int j) { return a[size_t(i) * cols + j]; }
    real at(int i, int j) const { return a[size_t(i) * cols + j]; }
};

inline std::vector<real> matvec(const Matrix& m, const std::vector<real>& x) {
    if (int(x.size()) != m.cols) throw dimension_error("matvec: size mismatch");
    std::vector<real> y(size_t(m.rows), 0.0);
    for (int i = 0; i < m.rows; ++i) {
        real s = 0;
        for (int j = 0; j < m.cols; ++j) s += m.at(i, j) * x[j];
        y[size_t(i)] = s;
    }
    return y;
}

inline std::vector<real> matvec_t(const Matrix& m, const std::vector<real>& x) {
    if (int(x.size()) != m.rows) throw dimension_error("matvec_t: size mismatch");
    std::vector<real> y(size_t(m.cols), 0.0);
    for (int i = 0; i < m.rows; ++i)
        for (int j = 0; j < m.cols; ++j) y[size_t(j)] += m.at(i, j) * x[i];
    return y;
}

/// Linear discriminant u z + r with multinomial logistic loss.
struct ClassifierParams {
    Matrix u;             // c x n
    std::vector<real> r;  // c
};

/// Cross-entropy with log-sum-exp stabilization; grad = softmax - onehot.
inline std::pair<real, std::vector<real>> logistic_loss(const std::vector<real>& scores, int y) {
    int c = int(scores.size());
    if (y < 0 || y >= c) throw parameter_error("logistic_loss: label out of range");
    real mx = scores[0];
    for (real s : scores) mx = std::max(mx, s);
    real lse = 0;
    for (real s : scores) lse += std::exp(s - mx);
    lse = mx + std::log(lse);
    std::vector<real> grad(scores.size());
    for (int k = 0; k < c; ++k) grad[size_t(k)] = std::exp(scores[size_t(k)] - lse);
    grad[size_t(y)] -= 1.0;
    return {lse - scores[size_t(y)], grad};
}

enum class SmoothKind { Recon, Discriminative };

/// Smooth part H(z) of the sparse-coding energy. Recon: ||x - Dz||^2.
/// Discriminative: C(y, u z + r) + lambda1 ||x - Dz||^2.
struct SmoothTerm {
    SmoothKind kind = SmoothKind::Recon;
    std::vector<real> x;
    Matrix D;  // m x n, unit-norm columns
    int y = 0;
    const ClassifierParams* theta = nullptr;
    real lambda1 = 1.0;

    int dim() const { return D.cols; }

    real value(const std::vector<real>& z) const {
        std::vector<real> rvec = matvec(D, z);
        real rec = 0;
        for (size_t i = 0; i < rvec.size(); ++i) {
            real d = rvec[i] - x[i];
            rec += d * d;
        }
        if (kind == SmoothKind::Recon) return rec;
        std::vector<real> scores = matvec(theta->u, z);
        for (size_t k = 0; k < scores.size(); ++k) scores[k] += theta->r[k];
        return logistic_loss(scores, y).first + lambda1 * rec;
    }

    std::vector<real> grad(const std::vector<real>& z) const {
        std::vector<real> rvec = matvec(D, z);
        for (size_t i = 0; i < rvec.size(); ++i) rvec[i] -= x[i];
        std::vector<real> g = matvec_t(D, rvec);
        real w = (kind == SmoothKind::Recon) ? 2.0 : 2.0 * lambda1;
        for (auto& v : g) v *= w;
        if (kind == SmoothKind::Discriminative) {
            std::vector<real> scores = matvec(theta->u, z);
            for (size_t k = 0; k < scores.size(); ++k) scores[k] += theta->r[k];
            auto [loss, sg] = logistic_loss(scores, y);
            (void)loss;
            std::vector<real> gd = matvec_t(theta->u, sg);
            for (size_t i = 0; i < g.size(); ++i) g[i] += gd[i];
        }
        return g;
    }

    /// Upper bound on the Lipschitz constant of grad: power iteration on
    /// D^T D (20 rounds) plus sigma_max(u)^2 / 4 for the logistic part,
    /// times a 1.05 safety factor.
    real lipschitz() const {
        real lam = power_lambda_max(D);
        real w = (kind == SmoothKind::Recon) ? 2.0 : 2.0 * lambda1;
        real lip = w * lam;
        if (kind == SmoothKind::Discriminative) lip += power_lambda_max(theta->u) / 4.0;
        return lip * 1.05;
    }

    static real power_lambda_max(const Matrix& m) {
        std::mt19937_64 rng(12345);
        std::uniform_real_distribution<real> uni(-1.0, 1.0);
        std::vector<real> v(size_t(m.cols));
        for (auto& e : v) e = uni(rng);
        real lam = 0;
        for (int it = 0; it < 20; ++it) {
            std::vector<real> w = matvec_t(m, matvec(m, v));
            real n = 0;
            for (real e : w) n += e * e;
            n = std::sqrt(n);
            if (n < 1e-300) return 0;
            lam = n;
            for (size_t i = 0; i < v.size(); ++i) v[i] = w[i] / n;
        }
        return lam;
    }
};

struct SolveConfig {
    real lambda_l1 = 0.5;
    int max_iter = 200;
    real tol = 1e-6;
    real lipschitz = 0;  // 0 = estimate by power iteration

    void validate() const {
        if (lambda_l1 < 0) throw parameter_error("solve: lambda_l1 must be >= 0");
        if (tol <= 0) throw parameter_error("solve: tol must be positive");
    }
};

struct SolveResult {
    std::vector<real> z;
    std::vector<real> trace;  // objective per accepted iterate
    bool converged = true;
};

inline real soft_threshold(real v, real t) {
    if (v > t) return v - t;
    if (v < -t) return v + t;
    return 0;
}

/// Monotone FISTA for min_z H(z) + lambda ||z||_1. The momentum point drives
/// the proximal step; an iterate is only accepted if it does not increase the
/// objective, otherwise the plain ISTA step from the previous accepted point
/// is taken instead.
template <class Smooth>
SolveResult fista_solve(const Smooth& H, const SolveConfig& cfg, const std::vector<real>& z0) {
    cfg.validate();
    real L = cfg.lipschitz > 0 ? cfg.lipschitz : H.lipschitz();
    if (L <= 0) L = 1.0;
    real step = 1.0 / L;
    real lam = cfg.lambda_l1;

    auto objective = [&](const std::vector<real>& z) {
        real o = H.value(z);
        for (real v : z) o += lam * std::abs(v);
        return o;
    };
    auto prox_step = [&](const std::vector<real>& point) {
        std::vector<real> g = H.grad(point);
        std::vector<real> z(point.size());
        for (size_t i = 0; i < z.size(); ++i) z[i] = soft_threshold(point[i] - step * g[i], step * lam);
        return z;
    };

    SolveResult res;
    std::vector<real> z = z0;
    std::vector<real> yv = z0;
    real t = 1.0;
    real obj = objective(z);
    if (!std::isfinite(obj)) throw numeric_error("fista: non-finite objective at start");
    res.trace.push_back(obj);
    res.converged = false;
    for (int it = 0; it < cfg.max_iter; ++it) {
        std::vector<real> z_acc = prox_step(yv);
        real obj_acc = objective(z_acc);
        if (obj_acc > obj) {
            // momentum overshot: fall back to ISTA from the accepted point
            z_acc = prox_step(z);
            obj_acc = objective(z_acc);
            if (obj_acc > obj) {
                z_acc = z;
                obj_acc = obj;
            }
        }
        if (!std::isfinite(obj_acc)) throw numeric_error("fista: non-finite objective");
        real t_next = (1.0 + std::sqrt(1.0 + 4.0 * t * t)) / 2.0;
        yv.resize(z.size());
        for (size_t i = 0; i < z.size(); ++i)
            yv[i] = z_acc[i] + (t - 1.0) / t_next * (z_acc[i] - z[i]);
        real prev = obj;
        z = std::move(z_acc);
        obj = obj_acc;
        t = t_next;
        res.trace.push_back(obj);
        real denom = std::max(std::abs(prev), real(1e-12));
        if (std::abs(prev - obj) / denom < cfg.tol) {
            res.converged = true;
            break;
        }
    }
    res.z = std::move(z);
    return res;
}

/// Plain ISTA, for comparisons.
template <class Smooth>
SolveResult ista_solve(const Smooth& H, const SolveConfig& cfg, const std::vector<real>& z0) {
    cfg.validate();
    real L = cfg.lipschitz > 0 ? cfg.lipschitz : H.lipschitz();
    if (L <= 0) L = 1.0;
    real step = 1.0 / L;
    real lam = cfg.lambda_l1;
    auto objective = [&](const std::vector<real>& z) {
        real o = H.value(z);
        for (real v : z) o += lam * std::abs(v);
        return o;
    };
    SolveResult res;
    std::vector<real> z = z0;
    real obj = objective(z);
    res.trace.push_back(obj);
    res.converged = false;
    for (int it = 0; it < cfg.max_iter; ++it) {
        std::vector<real> g = H.grad(z);
        for (size_t i = 0; i < z.size(); ++i) z[i] = soft_threshold(z[i] - step * g[i], step * lam);
        real next = objective(z);
        if (!std::isfinite(next)) throw numeric_error("ista: non-finite objective");
        real denom = std::max(std::abs(obj), real(1e-12));
        bool done = std::abs(obj - next) / denom < cfg.tol;
        obj = next;
        res.trace.push_back(obj);
        if (done) {
            res.converged = true;
            break;
        }
    }
    res.z = std::move(z);
    return res;
}

}  // namespace sparsenet
