#pragma once

#include <cmath>
#include <vector>

#include "sparsenet/nonlin.hpp"
#include "sparsenet/solver.hpp"
#include "sparsenet/tensor.hpp"

namespace sparsenet {

// ---- vector (patch) encoders ---------------------------------------------

/// F_tanh: z_k = g_k tanh(W_k . x + b_k)
struct VecTanhEncoder {
    Matrix W;  // n x m
    std::vector<real> g;
    std::vector<real> bias;

    std::vector<real> forward(const std::vector<real>& x) const {
        std::vector<real> a = matvec(W, x);
        for (size_t k = 0; k < a.size(); ++k) a[k] = g[k] * std::tanh(a[k] + bias[k]);
        return a;
    }

    struct Grads {
        std::vector<real> gx;
        Matrix gW;
        std::vector<real> gg, gbias;
    };

    Grads backward(const std::vector<real>& x, const std::vector<real>& grad_z) const {
        std::vector<real> a = matvec(W, x);
        Grads gr;
        gr.gW = Matrix(W.rows, W.cols);
        gr.gg.assign(g.size(), 0.0);
        gr.gbias.assign(g.size(), 0.0);
        std::vector<real> ga(g.size());
        for (size_t k = 0; k < g.size(); ++k) {
            real th = std::tanh(a[k] + bias[k]);
            gr.gg[k] = grad_z[k] * th;
            real gpre = grad_z[k] * g[k] * (1.0 - th * th);
            gr.gbias[k] = gpre;
            ga[k] = gpre;
        }
        gr.gx = matvec_t(W, ga);
        for (int k = 0; k < W.rows; ++k)
            for (int j = 0; j < W.cols; ++j) gr.gW.at(k, j) = ga[size_t(k)] * x[size_t(j)];
        return gr;
    }
};

/// F_si: z = sh(Wx - S sh(Wx)), one inhibition pass, shared shrink params.
struct VecSiEncoder {
    Matrix W;  // n x m
    Matrix S;  // n x n, zero diagonal
    ShrinkParams shrink;

    std::vector<real> forward(const std::vector<real>& x) const {
        std::vector<real> a = matvec(W, x);
        std::vector<real> s1 = soft_shrink(a, shrink);
        std::vector<real> c = a;
        for (int p = 0; p < S.rows; ++p) {
            real acc = 0;
            for (int q = 0; q < S.cols; ++q) acc += S.at(p, q) * s1[size_t(q)];
            c[size_t(p)] -= acc;
        }
        return soft_shrink(c, shrink);
    }

    struct Grads {
        std::vector<real> gx;
        Matrix gW, gS;
        std::vector<real> gb;
        real gbeta = 0;
    };

    Grads backward(const std::vector<real>& x, const std::vector<real>& grad_z) const {
        std::vector<real> a = matvec(W, x);
        std::vector<real> s1 = soft_shrink(a, shrink);
        std::vector<real> c = a;
        for (int p = 0; p < S.rows; ++p) {
            real acc = 0;
            for (int q = 0; q < S.cols; ++q) acc += S.at(p, q) * s1[size_t(q)];
            c[size_t(p)] -= acc;
        }
        ShrinkGrad gouter = soft_shrink_grad(c, shrink);
        ShrinkGrad ginner = soft_shrink_grad(a, shrink);

        size_t n = a.size();
        std::vector<real> gc(n);
        Grads gr;
        gr.gb.assign(n, 0.0);
        for (size_t k = 0; k < n; ++k) {
            gc[k] = grad_z[k] * gouter.dx[k];
            gr.gb[k] += grad_z[k] * gouter.db[k];
            gr.gbeta += grad_z[k] * gouter.dbeta[k];
        }
        // coefficient on s1_q: -sum_p gc_p S_pq
        std::vector<real> gs1(n, 0.0);
        for (int p = 0; p < S.rows; ++p)
            for (int q = 0; q < S.cols; ++q) gs1[size_t(q)] -= gc[size_t(p)] * S.at(p, q);
        std::vector<real> ga(n);
        for (size_t k = 0; k < n; ++k) {
            ga[k] = gc[k] + gs1[k] * ginner.dx[k];
            gr.gb[k] += gs1[k] * ginner.db[k];
            gr.gbeta += gs1[k] * ginner.dbeta[k];
        }
        gr.gS = Matrix(S.rows, S.cols);
        for (int p = 0; p < S.rows; ++p)
            for (int q = 0; q < S.cols; ++q)
                if (p != q) gr.gS.at(p, q) = -gc[size_t(p)] * s1[size_t(q)];
        gr.gx = matvec_t(W, ga);
        gr.gW = Matrix(W.rows, W.cols);
        for (int k = 0; k < W.rows; ++k)
            for (int j = 0; j < W.cols; ++j) gr.gW.at(k, j) = ga[size_t(k)] * x[size_t(j)];
        return gr;
    }
};

// ---- convolutional encoders ----------------------------------------------

// per-map shrink over a feature-map stack
inline Tensor3 shrink_maps(const Tensor3& t, const ShrinkParams& p) {
    p.validate();
    Tensor3 out = t;
    for (int m = 0; m < t.maps; ++m)
        for (int i = 0; i < t.height; ++i)
            for (int j = 0; j < t.width; ++j)
                out.at(m, i, j) = soft_shrink_one(t.at(m, i, j), p.b[size_t(m)], p.beta);
    return out;
}

/// Convolutional F_si: per-map A_p = sum_q W_pq * x_q, then
/// sh(A_p - sum_{q != p} S_pq sh(A_q)) with S scalar per map pair.
struct ConvSiEncoder {
    KernelBank W;
    Matrix S;  // n_out x n_out, zero diagonal
    ShrinkParams shrink;  // b per out map
    int n_out = 0;

    Tensor3 forward(const Tensor3& x) const {
        Tensor3 a = correlate_valid(x, W, n_out);
        Tensor3 s1 = shrink_maps(a, shrink);
        Tensor3 c = a;
        for (int p = 0; p < n_out; ++p)
            for (int q = 0; q < n_out; ++q) {
                real s = S.at(p, q);
                if (s == 0) continue;
                for (int i = 0; i < a.height; ++i)
                    for (int j = 0; j < a.width; ++j) c.at(p, i, j) -= s * s1.at(q, i, j);
            }
        return shrink_maps(c, shrink);
    }

    struct Grads {
        Tensor3 gx;
        KernelBank gW;
        Matrix gS;
        std::vector<real> gb;
        real gbeta = 0;
    };

    Grads backward(const Tensor3& x, const Tensor3& grad_z) const {
        Tensor3 a = correlate_valid(x, W, n_out);
        Tensor3 s1 = shrink_maps(a, shrink);
        Tensor3 c = a;
        for (int p = 0; p < n_out; ++p)
            for (int q = 0; q < n_out; ++q) {
                real s = S.at(p, q);
                if (s == 0) continue;
                for (int i = 0; i < a.height; ++i)
                    for (int j = 0; j < a.width; ++j) c.at(p, i, j) -= s * s1.at(q, i, j);
            }
        Grads gr;
        gr.gS = Matrix(n_out, n_out);
        gr.gb.assign(size_t(n_out), 0.0);
        Tensor3 gc(a.maps, a.height, a.width);
        for (int m = 0; m < a.maps; ++m)
            for (int i = 0; i < a.height; ++i)
                for (int j = 0; j < a.width; ++j) {
                    real v = c.at(m, i, j);
                    real av = std::abs(v);
                    real u = shrink.beta * (shrink.b[size_t(m)] - av);
                    real s = sigmoid(u);
                    real g = grad_z.at(m, i, j);
                    gc.at(m, i, j) = g * (1.0 - s);
                    gr.gb[size_t(m)] += g * sgn(v) * (s - 1.0);
                    gr.gbeta += g * sgn(v) *
                                ((shrink.b[size_t(m)] - av) * s / shrink.beta -
                                 softplus(u) / (shrink.beta * shrink.beta));
                }
        // gS_pq = -sum_ij gc_p(ij) s1_q(ij); coefficient on s1_q map: -sum_p S_pq gc_p
        Tensor3 gs1(a.maps, a.height, a.width);
        for (int p = 0; p < n_out; ++p)
            for (int q = 0; q < n_out; ++q) {
                if (p == q) continue;
                real s = S.at(p, q);
                real acc = 0;
                for (int i = 0; i < a.height; ++i)
                    for (int j = 0; j < a.width; ++j) {
                        real gcp = gc.at(p, i, j);
                        acc -= gcp * s1.at(q, i, j);
                        if (s != 0) gs1.at(q, i, j) -= gcp * s;
                    }
                gr.gS.at(p, q) = acc;
            }
        Tensor3 ga = gc;
        for (int m = 0; m < a.maps; ++m)
            for (int i = 0; i < a.height; ++i)
                for (int j = 0; j < a.width; ++j) {
                    real gs = gs1.at(m, i, j);
                    if (gs == 0) continue;
                    real v = a.at(m, i, j);
                    real av = std::abs(v);
                    real u = shrink.beta * (shrink.b[size_t(m)] - av);
                    real s = sigmoid(u);
                    ga.at(m, i, j) += gs * (1.0 - s);
                    gr.gb[size_t(m)] += gs * sgn(v) * (s - 1.0);
                    gr.gbeta += gs * sgn(v) *
                                ((shrink.b[size_t(m)] - av) * s / shrink.beta -
                                 softplus(u) / (shrink.beta * shrink.beta));
                }
        auto [gx, gW] = correlate_grad(x, W, ga);
        gr.gx = std::move(gx);
        gr.gW = std::move(gW);
        return gr;
    }
};

/// Convolutional F_tanh: z_p = g_p tanh(A_p + bias_p).
struct ConvTanhEncoder {
    KernelBank W;
    std::vector<real> g;
    std::vector<real> bias;
    int n_out = 0;

    Tensor3 forward(const Tensor3& x) const {
        Tensor3 a = correlate_valid(x, W, n_out);
        for (int m = 0; m < a.maps; ++m)
            for (int i = 0; i < a.height; ++i)
                for (int j = 0; j < a.width; ++j)
                    a.at(m, i, j) = g[size_t(m)] * std::tanh(a.at(m, i, j) + bias[size_t(m)]);
        return a;
    }

    struct Grads {
        Tensor3 gx;
        KernelBank gW;
        std::vector<real> gg, gbias;
    };

    Grads backward(const Tensor3& x, const Tensor3& grad_z) const {
        Tensor3 a = correlate_valid(x, W, n_out);
        Grads gr;
        gr.gg.assign(g.size(), 0.0);
        gr.gbias.assign(g.size(), 0.0);
        Tensor3 ga(a.maps, a.height, a.width);
        for (int m = 0; m < a.maps; ++m)
            for (int i = 0; i < a.height; ++i)
                for (int j = 0; j < a.width; ++j) {
                    real th = std::tanh(a.at(m, i, j) + bias[size_t(m)]);
                    real gz = grad_z.at(m, i, j);
                    gr.gg[size_t(m)] += gz * th;
                    real gpre = gz * g[size_t(m)] * (1.0 - th * th);
                    gr.gbias[size_t(m)] += gpre;
                    ga.at(m, i, j) = gpre;
                }
        auto [gx, gW] = correlate_grad(x, W, ga);
        gr.gx = std::move(gx);
        gr.gW = std::move(gW);
        return gr;
    }
};

// ---- initialization ------------------------------------------------------

inline void gaussian_fill(std::vector<real>& v, std::mt19937_64& rng) {
    std::normal_distribution<real> nd(0.0, 1.0);
    for (auto& e : v) e = nd(rng);
}

/// i.i.d. Gaussian rows, then row-normalize.
inline Matrix random_filter_matrix(int n, int m, std::mt19937_64& rng) {
    Matrix W(n, m);
    gaussian_fill(W.a, rng);
    for (int k = 0; k < n; ++k) {
        real s = 0;
        for (int j = 0; j < m; ++j) s += W.at(k, j) * W.at(k, j);
        s = std::sqrt(s);
        if (s > 0)
            for (int j = 0; j < m; ++j) W.at(k, j) /= s;
    }
    return W;
}

/// Gaussian kernels, each normalized to unit L2, wired per the table.
inline KernelBank random_kernel_bank(const ConnectionTable& table, int ksize, std::mt19937_64& rng) {
    KernelBank bank;
    for (const auto& e : table.entries) {
        Kernel ker;
        ker.out_map = e.out_map;
        ker.in_map = e.in_map;
        ker.size = ksize;
        ker.w.assign(size_t(ksize) * ksize, 0.0);
        gaussian_fill(ker.w, rng);
        real s = 0;
        for (real v : ker.w) s += v * v;
        s = std::sqrt(s);
        if (s > 0)
            for (auto& v : ker.w) v /= s;
        bank.kernels.push_back(std::move(ker));
    }
    return bank;
}

// ---- fit steps (SGD on squared prediction error) -------------------------

inline std::vector<real> prediction_residual(const std::vector<real>& pred,
                                             const std::vector<real>& target) {
    std::vector<real> g(pred.size());
    for (size_t i = 0; i < g.size(); ++i) g[i] = 2.0 * (pred[i] - target[i]);
    return g;
}

inline void check_finite(const std::vector<real>& v, const char* where) {
    for (real e : v)
        if (!std::isfinite(e)) throw numeric_error(std::string("non-finite gradient in ") + where);
}

/// One SGD step on ||z* - F(x)||^2. S diagonal re-zeroed after the update.
inline void encoder_fit_step(VecSiEncoder& enc, const std::vector<real>& x,
                             const std::vector<real>& z_star, real lr) {
    auto pred = enc.forward(x);
    auto gz = prediction_residual(pred, z_star);
    auto gr = enc.backward(x, gz);
    check_finite(gr.gW.a, "si encoder fit");
    for (size_t i = 0; i < enc.W.a.size(); ++i) enc.W.a[i] -= lr * gr.gW.a[i];
    for (size_t i = 0; i < enc.S.a.size(); ++i) enc.S.a[i] -= lr * gr.gS.a[i];
    for (size_t i = 0; i < enc.shrink.b.size(); ++i) enc.shrink.b[i] -= lr * gr.gb[i];
    enc.shrink.beta -= lr * gr.gbeta;
    if (enc.shrink.beta < 1e-3) enc.shrink.beta = 1e-3;
    for (int p = 0; p < enc.S.rows; ++p) enc.S.at(p, p) = 0;
}

inline void encoder_fit_step(VecTanhEncoder& enc, const std::vector<real>& x,
                             const std::vector<real>& z_star, real lr) {
    auto pred = enc.forward(x);
    auto gz = prediction_residual(pred, z_star);
    auto gr = enc.backward(x, gz);
    check_finite(gr.gW.a, "tanh encoder fit");
    for (size_t i = 0; i < enc.W.a.size(); ++i) enc.W.a[i] -= lr * gr.gW.a[i];
    for (size_t i = 0; i < enc.g.size(); ++i) {
        enc.g[i] -= lr * gr.gg[i];
        enc.bias[i] -= lr * gr.gbias[i];
    }
}

inline void encoder_fit_step(ConvSiEncoder& enc, const Tensor3& x, const Tensor3& z_star, real lr) {
    Tensor3 pred = enc.forward(x);
    Tensor3 gz = pred;
    for (size_t i = 0; i < gz.data.size(); ++i) gz.data[i] = 2.0 * (pred.data[i] - z_star.data[i]);
    auto gr = enc.backward(x, gz);
    for (size_t k = 0; k < enc.W.kernels.size(); ++k) {
        check_finite(gr.gW.kernels[k].w, "conv si encoder fit");
        for (size_t i = 0; i < enc.W.kernels[k].w.size(); ++i)
            enc.W.kernels[k].w[i] -= lr * gr.gW.kernels[k].w[i];
    }
    for (size_t i = 0; i < enc.S.a.size(); ++i) enc.S.a[i] -= lr * gr.gS.a[i];
    for (size_t i = 0; i < enc.shrink.b.size(); ++i) enc.shrink.b[i] -= lr * gr.gb[i];
    enc.shrink.beta -= lr * gr.gbeta;
    if (enc.shrink.beta < 1e-3) enc.shrink.beta = 1e-3;
    for (int p = 0; p < enc.S.rows; ++p) enc.S.at(p, p) = 0;
}

inline void encoder_fit_step(ConvTanhEncoder& enc, const Tensor3& x, const Tensor3& z_star, real lr) {
    Tensor3 pred = enc.forward(x);
    Tensor3 gz = pred;
    for (size_t i = 0; i < gz.data.size(); ++i) gz.data[i] = 2.0 * (pred.data[i] - z_star.data[i]);
    auto gr = enc.backward(x, gz);
    for (size_t k = 0; k < enc.W.kernels.size(); ++k) {
        check_finite(gr.gW.kernels[k].w, "conv tanh encoder fit");
        for (size_t i = 0; i < enc.W.kernels[k].w.size(); ++i)
            enc.W.kernels[k].w[i] -= lr * gr.gW.kernels[k].w[i];
    }
    for (size_t i = 0; i < enc.g.size(); ++i) {
        enc.g[i] -= lr * gr.gg[i];
        enc.bias[i] -= lr * gr.gbias[i];
    }
}

}  // namespace sparsenet
