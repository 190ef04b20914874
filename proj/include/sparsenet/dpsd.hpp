#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "sparsenet/encoder.hpp"
#include "sparsenet/solver.hpp"
#include "sparsenet/tensor.hpp"

namespace sparsenet {

enum class EncoderKind { Tanh, Si };

struct DpsdConfig {
    bool discriminative = false;
    bool convolutional = false;
    EncoderKind encoder = EncoderKind::Si;
    int n = 0;           // code size / number of code maps
    int n_classes = 0;   // discriminative only
    real lambda_l1 = 0.5;
    real lambda1 = 1.0;  // reconstruction weight inside the discriminative term
    real lr_dict = 0.01;
    real lr_encoder = 0.001;
    real lr_theta = 0.001;
    int niter = 1;  // epochs over the sample set
    uint64_t seed = 0;
    SolveConfig solve;

    SolveConfig solve_with_lambda(real lam) const {
        SolveConfig s = solve;
        s.lambda_l1 = lam;
        return s;
    }

    void validate() const {
        if (n < 1) throw parameter_error("dpsd: code size must be >= 1");
        if (lr_dict <= 0 || lr_encoder <= 0 || lr_theta <= 0)
            throw parameter_error("dpsd: learning rates must be positive");
    }
};

struct TrainStats {
    std::vector<real> epoch_objective;   // mean FISTA objective per epoch
    std::vector<real> epoch_encoder_mse; // mean ||z* - F(x)||^2 per epoch
    int skipped = 0;
};

// ---- patch mode ------------------------------------------------------------

/// Dictionary, encoder and discriminant trained per Algorithm "Task Oriented
/// Predictors". `mask` (n x m, 0/1) restricts each code unit to a subset of
/// input dimensions; empty mask = dense.
struct PatchDpsdModel {
    Matrix D;  // m x n, unit-norm columns
    EncoderKind kind = EncoderKind::Si;
    VecSiEncoder si;
    VecTanhEncoder tanh_enc;
    ClassifierParams theta;
    Matrix mask;  // n x m or empty

    std::vector<real> predict(const std::vector<real>& x) const {
        return kind == EncoderKind::Si ? si.forward(x) : tanh_enc.forward(x);
    }
};

inline void normalize_columns(Matrix& D) {
    for (int j = 0; j < D.cols; ++j) {
        real s = 0;
        for (int i = 0; i < D.rows; ++i) s += D.at(i, j) * D.at(i, j);
        s = std::sqrt(s);
        if (s > 1e-12)
            for (int i = 0; i < D.rows; ++i) D.at(i, j) /= s;
    }
}

namespace detail {

inline void apply_mask_cols(Matrix& D, const Matrix& mask) {
    if (mask.rows == 0) return;
    for (int j = 0; j < D.cols; ++j)
        for (int i = 0; i < D.rows; ++i)
            if (mask.at(j, i) == 0) D.at(i, j) = 0;
}

inline void apply_mask_rows(Matrix& W, const Matrix& mask) {
    if (mask.rows == 0) return;
    for (int k = 0; k < W.rows; ++k)
        for (int j = 0; j < W.cols; ++j)
            if (mask.at(k, j) == 0) W.at(k, j) = 0;
}

}  // namespace detail

inline PatchDpsdModel init_patch_dpsd(int patch_dim, const DpsdConfig& cfg, std::mt19937_64& rng,
                                      const Matrix& mask = {}) {
    PatchDpsdModel model;
    model.kind = cfg.encoder;
    model.mask = mask;
    model.D = Matrix(patch_dim, cfg.n);
    gaussian_fill(model.D.a, rng);
    detail::apply_mask_cols(model.D, mask);
    normalize_columns(model.D);
    if (cfg.encoder == EncoderKind::Si) {
        model.si.W = random_filter_matrix(cfg.n, patch_dim, rng);
        detail::apply_mask_rows(model.si.W, mask);
        model.si.S = Matrix(cfg.n, cfg.n);
        model.si.shrink = default_shrink(cfg.n);
    } else {
        model.tanh_enc.W = random_filter_matrix(cfg.n, patch_dim, rng);
        detail::apply_mask_rows(model.tanh_enc.W, mask);
        model.tanh_enc.g.assign(size_t(cfg.n), 1.0);
        model.tanh_enc.bias.assign(size_t(cfg.n), 0.0);
    }
    if (cfg.discriminative) {
        model.theta.u = Matrix(cfg.n_classes, cfg.n);
        gaussian_fill(model.theta.u.a, rng);
        for (auto& v : model.theta.u.a) v *= 0.01;
        model.theta.r.assign(size_t(cfg.n_classes), 0.0);
    }
    return model;
}

/// Block coordinate descent: per sample, warm-started FISTA infers z*, then
/// one SGD step each on D (reconstruction), theta (logistic, discriminative
/// only) and the encoder (prediction). D is renormalized after its step.
inline PatchDpsdModel dpsd_train(const std::vector<std::vector<real>>& samples,
                                 const std::vector<int>& labels, const DpsdConfig& cfg,
                                 TrainStats* stats = nullptr, const Matrix& mask = {}) {
    cfg.validate();
    if (samples.empty()) throw parameter_error("dpsd: no samples");
    if (cfg.discriminative && labels.size() != samples.size())
        throw parameter_error("dpsd: discriminative training needs one label per sample");
    std::mt19937_64 rng(cfg.seed);
    int m = int(samples.front().size());
    PatchDpsdModel model = init_patch_dpsd(m, cfg, rng, mask);

    std::vector<size_t> order(samples.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    real T = real(samples.size());
    size_t t = 0;
    for (int epoch = 0; epoch < cfg.niter; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        real obj_sum = 0, mse_sum = 0;
        int used = 0, skipped = 0;
        for (size_t idx : order) {
            const auto& x = samples[idx];
            real decay = 1.0 / (1.0 + real(t) / T);
            ++t;
            SmoothTerm H;
            H.x = x;
            H.D = model.D;
            if (cfg.discriminative) {
                H.kind = SmoothKind::Discriminative;
                H.y = labels[idx];
                H.theta = &model.theta;
                H.lambda1 = cfg.lambda1;
            }
            std::vector<real> z_hat = model.predict(x);
            SolveResult sol;
            try {
                sol = fista_solve(H, cfg.solve_with_lambda(cfg.lambda_l1), z_hat);
            } catch (const numeric_error&) {
                ++skipped;
                continue;
            }
            const auto& z = sol.z;
            obj_sum += sol.trace.back();
            ++used;

            // dictionary step: d/dD ||x - Dz||^2 = 2 (Dz - x) z^T
            std::vector<real> rvec = matvec(model.D, z);
            for (size_t i = 0; i < rvec.size(); ++i) rvec[i] -= x[i];
            real lrd = cfg.lr_dict * decay;
            for (int i = 0; i < model.D.rows; ++i)
                for (int j = 0; j < model.D.cols; ++j)
                    model.D.at(i, j) -= lrd * 2.0 * rvec[size_t(i)] * z[size_t(j)];
            detail::apply_mask_cols(model.D, model.mask);
            normalize_columns(model.D);

            if (cfg.discriminative) {
                std::vector<real> scores = matvec(model.theta.u, z);
                for (size_t k = 0; k < scores.size(); ++k) scores[k] += model.theta.r[k];
                auto [loss, sg] = logistic_loss(scores, labels[idx]);
                (void)loss;
                real lrt = cfg.lr_theta * decay;
                for (int k = 0; k < model.theta.u.rows; ++k) {
                    for (int j = 0; j < model.theta.u.cols; ++j)
                        model.theta.u.at(k, j) -= lrt * sg[size_t(k)] * z[size_t(j)];
                    model.theta.r[size_t(k)] -= lrt * sg[size_t(k)];
                }
            }

            std::vector<real> pred = model.predict(x);
            real mse = 0;
            for (size_t i = 0; i < pred.size(); ++i) {
                real d = pred[i] - z[i];
                mse += d * d;
            }
            mse_sum += mse;
            real lre = cfg.lr_encoder * decay;
            if (model.kind == EncoderKind::Si) {
                encoder_fit_step(model.si, x, z, lre);
                detail::apply_mask_rows(model.si.W, model.mask);
            } else {
                encoder_fit_step(model.tanh_enc, x, z, lre);
                detail::apply_mask_rows(model.tanh_enc.W, model.mask);
            }
        }
        if (used == 0) throw numeric_error("dpsd: every sample skipped in an epoch");
        if (stats) {
            stats->epoch_objective.push_back(obj_sum / used);
            stats->epoch_encoder_mse.push_back(mse_sum / used);
            stats->skipped += skipped;
        }
    }
    return model;
}

// ---- convolutional mode ----------------------------------------------------

/// Decoder bank entry convention: in_map = code map, out_map = image channel.
struct ConvDpsdModel {
    KernelBank decoder;
    int n_code = 0;
    int n_channels = 0;
    EncoderKind kind = EncoderKind::Si;
    ConvSiEncoder encoder;
    ConvTanhEncoder tanh_encoder;
    ClassifierParams theta;

    Tensor3 predict(const Tensor3& x) const {
        return kind == EncoderKind::Si ? encoder.forward(x) : tanh_encoder.forward(x);
    }
};

inline void normalize_kernels(KernelBank& bank) {
    for (auto& ker : bank.kernels) {
        real s = 0;
        for (real v : ker.w) s += v * v;
        s = std::sqrt(s);
        if (s > 1e-12)
            for (auto& v : ker.w) v /= s;
    }
}

/// Smooth term over code maps: lambda ||x - sum_p conv_full(z_p, D_p)||^2,
/// optionally plus the logistic term on the flattened code.
struct ConvSmoothTerm {
    const Tensor3* x = nullptr;
    const KernelBank* decoder = nullptr;
    int n_code = 0;
    int code_h = 0, code_w = 0;
    bool discriminative = false;
    int y = 0;
    const ClassifierParams* theta = nullptr;
    real lambda1 = 1.0;

    Tensor3 unflatten(const std::vector<real>& z) const {
        Tensor3 t(n_code, code_h, code_w);
        std::copy(z.begin(), z.end(), t.data.begin());
        return t;
    }

    real value(const std::vector<real>& z) const {
        Tensor3 zc = unflatten(z);
        Tensor3 xhat = convolve_full(zc, *decoder, x->maps);
        real rec = 0;
        for (size_t i = 0; i < xhat.data.size(); ++i) {
            real d = xhat.data[i] - x->data[i];
            rec += d * d;
        }
        if (!discriminative) return rec;
        std::vector<real> scores = matvec(theta->u, z);
        for (size_t k = 0; k < scores.size(); ++k) scores[k] += theta->r[k];
        return logistic_loss(scores, y).first + lambda1 * rec;
    }

    std::vector<real> grad(const std::vector<real>& z) const {
        Tensor3 zc = unflatten(z);
        Tensor3 r = convolve_full(zc, *decoder, x->maps);
        for (size_t i = 0; i < r.data.size(); ++i) r.data[i] -= x->data[i];
        // adjoint: valid correlation of the residual against the decoder
        // kernels, with the bank wiring swapped (channel -> code map)
        KernelBank swapped = *decoder;
        for (auto& ker : swapped.kernels) std::swap(ker.in_map, ker.out_map);
        Tensor3 gz = correlate_valid(r, swapped, n_code);
        std::vector<real> g(gz.data.begin(), gz.data.end());
        real w = discriminative ? 2.0 * lambda1 : 2.0;
        for (auto& v : g) v *= w;
        if (discriminative) {
            std::vector<real> scores = matvec(theta->u, z);
            for (size_t k = 0; k < scores.size(); ++k) scores[k] += theta->r[k];
            auto sg = logistic_loss(scores, y).second;
            std::vector<real> gd = matvec_t(theta->u, sg);
            for (size_t i = 0; i < g.size(); ++i) g[i] += gd[i];
        }
        return g;
    }

    /// Power iteration on the conv operator's normal map A^T A.
    real lipschitz() const {
        std::mt19937_64 rng(9876);
        std::uniform_real_distribution<real> uni(-1.0, 1.0);
        Tensor3 v(n_code, code_h, code_w);
        for (auto& e : v.data) e = uni(rng);
        KernelBank swapped = *decoder;
        for (auto& ker : swapped.kernels) std::swap(ker.in_map, ker.out_map);
        real lam = 0;
        for (int it = 0; it < 20; ++it) {
            Tensor3 fw = convolve_full(v, *decoder, x->maps);
            Tensor3 bw = correlate_valid(fw, swapped, n_code);
            real n = std::sqrt(sq_norm(bw));
            if (n < 1e-300) return 1.0;
            lam = n;
            for (size_t i = 0; i < v.data.size(); ++i) v.data[i] = bw.data[i] / n;
        }
        real w = discriminative ? 2.0 * lambda1 : 2.0;
        real lip = w * lam;
        if (discriminative) lip += SmoothTerm::power_lambda_max(theta->u) / 4.0;
        return lip * 1.05;
    }
};

/// Convolutional DPSD over image regions larger than the kernel. Code maps
/// are inferred jointly by FISTA; decoder kernels and the convolutional F_si
/// encoder get one SGD step per sample.
inline ConvDpsdModel conv_dpsd_train(const std::vector<Tensor3>& regions,
                                     const std::vector<int>& labels, const DpsdConfig& cfg,
                                     const ConnectionTable& wiring, int kernel_size,
                                     TrainStats* stats = nullptr) {
    cfg.validate();
    if (!cfg.convolutional) throw parameter_error("conv_dpsd: convolutional flag not set");
    if (regions.empty()) throw parameter_error("conv_dpsd: no samples");
    const Tensor3& first = regions.front();
    if (first.height < kernel_size || first.width < kernel_size)
        throw dimension_error("conv_dpsd: region smaller than kernel");
    if (cfg.discriminative && labels.size() != regions.size())
        throw parameter_error("conv_dpsd: discriminative training needs labels");

    std::mt19937_64 rng(cfg.seed);
    int code_h = first.height - kernel_size + 1;
    int code_w = first.width - kernel_size + 1;

    ConvDpsdModel model;
    model.n_code = cfg.n;
    model.n_channels = first.maps;
    // decoder: in_map = code map, out_map = channel
    ConnectionTable dec_wiring;
    for (const auto& e : wiring.entries) dec_wiring.entries.push_back({e.out_map, e.in_map});
    model.decoder = random_kernel_bank(dec_wiring, kernel_size, rng);
    model.kind = cfg.encoder;
    if (cfg.encoder == EncoderKind::Si) {
        model.encoder.W = random_kernel_bank(wiring, kernel_size, rng);
        model.encoder.S = Matrix(cfg.n, cfg.n);
        model.encoder.shrink = default_shrink(cfg.n);
        model.encoder.n_out = cfg.n;
    } else {
        model.tanh_encoder.W = random_kernel_bank(wiring, kernel_size, rng);
        model.tanh_encoder.g.assign(size_t(cfg.n), 1.0);
        model.tanh_encoder.bias.assign(size_t(cfg.n), 0.0);
        model.tanh_encoder.n_out = cfg.n;
    }
    int code_dim = cfg.n * code_h * code_w;
    if (cfg.discriminative) {
        model.theta.u = Matrix(cfg.n_classes, code_dim);
        gaussian_fill(model.theta.u.a, rng);
        for (auto& v : model.theta.u.a) v *= 0.01;
        model.theta.r.assign(size_t(cfg.n_classes), 0.0);
    }

    std::vector<size_t> order(regions.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    real T = real(regions.size());
    size_t t = 0;
    for (int epoch = 0; epoch < cfg.niter; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        real obj_sum = 0, mse_sum = 0;
        int used = 0, skipped = 0;
        for (size_t idx : order) {
            const Tensor3& x = regions[idx];
            real decay = 1.0 / (1.0 + real(t) / T);
            ++t;
            ConvSmoothTerm H;
            H.x = &x;
            H.decoder = &model.decoder;
            H.n_code = cfg.n;
            H.code_h = code_h;
            H.code_w = code_w;
            if (cfg.discriminative) {
                H.discriminative = true;
                H.y = labels[idx];
                H.theta = &model.theta;
                H.lambda1 = cfg.lambda1;
            }
            Tensor3 z_hat = model.predict(x);
            std::vector<real> z0(z_hat.data.begin(), z_hat.data.end());
            SolveResult sol;
            try {
                sol = fista_solve(H, cfg.solve_with_lambda(cfg.lambda_l1), z0);
            } catch (const numeric_error&) {
                ++skipped;
                continue;
            }
            Tensor3 z = H.unflatten(sol.z);
            obj_sum += sol.trace.back();
            ++used;

            // decoder step: residual correlated with the code maps
            Tensor3 r = convolve_full(z, model.decoder, x.maps);
            for (size_t i = 0; i < r.data.size(); ++i) r.data[i] -= x.data[i];
            real lrd = cfg.lr_dict * decay;
            for (auto& ker : model.decoder.kernels) {
                int p = ker.in_map, q = ker.out_map;
                for (int u = 0; u < kernel_size; ++u)
                    for (int v = 0; v < kernel_size; ++v) {
                        real gsum = 0;
                        for (int a = 0; a < code_h; ++a)
                            for (int b = 0; b < code_w; ++b)
                                gsum += z.at(p, a, b) * r.at(q, a + u, b + v);
                        ker.at(u, v) -= lrd * 2.0 * gsum;
                    }
            }
            normalize_kernels(model.decoder);

            if (cfg.discriminative) {
                std::vector<real> scores = matvec(model.theta.u, sol.z);
                for (size_t k = 0; k < scores.size(); ++k) scores[k] += model.theta.r[k];
                auto sg = logistic_loss(scores, labels[idx]).second;
                real lrt = cfg.lr_theta * decay;
                for (int k = 0; k < model.theta.u.rows; ++k) {
                    for (int j = 0; j < model.theta.u.cols; ++j)
                        model.theta.u.at(k, j) -= lrt * sg[size_t(k)] * sol.z[size_t(j)];
                    model.theta.r[size_t(k)] -= lrt * sg[size_t(k)];
                }
            }

            Tensor3 pred = model.predict(x);
            real mse = 0;
            for (size_t i = 0; i < pred.data.size(); ++i) {
                real d = pred.data[i] - z.data[i];
                mse += d * d;
            }
            mse_sum += mse;
            if (model.kind == EncoderKind::Si)
                encoder_fit_step(model.encoder, x, z, cfg.lr_encoder * decay);
            else
                encoder_fit_step(model.tanh_encoder, x, z, cfg.lr_encoder * decay);
        }
        if (used == 0) throw numeric_error("conv_dpsd: every sample skipped in an epoch");
        if (stats) {
            stats->epoch_objective.push_back(obj_sum / used);
            stats->epoch_encoder_mse.push_back(mse_sum / used);
            stats->skipped += skipped;
        }
    }
    return model;
}

}  // namespace sparsenet
