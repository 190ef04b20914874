#pragma once

#include <cmath>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "sparsenet/contrast_norm.hpp"
#include "sparsenet/dpsd.hpp"
#include "sparsenet/encoder.hpp"
#include "sparsenet/pooling.hpp"
#include "sparsenet/serialize.hpp"
#include "sparsenet/solver.hpp"
#include "sparsenet/tensor.hpp"

namespace sparsenet {

enum class NormPlacement { BeforePool, AfterPool, None };

struct StageConfig {
    EncoderKind encoder = EncoderKind::Si;
    int n_out = 0;
    int kernel = 0;
    int fan_in = 0;  // 0 = connect to all input maps
    NormPlacement norm = NormPlacement::BeforePool;
    NormConfig norm_cfg;
    bool pyramid = false;  // pyramid average pooling (final stage only)
    PoolSpec pool;
    PyramidSpec pyr;
    std::vector<std::pair<int, int>> fixed_wiring;  // (in,out) pairs; empty = random by fan_in
};

struct InitKind {
    enum Kind { Random, Unsup, Disc } kind = Random;
    bool convolutional = false;
};

enum class PenaltySite { PostEncoder, PostPool };

struct Protocol {
    std::vector<InitKind> stage_init;
    bool fine_tune = false;
    bool sparse_state = false;
    real lambda_l1 = 0.4;
    PenaltySite penalty_site = PenaltySite::PostPool;

    void validate() const {
        for (size_t s = 1; s < stage_init.size(); ++s)
            if (stage_init[s].convolutional)
                throw config_error("protocol: convolutional pretraining allowed on stage 1 only");
    }
};

struct Stage {
    StageConfig cfg;
    ConnectionTable table;
    ConvSiEncoder si;
    ConvTanhEncoder tanh_enc;

    Tensor3 encode(const Tensor3& x) const {
        return cfg.encoder == EncoderKind::Si ? si.forward(x) : tanh_enc.forward(x);
    }
};

struct StageShape {
    int enc_maps, enc_h, enc_w;   // after encoder (and abs, norm: same shape)
    int out_maps, out_h, out_w;   // after pooling (tensor stages)
    size_t vec_len;               // pyramid stages
};

struct Model {
    std::vector<Stage> stages;
    std::vector<StageShape> shapes;
    ClassifierParams head;
    real head_l1 = 1e-5;
    real head_l2 = 1e-4;
    int in_maps = 0, in_h = 0, in_w = 0;
    int n_classes = 0;
    uint64_t seed = 0;

    size_t feature_dim() const {
        const auto& s = shapes.back();
        return stages.back().cfg.pyramid ? s.vec_len : size_t(s.out_maps) * s.out_h * s.out_w;
    }
};

/// Validates the shape chain at build time and randomly initializes every
/// stage (Gaussian filters, unit norm) plus the classifier head.
inline Model build_model(const std::vector<StageConfig>& arch, int in_maps, int in_h, int in_w,
                         int n_classes, uint64_t seed) {
    if (arch.empty()) throw config_error("model: no stages");
    Model model;
    model.in_maps = in_maps;
    model.in_h = in_h;
    model.in_w = in_w;
    model.n_classes = n_classes;
    model.seed = seed;
    std::mt19937_64 rng(seed);
    int maps = in_maps, h = in_h, w = in_w;
    for (size_t s = 0; s < arch.size(); ++s) {
        const StageConfig& cfg = arch[s];
        if (cfg.kernel > h || cfg.kernel > w)
            throw config_error("model: stage " + std::to_string(s + 1) + " kernel exceeds input");
        Stage stage;
        stage.cfg = cfg;
        if (!cfg.fixed_wiring.empty()) {
            for (auto [in, out] : cfg.fixed_wiring) {
                if (in < 0 || in >= maps || out < 0 || out >= cfg.n_out)
                    throw config_error("model: fixed wiring index out of range");
                stage.table.entries.push_back({in, out});
            }
        } else {
            int fan = cfg.fan_in > 0 ? cfg.fan_in : maps;
            stage.table = random_connections(maps, cfg.n_out, fan, rng);
        }
        if (cfg.encoder == EncoderKind::Si) {
            stage.si.W = random_kernel_bank(stage.table, cfg.kernel, rng);
            stage.si.S = Matrix(cfg.n_out, cfg.n_out);
            stage.si.shrink = default_shrink(cfg.n_out);
            stage.si.n_out = cfg.n_out;
        } else {
            stage.tanh_enc.W = random_kernel_bank(stage.table, cfg.kernel, rng);
            stage.tanh_enc.g.assign(size_t(cfg.n_out), 1.0);
            stage.tanh_enc.bias.assign(size_t(cfg.n_out), 0.0);
            stage.tanh_enc.n_out = cfg.n_out;
        }
        StageShape shape{};
        shape.enc_maps = cfg.n_out;
        shape.enc_h = h - cfg.kernel + 1;
        shape.enc_w = w - cfg.kernel + 1;
        if (cfg.pyramid) {
            if (cfg.norm == NormPlacement::AfterPool)
                throw config_error("model: pyramid stage cannot normalize after pooling");
            if (s + 1 != arch.size()) throw config_error("model: pyramid pooling only on final stage");
            cfg.pyr.validate(shape.enc_h, shape.enc_w);
            shape.vec_len = pyramid_length(cfg.n_out, shape.enc_h, shape.enc_w, cfg.pyr);
            shape.out_maps = shape.out_h = shape.out_w = 0;
        } else {
            cfg.pool.validate(shape.enc_h, shape.enc_w);
            shape.out_maps = cfg.n_out;
            shape.out_h = PoolSpec::out_dim(shape.enc_h, cfg.pool.window, cfg.pool.stride);
            shape.out_w = PoolSpec::out_dim(shape.enc_w, cfg.pool.window, cfg.pool.stride);
            shape.vec_len = 0;
        }
        model.stages.push_back(std::move(stage));
        model.shapes.push_back(shape);
        maps = shape.out_maps;
        h = shape.out_h;
        w = shape.out_w;
    }
    model.head.u = Matrix(n_classes, int(model.feature_dim()));
    gaussian_fill(model.head.u.a, rng);
    for (auto& v : model.head.u.a) v *= 0.01;
    model.head.r.assign(size_t(n_classes), 0.0);
    return model;
}

// ---- forward --------------------------------------------------------------

struct StageCache {
    Tensor3 input;
    Tensor3 enc_out;
    Tensor3 abs_out;
    Tensor3 nb_sub;          // before-pool subtractive output
    DivisiveCache nb_div;
    Tensor3 pre_pool;
    PoolCache pool_cache;
    Tensor3 pool_out;
    Tensor3 na_sub;          // after-pool subtractive output
    DivisiveCache na_div;
    Tensor3 output;          // tensor output (empty for pyramid stage)
    std::vector<real> vec_output;
};

struct ForwardCache {
    std::vector<StageCache> stages;
    std::vector<real> features;
    std::vector<real> logits;
};

inline void stage_forward(const Stage& stage, const Tensor3& input, StageCache& c) {
    const StageConfig& cfg = stage.cfg;
    c.input = input;
    c.enc_out = stage.encode(input);
    c.abs_out = abs_rectify(c.enc_out);
    if (cfg.norm == NormPlacement::BeforePool) {
        c.nb_sub = subtractive_norm(c.abs_out, cfg.norm_cfg);
        c.pre_pool = divisive_norm(c.nb_sub, cfg.norm_cfg, &c.nb_div);
    } else {
        c.pre_pool = c.abs_out;
    }
    if (cfg.pyramid) {
        c.vec_output = pyramid_pool(c.pre_pool, cfg.pyr);
        return;
    }
    c.pool_out = pool(c.pre_pool, cfg.pool, &c.pool_cache);
    if (cfg.norm == NormPlacement::AfterPool) {
        c.na_sub = subtractive_norm(c.pool_out, cfg.norm_cfg);
        c.output = divisive_norm(c.na_sub, cfg.norm_cfg, &c.na_div);
    } else {
        c.output = c.pool_out;
    }
}

inline ForwardCache forward(const Model& model, const Tensor3& image) {
    if (image.maps != model.in_maps || image.height != model.in_h || image.width != model.in_w)
        throw dimension_error("forward: image shape does not match model input");
    ForwardCache fc;
    fc.stages.resize(model.stages.size());
    const Tensor3* cur = &image;
    for (size_t s = 0; s < model.stages.size(); ++s) {
        stage_forward(model.stages[s], *cur, fc.stages[s]);
        cur = &fc.stages[s].output;
    }
    const StageCache& last = fc.stages.back();
    if (model.stages.back().cfg.pyramid)
        fc.features = last.vec_output;
    else
        fc.features.assign(last.output.data.begin(), last.output.data.end());
    fc.logits = matvec(model.head.u, fc.features);
    for (size_t k = 0; k < fc.logits.size(); ++k) fc.logits[k] += model.head.r[k];
    return fc;
}

// ---- backward -------------------------------------------------------------

struct StageGrads {
    KernelBank gW;
    Matrix gS;
    std::vector<real> gb;  // shrink thresholds or tanh biases
    real gbeta = 0;
    std::vector<real> gg;  // tanh gains
};

/// Backprop one stage; returns grad w.r.t. the stage input and fills `pg`.
inline Tensor3 stage_backward(const Stage& stage, const StageCache& c, const Tensor3& grad_out_t,
                              const std::vector<real>& grad_out_v, StageGrads& pg) {
    const StageConfig& cfg = stage.cfg;
    Tensor3 g;
    if (cfg.pyramid) {
        g = pyramid_pool_grad(c.pre_pool, cfg.pyr, grad_out_v);
    } else {
        Tensor3 gp = grad_out_t;
        if (cfg.norm == NormPlacement::AfterPool) {
            gp = divisive_norm_grad(c.na_sub, cfg.norm_cfg, c.na_div, gp);
            gp = subtractive_norm_grad(gp, cfg.norm_cfg);
        }
        g = pool_grad(c.pre_pool, cfg.pool, gp, &c.pool_cache);
    }
    if (cfg.norm == NormPlacement::BeforePool) {
        g = divisive_norm_grad(c.nb_sub, cfg.norm_cfg, c.nb_div, g);
        g = subtractive_norm_grad(g, cfg.norm_cfg);
    }
    g = abs_rectify_grad(c.enc_out, g);
    if (cfg.encoder == EncoderKind::Si) {
        auto gr = stage.si.backward(c.input, g);
        pg.gW = std::move(gr.gW);
        pg.gS = std::move(gr.gS);
        pg.gb = std::move(gr.gb);
        pg.gbeta = gr.gbeta;
        return gr.gx;
    }
    auto gr = stage.tanh_enc.backward(c.input, g);
    pg.gW = std::move(gr.gW);
    pg.gg = std::move(gr.gg);
    pg.gb = std::move(gr.gbias);
    return gr.gx;
}

// ---- supervised training ---------------------------------------------------

struct SupervisedOptions {
    bool sparse_state = false;
    real lambda_l1 = 0.4;
    PenaltySite penalty_site = PenaltySite::PostPool;
    bool train_stages = true;  // false = classifier-only
};

namespace detail {

inline void check_finite_loss(real loss, const char* where) {
    if (!std::isfinite(loss)) throw numeric_error(std::string("non-finite loss at ") + where);
}

inline const Tensor3& penalty_state(const StageCache& c, PenaltySite site) {
    if (site == PenaltySite::PostEncoder) return c.enc_out;
    return c.output.maps > 0 ? c.output : c.pre_pool;
}

}  // namespace detail

/// Cross-entropy (+ optional L1 on the configured internal states, + head
/// regularizers) backpropagated through every module; one SGD step.
inline real supervised_step(Model& model, const Tensor3& image, int label, real lr,
                            const SupervisedOptions& opt) {
    ForwardCache fc = forward(model, image);
    auto [loss, score_grad] = logistic_loss(fc.logits, label);
    detail::check_finite_loss(loss, "classifier head");
    for (size_t i = 0; i < model.head.u.a.size(); ++i) {
        loss += model.head_l1 * std::abs(model.head.u.a[i]) +
                model.head_l2 * model.head.u.a[i] * model.head.u.a[i];
    }
    if (opt.sparse_state) {
        for (size_t s = 0; s < fc.stages.size(); ++s) {
            if (model.stages[s].cfg.pyramid && opt.penalty_site == PenaltySite::PostPool) {
                for (real v : fc.stages[s].vec_output) loss += opt.lambda_l1 * std::abs(v);
            } else {
                const Tensor3& st = detail::penalty_state(fc.stages[s], opt.penalty_site);
                for (real v : st.data) loss += opt.lambda_l1 * std::abs(v);
            }
        }
    }
    if (lr == 0) return loss;

    // head gradients and feature gradient
    std::vector<real> gfeat = matvec_t(model.head.u, score_grad);
    for (int k = 0; k < model.head.u.rows; ++k) {
        for (int j = 0; j < model.head.u.cols; ++j) {
            real w = model.head.u.at(k, j);
            real g = score_grad[size_t(k)] * fc.features[size_t(j)] + model.head_l1 * sgn(w) +
                     2.0 * model.head_l2 * w;
            model.head.u.at(k, j) = w - lr * g;
        }
        model.head.r[size_t(k)] -= lr * score_grad[size_t(k)];
    }
    if (!opt.train_stages) return loss;

    // backprop through the stages
    std::vector<StageGrads> grads(model.stages.size());
    Tensor3 gt;  // tensor grad flowing down
    std::vector<real> gv;
    size_t last = model.stages.size() - 1;
    if (model.stages[last].cfg.pyramid)
        gv = gfeat;
    else {
        const StageShape& sh = model.shapes[last];
        gt = Tensor3(sh.out_maps, sh.out_h, sh.out_w);
        std::copy(gfeat.begin(), gfeat.end(), gt.data.begin());
    }
    for (size_t si = model.stages.size(); si-- > 0;) {
        const StageCache& c = fc.stages[si];
        if (opt.sparse_state) {
            if (opt.penalty_site == PenaltySite::PostPool) {
                if (model.stages[si].cfg.pyramid) {
                    for (size_t i = 0; i < gv.size(); ++i)
                        gv[i] += opt.lambda_l1 * sgn(c.vec_output[i]);
                } else {
                    for (size_t i = 0; i < gt.data.size(); ++i)
                        gt.data[i] += opt.lambda_l1 * sgn(c.output.data[i]);
                }
            }
            // PostEncoder penalties are added inside stage_backward's input
            // path via the chain below instead; handled after pool backward
        }
        Tensor3 gin = stage_backward(model.stages[si], c, gt, gv, grads[si]);
        if (opt.sparse_state && opt.penalty_site == PenaltySite::PostEncoder) {
            // redo with the penalty injected at the encoder output
            Tensor3 extra(c.enc_out.maps, c.enc_out.height, c.enc_out.width);
            for (size_t i = 0; i < extra.data.size(); ++i)
                extra.data[i] = opt.lambda_l1 * sgn(c.enc_out.data[i]);
            StageGrads pg2;
            Tensor3 gin2;
            if (model.stages[si].cfg.encoder == EncoderKind::Si) {
                auto gr = model.stages[si].si.backward(c.input, extra);
                for (size_t k = 0; k < grads[si].gW.kernels.size(); ++k)
                    for (size_t i = 0; i < grads[si].gW.kernels[k].w.size(); ++i)
                        grads[si].gW.kernels[k].w[i] += gr.gW.kernels[k].w[i];
                for (size_t i = 0; i < grads[si].gS.a.size(); ++i) grads[si].gS.a[i] += gr.gS.a[i];
                for (size_t i = 0; i < grads[si].gb.size(); ++i) grads[si].gb[i] += gr.gb[i];
                grads[si].gbeta += gr.gbeta;
                gin2 = std::move(gr.gx);
            } else {
                auto gr = model.stages[si].tanh_enc.backward(c.input, extra);
                for (size_t k = 0; k < grads[si].gW.kernels.size(); ++k)
                    for (size_t i = 0; i < grads[si].gW.kernels[k].w.size(); ++i)
                        grads[si].gW.kernels[k].w[i] += gr.gW.kernels[k].w[i];
                for (size_t i = 0; i < grads[si].gg.size(); ++i) grads[si].gg[i] += gr.gg[i];
                for (size_t i = 0; i < grads[si].gb.size(); ++i) grads[si].gb[i] += gr.gbias[i];
                gin2 = std::move(gr.gx);
            }
            for (size_t i = 0; i < gin.data.size(); ++i) gin.data[i] += gin2.data[i];
        }
        gt = std::move(gin);
        gv.clear();
    }

    // apply the SGD step
    for (size_t si = 0; si < model.stages.size(); ++si) {
        Stage& st = model.stages[si];
        StageGrads& g = grads[si];
        if (st.cfg.encoder == EncoderKind::Si) {
            for (size_t k = 0; k < st.si.W.kernels.size(); ++k) {
                check_finite(g.gW.kernels[k].w, "stage filters");
                for (size_t i = 0; i < st.si.W.kernels[k].w.size(); ++i)
                    st.si.W.kernels[k].w[i] -= lr * g.gW.kernels[k].w[i];
            }
            for (size_t i = 0; i < st.si.S.a.size(); ++i) st.si.S.a[i] -= lr * g.gS.a[i];
            for (int p = 0; p < st.si.S.rows; ++p) st.si.S.at(p, p) = 0;
            for (size_t i = 0; i < st.si.shrink.b.size(); ++i) st.si.shrink.b[i] -= lr * g.gb[i];
            st.si.shrink.beta -= lr * g.gbeta;
            if (st.si.shrink.beta < 1e-3) st.si.shrink.beta = 1e-3;
        } else {
            for (size_t k = 0; k < st.tanh_enc.W.kernels.size(); ++k) {
                check_finite(g.gW.kernels[k].w, "stage filters");
                for (size_t i = 0; i < st.tanh_enc.W.kernels[k].w.size(); ++i)
                    st.tanh_enc.W.kernels[k].w[i] -= lr * g.gW.kernels[k].w[i];
            }
            for (size_t i = 0; i < st.tanh_enc.g.size(); ++i) {
                st.tanh_enc.g[i] -= lr * g.gg[i];
                st.tanh_enc.bias[i] -= lr * g.gb[i];
            }
        }
    }
    return loss;
}

// ---- classifier-only training ----------------------------------------------

/// SGD on the convex L1-L2-regularized multinomial logistic objective.
inline ClassifierParams classifier_train(const std::vector<std::vector<real>>& features,
                                         const std::vector<int>& labels, int n_classes, real l1,
                                         real l2, int epochs = 100, real lr = 0.05,
                                         uint64_t seed = 1) {
    if (features.empty()) throw parameter_error("classifier: no samples");
    int dim = int(features.front().size());
    ClassifierParams theta;
    theta.u = Matrix(n_classes, dim);
    theta.r.assign(size_t(n_classes), 0.0);
    std::mt19937_64 rng(seed);
    std::vector<size_t> order(features.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    real T = real(features.size());
    size_t t = 0;
    for (int e = 0; e < epochs; ++e) {
        std::shuffle(order.begin(), order.end(), rng);
        for (size_t idx : order) {
            real decay = lr / (1.0 + real(t) / (10.0 * T));
            ++t;
            const auto& x = features[idx];
            std::vector<real> scores = matvec(theta.u, x);
            for (size_t k = 0; k < scores.size(); ++k) scores[k] += theta.r[k];
            auto sg = logistic_loss(scores, labels[idx]).second;
            for (int k = 0; k < n_classes; ++k) {
                for (int j = 0; j < dim; ++j) {
                    real w = theta.u.at(k, j);
                    theta.u.at(k, j) =
                        w - decay * (sg[size_t(k)] * x[size_t(j)] + l1 * sgn(w) + 2.0 * l2 * w);
                }
                theta.r[size_t(k)] -= decay * sg[size_t(k)];
            }
        }
    }
    return theta;
}

inline real classifier_objective(const ClassifierParams& theta,
                                 const std::vector<std::vector<real>>& features,
                                 const std::vector<int>& labels, real l1, real l2) {
    real obj = 0;
    for (size_t i = 0; i < features.size(); ++i) {
        std::vector<real> scores = matvec(theta.u, features[i]);
        for (size_t k = 0; k < scores.size(); ++k) scores[k] += theta.r[k];
        obj += logistic_loss(scores, labels[i]).first;
    }
    obj /= real(features.size());
    for (real w : theta.u.a) obj += l1 * std::abs(w) + l2 * w * w;
    return obj;
}

// ---- serialization ---------------------------------------------------------

constexpr uint32_t kModelMagic = 0x4d4e5053;  // "SPNM"
constexpr uint32_t kModelVersion = 1;

inline void save_model(const Model& model, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw format_error("model: cannot open " + path + " for writing");
    io::put_u32(f, kModelMagic);
    io::put_u32(f, kModelVersion);
    io::put_i32(f, model.in_maps);
    io::put_i32(f, model.in_h);
    io::put_i32(f, model.in_w);
    io::put_i32(f, model.n_classes);
    io::put_u64(f, model.seed);
    io::put_f64(f, model.head_l1);
    io::put_f64(f, model.head_l2);
    io::put_u64(f, model.stages.size());
    for (const auto& st : model.stages) {
        const auto& c = st.cfg;
        io::put_i32(f, c.encoder == EncoderKind::Si ? 1 : 0);
        io::put_i32(f, c.n_out);
        io::put_i32(f, c.kernel);
        io::put_i32(f, c.fan_in);
        io::put_i32(f, int(c.norm));
        io::put_i32(f, c.norm_cfg.window);
        io::put_f64(f, c.norm_cfg.sigma);
        io::put_i32(f, int(c.norm_cfg.floor_mode));
        io::put_f64(f, c.norm_cfg.floor_constant);
        io::put_i32(f, c.pyramid ? 1 : 0);
        io::put_i32(f, c.pool.kind == PoolKind::Max ? 1 : 0);
        io::put_i32(f, c.pool.window);
        io::put_i32(f, c.pool.stride);
        io::put_u64(f, c.pyr.levels.size());
        for (auto [win, stp] : c.pyr.levels) {
            io::put_i32(f, win);
            io::put_i32(f, stp);
        }
        io::put_table(f, st.table);
        if (c.encoder == EncoderKind::Si) {
            io::put_bank(f, st.si.W);
            io::put_matrix(f, st.si.S);
            io::put_vec(f, st.si.shrink.b);
            io::put_f64(f, st.si.shrink.beta);
        } else {
            io::put_bank(f, st.tanh_enc.W);
            io::put_vec(f, st.tanh_enc.g);
            io::put_vec(f, st.tanh_enc.bias);
        }
    }
    io::put_matrix(f, model.head.u);
    io::put_vec(f, model.head.r);
}

inline Model load_model(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw format_error("model: cannot open " + path);
    if (io::get_u32(f) != kModelMagic) throw format_error("model: bad magic");
    if (io::get_u32(f) != kModelVersion) throw format_error("model: unsupported version");
    int in_maps = io::get_i32(f);
    int in_h = io::get_i32(f);
    int in_w = io::get_i32(f);
    int n_classes = io::get_i32(f);
    uint64_t seed = io::get_u64(f);
    real hl1 = io::get_f64(f);
    real hl2 = io::get_f64(f);
    uint64_t n_stages = io::get_u64(f);
    std::vector<StageConfig> arch;
    struct Raw {
        ConnectionTable table;
        KernelBank bank;
        Matrix S;
        std::vector<real> b, g, bias;
        real beta = 0;
    };
    std::vector<Raw> raws;
    for (uint64_t s = 0; s < n_stages; ++s) {
        StageConfig c;
        c.encoder = io::get_i32(f) == 1 ? EncoderKind::Si : EncoderKind::Tanh;
        c.n_out = io::get_i32(f);
        c.kernel = io::get_i32(f);
        c.fan_in = io::get_i32(f);
        c.norm = NormPlacement(io::get_i32(f));
        c.norm_cfg.window = io::get_i32(f);
        c.norm_cfg.sigma = io::get_f64(f);
        c.norm_cfg.floor_mode = FloorMode(io::get_i32(f));
        c.norm_cfg.floor_constant = io::get_f64(f);
        c.pyramid = io::get_i32(f) == 1;
        c.pool.kind = io::get_i32(f) == 1 ? PoolKind::Max : PoolKind::Avg;
        c.pool.window = io::get_i32(f);
        c.pool.stride = io::get_i32(f);
        uint64_t nl = io::get_u64(f);
        for (uint64_t l = 0; l < nl; ++l) {
            int win = io::get_i32(f);
            int stp = io::get_i32(f);
            c.pyr.levels.emplace_back(win, stp);
        }
        Raw raw;
        raw.table = io::get_table(f);
        if (c.encoder == EncoderKind::Si) {
            raw.bank = io::get_bank(f);
            raw.S = io::get_matrix(f);
            raw.b = io::get_vec(f);
            raw.beta = io::get_f64(f);
        } else {
            raw.bank = io::get_bank(f);
            raw.g = io::get_vec(f);
            raw.bias = io::get_vec(f);
        }
        arch.push_back(c);
        raws.push_back(std::move(raw));
    }
    Model model = build_model(arch, in_maps, in_h, in_w, n_classes, seed);
    model.head_l1 = hl1;
    model.head_l2 = hl2;
    for (size_t s = 0; s < model.stages.size(); ++s) {
        Stage& st = model.stages[s];
        st.table = std::move(raws[s].table);
        if (st.cfg.encoder == EncoderKind::Si) {
            st.si.W = std::move(raws[s].bank);
            st.si.S = std::move(raws[s].S);
            st.si.shrink.b = std::move(raws[s].b);
            st.si.shrink.beta = raws[s].beta;
        } else {
            st.tanh_enc.W = std::move(raws[s].bank);
            st.tanh_enc.g = std::move(raws[s].g);
            st.tanh_enc.bias = std::move(raws[s].bias);
        }
    }
    model.head.u = io::get_matrix(f);
    model.head.r = io::get_vec(f);
    return model;
}

}  // namespace sparsenet
