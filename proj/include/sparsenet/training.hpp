#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "sparsenet/data_io.hpp"
#include "sparsenet/dpsd.hpp"
#include "sparsenet/netstack.hpp"

namespace sparsenet {

// ---- patch / region sampling ------------------------------------------------

/// Random k x k patches (all maps, map-major flattening) from random tensors.
inline std::vector<std::vector<real>> extract_patches(const std::vector<Tensor3>& inputs,
                                                      const std::vector<int>& labels, int k,
                                                      int count, std::mt19937_64& rng,
                                                      std::vector<int>* patch_labels = nullptr) {
    if (inputs.empty()) throw parameter_error("extract_patches: no inputs");
    std::uniform_int_distribution<size_t> pick(0, inputs.size() - 1);
    std::vector<std::vector<real>> patches;
    patches.reserve(size_t(count));
    for (int c = 0; c < count; ++c) {
        size_t idx = pick(rng);
        const Tensor3& t = inputs[idx];
        if (t.height < k || t.width < k) throw dimension_error("extract_patches: tensor smaller than patch");
        std::uniform_int_distribution<int> pi(0, t.height - k), pj(0, t.width - k);
        int i0 = pi(rng), j0 = pj(rng);
        std::vector<real> p(size_t(t.maps) * k * k);
        for (int m = 0; m < t.maps; ++m)
            for (int u = 0; u < k; ++u)
                for (int v = 0; v < k; ++v)
                    p[(size_t(m) * k + u) * k + v] = t.at(m, i0 + u, j0 + v);
        patches.push_back(std::move(p));
        if (patch_labels) patch_labels->push_back(labels.empty() ? 0 : labels[idx]);
    }
    return patches;
}

/// Random square regions (all maps) for convolutional pretraining.
inline std::vector<Tensor3> extract_regions(const std::vector<Tensor3>& inputs,
                                            const std::vector<int>& labels, int side, int count,
                                            std::mt19937_64& rng,
                                            std::vector<int>* region_labels = nullptr) {
    if (inputs.empty()) throw parameter_error("extract_regions: no inputs");
    std::uniform_int_distribution<size_t> pick(0, inputs.size() - 1);
    std::vector<Tensor3> regions;
    regions.reserve(size_t(count));
    for (int c = 0; c < count; ++c) {
        size_t idx = pick(rng);
        const Tensor3& t = inputs[idx];
        if (t.height < side || t.width < side)
            throw dimension_error("extract_regions: tensor smaller than region");
        std::uniform_int_distribution<int> pi(0, t.height - side), pj(0, t.width - side);
        int i0 = pi(rng), j0 = pj(rng);
        Tensor3 r(t.maps, side, side);
        for (int m = 0; m < t.maps; ++m)
            for (int u = 0; u < side; ++u)
                for (int v = 0; v < side; ++v) r.at(m, u, v) = t.at(m, i0 + u, j0 + v);
        regions.push_back(std::move(r));
        if (region_labels) region_labels->push_back(labels.empty() ? 0 : labels[idx]);
    }
    return regions;
}

// ---- patch <-> conv parameter mapping ----------------------------------------

/// 0/1 mask (n_out x in_maps*k*k) restricting each code unit to the input
/// maps its stage connection table wires it to.
inline Matrix mask_from_table(const ConnectionTable& table, int in_maps, int k, int n_out) {
    Matrix mask(n_out, in_maps * k * k);
    for (const auto& e : table.entries)
        for (int u = 0; u < k * k; ++u) mask.at(e.out_map, e.in_map * k * k + u) = 1.0;
    return mask;
}

/// Copies patch-pretrained encoder parameters into a stage's conv encoder.
/// Patch layout is map-major k x k blocks, matching extract_patches.
inline void apply_patch_pretrain(Stage& stage, const PatchDpsdModel& pre, int k) {
    if (stage.cfg.encoder == EncoderKind::Si) {
        for (auto& ker : stage.si.W.kernels)
            for (int u = 0; u < k; ++u)
                for (int v = 0; v < k; ++v)
                    ker.at(u, v) = pre.si.W.at(ker.out_map, ker.in_map * k * k + u * k + v);
        stage.si.S = pre.si.S;
        stage.si.shrink = pre.si.shrink;
    } else {
        for (auto& ker : stage.tanh_enc.W.kernels)
            for (int u = 0; u < k; ++u)
                for (int v = 0; v < k; ++v)
                    ker.at(u, v) = pre.tanh_enc.W.at(ker.out_map, ker.in_map * k * k + u * k + v);
        stage.tanh_enc.g = pre.tanh_enc.g;
        stage.tanh_enc.bias = pre.tanh_enc.bias;
    }
}

/// Copies convolutionally pretrained encoder parameters into a stage.
inline void apply_conv_pretrain(Stage& stage, const ConvDpsdModel& pre) {
    if (stage.cfg.encoder == EncoderKind::Si) {
        if (pre.kind != EncoderKind::Si) throw config_error("pretrain: encoder kind mismatch");
        stage.si.W = pre.encoder.W;
        stage.si.S = pre.encoder.S;
        stage.si.shrink = pre.encoder.shrink;
    } else {
        if (pre.kind != EncoderKind::Tanh) throw config_error("pretrain: encoder kind mismatch");
        stage.tanh_enc.W = pre.tanh_encoder.W;
        stage.tanh_enc.g = pre.tanh_encoder.g;
        stage.tanh_enc.bias = pre.tanh_encoder.bias;
    }
}

// ---- evaluation ----------------------------------------------------------------

struct EvalResult {
    real loss = 0;
    real accuracy = 0;
};

inline std::vector<real> model_features(const Model& model, const Tensor3& image) {
    return forward(model, image).features;
}

/// Mean cross-entropy and accuracy over a sample list. Parallel over samples;
/// results are stored by index so thread count never changes the outcome.
inline EvalResult evaluate(const Model& model, const std::vector<std::pair<Tensor3, int>>& samples,
                           int threads = 1) {
    if (samples.empty()) return {};
    std::vector<real> losses(samples.size());
    std::vector<char> correct(samples.size());
    auto work = [&](size_t begin, size_t end) {
        for (size_t i = begin; i < end; ++i) {
            ForwardCache fc = forward(model, samples[i].first);
            auto [loss, grad] = logistic_loss(fc.logits, samples[i].second);
            (void)grad;
            losses[i] = loss;
            int arg = 0;
            for (size_t k = 1; k < fc.logits.size(); ++k)
                if (fc.logits[k] > fc.logits[size_t(arg)]) arg = int(k);
            correct[i] = (arg == samples[i].second);
        }
    };
    threads = std::max(1, threads);
    if (threads == 1 || samples.size() < 8) {
        work(0, samples.size());
    } else {
        std::vector<std::thread> pool;
        size_t chunk = (samples.size() + threads - 1) / size_t(threads);
        for (int t = 0; t < threads; ++t) {
            size_t b = size_t(t) * chunk, e = std::min(samples.size(), b + chunk);
            if (b >= e) break;
            pool.emplace_back(work, b, e);
        }
        for (auto& th : pool) th.join();
    }
    EvalResult r;
    size_t ncorrect = 0;
    for (size_t i = 0; i < samples.size(); ++i) {
        r.loss += losses[i];
        ncorrect += correct[i] ? 1 : 0;
    }
    r.loss /= real(samples.size());
    r.accuracy = real(ncorrect) / real(samples.size());
    return r;
}

// ---- protocol runner -------------------------------------------------------------

struct TrainHyper {
    int pretrain_patches = 2000;
    int pretrain_epochs = 1;
    int conv_region_side = 16;
    int supervised_epochs = 10;
    real supervised_lr = 0.002;
    int classifier_epochs = 60;
    real classifier_lr = 0.05;
    real lambda_l1_code = 0.5;  // solver L1 weight during pretraining
    real lambda1_recon = 1.0;
    real lr_dict = 0.01;
    real lr_encoder = 0.001;
    real lr_theta = 0.001;
    uint64_t seed = 0;
    int threads = 1;
};

struct MetricsRow {
    int epoch;
    std::string split;
    real loss;
    real accuracy;
};

inline void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
    std::ofstream f(path);
    if (!f) throw format_error("metrics: cannot open " + path + " for writing");
    f << "epoch,split,loss,accuracy\n";
    char buf[128];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%d,%s,%.17g,%.17g\n", r.epoch, r.split.c_str(), double(r.loss),
                      double(r.accuracy));
        f << buf;
    }
}

struct RunResult {
    Model model;
    std::vector<MetricsRow> metrics;
    std::vector<TrainStats> pretrain_stats;  // one per pretrained stage
};

namespace detail {

/// Forward the dataset through the first `n_stages` stages (frozen).
inline std::vector<Tensor3> stage_inputs(const Model& model,
                                         const std::vector<std::pair<Tensor3, int>>& samples,
                                         size_t n_stages, int threads) {
    std::vector<Tensor3> out(samples.size());
    auto work = [&](size_t begin, size_t end) {
        for (size_t i = begin; i < end; ++i) {
            Tensor3 cur = samples[i].first;
            for (size_t s = 0; s < n_stages; ++s) {
                StageCache c;
                stage_forward(model.stages[s], cur, c);
                cur = c.output;
            }
            out[i] = std::move(cur);
        }
    };
    threads = std::max(1, threads);
    if (threads == 1 || samples.size() < 8) {
        work(0, samples.size());
    } else {
        std::vector<std::thread> pool;
        size_t chunk = (samples.size() + threads - 1) / size_t(threads);
        for (int t = 0; t < threads; ++t) {
            size_t b = size_t(t) * chunk, e = std::min(samples.size(), b + chunk);
            if (b >= e) break;
            pool.emplace_back(work, b, e);
        }
        for (auto& th : pool) th.join();
    }
    return out;
}

}  // namespace detail

/// Stage-wise greedy pretraining: stage k trains on the frozen output of
/// stages < k. Patch-based by default; convolutional on stage 1 when asked.
inline std::vector<TrainStats> pretrain_model(Model& model,
                                              const std::vector<std::pair<Tensor3, int>>& train,
                                              const Protocol& protocol, const TrainHyper& hyper) {
    std::vector<TrainStats> all_stats;
    std::mt19937_64 rng(hyper.seed ^ 0x9e3779b97f4a7c15ULL);
    for (size_t s = 0; s < model.stages.size(); ++s) {
        const InitKind& init = protocol.stage_init[s];
        if (init.kind == InitKind::Random) continue;
        Stage& stage = model.stages[s];
        DpsdConfig cfg;
        cfg.discriminative = (init.kind == InitKind::Disc);
        cfg.encoder = stage.cfg.encoder;
        cfg.n = stage.cfg.n_out;
        cfg.n_classes = model.n_classes;
        cfg.lambda_l1 = hyper.lambda_l1_code;
        cfg.lambda1 = hyper.lambda1_recon;
        cfg.lr_dict = hyper.lr_dict;
        cfg.lr_encoder = hyper.lr_encoder;
        cfg.lr_theta = hyper.lr_theta;
        cfg.niter = hyper.pretrain_epochs;
        cfg.seed = hyper.seed + 31 * s + 7;

        std::vector<Tensor3> inputs = detail::stage_inputs(model, train, s, hyper.threads);
        std::vector<int> labels;
        labels.reserve(train.size());
        for (const auto& [t, y] : train) labels.push_back(y);

        TrainStats stats;
        if (init.convolutional) {
            cfg.convolutional = true;
            std::vector<int> rlabels;
            auto regions = extract_regions(inputs, labels, hyper.conv_region_side,
                                           hyper.pretrain_patches, rng, &rlabels);
            ConvDpsdModel pre = conv_dpsd_train(regions, rlabels, cfg, stage.table,
                                                stage.cfg.kernel, &stats);
            apply_conv_pretrain(stage, pre);
        } else {
            std::vector<int> plabels;
            auto patches = extract_patches(inputs, labels, stage.cfg.kernel,
                                           hyper.pretrain_patches, rng, &plabels);
            int in_maps = inputs.front().maps;
            Matrix mask;
            if (stage.cfg.fan_in > 0 && stage.cfg.fan_in < in_maps)
                mask = mask_from_table(stage.table, in_maps, stage.cfg.kernel, stage.cfg.n_out);
            PatchDpsdModel pre = dpsd_train(patches, plabels, cfg, &stats, mask);
            apply_patch_pretrain(stage, pre, stage.cfg.kernel);
        }
        all_stats.push_back(std::move(stats));
    }
    return all_stats;
}

/// Trains the classifier head on frozen features of the current stages.
inline void fit_head(Model& model, const std::vector<std::pair<Tensor3, int>>& train,
                     const TrainHyper& hyper) {
    std::vector<std::vector<real>> feats(train.size());
    std::vector<int> labels(train.size());
    auto work = [&](size_t begin, size_t end) {
        for (size_t i = begin; i < end; ++i) {
            feats[i] = model_features(model, train[i].first);
            labels[i] = train[i].second;
        }
    };
    int threads = std::max(1, hyper.threads);
    if (threads == 1 || train.size() < 8) {
        work(0, train.size());
    } else {
        std::vector<std::thread> pool;
        size_t chunk = (train.size() + threads - 1) / size_t(threads);
        for (int t = 0; t < threads; ++t) {
            size_t b = size_t(t) * chunk, e = std::min(train.size(), b + chunk);
            if (b >= e) break;
            pool.emplace_back(work, b, e);
        }
        for (auto& th : pool) th.join();
    }
    model.head = classifier_train(feats, labels, model.n_classes, model.head_l1, model.head_l2,
                                  hyper.classifier_epochs, hyper.classifier_lr, hyper.seed + 101);
}

/// Optional global supervised phase over an already-initialized model with a
/// fitted head. Logs per-epoch train/test loss and accuracy (epoch 0 is the
/// pre-fine-tuning state).
inline std::vector<MetricsRow> run_supervised_phase(
    Model& model, const std::vector<std::pair<Tensor3, int>>& train,
    const std::vector<std::pair<Tensor3, int>>& test, const Protocol& protocol,
    const TrainHyper& hyper) {
    std::vector<MetricsRow> metrics;
    auto log_epoch = [&](int epoch) {
        EvalResult tr = evaluate(model, train, hyper.threads);
        metrics.push_back({epoch, "train", tr.loss, tr.accuracy});
        if (!test.empty()) {
            EvalResult te = evaluate(model, test, hyper.threads);
            metrics.push_back({epoch, "test", te.loss, te.accuracy});
        }
    };
    log_epoch(0);

    if (protocol.fine_tune || protocol.sparse_state) {
        SupervisedOptions opt;
        opt.sparse_state = protocol.sparse_state;
        opt.lambda_l1 = protocol.lambda_l1;
        opt.penalty_site = protocol.penalty_site;
        std::mt19937_64 rng(hyper.seed + 777);
        std::vector<size_t> order(train.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        real T = real(train.size());
        size_t t = 0;
        for (int epoch = 1; epoch <= hyper.supervised_epochs; ++epoch) {
            std::shuffle(order.begin(), order.end(), rng);
            for (size_t idx : order) {
                real lr = hyper.supervised_lr / (1.0 + real(t) / (10.0 * T));
                ++t;
                supervised_step(model, train[idx].first, train[idx].second, lr, opt);
            }
            log_epoch(epoch);
        }
    }
    return metrics;
}

/// Full training protocol: init phase (random / dpsd / conv-dpsd per stage),
/// classifier fit, then optional global supervised phase.
inline RunResult run_protocol(const std::vector<std::pair<Tensor3, int>>& train,
                              const std::vector<std::pair<Tensor3, int>>& test,
                              const std::vector<StageConfig>& arch, const Protocol& protocol,
                              const TrainHyper& hyper) {
    protocol.validate();
    if (train.empty()) throw parameter_error("run_protocol: empty training set");
    if (protocol.stage_init.size() != arch.size())
        throw config_error("run_protocol: protocol stage count does not match architecture");
    const Tensor3& x0 = train.front().first;
    int n_classes = 0;
    for (const auto& [t, y] : train) n_classes = std::max(n_classes, y + 1);
    for (const auto& [t, y] : test) n_classes = std::max(n_classes, y + 1);

    RunResult res;
    res.model = build_model(arch, x0.maps, x0.height, x0.width, n_classes, hyper.seed);
    res.pretrain_stats = pretrain_model(res.model, train, protocol, hyper);
    fit_head(res.model, train, hyper);
    res.metrics = run_supervised_phase(res.model, train, test, protocol, hyper);
    return res;
}

}  // namespace sparsenet
