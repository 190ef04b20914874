#pragma once

#include <random>
#include <string>
#include <vector>

#include "sparsenet/netstack.hpp"

namespace sparsenet {

/// Caltech two-stage network: 1x143x143 -> 64x26x26 -> 256x4x4 (or pyramid
/// vector of length 256*(16+9+4+1)).
inline std::vector<StageConfig> caltech_arch(EncoderKind enc = EncoderKind::Si,
                                             bool pyramid = false) {
    StageConfig s1;
    s1.encoder = enc;
    s1.n_out = 64;
    s1.kernel = 9;
    s1.norm = NormPlacement::BeforePool;
    s1.norm_cfg.window = 9;
    s1.norm_cfg.sigma = 1.6;
    s1.pool = PoolSpec{PoolKind::Avg, 10, 5};

    StageConfig s2;
    s2.encoder = enc;
    s2.n_out = 256;
    s2.kernel = 9;
    s2.fan_in = 16;
    s2.norm = NormPlacement::BeforePool;
    s2.norm_cfg.window = 9;
    s2.norm_cfg.sigma = 1.6;
    if (pyramid) {
        s2.pyramid = true;
        s2.pyr.levels = {{6, 4}, {8, 5}, {10, 8}, {18, 18}};
    } else {
        s2.pool = PoolSpec{PoolKind::Avg, 6, 4};
    }
    return {s1, s2};
}

/// CIFAR two-stage network: 3x32x32 -> 64x12x12 -> 256x4x4. The max-pool
/// variant normalizes after pooling; the average variant before. Stage-1
/// wiring: Y to all 64 maps, U and V each to a random subset of 16.
inline std::vector<StageConfig> cifar_arch(EncoderKind enc = EncoderKind::Si,
                                           bool max_pool = true, uint64_t wiring_seed = 0) {
    StageConfig s1;
    s1.encoder = enc;
    s1.n_out = 64;
    s1.kernel = 7;
    for (int p = 0; p < 64; ++p) s1.fixed_wiring.emplace_back(0, p);
    std::mt19937_64 rng(wiring_seed ^ 0xc1fa9ULL);
    std::vector<int> idx(64);
    for (int i = 0; i < 64; ++i) idx[i] = i;
    for (int ch = 1; ch <= 2; ++ch) {
        std::shuffle(idx.begin(), idx.end(), rng);
        std::vector<int> pick(idx.begin(), idx.begin() + 16);
        std::sort(pick.begin(), pick.end());
        for (int p : pick) s1.fixed_wiring.emplace_back(ch, p);
    }
    s1.norm_cfg.window = 9;
    s1.norm_cfg.sigma = 1.6;
    if (max_pool) {
        s1.norm = NormPlacement::AfterPool;
        s1.pool = PoolSpec{PoolKind::Max, 4, 2};
    } else {
        s1.norm = NormPlacement::BeforePool;
        s1.pool = PoolSpec{PoolKind::Avg, 4, 2};
    }

    StageConfig s2;
    s2.encoder = enc;
    s2.n_out = 256;
    s2.kernel = 7;
    s2.fan_in = 32;
    s2.norm_cfg.window = 3;
    s2.norm_cfg.sigma = 1.6;
    if (max_pool) {
        s2.norm = NormPlacement::AfterPool;
        s2.pool = PoolSpec{PoolKind::Max, 3, 1};
    } else {
        s2.norm = NormPlacement::BeforePool;
        s2.pool = PoolSpec{PoolKind::Avg, 3, 1};
    }
    return {s1, s2};
}

/// Inversion-study network: 1x143x143 -> 64x66x66 -> 128x28x28, with the
/// contrast normalization modules toggleable at both stages.
inline std::vector<StageConfig> inversion_arch(bool with_cn = true,
                                               EncoderKind enc = EncoderKind::Si) {
    StageConfig s1;
    s1.encoder = enc;
    s1.n_out = 64;
    s1.kernel = 9;
    s1.norm = with_cn ? NormPlacement::BeforePool : NormPlacement::None;
    s1.norm_cfg.window = 9;
    s1.norm_cfg.sigma = 1.6;
    s1.pool = PoolSpec{PoolKind::Avg, 5, 2};

    StageConfig s2;
    s2.encoder = enc;
    s2.n_out = 128;
    s2.kernel = 9;
    s2.fan_in = 32;
    s2.norm = with_cn ? NormPlacement::BeforePool : NormPlacement::None;
    s2.norm_cfg.window = 9;
    s2.norm_cfg.sigma = 1.6;
    s2.pool = PoolSpec{PoolKind::Avg, 4, 2};
    return {s1, s2};
}

}  // namespace sparsenet
