#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "sparsenet/contrast_norm.hpp"
#include "sparsenet/tensor.hpp"

namespace sparsenet {

struct Dataset {
    std::vector<std::pair<Tensor3, int>> samples;
    std::vector<std::string> class_names;
    std::string split;
};

// ---- CIFAR-10 binary batches ----------------------------------------------
// Standard 3073-byte records: label byte, then 1024 R, 1024 G, 1024 B bytes.

inline Dataset load_cifar10(const std::vector<std::string>& paths) {
    Dataset ds;
    for (const auto& path : paths) {
        std::ifstream f(path, std::ios::binary);
        if (!f) throw format_error("cifar10: cannot open " + path);
        f.seekg(0, std::ios::end);
        auto bytes = size_t(f.tellg());
        f.seekg(0);
        if (bytes % 3073 != 0)
            throw format_error("cifar10: " + path + " truncated at byte offset " +
                               std::to_string(bytes - bytes % 3073));
        std::vector<unsigned char> rec(3073);
        size_t n = bytes / 3073;
        for (size_t i = 0; i < n; ++i) {
            f.read(reinterpret_cast<char*>(rec.data()), 3073);
            Tensor3 t(3, 32, 32);
            for (int c = 0; c < 3; ++c)
                for (int p = 0; p < 1024; ++p)
                    t.data[size_t(c) * 1024 + p] = rec[size_t(1 + c * 1024 + p)] / 255.0;
            ds.samples.emplace_back(std::move(t), int(rec[0]));
        }
    }
    return ds;
}

inline void save_cifar10(const std::string& path, const Dataset& ds) {
    std::ofstream f(path, std::ios::binary);
    for (const auto& [t, label] : ds.samples) {
        unsigned char rec[3073];
        rec[0] = (unsigned char)label;
        for (int c = 0; c < 3; ++c)
            for (int p = 0; p < 1024; ++p) {
                real v = t.data[size_t(c) * 1024 + p] * 255.0;
                rec[1 + c * 1024 + p] = (unsigned char)std::lround(std::clamp(v, 0.0, 255.0));
            }
        f.write(reinterpret_cast<const char*>(rec), 3073);
    }
}

// ---- PGM / PPM ------------------------------------------------------------

namespace detail {

inline int pnm_int(std::istream& is) {
    int c = is.get();
    while (c != EOF && (std::isspace(c) || c == '#')) {
        if (c == '#')
            while (c != EOF && c != '\n') c = is.get();
        c = is.get();
    }
    int v = 0;
    bool any = false;
    while (c != EOF && std::isdigit(c)) {
        v = v * 10 + (c - '0');
        any = true;
        c = is.get();
    }
    if (!any) throw format_error("pnm: malformed header");
    return v;
}

}  // namespace detail

/// Reads binary PGM (P5, one map) or PPM (P6, three maps), scaled to [0,1].
inline Tensor3 read_pnm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw format_error("pnm: cannot open " + path);
    char m0 = char(f.get()), m1 = char(f.get());
    if (m0 != 'P' || (m1 != '5' && m1 != '6')) throw format_error("pnm: not a binary PGM/PPM: " + path);
    int channels = (m1 == '6') ? 3 : 1;
    int w = detail::pnm_int(f);
    int h = detail::pnm_int(f);
    int maxval = detail::pnm_int(f);
    if (maxval <= 0 || maxval > 255) throw format_error("pnm: unsupported maxval");
    std::vector<unsigned char> buf(size_t(w) * h * channels);
    f.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size()));
    if (!f) throw format_error("pnm: truncated pixel data in " + path);
    Tensor3 t(channels, h, w);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            for (int c = 0; c < channels; ++c)
                t.at(c, i, j) = buf[(size_t(i) * w + j) * channels + c] / real(maxval);
    return t;
}

inline void write_pgm(const std::string& path, const std::vector<unsigned char>& pixels, int h, int w) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw format_error("pgm: cannot open " + path + " for writing");
    f << "P5\n" << w << " " << h << "\n255\n";
    f.write(reinterpret_cast<const char*>(pixels.data()), std::streamsize(pixels.size()));
}

/// Single map scaled min-max to [0,255] and written as PGM.
inline void write_pgm_scaled(const std::string& path, const Tensor3& t) {
    real lo = t.data[0], hi = t.data[0];
    for (real v : t.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    std::vector<unsigned char> px(t.size());
    for (size_t i = 0; i < t.size(); ++i)
        px[i] = hi > lo ? (unsigned char)std::lround((t.data[i] - lo) / (hi - lo) * 255.0) : 128;
    write_pgm(path, px, t.height, t.width);
}

// ---- conversions ----------------------------------------------------------

inline Tensor3 to_grayscale(const Tensor3& t) {
    if (t.maps == 1) return t;
    if (t.maps != 3) throw dimension_error("grayscale: expected 1 or 3 maps");
    Tensor3 g(1, t.height, t.width);
    for (int i = 0; i < t.height; ++i)
        for (int j = 0; j < t.width; ++j)
            g.at(0, i, j) = 0.299 * t.at(0, i, j) + 0.587 * t.at(1, i, j) + 0.114 * t.at(2, i, j);
    return g;
}

/// BT.601 RGB -> YUV.
inline Tensor3 to_yuv(const Tensor3& t) {
    if (t.maps != 3) throw dimension_error("yuv: expected 3 maps");
    Tensor3 o(3, t.height, t.width);
    for (int i = 0; i < t.height; ++i)
        for (int j = 0; j < t.width; ++j) {
            real r = t.at(0, i, j), g = t.at(1, i, j), b = t.at(2, i, j);
            real y = 0.299 * r + 0.587 * g + 0.114 * b;
            o.at(0, i, j) = y;
            o.at(1, i, j) = 0.492 * (b - y);
            o.at(2, i, j) = 0.877 * (r - y);
        }
    return o;
}

inline Tensor3 resize_bilinear(const Tensor3& t, int oh, int ow) {
    Tensor3 o(t.maps, oh, ow);
    for (int m = 0; m < t.maps; ++m)
        for (int i = 0; i < oh; ++i)
            for (int j = 0; j < ow; ++j) {
                real fi = oh > 1 ? real(i) * (t.height - 1) / (oh - 1) : 0;
                real fj = ow > 1 ? real(j) * (t.width - 1) / (ow - 1) : 0;
                int i0 = int(fi), j0 = int(fj);
                int i1 = std::min(i0 + 1, t.height - 1), j1 = std::min(j0 + 1, t.width - 1);
                real di = fi - i0, dj = fj - j0;
                o.at(m, i, j) = (1 - di) * ((1 - dj) * t.at(m, i0, j0) + dj * t.at(m, i0, j1)) +
                                di * ((1 - dj) * t.at(m, i1, j0) + dj * t.at(m, i1, j1));
            }
    return o;
}

// ---- preprocessing pipelines ----------------------------------------------

/// Caltech pipeline: grayscale, squash to 151x151, valid-mode local contrast
/// normalization (9x9, sigma 1.6) -> 1x143x143.
inline Tensor3 preprocess_caltech(const Tensor3& image) {
    Tensor3 g = to_grayscale(image);
    Tensor3 r = resize_bilinear(g, 151, 151);
    NormConfig cfg;
    cfg.window = 9;
    cfg.sigma = 1.6;
    return local_cn_valid(r, cfg);
}

struct ChromaStats {
    real u_mean = 0, u_std = 1, v_mean = 0, v_std = 1;
};

/// Global U/V mean and std over a training split (after YUV conversion).
inline ChromaStats chroma_stats(const std::vector<Tensor3>& train_rgb) {
    real su = 0, sv = 0, su2 = 0, sv2 = 0;
    size_t n = 0;
    for (const auto& img : train_rgb) {
        Tensor3 yuv = to_yuv(img);
        for (int i = 0; i < yuv.height; ++i)
            for (int j = 0; j < yuv.width; ++j) {
                su += yuv.at(1, i, j);
                sv += yuv.at(2, i, j);
                su2 += yuv.at(1, i, j) * yuv.at(1, i, j);
                sv2 += yuv.at(2, i, j) * yuv.at(2, i, j);
                ++n;
            }
    }
    ChromaStats s;
    if (n == 0) return s;
    s.u_mean = su / n;
    s.v_mean = sv / n;
    s.u_std = std::sqrt(std::max(su2 / n - s.u_mean * s.u_mean, 1e-12));
    s.v_std = std::sqrt(std::max(sv2 / n - s.v_mean * s.v_mean, 1e-12));
    return s;
}

/// CIFAR pipeline: YUV, Y through same-mode local CN (9x9, sigma 1.6),
/// U/V standardized with training-split global stats.
inline Tensor3 preprocess_cifar(const Tensor3& rgb, const ChromaStats& stats) {
    if (rgb.maps != 3 || rgb.height != 32 || rgb.width != 32)
        throw dimension_error("preprocess_cifar: expected 3x32x32");
    Tensor3 yuv = to_yuv(rgb);
    Tensor3 y(1, 32, 32);
    for (int i = 0; i < 32; ++i)
        for (int j = 0; j < 32; ++j) y.at(0, i, j) = yuv.at(0, i, j);
    NormConfig cfg;
    cfg.window = 9;
    cfg.sigma = 1.6;
    Tensor3 yn = local_cn(y, cfg);
    Tensor3 out(3, 32, 32);
    for (int i = 0; i < 32; ++i)
        for (int j = 0; j < 32; ++j) {
            out.at(0, i, j) = yn.at(0, i, j);
            out.at(1, i, j) = (yuv.at(1, i, j) - stats.u_mean) / stats.u_std;
            out.at(2, i, j) = (yuv.at(2, i, j) - stats.v_mean) / stats.v_std;
        }
    return out;
}

// ---- directory reader -----------------------------------------------------

/// Reads PGM/PPM images from class-named subdirectories; labels follow the
/// sorted class-name order.
inline Dataset load_image_directory(const std::string& root) {
    namespace fs = std::filesystem;
    Dataset ds;
    std::vector<fs::path> class_dirs;
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory()) class_dirs.push_back(e.path());
    std::sort(class_dirs.begin(), class_dirs.end());
    for (size_t c = 0; c < class_dirs.size(); ++c) {
        ds.class_names.push_back(class_dirs[c].filename().string());
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(class_dirs[c])) {
            auto ext = e.path().extension().string();
            if (ext == ".pgm" || ext == ".ppm") files.push_back(e.path());
        }
        std::sort(files.begin(), files.end());
        for (const auto& f : files) ds.samples.emplace_back(read_pnm(f.string()), int(c));
    }
    return ds;
}

// ---- filter grid export ---------------------------------------------------

/// Tiles every kernel (min-max scaled to [0,255]) into a grid with 1-px
/// separators, 8 kernels per row, and writes a PGM.
inline void export_filter_grid(const KernelBank& bank, const std::string& path, int per_row = 8) {
    if (bank.kernels.empty()) throw parameter_error("filter grid: empty bank");
    int k = bank.kernel_size();
    int n = int(bank.kernels.size());
    int rows = (n + per_row - 1) / per_row;
    int cols = std::min(n, per_row);
    int gh = rows * (k + 1) - 1;
    int gw = cols * (k + 1) - 1;
    std::vector<unsigned char> px(size_t(gh) * gw, 0);
    for (int idx = 0; idx < n; ++idx) {
        const auto& ker = bank.kernels[size_t(idx)];
        real lo = ker.w[0], hi = ker.w[0];
        for (real v : ker.w) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        int r0 = (idx / per_row) * (k + 1);
        int c0 = (idx % per_row) * (k + 1);
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j) {
                unsigned char v = hi > lo
                                      ? (unsigned char)std::lround((ker.at(i, j) - lo) / (hi - lo) * 255.0)
                                      : 128;
                px[size_t(r0 + i) * gw + (c0 + j)] = v;
            }
    }
    write_pgm(path, px, gh, gw);
}

}  // namespace sparsenet
