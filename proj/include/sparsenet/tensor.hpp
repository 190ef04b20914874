#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace sparsenet {

using real = double;

struct dimension_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct parameter_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct numeric_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct format_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Dense stack of feature maps, map-major then row-major.
struct Tensor3 {
    int maps = 0;
    int height = 0;
    int width = 0;
    std::vector<real> data;

    Tensor3() = default;
    Tensor3(int m, int h, int w) : maps(m), height(h), width(w), data(size_t(m) * h * w, 0.0) {}

    real& at(int m, int i, int j) { return data[(size_t(m) * height + i) * width + j]; }
    real at(int m, int i, int j) const { return data[(size_t(m) * height + i) * width + j]; }

    size_t size() const { return data.size(); }

    bool same_shape(const Tensor3& o) const {
        return maps == o.maps && height == o.height && width == o.width;
    }

    void fill(real v) { std::fill(data.begin(), data.end(), v); }
};

inline Tensor3 operator+(const Tensor3& a, const Tensor3& b) {
    if (!a.same_shape(b)) throw dimension_error("tensor add: shape mismatch");
    Tensor3 r = a;
    for (size_t i = 0; i < r.data.size(); ++i) r.data[i] += b.data[i];
    return r;
}

inline Tensor3 operator*(real s, const Tensor3& a) {
    Tensor3 r = a;
    for (auto& v : r.data) v *= s;
    return r;
}

inline real dot(const Tensor3& a, const Tensor3& b) {
    if (!a.same_shape(b)) throw dimension_error("tensor dot: shape mismatch");
    real s = 0;
    for (size_t i = 0; i < a.data.size(); ++i) s += a.data[i] * b.data[i];
    return s;
}

inline real sq_norm(const Tensor3& a) { return dot(a, a); }

/// One convolution kernel connecting an input map to an output map.
struct Kernel {
    int out_map = 0;
    int in_map = 0;
    int size = 0;
    std::vector<real> w;  // size*size, row-major

    real& at(int i, int j) { return w[size_t(i) * size + j]; }
    real at(int i, int j) const { return w[size_t(i) * size + j]; }
};

struct KernelBank {
    std::vector<Kernel> kernels;

    int kernel_size() const { return kernels.empty() ? 0 : kernels.front().size; }

    void check(int n_in, int n_out) const {
        int k = kernel_size();
        std::vector<char> seen(size_t(n_in) * n_out, 0);
        for (const auto& ker : kernels) {
            if (ker.size != k) throw config_error("kernel bank: mixed kernel sizes");
            if (ker.in_map < 0 || ker.in_map >= n_in || ker.out_map < 0 || ker.out_map >= n_out)
                throw config_error("kernel bank: map index out of range");
            char& s = seen[size_t(ker.out_map) * n_in + ker.in_map];
            if (s) throw config_error("kernel bank: duplicate (out,in) pair");
            s = 1;
        }
    }
};

/// (in_map, out_map) wiring for a stage; fan-in per out map is fixed.
struct ConnectionTable {
    struct Entry {
        int in_map;
        int out_map;
    };
    std::vector<Entry> entries;
};

/// Random table: each out map picks `fan_in` distinct input maps.
inline ConnectionTable random_connections(int n_in, int n_out, int fan_in, std::mt19937_64& rng) {
    if (fan_in > n_in) throw config_error("fan-in larger than input map count");
    ConnectionTable t;
    std::vector<int> idx(n_in);
    for (int i = 0; i < n_in; ++i) idx[i] = i;
    for (int p = 0; p < n_out; ++p) {
        std::shuffle(idx.begin(), idx.end(), rng);
        std::vector<int> pick(idx.begin(), idx.begin() + fan_in);
        std::sort(pick.begin(), pick.end());
        for (int q : pick) t.entries.push_back({q, p});
    }
    return t;
}

/// Valid-mode cross-correlation: out map p accumulates over its connected
/// input maps. No kernel flip.
inline Tensor3 correlate_valid(const Tensor3& input, const KernelBank& bank, int n_out) {
    int k = bank.kernel_size();
    if (k == 0) throw config_error("empty kernel bank");
    if (k > input.height || k > input.width)
        throw dimension_error("kernel larger than input");
    bank.check(input.maps, n_out);
    int oh = input.height - k + 1;
    int ow = input.width - k + 1;
    Tensor3 out(n_out, oh, ow);
    for (const auto& ker : bank.kernels) {
        for (int i = 0; i < oh; ++i) {
            for (int j = 0; j < ow; ++j) {
                real s = 0;
                for (int u = 0; u < k; ++u)
                    for (int v = 0; v < k; ++v)
                        s += ker.at(u, v) * input.at(ker.in_map, i + u, j + v);
                out.at(ker.out_map, i, j) += s;
            }
        }
    }
    return out;
}

/// Exact adjoints of correlate_valid w.r.t. input and kernel weights.
inline std::pair<Tensor3, KernelBank> correlate_grad(const Tensor3& input, const KernelBank& bank,
                                                     const Tensor3& grad_out) {
    int k = bank.kernel_size();
    int oh = input.height - k + 1;
    int ow = input.width - k + 1;
    if (grad_out.height != oh || grad_out.width != ow)
        throw dimension_error("correlate_grad: grad_out shape mismatch");
    Tensor3 gin(input.maps, input.height, input.width);
    KernelBank gbank = bank;
    for (size_t ki = 0; ki < bank.kernels.size(); ++ki) {
        const auto& ker = bank.kernels[ki];
        auto& gker = gbank.kernels[ki];
        std::fill(gker.w.begin(), gker.w.end(), 0.0);
        for (int i = 0; i < oh; ++i) {
            for (int j = 0; j < ow; ++j) {
                real g = grad_out.at(ker.out_map, i, j);
                if (g == 0) continue;
                for (int u = 0; u < k; ++u) {
                    for (int v = 0; v < k; ++v) {
                        gin.at(ker.in_map, i + u, j + v) += g * ker.at(u, v);
                        gker.at(u, v) += g * input.at(ker.in_map, i + u, j + v);
                    }
                }
            }
        }
    }
    return {gin, gbank};
}

/// Full-mode convolution of a code map with a kernel (decoder direction):
/// output is (h+k-1, w+k-1). Adjoint of correlate_valid on the other side.
inline Tensor3 convolve_full(const Tensor3& code, const KernelBank& bank, int n_out) {
    int k = bank.kernel_size();
    if (k == 0) throw config_error("empty kernel bank");
    Tensor3 out(n_out, code.height + k - 1, code.width + k - 1);
    for (const auto& ker : bank.kernels) {
        // here in_map indexes the code map, out_map the reconstructed channel
        for (int a = 0; a < code.height; ++a) {
            for (int b = 0; b < code.width; ++b) {
                real z = code.at(ker.in_map, a, b);
                if (z == 0) continue;
                for (int u = 0; u < k; ++u)
                    for (int v = 0; v < k; ++v)
                        out.at(ker.out_map, a + u, b + v) += z * ker.at(u, v);
            }
        }
    }
    return out;
}

// ---- binary serialization -------------------------------------------------

// 16-byte header: magic u32, dtype u16 (0 = f64), reserved u16, dims 3 x u16,
// pad u16; then the little-endian scalar array.
constexpr uint32_t kTensorMagic = 0x534e5431;  // "SNT1"

inline void write_tensor(std::ostream& os, const Tensor3& t) {
    uint32_t magic = kTensorMagic;
    uint16_t dtype = 0, reserved = 0, pad = 0;
    uint16_t dims[3] = {uint16_t(t.maps), uint16_t(t.height), uint16_t(t.width)};
    os.write(reinterpret_cast<const char*>(&magic), 4);
    os.write(reinterpret_cast<const char*>(&dtype), 2);
    os.write(reinterpret_cast<const char*>(&reserved), 2);
    os.write(reinterpret_cast<const char*>(dims), 6);
    os.write(reinterpret_cast<const char*>(&pad), 2);
    os.write(reinterpret_cast<const char*>(t.data.data()), std::streamsize(t.data.size() * sizeof(real)));
}

inline Tensor3 read_tensor(std::istream& is) {
    uint32_t magic = 0;
    uint16_t dtype = 0, reserved = 0, pad = 0;
    uint16_t dims[3] = {0, 0, 0};
    is.read(reinterpret_cast<char*>(&magic), 4);
    is.read(reinterpret_cast<char*>(&dtype), 2);
    is.read(reinterpret_cast<char*>(&reserved), 2);
    is.read(reinterpret_cast<char*>(dims), 6);
    is.read(reinterpret_cast<char*>(&pad), 2);
    if (!is || magic != kTensorMagic) throw format_error("tensor stream: bad magic");
    if (dtype != 0) throw format_error("tensor stream: unsupported dtype");
    Tensor3 t(dims[0], dims[1], dims[2]);
    is.read(reinterpret_cast<char*>(t.data.data()), std::streamsize(t.data.size() * sizeof(real)));
    if (!is) throw format_error("tensor stream: truncated payload");
    return t;
}

}  // namespace sparsenet
