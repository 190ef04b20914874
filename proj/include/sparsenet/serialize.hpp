#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "sparsenet/solver.hpp"
#include "sparsenet/tensor.hpp"

namespace sparsenet::io {

inline void put_u32(std::ostream& os, uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
inline void put_u64(std::ostream& os, uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }
inline void put_i32(std::ostream& os, int32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
inline void put_f64(std::ostream& os, double v) { os.write(reinterpret_cast<const char*>(&v), 8); }

inline uint32_t get_u32(std::istream& is) {
    uint32_t v;
    is.read(reinterpret_cast<char*>(&v), 4);
    if (!is) throw format_error("stream: truncated u32");
    return v;
}
inline uint64_t get_u64(std::istream& is) {
    uint64_t v;
    is.read(reinterpret_cast<char*>(&v), 8);
    if (!is) throw format_error("stream: truncated u64");
    return v;
}
inline int32_t get_i32(std::istream& is) {
    int32_t v;
    is.read(reinterpret_cast<char*>(&v), 4);
    if (!is) throw format_error("stream: truncated i32");
    return v;
}
inline double get_f64(std::istream& is) {
    double v;
    is.read(reinterpret_cast<char*>(&v), 8);
    if (!is) throw format_error("stream: truncated f64");
    return v;
}

inline void put_vec(std::ostream& os, const std::vector<real>& v) {
    put_u64(os, v.size());
    os.write(reinterpret_cast<const char*>(v.data()), std::streamsize(v.size() * sizeof(real)));
}
inline std::vector<real> get_vec(std::istream& is) {
    uint64_t n = get_u64(is);
    std::vector<real> v(n);
    is.read(reinterpret_cast<char*>(v.data()), std::streamsize(n * sizeof(real)));
    if (!is) throw format_error("stream: truncated f64 array");
    return v;
}

inline void put_string(std::ostream& os, const std::string& s) {
    put_u64(os, s.size());
    os.write(s.data(), std::streamsize(s.size()));
}
inline std::string get_string(std::istream& is) {
    uint64_t n = get_u64(is);
    std::string s(n, '\0');
    is.read(s.data(), std::streamsize(n));
    if (!is) throw format_error("stream: truncated string");
    return s;
}

inline void put_matrix(std::ostream& os, const Matrix& m) {
    put_i32(os, m.rows);
    put_i32(os, m.cols);
    put_vec(os, m.a);
}
inline Matrix get_matrix(std::istream& is) {
    Matrix m;
    m.rows = get_i32(is);
    m.cols = get_i32(is);
    m.a = get_vec(is);
    if (m.a.size() != size_t(m.rows) * size_t(m.cols)) throw format_error("stream: matrix size mismatch");
    return m;
}

inline void put_bank(std::ostream& os, const KernelBank& bank) {
    put_u64(os, bank.kernels.size());
    for (const auto& k : bank.kernels) {
        put_i32(os, k.out_map);
        put_i32(os, k.in_map);
        put_i32(os, k.size);
        put_vec(os, k.w);
    }
}
inline KernelBank get_bank(std::istream& is) {
    KernelBank bank;
    uint64_t n = get_u64(is);
    bank.kernels.resize(n);
    for (auto& k : bank.kernels) {
        k.out_map = get_i32(is);
        k.in_map = get_i32(is);
        k.size = get_i32(is);
        k.w = get_vec(is);
    }
    return bank;
}

inline void put_table(std::ostream& os, const ConnectionTable& t) {
    put_u64(os, t.entries.size());
    for (const auto& e : t.entries) {
        put_i32(os, e.in_map);
        put_i32(os, e.out_map);
    }
}
inline ConnectionTable get_table(std::istream& is) {
    ConnectionTable t;
    uint64_t n = get_u64(is);
    t.entries.resize(n);
    for (auto& e : t.entries) {
        e.in_map = get_i32(is);
        e.out_map = get_i32(is);
    }
    return t;
}

inline void put_rng(std::ostream& os, const std::mt19937_64& rng) {
    std::ostringstream ss;
    ss << rng;
    put_string(os, ss.str());
}
inline std::mt19937_64 get_rng(std::istream& is) {
    std::istringstream ss(get_string(is));
    std::mt19937_64 rng;
    ss >> rng;
    return rng;
}

}  // namespace sparsenet::io
