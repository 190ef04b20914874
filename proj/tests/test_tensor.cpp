#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <sstream>

#include "sparsenet/tensor.hpp"

using namespace sparsenet;

namespace {

Tensor3 random_tensor(int m, int h, int w, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<real> uni(-1.0, 1.0);
    Tensor3 t(m, h, w);
    for (auto& v : t.data) v = uni(rng);
    return t;
}

KernelBank random_bank(int n_in, int n_out, int k, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<real> uni(-1.0, 1.0);
    KernelBank bank;
    for (int p = 0; p < n_out; ++p)
        for (int q = 0; q < n_in; ++q) {
            Kernel ker;
            ker.out_map = p;
            ker.in_map = q;
            ker.size = k;
            ker.w.resize(size_t(k) * k);
            for (auto& v : ker.w) v = uni(rng);
            bank.kernels.push_back(std::move(ker));
        }
    return bank;
}

// independent brute-force oracle for valid cross-correlation
real correlate_oracle_at(const Tensor3& x, const KernelBank& bank, int p, int i, int j) {
    real s = 0;
    for (const auto& ker : bank.kernels) {
        if (ker.out_map != p) continue;
        for (int u = 0; u < ker.size; ++u)
            for (int v = 0; v < ker.size; ++v)
                s += ker.w[size_t(u) * ker.size + v] * x.at(ker.in_map, i + u, j + v);
    }
    return s;
}

real bank_dot(const KernelBank& a, const KernelBank& b) {
    real s = 0;
    for (size_t k = 0; k < a.kernels.size(); ++k)
        for (size_t i = 0; i < a.kernels[k].w.size(); ++i) s += a.kernels[k].w[i] * b.kernels[k].w[i];
    return s;
}

}  // namespace

TEST_CASE("tensor indexing is map-major row-major") {
    Tensor3 t(2, 3, 4);
    for (size_t i = 0; i < t.data.size(); ++i) t.data[i] = real(i);
    // [DERIVED] flat index (m*h + i)*w + j
    CHECK(t.at(0, 0, 0) == 0.0);
    CHECK(t.at(0, 1, 2) == 6.0);
    CHECK(t.at(1, 2, 3) == 23.0);
}

TEST_CASE("correlate_valid matches a hand-computed 1-map example") {
    // [DERIVED] 3x3 input, 2x2 kernel of ones: each output = sum of the window
    Tensor3 x(1, 3, 3);
    for (int i = 0; i < 9; ++i) x.data[size_t(i)] = real(i + 1);  // 1..9
    KernelBank bank;
    Kernel ker;
    ker.out_map = 0;
    ker.in_map = 0;
    ker.size = 2;
    ker.w = {1, 1, 1, 1};
    bank.kernels.push_back(ker);
    Tensor3 y = correlate_valid(x, bank, 1);
    REQUIRE(y.height == 2);
    REQUIRE(y.width == 2);
    CHECK(y.at(0, 0, 0) == Catch::Approx(1 + 2 + 4 + 5));
    CHECK(y.at(0, 0, 1) == Catch::Approx(2 + 3 + 5 + 6));
    CHECK(y.at(0, 1, 0) == Catch::Approx(4 + 5 + 7 + 8));
    CHECK(y.at(0, 1, 1) == Catch::Approx(5 + 6 + 8 + 9));
}

TEST_CASE("correlate_valid agrees with the brute-force oracle on random data") {
    Tensor3 x = random_tensor(3, 8, 7, 11);
    KernelBank bank = random_bank(3, 4, 3, 12);
    Tensor3 y = correlate_valid(x, bank, 4);
    REQUIRE(y.maps == 4);
    REQUIRE(y.height == 6);
    REQUIRE(y.width == 5);
    for (int p = 0; p < 4; ++p)
        for (int i = 0; i < y.height; ++i)
            for (int j = 0; j < y.width; ++j)
                CHECK(y.at(p, i, j) == Catch::Approx(correlate_oracle_at(x, bank, p, i, j)).epsilon(1e-12));
}

TEST_CASE("correlate_valid is linear in the input") {
    Tensor3 a = random_tensor(2, 6, 6, 21);
    Tensor3 b = random_tensor(2, 6, 6, 22);
    KernelBank bank = random_bank(2, 3, 3, 23);
    Tensor3 lhs = correlate_valid(a + b, bank, 3);
    Tensor3 r1 = correlate_valid(a, bank, 3);
    Tensor3 r2 = correlate_valid(b, bank, 3);
    for (size_t i = 0; i < lhs.data.size(); ++i)
        CHECK(lhs.data[i] == Catch::Approx(r1.data[i] + r2.data[i]).margin(1e-12));
    Tensor3 s = correlate_valid(2.5 * a, bank, 3);
    for (size_t i = 0; i < s.data.size(); ++i)
        CHECK(s.data[i] == Catch::Approx(2.5 * r1.data[i]).margin(1e-12));
}

TEST_CASE("correlate_grad satisfies the adjoint identity") {
    // [DERIVED] <corr(x), u> = <x, grad_in(u)> and = <W, grad_W(u)> pieces
    Tensor3 x = random_tensor(2, 7, 7, 31);
    KernelBank bank = random_bank(2, 3, 4, 32);
    Tensor3 u = random_tensor(3, 4, 4, 33);
    Tensor3 fx = correlate_valid(x, bank, 3);
    auto [gin, gbank] = correlate_grad(x, bank, u);
    CHECK(dot(fx, u) == Catch::Approx(dot(x, gin)).epsilon(1e-10));
    CHECK(dot(fx, u) == Catch::Approx(bank_dot(bank, gbank)).epsilon(1e-10));
}

TEST_CASE("convolve_full is the adjoint of correlate_valid") {
    // with wiring swapped, <corr_valid(x, W), z> = <x, conv_full(z, W_swapped)>
    Tensor3 x = random_tensor(2, 9, 9, 41);
    KernelBank enc = random_bank(2, 3, 4, 42);
    Tensor3 z = random_tensor(3, 6, 6, 43);
    Tensor3 fx = correlate_valid(x, enc, 3);
    KernelBank dec = enc;
    for (auto& k : dec.kernels) std::swap(k.in_map, k.out_map);
    Tensor3 bz = convolve_full(z, dec, 2);
    REQUIRE(bz.same_shape(x));
    CHECK(dot(fx, z) == Catch::Approx(dot(x, bz)).epsilon(1e-10));
}

TEST_CASE("kernel bank checks reject bad wiring") {
    KernelBank bank = random_bank(2, 2, 3, 51);
    Tensor3 x = random_tensor(2, 5, 5, 52);
    SECTION("duplicate pair") {
        bank.kernels.push_back(bank.kernels.front());
        CHECK_THROWS_AS(correlate_valid(x, bank, 2), config_error);
    }
    SECTION("out of range map") {
        bank.kernels.front().in_map = 7;
        CHECK_THROWS_AS(correlate_valid(x, bank, 2), config_error);
    }
    SECTION("kernel larger than input") {
        Tensor3 tiny = random_tensor(2, 2, 2, 53);
        CHECK_THROWS_AS(correlate_valid(tiny, bank, 2), dimension_error);
    }
}

TEST_CASE("random_connections honors fan-in and uniqueness") {
    std::mt19937_64 rng(7);
    ConnectionTable t = random_connections(10, 6, 4, rng);
    REQUIRE(t.entries.size() == 24);
    for (int p = 0; p < 6; ++p) {
        std::vector<int> ins;
        for (const auto& e : t.entries)
            if (e.out_map == p) ins.push_back(e.in_map);
        REQUIRE(ins.size() == 4);
        std::sort(ins.begin(), ins.end());
        CHECK(std::adjacent_find(ins.begin(), ins.end()) == ins.end());
        CHECK(ins.front() >= 0);
        CHECK(ins.back() < 10);
    }
    CHECK_THROWS_AS(random_connections(3, 2, 5, rng), config_error);
}

TEST_CASE("tensor serialization round-trips bit-exactly") {
    Tensor3 t = random_tensor(4, 5, 6, 61);
    std::stringstream ss;
    write_tensor(ss, t);
    Tensor3 r = read_tensor(ss);
    REQUIRE(r.same_shape(t));
    CHECK(r.data == t.data);
}

TEST_CASE("tensor deserialization rejects corrupt streams") {
    Tensor3 t = random_tensor(2, 3, 3, 62);
    SECTION("bad magic") {
        std::stringstream ss;
        write_tensor(ss, t);
        std::string s = ss.str();
        s[0] = 'X';
        std::stringstream bad(s);
        CHECK_THROWS_AS(read_tensor(bad), format_error);
    }
    SECTION("truncated payload") {
        std::stringstream ss;
        write_tensor(ss, t);
        std::string s = ss.str();
        std::stringstream bad(s.substr(0, s.size() - 4));
        CHECK_THROWS_AS(read_tensor(bad), format_error);
    }
}
