#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "sparsenet/data_io.hpp"

using namespace sparsenet;
namespace fs = std::filesystem;

namespace {

Dataset make_dataset(int n, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<real> uni(0.0, 1.0);
    std::uniform_int_distribution<int> lab(0, 9);
    Dataset ds;
    for (int i = 0; i < n; ++i) {
        Tensor3 t(3, 32, 32);
        for (auto& v : t.data) v = std::round(uni(rng) * 255.0) / 255.0;  // exactly representable
        ds.samples.emplace_back(std::move(t), lab(rng));
    }
    return ds;
}

}  // namespace

TEST_CASE("CIFAR-10 binary round trip preserves pixels and labels") {
    Dataset ds = make_dataset(5, 1);
    std::string path = "cifar_roundtrip.bin";
    save_cifar10(path, ds);
    Dataset r = load_cifar10({path});
    REQUIRE(r.samples.size() == 5);
    for (size_t i = 0; i < 5; ++i) {
        CHECK(r.samples[i].second == ds.samples[i].second);
        for (size_t p = 0; p < ds.samples[i].first.data.size(); ++p)
            CHECK(r.samples[i].first.data[p] == Catch::Approx(ds.samples[i].first.data[p]).margin(1e-12));
    }
    std::remove(path.c_str());
}

TEST_CASE("truncated CIFAR batch is rejected with a byte offset") {
    Dataset ds = make_dataset(2, 2);
    std::string path = "cifar_trunc.bin";
    save_cifar10(path, ds);
    fs::resize_file(path, 3073 + 100);
    try {
        load_cifar10({path});
        FAIL("expected format_error");
    } catch (const format_error& e) {
        CHECK(std::string(e.what()).find("3073") != std::string::npos);
    }
    std::remove(path.c_str());
}

TEST_CASE("PGM write/read round trip") {
    std::vector<unsigned char> px = {0, 64, 128, 255, 10, 200};
    std::string path = "io_test.pgm";
    write_pgm(path, px, 2, 3);
    Tensor3 t = read_pnm(path);
    REQUIRE(t.maps == 1);
    REQUIRE(t.height == 2);
    REQUIRE(t.width == 3);
    CHECK(t.at(0, 0, 0) == Catch::Approx(0.0));
    CHECK(t.at(0, 0, 2) == Catch::Approx(128 / 255.0));
    CHECK(t.at(0, 1, 0) == Catch::Approx(1.0));
    std::remove(path.c_str());
}

TEST_CASE("PNM reader rejects malformed files") {
    std::string path = "bad.pgm";
    {
        std::ofstream f(path, std::ios::binary);
        f << "P5\n3 2\n255\nab";  // 2 bytes instead of 6
    }
    CHECK_THROWS_AS(read_pnm(path), format_error);
    {
        std::ofstream f(path, std::ios::binary);
        f << "P3\n3 2\n255\n";  // ASCII PPM unsupported
    }
    CHECK_THROWS_AS(read_pnm(path), format_error);
    std::remove(path.c_str());
    CHECK_THROWS_AS(read_pnm("missing.pgm"), format_error);
}

TEST_CASE("grayscale and YUV conversions match their formulas") {
    Tensor3 rgb(3, 1, 1);
    rgb.at(0, 0, 0) = 0.6;
    rgb.at(1, 0, 0) = 0.2;
    rgb.at(2, 0, 0) = 0.9;
    // [DERIVED] BT.601 luma and the classic U/V differences
    real y = 0.299 * 0.6 + 0.587 * 0.2 + 0.114 * 0.9;
    Tensor3 g = to_grayscale(rgb);
    CHECK(g.at(0, 0, 0) == Catch::Approx(y).epsilon(1e-12));
    Tensor3 yuv = to_yuv(rgb);
    CHECK(yuv.at(0, 0, 0) == Catch::Approx(y).epsilon(1e-12));
    CHECK(yuv.at(1, 0, 0) == Catch::Approx(0.492 * (0.9 - y)).epsilon(1e-12));
    CHECK(yuv.at(2, 0, 0) == Catch::Approx(0.877 * (0.6 - y)).epsilon(1e-12));
}

TEST_CASE("bilinear resize is exact on constant and identity cases") {
    Tensor3 t(1, 4, 4);
    t.fill(3.5);
    Tensor3 big = resize_bilinear(t, 9, 9);
    for (real v : big.data) CHECK(v == Catch::Approx(3.5));
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<real> uni(0, 1);
    Tensor3 r(2, 5, 6);
    for (auto& v : r.data) v = uni(rng);
    Tensor3 same = resize_bilinear(r, 5, 6);
    for (size_t i = 0; i < r.data.size(); ++i) CHECK(same.data[i] == Catch::Approx(r.data[i]).margin(1e-12));
}

TEST_CASE("caltech preprocessing yields 1x143x143") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<real> uni(0, 1);
    Tensor3 img(3, 100, 180);
    for (auto& v : img.data) v = uni(rng);
    Tensor3 out = preprocess_caltech(img);
    CHECK(out.maps == 1);
    CHECK(out.height == 143);
    CHECK(out.width == 143);
}

TEST_CASE("cifar preprocessing standardizes chroma with train statistics") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<real> uni(0, 1);
    std::vector<Tensor3> train;
    for (int i = 0; i < 4; ++i) {
        Tensor3 t(3, 32, 32);
        for (auto& v : t.data) v = uni(rng);
        train.push_back(std::move(t));
    }
    ChromaStats stats = chroma_stats(train);
    CHECK(stats.u_std > 0);
    // standardizing the very images the stats came from gives ~0 mean, ~1 std
    real su = 0, su2 = 0;
    size_t n = 0;
    for (const auto& img : train) {
        Tensor3 p = preprocess_cifar(img, stats);
        for (int i = 0; i < 32; ++i)
            for (int j = 0; j < 32; ++j) {
                su += p.at(1, i, j);
                su2 += p.at(1, i, j) * p.at(1, i, j);
                ++n;
            }
    }
    real mean = su / n;
    real var = su2 / n - mean * mean;
    CHECK(mean == Catch::Approx(0.0).margin(1e-10));
    CHECK(var == Catch::Approx(1.0).epsilon(1e-6));
    Tensor3 wrong(3, 16, 16);
    CHECK_THROWS_AS(preprocess_cifar(wrong, stats), dimension_error);
}

TEST_CASE("image directory loader assigns labels by sorted class name") {
    fs::path root = "imgdir_test";
    fs::create_directories(root / "b_class");
    fs::create_directories(root / "a_class");
    std::vector<unsigned char> px(9, 100);
    write_pgm((root / "a_class" / "one.pgm").string(), px, 3, 3);
    write_pgm((root / "b_class" / "one.pgm").string(), px, 3, 3);
    write_pgm((root / "b_class" / "two.pgm").string(), px, 3, 3);
    Dataset ds = load_image_directory(root.string());
    REQUIRE(ds.class_names.size() == 2);
    CHECK(ds.class_names[0] == "a_class");
    int zero = 0, one = 0;
    for (const auto& [t, y] : ds.samples) (y == 0 ? zero : one)++;
    CHECK(zero == 1);
    CHECK(one == 2);
    fs::remove_all(root);
}

TEST_CASE("filter grid export writes a readable PGM of the right size") {
    KernelBank bank;
    std::mt19937_64 rng(6);
    std::normal_distribution<real> nd(0, 1);
    for (int i = 0; i < 10; ++i) {
        Kernel k;
        k.out_map = i;
        k.in_map = 0;
        k.size = 5;
        k.w.resize(25);
        for (auto& v : k.w) v = nd(rng);
        bank.kernels.push_back(std::move(k));
    }
    std::string path = "grid.pgm";
    export_filter_grid(bank, path);
    Tensor3 g = read_pnm(path);
    // [DERIVED] 10 kernels, 8 per row -> 2 rows: h = 2*(5+1)-1, w = 8*(5+1)-1
    CHECK(g.height == 11);
    CHECK(g.width == 47);
    std::remove(path.c_str());
}
