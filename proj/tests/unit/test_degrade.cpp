#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "icflow/dataset.hpp"
#include "icflow/degrade.hpp"
#include "icflow/evaluate.hpp"
#include "icflow/identity.hpp"
#include "icflow/image.hpp"

using namespace icflow;

TEST_CASE("strength sampling matches the published buckets") {
    RngStream rng(42);
    const int n = 100000;
    int low = 0, mid = 0, high = 0;
    for (int i = 0; i < n; ++i) {
        const int s = sample_strength(rng);
        REQUIRE(s >= 0);
        REQUIRE(s <= 16);
        if (s <= 3) ++low;
        else if (s <= 8) ++mid;
        else ++high;
    }
    CHECK(std::fabs(static_cast<double>(low) / n - 0.5) < 0.01);
    CHECK(std::fabs(static_cast<double>(mid) / n - 0.3) < 0.01);
    CHECK(std::fabs(static_cast<double>(high) / n - 0.2) < 0.01);
}

TEST_CASE("degradation spec: identity at zero, monotone parameters, scale in 4..10") {
    const DegradationSpec zero = make_degradation_spec(0, 7);
    CHECK(zero.scale == 1);
    CHECK(zero.blur_sigma == 0.0);

    double prev_blur = 0.0;
    int prev_scale = 0;
    for (int s = 1; s <= 16; ++s) {
        const DegradationSpec spec = make_degradation_spec(s, 7);
        CHECK(spec.blur_sigma == doctest::Approx(0.1 + 0.2 * s));
        CHECK(spec.noise_sigma == doctest::Approx(0.01 * s));
        CHECK(spec.quant_levels == std::max(8, 256 - 15 * s));
        CHECK(spec.scale >= 4);
        CHECK(spec.scale <= 10);
        CHECK(spec.blur_sigma > prev_blur);
        CHECK((spec.scale >= prev_scale || prev_scale == 0));  // monotone for a fixed seed
        prev_blur = spec.blur_sigma;
        prev_scale = spec.scale;
    }
    CHECK_THROWS_AS(make_degradation_spec(17, 7), DomainError);
    CHECK_THROWS_AS(make_degradation_spec(-1, 7), DomainError);
}

TEST_CASE("degrade: strength 0 is bit-exact identity, fixed seed reproduces bits") {
    const Corpus corpus = make_dataset(2, 0, 3);
    const Tensor& img = corpus.items[0].clean;
    CHECK(degrade(img, 0, 123) == img);

    const Tensor a = degrade(img, 9, 42 + 1);
    const Tensor b = degrade(img, 9, 42 + 1);
    CHECK(a == b);
    CHECK_FALSE(degrade(img, 9, 42 + 2) == a);
}

TEST_CASE("degraded pixels stay inside the declared range") {
    const Corpus corpus = make_dataset(4, 0, 11);
    for (const auto& rec : corpus.items)
        for (int s : {1, 4, 9, 16}) {
            const Tensor out = degrade(rec.clean, s, 5);
            for (Index i = 0; i < out.numel(); ++i) {
                CHECK(out.at(i) >= 0.0);
                CHECK(out.at(i) <= 1.0);
            }
        }
}

TEST_CASE("heavy degradation shrinks the stub embedding norm") {
    const StubEncoder stub(1, 16, 16, 32, 3);
    const Corpus corpus = make_dataset(20, 0, 17);
    int smaller = 0;
    for (const auto& rec : corpus.items) {
        const double mild = stub.encode(degrade(rec.clean, 2, 42)).l2_norm();
        const double severe = stub.encode(degrade(rec.clean, 16, 42)).l2_norm();
        if (severe < mild) ++smaller;
    }
    CHECK(smaller == 20);
}

TEST_CASE("mean PSNR is nonincreasing in strength (at most one inversion)") {
    const Corpus corpus = make_dataset(100, 0, 23);
    double prev = 1e9;
    int inversions = 0;
    for (int s = 0; s <= 16; ++s) {
        double mean = 0.0;
        for (std::size_t i = 0; i < corpus.items.size(); ++i)
            mean += psnr(degrade(corpus.items[i].clean, s, 42 + i), corpus.items[i].clean);
        mean /= static_cast<double>(corpus.items.size());
        if (mean > prev + 1e-9) ++inversions;
        prev = mean;
    }
    CHECK(inversions <= 1);
}

TEST_CASE("image files round trip through PNG and PPM") {
    namespace fs = std::filesystem;
    const Corpus corpus = make_dataset(1, 0, 31);
    const Tensor img = corpus.items[0].clean;

    for (const char* name : {"io_test.png", "io_test.ppm"}) {
        write_image(name, img);
        const Tensor back = to_gray(read_image(name));
        REQUIRE(back.shape() == img.shape());
        // files are 8-bit: round trip equals the quantized original
        for (Index i = 0; i < img.numel(); ++i)
            CHECK(back.at(i) ==
                  doctest::Approx(std::lround(img.at(i) * 255.0) / 255.0).epsilon(1e-12));
        fs::remove(name);
    }

    RngStream rng(5);
    Tensor rgb = Tensor::randn({3, 9, 7}, rng, 0.2);
    rgb = clamp01(rgb);
    write_image("io_rgb.png", rgb);
    const Tensor rgb_back = read_image("io_rgb.png");
    CHECK(rgb_back.extent(0) == 3);
    CHECK(rgb_back.extent(1) == 9);
    CHECK(rgb_back.extent(2) == 7);
    fs::remove("io_rgb.png");

    CHECK_THROWS_AS(read_image("missing_file.png"), IoError);
    CHECK_THROWS_AS(write_image("bad_ext.tiff", img), IoError);
}
