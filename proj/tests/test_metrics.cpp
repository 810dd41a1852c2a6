#include <catch2/catch_amalgamated.hpp>

#include "gcm/gcm.hpp"
#include "oracles.hpp"

using namespace gcm;

TEST_CASE("psnr closed forms and the identity sentinel") {
    ImageGrid a(8, 8, 0.5), b(8, 8, 0.6), c(8, 8, 0.51);
    CHECK(std::isinf(psnr(a, a)));
    CHECK_THAT(psnr(a, b), Catch::Matchers::WithinAbs(20.0, 1e-12));  // MSE 0.01
    CHECK_THAT(psnr(a, c), Catch::Matchers::WithinAbs(40.0, 1e-9));   // MSE 1e-4
    CHECK_THROWS_AS(psnr(a, ImageGrid(4, 4, 0.5)), ShapeError);
}

TEST_CASE("ssim equals one on identical images and rejects tiny ones") {
    Rng rng(81);
    ImageGrid a = oracle::random_image(rng, 16, 16);
    CHECK_THAT(ssim(a, a), Catch::Matchers::WithinAbs(1.0, 1e-12));
    CHECK_THROWS_AS(ssim(ImageGrid(8, 8, 0.5), ImageGrid(8, 8, 0.5)), SizeError);
}

TEST_CASE("ssim detects structural anti-correlation") {
    Rng rng(82);
    ImageGrid a = oracle::random_image(rng, 24, 24);
    ImageGrid b(24, 24);
    for (std::size_t i = 0; i < a.size(); ++i) b.data()[i] = 1.0 - a.data()[i];
    CHECK(ssim(a, b) < 0.1);
}

TEST_CASE("ssim matches an independent scalar implementation") {
    Rng rng(83);
    ImageGrid a = oracle::random_image(rng, 16, 16);
    ImageGrid b = a;
    for (double& v : b.data()) v += 0.1;
    CHECK_THAT(ssim(a, b), Catch::Matchers::WithinAbs(oracle::ssim_reference(a, b), 1e-10));
    ImageGrid c = oracle::random_image(rng, 16, 16);
    CHECK_THAT(ssim(a, c), Catch::Matchers::WithinAbs(oracle::ssim_reference(a, c), 1e-10));
    CHECK_THAT(ssim(a, c), Catch::Matchers::WithinAbs(ssim(c, a), 1e-12));
}

TEST_CASE("kernel similarity is shift invariant and scale aware") {
    BlurKernel d3 = BlurKernel::delta(3);
    CHECK_THAT(kernel_similarity(d3, d3), Catch::Matchers::WithinAbs(1.0, 1e-12));

    // delta at a different position: cyclic-shift search recovers alignment
    std::vector<double> w(9, 0.0);
    w[1] = 1.0;
    BlurKernel shifted(3, std::move(w));
    CHECK_THAT(kernel_similarity(d3, shifted), Catch::Matchers::WithinAbs(1.0, 1e-12));

    CHECK_THAT(kernel_similarity(d3, BlurKernel::uniform(3)),
               Catch::Matchers::WithinAbs(1.0 / 3.0, 1e-12));

    // padding to a common support handles different sizes
    CHECK_THAT(kernel_similarity(BlurKernel::delta(1), BlurKernel::delta(5)),
               Catch::Matchers::WithinAbs(1.0, 1e-12));

    Rng rng(84);
    BlurKernel k = oracle::random_kernel(rng, 5);
    CHECK_THAT(kernel_similarity(k, k), Catch::Matchers::WithinAbs(1.0, 1e-12));
    CHECK_THAT(kernel_similarity(k, BlurKernel::gaussian(5, 1.0)),
               Catch::Matchers::WithinAbs(kernel_similarity(BlurKernel::gaussian(5, 1.0), k),
                                          1e-12));
}

TEST_CASE("error_ratio sentinels and plain ratios") {
    Rng rng(85);
    ImageGrid sharp = oracle::random_image(rng, 6, 6);
    ImageGrid off = sharp;
    off(0, 0) += 0.5;
    CHECK(error_ratio(sharp, sharp, sharp) == 1.0);              // 0/0 → perfect agreement
    CHECK(std::isinf(error_ratio(off, sharp, sharp)));           // x/0 → sentinel
    ImageGrid worse = sharp;
    for (double& v : worse.data()) v += 0.2;
    double expect = squared_distance(worse, sharp) / squared_distance(off, sharp);
    CHECK_THAT(error_ratio(worse, off, sharp), Catch::Matchers::WithinAbs(expect, 1e-12));
}

TEST_CASE("synth_blur is seed deterministic and respects sigma") {
    Rng rng(86);
    ImageGrid sharp = oracle::random_image(rng, 12, 12);
    BlurKernel k = BlurKernel::gaussian(3, 0.8);
    ImageGrid a = synth_blur(sharp, k, 0.01, 42);
    ImageGrid b = synth_blur(sharp, k, 0.01, 42);
    ImageGrid c = synth_blur(sharp, k, 0.01, 43);
    CHECK(max_abs_difference(a, b) == 0.0);
    CHECK(max_abs_difference(a, c) > 0.0);
    CHECK(max_abs_difference(synth_blur(sharp, k, 0.0, 7),
                             convolve(sharp, k, Boundary::Periodic)) == 0.0);
    CHECK_THROWS_AS(synth_blur(sharp, k, -0.1, 1), ParameterError);
}

TEST_CASE("synthesized noise has the requested standard deviation") {
    ImageGrid flat(1000, 1000, 0.5);
    ImageGrid noisy = synth_blur(flat, BlurKernel::delta(1), 0.05, 11);
    KahanSum mean_acc;
    for (double v : noisy.data()) mean_acc.add(v - 0.5);
    double mean = mean_acc.value() / double(noisy.size());
    KahanSum var_acc;
    for (double v : noisy.data()) {
        double d = v - 0.5 - mean;
        var_acc.add(d * d);
    }
    double sd = std::sqrt(var_acc.value() / double(noisy.size()));
    CHECK_THAT(sd, Catch::Matchers::WithinRel(0.05, 0.02));
    CHECK_THAT(mean, Catch::Matchers::WithinAbs(0.0, 5e-4));
}

TEST_CASE("motion kernels are valid, seeded, and degenerate gracefully") {
    BlurKernel a = make_motion_kernel(7, 5);
    BlurKernel b = make_motion_kernel(7, 5);
    BlurKernel c = make_motion_kernel(7, 6);
    double sum = 0.0;
    for (double v : a.weights()) {
        CHECK(v >= 0.0);
        sum += v;
    }
    CHECK_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-12));
    CHECK_THAT(kernel_similarity(a, b), Catch::Matchers::WithinAbs(1.0, 1e-12));
    CHECK(kernel_similarity(a, c) < 0.999);  // different trajectory
    BlurKernel tiny = make_motion_kernel(1, 3);
    CHECK(tiny(0, 0) == 1.0);
}

TEST_CASE("synthetic fixture images are deterministic and in range") {
    ImageGrid s1 = make_smooth_image(32, 32, 9);
    ImageGrid s2 = make_smooth_image(32, 32, 9);
    CHECK(max_abs_difference(s1, s2) == 0.0);
    double lo = 1.0, hi = 0.0;
    for (double v : s1.data()) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    CHECK(lo >= 0.05 - 1e-12);
    CHECK(hi <= 0.95 + 1e-12);
    CHECK(hi - lo > 0.2);  // actually textured

    ImageGrid c1 = make_cartoon_image(32, 32, 4);
    ImageGrid c2 = make_cartoon_image(32, 32, 4);
    CHECK(max_abs_difference(c1, c2) == 0.0);
    for (double v : c1.data()) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    auto [gx, gy] = gradient_fields(c1);
    std::size_t edges = 0;
    for (double v : gx.data())
        if (v != 0.0) ++edges;
    CHECK(edges > 0);      // has edges
    CHECK(edges < c1.size() / 2);  // but is piecewise constant
}
