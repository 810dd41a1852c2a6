#include <catch2/catch_amalgamated.hpp>

#include "gcm/gcm.hpp"
#include "oracles.hpp"

using namespace gcm;

TEST_CASE("ImageGrid validates construction") {
    CHECK_THROWS_AS(ImageGrid(0, 4), ShapeError);
    CHECK_THROWS_AS(ImageGrid(4, -1), ShapeError);
    CHECK_THROWS_AS(ImageGrid(2, 2, std::vector<double>{1.0, 2.0, 3.0}), ShapeError);
    ImageGrid img(3, 5, 0.25);
    CHECK(img.size() == 15);
    CHECK(img.domain() == Domain::Pixel);
    CHECK(img.all_finite());
}

TEST_CASE("BlurKernel enforces simplex invariants") {
    CHECK_THROWS_AS(BlurKernel(4, std::vector<double>(16, 1.0)), ShapeError);  // even size
    CHECK_THROWS_AS(BlurKernel(3, std::vector<double>(4, 1.0)), ShapeError);   // wrong count
    CHECK_THROWS_AS(BlurKernel(3, std::vector<double>{1, 1, 1, 1, -1, 1, 1, 1, 1}),
                    ParameterError);
    CHECK_THROWS_AS(BlurKernel(3, std::vector<double>(9, 0.0)), DegenerateInputError);

    BlurKernel k(3, std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8, 9});
    double total = 0.0;
    for (double w : k.weights()) {
        CHECK(w >= 0.0);
        total += w;
    }
    CHECK_THAT(total, Catch::Matchers::WithinAbs(1.0, 1e-12));
}

TEST_CASE("convolve with a centered delta is the identity") {
    Rng rng(11);
    ImageGrid img = oracle::random_image(rng, 7, 9);
    for (int size : {1, 3, 5}) {
        ImageGrid out = convolve(img, BlurKernel::delta(size), Boundary::Periodic);
        CHECK(max_abs_difference(out, img) == 0.0);
    }
}

TEST_CASE("convolve preserves constants for any simplex kernel") {
    Rng rng(12);
    ImageGrid img(6, 6, 0.37);
    BlurKernel k = oracle::random_kernel(rng, 5);
    for (Boundary b : {Boundary::Periodic, Boundary::Replicate}) {
        ImageGrid out = convolve(img, k, b);
        for (double v : out.data()) CHECK_THAT(v, Catch::Matchers::WithinAbs(0.37, 1e-12));
    }
}

TEST_CASE("convolve matches the dense circulant operator on the 4x4 ramp") {
    ImageGrid ramp(4, 4);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) ramp(i, j) = (i * 4 + j) / 15.0;
    BlurKernel k = BlurKernel::uniform(3);
    Eigen::MatrixXd A = oracle::convolution_matrix(4, 4, k);
    Eigen::VectorXd expect = A * oracle::to_vec(ramp);
    ImageGrid out = convolve(ramp, k, Boundary::Periodic);
    for (int i = 0; i < 16; ++i)
        CHECK_THAT(out.data()[i], Catch::Matchers::WithinAbs(expect[i], 1e-12));
}

TEST_CASE("convolve rejects kernels larger than the image") {
    ImageGrid img(4, 4, 0.5);
    CHECK_THROWS_AS(convolve(img, BlurKernel::uniform(5), Boundary::Periodic), ShapeError);
}

TEST_CASE("convolve is linear") {
    Rng rng(13);
    ImageGrid x = oracle::random_image(rng, 8, 8), y = oracle::random_image(rng, 8, 8);
    BlurKernel k = oracle::random_kernel(rng, 3);
    double a = 0.7, b = -1.3;
    ImageGrid lhs = convolve(a * x + b * y, k, Boundary::Periodic);
    ImageGrid rhs = a * convolve(x, k, Boundary::Periodic) + b * convolve(y, k, Boundary::Periodic);
    CHECK(max_abs_difference(lhs, rhs) < 1e-10);
}

TEST_CASE("periodic convolve commutes with circular shifts") {
    Rng rng(14);
    ImageGrid x = oracle::random_image(rng, 8, 8);
    BlurKernel k = oracle::random_kernel(rng, 5);
    ImageGrid lhs = convolve(circular_shift(x, 3, -2), k, Boundary::Periodic);
    ImageGrid rhs = circular_shift(convolve(x, k, Boundary::Periodic), 3, -2);
    CHECK(max_abs_difference(lhs, rhs) < 1e-12);
}

TEST_CASE("gradient_fields forward differences with periodic wrap") {
    ImageGrid row(1, 3, std::vector<double>{1.0, 2.0, 4.0});
    auto [gx, gy] = gradient_fields(row);
    CHECK(gx.domain() == Domain::GradX);
    CHECK(gy.domain() == Domain::GradY);
    CHECK(gx(0, 0) == 1.0);
    CHECK(gx(0, 1) == 2.0);
    CHECK(gx(0, 2) == -3.0);
    for (int j = 0; j < 3; ++j) CHECK(gy(0, j) == 0.0);  // single row wraps onto itself
}

TEST_CASE("gradient_fields of a constant image is zero") {
    ImageGrid img(5, 7, 0.42);
    auto [gx, gy] = gradient_fields(img);
    for (double v : gx.data()) CHECK(v == 0.0);
    for (double v : gy.data()) CHECK(v == 0.0);
}

TEST_CASE("gradient rows telescope to zero under the periodic wrap") {
    Rng rng(15);
    ImageGrid img = oracle::random_image(rng, 8, 8);
    auto [gx, gy] = gradient_fields(img);
    for (int i = 0; i < 8; ++i) {
        double row_sum = 0.0, col_sum = 0.0;
        for (int j = 0; j < 8; ++j) {
            row_sum += gx(i, j);
            col_sum += gy(j, i);
        }
        CHECK_THAT(row_sum, Catch::Matchers::WithinAbs(0.0, 1e-12));
        CHECK_THAT(col_sum, Catch::Matchers::WithinAbs(0.0, 1e-12));
    }
}

TEST_CASE("gradient_fields rejects gradient-domain input") {
    ImageGrid img(4, 4, 0.1, Domain::GradX);
    CHECK_THROWS_AS(gradient_fields(img), DomainTagError);
}

TEST_CASE("gradient of a sum is the sum of gradients") {
    Rng rng(16);
    ImageGrid x = oracle::random_image(rng, 6, 6), y = oracle::random_image(rng, 6, 6);
    auto [sx, sy] = gradient_fields(x + y);
    auto [xx, xy] = gradient_fields(x);
    auto [yx, yy] = gradient_fields(y);
    CHECK(max_abs_difference(sx, xx + yx) < 1e-12);
    CHECK(max_abs_difference(sy, xy + yy) < 1e-12);
}

TEST_CASE("flip_kernel fixes symmetric kernels and is an involution") {
    // The flip rebuilds a BlurKernel, and renormalization sums the weights in
    // reversed order, so agreement is to rounding (1 ulp), not bitwise.
    BlurKernel d = BlurKernel::delta(3);
    BlurKernel df = flip_kernel(d);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) CHECK(df(i, j) == d(i, j));  // 0s and 1 survive exactly

    BlurKernel g = BlurKernel::gaussian(5, 1.0);
    BlurKernel gf = flip_kernel(g);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j)
            CHECK_THAT(gf(i, j), Catch::Matchers::WithinAbs(g(i, j), 1e-15));

    Rng rng(17);
    BlurKernel k = oracle::random_kernel(rng, 3);
    BlurKernel kff = flip_kernel(flip_kernel(k));
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            CHECK_THAT(kff(i, j), Catch::Matchers::WithinAbs(k(i, j), 1e-15));
}

TEST_CASE("flipped kernel realizes the adjoint of periodic convolution") {
    Rng rng(18);
    BlurKernel k = oracle::random_kernel(rng, 3);
    ImageGrid a = oracle::random_image(rng, 8, 8), b = oracle::random_image(rng, 8, 8);
    double lhs = dot(convolve(a, k, Boundary::Periodic).data(), b.data());
    double rhs = dot(a.data(), convolve(b, flip_kernel(k), Boundary::Periodic).data());
    CHECK_THAT(lhs, Catch::Matchers::WithinAbs(rhs, 1e-10));
}

TEST_CASE("edge_taper leaves constants and delta-blur inputs unchanged") {
    ImageGrid constant(10, 10, 0.6);
    CHECK(max_abs_difference(edge_taper(constant, BlurKernel::gaussian(5, 1.0)), constant) <
          1e-12);
    Rng rng(19);
    ImageGrid img = oracle::random_image(rng, 10, 10);
    // Blurring with a delta reproduces the image, but the border blend computes
    // alpha*x + (1-alpha)*x, which is only within 1 ulp of x.
    CHECK(max_abs_difference(edge_taper(img, BlurKernel::delta(5)), img) < 1e-15);
}

TEST_CASE("edge_taper keeps the interior bit-identical") {
    Rng rng(20);
    ImageGrid img = oracle::random_image(rng, 16, 16);
    ImageGrid tapered = edge_taper(img, oracle::random_kernel(rng, 5));
    for (int i = 5; i < 11; ++i)
        for (int j = 5; j < 11; ++j) CHECK(tapered(i, j) == img(i, j));
}

TEST_CASE("luminance uses the Rec.601 weights") {
    ImageGrid r(2, 2, 1.0), g(2, 2, 0.5), b(2, 2, 0.25);
    ImageGrid y = luminance(r, g, b);
    CHECK_THAT(y(0, 0), Catch::Matchers::WithinAbs(0.299 + 0.587 * 0.5 + 0.114 * 0.25, 1e-12));
}

TEST_CASE("circular_shift wraps and inverts") {
    Rng rng(21);
    ImageGrid img = oracle::random_image(rng, 5, 6);
    ImageGrid back = circular_shift(circular_shift(img, 2, -3), -2, 3);
    CHECK(max_abs_difference(back, img) == 0.0);
    ImageGrid s = circular_shift(img, 1, 0);
    CHECK(s(1, 0) == img(0, 0));
    CHECK(s(0, 0) == img(4, 0));
}
