#include <doctest.h>

#include <cmath>
#include <functional>
#include <numeric>
#include <span>

#include "oracles/oracles.hpp"
#include "vxseg/errors.hpp"
#include "vxseg/ops.hpp"

using namespace vxseg;

namespace {

// Builds y = op(x, params...) on a fresh tape and returns sum_i r_i * y_i.
using Builder = std::function<Var(Tape&, Var)>;

double projected_value(const Builder& build, const Tensor& x, const std::vector<double>& r) {
  Tape tape;
  Var y = build(tape, tape.leaf(x));
  return oracle::project(y.value(), r);
}

// Analytic gradient of sum_i r_i * y_i with respect to x through the tape.
Tensor projected_grad(const Builder& build, const Tensor& x, const std::vector<double>& r) {
  Tape tape;
  Var xv = tape.leaf(x);
  Var y = build(tape, xv);
  Tensor rw(Shape{1, static_cast<std::int64_t>(r.size())});
  for (std::size_t i = 0; i < r.size(); ++i) rw[i] = static_cast<float>(r[i]);
  Var flat = reshape(y, Shape{1, static_cast<std::int64_t>(y.value().size())});
  Var s = linear(flat, tape.constant(rw), tape.constant(Tensor(Shape{1}, 0.0f)));
  tape.backward(s);
  return tape.grad(xv);
}

// Relative error (vector 2-norm) between the analytic gradient and central
// differences over every coordinate of x, or `samples` evenly spread ones.
double grad_error(const Builder& build, const Tensor& x, std::uint64_t seed,
                  std::size_t samples = 0) {
  Tape probe;
  const std::size_t out_n = build(probe, probe.leaf(x)).value().size();
  const auto r = oracle::projection_weights(out_n, seed);
  const Tensor analytic = projected_grad(build, x, r);
  std::vector<double> a, n;
  const std::size_t stride = samples == 0 ? 1 : std::max<std::size_t>(1, x.size() / samples);
  for (std::size_t i = 0; i < x.size(); i += stride) {
    a.push_back(analytic[i]);
    n.push_back(oracle::central_difference(
        [&](const Tensor& xp) { return projected_value(build, xp, r); }, x, i));
  }
  return oracle::vector_relative_error(a, n);
}

// Largest |a - b| / max(1, |b|).
double max_scaled_diff(std::span<const float> a, const std::vector<double>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i)
    worst = std::max(worst, std::abs(a[i] - b[i]) / std::max(1.0, std::abs(b[i])));
  return worst;
}

Var conv_with(Tape& t, Var x, const Tensor& w, const Tensor& b, int stride) {
  return conv3d(x, t.constant(w), t.constant(b), stride);
}

}  // namespace

TEST_SUITE("conv3d") {
  TEST_CASE("zero input yields the bias everywhere") {
    Tape t;
    Var x = t.constant(Tensor({1, 2, 4, 5, 6}, 0.0f));
    Var w = t.constant(oracle::random_tensor({3, 2, 3, 3, 3}, 1));
    Var b = t.constant(Tensor({3}, std::vector<float>{0.5f, -1.25f, 2.0f}));
    const Tensor& y = conv3d(x, w, b, 1).value();
    CHECK(y.shape() == Shape{1, 3, 4, 5, 6});
    for (std::int64_t f = 0; f < 3; ++f)
      for (std::int64_t i = 0; i < 4 * 5 * 6; ++i)
        CHECK(y[static_cast<std::size_t>(f * 120 + i)] == t.value(b)[static_cast<std::size_t>(f)]);
  }

  TEST_CASE("delta kernel is the identity") {
    Tape t;
    Tensor x = oracle::random_tensor({1, 1, 3, 3, 3}, 2);
    Tensor w({1, 1, 3, 3, 3}, 0.0f);
    w.at5(0, 0, 1, 1, 1) = 1.0f;
    const Tensor& y = conv3d(t.constant(x), t.constant(w), t.constant(Tensor({1}, 0.0f)), 1).value();
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == x[i]);
  }

  TEST_CASE("4^3 ramp, all-ones kernel, stride 2 matches the direct oracle in value and gradient") {
    Tensor x({1, 1, 4, 4, 4});
    std::iota(x.values().begin(), x.values().end(), 0.0f);
    const Tensor w({1, 1, 3, 3, 3}, 1.0f);
    const Tensor b({1}, 0.0f);
    Tape t;
    const Tensor& y = conv_with(t, t.constant(x), w, b, 2).value();
    const Tensor expected = oracle::direct_conv3d(x, w, b, 2);
    REQUIRE(y.shape() == Shape{1, 1, 2, 2, 2});
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == expected[i]);
    // Corner output covers the 2x2x2 block at the origin: 0+1+4+5+16+17+20+21.
    CHECK(y[0] == 84.0f);

    // Gradient of the plain output sum against the looped oracle.
    Tape g;
    Var xv = g.leaf(x);
    Var wv = g.leaf(w);
    Var bv = g.leaf(b);
    Var s = linear(reshape(conv3d(xv, wv, bv, 2), {1, 8}), g.constant(Tensor({1, 8}, 1.0f)),
                   g.constant(Tensor({1})));
    g.backward(s);
    const auto ref = oracle::direct_conv3d_backward(x, w, Tensor({1, 1, 2, 2, 2}, 1.0f), 2);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(g.grad(xv)[i] == ref.x[i]);
    for (std::size_t i = 0; i < w.size(); ++i) CHECK(g.grad(wv)[i] == ref.w[i]);
    CHECK(g.grad(bv)[0] == 8.0f);
  }

  TEST_CASE("forward matches the seven-loop oracle on all shapes up to 2x3x8x8x8") {
    std::uint64_t seed = 100;
    for (std::int64_t n : {1, 2})
      for (std::int64_t c : {1, 2, 3})
        for (std::int64_t f : {1, 3, 5})
          for (std::int64_t e : {1, 2, 3, 5, 8})
            for (int stride : {1, 2}) {
              const Tensor x = oracle::random_tensor({n, c, e, std::max<std::int64_t>(1, e - 1), e}, ++seed);
              const Tensor w = oracle::random_tensor({f, c, 3, 3, 3}, ++seed);
              const Tensor b = oracle::random_tensor({f}, ++seed);
              Tape t;
              const Tensor& y = conv_with(t, t.constant(x), w, b, stride).value();
              const Tensor ref = oracle::direct_conv3d(x, w, b, stride);
              REQUIRE(y.shape() == ref.shape());
              double worst = 0.0;
              for (std::size_t i = 0; i < y.size(); ++i)
                worst = std::max(worst, std::abs(double(y[i]) - ref[i]) / std::max(1.0, std::abs(double(ref[i]))));
              CHECK_MESSAGE(worst <= 1e-6, "n=", n, " c=", c, " f=", f, " e=", e, " s=", stride);
            }
  }

  TEST_CASE("backward matches the looped gradient oracle") {
    std::uint64_t seed = 500;
    for (std::int64_t c : {1, 3})
      for (std::int64_t f : {1, 2, 5})
        for (std::int64_t e : {1, 2, 3, 6})
          for (int stride : {1, 2}) {
            const Tensor x = oracle::random_tensor({2, c, e, e + 1, std::max<std::int64_t>(1, e - 1)}, ++seed);
            const Tensor w = oracle::random_tensor({f, c, 3, 3, 3}, ++seed);
            const Tensor b = oracle::random_tensor({f}, ++seed);
            Tape t;
            Var xv = t.leaf(x), wv = t.leaf(w), bv = t.leaf(b);
            Var y = conv3d(xv, wv, bv, stride);
            const Tensor gy = oracle::random_tensor(y.shape(), ++seed);
            const auto n = static_cast<std::int64_t>(gy.size());
            Tensor gw({1, n});
            std::copy(gy.values().begin(), gy.values().end(), gw.values().begin());
            t.backward(linear(reshape(y, {1, n}), t.constant(gw), t.constant(Tensor({1}))));
            const auto ref = oracle::direct_conv3d_backward(x, w, gy, stride);
            CHECK(max_scaled_diff(t.grad(xv).values(), ref.x) <= 1e-6);
            CHECK(max_scaled_diff(t.grad(wv).values(), ref.w) <= 1e-6);
            CHECK(max_scaled_diff(t.grad(bv).values(), ref.b) <= 1e-6);
          }
  }

  TEST_CASE("input, weight and bias gradients match finite differences") {
    for (int stride : {1, 2}) {
      const Tensor x = oracle::random_tensor({2, 2, 5, 4, 6}, 11 + stride);
      const Tensor w = oracle::random_tensor({3, 2, 3, 3, 3}, 21 + stride);
      const Tensor b = oracle::random_tensor({3}, 31 + stride);
      CHECK(grad_error([&](Tape& t, Var xv) { return conv_with(t, xv, w, b, stride); }, x, 5) < 1e-3);
      CHECK(grad_error([&](Tape& t, Var wv) { return conv3d(t.constant(x), wv, t.constant(b), stride); }, w, 6) < 1e-3);
      CHECK(grad_error([&](Tape& t, Var bv) { return conv3d(t.constant(x), t.constant(w), bv, stride); }, b, 8) < 1e-3);
    }
  }

  TEST_CASE("shape contracts") {
    Tape t;
    Var x = t.constant(Tensor({1, 2, 4, 4, 4}));
    Var b = t.constant(Tensor({1}));
    CHECK_THROWS_AS(conv3d(x, t.constant(Tensor({1, 3, 3, 3, 3})), b, 1), ContractViolation);
    CHECK_THROWS_AS(conv3d(x, t.constant(Tensor({1, 2, 5, 5, 5})), b, 1), ContractViolation);
    CHECK_THROWS_AS(conv3d(x, t.constant(Tensor({1, 2, 3, 3, 3})), b, 3), ContractViolation);
  }

  TEST_CASE("non-finite output is a numeric error") {
    Tape t;
    Tensor x({1, 1, 2, 2, 2}, 1.0f);
    x[3] = std::numeric_limits<float>::infinity();
    CHECK_THROWS_AS(conv3d(t.constant(x), t.constant(Tensor({1, 1, 3, 3, 3}, 1.0f)),
                           t.constant(Tensor({1})), 1),
                    NumericError);
  }

  TEST_CASE("forward is bit-identical across repeated evaluation") {
    const Tensor x = oracle::random_tensor({2, 3, 8, 8, 8}, 3);
    const Tensor w = oracle::random_tensor({4, 3, 3, 3, 3}, 4);
    const Tensor b = oracle::random_tensor({4}, 5);
    Tape t1, t2;
    const Tensor& a = conv_with(t1, t1.constant(x), w, b, 1).value();
    const Tensor& c = conv_with(t2, t2.constant(x), w, b, 1).value();
    CHECK(a.storage() == c.storage());
  }
}

TEST_SUITE("trilinear_upscale") {
  TEST_CASE("constant volume stays constant") {
    for (int factor : {1, 2, 4, 16}) {
      Tape t;
      const Tensor& y = trilinear_upscale(t.constant(Tensor({1, 2, 2, 3, 2}, 0.375f)), factor).value();
      CHECK(y.shape() == Shape{1, 2, 2 * factor, 3 * factor, 2 * factor});
      for (float v : y.values()) CHECK(v == 0.375f);
    }
  }

  TEST_CASE("factor 1 is the identity") {
    const Tensor x = oracle::random_tensor({2, 1, 3, 4, 5}, 9);
    Tape t;
    CHECK(trilinear_upscale(t.constant(x), 1).value().storage() == x.storage());
  }

  TEST_CASE("2^3 volume of 0..7 at factor 2 matches the per-voxel oracle and stays in range") {
    Tensor x({1, 1, 2, 2, 2});
    std::iota(x.values().begin(), x.values().end(), 0.0f);
    Tape t;
    const Tensor& y = trilinear_upscale(t.constant(x), 2).value();
    REQUIRE(y.shape() == Shape{1, 1, 4, 4, 4});
    for (std::int64_t z = 0; z < 4; ++z)
      for (std::int64_t yy = 0; yy < 4; ++yy)
        for (std::int64_t xx = 0; xx < 4; ++xx)
          CHECK(y.at5(0, 0, z, yy, xx) ==
                doctest::Approx(oracle::trilinear_voxel(x, 0, 0, z, yy, xx, 2)).epsilon(1e-6));
    CHECK(y.at5(0, 0, 0, 0, 0) == 0.0f);
    CHECK(y.at5(0, 0, 3, 3, 3) == 7.0f);
    const auto [mn, mx] = std::minmax_element(y.values().begin(), y.values().end());
    CHECK(*mn >= 0.0f);
    CHECK(*mx <= 7.0f);
  }

  TEST_CASE("random volumes match the oracle and stay within the input range") {
    for (int factor : {2, 4, 16}) {
      const Tensor x = oracle::random_tensor({1, 2, 2, 3, 1}, 40 + factor, -3.0f, 5.0f);
      Tape t;
      const Tensor& y = trilinear_upscale(t.constant(x), factor).value();
      const auto [mn, mx] = std::minmax_element(x.values().begin(), x.values().end());
      for (std::int64_t c = 0; c < 2; ++c)
        for (std::int64_t z = 0; z < y.dim(2); ++z)
          for (std::int64_t yy = 0; yy < y.dim(3); ++yy)
            for (std::int64_t xx = 0; xx < y.dim(4); ++xx) {
              const float v = y.at5(0, c, z, yy, xx);
              CHECK(std::abs(v - oracle::trilinear_voxel(x, 0, c, z, yy, xx, factor)) <= 1e-6 * 5);
              CHECK(v >= *mn);
              CHECK(v <= *mx);
            }
    }
  }

  TEST_CASE("gradient matches finite differences") {
    const Tensor x = oracle::random_tensor({1, 2, 2, 3, 2}, 12);
    CHECK(grad_error([](Tape&, Var xv) { return trilinear_upscale(xv, 2); }, x, 13) < 1e-3);
    CHECK(grad_error([](Tape&, Var xv) { return trilinear_upscale(xv, 4); }, x, 14) < 1e-3);
  }

  TEST_CASE("unsupported factors are rejected") {
    Tape t;
    Var x = t.constant(Tensor({1, 1, 2, 2, 2}));
    CHECK_THROWS_AS(trilinear_upscale(x, 3), ContractViolation);
    CHECK_THROWS_AS(trilinear_upscale(x, 0), ContractViolation);
  }
}

TEST_SUITE("leaky_relu") {
  TEST_CASE("definitional values") {
    Tape t;
    const Tensor& y =
        leaky_relu(t.constant(Tensor({3}, std::vector<float>{0.0f, 5.0f, -2.0f})), 0.1f).value();
    CHECK(y[0] == 0.0f);
    CHECK(y[1] == 5.0f);
    CHECK(y[2] == doctest::Approx(-0.2f));
  }

  TEST_CASE("subgradient at zero is one, alpha on the negative side") {
    Tape t;
    Var x = t.leaf(Tensor({3}, std::vector<float>{0.0f, 2.0f, -1.0f}));
    Var y = leaky_relu(x, 0.25f);
    Var s = linear(reshape(y, {1, 3}), t.constant(Tensor({1, 3}, 1.0f)), t.constant(Tensor({1})));
    t.backward(s);
    CHECK(t.grad(x)[0] == 1.0f);
    CHECK(t.grad(x)[1] == 1.0f);
    CHECK(t.grad(x)[2] == 0.25f);
  }

  TEST_CASE("alpha outside (0,1) is rejected") {
    Tape t;
    CHECK_THROWS_AS(leaky_relu(t.constant(Tensor({1})), 0.0f), ContractViolation);
    CHECK_THROWS_AS(leaky_relu(t.constant(Tensor({1})), 1.0f), ContractViolation);
  }

  TEST_CASE("gradient matches finite differences away from the kink") {
    Tensor x = oracle::random_tensor({2, 1, 3, 3, 3}, 17);
    for (auto& v : x.values()) if (std::abs(v) < 0.05f) v = 0.5f;
    CHECK(grad_error([](Tape&, Var xv) { return leaky_relu(xv, 0.01f); }, x, 18) < 1e-3);
  }
}

TEST_SUITE("batch_norm") {
  TEST_CASE("train mode normalizes each channel to mean 0, variance 1") {
    const Tensor x = oracle::random_tensor({2, 3, 4, 4, 4}, 21, -2.0f, 7.0f);
    NormState st{"bn", Tensor({3}, 0.0f), Tensor({3}, 1.0f)};
    Tape t;
    const Tensor& y = batch_norm(t.constant(x), t.constant(Tensor({3}, 1.0f)),
                                 t.constant(Tensor({3}, 0.0f)), st, NormMode::train)
                          .value();
    for (std::int64_t c = 0; c < 3; ++c) {
      double s = 0, ss = 0;
      for (std::int64_t n = 0; n < 2; ++n)
        for (std::int64_t i = 0; i < 64; ++i) s += y[static_cast<std::size_t>((n * 3 + c) * 64 + i)];
      const double mean = s / 128;
      for (std::int64_t n = 0; n < 2; ++n)
        for (std::int64_t i = 0; i < 64; ++i) {
          const double d = y[static_cast<std::size_t>((n * 3 + c) * 64 + i)] - mean;
          ss += d * d;
        }
      CHECK(std::abs(mean) < 1e-5);
      CHECK(std::abs(ss / 128 - 1.0) < 1e-4);
    }
  }

  TEST_CASE("gamma 0 yields beta broadcast") {
    const Tensor x = oracle::random_tensor({2, 2, 2, 2, 2}, 22);
    NormState st{"bn", Tensor({2}, 0.0f), Tensor({2}, 1.0f)};
    Tape t;
    const Tensor& y = batch_norm(t.constant(x), t.constant(Tensor({2}, 0.0f)),
                                 t.constant(Tensor({2}, std::vector<float>{0.5f, -3.0f})), st,
                                 NormMode::train)
                          .value();
    for (std::int64_t n = 0; n < 2; ++n)
      for (std::int64_t i = 0; i < 8; ++i) {
        CHECK(y[static_cast<std::size_t>((n * 2 + 0) * 8 + i)] == 0.5f);
        CHECK(y[static_cast<std::size_t>((n * 2 + 1) * 8 + i)] == -3.0f);
      }
  }

  TEST_CASE("running statistics follow the 0.9 moving average and drive infer mode") {
    Tensor x({1, 1, 1, 1, 4}, std::vector<float>{1, 2, 3, 6});  // mean 3, unbiased var 14/3
    NormState st{"bn", Tensor({1}, 0.0f), Tensor({1}, 1.0f)};
    Tape t;
    batch_norm(t.constant(x), t.constant(Tensor({1}, 1.0f)), t.constant(Tensor({1}, 0.0f)), st,
               NormMode::train);
    CHECK(st.running_mean[0] == doctest::Approx(0.3));
    CHECK(st.running_var[0] == doctest::Approx(0.9 + 0.1 * 14.0 / 3.0));
    const Tensor& y = batch_norm(t.constant(x), t.constant(Tensor({1}, 2.0f)),
                                 t.constant(Tensor({1}, 1.0f)), st, NormMode::infer)
                          .value();
    const double inv = 1.0 / std::sqrt(st.running_var[0] + 1e-5);
    CHECK(y[3] == doctest::Approx(2.0 * (6.0 - st.running_mean[0]) * inv + 1.0));
  }

  TEST_CASE("constant channel is handled by the epsilon floor") {
    NormState st{"bn", Tensor({1}, 0.0f), Tensor({1}, 1.0f)};
    Tape t;
    const Tensor& y = batch_norm(t.constant(Tensor({2, 1, 2, 2, 2}, 4.0f)), t.constant(Tensor({1}, 1.0f)),
                                 t.constant(Tensor({1}, 0.25f)), st, NormMode::train)
                          .value();
    for (float v : y.values()) CHECK(v == 0.25f);
  }

  TEST_CASE("single value per channel in train mode is rejected") {
    NormState st{"bn", Tensor({1}, 0.0f), Tensor({1}, 1.0f)};
    Tape t;
    CHECK_THROWS_AS(batch_norm(t.constant(Tensor({1, 1, 1, 1, 1})), t.constant(Tensor({1}, 1.0f)),
                               t.constant(Tensor({1})), st, NormMode::train),
                    ContractViolation);
  }

  TEST_CASE("input, gamma and beta gradients match finite differences on 2x3x4x4x4") {
    const Tensor x = oracle::random_tensor({2, 3, 4, 4, 4}, 23);
    const Tensor gamma = oracle::random_tensor({3}, 24, 0.5f, 1.5f);
    const Tensor beta = oracle::random_tensor({3}, 25);
    auto bn = [&](Tape& t, Var xv, Var g, Var b) {
      NormState st{"bn", Tensor({3}, 0.0f), Tensor({3}, 1.0f)};
      return batch_norm(xv, g, b, st, NormMode::train);
    };
    CHECK(grad_error([&](Tape& t, Var xv) { return bn(t, xv, t.constant(gamma), t.constant(beta)); }, x, 26) < 1e-3);
    CHECK(grad_error([&](Tape& t, Var g) { return bn(t, t.constant(x), g, t.constant(beta)); }, gamma, 27) < 1e-3);
    CHECK(grad_error([&](Tape& t, Var b) { return bn(t, t.constant(x), t.constant(gamma), b); }, beta, 28) < 1e-3);
  }

  TEST_CASE("infer-mode gradient matches finite differences") {
    const Tensor x = oracle::random_tensor({2, 2, 2, 3, 2}, 29);
    NormState st{"bn", Tensor({2}, std::vector<float>{0.1f, -0.2f}), Tensor({2}, std::vector<float>{0.5f, 2.0f})};
    CHECK(grad_error([&](Tape& t, Var xv) {
            return batch_norm(xv, t.constant(Tensor({2}, 1.5f)), t.constant(Tensor({2}, 0.1f)), st, NormMode::infer);
          }, x, 30) < 1e-3);
  }
}

TEST_SUITE("concat_channels") {
  TEST_CASE("slicing the output recovers both operands") {
    const Tensor a = oracle::random_tensor({2, 2, 2, 3, 2}, 31);
    const Tensor b = oracle::random_tensor({2, 3, 2, 3, 2}, 32);
    Tape t;
    const Tensor& y = concat_channels(t.constant(a), t.constant(b)).value();
    REQUIRE(y.shape() == Shape{2, 5, 2, 3, 2});
    for (std::int64_t n = 0; n < 2; ++n)
      for (std::int64_t z = 0; z < 2; ++z)
        for (std::int64_t yy = 0; yy < 3; ++yy)
          for (std::int64_t x = 0; x < 2; ++x) {
            for (std::int64_t c = 0; c < 2; ++c) CHECK(y.at5(n, c, z, yy, x) == a.at5(n, c, z, yy, x));
            for (std::int64_t c = 0; c < 3; ++c) CHECK(y.at5(n, 2 + c, z, yy, x) == b.at5(n, c, z, yy, x));
          }
  }

  TEST_CASE("gradient routes back to the right operand") {
    const Tensor a = oracle::random_tensor({1, 2, 2, 2, 2}, 33);
    Tape t;
    Var av = t.leaf(a);
    Var zv = t.leaf(Tensor({1, 1, 2, 2, 2}, 0.0f));
    Var y = concat_channels(av, zv);
    Var s = linear(reshape(y, {1, 24}), t.constant(Tensor({1, 24}, 1.0f)), t.constant(Tensor({1})));
    t.backward(s);
    for (float g : t.grad(av).values()) CHECK(g == 1.0f);
    for (float g : t.grad(zv).values()) CHECK(g == 1.0f);
  }

  TEST_CASE("gradients match finite differences") {
    const Tensor a = oracle::random_tensor({2, 2, 2, 2, 3}, 34);
    const Tensor b = oracle::random_tensor({2, 1, 2, 2, 3}, 35);
    CHECK(grad_error([&](Tape& t, Var av) { return concat_channels(av, t.constant(b)); }, a, 36) < 1e-3);
    CHECK(grad_error([&](Tape& t, Var bv) { return concat_channels(t.constant(a), bv); }, b, 37) < 1e-3);
  }

  TEST_CASE("spatial mismatch is rejected") {
    Tape t;
    CHECK_THROWS_AS(concat_channels(t.constant(Tensor({1, 1, 2, 2, 2})), t.constant(Tensor({1, 1, 2, 2, 3}))),
                    ContractViolation);
  }
}

TEST_SUITE("bce_loss") {
  TEST_CASE("perfect prediction is effectively zero") {
    Tensor target({2, 1, 2, 2, 2}, 0.0f);
    for (std::size_t i = 0; i < target.size(); i += 3) target[i] = 1.0f;
    Tape t;
    const float loss = bce_loss(t.constant(target), target).value().item();
    CHECK(loss <= -std::log(1.0 - 1e-7) + 1e-9);
    CHECK(loss >= 0.0f);
  }

  TEST_CASE("p = 0.5 gives ln 2 for any target") {
    Tensor target = oracle::random_tensor({2, 1, 4, 4, 4}, 41, 0.0f, 1.0f);
    for (auto& v : target.values()) v = v > 0.5f ? 1.0f : 0.0f;
    Tape t;
    CHECK(bce_loss(t.constant(Tensor({2, 1, 4, 4, 4}, 0.5f)), target).value().item() ==
          doctest::Approx(std::log(2.0)).epsilon(1e-6));
  }

  TEST_CASE("gradient matches finite differences on 2x1x4x4x4") {
    const Tensor p = oracle::random_tensor({2, 1, 4, 4, 4}, 42, 0.05f, 0.95f);
    Tensor target = oracle::random_tensor({2, 1, 4, 4, 4}, 43, 0.0f, 1.0f);
    for (auto& v : target.values()) v = v > 0.5f ? 1.0f : 0.0f;
    CHECK(grad_error([&](Tape&, Var pv) { return bce_loss(pv, target); }, p, 44) < 1e-3);
  }

  TEST_CASE("non-binary targets are rejected") {
    Tape t;
    CHECK_THROWS_AS(bce_loss(t.constant(Tensor({2}, 0.5f)), Tensor({2}, 0.5f)), ContractViolation);
  }
}

TEST_SUITE("sigmoid, pooling, linear") {
  TEST_CASE("gradients match finite differences") {
    const Tensor x = oracle::random_tensor({2, 3, 2, 2, 2}, 51, -3.0f, 3.0f);
    CHECK(grad_error([](Tape&, Var v) { return sigmoid(v); }, x, 52) < 1e-3);
    CHECK(grad_error([](Tape&, Var v) { return global_avg_pool(v); }, x, 53) < 1e-3);
    const Tensor w = oracle::random_tensor({2, 3}, 54);
    const Tensor in = oracle::random_tensor({4, 3}, 55);
    CHECK(grad_error([&](Tape& t, Var v) { return linear(v, t.constant(w), t.constant(Tensor({2}))); }, in, 56) < 1e-3);
    CHECK(grad_error([&](Tape& t, Var v) { return linear(t.constant(in), v, t.constant(Tensor({2}))); }, w, 57) < 1e-3);
  }
}

TEST_SUITE("backward") {
  TEST_CASE("sum of a single parameter has an all-ones gradient") {
    Parameter p("p", oracle::random_tensor({2, 3}, 61));
    Tape t;
    Var v = t.parameter(p);
    Var s = linear(reshape(v, {1, 6}), t.constant(Tensor({1, 6}, 1.0f)), t.constant(Tensor({1})));
    t.backward(s);
    for (float g : p.grad.values()) CHECK(g == 1.0f);
  }

  TEST_CASE("a disconnected parameter keeps a zero gradient") {
    Parameter used("used", Tensor({2}, 1.0f));
    Parameter unused("unused", Tensor({2}, 1.0f));
    Tape t;
    Var u = t.parameter(used);
    t.parameter(unused);
    Var s = linear(reshape(u, {1, 2}), t.constant(Tensor({1, 2}, 1.0f)), t.constant(Tensor({1})));
    t.backward(s);
    for (float g : unused.grad.values()) CHECK(g == 0.0f);
  }

  TEST_CASE("frozen parameters are left untouched") {
    Parameter p("p", Tensor({2}, 1.0f));
    p.trainable = false;
    Tape t;
    Var x = t.leaf(Tensor({1, 2}, 1.0f));
    Var s = linear(x, reshape(t.parameter(p), {1, 2}), t.constant(Tensor({1})));
    t.backward(s);
    for (float g : p.grad.values()) CHECK(g == 0.0f);
    for (float g : t.grad(x).values()) CHECK(g == 1.0f);
  }

  TEST_CASE("calling backward twice accumulates parameter gradients") {
    Parameter p("p", Tensor({3}, 2.0f));
    Tape t;
    Var s = linear(reshape(t.parameter(p), {1, 3}), t.constant(Tensor({1, 3}, 1.0f)), t.constant(Tensor({1})));
    t.backward(s);
    t.backward(s);
    for (float g : p.grad.values()) CHECK(g == 2.0f);
  }

  TEST_CASE("backward without a forward pass is a contract violation") {
    Tape t;
    CHECK_THROWS_AS(t.backward(Var{}), ContractViolation);
    Tape other;
    Var foreign = other.leaf(Tensor::scalar(1.0f));
    CHECK_THROWS_AS(t.backward(foreign), ContractViolation);
  }

  TEST_CASE("non-scalar loss is rejected") {
    Tape t;
    Var x = t.leaf(Tensor({2}, 1.0f));
    CHECK_THROWS_AS(t.backward(x), ContractViolation);
  }
}
