#include <catch2/catch_amalgamated.hpp>

#include <mdnmf/adversarial.hpp>
#include <mdnmf/core.hpp>

#include <cmath>
#include <random>

#include "test_util.hpp"

using namespace mdnmf;

TEST_CASE("naive_invert rescales the mixture by the inversion gain") {
  Vector a(2);
  a << 0.8, 0.2;
  const Matrix v = Matrix::Constant(1, 1, 1.0);
  REQUIRE(naive_invert(a, v, 0)(0, 0) ==
          Catch::Approx(0.8 / 0.68).epsilon(1e-15));
  REQUIRE(naive_invert(a, v, 1)(0, 0) ==
          Catch::Approx(0.2 / 0.68).epsilon(1e-15));
  REQUIRE_THROWS_AS(naive_invert(Vector::Zero(2), v, 0), ValidationError);
}

TEST_CASE("beta evaluates the squared inversion gain") {
  MixingSpec mix;
  mix.weights = Vector(2);
  mix.weights << 0.8, 0.2;
  const double point = std::pow(0.8 / 0.68, 2.0);
  REQUIRE(beta(mix, 0) == Catch::Approx(point).epsilon(1e-15));

  Vector even(2);
  even << 0.5, 0.5;
  mix.sampled_weights = std::vector<Vector>{even, mix.weights};
  REQUIRE(beta(mix, 0) ==
          Catch::Approx(0.5 * (1.0 + point)).epsilon(1e-15));
}

TEST_CASE("default_omega distributes mass by dataset size") {
  SECTION("two sources, equal pool halves") {
    const Vector omega = default_omega({600, 500}, 500, 0);
    REQUIRE(omega[1] == Catch::Approx(0.5).epsilon(1e-15));
    REQUIRE(omega[0] == Catch::Approx(0.5).epsilon(1e-15));
    REQUIRE(omega.sum() == 1.0);
  }
  SECTION("no mixed data leaves zero mixed weight") {
    const Vector omega = default_omega({50, 100, 300}, 0, 0);
    REQUIRE(omega[0] == 0.0);
    REQUIRE(omega[1] == Catch::Approx(0.25).epsilon(1e-15));
    REQUIRE(omega[2] == Catch::Approx(0.75).epsilon(1e-15));
    REQUIRE(omega.sum() == 1.0);
  }
  SECTION("empty pool is a configuration error") {
    REQUIRE_THROWS_AS(default_omega({10, 0}, 0, 0), ConfigError);
  }
}

TEST_CASE("assemble_adversarial orders blocks and scales columns") {
  std::mt19937_64 g(21);
  const Matrix u0 = Matrix::Constant(2, 2, 1.0);
  const Matrix u1 = Matrix::Constant(2, 3, 2.0);
  const Matrix u2 = Matrix::Constant(2, 4, 3.0);
  const Matrix mixed = Matrix::Constant(2, 5, 4.0);
  MixingSpec mix;
  mix.weights = Vector(3);
  mix.weights << 0.2, 0.3, 0.5;

  SECTION("sources ascending then mixed, sqrt(omega) scaling") {
    Vector omega(3);
    omega << 0.25, 0.25, 0.5;  // i = 0: omega[0] weighs the mixed block
    const ScaledDataset ds =
        assemble_adversarial(0, {u0, u1, u2}, mixed, omega, mix, false);
    REQUIRE(ds.cols() == 3 + 4 + 5);
    REQUIRE(ds.data(0, 0) == Catch::Approx(std::sqrt(0.25) * 2.0));
    REQUIRE(ds.data(0, 3) == Catch::Approx(std::sqrt(0.5) * 3.0));
    const double gain = 0.2 / mix.weights.squaredNorm();
    REQUIRE(ds.data(0, 7) == Catch::Approx(std::sqrt(0.25) * gain * 4.0));
    REQUIRE(ds.lambda_scale[0] == Catch::Approx(std::sqrt(0.25)));
    REQUIRE(ds.lambda_scale[7] == Catch::Approx(std::sqrt(0.25)));
    REQUIRE((ds.lambda_scale.array() > 0.0).all());
    REQUIRE((ds.lambda_scale.array() <= 1.0).all());
  }

  SECTION("all mass on one source copies it verbatim") {
    Vector omega(3);
    omega << 0.0, 1.0, 0.0;
    const ScaledDataset ds =
        assemble_adversarial(0, {u0, u1, u2}, mixed, omega, mix, false);
    REQUIRE(ds.cols() == u1.cols());
    REQUIRE((ds.data - u1).norm() == 0.0);
    REQUIRE((ds.lambda_scale.array() == 1.0).all());
  }

  SECTION("beta mode scales raw mixtures") {
    Vector omega(3);
    omega << 0.5, 0.5, 0.0;
    const ScaledDataset ds =
        assemble_adversarial(0, {u0, u1, u2}, mixed, omega, mix, true);
    const double expect = std::sqrt(0.5 * beta(mix, 0)) * 4.0;
    REQUIRE(ds.data(0, u1.cols()) == Catch::Approx(expect).epsilon(1e-14));
    REQUIRE(ds.lambda_scale[u1.cols()] == Catch::Approx(std::sqrt(0.5)));
  }

  SECTION("per-column weights invert each mixture with its own gain") {
    Vector omega(3);
    omega << 1.0, 0.0, 0.0;
    MixingSpec per = mix;
    std::vector<Vector> ws;
    for (int c = 0; c < 5; ++c) {
      Vector a(3);
      a << 0.2 + 0.1 * c, 0.5 - 0.05 * c, 0.3 - 0.05 * c;
      ws.push_back(a);
    }
    per.sampled_weights = ws;
    const ScaledDataset ds =
        assemble_adversarial(0, {u0, u1, u2}, mixed, omega, per, false);
    REQUIRE(ds.cols() == 5);
    for (Index c = 0; c < 5; ++c) {
      const Vector& a = ws[static_cast<size_t>(c)];
      REQUIRE(ds.data(1, c) ==
              Catch::Approx(a[0] / a.squaredNorm() * 4.0).epsilon(1e-14));
    }
  }

  SECTION("empty pool is a configuration error") {
    Vector omega(3);
    omega << 1.0, 0.0, 0.0;
    REQUIRE_THROWS_AS(assemble_adversarial(0, {u0, u1, u2}, Matrix(2, 0),
                                           omega, mix, false),
                      ConfigError);
  }
}

TEST_CASE("mix_signals forms the exact weighted sum") {
  std::mt19937_64 g(22);
  const Matrix u0 = testutil::random_nonneg(3, 4, g);
  const Matrix u1 = testutil::random_nonneg(3, 4, g);
  Vector a(2);
  a << 0.3, 0.7;
  const Matrix v = mix_signals({u0, u1}, a);
  REQUIRE((v - (0.3 * u0 + 0.7 * u1)).norm() == 0.0);

  SECTION("weights must sum to one") {
    Vector bad(2);
    bad << 0.3, 0.3;
    REQUIRE_THROWS_AS(mix_signals({u0, u1}, bad), ValidationError);
  }
  SECTION("shape mismatch is rejected") {
    REQUIRE_THROWS_AS(mix_signals({u0, Matrix(3, 5)}, a), DimensionError);
  }
}

TEST_CASE("scaled columns encode equivariantly under scaled sparsity") {
  // Encoding sqrt(w) * u with sparsity sqrt(w) * lambda equals sqrt(w)
  // times the encoding of u with lambda, which is what the per-column
  // multipliers of a ScaledDataset arrange.
  std::mt19937_64 g(23);
  const Matrix wm = testutil::random_nonneg(6, 3, g, 0.05, 1.0);
  const Matrix u = testutil::random_nonneg(6, 4, g, 0.1, 1.0);
  const double lambda = 0.1;
  const double root = std::sqrt(0.37);

  EncodeConfig plain;
  plain.sparsity = lambda;
  plain.max_iters = 400;
  plain.rel_tol = 1e-13;
  const Latent h = encode(Basis{wm}, u, plain);

  EncodeConfig scaled = plain;
  scaled.per_column_sparsity = Vector::Constant(4, root);
  const Latent hs = encode(Basis{wm}, root * u, scaled);

  const double rel =
      (hs.mat - root * h.mat).norm() / std::max(root * h.mat.norm(), 1e-300);
  REQUIRE(rel <= 1e-6);
}
