#include <gtest/gtest.h>

#include <cmath>

#include "oacl/adapters.hpp"
#include "oacl/errors.hpp"
#include "test_util.hpp"

using namespace oacl;
using oacl::testing::random_adapter;
using oacl::testing::random_matrix;

namespace {

OAAdapter tiny_adapter() {
    OAAdapter a;
    a.w1 = Param(Matrix2D{{1.0, 0.0}}, "w1");
    a.w2 = Param(Matrix2D{{0.0}, {1.0}}, "w2");
    a.g = Param(Matrix2D{{0.7}}, "g");
    a.tau = Param(Matrix2D{{0.2}}, "tau");
    return a;
}

/// y = x + Σ_i γ_i W2[:,i] (W1[i,:]·x), written out with scalar loops.
std::vector<double> scalar_oracle(const OAAdapter& a, const std::vector<double>& x) {
    const std::size_t d = a.dim();
    std::vector<double> y = x;
    for (std::size_t i = 0; i < a.r_max(); ++i) {
        const double g = a.g.value[i];
        const double tau = a.tau.value[0];
        const double gamma = std::abs(g) > tau ? (g > 0 ? 1.0 : -1.0) * (std::abs(g) - tau) : 0.0;
        double proj = 0.0;
        for (std::size_t k = 0; k < d; ++k) proj += a.w1.value(i, k) * x[k];
        for (std::size_t k = 0; k < d; ++k) y[k] += gamma * a.w2.value(k, i) * proj;
    }
    return y;
}

} // namespace

TEST(OAAdapter, HandComputedForward) {
    const OAAdapter a = tiny_adapter();
    const std::vector<double> x{2.0, 3.0};
    const auto y = oa_forward(a, std::span<const double>(x));
    EXPECT_NEAR(y[0], 2.0, 1e-15);
    EXPECT_NEAR(y[1], 4.0, 1e-15);
    const auto z = outer_product_form(a, std::span<const double>(x));
    EXPECT_NEAR(z[0], 2.0, 1e-15);
    EXPECT_NEAR(z[1], 4.0, 1e-15);
}

TEST(OAAdapter, ZeroUpProjectionIsExactIdentity) {
    Rng rng(1);
    OAAdapter a = random_adapter(6, 3, rng);
    a.w2.value.fill(0.0);
    const Matrix2D x = random_matrix(4, 6, rng);
    EXPECT_EQ(oa_forward(a, x), x);
}

TEST(OAAdapter, FullyMaskedIsIdentity) {
    Rng rng(2);
    OAAdapter a = random_adapter(5, 4, rng);
    a.tau.value[0] = 10.0;
    const Matrix2D x = random_matrix(3, 5, rng);
    EXPECT_EQ(oa_forward(a, x), x);
    EXPECT_EQ(snapshot_mask(a).r_eff, 0u);
    EXPECT_LT(max_abs_diff(outer_product_form(a, x), x), 1e-15);
}

TEST(OAAdapter, SingleActiveDimensionIsRankOne) {
    Rng rng(3);
    OAAdapter a = random_adapter(4, 3, rng);
    a.tau.value[0] = 0.5;
    a.g.value = Matrix2D{{0.1, -0.9, 0.3}};
    const std::vector<double> x{0.5, -1.0, 2.0, 0.25};
    const auto y = outer_product_form(a, std::span<const double>(x));
    const double gamma = -0.4;
    double proj = 0.0;
    for (std::size_t k = 0; k < 4; ++k) proj += a.w1.value(1, k) * x[k];
    for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(y[k], x[k] + gamma * a.w2.value(k, 1) * proj, 1e-14);
}

TEST(OAAdapter, BothFormsMatchScalarOracle) {
    Rng rng(4);
    for (int trial = 0; trial < 50; ++trial) {
        const OAAdapter a = random_adapter(7, 5, rng);
        const Matrix2D xm = random_matrix(1, 7, rng);
        const std::vector<double> x(xm.data().begin(), xm.data().end());
        const auto want = scalar_oracle(a, x);
        const auto y = oa_forward(a, std::span<const double>(x));
        const auto z = outer_product_form(a, std::span<const double>(x));
        for (std::size_t k = 0; k < 7; ++k) {
            EXPECT_NEAR(y[k], want[k], 1e-12);
            EXPECT_NEAR(z[k], want[k], 1e-12);
        }
    }
}

TEST(OAAdapter, TapeForwardMatchesPlainForward) {
    Rng rng(5);
    OAAdapter a = random_adapter(6, 4, rng);
    const Matrix2D x = random_matrix(3, 6, rng);
    Tape t;
    const Var y = oa_forward(t, a, t.constant(x));
    EXPECT_LT(max_abs_diff(y.value(), oa_forward(a, x)), 1e-15);
}

TEST(OAAdapter, RejectsWrongInputWidth) {
    Rng rng(6);
    const OAAdapter a = random_adapter(6, 4, rng);
    EXPECT_THROW(oa_forward(a, Matrix2D(2, 5)), DimensionError);
    EXPECT_THROW(outer_product_form(a, Matrix2D(2, 7)), DimensionError);
}

TEST(OAAdapter, InitializationFollowsDefaults) {
    Rng rng(7);
    AdapterInit init;
    const OAAdapter a = OAAdapter::initialized(64, 16, init, rng);
    EXPECT_EQ(a.w1.value.rows(), 16u);
    EXPECT_EQ(a.w1.value.cols(), 64u);
    EXPECT_EQ(a.w2.value.rows(), 64u);
    EXPECT_EQ(a.w2.value.cols(), 16u);
    for (double v : a.w1.value.data()) EXPECT_LE(std::abs(v), 1.0 / 8.0);
    for (double v : a.w2.value.data()) EXPECT_LE(std::abs(v), 1e-3);
    for (double v : a.g.value.data()) EXPECT_EQ(v, 1.0);
    EXPECT_EQ(a.tau_value(), 1e-4);
    EXPECT_EQ(snapshot_mask(a).r_eff, 16u);
    EXPECT_FALSE(a.g.frozen);
    EXPECT_FALSE(a.tau.frozen);
}

TEST(OAAdapter, IdentityGateModeFreezesMask) {
    Rng rng(8);
    AdapterInit init;
    init.gate_mode = GateMode::identity;
    OAAdapter a = OAAdapter::initialized(8, 4, init, rng);
    EXPECT_TRUE(a.g.frozen);
    EXPECT_TRUE(a.tau.frozen);
    a.g.value.fill(0.0); // ignored in identity mode
    for (double v : a.gamma()) EXPECT_EQ(v, 1.0);
    EXPECT_EQ(snapshot_mask(a).r_eff, 4u);
}

TEST(OAAdapter, FixedThresholdFreezesOnlyTau) {
    Rng rng(9);
    AdapterInit init;
    init.fixed_threshold = true;
    const OAAdapter a = OAAdapter::initialized(8, 4, init, rng);
    EXPECT_TRUE(a.tau.frozen);
    EXPECT_FALSE(a.g.frozen);
}

TEST(MaskSnapshot, CountsActiveGates) {
    OAAdapter a = tiny_adapter();
    a.w1 = Param(Matrix2D(3, 2), "w1");
    a.w2 = Param(Matrix2D(2, 3), "w2");
    a.g.value = Matrix2D{{0.5, -0.1, -0.5}};
    a.tau.value[0] = 0.2;
    const MaskSnapshot s = snapshot_mask(a);
    EXPECT_EQ(s.r_eff, 2u);
    EXPECT_EQ(s.active_indices, (std::vector<std::size_t>{0, 2}));
    EXPECT_NEAR(s.gamma[0], 0.3, 1e-15);
    EXPECT_EQ(s.gamma[1], 0.0);
    EXPECT_NEAR(s.gamma[2], -0.3, 1e-15);

    a.tau.value[0] = 0.6;
    EXPECT_EQ(snapshot_mask(a).r_eff, 0u);

    Rng rng(10);
    for (int trial = 0; trial < 100; ++trial) {
        const OAAdapter b = random_adapter(3, 12, rng);
        std::size_t count = 0;
        for (double g : b.g.value.data()) count += std::abs(g) > b.tau_value() ? 1 : 0;
        EXPECT_EQ(snapshot_mask(b).r_eff, count);
    }
}

TEST(StandardAdapter, ZeroUpProjectionIsIdentity) {
    Rng rng(11);
    StandardAdapter a = StandardAdapter::initialized(6, 3, 0.0, rng);
    const Matrix2D x = random_matrix(2, 6, rng);
    EXPECT_EQ(std_forward(a, x), x);
}

TEST(StandardAdapter, ZeroDownProjectionAddsBias) {
    Rng rng(12);
    StandardAdapter a = StandardAdapter::initialized(4, 2, 0.5, rng);
    a.w1.value.fill(0.0);
    a.b2.value = Matrix2D{{1, 2, 3, 4}};
    const Matrix2D x = random_matrix(3, 4, rng);
    const Matrix2D y = std_forward(a, x);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t k = 0; k < 4; ++k) EXPECT_DOUBLE_EQ(y(i, k), x(i, k) + a.b2.value[k]);
}

TEST(StandardAdapter, MatchesLoopOracleAndTape) {
    Rng rng(13);
    StandardAdapter a = StandardAdapter::initialized(5, 3, 0.5, rng);
    a.b1.value = random_matrix(1, 3, rng);
    a.b2.value = random_matrix(1, 5, rng);
    const Matrix2D x = random_matrix(4, 5, rng);
    const Matrix2D y = std_forward(a, x);
    for (std::size_t n = 0; n < 4; ++n) {
        for (std::size_t k = 0; k < 5; ++k) {
            double want = x(n, k) + a.b2.value[k];
            for (std::size_t j = 0; j < 3; ++j) {
                double pre = a.b1.value[j];
                for (std::size_t m = 0; m < 5; ++m) pre += a.w1.value(j, m) * x(n, m);
                want += a.w2.value(k, j) * std::tanh(pre);
            }
            EXPECT_NEAR(y(n, k), want, 1e-14);
        }
    }
    Tape t;
    EXPECT_LT(max_abs_diff(std_forward(t, a, t.constant(x)).value(), y), 1e-15);
}

TEST(StandardAdapter, WidthMustNotExceedDimension) {
    Rng rng(14);
    EXPECT_THROW(StandardAdapter::initialized(4, 5, 1e-3, rng), ContractError);
}

TEST(StandardAdapter, GradientsMatchFiniteDifferences) {
    Rng rng(15);
    StandardAdapter a = StandardAdapter::initialized(4, 3, 0.5, rng);
    const Matrix2D x = random_matrix(2, 4, rng);
    const LossClosure f = [&](Tape& t) { return ad::sum_squares(std_forward(t, a, t.constant(x))); };
    const auto ps = a.params();
    EXPECT_LT(check_gradients(f, ps, 1e-6).max_rel_error, 1e-6);
}
