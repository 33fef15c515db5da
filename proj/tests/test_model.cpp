#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <random>

#include "beamdelay/model.hpp"
#include "beamdelay/quadrature.hpp"

using namespace beamdelay;

namespace {
const BeamParams kRef{1.5, 50.0, 50.0};

double norm2(const Eigen::MatrixXd& M) {
    return Eigen::JacobiSVD<Eigen::MatrixXd>(M).singularValues()(0);
}
}  // namespace

TEST_CASE("delay blocks are traceless, singular, and norm-bounded", "[model]") {
    double prev_bound = std::numeric_limits<double>::infinity();
    for (int n = 1; n <= 40; ++n) {
        const Eigen::Matrix2d Mn = delay_block(kRef, n);
        CHECK(std::abs(Mn.trace()) <= 1e-12 * norm2(Mn));
        CHECK(std::abs(Mn.determinant()) <= 1e-12 * norm2(Mn) * norm2(Mn));
        const double bound = delay_block_norm_bound(kRef, n);
        REQUIRE(norm2(Mn) <= bound * (1.0 + 1e-12));
        REQUIRE(bound < prev_bound);  // decreasing in n
        prev_bound = bound;
    }
}

TEST_CASE("frozen delay-block values at n = 1", "[model]") {
    CHECK(norm2(delay_block(kRef, 1)) == Catch::Approx(5.8522).epsilon(1e-3));
    CHECK(delay_block_norm_bound(kRef, 1) == Catch::Approx(7.1225).epsilon(1e-3));
}

TEST_CASE("input coefficients match the boundary-lifting quadrature oracle", "[model]") {
    // With the cubic lifting w = L(u1, u2), w(0) = w(1) = 0, w''(0) = u1,
    // w''(1) = u2, the modal input satisfies
    //   B_n u = -(n pi)^2 C_{n,eps} int_0^1 w''(x) sin(n pi x) dx.
    const QuadratureRule rule = gauss_legendre(96);
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> unif(-2.0, 2.0);
    for (int trial = 0; trial < 5; ++trial) {
        const double u1 = unif(rng), u2 = unif(rng);
        for (int n = 1; n <= 6; ++n) {
            const double wpp_int = rule.integrate(
                [&](double x) { return (u1 + (u2 - u1) * x) * std::sin(n * pi * x); });
            const Eigen::Matrix2d Bn = input_block(kRef, n);
            for (int row = 0; row < 2; ++row) {
                const int eps = row == 0 ? -1 : +1;
                const double C = mode_data(kRef, ModeIndex{n, eps}).C;
                const double expected = -(n * pi) * (n * pi) * C * wpp_int;
                CHECK(Bn(row, 0) * u1 + Bn(row, 1) * u2 ==
                      Catch::Approx(expected).margin(1e-10 * (1.0 + std::abs(expected))));
            }
        }
    }
}

TEST_CASE("assembled model structure", "[model]") {
    const TruncatedModel m = assemble(kRef, 2);
    REQUIRE(m.dim() == 4);
    // A diagonal with the frozen spectrum
    CHECK(m.A(0, 0) == Catch::Approx(-29.696060767390875).epsilon(1e-12));
    CHECK(m.A(1, 1) == Catch::Approx(0.08724756412280144).epsilon(1e-12));
    CHECK(m.A(2, 2) == Catch::Approx(-104.47416866848082).epsilon(1e-6));
    CHECK(m.A(3, 3) == Catch::Approx(-13.961426163649989).epsilon(1e-6));
    CHECK((m.A - m.A.diagonal().asDiagonal().toDenseMatrix()).norm() == 0.0);
    // M strictly block diagonal
    CHECK(m.M.block<2, 2>(0, 2).norm() == 0.0);
    CHECK(m.M.block<2, 2>(2, 0).norm() == 0.0);
    // frozen first input column
    CHECK(m.B(0, 0) == Catch::Approx(4.668).epsilon(1e-3));
    CHECK(m.B(1, 0) == Catch::Approx(-1.472).epsilon(1e-3));
    CHECK(m.B(2, 0) == Catch::Approx(10.964).epsilon(1e-3));
    CHECK(m.B(3, 0) == Catch::Approx(-4.111).epsilon(1e-3));
    // second column sign pattern: (-1)^n n pi C = +b1 for odd n, -b1 for even n
    CHECK(m.B(0, 1) == Catch::Approx(m.B(0, 0)).epsilon(1e-12));
    CHECK(m.B(2, 1) == Catch::Approx(-m.B(2, 0)).epsilon(1e-12));
}

TEST_CASE("mode-count small-gain condition", "[model]") {
    const SmallGainResult r = small_gain_mode_count(kRef, 2);
    REQUIRE(r.satisfied);
    REQUIRE(r.enough_modes);
    CHECK(r.lhs == Catch::Approx(0.030319126128465115).epsilon(1e-12));
    // not enough modes below the unstable count
    const SmallGainResult r0 = small_gain_mode_count(kRef, 0);
    CHECK_FALSE(r0.satisfied);
    CHECK_FALSE(r0.enough_modes);
    // lhs decreasing in N0
    double prev = std::numeric_limits<double>::infinity();
    for (int N0 = 1; N0 <= 8; ++N0) {
        const SmallGainResult rn = small_gain_mode_count(kRef, N0);
        REQUIRE(rn.lhs < prev);
        prev = rn.lhs;
    }
}

TEST_CASE("controllability of randomized truncated models", "[model]") {
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> ua(1.05, 5.0), ub(0.0, 200.0), ug(1.0, 200.0);
    std::uniform_int_distribution<int> un(1, 4);
    for (int trial = 0; trial < 20; ++trial) {
        const BeamParams p{ua(rng), ub(rng), ug(rng)};
        const TruncatedModel m = assemble(p, un(rng));
        CHECK(controllability_check(m, InputSelection::Full));
        CHECK(controllability_check(m, InputSelection::Column1));
        CHECK(controllability_check(m, InputSelection::Column2));
    }
}

TEST_CASE("controllability fails with a zeroed input", "[model]") {
    TruncatedModel m = assemble(kRef, 2);
    m.B.setZero();
    CHECK_FALSE(controllability_check(m, InputSelection::Full));
}
