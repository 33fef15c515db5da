#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <functional>
#include <random>
#include <sstream>
#include <unsupported/Eigen/MatrixFunctions>
#include <vector>

#include "beamdelay/dde.hpp"
#include "beamdelay/model.hpp"
#include "beamdelay/pole_placement.hpp"
#include "beamdelay/scenario.hpp"

using namespace beamdelay;

namespace {
const BeamParams kRef{1.5, 50.0, 50.0};

// Method-of-steps reference for dc/dt = Feff c + M c(t - h), constant h:
// on each interval the delayed forcing is fitted by a Chebyshev-node
// polynomial and propagated exactly through an augmented matrix exponential.
class StepsOracle {
  public:
    StepsOracle(Eigen::MatrixXd Feff, Eigen::MatrixXd M, double h,
                std::function<Eigen::VectorXd(double)> hist)
        : Feff_(std::move(Feff)), M_(std::move(M)), h_(h), hist_(std::move(hist)) {}

    void run(double T) {
        const int dim = static_cast<int>(Feff_.rows());
        const int deg = 12;
        Eigen::VectorXd c = hist_(0.0);
        double t0 = 0.0;
        while (t0 < T - 1e-12) {
            const double len = std::min(h_, T - t0);
            // Chebyshev nodes in [0, 1] of the scaled interval variable
            Eigen::MatrixXd V(deg + 1, deg + 1);
            Eigen::MatrixXd g(deg + 1, dim);
            for (int j = 0; j <= deg; ++j) {
                const double sigma = 0.5 * (1.0 - std::cos(pi * j / deg));
                double p = 1.0;
                for (int k = 0; k <= deg; ++k, p *= sigma) V(j, k) = p;
                g.row(j) = (M_ * eval(t0 + sigma * len - h_)).transpose();
            }
            const Eigen::MatrixXd P = V.fullPivLu().solve(g).transpose();  // dim x deg+1
            Eigen::MatrixXd Aaug = Eigen::MatrixXd::Zero(dim + deg + 1, dim + deg + 1);
            Aaug.topLeftCorner(dim, dim) = Feff_;
            Aaug.topRightCorner(dim, deg + 1) = P;
            for (int k = 1; k <= deg; ++k) Aaug(dim + k, dim + k - 1) = k / len;
            Eigen::VectorXd z0 = Eigen::VectorXd::Zero(dim + deg + 1);
            z0.head(dim) = c;
            z0(dim) = 1.0;  // sigma^0
            intervals_.push_back({t0, len, Aaug, z0, dim});
            c = ((Aaug * len).exp() * z0).head(dim);
            t0 += len;
        }
    }

    Eigen::VectorXd eval(double t) const {
        if (t <= 1e-14) return hist_(std::min(t, 0.0));
        for (const auto& iv : intervals_)
            if (t <= iv.t0 + iv.len + 1e-12)
                return ((iv.Aaug * (t - iv.t0)).exp() * iv.z0).head(iv.dim);
        throw std::runtime_error("StepsOracle: time beyond integrated range");
    }

  private:
    struct Interval {
        double t0, len;
        Eigen::MatrixXd Aaug;
        Eigen::VectorXd z0;
        int dim;
    };
    Eigen::MatrixXd Feff_, M_;
    double h_;
    std::function<Eigen::VectorXd(double)> hist_;
    std::vector<Interval> intervals_;
};

InitialHistory sine_ic(double a, double b, int n = 1) {
    return InitialHistory{
        [a, n](double, double x) { return a * std::sin(n * pi * x); },
        [b, n](double, double x) { return b * std::sin(n * pi * x); },
        [](double, double) { return 0.0; },
        [](double, double) { return 0.0; }};
}
}  // namespace

TEST_CASE("projection respects sine orthogonality", "[dde]") {
    const ModalBasis basis(kRef, 6);
    // y0 = sin(pi x) g(tau), yt0 = 0: only n = 1 coefficients nonzero
    const auto c1 = basis.project_state(
        [](double tau, double x) { return (1.0 + tau) * std::sin(pi * x); },
        [](double, double) { return 0.0; }, -0.25);
    REQUIRE(c1.size() == 12);
    CHECK(c1.head<2>().norm() > 0.0);
    CHECK(c1.tail(10).norm() <= 1e-12 * c1.norm());
    // y0 = 0, yt0 = sin(2 pi x): c_{2,eps} = C_{2,eps} / 2
    const auto c2 = basis.project_state([](double, double) { return 0.0; },
                                        [](double, double x) { return std::sin(2 * pi * x); },
                                        0.0);
    CHECK(c2(2) == Catch::Approx(mode_data(kRef, ModeIndex{2, -1}).C / 2.0).epsilon(1e-10));
    CHECK(c2(3) == Catch::Approx(mode_data(kRef, ModeIndex{2, +1}).C / 2.0).epsilon(1e-10));
    CHECK(std::abs(c2(0)) <= 1e-12);
}

TEST_CASE("distributed disturbance projection", "[dde]") {
    const ModalBasis basis(kRef, 6);
    const DisturbanceConfig dist_cfg = preset("paper-sec6").disturbance;
    const DisturbanceSpec dist = dist_cfg.build();
    // zero disturbance
    CHECK(project_disturbance(DisturbanceSpec::none(), 1.0, basis).norm() == 0.0);
    // pure mode 3
    const auto p3 = basis.project_distributed(
        [](double, double x) { return std::sin(3 * pi * x); }, 0.0);
    CHECK(p3(4) == Catch::Approx(mode_data(kRef, ModeIndex{3, -1}).C / 2.0).epsilon(1e-10));
    CHECK(p3.head(4).norm() <= 1e-12);
    // quadrature oracle at 10x nodes
    const ModalBasis fine(kRef, 6, 640);
    const auto p = basis.project_distributed(dist.distributed, 5.0);
    const auto pf = fine.project_distributed(dist.distributed, 5.0);
    CHECK((p - pf).norm() <= 1e-10 * (1.0 + pf.norm()));
}

TEST_CASE("integrated-by-parts projection equals the curvature form", "[dde]") {
    // c_{n,eps} = C * [(lambda_{n,-eps} / n^2 pi^2) int y0'' sin + int yt0 sin]
    const ModalBasis basis(kRef, 8);
    const QuadratureRule rule = gauss_legendre(128);
    const auto cfg = preset("paper-sec6");
    const auto ic = cfg.initial_history();
    for (double tau : {0.0, -0.1}) {
        const auto c = basis.project_state(ic.y0, ic.yt0, tau);
        for (int n = 1; n <= 8; ++n)
            for (int eps : {-1, +1}) {
                const double y0pp = -4.0 * (1.0 - tau) * (1.0 - tau);  // curvature of y0
                const double iy0pp =
                    rule.integrate([&](double x) { return y0pp * std::sin(n * pi * x); });
                const double iyt0 =
                    rule.integrate([&](double x) { return ic.yt0(tau, x) * std::sin(n * pi * x); });
                const SpectralMode m = mode_data(kRef, ModeIndex{n, eps});
                const double lam_other = mode_data(kRef, ModeIndex{n, -eps}).lambda;
                const double expected =
                    m.C * (lam_other / (double(n) * n * pi * pi) * iy0pp + iyt0);
                CHECK(c(2 * (n - 1) + (eps > 0 ? 1 : 0)) ==
                      Catch::Approx(expected).margin(1e-8));
            }
    }
}

TEST_CASE("40-mode reconstruction of the reference initial profile", "[dde]") {
    const ModalBasis basis(kRef, 40);
    const auto cfg = preset("paper-sec6");
    const auto ic = cfg.initial_history();
    const auto c = basis.project_state(ic.y0, ic.yt0, 0.0);
    const QuadratureRule rule = gauss_legendre(128);
    const double err2 = rule.integrate([&](double x) {
        const double d = basis.displacement(c, x) - ic.y0(0.0, x);
        return d * d;
    });
    CHECK(std::sqrt(err2) < 1e-3);
}

TEST_CASE("pinned-end validation rejects bad initial profiles", "[dde]") {
    const ModalBasis basis(kRef, 2);
    InitialHistory bad{[](double, double x) { return x; },
                       [](double, double) { return 0.0; }, nullptr, nullptr};
    CHECK_THROWS_AS(project_initial(bad, basis), std::invalid_argument);
}

TEST_CASE("state norm agrees with the quadrature energy integral", "[dde]") {
    const ModalBasis basis(kRef, 5);
    const RieszConstants r = riesz_constants(kRef);
    std::mt19937 rng(3);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const QuadratureRule rule = gauss_legendre(160);
    for (int trial = 0; trial < 5; ++trial) {
        Eigen::VectorXd c(10);
        for (int i = 0; i < 10; ++i) c(i) = gauss(rng);
        const double nrm = basis.state_norm(c);
        // Riesz sandwich
        CHECK(nrm * nrm >= r.m_R * c.squaredNorm() - 1e-12);
        CHECK(nrm * nrm <= r.M_R * c.squaredNorm() + 1e-12);
        // quadrature of int y''^2 + y_t^2
        const double direct = rule.integrate([&](double x) {
            double ypp = 0.0, yt = 0.0;
            for (int n = 1; n <= 5; ++n) {
                const double s = std::sin(n * pi * x);
                const double curv = -double(n) * n * pi * pi * s;
                const SpectralMode lo = mode_data(kRef, ModeIndex{n, -1});
                const SpectralMode hi = mode_data(kRef, ModeIndex{n, +1});
                ypp += c(2 * (n - 1)) * curv / lo.k + c(2 * n - 1) * curv / hi.k;
                yt += c(2 * (n - 1)) * lo.lambda * s / lo.k + c(2 * n - 1) * hi.lambda * s / hi.k;
            }
            return ypp * ypp + yt * yt;
        });
        CHECK(nrm * nrm == Catch::Approx(direct).epsilon(1e-8));
        // sup displacement bounded by the state norm
        double sup = 0.0;
        for (int g = 0; g <= 100; ++g)
            sup = std::max(sup, std::abs(basis.displacement(c, g / 100.0)));
        CHECK(sup <= nrm * (1.0 + 1e-12));
    }
}

TEST_CASE("constant-delay simulation matches the method-of-steps oracle", "[dde]") {
    const int N_sim = 1;
    const ModalBasis basis(kRef, N_sim);
    const Eigen::Matrix2d M1 = delay_block(kRef, 1);
    Eigen::Matrix2d Feff;
    Feff << basis.mode(1, -1).lambda, 0.0, 0.0, basis.mode(1, +1).lambda;
    Feff -= M1;

    const auto ic = sine_ic(0.3, 0.1);
    const Eigen::VectorXd c0 = basis.project_state(ic.y0, ic.yt0, 0.0);
    StepsOracle oracle(Feff, M1, 0.12, [c0](double) { return c0; });
    oracle.run(2.0);

    const SimOptions opt{N_sim, 5e-4, 2.0, 64, 100};
    const auto traj = simulate(kRef, std::nullopt, DelaySignal::constant(0.12),
                               DisturbanceSpec::none(), ic, opt);
    REQUIRE(traj.times.back() == Catch::Approx(2.0));
    for (std::size_t i = 0; i < traj.times.size(); ++i) {
        const Eigen::VectorXd ref = oracle.eval(traj.times[i]);
        REQUIRE((traj.coeffs[i] - ref).norm() <= 1e-6 * (1.0 + ref.norm()));
    }
}

TEST_CASE("open-loop instability of the first mode", "[dde]") {
    const auto cfg = preset("paper-sec6-openloop");
    const SimOptions opt{2, 1e-3, 10.0, 64, 0};
    const auto traj = simulate(kRef, std::nullopt, cfg.delay.build(), DisturbanceSpec::none(),
                               sine_ic(0.5, 0.0), opt);
    const auto at = [&](double t) {
        const std::size_t i = static_cast<std::size_t>(std::round(t / traj.record_dt));
        return traj.state_norms[i];
    };
    CHECK(at(10.0) > at(2.0));
    const auto rep = iss_diagnostics(traj, kRef, 2.0);
    REQUIRE(rep.conclusive);
    CHECK(rep.fitted_decay_rate < 0.0);  // growth
}

TEST_CASE("closed-loop control-norm bound holds along the trajectory", "[dde]") {
    const TruncatedModel model = assemble(kRef, 2);
    const FeedbackGain gain = place_poles(
        model, Actuation::BothEnds, {{-5, 0}, {-6, 0}, {-7, 0}, {-8, 0}});
    const auto cfg = preset("paper-sec6");
    const SimOptions opt{4, 1e-3, 2.0, 64, 0};
    const auto traj = simulate(kRef, gain.K, cfg.delay.build(), DisturbanceSpec::none(),
                               cfg.initial_history(), opt);
    CHECK(traj.gain_norm > 0.0);
    const auto rep = iss_diagnostics(traj, kRef, 0.5);
    CHECK(rep.control_margin >= -1e-10);
    REQUIRE(rep.conclusive);
    CHECK(rep.fitted_decay_rate > 0.0);
}

TEST_CASE("delay evaluator leaving the declared range is rejected", "[dde]") {
    DelaySignal lying{0.1, 0.2, [](double) { return 0.5; }};
    const SimOptions opt{1, 0.02, 1.0, 64, 0};
    CHECK_THROWS_AS(simulate(kRef, std::nullopt, lying, DisturbanceSpec::none(),
                             sine_ic(0.1, 0.0), opt),
                    DelayRangeError);
}

TEST_CASE("explicit-scheme blow-up raises a divergence error with a time", "[dde]") {
    // dt far outside the stability region of the stiffest retained mode
    const SimOptions opt{6, 0.025, 30.0, 64, 0};
    try {
        simulate(kRef, std::nullopt, DelaySignal::constant(0.12), DisturbanceSpec::none(),
                 sine_ic(0.1, 0.0), opt);
        FAIL("expected DivergenceError");
    } catch (const DivergenceError& e) {
        CHECK(e.blowup_time > 0.0);
        CHECK(e.blowup_time < 30.0);
    }
}

TEST_CASE("simulation rejects invalid step sizes", "[dde]") {
    const SimOptions opt{1, 0.05, 1.0, 64, 0};  // dt > h_m / 4
    CHECK_THROWS_AS(simulate(kRef, std::nullopt, DelaySignal::constant(0.12),
                             DisturbanceSpec::none(), sine_ic(0.1, 0.0), opt),
                    std::invalid_argument);
}

TEST_CASE("trajectory CSV export shape", "[dde]") {
    const SimOptions opt{2, 1e-2, 0.5, 64, 10};
    const auto traj = simulate(kRef, std::nullopt, DelaySignal::constant(0.12),
                               DisturbanceSpec::none(), sine_ic(0.2, 0.0), opt);
    std::ostringstream os;
    write_trajectory_csv(os, traj, kRef);
    std::istringstream is(os.str());
    std::string header;
    std::getline(is, header);
    CHECK(header ==
          "time,c_1_m,c_1_p,c_2_m,c_2_p,u1,u2,state_norm,sup_displacement");
    std::size_t rows = 0;
    for (std::string line; std::getline(is, line);) ++rows;
    CHECK(rows == traj.times.size());

    std::ostringstream fs;
    write_field_csv(fs, traj, kRef, {0.0, 0.5, 1.0});
    std::istringstream fis(fs.str());
    std::getline(fis, header);
    CHECK(header == "time,0,0.5,1");
}

TEST_CASE("history norm accounts for the tau derivative", "[dde]") {
    const auto cfg = preset("paper-sec6");
    const auto ic = cfg.initial_history();
    const double with_deriv = history_norm(ic, kRef, 0.22, 8);
    InitialHistory no_deriv{ic.y0, ic.yt0, nullptr, nullptr};
    const double finite_diff = history_norm(no_deriv, kRef, 0.22, 8);
    CHECK(with_deriv == Catch::Approx(finite_diff).epsilon(1e-6));
    const ModalBasis basis(kRef, 8);
    CHECK(with_deriv >= basis.state_norm(basis.project_state(ic.y0, ic.yt0, 0.0)));
}
