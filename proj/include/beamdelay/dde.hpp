#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <iomanip>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "beamdelay/model.hpp"
#include "beamdelay/quadrature.hpp"
#include "beamdelay/spectral.hpp"

namespace beamdelay {

// Time-varying delay with certified range [h_m, h_M]; the range is checked
// against the evaluator at every integration step, not pre-certified.
struct DelaySignal {
    double h_m;
    double h_M;
    std::function<double(double)> h;

    void validate() const {
        if (!(h_m > 0.0) || !(h_M > h_m))
            throw std::invalid_argument("DelaySignal: need 0 < h_m < h_M");
        if (!h) throw std::invalid_argument("DelaySignal: evaluator not set");
    }

    static DelaySignal constant(double value) {
        return DelaySignal{value, value * (1.0 + 1e-9) + 1e-15,
                           [value](double) { return value; }};
    }
};

struct DisturbanceSpec {
    std::function<double(double, double)> distributed;  // (t, x)
    std::function<Eigen::Vector2d(double)> boundary;    // t -> (d_b1, d_b2)

    static DisturbanceSpec none() {
        return DisturbanceSpec{[](double, double) { return 0.0; },
                               [](double) { return Eigen::Vector2d::Zero().eval(); }};
    }
};

// Initial displacement / velocity profiles on tau in [-h_M, 0]; optional
// analytic tau-derivatives refine the ||Phi||_{1,h_M} evaluation.
struct InitialHistory {
    std::function<double(double, double)> y0;   // (tau, x)
    std::function<double(double, double)> yt0;  // (tau, x)
    std::function<double(double, double)> y0_tau;   // optional
    std::function<double(double, double)> yt0_tau;  // optional
};

struct DivergenceError : std::runtime_error {
    double blowup_time;
    explicit DivergenceError(double t)
        : std::runtime_error("dde: state diverged at t = " + std::to_string(t)),
          blowup_time(t) {}
};

struct DelayRangeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Cached per-mode spectral data for projections, norms and reconstruction.
class ModalBasis {
  public:
    ModalBasis(const BeamParams& params, int N_sim, int quad_nodes = 64)
        : params_(params), N_sim_(N_sim), rule_(gauss_legendre(quad_nodes)) {
        params.validate();
        if (N_sim < 1) throw std::invalid_argument("ModalBasis: N_sim must be >= 1");
        modes_.reserve(2 * N_sim);
        for (int n = 1; n <= N_sim; ++n) {
            modes_.push_back(mode_data(params, ModeIndex{n, -1}));
            modes_.push_back(mode_data(params, ModeIndex{n, +1}));
        }
        grams_.reserve(N_sim);
        for (int n = 1; n <= N_sim; ++n) grams_.push_back(gram_block(params, n));
        // sin(n pi x_q) table for quadrature projections
        sin_table_.resize(N_sim, static_cast<int>(rule_.nodes.size()));
        for (int n = 1; n <= N_sim; ++n)
            for (std::size_t q = 0; q < rule_.nodes.size(); ++q)
                sin_table_(n - 1, static_cast<int>(q)) = std::sin(n * pi * rule_.nodes[q]);
    }

    int N_sim() const { return N_sim_; }
    int dim() const { return 2 * N_sim_; }
    const BeamParams& params() const { return params_; }
    const SpectralMode& mode(int n, int eps) const {
        return modes_[2 * (n - 1) + (eps > 0 ? 1 : 0)];
    }

    // <(y0, yt0)(tau), psi_{n,eps}>; the displacement term uses the
    // integrated-by-parts form -lambda_{n,-eps} * [y0, sin(n pi .)], valid
    // for pinned ends.
    Eigen::VectorXd project_state(const std::function<double(double, double)>& y,
                                  const std::function<double(double, double)>& yt,
                                  double tau) const {
        Eigen::VectorXd wy(rule_.nodes.size()), wyt(rule_.nodes.size());
        for (std::size_t q = 0; q < rule_.nodes.size(); ++q) {
            wy(static_cast<int>(q)) = rule_.weights[q] * y(tau, rule_.nodes[q]);
            wyt(static_cast<int>(q)) = rule_.weights[q] * yt(tau, rule_.nodes[q]);
        }
        const Eigen::VectorXd iy = sin_table_ * wy;
        const Eigen::VectorXd iyt = sin_table_ * wyt;
        Eigen::VectorXd c(dim());
        for (int n = 1; n <= N_sim_; ++n)
            for (int eps : {-1, +1}) {
                const SpectralMode& m = mode(n, eps);
                const double lam_other = mode(n, -eps).lambda;
                c(2 * (n - 1) + (eps > 0 ? 1 : 0)) =
                    m.C * (-lam_other * iy(n - 1) + iyt(n - 1));
            }
        return c;
    }

    // p_{d,n,eps}(t) = C_{n,eps} * [d_d(t, .), sin(n pi .)]
    Eigen::VectorXd project_distributed(const std::function<double(double, double)>& d_d,
                                        double t) const {
        Eigen::VectorXd w(rule_.nodes.size());
        for (std::size_t q = 0; q < rule_.nodes.size(); ++q)
            w(static_cast<int>(q)) = rule_.weights[q] * d_d(t, rule_.nodes[q]);
        const Eigen::VectorXd integrals = sin_table_ * w;
        Eigen::VectorXd p(dim());
        for (int n = 1; n <= N_sim_; ++n)
            for (int eps : {-1, +1})
                p(2 * (n - 1) + (eps > 0 ? 1 : 0)) = mode(n, eps).C * integrals(n - 1);
        return p;
    }

    // ||X||^2 = sum_n c_n^T G_n c_n with the exact per-mode Gram blocks.
    double state_norm(const Eigen::VectorXd& coeffs) const {
        double s = 0.0;
        for (int n = 1; n <= N_sim_; ++n) {
            const Eigen::Vector2d cn = coeffs.segment<2>(2 * (n - 1));
            s += cn.dot(grams_[n - 1] * cn);
        }
        return std::sqrt(std::max(0.0, s));
    }

    double displacement(const Eigen::VectorXd& coeffs, double x) const {
        double y = 0.0;
        for (int n = 1; n <= N_sim_; ++n) {
            const double s = std::sin(n * pi * x);
            y += coeffs(2 * (n - 1)) / mode(n, -1).k * s;
            y += coeffs(2 * (n - 1) + 1) / mode(n, +1).k * s;
        }
        return y;
    }

    double velocity(const Eigen::VectorXd& coeffs, double x) const {
        double yt = 0.0;
        for (int n = 1; n <= N_sim_; ++n) {
            const double s = std::sin(n * pi * x);
            const SpectralMode& lo = mode(n, -1);
            const SpectralMode& hi = mode(n, +1);
            yt += coeffs(2 * (n - 1)) * lo.lambda / lo.k * s;
            yt += coeffs(2 * (n - 1) + 1) * hi.lambda / hi.k * s;
        }
        return yt;
    }

  private:
    BeamParams params_;
    int N_sim_;
    QuadratureRule rule_;
    std::vector<SpectralMode> modes_;
    std::vector<Eigen::Matrix2d> grams_;
    Eigen::MatrixXd sin_table_;
};

// Modal history provider on [-h_M, 0]; evaluates the initial profiles by
// quadrature on demand (exact reads, no interpolation).
class ModalHistory {
  public:
    ModalHistory(const InitialHistory& ic, const ModalBasis& basis) : ic_(ic), basis_(&basis) {
        // pinned-ends validation at a few sample instants
        for (double tau : {0.0, -0.05, -0.1}) {
            for (double xb : {0.0, 1.0}) {
                if (std::abs(ic.y0(tau, xb)) > 1e-9)
                    throw std::invalid_argument(
                        "InitialHistory: displacement must vanish at x = 0 and x = 1");
            }
        }
    }

    Eigen::VectorXd operator()(double tau) const {
        return basis_->project_state(ic_.y0, ic_.yt0, tau);
    }

  private:
    InitialHistory ic_;
    const ModalBasis* basis_;
};

inline ModalHistory project_initial(const InitialHistory& ic, const ModalBasis& basis) {
    return ModalHistory(ic, basis);
}

inline Eigen::VectorXd project_disturbance(const DisturbanceSpec& d, double t,
                                           const ModalBasis& basis) {
    return basis.project_distributed(d.distributed, t);
}

struct Trajectory {
    double dt;          // integration step
    double record_dt;   // spacing of stored samples
    std::vector<double> times;
    std::vector<Eigen::VectorXd> coeffs;
    std::vector<Eigen::Vector2d> controls;
    std::vector<double> state_norms;
    double gain_norm = 0.0;  // ||K|| of the applied feedback (0 for open loop)
};

struct SimOptions {
    int N_sim;
    double dt;
    double T;
    int quad_nodes = 64;
    int record_stride = 0;  // 0: choose automatically (~20k samples)
};

// Fixed-step RK4 on the 2 N_sim modal system with the delayed state read
// from a dense cubic-Hermite history buffer; u = K * (first 2 N0 coeffs).
inline Trajectory simulate(const BeamParams& params, const std::optional<Eigen::MatrixXd>& K,
                           const DelaySignal& delay, const DisturbanceSpec& dist,
                           const InitialHistory& ic, const SimOptions& opt) {
    params.validate();
    delay.validate();
    if (!(opt.T > 0.0)) throw std::invalid_argument("simulate: T must be > 0");
    if (!(opt.dt > 0.0) || opt.dt > delay.h_m / 4.0)
        throw std::invalid_argument("simulate: need 0 < dt <= h_m / 4");
    const int dim = 2 * opt.N_sim;
    int N0 = 0;
    if (K) {
        if (K->rows() != 2 || K->cols() % 2 != 0 || K->cols() > dim)
            throw std::invalid_argument("simulate: K must be 2 x 2N0 with N0 <= N_sim");
        N0 = static_cast<int>(K->cols()) / 2;
    }

    const ModalBasis basis(params, opt.N_sim, opt.quad_nodes);
    const ModalHistory history0(ic, basis);

    Eigen::VectorXd lambda(dim);
    std::vector<Eigen::Matrix2d> mblocks(opt.N_sim);
    Eigen::MatrixXd B(dim, 2);
    for (int n = 1; n <= opt.N_sim; ++n) {
        const int i = 2 * (n - 1);
        lambda(i) = basis.mode(n, -1).lambda;
        lambda(i + 1) = basis.mode(n, +1).lambda;
        mblocks[n - 1] = delay_block(params, n);
        B.block<2, 2>(i, 0) = input_block(params, n);
    }

    const long nsteps = static_cast<long>(std::llround(opt.T / opt.dt));
    const long ring_len = static_cast<long>(std::ceil(delay.h_M / opt.dt)) + 8;
    std::vector<Eigen::VectorXd> ring_c(ring_len), ring_f(ring_len);

    const auto delayed_state = [&](double s) -> Eigen::VectorXd {
        if (s <= 0.0) return history0(s);
        const long k = static_cast<long>(std::floor(s / opt.dt));
        const double theta = s / opt.dt - k;
        const Eigen::VectorXd& c0 = ring_c[k % ring_len];
        const Eigen::VectorXd& c1 = ring_c[(k + 1) % ring_len];
        const Eigen::VectorXd& f0 = ring_f[k % ring_len];
        const Eigen::VectorXd& f1 = ring_f[(k + 1) % ring_len];
        const double h00 = (1 + 2 * theta) * (1 - theta) * (1 - theta);
        const double h10 = theta * (1 - theta) * (1 - theta);
        const double h01 = theta * theta * (3 - 2 * theta);
        const double h11 = theta * theta * (theta - 1);
        return h00 * c0 + h10 * opt.dt * f0 + h01 * c1 + h11 * opt.dt * f1;
    };

    const double h_tol = 1e-10 * (1.0 + delay.h_M);
    const auto deriv = [&](double t, const Eigen::VectorXd& c) -> Eigen::VectorXd {
        const double h = delay.h(t);
        if (h < delay.h_m - h_tol || h > delay.h_M + h_tol)
            throw DelayRangeError("simulate: delay left [h_m, h_M] at t = " +
                                  std::to_string(t));
        const Eigen::VectorXd cd = delayed_state(t - h);
        Eigen::Vector2d u = Eigen::Vector2d::Zero();
        if (K) u = (*K) * c.head(2 * N0);
        const Eigen::Vector2d w = u + dist.boundary(t);
        Eigen::VectorXd f = lambda.cwiseProduct(c) + B * w +
                            basis.project_distributed(dist.distributed, t);
        for (int n = 0; n < opt.N_sim; ++n)
            f.segment<2>(2 * n) +=
                mblocks[n] * (cd.segment<2>(2 * n) - c.segment<2>(2 * n));
        return f;
    };

    int stride = opt.record_stride;
    if (stride <= 0) stride = static_cast<int>(std::max<long>(1, nsteps / 20000));
    while (stride > 1 && nsteps % stride != 0) --stride;

    Trajectory traj;
    traj.dt = opt.dt;
    traj.record_dt = stride * opt.dt;
    traj.gain_norm = K ? Eigen::JacobiSVD<Eigen::MatrixXd>(*K).singularValues()(0) : 0.0;

    Eigen::VectorXd c = history0(0.0);
    for (long i = 0; i <= nsteps; ++i) {
        const double t = i * opt.dt;
        if (!c.allFinite()) throw DivergenceError(t);
        const Eigen::VectorXd k1 = deriv(t, c);
        ring_c[i % ring_len] = c;
        ring_f[i % ring_len] = k1;
        if (i % stride == 0 || i == nsteps) {
            traj.times.push_back(t);
            traj.coeffs.push_back(c);
            traj.controls.push_back(K ? Eigen::Vector2d((*K) * c.head(2 * N0))
                                      : Eigen::Vector2d::Zero());
            traj.state_norms.push_back(basis.state_norm(c));
        }
        if (i == nsteps) break;
        const Eigen::VectorXd k2 = deriv(t + opt.dt / 2, c + (opt.dt / 2) * k1);
        const Eigen::VectorXd k3 = deriv(t + opt.dt / 2, c + (opt.dt / 2) * k2);
        const Eigen::VectorXd k4 = deriv(t + opt.dt, c + opt.dt * k3);
        c += (opt.dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return traj;
}

// y(t, x) and y_t(t, x) on the stored time grid.
inline std::pair<Eigen::MatrixXd, Eigen::MatrixXd> reconstruct_field(
    const Trajectory& traj, const BeamParams& params, const std::vector<double>& x_grid) {
    if (traj.coeffs.empty()) throw std::invalid_argument("reconstruct_field: empty trajectory");
    const int N_sim = static_cast<int>(traj.coeffs.front().size()) / 2;
    const ModalBasis basis(params, N_sim);
    Eigen::MatrixXd y(traj.times.size(), x_grid.size());
    Eigen::MatrixXd yt(traj.times.size(), x_grid.size());
    for (std::size_t i = 0; i < traj.times.size(); ++i)
        for (std::size_t j = 0; j < x_grid.size(); ++j) {
            if (x_grid[j] < 0.0 || x_grid[j] > 1.0)
                throw std::invalid_argument("reconstruct_field: x_grid point outside [0, 1]");
            y(static_cast<int>(i), static_cast<int>(j)) =
                basis.displacement(traj.coeffs[i], x_grid[j]);
            yt(static_cast<int>(i), static_cast<int>(j)) =
                basis.velocity(traj.coeffs[i], x_grid[j]);
        }
    return {y, yt};
}

inline double state_norm(const Eigen::VectorXd& coeffs, const BeamParams& params) {
    if (coeffs.size() % 2 != 0) throw std::invalid_argument("state_norm: odd coefficient count");
    const ModalBasis basis(params, static_cast<int>(coeffs.size()) / 2);
    return basis.state_norm(coeffs);
}

struct IssReport {
    bool conclusive = false;
    double fitted_decay_rate = 0.0;  // positive means decay
    double fitted_amplitude = 0.0;   // envelope value at t_star
    bool fading_memory_ok = false;
    double control_margin = 0.0;     // min over steps of ||K||/sqrt(m_R) ||X|| - ||u||
};

// Diagnostics for a trajectory that is disturbance-free after t_star:
// least-squares exponential fit of the tail, fading-memory consistency at
// the final time, and the Theorem-style control-norm margin.
inline IssReport iss_diagnostics(const Trajectory& traj, const BeamParams& params,
                                 double t_star = 0.0) {
    IssReport rep;
    const double m_R = riesz_constants(params).m_R;
    rep.control_margin = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < traj.times.size(); ++i)
        rep.control_margin =
            std::min(rep.control_margin, traj.gain_norm / std::sqrt(m_R) * traj.state_norms[i] -
                                             traj.controls[i].norm());

    std::vector<double> ts, ls;
    for (std::size_t i = 0; i < traj.times.size(); ++i)
        if (traj.times[i] >= t_star && traj.state_norms[i] > 1e-300) {
            ts.push_back(traj.times[i] - t_star);
            ls.push_back(std::log(traj.state_norms[i]));
        }
    if (ts.size() < 10) return rep;  // inconclusive
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < ts.size(); ++i) {
        sx += ts[i];
        sy += ls[i];
        sxx += ts[i] * ts[i];
        sxy += ts[i] * ls[i];
    }
    const double nobs = static_cast<double>(ts.size());
    const double slope = (nobs * sxy - sx * sy) / (nobs * sxx - sx * sx);
    const double intercept = (sy - slope * sx) / nobs;
    rep.conclusive = true;
    rep.fitted_decay_rate = -slope;
    rep.fitted_amplitude = std::exp(intercept);
    const double T_rel = ts.back();
    const double envelope = rep.fitted_amplitude * std::exp(slope * T_rel);
    rep.fading_memory_ok = traj.state_norms.back() <= 1.5 * envelope + 1e-12;
    return rep;
}

// CSV with header row; decimal, 12 significant digits. sup_displacement is
// evaluated on a fixed 201-point grid.
inline void write_trajectory_csv(std::ostream& os, const Trajectory& traj,
                                 const BeamParams& params) {
    const int N_sim = static_cast<int>(traj.coeffs.front().size()) / 2;
    const ModalBasis basis(params, N_sim);
    os << "time";
    for (int n = 1; n <= N_sim; ++n) os << ",c_" << n << "_m" << ",c_" << n << "_p";
    os << ",u1,u2,state_norm,sup_displacement\n";
    os << std::setprecision(12);
    for (std::size_t i = 0; i < traj.times.size(); ++i) {
        os << traj.times[i];
        for (int j = 0; j < traj.coeffs[i].size(); ++j) os << ',' << traj.coeffs[i](j);
        double sup = 0.0;
        for (int g = 0; g <= 200; ++g)
            sup = std::max(sup, std::abs(basis.displacement(traj.coeffs[i], g / 200.0)));
        os << ',' << traj.controls[i](0) << ',' << traj.controls[i](1) << ','
           << traj.state_norms[i] << ',' << sup << '\n';
    }
}

// Field snapshot matrix: header row of x values, then one row per time.
inline void write_field_csv(std::ostream& os, const Trajectory& traj, const BeamParams& params,
                            const std::vector<double>& x_grid) {
    const auto [y, yt] = reconstruct_field(traj, params, x_grid);
    os << std::setprecision(12);
    os << "time";
    for (double x : x_grid) os << ',' << x;
    os << '\n';
    for (std::size_t i = 0; i < traj.times.size(); ++i) {
        os << traj.times[i];
        for (int j = 0; j < y.cols(); ++j) os << ',' << y(static_cast<int>(i), j);
        os << '\n';
    }
}

// ||Phi||_{1,h_M} = sqrt(||Phi(0)||^2 + int ||dPhi/dtau||^2); tau-derivatives
// by central differences (step h_M/1000) when not supplied analytically.
inline double history_norm(const InitialHistory& ic, const BeamParams& params, double h_M,
                           int N_sim, int quad_nodes = 64, int tau_samples = 200) {
    const ModalBasis basis(params, N_sim, quad_nodes);
    const double n0 = basis.state_norm(basis.project_state(ic.y0, ic.yt0, 0.0));
    const double dtau = h_M / 1000.0;
    auto dy = ic.y0_tau;
    auto dyt = ic.yt0_tau;
    if (!dy)
        dy = [&ic, dtau](double tau, double x) {
            return (ic.y0(tau + dtau, x) - ic.y0(tau - dtau, x)) / (2 * dtau);
        };
    if (!dyt)
        dyt = [&ic, dtau](double tau, double x) {
            return (ic.yt0(tau + dtau, x) - ic.yt0(tau - dtau, x)) / (2 * dtau);
        };
    // trapezoid in tau over [-h_M, 0]
    double acc = 0.0;
    const double step = h_M / tau_samples;
    for (int i = 0; i <= tau_samples; ++i) {
        const double tau = -h_M + i * step;
        const double v = basis.state_norm(basis.project_state(dy, dyt, tau));
        acc += (i == 0 || i == tau_samples) ? 0.5 * v * v : v * v;
    }
    return std::sqrt(n0 * n0 + acc * step);
}

}  // namespace beamdelay
