#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "beamdelay/spectral.hpp"

namespace beamdelay {

// 2 N0-dimensional truncated delayed ODE
//   dY/dt = A Y + M (Y(t - h(t)) - Y(t)) + B (u + d_b) + P_d.
// Block order is n = 1..N0 with the eps = -1 row before eps = +1.
struct TruncatedModel {
    int N0;
    Eigen::MatrixXd A;  // 2N0 x 2N0 diagonal
    Eigen::MatrixXd B;  // 2N0 x 2
    Eigen::MatrixXd M;  // 2N0 x 2N0 block-diagonal, 2x2 blocks
    BeamParams params;

    int dim() const { return 2 * N0; }
};

// M_n = gamma / (lambda_- - lambda_+) * [[1, k_-/k_+], [-k_+/k_-, -1]];
// trace and determinant are both zero.
inline Eigen::Matrix2d delay_block(const BeamParams& params, int n) {
    const SpectralMode lo = mode_data(params, ModeIndex{n, -1});
    const SpectralMode hi = mode_data(params, ModeIndex{n, +1});
    const double scale = params.gamma / (lo.lambda - hi.lambda);
    Eigen::Matrix2d Mn;
    Mn << 1.0, lo.k / hi.k, -hi.k / lo.k, -1.0;
    return scale * Mn;
}

// Closed-form norm bound m_n >= ||M_n||_2 (decreasing in n).
inline double delay_block_norm_bound(const BeamParams& params, int n) {
    return std::sqrt(2.0) * params.alpha * params.gamma / detail::discriminant_sqrt(params, n);
}

// B_n rows from b_{n,eps,1} = -n pi C_{n,eps}, b_{n,eps,2} = (-1)^n n pi C_{n,eps};
// the second column equals the first for odd n and its negative for even n.
inline Eigen::Matrix2d input_block(const BeamParams& params, int n) {
    const double sign2 = (n % 2 == 0) ? -1.0 : 1.0;
    Eigen::Matrix2d Bn;
    for (int row = 0; row < 2; ++row) {
        const int eps = (row == 0) ? -1 : +1;
        const double b1 = -n * pi * mode_data(params, ModeIndex{n, eps}).C;
        Bn(row, 0) = b1;
        Bn(row, 1) = sign2 * b1;
    }
    return Bn;
}

inline TruncatedModel assemble(const BeamParams& params, int N0) {
    params.validate();
    if (N0 < 1) throw std::invalid_argument("assemble: N0 must be >= 1");
    const int d = 2 * N0;
    TruncatedModel model{N0, Eigen::MatrixXd::Zero(d, d), Eigen::MatrixXd::Zero(d, 2),
                         Eigen::MatrixXd::Zero(d, d), params};
    for (int n = 1; n <= N0; ++n) {
        const int i = 2 * (n - 1);
        model.A(i, i) = eigenvalue(params, ModeIndex{n, -1});
        model.A(i + 1, i + 1) = eigenvalue(params, ModeIndex{n, +1});
        model.B.block<2, 2>(i, 0) = input_block(params, n);
        model.M.block<2, 2>(i, i) = delay_block(params, n);
    }
    return model;
}

struct SmallGainResult {
    bool satisfied;      // lhs < 1 and N0 captures all unstable modes
    double lhs;          // value of the mode-count small-gain expression
    bool enough_modes;   // N0 >= floor(beta^{1/4}/pi)
    bool degenerate;     // lambda_{N0+1,+1} == 0, lhs not evaluable
};

// Mode-count condition: 60 a^2 g^2 / ((a^2-1)(N0+1)^4 pi^4 + beta) / lambda_{N0+1,+1}^2 < 1.
inline SmallGainResult small_gain_mode_count(const BeamParams& params, int N0) {
    params.validate();
    if (N0 < 0) throw std::invalid_argument("small_gain_mode_count: N0 must be >= 0");
    const bool enough = N0 >= unstable_count(params);
    const double lam = eigenvalue(params, ModeIndex{N0 + 1, +1});
    const double m = static_cast<double>(N0 + 1) * (N0 + 1) * pi * pi;
    const double denom = (params.alpha * params.alpha - 1.0) * m * m + params.beta();
    if (lam == 0.0)
        return SmallGainResult{false, std::numeric_limits<double>::infinity(), enough, true};
    const double lhs = 60.0 * params.alpha * params.alpha * params.gamma * params.gamma /
                       (denom * lam * lam);
    return SmallGainResult{enough && lhs < 1.0, lhs, enough, false};
}

enum class InputSelection { Full, Column1, Column2 };

// Kalman rank test with numerical rank threshold 1e-8 relative to sigma_max.
inline bool controllability_check(const TruncatedModel& model, InputSelection which) {
    const int d = model.dim();
    Eigen::MatrixXd Bsel;
    switch (which) {
        case InputSelection::Full: Bsel = model.B; break;
        case InputSelection::Column1: Bsel = model.B.col(0); break;
        case InputSelection::Column2: Bsel = model.B.col(1); break;
    }
    const int m = static_cast<int>(Bsel.cols());
    Eigen::MatrixXd kal(d, d * m);
    Eigen::MatrixXd block = Bsel;
    for (int i = 0; i < d; ++i) {
        kal.block(0, i * m, d, m) = block;
        block = model.A * block;
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(kal);
    const auto& sv = svd.singularValues();
    int rank = 0;
    for (int i = 0; i < sv.size(); ++i)
        if (sv(i) > 1e-8 * sv(0)) ++rank;
    return rank == d;
}

}  // namespace beamdelay
