#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "beamdelay/params.hpp"

namespace beamdelay {

// Per-mode spectral data of the disturbance-free beam operator: eigenvalue,
// eigenvector normalization k > 0, and dual-basis coefficient C (sign = eps).
struct SpectralMode {
    ModeIndex index;
    double lambda;
    double k;
    double C;
};

struct RieszConstants {
    double C_R;  // in (0, 1)
    double m_R;  // 1 - C_R
    double M_R;  // 1 + C_R
};

namespace detail {

inline double discriminant_sqrt(const BeamParams& p, int n) {
    const double n2pi2 = static_cast<double>(n) * n * pi * pi;
    return std::sqrt((p.alpha * p.alpha - 1.0) * n2pi2 * n2pi2 + p.beta());
}

}  // namespace detail

// lambda_{n,eps} = -alpha n^2 pi^2 + eps sqrt((alpha^2-1) n^4 pi^4 + beta).
// For eps = +1 the subtraction cancels catastrophically once n^4 pi^4 >> beta,
// so that branch is evaluated in the rationalized form
// (beta - n^4 pi^4) / (alpha n^2 pi^2 + sqrt(...)).
inline double eigenvalue(const BeamParams& params, const ModeIndex& idx) {
    params.validate();
    idx.validate();
    const double n2pi2 = static_cast<double>(idx.n) * idx.n * pi * pi;
    const double root = detail::discriminant_sqrt(params, idx.n);
    if (idx.eps > 0)
        return (params.beta() - n2pi2 * n2pi2) / (params.alpha * n2pi2 + root);
    return -params.alpha * n2pi2 - root;
}

inline SpectralMode mode_data(const BeamParams& params, const ModeIndex& idx) {
    const double lam = eigenvalue(params, idx);
    const double n2pi2 = static_cast<double>(idx.n) * idx.n * pi * pi;
    const double k = std::sqrt((n2pi2 * n2pi2 + lam * lam) / 2.0);
    const double C = idx.eps * k / detail::discriminant_sqrt(params, idx.n);
    return SpectralMode{idx, lam, k, C};
}

// Number of modes with lambda_{n,+1} >= 0: floor(beta^{1/4} / pi).
inline int unstable_count(const BeamParams& params) {
    params.validate();
    return static_cast<int>(std::floor(std::pow(params.beta(), 0.25) / pi));
}

inline RieszConstants riesz_constants(const BeamParams& params) {
    params.validate();
    const double b = params.beta();
    const double pi4 = pi * pi * pi * pi;
    const double branch2 = b / std::sqrt(4.0 * params.alpha * params.alpha * pi4 * pi4 + b * b);
    const double C_R = std::max(1.0 / params.alpha, branch2);
    return RieszConstants{C_R, 1.0 - C_R, 1.0 + C_R};
}

// Gram matrix of the unit eigenvector pair (phi_{n,-1}, phi_{n,+1}); the
// cross term is (2 n^4 pi^4 - beta) / (2 k_- k_+).
inline Eigen::Matrix2d gram_block(const BeamParams& params, int n) {
    const SpectralMode lo = mode_data(params, ModeIndex{n, -1});
    const SpectralMode hi = mode_data(params, ModeIndex{n, +1});
    const double n2pi2 = static_cast<double>(n) * n * pi * pi;
    const double cross = (2.0 * n2pi2 * n2pi2 - params.beta()) / (2.0 * lo.k * hi.k);
    Eigen::Matrix2d G;
    G << 1.0, cross, cross, 1.0;
    return G;
}

}  // namespace beamdelay
