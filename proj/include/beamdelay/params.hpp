#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace beamdelay {

inline constexpr double pi = std::numbers::pi;

// Physical parameters of the damped beam. The effective stiffness-shift
// coefficient beta = beta0 + gamma is always derived, never stored.
struct BeamParams {
    double alpha;  // damping, dimensionless, > 1
    double beta0;  // >= 0
    double gamma;  // delayed-term coefficient, > 0

    double beta() const { return beta0 + gamma; }

    void validate() const {
        if (!(alpha > 1.0))
            throw std::invalid_argument("BeamParams: alpha must be > 1");
        if (!(beta0 >= 0.0))
            throw std::invalid_argument("BeamParams: beta0 must be >= 0");
        if (!(gamma > 0.0))
            throw std::invalid_argument("BeamParams: gamma must be > 0");
    }
};

// Index (n, eps) of one spectral branch, n >= 1, eps in {-1, +1}.
struct ModeIndex {
    int n;
    int eps;

    void validate() const {
        if (n < 1)
            throw std::invalid_argument("ModeIndex: n must be >= 1");
        if (eps != -1 && eps != 1)
            throw std::invalid_argument("ModeIndex: eps must be -1 or +1");
    }
};

}  // namespace beamdelay
