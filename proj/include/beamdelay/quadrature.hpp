#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace beamdelay {

// Gauss-Legendre rule mapped to [0, 1].
struct QuadratureRule {
    std::vector<double> nodes;
    std::vector<double> weights;

    template <class F>
    double integrate(F&& f) const {
        double s = 0.0;
        for (std::size_t i = 0; i < nodes.size(); ++i) s += weights[i] * f(nodes[i]);
        return s;
    }
};

// Nodes by Newton iteration on the Legendre polynomial; standard
// three-term recurrence for values and derivatives.
inline QuadratureRule gauss_legendre(int npts) {
    if (npts < 1) throw std::invalid_argument("gauss_legendre: npts must be >= 1");
    QuadratureRule rule;
    rule.nodes.resize(npts);
    rule.weights.resize(npts);
    const int m = (npts + 1) / 2;
    for (int i = 0; i < m; ++i) {
        // Chebyshev-based initial guess on [-1, 1].
        double x = std::cos(M_PI * (i + 0.75) / (npts + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= npts; ++k) {
                double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = npts * (x * p1 - p0) / (x * x - 1.0);
            double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        double w = 2.0 / ((1.0 - x * x) * dp * dp);
        rule.nodes[i] = 0.5 * (1.0 - x);
        rule.nodes[npts - 1 - i] = 0.5 * (1.0 + x);
        rule.weights[i] = 0.5 * w;
        rule.weights[npts - 1 - i] = 0.5 * w;
    }
    return rule;
}

}  // namespace beamdelay
