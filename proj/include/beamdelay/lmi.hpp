#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <iomanip>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <vector>

namespace beamdelay {

// Data of the Lyapunov-Krasovskii matrix inequality Theta(h_M, kappa) < 0
// for dx/dt = F x + G (x(t - h(t)) - x(t)).
struct ThetaProblem {
    Eigen::MatrixXd F;
    Eigen::MatrixXd G;
    double h_M;
    double kappa;

    int dim() const { return static_cast<int>(F.rows()); }

    void validate() const {
        if (F.rows() != F.cols() || G.rows() != G.cols() || F.rows() != G.rows())
            throw std::invalid_argument("ThetaProblem: F, G must be square and same size");
        if (!(h_M > 0.0)) throw std::invalid_argument("ThetaProblem: h_M must be > 0");
        if (!(kappa >= 0.0)) throw std::invalid_argument("ThetaProblem: kappa must be >= 0");
    }
};

// Feasibility witness: P1, Q symmetric positive definite, P2, P3 free.
struct LKCertificate {
    Eigen::MatrixXd P1, P2, P3, Q;
    ThetaProblem problem;
    int solver_iterations = 0;
    double grid_resolution = 0.0;  // set when produced by a bisection search
};

inline Eigen::MatrixXd build_theta(const ThetaProblem& prob, const Eigen::MatrixXd& P1,
                                   const Eigen::MatrixXd& P2, const Eigen::MatrixXd& P3,
                                   const Eigen::MatrixXd& Q) {
    prob.validate();
    const int n = prob.dim();
    const Eigen::MatrixXd& F = prob.F;
    const Eigen::MatrixXd& G = prob.G;
    const double h = prob.h_M;
    Eigen::MatrixXd theta(3 * n, 3 * n);
    theta.block(0, 0, n, n) = 2.0 * prob.kappa * P1 + F.transpose() * P2 + P2.transpose() * F;
    theta.block(0, n, n, n) = P1 - P2.transpose() + F.transpose() * P3;
    theta.block(0, 2 * n, n, n) = h * P2.transpose() * G;
    theta.block(n, n, n, n) = -P3 - P3.transpose() + h * Q;
    theta.block(n, 2 * n, n, n) = h * P3.transpose() * G;
    theta.block(2 * n, 2 * n, n, n) = -h * std::exp(-2.0 * prob.kappa * h) * Q;
    // mirror the lower blocks
    theta.block(n, 0, n, n) = theta.block(0, n, n, n).transpose();
    theta.block(2 * n, 0, n, n) = theta.block(0, 2 * n, n, n).transpose();
    theta.block(2 * n, n, n, n) = theta.block(n, 2 * n, n, n).transpose();
    return theta;
}

// Independent check: symmetric eigensolver only, no reuse of the search path.
inline bool verify_certificate(const LKCertificate& cert) {
    const auto sym = [](const Eigen::MatrixXd& X) {
        return ((X + X.transpose()) / 2.0).eval();
    };
    const Eigen::MatrixXd P1 = sym(cert.P1);
    const Eigen::MatrixXd Q = sym(cert.Q);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es1(P1);
    if (es1.eigenvalues().minCoeff() <= 1e-9 * P1.norm()) return false;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> esq(Q);
    if (esq.eigenvalues().minCoeff() <= 1e-9 * Q.norm()) return false;
    const Eigen::MatrixXd theta = sym(build_theta(cert.problem, P1, cert.P2, cert.P3, Q));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> est(theta);
    return est.eigenvalues().maxCoeff() < -1e-9 * theta.norm();
}

namespace detail {

// Solve F^T P + P F = RHS by the Kronecker linear system (small n only).
inline Eigen::MatrixXd lyapunov(const Eigen::MatrixXd& F, const Eigen::MatrixXd& rhs) {
    const int n = static_cast<int>(F.rows());
    Eigen::MatrixXd kron = Eigen::MatrixXd::Zero(n * n, n * n);
    const Eigen::MatrixXd Ft = F.transpose();
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k) {
                kron(i * n + j, i * n + k) += Ft(j, k);  // P * F term, row-major vec
                kron(i * n + j, k * n + j) += Ft(i, k);  // F^T * P term
            }
    Eigen::VectorXd b(n * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) b(i * n + j) = rhs(i, j);
    const Eigen::VectorXd v = kron.partialPivLu().solve(b);
    Eigen::MatrixXd P(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) P(i, j) = v(i * n + j);
    return (P + P.transpose()) / 2.0;
}

// Coordinates of the feasibility search: stacked upper triangles of P1 and Q
// followed by row-major P2 and P3.
struct VariableLayout {
    int n;
    int ns;  // n(n+1)/2
    int nv;  // 2 ns + 2 n^2

    explicit VariableLayout(int n_) : n(n_), ns(n_ * (n_ + 1) / 2), nv(2 * ns + 2 * n_ * n_) {}

    void unpack(const Eigen::VectorXd& x, Eigen::MatrixXd& P1, Eigen::MatrixXd& P2,
                Eigen::MatrixXd& P3, Eigen::MatrixXd& Q) const {
        P1.setZero(n, n);
        Q.setZero(n, n);
        int c = 0;
        for (int i = 0; i < n; ++i)
            for (int j = i; j < n; ++j, ++c) P1(i, j) = P1(j, i) = x(c);
        for (int i = 0; i < n; ++i)
            for (int j = i; j < n; ++j, ++c) Q(i, j) = Q(j, i) = x(c);
        P2.resize(n, n);
        P3.resize(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j, ++c) P2(i, j) = x(c);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j, ++c) P3(i, j) = x(c);
    }

    Eigen::VectorXd pack(const Eigen::MatrixXd& P1, const Eigen::MatrixXd& P2,
                         const Eigen::MatrixXd& P3, const Eigen::MatrixXd& Q) const {
        Eigen::VectorXd x(nv);
        int c = 0;
        for (int i = 0; i < n; ++i)
            for (int j = i; j < n; ++j, ++c) x(c) = P1(i, j);
        for (int i = 0; i < n; ++i)
            for (int j = i; j < n; ++j, ++c) x(c) = Q(i, j);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j, ++c) x(c) = P2(i, j);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j, ++c) x(c) = P3(i, j);
        return x;
    }
};

}  // namespace detail

// Interior-point feasibility search: minimize t subject to
// Theta <= t I, P1 >= eps I, Q >= eps I via a log-det barrier with Newton
// centering steps, stopping as soon as a verifiable certificate with
// t < -1e-7 exists. Absence of a result carries no infeasibility claim.
inline std::optional<LKCertificate> find_certificate(const ThetaProblem& prob) {
    prob.validate();
    const int n = prob.dim();
    const detail::VariableLayout lay(n);
    const double eps = 1e-6 * (1.0 + prob.F.norm());

    // Derivative of Theta with respect to each coordinate.
    std::vector<Eigen::MatrixXd> dtheta(lay.nv);
    {
        Eigen::MatrixXd P1, P2, P3, Q;
        for (int i = 0; i < lay.nv; ++i) {
            Eigen::VectorXd e = Eigen::VectorXd::Zero(lay.nv);
            e(i) = 1.0;
            lay.unpack(e, P1, P2, P3, Q);
            dtheta[i] = build_theta(prob, P1, P2, P3, Q);
        }
    }

    // Seed from the explicit Lyapunov construction when F is Hurwitz.
    Eigen::MatrixXd P1s, P2s, P3s, Qs;
    {
        Eigen::MatrixXd P2l = detail::lyapunov(prob.F, -Eigen::MatrixXd::Identity(n, n));
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(P2l);
        const bool pd = es.eigenvalues().minCoeff() > 0.0;
        if (pd) {
            P2s = P2l;
            P1s = 2.0 * P2l;
            P3s = -prob.F.inverse().transpose() * P2l;
        } else {
            P2s = Eigen::MatrixXd::Identity(n, n);
            P1s = 2.0 * P2s;
            P3s = Eigen::MatrixXd::Identity(n, n);
        }
        Qs = Eigen::MatrixXd::Identity(n, n);
        P1s += 2.0 * eps * Eigen::MatrixXd::Identity(n, n);
        Qs += 2.0 * eps * Eigen::MatrixXd::Identity(n, n);
    }

    Eigen::VectorXd x = lay.pack(P1s, P2s, P3s, Qs);
    Eigen::MatrixXd P1, P2, P3, Q;
    lay.unpack(x, P1, P2, P3, Q);
    double t;
    {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(build_theta(prob, P1, P2, P3, Q));
        t = es.eigenvalues().maxCoeff() + 1.0;
    }
    double mu = std::max(1.0, std::abs(t));

    const auto slacks = [&](const Eigen::VectorXd& xv, double tv, Eigen::MatrixXd& S1,
                            Eigen::MatrixXd& S2, Eigen::MatrixXd& S3) {
        Eigen::MatrixXd p1, p2, p3, q;
        lay.unpack(xv, p1, p2, p3, q);
        S1 = tv * Eigen::MatrixXd::Identity(3 * n, 3 * n) - build_theta(prob, p1, p2, p3, q);
        S1 = (S1 + S1.transpose()) / 2.0;
        S2 = p1 - eps * Eigen::MatrixXd::Identity(n, n);
        S3 = q - eps * Eigen::MatrixXd::Identity(n, n);
    };
    const auto barrier_value = [&](const Eigen::MatrixXd& S1, const Eigen::MatrixXd& S2,
                                   const Eigen::MatrixXd& S3, double tv, bool& ok) {
        Eigen::LLT<Eigen::MatrixXd> l1(S1), l2(S2), l3(S3);
        ok = l1.info() == Eigen::Success && l2.info() == Eigen::Success &&
             l3.info() == Eigen::Success;
        if (!ok) return 0.0;
        double logdet = 0.0;
        for (int i = 0; i < 3 * n; ++i) logdet += std::log(l1.matrixL()(i, i));
        for (int i = 0; i < n; ++i) logdet += std::log(l2.matrixL()(i, i));
        for (int i = 0; i < n; ++i) logdet += std::log(l3.matrixL()(i, i));
        return tv - 2.0 * mu * logdet;
    };
    const auto verified_now = [&](const Eigen::VectorXd& xv) {
        LKCertificate cert;
        lay.unpack(xv, cert.P1, cert.P2, cert.P3, cert.Q);
        cert.problem = prob;
        return verify_certificate(cert);
    };

    int total_iters = 0;
    // index of (i,j) upper-triangle coordinate within a symmetric block
    std::vector<std::pair<int, int>> tri;
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) tri.emplace_back(i, j);

    for (int outer = 0; outer < 40; ++outer) {
        for (int inner = 0; inner < 60; ++inner) {
            ++total_iters;
            Eigen::MatrixXd S1, S2, S3;
            slacks(x, t, S1, S2, S3);
            Eigen::LLT<Eigen::MatrixXd> l1(S1), l2(S2), l3(S3);
            if (l1.info() != Eigen::Success || l2.info() != Eigen::Success ||
                l3.info() != Eigen::Success)
                return std::nullopt;
            const Eigen::MatrixXd S1i = S1.inverse();
            const Eigen::MatrixXd S2i = S2.inverse();
            const Eigen::MatrixXd S3i = S3.inverse();

            Eigen::VectorXd grad = Eigen::VectorXd::Zero(lay.nv + 1);
            Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(lay.nv + 1, lay.nv + 1);
            std::vector<Eigen::MatrixXd> W(lay.nv);
            for (int i = 0; i < lay.nv; ++i) {
                W[i] = S1i * dtheta[i];
                grad(i) = mu * W[i].trace();
            }
            for (int i = 0; i < lay.nv; ++i)
                for (int j = i; j < lay.nv; ++j) {
                    const double v = mu * W[i].cwiseProduct(W[j].transpose()).sum();
                    hess(i, j) = v;
                    hess(j, i) = v;
                }
            // barrier terms of the P1 and Q floors
            for (int blk = 0; blk < 2; ++blk) {
                const Eigen::MatrixXd& Si = (blk == 0) ? S2i : S3i;
                const int off = blk * lay.ns;
                for (int a = 0; a < lay.ns; ++a) {
                    const auto [i, j] = tri[a];
                    grad(off + a) -= mu * ((i == j) ? Si(i, i) : 2.0 * Si(i, j));
                }
                for (int a = 0; a < lay.ns; ++a)
                    for (int b2 = a; b2 < lay.ns; ++b2) {
                        const auto [i, j] = tri[a];
                        const auto [k, l] = tri[b2];
                        // tr(Si E_ij Si E_kl) with E_pq = e_p e_q^T (+ e_q e_p^T when p != q);
                        // each rank-one term contributes Si(s,p) Si(q,r)
                        double v = Si(l, i) * Si(j, k);
                        if (k != l) v += Si(k, i) * Si(j, l);
                        if (i != j) {
                            v += Si(l, j) * Si(i, k);
                            if (k != l) v += Si(k, j) * Si(i, l);
                        }
                        hess(off + a, off + b2) += mu * v;
                        if (a != b2) hess(off + b2, off + a) += mu * v;
                    }
            }
            const Eigen::MatrixXd S1i2 = S1i * S1i;
            grad(lay.nv) = 1.0 - mu * S1i.trace();
            hess(lay.nv, lay.nv) = mu * S1i2.trace();
            for (int i = 0; i < lay.nv; ++i) {
                const double v = -mu * S1i2.cwiseProduct(dtheta[i].transpose()).sum();
                hess(lay.nv, i) = v;
                hess(i, lay.nv) = v;
            }

            hess.diagonal().array() += 1e-12;
            const Eigen::VectorXd dir = hess.ldlt().solve(-grad);

            bool moved = false;
            double step = 1.0;
            bool ok0;
            const double f0 = barrier_value(S1, S2, S3, t, ok0);
            for (int ls = 0; ls < 40; ++ls) {
                const Eigen::VectorXd xn = x + step * dir.head(lay.nv);
                const double tn = t + step * dir(lay.nv);
                Eigen::MatrixXd T1, T2, T3;
                slacks(xn, tn, T1, T2, T3);
                bool ok;
                const double fn = barrier_value(T1, T2, T3, tn, ok);
                if (ok && fn < f0) {
                    x = xn;
                    t = tn;
                    moved = true;
                    break;
                }
                step *= 0.5;
            }
            if (!moved) break;
            if (t < -1e-7 && verified_now(x)) {
                LKCertificate cert;
                lay.unpack(x, cert.P1, cert.P2, cert.P3, cert.Q);
                cert.problem = prob;
                cert.solver_iterations = total_iters;
                return cert;
            }
            const double decrement = std::sqrt(std::max(0.0, dir.dot(hess * dir)));
            if (decrement < 0.25) break;
        }
        mu *= 0.25;
        if (mu < 1e-12) break;
    }
    if (t < -1e-7 && verified_now(x)) {
        LKCertificate cert;
        lay.unpack(x, cert.P1, cert.P2, cert.P3, cert.Q);
        cert.problem = prob;
        cert.solver_iterations = total_iters;
        return cert;
    }
    return std::nullopt;
}

struct CertifiedDelay {
    double h_M;
    LKCertificate certificate;
};

// Largest grid multiple of `resolution` with a verifiable certificate,
// searched by doubling then bisection on the grid. A returned value is a
// lower bound on the true feasibility boundary.
inline std::optional<CertifiedDelay> max_certified_delay(const Eigen::MatrixXd& F,
                                                         const Eigen::MatrixXd& G, double kappa,
                                                         double resolution = 0.001,
                                                         double cap = 10.0) {
    if (!(resolution > 0.0))
        throw std::invalid_argument("max_certified_delay: resolution must be > 0");
    const auto try_h = [&](long grid_idx) -> std::optional<LKCertificate> {
        ThetaProblem prob{F, G, grid_idx * resolution, kappa};
        auto cert = find_certificate(prob);
        if (cert) cert->grid_resolution = resolution;
        return cert;
    };
    long lo = 1;
    auto best = try_h(lo);
    if (!best) return std::nullopt;
    const long cap_idx = static_cast<long>(cap / resolution);
    long hi = 2;
    while (hi <= cap_idx) {
        auto c = try_h(hi);
        if (!c) break;
        best = c;
        lo = hi;
        hi *= 2;
    }
    if (hi > cap_idx) return CertifiedDelay{lo * resolution, *best};
    while (hi - lo > 1) {
        const long mid = lo + (hi - lo) / 2;
        auto c = try_h(mid);
        if (c) {
            best = c;
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return CertifiedDelay{lo * resolution, *best};
}

inline double spectral_abscissa_margin(const Eigen::MatrixXd& A) {
    Eigen::EigenSolver<Eigen::MatrixXd> es(A);
    return -es.eigenvalues().real().maxCoeff();
}

inline double matrix_norm2(const Eigen::MatrixXd& A) {
    return Eigen::JacobiSVD<Eigen::MatrixXd>(A).singularValues()(0);
}

// Closed-form bound h_M < (1/||A_cl||) log(1 + mu_M(A_cl)/||M||).
inline double delay_upper_bound_small_gain(const Eigen::MatrixXd& A_cl,
                                           const Eigen::MatrixXd& M) {
    const double mu = spectral_abscissa_margin(A_cl);
    if (!(mu > 0.0))
        throw std::invalid_argument("delay_upper_bound_small_gain: A_cl must be Hurwitz");
    return std::log(1.0 + mu / matrix_norm2(M)) / matrix_norm2(A_cl);
}

// Strict-form ISS inequality C ||M|| (e^{||A_cl|| h} - e^{-lambda h}) < lambda.
inline bool small_gain_delay_check(const Eigen::MatrixXd& A_cl, const Eigen::MatrixXd& M,
                                   double h_M, double C_lambda, double lambda) {
    if (!(C_lambda >= 1.0) || !(lambda > 0.0))
        throw std::invalid_argument("small_gain_delay_check: need C_lambda >= 1, lambda > 0");
    const double lhs = C_lambda * matrix_norm2(M) *
                       (std::exp(matrix_norm2(A_cl) * h_M) - std::exp(-lambda * h_M));
    return lhs < lambda;
}

struct DecayEnvelope {
    double C_lambda;
    double lambda;
};

// Certified pair (C, lambda) with ||e^{A_cl t}|| <= C e^{-lambda t}:
// lambda = 0.9 mu_M, C from the Lyapunov conditioning bound, then inflated
// by the worst sampled violation on t in [0, 20].
inline DecayEnvelope decay_envelope(const Eigen::MatrixXd& A_cl) {
    const double mu = spectral_abscissa_margin(A_cl);
    if (!(mu > 0.0)) throw std::invalid_argument("decay_envelope: A_cl must be Hurwitz");
    const double lambda = 0.9 * mu;
    const int n = static_cast<int>(A_cl.rows());
    const Eigen::MatrixXd P =
        detail::lyapunov(A_cl, -Eigen::MatrixXd::Identity(n, n));
    double C = 1.0;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(P);
    if (es.eigenvalues().minCoeff() > 0.0)
        C = std::sqrt(es.eigenvalues().maxCoeff() / es.eigenvalues().minCoeff());
    C = std::max(C, 1.0);

    Eigen::EigenSolver<Eigen::MatrixXd> ed(A_cl);
    const Eigen::MatrixXcd V = ed.eigenvectors();
    const Eigen::MatrixXcd Vinv = V.inverse();
    const Eigen::VectorXcd lam = ed.eigenvalues();
    double worst = 1.0;
    for (int i = 0; i < 2000; ++i) {
        const double tval = 20.0 * i / 1999.0;
        Eigen::VectorXcd e(lam.size());
        for (int j = 0; j < lam.size(); ++j) e(j) = std::exp(lam(j) * tval);
        const Eigen::MatrixXd expAt = (V * e.asDiagonal() * Vinv).real();
        const double ratio = matrix_norm2(expAt) / (C * std::exp(-lambda * tval));
        worst = std::max(worst, ratio);
    }
    return DecayEnvelope{C * worst * (1.0 + 1e-9), lambda};
}

// Largest kappa on the resolution grid with a verifiable certificate at the
// given h_M; bracket [0, 2 mu_M(F)].
inline double max_decay_rate(const Eigen::MatrixXd& F, const Eigen::MatrixXd& G, double h_M,
                             double resolution) {
    if (!(resolution > 0.0))
        throw std::invalid_argument("max_decay_rate: resolution must be > 0");
    if (!find_certificate(ThetaProblem{F, G, h_M, 0.0}))
        throw std::runtime_error("max_decay_rate: infeasible at kappa = 0");
    const double mu = spectral_abscissa_margin(F);
    const long cap_idx = static_cast<long>(std::max(1.0, 2.0 * mu / resolution));
    const auto ok = [&](long idx) {
        return static_cast<bool>(find_certificate(ThetaProblem{F, G, h_M, idx * resolution}));
    };
    if (ok(cap_idx)) return cap_idx * resolution;
    long lo = 0, hi = cap_idx;
    while (hi - lo > 1) {
        const long mid = lo + (hi - lo) / 2;
        if (ok(mid))
            lo = mid;
        else
            hi = mid;
    }
    return lo * resolution;
}

namespace detail {

inline void write_matrix(std::ostream& os, const char* name, const Eigen::MatrixXd& M) {
    os << name << ' ' << M.rows() << ' ' << M.cols() << '\n';
    os << std::setprecision(17);
    for (int i = 0; i < M.rows(); ++i) {
        for (int j = 0; j < M.cols(); ++j) os << (j ? " " : "") << M(i, j);
        os << '\n';
    }
}

}  // namespace detail

// Plain-text export for third-party re-verification; matrices row-major,
// 17 significant digits.
inline void write_certificate(std::ostream& os, const LKCertificate& cert) {
    os << "lk-certificate v1\n";
    os << std::setprecision(17);
    os << "h_M " << cert.problem.h_M << '\n';
    os << "kappa " << cert.problem.kappa << '\n';
    os << "grid_resolution " << cert.grid_resolution << '\n';
    os << "solver_iterations " << cert.solver_iterations << '\n';
    detail::write_matrix(os, "F", cert.problem.F);
    detail::write_matrix(os, "G", cert.problem.G);
    detail::write_matrix(os, "P1", cert.P1);
    detail::write_matrix(os, "P2", cert.P2);
    detail::write_matrix(os, "P3", cert.P3);
    detail::write_matrix(os, "Q", cert.Q);
}

}  // namespace beamdelay
