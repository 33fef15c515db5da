#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <complex>
#include <stdexcept>
#include <vector>

#include "beamdelay/model.hpp"

namespace beamdelay {

enum class Actuation { BothEnds, LeftOnly, RightOnly };

struct FeedbackGain {
    Eigen::MatrixXd K;  // 2 x 2N0; single-input configs have one exactly-zero row
    Actuation config;
    std::vector<std::complex<double>> target_poles;
};

struct SynthesisError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

inline void check_conjugate_closed(const std::vector<std::complex<double>>& poles) {
    for (const auto& p : poles) {
        if (p.imag() == 0.0) continue;
        const bool has_conj = std::any_of(poles.begin(), poles.end(), [&](const auto& q) {
            return std::abs(q - std::conj(p)) < 1e-12 * (1.0 + std::abs(p));
        });
        if (!has_conj)
            throw std::invalid_argument("place_poles: pole set not closed under conjugation");
    }
}

// Single-input assignment via Ackermann's formula. Returns the row k such
// that A + b k has the requested spectrum.
inline Eigen::RowVectorXd ackermann(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                                    const std::vector<std::complex<double>>& poles) {
    const int d = static_cast<int>(A.rows());
    Eigen::MatrixXd ctrb(d, d);
    Eigen::VectorXd col = b;
    for (int i = 0; i < d; ++i) {
        ctrb.col(i) = col;
        col = A * col;
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(ctrb);
    if (!lu.isInvertible())
        throw SynthesisError("place_poles: pair (A, b) is not controllable");
    // phi(A) as a product of real linear/quadratic factors.
    Eigen::MatrixXcd phi = Eigen::MatrixXcd::Identity(d, d);
    const Eigen::MatrixXcd Ac = A.cast<std::complex<double>>();
    for (const auto& p : poles) phi = phi * (Ac - p * Eigen::MatrixXcd::Identity(d, d));
    Eigen::RowVectorXd ed = Eigen::RowVectorXd::Zero(d);
    ed(d - 1) = 1.0;
    const Eigen::RowVectorXd k_acker = ed * lu.inverse() * phi.real();
    return -k_acker;
}

// Multi-input eigenstructure assignment (Moore's parameterization with
// Kautsky-Nichols-Van Dooren orthogonality sweeps). For each pole mu the
// admissible eigenvector space is null(U1^H (A - mu I)) with U1 spanning the
// orthogonal complement of range(B); sweeps pick well-conditioned
// eigenvectors, then K = pinv(B) (X Lambda X^-1 - A).
inline Eigen::MatrixXd knv_place(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                                 const std::vector<std::complex<double>>& poles,
                                 int sweeps = 8) {
    using Cplx = std::complex<double>;
    const int d = static_cast<int>(A.rows());
    const int m = static_cast<int>(B.cols());
    Eigen::JacobiSVD<Eigen::MatrixXd> svdB(B, Eigen::ComputeFullU);
    const Eigen::MatrixXd U1 = svdB.matrixU().rightCols(d - m);
    const Eigen::MatrixXcd Ac = A.cast<Cplx>();
    const Eigen::MatrixXcd U1c = U1.cast<Cplx>();

    // conj_partner[j] = index of the conjugate pole, or j for real poles.
    std::vector<int> partner(poles.size());
    std::vector<bool> primary(poles.size(), true);
    for (std::size_t j = 0; j < poles.size(); ++j) {
        partner[j] = static_cast<int>(j);
        if (poles[j].imag() == 0.0) continue;
        for (std::size_t i = 0; i < poles.size(); ++i) {
            if (i != j && std::abs(poles[i] - std::conj(poles[j])) <
                              1e-12 * (1.0 + std::abs(poles[j]))) {
                partner[j] = static_cast<int>(i);
                if (i < j) primary[j] = false;
                break;
            }
        }
    }

    std::vector<Eigen::MatrixXcd> S(poles.size());
    for (std::size_t j = 0; j < poles.size(); ++j) {
        const Eigen::MatrixXcd R = U1c.adjoint() * (Ac - poles[j] * Eigen::MatrixXcd::Identity(d, d));
        Eigen::JacobiSVD<Eigen::MatrixXcd> svd(R, Eigen::ComputeFullV);
        S[j] = svd.matrixV().rightCols(m);
    }

    Eigen::MatrixXcd X(d, d);
    for (std::size_t j = 0; j < poles.size(); ++j) X.col(static_cast<int>(j)) = S[j].col(0);
    for (int sw = 0; sw < sweeps; ++sw) {
        for (int j = 0; j < d; ++j) {
            if (!primary[j]) {
                X.col(j) = X.col(partner[j]).conjugate();
                continue;
            }
            Eigen::MatrixXcd others(d, d - 1);
            for (int i = 0, c = 0; i < d; ++i)
                if (i != j) others.col(c++) = X.col(i);
            Eigen::JacobiSVD<Eigen::MatrixXcd> svd(others, Eigen::ComputeFullU);
            const Eigen::VectorXcd y = svd.matrixU().col(d - 1);
            Eigen::VectorXcd xj = S[j] * (S[j].adjoint() * y);
            const double nrm = xj.norm();
            if (nrm > 1e-12) X.col(j) = xj / nrm;
            if (partner[j] != j) X.col(partner[j]) = X.col(j).conjugate();
        }
    }

    Eigen::VectorXcd lam(d);
    for (int j = 0; j < d; ++j) lam(j) = poles[j];
    Eigen::FullPivLU<Eigen::MatrixXcd> luX(X);
    if (!luX.isInvertible())
        throw SynthesisError("place_poles: eigenvector matrix is singular");
    const Eigen::MatrixXcd target = X * lam.asDiagonal() * luX.inverse();
    const Eigen::MatrixXd Bpinv = svdB.solve(Eigen::MatrixXd::Identity(d, d));
    return Bpinv * (target.real() - A);
}

inline void verify_spectrum(const Eigen::MatrixXd& Acl,
                            std::vector<std::complex<double>> poles, double tol) {
    Eigen::EigenSolver<Eigen::MatrixXd> es(Acl);
    std::vector<std::complex<double>> got(es.eigenvalues().data(),
                                          es.eigenvalues().data() + es.eigenvalues().size());
    for (const auto& p : poles) {
        auto it = std::min_element(got.begin(), got.end(), [&](const auto& a, const auto& b) {
            return std::abs(a - p) < std::abs(b - p);
        });
        if (it == got.end() || std::abs(*it - p) > tol)
            throw SynthesisError("place_poles: achieved spectrum misses a target pole");
        got.erase(it);
    }
}

}  // namespace detail

inline Eigen::MatrixXd closed_loop(const TruncatedModel& model, const FeedbackGain& gain) {
    if (gain.K.cols() != model.dim())
        throw std::invalid_argument("closed_loop: gain/model dimension mismatch");
    return model.A + model.B * gain.K;
}

inline FeedbackGain place_poles(const TruncatedModel& model, Actuation config,
                                const std::vector<std::complex<double>>& poles) {
    const int d = model.dim();
    if (static_cast<int>(poles.size()) != d)
        throw std::invalid_argument("place_poles: need exactly 2*N0 poles");
    detail::check_conjugate_closed(poles);

    FeedbackGain gain{Eigen::MatrixXd::Zero(2, d), config, poles};
    switch (config) {
        case Actuation::LeftOnly:
            if (!controllability_check(model, InputSelection::Column1))
                throw SynthesisError("place_poles: (A, B_c1) not controllable");
            gain.K.row(0) = detail::ackermann(model.A, model.B.col(0), poles);
            break;
        case Actuation::RightOnly:
            if (!controllability_check(model, InputSelection::Column2))
                throw SynthesisError("place_poles: (A, B_c2) not controllable");
            gain.K.row(1) = detail::ackermann(model.A, model.B.col(1), poles);
            break;
        case Actuation::BothEnds:
            if (!controllability_check(model, InputSelection::Full))
                throw SynthesisError("place_poles: (A, B) not controllable");
            gain.K = detail::knv_place(model.A, model.B, poles);
            break;
    }
    detail::verify_spectrum(closed_loop(model, gain), poles, 1e-6);
    return gain;
}

}  // namespace beamdelay
