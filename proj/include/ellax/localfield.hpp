#pragma once

#include <Eigen/Dense>
#include <functional>
#include <limits>
#include <utility>
#include <vector>

#include "ellax/algebra.hpp"
#include "ellax/elliptic.hpp"
#include "ellax/numeric.hpp"

namespace ellax {

using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;

struct PoleSpec {
    cplx point;
    int maxOrder = 1;
};

/// A matrix-valued meromorphic function of the spectral parameter, tagged
/// with its size, declared pole divisor and algebra kind. Pole locations are
/// understood modulo the lattice.
struct MatrixField {
    int size = 1;
    AlgebraKind kind;
    Lattice lattice;
    std::vector<PoleSpec> declaredPoles;
    std::function<Matrix(cplx)> evaluate;

    MatrixField(int p, AlgebraKind k, Lattice lat, std::vector<PoleSpec> poles,
                std::function<Matrix(cplx)> f)
        : size(p), kind(std::move(k)), lattice(std::move(lat)),
          declaredPoles(std::move(poles)), evaluate(std::move(f)) {}

    Matrix operator()(cplx z) const { return evaluate(z); }

    /// Distance (mod lattice) from z to the declared pole set.
    double distToPoles(cplx z) const {
        double d = std::numeric_limits<double>::infinity();
        for (const auto& ps : declaredPoles)
            d = std::min(d, lattice.distToLattice(z - ps.point));
        return d;
    }

    /// Distance from `center` to the nearest pole other than a pole sitting
    /// at `center` itself (again mod lattice).
    double distToOtherPoles(cplx center) const {
        double d = std::numeric_limits<double>::infinity();
        const double atol = 1e-10 * lattice.shortestPeriod();
        for (const auto& ps : declaredPoles) {
            const double dist = lattice.distToLattice(center - ps.point);
            if (dist < atol) {
                // Same pole point; its nearest lattice translate still bounds
                // the usable radius.
                const CellReduction r = lattice.reduce(center - ps.point);
                double nearest = std::numeric_limits<double>::infinity();
                for (int dm = -1; dm <= 1; ++dm)
                    for (int dn = -1; dn <= 1; ++dn) {
                        if (dm == 0 && dn == 0) continue;
                        nearest = std::min(nearest,
                                           std::abs(r.z0 - 2.0 * double(dm) * lattice.omega1() -
                                                    2.0 * double(dn) * lattice.omega3()));
                    }
                d = std::min(d, nearest);
            } else {
                d = std::min(d, dist);
            }
        }
        return d;
    }
};

/// Laurent coefficients c_k, minOrder <= k <= maxOrder, of a field about
/// `center`, together with the interpolation residual measured on a staggered
/// circle. The full trapezoid DFT is spectrally accurate, so the residual
/// sits at the roundoff floor whenever the contour stays inside the annulus
/// of analyticity.
struct LaurentJet {
    cplx center;
    int minOrder = 0;
    int maxOrder = 0;
    std::vector<Matrix> coeffs;
    double radius = 0.0;
    int samples = 0;
    double residual = 0.0;

    const Matrix& coeff(int k) const { return coeffs.at(std::size_t(k - minOrder)); }

    Matrix reconstruct(cplx z) const {
        Matrix acc = Matrix::Zero(coeffs.front().rows(), coeffs.front().cols());
        const cplx w = z - center;
        cplx wk = std::pow(w, minOrder);
        for (int k = minOrder; k <= maxOrder; ++k) {
            acc += coeffs[std::size_t(k - minOrder)] * wk;
            wk *= w;
        }
        return acc;
    }
};

namespace detail {

inline double defaultRadius(const MatrixField& f, cplx center) {
    const double cap = 0.25 * f.lattice.shortestPeriod();
    const double d = f.distToOtherPoles(center);
    return std::min(0.5 * d, cap);
}

}  // namespace detail

/// Laurent jet by discrete Cauchy integrals: c_k = (1/2 pi i) oint f(z)
/// (z-center)^{-k-1} dz evaluated with the trapezoid rule on a circle.
///
/// radius <= 0 selects the default rule: half the distance to the nearest
/// other pole, capped at a quarter of the shortest period.
inline LaurentJet expandAt(const MatrixField& f, cplx center, int minOrder, int maxOrder,
                           double radius = 0.0, int samples = 256,
                           double residualTol = 1e-9) {
    if (maxOrder < minOrder) throw error("expandAt: empty order window");
    const int span = maxOrder - minOrder;
    if (samples < 4 * std::max(span, 1) || (samples & (samples - 1)) != 0)
        throw error("expandAt: samples must be a power of two >= 4*(maxOrder-minOrder)");
    if (radius <= 0.0) radius = detail::defaultRadius(f, center);
    if (!(radius > 0.0) || !std::isfinite(radius))
        throw ContourHitsPole("expandAt: no usable contour radius at this center");

    const double poleTol = Lattice::tolPole * f.lattice.shortestPeriod();
    const int N = samples;
    std::vector<Matrix> vals(static_cast<std::size_t>(N));
    for (int j = 0; j < N; ++j) {
        const cplx zj = center + radius * std::exp(kI * (2.0 * kPi * double(j) / double(N)));
        if (f.distToPoles(zj) < poleTol)
            throw ContourHitsPole("expandAt: contour sample within tol_pole of a pole");
        vals[std::size_t(j)] = f.evaluate(zj);
    }
    const Eigen::Index p = vals.front().rows(), q = vals.front().cols();

    // Full DFT window [-N/2, N/2); the requested jet selects from it and the
    // rest feeds the interpolation residual below.
    std::vector<Matrix> hat(std::size_t(N), Matrix::Zero(p, q));
    for (int k = -N / 2; k < N / 2; ++k) {
        Matrix acc = Matrix::Zero(p, q);
        for (int j = 0; j < N; ++j) {
            const cplx w = std::exp(kI * (-2.0 * kPi * double(k) * double(j) / double(N)));
            acc += vals[std::size_t(j)] * w;
        }
        hat[std::size_t(k + N / 2)] = acc * (std::pow(radius, -k) / double(N));
    }

    // Residual: trigonometric interpolation error at staggered angles.
    double resid = 0.0, scale = 1.0;
    const int probes = 16;
    for (int j = 0; j < probes; ++j) {
        const double theta = 2.0 * kPi * (double(j * (N / probes)) + 0.5) / double(N);
        const cplx zj = center + radius * std::exp(kI * theta);
        Matrix rec = Matrix::Zero(p, q);
        for (int k = -N / 2; k < N / 2; ++k)
            rec += hat[std::size_t(k + N / 2)] * std::pow(radius * std::exp(kI * theta), k);
        const Matrix truth = f.evaluate(zj);
        resid = std::max(resid, (rec - truth).cwiseAbs().maxCoeff());
        scale = std::max(scale, truth.cwiseAbs().maxCoeff());
    }
    resid /= scale;

    LaurentJet jet;
    jet.center = center;
    jet.minOrder = minOrder;
    jet.maxOrder = maxOrder;
    jet.radius = radius;
    jet.samples = N;
    jet.residual = resid;
    jet.coeffs.reserve(std::size_t(span) + 1);
    for (int k = minOrder; k <= maxOrder; ++k)
        jet.coeffs.push_back(hat[std::size_t(k + N / 2)]);
    if (resid > residualTol)
        throw NoisyJet("expandAt: interpolation residual " + std::to_string(resid) +
                       " exceeds tolerance");
    return jet;
}

inline Matrix residueAt(const MatrixField& f, cplx center, double radius = 0.0,
                        int samples = 256) {
    return expandAt(f, center, -1, 0, radius, samples).coeff(-1);
}

/// Scalar convenience wrapper: fields of size 1.
inline MatrixField scalarField(const Lattice& lat, std::vector<PoleSpec> poles,
                               std::function<cplx(cplx)> f) {
    return MatrixField(1, AlgebraKind::gl(1), lat, std::move(poles),
                       [f = std::move(f)](cplx z) {
                           Matrix m(1, 1);
                           m(0, 0) = f(z);
                           return m;
                       });
}

}  // namespace ellax
