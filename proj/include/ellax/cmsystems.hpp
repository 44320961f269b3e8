#pragma once

#include <Eigen/Dense>
#include <vector>

#include "ellax/elliptic.hpp"
#include "ellax/laxspace.hpp"
#include "ellax/localfield.hpp"
#include "ellax/numeric.hpp"

namespace ellax {

enum class CMKind { gl, so2n, sp2n };

inline std::string cmKindName(CMKind k) {
    switch (k) {
        case CMKind::gl: return "glCM";
        case CMKind::so2n: return "so2nCM";
        case CMKind::sp2n: return "sp2nCM";
    }
    return "?";
}

/// Calogero-Moser positions and momenta on a fixed genus-1 curve.
struct PhaseState {
    int n = 2;
    std::vector<cplx> q;
    std::vector<cplx> p;
    Lattice lattice;

    PhaseState(int n_, std::vector<cplx> q_, std::vector<cplx> p_, Lattice lat)
        : n(n_), q(std::move(q_)), p(std::move(p_)), lattice(std::move(lat)) {
        if (int(q.size()) != n || int(p.size()) != n)
            throw error("PhaseState: q and p must have length n");
    }

    /// Smallest of the separations that must stay away from the lattice:
    /// q_i, q_i - q_j; for paired kinds additionally q_i + q_j and 2 q_i.
    double minSeparation(bool paired) const {
        double d = std::numeric_limits<double>::infinity();
        for (int i = 0; i < n; ++i) {
            d = std::min(d, lattice.distToLattice(q[std::size_t(i)]));
            if (paired) d = std::min(d, lattice.distToLattice(2.0 * q[std::size_t(i)]));
            for (int j = i + 1; j < n; ++j) {
                d = std::min(d, lattice.distToLattice(q[std::size_t(i)] - q[std::size_t(j)]));
                if (paired)
                    d = std::min(d, lattice.distToLattice(q[std::size_t(i)] + q[std::size_t(j)]));
            }
        }
        return d;
    }

    void requireValid(bool paired, double tol = 1e-6) const {
        if (minSeparation(paired) < tol * lattice.shortestPeriod())
            throw CollisionDetected("PhaseState: positions too close to a pole collision");
    }
};

/// Coupling constants of the three explicit systems. The gauge conditions
/// f_ij f_ji = 1 and f^B_ij f^C_ji = -1 are built into the defaults.
struct CouplingData {
    CMKind kind = CMKind::gl;
    double fGL = 1.0;       // f_ij = fGL for i != j (so f_ij f_ji = 1 requires fGL^2 = 1)
    double fB = 1.0;        // off-diagonal f^B_ij
    double fC = -1.0;       // off-diagonal f^C_ji, fB*fC = -1
    double epsilonSP = 1.0; // diagonal coupling of the sp system

    void requireConsistent() const {
        if (std::abs(fGL * fGL - 1.0) > 1e-14) throw error("CouplingData: f_ij f_ji != 1");
        if (std::abs(fB * fC + 1.0) > 1e-14) throw error("CouplingData: f^B f^C != -1");
    }
};

namespace detail {

/// sigma(z + x) sigma(z - y) style building block of the explicit Lax
/// entries, see laxGL below.
inline cplx glEntry(const Lattice& lat, cplx z, cplx qi, cplx qj, double f) {
    return f * lat.sigma(z + qj - qi) * lat.sigma(z - qj) * lat.sigma(qi) /
           (lat.sigma(z) * lat.sigma(z - qi) * lat.sigma(qj - qi) * lat.sigma(qj));
}

inline void guardPoleAtZ(const PhaseState& s, cplx z, bool paired) {
    const double tol = 1e-7 * s.lattice.shortestPeriod();
    if (s.lattice.distToLattice(z) < tol) throw PoleAtZ("laxMatrix: z at the immovable pole");
    for (const auto& qi : s.q) {
        if (s.lattice.distToLattice(z - qi) < tol) throw PoleAtZ("laxMatrix: z at a position pole");
        if (paired && s.lattice.distToLattice(z + qi) < tol)
            throw PoleAtZ("laxMatrix: z at a mirrored position pole");
    }
}

}  // namespace detail

/// The gl(n) elliptic Calogero-Moser Lax matrix:
///   L_ij = f_ij s(z+q_j-q_i) s(z-q_j) s(q_i) / [s(z) s(z-q_i) s(q_j-q_i) s(q_j)],
///   L_jj = p_j,
/// with simple poles at z = 0 and z = q_i.
inline Matrix laxGL(const PhaseState& s, const CouplingData& c, cplx z) {
    detail::guardPoleAtZ(s, z, false);
    const int n = s.n;
    Matrix L(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            L(i, j) = (i == j) ? s.p[std::size_t(j)]
                               : detail::glEntry(s.lattice, z, s.q[std::size_t(i)],
                                                 s.q[std::size_t(j)], c.fGL);
    return L;
}

/// so(2n) block Lax matrix [[A, B], [C, -A^t]] with A the gl block and B, C
/// skew-symmetric; B carries the poles at -q_i, C the poles at +q_i.
inline Matrix laxSO(const PhaseState& s, const CouplingData& c, cplx z) {
    detail::guardPoleAtZ(s, z, true);
    const int n = s.n;
    const Lattice& lat = s.lattice;
    Matrix A(n, n), B = Matrix::Zero(n, n), C = Matrix::Zero(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            A(i, j) = (i == j) ? s.p[std::size_t(j)]
                               : detail::glEntry(lat, z, s.q[std::size_t(i)], s.q[std::size_t(j)],
                                                 c.fGL);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            const cplx qi = s.q[std::size_t(i)], qj = s.q[std::size_t(j)];
            const cplx b = c.fB * lat.sigma(z + qj + qi) * lat.sigma(z - qj) /
                           (lat.sigma(z) * lat.sigma(z + qi) * lat.sigma(qi + qj));
            const cplx cc = c.fC * lat.sigma(z - qj - qi) * lat.sigma(z + qi) /
                            (lat.sigma(z) * lat.sigma(z - qj) * lat.sigma(qi + qj));
            B(i, j) = b;
            B(j, i) = -b;
            C(j, i) = cc;
            C(i, j) = -cc;
        }
    Matrix L(2 * n, 2 * n);
    L << A, B, C, -A.transpose();
    return L;
}

/// tsp-shaped sp(2n) Lax matrix: inner block as laxSO but with symmetric B, C
/// including the diagonal entries, zero border vectors (they do not enter the
/// Hamiltonians), embedded into (2n+2) x (2n+2).
inline Matrix laxSP(const PhaseState& s, const CouplingData& c, cplx z) {
    detail::guardPoleAtZ(s, z, true);
    const int n = s.n;
    const Lattice& lat = s.lattice;
    Matrix A(n, n), B = Matrix::Zero(n, n), C = Matrix::Zero(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            A(i, j) = (i == j) ? s.p[std::size_t(j)]
                               : detail::glEntry(lat, z, s.q[std::size_t(i)], s.q[std::size_t(j)],
                                                 c.fGL);
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) {
            const cplx qi = s.q[std::size_t(i)], qj = s.q[std::size_t(j)];
            // Diagonal couplings multiply to -epsilonSP so that the residue
            // Hamiltonian carries +epsilon sum wp(2 q_i); see the module notes.
            const double fb = (i == j) ? 1.0 : c.fB;
            const double fc = (i == j) ? -c.epsilonSP : c.fC;
            const cplx b = fb * lat.sigma(z + qj + qi) * lat.sigma(z - qj) /
                           (lat.sigma(z) * lat.sigma(z + qi) * lat.sigma(qi + qj));
            const cplx cc = fc * lat.sigma(z - qj - qi) * lat.sigma(z + qi) /
                            (lat.sigma(z) * lat.sigma(z - qj) * lat.sigma(qi + qj));
            B(i, j) = b;
            B(j, i) = b;
            C(j, i) = cc;
            C(i, j) = cc;
        }
    Matrix L = Matrix::Zero(2 * n + 2, 2 * n + 2);
    L.block(1, 1, n, n) = A;
    L.block(1, 1 + n, n, n) = B;
    L.block(1 + n, 1, n, n) = C;
    L.block(1 + n, 1 + n, n, n) = -A.transpose();
    return L;
}

inline AlgebraKind cmAlgebra(CMKind kind, int n) {
    switch (kind) {
        case CMKind::gl: return AlgebraKind::gl(n);
        case CMKind::so2n: return AlgebraKind::so(2 * n);
        case CMKind::sp2n: return AlgebraKind::tsp(2 * n);
    }
    throw error("cmAlgebra: unreachable");
}

/// The Lax matrix as a MatrixField with its pole divisor declared.
inline MatrixField laxField(CMKind kind, const PhaseState& s, const CouplingData& c) {
    const bool paired = kind != CMKind::gl;
    s.requireValid(paired);
    c.requireConsistent();
    std::vector<PoleSpec> poles{{cplx(0.0), 1}};
    for (const auto& qi : s.q) {
        poles.push_back({qi, 1});
        if (paired) poles.push_back({-qi, 1});
    }
    const AlgebraKind alg = cmAlgebra(kind, s.n);
    auto eval = [kind, s, c](cplx z) {
        switch (kind) {
            case CMKind::gl: return laxGL(s, c, z);
            case CMKind::so2n: return laxSO(s, c, z);
            case CMKind::sp2n: return laxSP(s, c, z);
        }
        throw error("laxField: unreachable");
    };
    return MatrixField(alg.p(), alg, s.lattice, std::move(poles), eval);
}

/// Closed-form second order Hamiltonians of the three systems, in the sign
/// conventions of the Lax construction (-1/2 sum p^2 for gl).
inline cplx hamiltonianClosedForm(CMKind kind, const PhaseState& s, const CouplingData& c) {
    const Lattice& lat = s.lattice;
    cplx H = 0.0;
    switch (kind) {
        case CMKind::gl: {
            for (const auto& pi : s.p) H -= 0.5 * pi * pi;
            for (int i = 0; i < s.n; ++i)
                for (int j = i + 1; j < s.n; ++j)
                    H += lat.wp(s.q[std::size_t(i)] - s.q[std::size_t(j)]);
            return H;
        }
        case CMKind::so2n:
        case CMKind::sp2n: {
            for (const auto& pi : s.p) H -= pi * pi;
            for (int i = 0; i < s.n; ++i)
                for (int j = i + 1; j < s.n; ++j) {
                    H += 2.0 * lat.wp(s.q[std::size_t(i)] - s.q[std::size_t(j)]);
                    H += 2.0 * lat.wp(s.q[std::size_t(i)] + s.q[std::size_t(j)]);
                }
            if (kind == CMKind::sp2n)
                for (int i = 0; i < s.n; ++i)
                    H += c.epsilonSP * lat.wp(2.0 * s.q[std::size_t(i)]);
            return H;
        }
    }
    throw error("hamiltonianClosedForm: unreachable");
}

/// Residue Hamiltonian H_a = -1/(k+1) res_P tr((z-P)^{-m} L(z)^{k+1}) dz in
/// the flat coordinate.
inline cplx hamiltonianViaResidue(const MatrixField& lax, int k, int m, cplx P,
                                  double radius = 0.0, int samples = 256) {
    auto eval = lax.evaluate;
    MatrixField traceField = scalarField(lax.lattice, lax.declaredPoles, [eval, k, m, P](cplx z) {
        const Matrix L = eval(z);
        Matrix Lk = L;
        for (int i = 1; i <= k; ++i) Lk = Lk * L;
        return std::pow(z - P, -m) * Lk.trace();
    });
    // Bump the declared order at P so the contour respects the amplified pole.
    for (auto& ps : traceField.declaredPoles)
        if (std::abs(ps.point - P) < 1e-12) ps.maxOrder += m + k;
    const Matrix res = residueAt(traceField, P, radius, samples);
    return -res(0, 0) / double(k + 1);
}

/// Tyurin data of the gl Calogero-Moser Lax operator: gamma_i = q_i with
/// alpha_i along e_i (the residue at q_i concentrates on row i).
inline TyurinData tyurinFromGLState(const PhaseState& s) {
    TyurinData T{AlgebraKind::gl(s.n), {}};
    for (int i = 0; i < s.n; ++i) {
        Vector a = Vector::Zero(s.n);
        a(i) = 1.0;
        T.points.push_back({s.q[std::size_t(i)], a});
    }
    return T;
}

}  // namespace ellax
