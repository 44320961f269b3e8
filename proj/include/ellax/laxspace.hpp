#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ellax/algebra.hpp"
#include "ellax/elliptic.hpp"
#include "ellax/localfield.hpp"
#include "ellax/numeric.hpp"

namespace ellax {

// ---------------------------------------------------------------------------
// Tyurin data and divisors
// ---------------------------------------------------------------------------

struct TyurinPoint {
    cplx gamma;
    Vector alpha;  // unit norm; isotropic w.r.t. sigma for so kinds
};

struct TyurinData {
    AlgebraKind kind;
    std::vector<TyurinPoint> points;

    /// Number of gamma-points at genus 1: n for gl/sl/s and so(2n)/so(2n+1),
    /// n+1 for sp(2n).
    static int expectedCount(const AlgebraKind& kind) {
        switch (kind.family()) {
            case AlgebraKind::Family::gl:
            case AlgebraKind::Family::sl:
            case AlgebraKind::Family::s: return kind.n();
            case AlgebraKind::Family::so: return kind.n() / 2;
            case AlgebraKind::Family::sp:
            case AlgebraKind::Family::tsp: return kind.n() / 2 + 1;
        }
        throw error("expectedCount: unreachable");
    }

    static Vector randomAlpha(const AlgebraKind& kind, Rng& rng) {
        const int p = kind.p();
        Vector a(p);
        if (kind.family() == AlgebraKind::Family::tsp) {
            a.setZero();
            a(0) = rng.gaussian();
            for (int i = 1; i < p - 1; ++i) a(i) = rng.gaussian();
        } else {
            for (int i = 0; i < p; ++i) a(i) = rng.gaussian();
            if (kind.family() == AlgebraKind::Family::so) {
                // Solve (a + t b)^t sigma (a + t b) = 0 for t.
                const auto& s = kind.sigmaMatrix();
                Vector b(p);
                for (int i = 0; i < p; ++i) b(i) = rng.gaussian();
                const cplx A = (b.transpose() * s * b)(0);
                const cplx B = (a.transpose() * s * b)(0);
                const cplx C = (a.transpose() * s * a)(0);
                const cplx t = (-B + std::sqrt(B * B - A * C)) / A;
                a += t * b;
            }
        }
        a.normalize();
        return a;
    }

    static TyurinData random(const AlgebraKind& kind, const Lattice& lat, Rng& rng,
                             const std::vector<cplx>& avoid = {},
                             double separation = 0.15) {
        TyurinData T{kind, {}};
        const int K = expectedCount(kind);
        const double minDist = separation * lat.shortestPeriod();
        for (int s = 0; s < K; ++s) {
            cplx g;
            bool ok = false;
            for (int tries = 0; tries < 2000 && !ok; ++tries) {
                const double x = rng.uniform(-0.5, 0.5);
                const double y = rng.uniform(-0.5, 0.5);
                g = x * 2.0 * lat.omega1() + y * 2.0 * lat.omega3();
                ok = lat.distToLattice(g) > minDist;
                for (const auto& q : avoid) ok = ok && lat.distToLattice(g - q) > minDist;
                for (const auto& tp : T.points)
                    ok = ok && lat.distToLattice(g - tp.gamma) > minDist;
            }
            if (!ok) throw DegenerateConfiguration("TyurinData::random: cannot place gamma points");
            T.points.push_back({g, randomAlpha(kind, rng)});
        }
        return T;
    }
};

struct Divisor {
    std::vector<std::pair<cplx, int>> points;  // (P_i, m_i), m_i >= 1

    int degree() const {
        int d = 0;
        for (const auto& pm : points) d += pm.second;
        return d;
    }
    std::vector<cplx> support() const {
        std::vector<cplx> s;
        for (const auto& pm : points) s.push_back(pm.first);
        return s;
    }
};

// ---------------------------------------------------------------------------
// Elliptic scalar pole basis
// ---------------------------------------------------------------------------

/// A scalar elliptic building block: the constant 1, a Weierstrass derivative
/// wp^{(j)}(z - Q) carrying a pole of order j+2, or an anchored zeta
/// difference zeta(z - Q) - zeta(z - Q0) carrying simple poles at Q and Q0.
struct PoleBasisElement {
    enum class Type { constant, wpDeriv, zetaDiff };
    Type type = Type::constant;
    cplx point{};
    int derivOrder = 0;  // wpDeriv: pole order is derivOrder + 2
    cplx anchor{};

    cplx eval(const Lattice& lat, cplx z) const {
        switch (type) {
            case Type::constant: return cplx(1.0);
            case Type::wpDeriv: return lat.wpDeriv(derivOrder, z - point);
            case Type::zetaDiff: return lat.zeta(z - point) - lat.zeta(z - anchor);
        }
        throw error("PoleBasisElement::eval: unreachable");
    }

    std::string describe() const {
        auto cs = [](cplx c) {
            return "(" + std::to_string(c.real()) + "," + std::to_string(c.imag()) + ")";
        };
        switch (type) {
            case Type::constant: return "1";
            case Type::wpDeriv:
                return "wp^(" + std::to_string(derivOrder) + ")(z-" + cs(point) + ")";
            case Type::zetaDiff: return "zeta(z-" + cs(point) + ")-zeta(z-" + cs(anchor) + ")";
        }
        return "?";
    }
};

/// Spanning family for the scalar functions with poles bounded by the given
/// budgets, genus-1 Riemann-Roch sized: one element per unit of pole budget,
/// the constant included, simple-pole slots realized as zeta differences
/// against a fixed anchor so every element is elliptic.
inline std::vector<PoleBasisElement> buildPoleBasis(const Lattice& lat,
                                                    const std::vector<std::pair<cplx, int>>& budgets) {
    const double tol = 1e-9 * lat.shortestPeriod();
    for (std::size_t i = 0; i < budgets.size(); ++i)
        for (std::size_t j = i + 1; j < budgets.size(); ++j)
            if (lat.distToLattice(budgets[i].first - budgets[j].first) < tol)
                throw DegenerateConfiguration("pole basis: two allowed poles coincide");
    int total = 0;
    for (const auto& b : budgets) total += b.second;
    if (total < 1) throw DegenerateConfiguration("pole basis: empty pole budget");

    std::vector<PoleBasisElement> out;
    out.push_back({PoleBasisElement::Type::constant, 0.0, 0, 0.0});
    const cplx anchor = budgets.front().first;
    for (std::size_t i = 0; i < budgets.size(); ++i) {
        const auto& [Q, m] = budgets[i];
        if (i != 0) out.push_back({PoleBasisElement::Type::zetaDiff, Q, 0, anchor});
        for (int j = 0; j + 2 <= m; ++j) out.push_back({PoleBasisElement::Type::wpDeriv, Q, j, 0.0});
    }

    // Independence gate by sampled rank.
    const int nb = int(out.size());
    Matrix S(nb + 2, nb);
    int placed = 0;
    double u = 0.318, v = 0.097;
    while (placed < nb + 2) {
        u = std::fmod(u + 0.6180339887, 1.0);
        v = std::fmod(v + 0.3819660113, 1.0);
        const cplx z = (u - 0.5) * 2.0 * lat.omega1() + (v - 0.5) * 2.0 * lat.omega3();
        bool ok = lat.distToLattice(z) > 0.05 * lat.shortestPeriod();
        for (const auto& b : budgets)
            ok = ok && lat.distToLattice(z - b.first) > 0.05 * lat.shortestPeriod();
        if (!ok) continue;
        for (int b = 0; b < nb; ++b) S(placed, b) = out[std::size_t(b)].eval(lat, z);
        ++placed;
    }
    Eigen::JacobiSVD<Matrix> svd(S);
    const auto& sv = svd.singularValues();
    if (sv(sv.size() - 1) < 1e-8 * sv(0))
        throw DegenerateConfiguration("pole basis: sampled family is rank deficient");
    return out;
}

inline std::vector<PoleBasisElement> buildEllipticPoleBasis(const Lattice& lat, const Divisor& D,
                                                            const TyurinData& T,
                                                            int maxGammaOrder) {
    std::vector<std::pair<cplx, int>> budgets = D.points;
    for (const auto& tp : T.points) budgets.emplace_back(tp.gamma, maxGammaOrder);
    return buildPoleBasis(lat, budgets);
}

// ---------------------------------------------------------------------------
// Constraint checking
// ---------------------------------------------------------------------------

struct GammaFit {
    cplx gamma;
    cplx nu{};        // or lambda for M-operators
    cplx kappa{};     // L-operators only
    Vector covector;  // beta (L) or mu (M)
    double resOrder2 = 0.0;
    double resOrder1 = 0.0;
    double resOrth = 0.0;    // L only
    double resEigen = 0.0;   // L only
    double resAdd2 = 0.0;    // sp/tsp only
    double resExcess = 0.0;  // Laurent content below order -2
    bool pass = false;
};

struct ConstraintReport {
    std::vector<GammaFit> gammas;
    double resMembership = 0.0;
    double tol = 0.0;
    bool pass = false;

    double worst() const {
        double w = resMembership;
        for (const auto& g : gammas) {
            w = std::max({w, g.resOrder2, g.resOrder1, g.resOrth, g.resEigen, g.resAdd2,
                          g.resExcess});
        }
        return w;
    }
};

namespace detail {

/// Least-squares fit of w in c = (alpha w^t + eps w alpha^t) sigma, optionally
/// restricted to the free coordinate set `mask`.
inline Vector fitCovector(const Matrix& c, const Vector& alpha, int eps, const Matrix& sigma,
                          const std::vector<int>& mask) {
    const int p = int(alpha.size());
    const Vector sa = sigma.transpose() * alpha;
    Matrix A(p * p, int(mask.size()));
    for (std::size_t col = 0; col < mask.size(); ++col) {
        const int w = mask[col];
        Matrix dc = Matrix::Zero(p, p);
        // d/dw of (alpha w^t) sigma: alpha e_w^t sigma
        dc.row(w) += double(eps) * sa.transpose();
        for (int u = 0; u < p; ++u)
            for (int v = 0; v < p; ++v) dc(u, v) += alpha(u) * sigma(w, v);
        A.col(Eigen::Index(col)) = dc.reshaped();
    }
    Eigen::JacobiSVD<Matrix> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector sol = svd.solve(c.reshaped());
    Vector full = Vector::Zero(p);
    for (std::size_t col = 0; col < mask.size(); ++col) full(mask[col]) = sol(Eigen::Index(col));
    return full;
}

inline Matrix covectorStructure(const Vector& alpha, const Vector& w, int eps,
                                const Matrix& sigma) {
    return (alpha * w.transpose() + double(eps) * w * alpha.transpose()) * sigma;
}

inline std::vector<int> fullMask(int p) {
    std::vector<int> m;
    m.reserve(std::size_t(p));
    for (int i = 0; i < p; ++i) m.push_back(i);
    return m;
}

inline std::vector<int> covectorMask(const AlgebraKind& kind) {
    if (kind.family() == AlgebraKind::Family::tsp) {
        std::vector<int> m;
        for (int i = 0; i + 1 < kind.p(); ++i) m.push_back(i);
        return m;
    }
    return fullMask(kind.p());
}

inline bool doublePoleKind(const AlgebraKind& kind) {
    return kind.family() == AlgebraKind::Family::sp || kind.family() == AlgebraKind::Family::tsp;
}

inline double membershipSample(const MatrixField& f, int count = 20) {
    const Lattice& lat = f.lattice;
    double worst = 0.0;
    double u = 0.143, v = 0.371;
    int taken = 0;
    while (taken < count) {
        u = std::fmod(u + 0.6180339887, 1.0);
        v = std::fmod(v + 0.3819660113, 1.0);
        const cplx z = (u - 0.5) * 2.0 * lat.omega1() + (v - 0.5) * 2.0 * lat.omega3();
        if (f.distToPoles(z) < 0.08 * lat.shortestPeriod()) continue;
        if (lat.distToLattice(z) < 0.08 * lat.shortestPeriod()) continue;
        const Matrix X = f.evaluate(z);
        worst = std::max(worst, f.kind.membershipResidual(X) /
                                    std::max(1.0, X.cwiseAbs().maxCoeff()));
        ++taken;
    }
    return worst;
}

}  // namespace detail

/// Checks the Laurent-jet structure of an L-operator at every gamma-point:
/// the order -2 and -1 coefficients carry the rank structure in alpha, the
/// orthogonality and eigenvector conditions hold, and for sp/tsp the extra
/// order-1 scalar condition holds. Constraint violations show up as residuals
/// in the report; only jet computation failures throw.
inline ConstraintReport checkLConstraints(const MatrixField& f, const TyurinData& T, double tol,
                                          bool mOperator = false, double jetTol = 1e-9) {
    ConstraintReport rep;
    rep.tol = tol;
    const AlgebraKind& kind = f.kind;
    const Matrix& sigma = kind.sigmaMatrix();
    const int eps = kind.epsilon();
    const bool dbl = detail::doublePoleKind(kind);

    for (const auto& tp : T.points) {
        LaurentJet jet;
        try {
            jet = expandAt(f, tp.gamma, -4, 1, 0.0, 256, jetTol);
        } catch (const NoisyJet&) {
            throw;
        } catch (const error& e) {
            throw JetFailure(std::string("checkConstraints: jet at gamma failed: ") + e.what());
        }
        double scale = 1.0;
        for (int k = -2; k <= 1; ++k)
            scale = std::max(scale, jet.coeff(k).cwiseAbs().maxCoeff());

        GammaFit fit;
        fit.gamma = tp.gamma;
        fit.resExcess = std::max(jet.coeff(-3).cwiseAbs().maxCoeff(),
                                 jet.coeff(-4).cwiseAbs().maxCoeff()) /
                        scale;

        const Matrix c2 = jet.coeff(-2);
        if (dbl) {
            const Matrix S = (tp.alpha * tp.alpha.transpose()) * sigma;
            const cplx num = (S.reshaped().adjoint() * c2.reshaped())(0);
            const cplx den = (S.reshaped().adjoint() * S.reshaped())(0);
            fit.nu = num / den;
            fit.resOrder2 = (c2 - fit.nu * S).cwiseAbs().maxCoeff() / scale;
        } else {
            fit.nu = 0.0;
            fit.resOrder2 = c2.cwiseAbs().maxCoeff() / scale;
        }

        const auto mask = mOperator ? detail::covectorMask(kind) : detail::fullMask(kind.p());
        fit.covector = detail::fitCovector(jet.coeff(-1), tp.alpha, eps, sigma, mask);
        fit.resOrder1 = (jet.coeff(-1) - detail::covectorStructure(tp.alpha, fit.covector, eps, sigma))
                            .cwiseAbs()
                            .maxCoeff() /
                        scale;

        if (!mOperator) {
            fit.resOrth = std::abs((fit.covector.transpose() * sigma * tp.alpha)(0)) /
                          std::max(1.0, fit.covector.norm());
            const Vector c0a = jet.coeff(0) * tp.alpha;
            fit.kappa = (tp.alpha.adjoint() * c0a)(0) / (tp.alpha.adjoint() * tp.alpha)(0);
            fit.resEigen = (c0a - fit.kappa * tp.alpha).cwiseAbs().maxCoeff() / scale;
        }

        if (dbl) {
            fit.resAdd2 = std::abs((tp.alpha.transpose() * sigma * jet.coeff(1) * tp.alpha)(0)) /
                          scale;
        }

        fit.pass = fit.resOrder2 <= tol && fit.resOrder1 <= tol && fit.resOrth <= tol &&
                   fit.resEigen <= tol && fit.resAdd2 <= tol && fit.resExcess <= tol;
        rep.gammas.push_back(std::move(fit));
    }

    rep.resMembership = detail::membershipSample(f);
    rep.pass = rep.resMembership <= tol;
    for (const auto& g : rep.gammas) rep.pass = rep.pass && g.pass;
    return rep;
}

/// M-operator variant: fits lambda and mu in the order -2 / -1 coefficients,
/// no orthogonality or eigenvector condition, order-1 condition for sp/tsp.
inline ConstraintReport checkMConstraints(const MatrixField& f, const TyurinData& T, double tol,
                                          double jetTol = 1e-9) {
    return checkLConstraints(f, T, tol, /*mOperator=*/true, jetTol);
}

/// Pointwise commutator of two L-operators, checked against the same
/// constraints (numerical instance of the closure theorem).
inline ConstraintReport commutatorClosure(const MatrixField& f1, const MatrixField& f2,
                                          const TyurinData& T, double tol) {
    std::vector<PoleSpec> poles;
    for (const auto& ps : f1.declaredPoles) poles.push_back(ps);
    for (const auto& ps : f2.declaredPoles) {
        bool merged = false;
        for (auto& q : poles)
            if (f1.lattice.distToLattice(q.point - ps.point) < 1e-9 * f1.lattice.shortestPeriod()) {
                q.maxOrder += ps.maxOrder;
                merged = true;
                break;
            }
        if (!merged) poles.push_back(ps);
    }
    auto e1 = f1.evaluate, e2 = f2.evaluate;
    MatrixField h(f1.size, f1.kind, f1.lattice, std::move(poles), [e1, e2](cplx z) {
        const Matrix a = e1(z), b = e2(z);
        return Matrix(a * b - b * a);
    });
    return checkLConstraints(h, T, tol);
}

// ---------------------------------------------------------------------------
// Constrained-space solver
// ---------------------------------------------------------------------------

struct FunctionSpaceBasis {
    FunctionSpaceBasis(AlgebraKind alg, Lattice lat)
        : valueAlgebra(std::move(alg)), lattice(std::move(lat)) {}

    std::vector<PoleBasisElement> poleBasis;
    AlgebraKind valueAlgebra;
    Lattice lattice;
    std::vector<PoleSpec> fieldPoles;
    /// One entry per basis element of the solved space: matrix coefficients
    /// C_b against poleBasis, so the field is sum_b C_b E_b(z).
    std::vector<std::vector<Matrix>> coefficientBasis;
    int dimension = 0;
    std::vector<double> singularValues;
    std::string spaceLabel;

    MatrixField reconstruct(std::size_t i) const {
        const auto& Cs = coefficientBasis.at(i);
        const Lattice lat = lattice;
        auto pb = poleBasis;
        return MatrixField(valueAlgebra.p(), valueAlgebra, lat, fieldPoles,
                           [Cs, pb, lat](cplx z) {
                               Matrix acc = Matrix::Zero(Cs.front().rows(), Cs.front().cols());
                               for (std::size_t b = 0; b < pb.size(); ++b)
                                   acc += Cs[b] * pb[b].eval(lat, z);
                               return acc;
                           });
    }
};

enum class SpaceKind { LD, ND };

namespace detail {

struct GammaSpec {
    cplx point;
    Vector alpha;
    std::vector<int> muFree;
    // Pin the covector representative when the structure map has the kernel
    // c*alpha (so kinds): adds the row conj(alpha)^t mu = 0.
    bool pinCovector = false;
};

struct OrderCondition {
    cplx point;
    int lowestAnsatzOrder;   // most negative Laurent order the ansatz can carry
    int requiredOrder;       // enforce coefficients zero below this order
};

struct BlockRestriction {
    std::size_t basisElement;
    std::vector<std::pair<int, int>> zeroEntries;  // (row, col) forced to 0
};

struct SpaceProblem {
    SpaceProblem(AlgebraKind a, Lattice l) : alg(std::move(a)), lattice(std::move(l)) {}

    AlgebraKind alg;
    Lattice lattice;
    std::vector<PoleBasisElement> basis;
    std::vector<GammaSpec> gammas;
    bool doubleGammaPole = false;  // order-2 structure with free nu/lambda
    bool lType = false;            // orthogonality + eigenvector rows
    std::vector<OrderCondition> orderConditions;
    std::vector<BlockRestriction> restrictions;
    std::vector<std::pair<std::size_t, std::size_t>> muCouplings;  // paired gammas
    std::string label;
};

struct AssembledSystem {
    Matrix A;
    int nBasis = 0;
    int dimAlg = 0;
    // Column layout: [c_{b,j}] then per gamma [nu?][mu/beta free coords][kappa?]
    std::vector<int> gammaColStart;
    int totalCols = 0;
};

inline std::vector<std::vector<cplx>> scalarJets(const SpaceProblem& prob, cplx center,
                                                 int minOrder, int maxOrder) {
    // Declared poles: every basis pole point, so the contour radius respects
    // all of them.
    std::vector<PoleSpec> poles;
    auto add = [&](cplx q, int o) {
        for (auto& ps : poles)
            if (prob.lattice.distToLattice(ps.point - q) < 1e-9 * prob.lattice.shortestPeriod()) {
                ps.maxOrder = std::max(ps.maxOrder, o);
                return;
            }
        poles.push_back({q, o});
    };
    for (const auto& b : prob.basis) {
        if (b.type == PoleBasisElement::Type::wpDeriv) add(b.point, b.derivOrder + 2);
        if (b.type == PoleBasisElement::Type::zetaDiff) {
            add(b.point, 1);
            add(b.anchor, 1);
        }
    }
    std::vector<std::vector<cplx>> out;
    out.reserve(prob.basis.size());
    for (const auto& b : prob.basis) {
        MatrixField f = scalarField(prob.lattice, poles,
                                    [&](cplx z) { return b.eval(prob.lattice, z); });
        LaurentJet jet = expandAt(f, center, minOrder, maxOrder);
        std::vector<cplx> cs;
        for (int k = minOrder; k <= maxOrder; ++k) cs.push_back(jet.coeff(k)(0, 0));
        out.push_back(std::move(cs));
    }
    return out;
}

inline AssembledSystem assemble(const SpaceProblem& prob) {
    const int p = prob.alg.p();
    const int dimAlg = prob.alg.dim();
    const int nb = int(prob.basis.size());
    const auto& X = prob.alg.basis();
    const Matrix& sigma = prob.alg.sigmaMatrix();
    const int eps = prob.alg.epsilon();

    AssembledSystem sys;
    sys.nBasis = nb;
    sys.dimAlg = dimAlg;
    int cols = nb * dimAlg;
    for (const auto& g : prob.gammas) {
        sys.gammaColStart.push_back(cols);
        if (prob.doubleGammaPole) cols += 1;           // nu / lambda
        cols += int(g.muFree.size());                  // beta / mu
        if (prob.lType) cols += 1;                     // kappa
    }
    sys.totalCols = cols;

    std::vector<Eigen::RowVectorXcd> rows;
    auto coefCol = [&](int b, int j) { return b * dimAlg + j; };

    for (std::size_t s = 0; s < prob.gammas.size(); ++s) {
        const auto& g = prob.gammas[s];
        const int base = sys.gammaColStart[s];
        const int nuCol = prob.doubleGammaPole ? base : -1;
        const int muCol = prob.doubleGammaPole ? base + 1 : base;
        const int kappaCol = muCol + int(g.muFree.size());

        const auto jets = scalarJets(prob, g.point, -2, 1);
        auto jetAt = [&](int b, int k) { return jets[std::size_t(b)][std::size_t(k + 2)]; };

        const Vector sa = sigma.transpose() * g.alpha;
        const Matrix S2 = (g.alpha * g.alpha.transpose()) * sigma;

        // Order -2 structure rows.
        if (prob.doubleGammaPole) {
            for (int u = 0; u < p; ++u)
                for (int v = 0; v < p; ++v) {
                    Eigen::RowVectorXcd r = Eigen::RowVectorXcd::Zero(cols);
                    for (int b = 0; b < nb; ++b)
                        for (int j = 0; j < dimAlg; ++j)
                            r(coefCol(b, j)) = jetAt(b, -2) * X[std::size_t(j)](u, v);
                    r(nuCol) = -S2(u, v);
                    rows.push_back(std::move(r));
                }
        }

        // Order -1 structure rows.
        for (int u = 0; u < p; ++u)
            for (int v = 0; v < p; ++v) {
                Eigen::RowVectorXcd r = Eigen::RowVectorXcd::Zero(cols);
                for (int b = 0; b < nb; ++b)
                    for (int j = 0; j < dimAlg; ++j)
                        r(coefCol(b, j)) = jetAt(b, -1) * X[std::size_t(j)](u, v);
                for (std::size_t w = 0; w < g.muFree.size(); ++w) {
                    const int wi = g.muFree[w];
                    cplx coef = g.alpha(u) * sigma(wi, v);
                    if (u == wi) coef += double(eps) * sa(v);
                    r(muCol + int(w)) = -coef;
                }
                rows.push_back(std::move(r));
            }

        if (prob.lType) {
            // beta^t sigma alpha = 0.
            {
                Eigen::RowVectorXcd r = Eigen::RowVectorXcd::Zero(cols);
                for (std::size_t w = 0; w < g.muFree.size(); ++w)
                    r(muCol + int(w)) = (sigma * g.alpha)(g.muFree[w]);
                rows.push_back(std::move(r));
            }
            // L_0 alpha = kappa alpha.
            for (int u = 0; u < p; ++u) {
                Eigen::RowVectorXcd r = Eigen::RowVectorXcd::Zero(cols);
                for (int b = 0; b < nb; ++b)
                    for (int j = 0; j < dimAlg; ++j)
                        r(coefCol(b, j)) = jetAt(b, 0) * (X[std::size_t(j)] * g.alpha)(u);
                r(kappaCol) = -g.alpha(u);
                rows.push_back(std::move(r));
            }
        }

        // beta -> beta + c alpha leaves every structure row unchanged when
        // eps = -1, so fix the representative with conj(alpha)^t beta = 0.
        if (g.pinCovector) {
            Eigen::RowVectorXcd r = Eigen::RowVectorXcd::Zero(cols);
            for (std::size_t w = 0; w < g.muFree.size(); ++w)
                r(muCol + int(w)) = std::conj(g.alpha(g.muFree[w]));
            rows.push_back(std::move(r));
        }

        // alpha^t sigma L_1 alpha = 0 for sp/tsp.
        if (prob.doubleGammaPole) {
            Eigen::RowVectorXcd r = Eigen::RowVectorXcd::Zero(cols);
            for (int b = 0; b < nb; ++b)
                for (int j = 0; j < dimAlg; ++j)
                    r(coefCol(b, j)) =
                        jetAt(b, 1) * (g.alpha.transpose() * sigma * X[std::size_t(j)] * g.alpha)(0);
            rows.push_back(std::move(r));
        }
    }

    // Order conditions at marked points.
    for (const auto& oc : prob.orderConditions) {
        if (oc.requiredOrder <= oc.lowestAnsatzOrder) continue;
        const auto jets = scalarJets(prob, oc.point, oc.lowestAnsatzOrder, oc.requiredOrder - 1);
        for (int k = oc.lowestAnsatzOrder; k < oc.requiredOrder; ++k) {
            for (int u = 0; u < p; ++u)
                for (int v = 0; v < p; ++v) {
                    Eigen::RowVectorXcd r = Eigen::RowVectorXcd::Zero(cols);
                    bool nonzero = false;
                    for (int b = 0; b < nb; ++b) {
                        const cplx jv = jets[std::size_t(b)][std::size_t(k - oc.lowestAnsatzOrder)];
                        if (std::abs(jv) > 1e-14)
                            nonzero = true;
                        for (int j = 0; j < dimAlg; ++j)
                            r(coefCol(b, j)) = jv * X[std::size_t(j)](u, v);
                    }
                    if (nonzero) rows.push_back(std::move(r));
                }
        }
    }

    // Per-element block restrictions (used by the so-variant space).
    for (const auto& br : prob.restrictions) {
        for (const auto& [u, v] : br.zeroEntries) {
            Eigen::RowVectorXcd r = Eigen::RowVectorXcd::Zero(cols);
            for (int j = 0; j < dimAlg; ++j)
                r(coefCol(int(br.basisElement), j)) = X[std::size_t(j)](u, v);
            rows.push_back(std::move(r));
        }
    }

    // Coupled Tyurin velocities: mu_a^t sigma alpha_a + mu_b^t sigma alpha_b = 0.
    for (const auto& [sa_, sb_] : prob.muCouplings) {
        Eigen::RowVectorXcd r = Eigen::RowVectorXcd::Zero(cols);
        for (const std::size_t s : {sa_, sb_}) {
            const auto& g = prob.gammas[s];
            const int muCol = sys.gammaColStart[s] + (prob.doubleGammaPole ? 1 : 0);
            for (std::size_t w = 0; w < g.muFree.size(); ++w)
                r(muCol + int(w)) += (sigma * g.alpha)(g.muFree[w]);
        }
        rows.push_back(std::move(r));
    }

    // Normalize rows and drop the identically-zero ones.
    std::vector<Eigen::RowVectorXcd> kept;
    for (auto& r : rows) {
        const double nrm = r.norm();
        if (nrm > 1e-13) kept.push_back(r / nrm);
    }
    sys.A = Matrix::Zero(Eigen::Index(kept.size()), cols);
    for (std::size_t i = 0; i < kept.size(); ++i) sys.A.row(Eigen::Index(i)) = kept[i];
    return sys;
}

struct NullspaceResult {
    Matrix vectors;  // columns span the nullspace
    std::vector<double> singularValues;
};

inline NullspaceResult nullspace(const Matrix& A, int cols, double tolRank, double gateRatio,
                                 const std::string& label) {
    Eigen::JacobiSVD<Matrix> svd(A, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    const double smax = sv.size() ? sv(0) : 1.0;
    int rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
        if (sv(i) > tolRank * smax) ++rank;
    const int nullity = cols - rank;
    if (rank > 0 && rank <= sv.size() && nullity > 0) {
        const double below = (rank < sv.size()) ? sv(rank) : 0.0;
        const double gap = (below > 0.0) ? sv(rank - 1) / below : 1e300;
        if (gap < gateRatio)
            throw NonGenericTyurinData(label + ": singular-value gap " + std::to_string(gap) +
                                       " below the genericity gate");
    }
    NullspaceResult out;
    out.vectors = svd.matrixV().rightCols(nullity);
    out.singularValues.assign(sv.data(), sv.data() + sv.size());
    return out;
}

inline FunctionSpaceBasis solveProblem(const SpaceProblem& prob, double tolRank,
                                       const std::vector<PoleSpec>& fieldPoles) {
    const AssembledSystem sys = assemble(prob);
    const NullspaceResult ns = nullspace(sys.A, sys.totalCols, tolRank, 1e3, prob.label);

    FunctionSpaceBasis out(prob.alg, prob.lattice);
    out.poleBasis = prob.basis;
    out.fieldPoles = fieldPoles;
    out.dimension = int(ns.vectors.cols());
    out.singularValues = ns.singularValues;
    out.spaceLabel = prob.label;
    const int p = prob.alg.p();
    for (Eigen::Index c = 0; c < ns.vectors.cols(); ++c) {
        std::vector<Matrix> Cs;
        for (int b = 0; b < sys.nBasis; ++b) {
            Matrix Cb = Matrix::Zero(p, p);
            for (int j = 0; j < sys.dimAlg; ++j)
                Cb += ns.vectors(b * sys.dimAlg + j, c) * prob.alg.basis()[std::size_t(j)];
            Cs.push_back(std::move(Cb));
        }
        out.coefficientBasis.push_back(std::move(Cs));
    }
    return out;
}

}  // namespace detail

/// Numerical basis of L^D (L-operators with (L)+D >= 0) or N^D (M-operators
/// valued in the diamond partner, with the gamma-order bumped to 2 in the
/// symplectic case). The auxiliary scalars and covectors at each gamma enter
/// the homogeneous system as extra unknowns, so the reported dimension is the
/// nullity of the combined system.
inline FunctionSpaceBasis solveConstrainedSpace(const AlgebraKind& kind, const Lattice& lat,
                                                const Divisor& D, const TyurinData& T,
                                                SpaceKind space, double tolRank = 1e-8) {
    detail::SpaceProblem prob((space == SpaceKind::ND) ? kind.diamond() : kind, lat);
    prob.doubleGammaPole = detail::doublePoleKind(prob.alg);
    prob.lType = (space == SpaceKind::LD);
    prob.label = (space == SpaceKind::LD ? "L^D " : "N^D ") + prob.alg.name();
    const int gammaOrder = prob.doubleGammaPole ? 2 : 1;

    std::vector<std::pair<cplx, int>> budgets = D.points;
    for (const auto& tp : T.points) budgets.emplace_back(tp.gamma, gammaOrder);
    prob.basis = buildPoleBasis(lat, budgets);

    for (const auto& tp : T.points) {
        detail::GammaSpec g;
        g.point = tp.gamma;
        g.alpha = (space == SpaceKind::ND) ? kind.embedVector(tp.alpha) : tp.alpha;
        g.muFree = detail::covectorMask(prob.alg);
        g.pinCovector = prob.lType && prob.alg.epsilon() == -1;
        prob.gammas.push_back(std::move(g));
    }

    std::vector<PoleSpec> fieldPoles;
    for (const auto& pm : D.points) fieldPoles.push_back({pm.first, pm.second});
    for (const auto& tp : T.points) fieldPoles.push_back({tp.gamma, gammaOrder});
    return detail::solveProblem(prob, tolRank, fieldPoles);
}

/// Homogeneous subspace of degree m: order >= m at P+ and >= -m-1 at P-
/// (genus 1), with the gamma constraints. Solved with the direct order
/// conditions for every kind; the gl split into scalars + traceless is
/// automatic since both conditions are linear.
inline FunctionSpaceBasis gradedSubspace(const AlgebraKind& kind, const Lattice& lat, int m,
                                         cplx Pplus, cplx Pminus, const TyurinData& T,
                                         double tolRank = 1e-8) {
    detail::SpaceProblem prob(kind, lat);
    prob.doubleGammaPole = detail::doublePoleKind(kind);
    prob.lType = true;
    prob.label = "graded_" + std::to_string(m) + " " + kind.name();
    const int gammaOrder = prob.doubleGammaPole ? 2 : 1;

    const int budPlus = std::max(0, -m);
    const int budMinus = std::max(0, m + 1);
    std::vector<std::pair<cplx, int>> budgets;
    if (budPlus > 0) budgets.emplace_back(Pplus, budPlus);
    if (budMinus > 0) budgets.emplace_back(Pminus, budMinus);
    for (const auto& tp : T.points) budgets.emplace_back(tp.gamma, gammaOrder);
    prob.basis = buildPoleBasis(lat, budgets);

    prob.orderConditions.push_back({Pplus, -budPlus, m});
    prob.orderConditions.push_back({Pminus, -budMinus, -m - 1});

    for (const auto& tp : T.points)
        prob.gammas.push_back({tp.gamma, tp.alpha, detail::covectorMask(kind),
                               kind.epsilon() == -1});

    std::vector<PoleSpec> fieldPoles;
    if (budPlus > 0) fieldPoles.push_back({Pplus, budPlus});
    if (budMinus > 0) fieldPoles.push_back({Pminus, budMinus});
    for (const auto& tp : T.points) fieldPoles.push_back({tp.gamma, gammaOrder});
    return detail::solveProblem(prob, tolRank, fieldPoles);
}

/// The so(2n) space with poles split between the two pole families: the A and
/// C blocks may only blow up at the q_i (plus D), the B block only at the
/// -q_i, the residues carry the M-operator structure at every pole and the
/// velocities of q_i and -q_i are tied together.
inline FunctionSpaceBasis solveSoVariantSpace(int n, const Lattice& lat, const Divisor& D,
                                              const std::vector<cplx>& q,
                                              const std::vector<Vector>& alphaPlus,
                                              const std::vector<Vector>& alphaMinus,
                                              double tolRank = 1e-8) {
    if (int(q.size()) != n || int(alphaPlus.size()) != n || int(alphaMinus.size()) != n)
        throw error("solveSoVariantSpace: need n pole pairs with their alphas");
    detail::SpaceProblem prob(AlgebraKind::so(2 * n), lat);
    prob.doubleGammaPole = false;
    prob.lType = false;
    prob.label = "so-variant N^D so(" + std::to_string(2 * n) + ")";

    std::vector<std::pair<cplx, int>> budgets = D.points;
    for (const auto& qi : q) budgets.emplace_back(qi, 1);
    for (const auto& qi : q) budgets.emplace_back(-qi, 1);
    prob.basis = buildPoleBasis(lat, budgets);

    // Which basis elements touch a plus / minus pole.
    auto near = [&](cplx a, cplx b) {
        return lat.distToLattice(a - b) < 1e-9 * lat.shortestPeriod();
    };
    for (std::size_t b = 0; b < prob.basis.size(); ++b) {
        const auto& el = prob.basis[b];
        if (el.type == PoleBasisElement::Type::constant) continue;
        bool plus = false, minus = false;
        auto classify = [&](cplx pt) {
            for (const auto& qi : q) {
                if (near(pt, qi)) plus = true;
                if (near(pt, -qi)) minus = true;
            }
        };
        classify(el.point);
        if (el.type == PoleBasisElement::Type::zetaDiff) classify(el.anchor);
        detail::BlockRestriction br;
        br.basisElement = b;
        if (plus) {
            // No B-block content on elements with poles at the q_i.
            for (int u = 0; u < n; ++u)
                for (int v = 0; v < n; ++v) br.zeroEntries.emplace_back(u, v + n);
        }
        if (minus) {
            // Only B-block content on elements with poles at the -q_i.
            for (int u = 0; u < 2 * n; ++u)
                for (int v = 0; v < 2 * n; ++v)
                    if (!(u < n && v >= n)) br.zeroEntries.emplace_back(u, v);
        }
        if (!br.zeroEntries.empty()) prob.restrictions.push_back(std::move(br));
    }

    const auto full = detail::fullMask(2 * n);
    std::vector<int> lowerMask;
    for (int i = 0; i < n; ++i) lowerMask.push_back(i);
    for (int i = 0; i < n; ++i)
        prob.gammas.push_back({q[std::size_t(i)], alphaPlus[std::size_t(i)], full, false});
    for (int i = 0; i < n; ++i)
        prob.gammas.push_back({-q[std::size_t(i)], alphaMinus[std::size_t(i)], lowerMask, true});
    for (int i = 0; i < n; ++i)
        prob.muCouplings.emplace_back(std::size_t(i), std::size_t(n + i));

    std::vector<PoleSpec> fieldPoles;
    for (const auto& pm : D.points) fieldPoles.push_back({pm.first, pm.second});
    for (const auto& qi : q) {
        fieldPoles.push_back({qi, 1});
        fieldPoles.push_back({-qi, 1});
    }
    return detail::solveProblem(prob, tolRank, fieldPoles);
}

}  // namespace ellax
