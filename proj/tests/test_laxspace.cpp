#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ellax/laxspace.hpp"
#include "oracles.hpp"

using namespace ellax;

namespace {

Lattice testLattice() { return Lattice(cplx(0.5, 0.02), cplx(-0.04, 0.55)); }

Divisor simpleDivisor(const Lattice& lat, int deg = 1) {
    Divisor D;
    D.points.emplace_back(cplx(0.0), deg);
    return D;
}

}  // namespace

TEST_CASE("algebra kinds: dimensions, sigma symmetry, epsilon") {
    CHECK(AlgebraKind::gl(3).dim() == 9);
    CHECK(AlgebraKind::sl(3).dim() == 8);
    CHECK(AlgebraKind::scalars(4).dim() == 1);
    CHECK(AlgebraKind::so(4).dim() == 6);
    CHECK(AlgebraKind::so(5).dim() == 10);
    CHECK(AlgebraKind::sp(2).dim() == 3);
    CHECK(AlgebraKind::sp(4).dim() == 10);
    CHECK(AlgebraKind::tsp(2).dim() == 6);   // (2n+1)(n+1) at n=1
    CHECK(AlgebraKind::tsp(4).dim() == 15);  // n=2

    CHECK(AlgebraKind::gl(2).epsilon() == 0);
    CHECK(AlgebraKind::so(4).epsilon() == -1);
    CHECK(AlgebraKind::sp(2).epsilon() == 1);
    CHECK(AlgebraKind::tsp(2).epsilon() == 1);

    const auto so4 = AlgebraKind::so(4);
    CHECK((so4.sigmaMatrix() - so4.sigmaMatrix().transpose()).cwiseAbs().maxCoeff() == 0.0);
    const auto sp2 = AlgebraKind::sp(2);
    CHECK((sp2.sigmaMatrix() + sp2.sigmaMatrix().transpose()).cwiseAbs().maxCoeff() == 0.0);

    for (const auto& B : so4.basis()) CHECK(so4.membershipResidual(B) < 1e-12);
    for (const auto& B : AlgebraKind::tsp(2).basis())
        CHECK(AlgebraKind::tsp(2).membershipResidual(B) < 1e-12);
}

TEST_CASE("diamond partners and embeddings") {
    CHECK(AlgebraKind::gl(3).diamond() == AlgebraKind::gl(3));
    CHECK(AlgebraKind::sl(3).diamond() == AlgebraKind::gl(3));
    CHECK(AlgebraKind::so(4).diamond() == AlgebraKind::so(5));
    CHECK(AlgebraKind::sp(2).diamond() == AlgebraKind::tsp(2));

    const auto so4 = AlgebraKind::so(4);
    const auto so5 = so4.diamond();
    Rng rng(2);
    Matrix X = Matrix::Zero(4, 4);
    for (const auto& B : so4.basis()) X += rng.gaussian() * B;
    CHECK(so5.membershipResidual(so4.embedMatrix(X)) < 1e-12);

    const auto sp2 = AlgebraKind::sp(2);
    Matrix Y = Matrix::Zero(2, 2);
    for (const auto& B : sp2.basis()) Y += rng.gaussian() * B;
    CHECK(AlgebraKind::tsp(2).membershipResidual(sp2.embedMatrix(Y)) < 1e-12);
}

TEST_CASE("random Tyurin alphas satisfy the kind constraints") {
    Rng rng(9);
    const auto so6 = AlgebraKind::so(6);
    for (int i = 0; i < 10; ++i) {
        const Vector a = TyurinData::randomAlpha(so6, rng);
        CHECK(std::abs((a.transpose() * so6.sigmaMatrix() * a)(0)) < 1e-12);
        CHECK(std::abs(a.norm() - 1.0) < 1e-12);
    }
    const auto tsp2 = AlgebraKind::tsp(2);
    const Vector at = TyurinData::randomAlpha(tsp2, rng);
    CHECK(std::abs(at(3)) == 0.0);
}

TEST_CASE("pole basis families match the classical counts") {
    Lattice lat = testLattice();
    SUBCASE("single double point") {
        auto fam = buildPoleBasis(lat, {{cplx(0.0), 2}});
        CHECK(fam.size() == 2);
        CHECK(fam[0].type == PoleBasisElement::Type::constant);
        CHECK(fam[1].type == PoleBasisElement::Type::wpDeriv);
    }
    SUBCASE("two simple points") {
        auto fam = buildPoleBasis(lat, {{cplx(0.0), 1}, {cplx(0.2, 0.1), 1}});
        CHECK(fam.size() == 2);
        CHECK(fam[1].type == PoleBasisElement::Type::zetaDiff);
    }
    SUBCASE("one triple point") {
        auto fam = buildPoleBasis(lat, {{cplx(0.0), 3}});
        CHECK(fam.size() == 3);
        CHECK(fam[2].derivOrder == 1);
    }
    SUBCASE("coinciding poles are rejected") {
        CHECK_THROWS_AS(buildPoleBasis(lat, {{cplx(0.0), 1}, {2.0 * lat.omega1(), 1}}),
                        DegenerateConfiguration);
    }
}

TEST_CASE("dimension formulas at genus 1") {
    Lattice lat = testLattice();
    Rng rng(101);
    struct Row {
        AlgebraKind kind;
        int dimG, dimDiamond;
    };
    const std::vector<Row> rows = {{AlgebraKind::gl(2), 4, 4},
                                   {AlgebraKind::gl(3), 9, 9},
                                   {AlgebraKind::so(4), 6, 10},
                                   {AlgebraKind::sp(2), 3, 6}};
    for (const auto& row : rows) {
        CAPTURE(row.kind.name());
        for (int config = 0; config < 2; ++config) {
            Divisor D = simpleDivisor(lat);
            TyurinData T = TyurinData::random(row.kind, lat, rng, D.support());
            const auto LD = solveConstrainedSpace(row.kind, lat, D, T, SpaceKind::LD);
            CHECK(LD.dimension == row.dimG * D.degree());
            const auto ND = solveConstrainedSpace(row.kind, lat, D, T, SpaceKind::ND);
            CHECK(ND.dimension == row.dimDiamond * (D.degree() + 1));
        }
    }
}

TEST_CASE("dimension formulas with a degree-2 divisor") {
    Lattice lat = testLattice();
    Rng rng(55);
    Divisor D;
    D.points.emplace_back(cplx(0.0), 2);
    const auto kind = AlgebraKind::gl(2);
    TyurinData T = TyurinData::random(kind, lat, rng, D.support());
    CHECK(solveConstrainedSpace(kind, lat, D, T, SpaceKind::LD).dimension == 8);
    CHECK(solveConstrainedSpace(kind, lat, D, T, SpaceKind::ND).dimension == 12);

    Divisor D2;
    D2.points.emplace_back(cplx(0.0), 1);
    D2.points.emplace_back(cplx(0.21, 0.18), 1);
    TyurinData T2 = TyurinData::random(kind, lat, rng, D2.support());
    CHECK(solveConstrainedSpace(kind, lat, D2, T2, SpaceKind::LD).dimension == 8);
}

TEST_CASE("graded subspaces have dim g for m in -2..2") {
    Lattice lat = testLattice();
    Rng rng(77);
    const cplx Pplus{0.0, 0.0};
    const cplx Pminus{0.24, 0.21};
    for (const auto& kind : {AlgebraKind::gl(2), AlgebraKind::so(4), AlgebraKind::sp(2)}) {
        CAPTURE(kind.name());
        TyurinData T = TyurinData::random(kind, lat, rng, {Pplus, Pminus});
        for (int m = -2; m <= 2; ++m) {
            CAPTURE(m);
            const auto G = gradedSubspace(kind, lat, m, Pplus, Pminus, T);
            CHECK(G.dimension == kind.dim());
        }
    }
}

TEST_CASE("so-variant space dimension") {
    Lattice lat = testLattice();
    Rng rng(31);
    const int n = 2;
    Divisor D = simpleDivisor(lat);
    std::vector<cplx> q;
    for (int i = 0; i < n; ++i) {
        cplx qi;
        bool ok = false;
        while (!ok) {
            qi = rng.box(-0.4, 0.4, -0.4, 0.4);
            ok = lat.distToLattice(qi) > 0.15 * lat.shortestPeriod() &&
                 lat.distToLattice(2.0 * qi) > 0.1 * lat.shortestPeriod();
            for (const auto& qj : q) {
                ok = ok && lat.distToLattice(qi - qj) > 0.12 * lat.shortestPeriod();
                ok = ok && lat.distToLattice(qi + qj) > 0.12 * lat.shortestPeriod();
            }
        }
        q.push_back(qi);
    }
    std::vector<Vector> aPlus, aMinus;
    for (int i = 0; i < n; ++i) {
        Vector a(2 * n);
        for (int k = 0; k < 2 * n; ++k) a(k) = rng.gaussian();
        aPlus.push_back(a.normalized());
        Vector b = Vector::Zero(2 * n);
        for (int k = 0; k < n; ++k) b(k) = rng.gaussian();
        aMinus.push_back(b.normalized());
    }
    const auto NV = solveSoVariantSpace(n, lat, D, q, aPlus, aMinus);
    CHECK(NV.dimension == AlgebraKind::so(2 * n).dim() * (D.degree() + 1));
}

TEST_CASE("reconstructed basis elements pass their own constraint check") {
    Lattice lat = testLattice();
    Rng rng(13);
    for (const auto& kind : {AlgebraKind::gl(2), AlgebraKind::so(4), AlgebraKind::sp(2)}) {
        CAPTURE(kind.name());
        Divisor D = simpleDivisor(lat);
        TyurinData T = TyurinData::random(kind, lat, rng, D.support());
        const auto LD = solveConstrainedSpace(kind, lat, D, T, SpaceKind::LD);
        for (std::size_t i = 0; i < std::min<std::size_t>(3, LD.coefficientBasis.size()); ++i) {
            MatrixField f = LD.reconstruct(i);
            const auto rep = checkLConstraints(f, T, 1e-8);
            CHECK(rep.pass);
        }
        const auto ND = solveConstrainedSpace(kind, lat, D, T, SpaceKind::ND);
        TyurinData Tdiamond{kind.diamond(), {}};
        for (const auto& tp : T.points)
            Tdiamond.points.push_back({tp.gamma, kind.embedVector(tp.alpha)});
        for (std::size_t i = 0; i < 2; ++i) {
            MatrixField f = ND.reconstruct(i);
            const auto rep = checkMConstraints(f, Tdiamond, 1e-8);
            CHECK(rep.pass);
        }
    }
}

TEST_CASE("closure: commutators of L^D elements satisfy all L-constraints") {
    Lattice lat = testLattice();
    Rng rng(19);
    for (const auto& kind : {AlgebraKind::gl(2), AlgebraKind::so(4)}) {
        CAPTURE(kind.name());
        Divisor D = simpleDivisor(lat);
        TyurinData T = TyurinData::random(kind, lat, rng, D.support());
        const auto LD = solveConstrainedSpace(kind, lat, D, T, SpaceKind::LD);
        REQUIRE(LD.dimension >= 2);
        for (int trial = 0; trial < 5; ++trial) {
            const std::size_t i = rng.integer(std::uint64_t(LD.dimension));
            std::size_t j = rng.integer(std::uint64_t(LD.dimension));
            if (j == i) j = (j + 1) % std::size_t(LD.dimension);
            const auto rep = commutatorClosure(LD.reconstruct(i), LD.reconstruct(j), T, 1e-8);
            CHECK(rep.pass);
        }
    }
}

TEST_CASE("constraint checker diagnoses violations") {
    Lattice lat = testLattice();
    Rng rng(23);
    const auto kind = AlgebraKind::gl(2);
    Divisor D = simpleDivisor(lat);
    TyurinData T = TyurinData::random(kind, lat, rng, D.support());

    SUBCASE("generic constant matrix fails the eigenvector check") {
        Matrix X(2, 2);
        X << 1.0, 2.0, cplx(0.0, 1.0), -0.5;
        MatrixField f(2, kind, lat, {}, [X](cplx) { return X; });
        const auto rep = checkLConstraints(f, T, 1e-8);
        CHECK_FALSE(rep.pass);
        for (const auto& g : rep.gammas) {
            CHECK(g.resOrder1 < 1e-10);
            CHECK(g.resEigen > 1e-3);
        }
    }

    SUBCASE("third-order pole at a gamma point shows up in the excess residual") {
        const cplx g0 = T.points[0].gamma;
        MatrixField f(2, kind, lat, {{g0, 3}}, [&lat, g0](cplx z) {
            return Matrix(lat.wpPrime(z - g0) * Matrix::Identity(2, 2));
        });
        const auto rep = checkMConstraints(f, T, 1e-8);
        CHECK_FALSE(rep.pass);
        CHECK(rep.gammas[0].resExcess > 1e-3);
    }

    SUBCASE("an L-operator is in particular an M-operator") {
        const auto LD = solveConstrainedSpace(kind, lat, D, T, SpaceKind::LD);
        MatrixField f = LD.reconstruct(0);
        CHECK(checkLConstraints(f, T, 1e-8).pass);
        CHECK(checkMConstraints(f, T, 1e-8).pass);
    }
}

TEST_CASE("graded representative: unique element with prescribed leading term") {
    // Existence and uniqueness of X_m comes out of the solve: the graded
    // space has dim g and the leading-coefficient map is invertible on it.
    Lattice lat = testLattice();
    Rng rng(37);
    const auto kind = AlgebraKind::gl(2);
    const cplx Pplus{0.0, 0.0};
    const cplx Pminus{0.24, 0.21};
    TyurinData T = TyurinData::random(kind, lat, rng, {Pplus, Pminus});
    const int m = 1;
    const auto G = gradedSubspace(kind, lat, m, Pplus, Pminus, T);
    REQUIRE(G.dimension == 4);

    // Leading coefficients of the basis at order m span gl(2): solve for the
    // combination with leading term X.
    Matrix lead(4, G.dimension);
    for (int i = 0; i < G.dimension; ++i) {
        MatrixField f = G.reconstruct(std::size_t(i));
        auto jet = expandAt(f, Pplus, m, m + 1);
        lead.col(i) = jet.coeff(m).reshaped();
    }
    Matrix X(2, 2);
    X << 0.3, -1.1, cplx(0.0, 0.7), 2.0;
    Eigen::JacobiSVD<Matrix> svd(lead, Eigen::ComputeThinU | Eigen::ComputeThinV);
    CHECK(svd.singularValues()(3) > 1e-6 * svd.singularValues()(0));  // invertible => unique
    const Vector coef = svd.solve(X.reshaped());

    MatrixField combo(2, kind, lat, G.fieldPoles, [&, coef](cplx z) {
        Matrix acc = Matrix::Zero(2, 2);
        for (int i = 0; i < G.dimension; ++i) {
            Matrix val = Matrix::Zero(2, 2);
            for (std::size_t b = 0; b < G.poleBasis.size(); ++b)
                val += G.coefficientBasis[std::size_t(i)][b] * G.poleBasis[b].eval(lat, z);
            acc += coef(i) * val;
        }
        return acc;
    });
    auto jet = expandAt(combo, Pplus, m, m);
    CHECK((jet.coeff(m) - X).cwiseAbs().maxCoeff() < 1e-7);
    CHECK(checkLConstraints(combo, T, 1e-7).pass);
}
