#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ellax/localfield.hpp"
#include "oracles.hpp"

using namespace ellax;

namespace {
Lattice squareLattice() { return Lattice(cplx(0.5, 0.0), cplx(0.0, 0.5)); }
}  // namespace

TEST_CASE("simple pole: c_{-1} = Id, everything else vanishes") {
    Lattice lat = squareLattice();
    const cplx c{0.11, 0.07};
    MatrixField f(2, AlgebraKind::gl(2), lat, {{c, 1}}, [c](cplx z) {
        return Matrix((1.0 / (z - c)) * Matrix::Identity(2, 2));
    });
    // Note: this f is not elliptic, but the expansion is purely local.
    auto jet = expandAt(f, c, -2, 2, 0.1, 256);
    CHECK((jet.coeff(-1) - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(jet.coeff(-2).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(jet.coeff(0).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(jet.coeff(2).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("holomorphic field has no negative coefficients") {
    Lattice lat = squareLattice();
    MatrixField f(2, AlgebraKind::gl(2), lat, {}, [&lat](cplx z) {
        Matrix m(2, 2);
        m << std::exp(z), z * z, cplx(1.0), std::cos(z);
        return m;
    });
    auto jet = expandAt(f, cplx(0.2, 0.1), -3, 3, 0.2, 256);
    for (int k = -3; k < 0; ++k) CHECK(jet.coeff(k).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((jet.coeff(0) - f.evaluate(cplx(0.2, 0.1))).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("wp jet: c_{-2} = Id, c_{-1} = c_0 = c_1 = 0") {
    Lattice lat = squareLattice();
    const cplx c{-0.13, 0.21};
    MatrixField f(2, AlgebraKind::gl(2), lat, {{c, 2}}, [&lat, c](cplx z) {
        return Matrix(lat.wp(z - c) * Matrix::Identity(2, 2));
    });
    auto jet = expandAt(f, c, -2, 2, 0.0, 256);
    CHECK((jet.coeff(-2) - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(jet.coeff(-1).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(jet.coeff(0).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(jet.coeff(1).cwiseAbs().maxCoeff() < 1e-10);
    // c_2 = g2/20 for the expansion of wp at its pole.
    CHECK((jet.coeff(2) - (lat.g2() / 20.0) * Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() <
          1e-9 * std::max(1.0, std::abs(lat.g2())));
}

TEST_CASE("residues") {
    Lattice lat = squareLattice();
    SUBCASE("1/z") {
        MatrixField f = scalarField(lat, {{cplx(0.0), 1}}, [](cplx z) { return 1.0 / z; });
        CHECK(std::abs(residueAt(f, cplx(0.0))(0, 0) - 1.0) < 1e-12);
    }
    SUBCASE("z^{-1} wp(z) has zero residue at 0") {
        MatrixField f = scalarField(lat, {{cplx(0.0), 3}},
                                    [&lat](cplx z) { return lat.wp(z) / z; });
        CHECK(std::abs(residueAt(f, cplx(0.0))(0, 0)) < 1e-10);
    }
    SUBCASE("zeta difference has residue +1 at its pole") {
        const cplx a{0.2, 0.1}, b{-0.15, -0.2};
        MatrixField f = scalarField(lat, {{a, 1}, {b, 1}}, [&lat, a, b](cplx z) {
            return lat.zeta(z - a) - lat.zeta(z - b);
        });
        CHECK(std::abs(residueAt(f, a)(0, 0) - 1.0) < 1e-10);
        CHECK(std::abs(residueAt(f, b)(0, 0) + 1.0) < 1e-10);
    }
}

TEST_CASE("radius independence") {
    Rng rng(5);
    Lattice lat = oracle::randomLattice(rng);
    const cplx c = oracle::randomCellPoint(rng, lat, 0.2);
    MatrixField f = scalarField(lat, {{c, 2}, {cplx(0.0), 2}}, [&lat, c](cplx z) {
        return lat.wp(z - c) + 0.3 * lat.wp(z);
    });
    const double r = detail::defaultRadius(f, c);
    auto j1 = expandAt(f, c, -2, 3, r, 256);
    auto j2 = expandAt(f, c, -2, 3, r / 2.0, 256);
    for (int k = -2; k <= 3; ++k) {
        const double scale = std::max(1.0, j1.coeff(k).cwiseAbs().maxCoeff());
        CHECK((j1.coeff(k) - j2.coeff(k)).cwiseAbs().maxCoeff() < 1e-9 * scale);
    }
}

TEST_CASE("sample doubling drives the residual to the floor") {
    Lattice lat = squareLattice();
    const cplx c{0.1, 0.05};
    MatrixField f = scalarField(lat, {{c, 2}, {cplx(0.0), 2}}, [&lat, c](cplx z) {
        return lat.wp(z - c) + lat.zeta(z - c) - lat.zeta(z);
    });
    // Radius at 0.4 of the gap: the aliasing level is (r/R)^{N/2}, so each
    // doubling of N divides the residual by (R/r)^{N/2} >= 1e3 from N=16 on.
    const double r = 0.4 * f.distToOtherPoles(c);
    auto j16 = expandAt(f, c, -2, 1, r, 16, 1e+9);
    auto j32 = expandAt(f, c, -2, 1, r, 32, 1e+9);
    auto j256 = expandAt(f, c, -2, 1, r, 256, 1e+9);
    if (j16.residual > 1e-9) CHECK(j32.residual < j16.residual / 1e+3);
    CHECK(j256.residual < 1e-12);
}

TEST_CASE("linearity of jets") {
    Lattice lat = squareLattice();
    const cplx c{0.12, -0.18};
    auto fa = scalarField(lat, {{c, 2}}, [&lat, c](cplx z) { return lat.wp(z - c); });
    auto fb = scalarField(lat, {{c, 1}, {cplx(0.0), 1}},
                          [&lat, c](cplx z) { return lat.zeta(z - c) - lat.zeta(z); });
    const cplx a{1.7, -0.4}, b{0.3, 2.2};
    auto fc = scalarField(lat, {{c, 2}, {cplx(0.0), 1}}, [&, a, b](cplx z) {
        return a * fa.evaluate(z)(0, 0) + b * fb.evaluate(z)(0, 0);
    });
    auto ja = expandAt(fa, c, -2, 2);
    auto jb = expandAt(fb, c, -2, 2);
    auto jc = expandAt(fc, c, -2, 2);
    for (int k = -2; k <= 2; ++k) {
        const Matrix want = a * ja.coeff(k) + b * jb.coeff(k);
        CHECK((jc.coeff(k) - want).cwiseAbs().maxCoeff() <
              1e-12 * std::max(1.0, want.cwiseAbs().maxCoeff()));
    }
}

TEST_CASE("contour hitting a pole is refused") {
    Lattice lat = squareLattice();
    const cplx c{0.0, 0.0};
    MatrixField f = scalarField(lat, {{c, 1}, {cplx(0.1, 0.0), 1}}, [&lat, c](cplx z) {
        return lat.zeta(z) - lat.zeta(z - cplx(0.1, 0.0));
    });
    CHECK_THROWS_AS(expandAt(f, c, -1, 0, 0.1, 256), ContourHitsPole);
}

TEST_CASE("bad sample counts are rejected") {
    Lattice lat = squareLattice();
    MatrixField f = scalarField(lat, {}, [](cplx) { return cplx(1.0); });
    CHECK_THROWS_AS(expandAt(f, cplx(0.0), -8, 8, 0.1, 48), error);
    CHECK_THROWS_AS(expandAt(f, cplx(0.0), -8, 8, 0.1, 32), error);
}
