#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>

#include "ellax/elliptic.hpp"
#include "oracles.hpp"

using namespace ellax;

namespace {
double relErr(cplx got, cplx want) {
    return std::abs(got - want) / std::max(1.0, std::abs(want));
}
}  // namespace

TEST_CASE("square lattice has g3 = 0") {
    Lattice lat(cplx(0.5, 0.0), cplx(0.0, 0.5));
    CHECK(std::abs(lat.g3()) < 1e-12 * std::max(1.0, std::abs(lat.g2())));
    CHECK(std::abs(lat.g2().imag()) < 1e-12 * std::abs(lat.g2()));
    CHECK(lat.g2().real() > 0.0);
}

TEST_CASE("hexagonal lattice has g2 = 0") {
    const cplx omega3 = 0.5 * std::exp(kI * kPi / 3.0);
    Lattice lat(cplx(0.5, 0.0), omega3);
    CHECK(std::abs(lat.g2()) < 1e-12 * std::max(1.0, std::abs(lat.g3())));
}

TEST_CASE("g2, g3 match direct lattice sums on a rectangular lattice") {
    Lattice lat(cplx(0.5, 0.0), cplx(0.0, 0.35));
    const auto direct = oracle::invariantsDirect(lat, 200);
    CHECK(relErr(lat.g2(), direct.g2) < 1e-8);
    CHECK(relErr(lat.g3(), direct.g3) < 1e-8);
}

TEST_CASE("g2, g3 match direct lattice sums on random lattices") {
    Rng rng(42);
    for (int trial = 0; trial < 3; ++trial) {
        Lattice lat = oracle::randomLattice(rng);
        const auto direct = oracle::invariantsDirect(lat, 200);
        CHECK(relErr(lat.g2(), direct.g2) < 1e-8);
        CHECK(relErr(lat.g3(), direct.g3) < 1e-8);
    }
}

TEST_CASE("degenerate period ratio is rejected") {
    CHECK_THROWS_AS(Lattice(cplx(0.5, 0.0), cplx(0.25, 0.0)), DegenerateLattice);
    CHECK_THROWS_AS(Lattice(cplx(0.5, 0.0), cplx(0.0, -0.5)), DegenerateLattice);
}

TEST_CASE("cell reduction") {
    Lattice lat(cplx(0.5, 0.05), cplx(-0.1, 0.6));
    SUBCASE("point already in cell") {
        const cplx z{0.1, 0.12};
        const auto r = lat.reduce(z);
        CHECK(r.m == 0);
        CHECK(r.n == 0);
        CHECK(std::abs(r.z0 - z) < 1e-14);
    }
    SUBCASE("lattice point") {
        const auto r = lat.reduce(2.0 * lat.omega1());
        CHECK(r.m == 1);
        CHECK(r.n == 0);
        CHECK(std::abs(r.z0) < 1e-14);
    }
    SUBCASE("generic multiple rounds to nearest") {
        const cplx z = 3.7 * (2.0 * lat.omega1()) + 1.2 * (2.0 * lat.omega3());
        const auto r = lat.reduce(z);
        CHECK(r.m == 4);
        CHECK(r.n == 1);
        const cplx want = -0.3 * (2.0 * lat.omega1()) + 0.2 * (2.0 * lat.omega3());
        CHECK(std::abs(r.z0 - want) < 1e-12);
    }
}

TEST_CASE("wp matches the direct lattice sum at a frozen point") {
    Lattice lat(cplx(0.5, 0.0), cplx(0.0, 0.5));
    const cplx z{0.31, 0.12};
    const cplx direct = oracle::wpDirect(z, lat, 400);
    CHECK(std::abs(lat.wp(z) - direct) < 1e-9 * std::max(1.0, std::abs(direct)));
}

TEST_CASE("wp matches the direct lattice sum on random lattices") {
    Rng rng(7);
    for (int trial = 0; trial < 3; ++trial) {
        Lattice lat = oracle::randomLattice(rng);
        const cplx z = oracle::randomCellPoint(rng, lat, 0.15);
        const cplx direct = oracle::wpDirect(z, lat, 400);
        CHECK(std::abs(lat.wp(z) - direct) < 1e-9 * std::max(1.0, std::abs(direct)));
    }
}

TEST_CASE("parity: wp even, sigma and zeta odd") {
    Rng rng(3);
    Lattice lat = oracle::randomLattice(rng);
    for (int i = 0; i < 20; ++i) {
        const cplx z = oracle::randomCellPoint(rng, lat);
        CHECK(std::abs(lat.wp(-z) - lat.wp(z)) < 1e-10 * std::max(1.0, std::abs(lat.wp(z))));
        CHECK(std::abs(lat.sigma(-z) + lat.sigma(z)) < 1e-12 * std::max(1.0, std::abs(lat.sigma(z))));
        CHECK(std::abs(lat.zeta(-z) + lat.zeta(z)) < 1e-10 * std::max(1.0, std::abs(lat.zeta(z))));
    }
}

TEST_CASE("wp at a half-period is a root of the Weierstrass cubic") {
    Rng rng(11);
    Lattice lat = oracle::randomLattice(rng);
    for (const cplx w : {lat.omega1(), lat.omega3(), lat.omega1() + lat.omega3()}) {
        const cplx e = lat.wp(w);
        const cplx cubic = 4.0 * e * e * e - lat.g2() * e - lat.g3();
        CHECK(std::abs(cubic) < 1e-9 * std::max(1.0, std::abs(e * e * e)));
        // Critical point of wp, so wpPrime vanishes there.
        CHECK(std::abs(lat.wpPrime(w)) < 1e-8 * std::max(1.0, std::abs(e)));
    }
}

TEST_CASE("differential equation wp'^2 = 4 wp^3 - g2 wp - g3") {
    Rng rng(17);
    for (int trial = 0; trial < 4; ++trial) {
        Lattice lat = oracle::randomLattice(rng);
        for (int i = 0; i < 100; ++i) {
            const cplx z = oracle::randomCellPoint(rng, lat, 0.08);
            const cplx p = lat.wp(z), pp = lat.wpPrime(z);
            const cplx lhs = pp * pp;
            const cplx rhs = 4.0 * p * p * p - lat.g2() * p - lat.g3();
            CHECK(std::abs(lhs - rhs) < 1e-10 * std::max(1.0, std::abs(p * p * p)));
        }
    }
}

TEST_CASE("sigma product identity") {
    Rng rng(23);
    for (int trial = 0; trial < 3; ++trial) {
        Lattice lat = oracle::randomLattice(rng);
        for (int i = 0; i < 50; ++i) {
            const cplx z = oracle::randomCellPoint(rng, lat);
            const cplx a = oracle::randomCellPoint(rng, lat);
            if (lat.distToLattice(z - a) < 0.05 * lat.shortestPeriod()) continue;
            if (lat.distToLattice(z + a) < 0.05 * lat.shortestPeriod()) continue;
            const cplx lhs = lat.sigma(z + a) * lat.sigma(z - a) /
                             (lat.sigma(z) * lat.sigma(z) * lat.sigma(a) * lat.sigma(a));
            const cplx rhs = lat.wp(a) - lat.wp(z);
            CHECK(std::abs(lhs - rhs) < 1e-9 * std::max(1.0, std::abs(rhs)));
        }
    }
}

TEST_CASE("periodicity of wp and quasi-periodicity of sigma, zeta") {
    Rng rng(29);
    Lattice lat = oracle::randomLattice(rng);
    for (int i = 0; i < 20; ++i) {
        const cplx z = oracle::randomCellPoint(rng, lat);
        const cplx p = lat.wp(z);
        CHECK(std::abs(lat.wp(z + 2.0 * lat.omega1()) - p) < 1e-10 * std::max(1.0, std::abs(p)));
        CHECK(std::abs(lat.wp(z + 2.0 * lat.omega3()) - p) < 1e-10 * std::max(1.0, std::abs(p)));
        CHECK(std::abs(lat.wpPrime(z + 2.0 * lat.omega1()) - lat.wpPrime(z)) <
              1e-10 * std::max(1.0, std::abs(lat.wpPrime(z))));

        const cplx sShift = lat.sigma(z + 2.0 * lat.omega1());
        const cplx sWant = -lat.sigma(z) * std::exp(2.0 * lat.eta1() * (z + lat.omega1()));
        CHECK(std::abs(sShift - sWant) < 1e-10 * std::max(1.0, std::abs(sWant)));

        const cplx zShift = lat.zeta(z + 2.0 * lat.omega1());
        CHECK(std::abs(zShift - lat.zeta(z) - 2.0 * lat.eta1()) <
              1e-10 * std::max(1.0, std::abs(zShift)));
    }
}

TEST_CASE("log-derivative chain: (log sigma)' = zeta, zeta' = -wp") {
    Rng rng(31);
    Lattice lat = oracle::randomLattice(rng);
    const double h = 1e-5;
    for (int i = 0; i < 20; ++i) {
        const cplx z = oracle::randomCellPoint(rng, lat);
        const cplx dLogSigma =
            (std::log(lat.sigma(z + h)) - std::log(lat.sigma(z - h))) / (2.0 * h);
        CHECK(std::abs(dLogSigma - lat.zeta(z)) < 1e-6 * std::max(1.0, std::abs(lat.zeta(z))));
        const cplx dZeta = (lat.zeta(z + h) - lat.zeta(z - h)) / (2.0 * h);
        CHECK(std::abs(dZeta + lat.wp(z)) < 1e-6 * std::max(1.0, std::abs(lat.wp(z))));
    }
}

TEST_CASE("Legendre relation and eta constants from the series") {
    Rng rng(37);
    Lattice lat = oracle::randomLattice(rng);
    const cplx legendre = lat.eta1() * lat.omega3() - lat.eta3() * lat.omega1();
    CHECK(std::abs(legendre - kI * kPi / 2.0) < 1e-12);
    // zeta at the half-periods reproduces the stored constants; eta3 is the
    // genuinely independent check since it enters through the Legendre relation.
    CHECK(std::abs(lat.zeta(lat.omega1()) - lat.eta1()) < 1e-10 * std::max(1.0, std::abs(lat.eta1())));
    CHECK(std::abs(lat.zeta(lat.omega3()) - lat.eta3()) < 1e-10 * std::max(1.0, std::abs(lat.eta3())));
}

TEST_CASE("pole guard throws near lattice points") {
    Lattice lat(cplx(0.5, 0.0), cplx(0.0, 0.5));
    CHECK_THROWS_AS(lat.wp(cplx(1e-12, 0.0)), PoleAtLatticePoint);
    CHECK_THROWS_AS(lat.zeta(2.0 * lat.omega1() + cplx(1e-11, 0.0)), PoleAtLatticePoint);
    CHECK_NOTHROW(lat.sigma(cplx(0.0, 0.0)));
    CHECK(std::abs(lat.sigma(cplx(0.0, 0.0))) < 1e-14);
}

TEST_CASE("sigma behaves like z near the origin") {
    Rng rng(41);
    Lattice lat = oracle::randomLattice(rng);
    for (double t : {1e-3, 1e-4}) {
        const cplx z{t, 0.7 * t};
        CHECK(std::abs(lat.sigma(z) - z) < 1e-8 * std::abs(z));
    }
}
