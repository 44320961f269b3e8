#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ellax/dynamics.hpp"
#include "oracles.hpp"

using namespace ellax;

namespace {

Lattice testLattice() { return Lattice(cplx(0.5, 0.0), cplx(0.03, 0.52)); }

PhaseState randomState(Rng& rng, const Lattice& lat, int n, bool paired,
                       double momentumScale = 1.0) {
    for (int tries = 0; tries < 4000; ++tries) {
        std::vector<cplx> q, p;
        for (int i = 0; i < n; ++i) {
            q.push_back(rng.box(-0.35, 0.35, -0.35, 0.35));
            p.push_back(momentumScale * rng.gaussian());
        }
        PhaseState s(n, q, p, lat);
        if (s.minSeparation(paired) > 0.15 * lat.shortestPeriod()) return s;
    }
    throw error("randomState: could not draw a well-separated state");
}

}  // namespace

TEST_CASE("gl vector field: qdot = -p, symmetric two-body forces opposite") {
    Lattice lat = testLattice();
    PhaseState s(2, {cplx(0.21, 0.03), cplx(-0.21, -0.03)}, {cplx(0.0), cplx(0.0)}, lat);
    CouplingData c;
    auto field = analyticCMField(CMKind::gl, c);
    std::vector<cplx> qd, pd;
    field(s, qd, pd);
    CHECK(std::abs(qd[0]) == 0.0);
    CHECK(std::abs(qd[1]) == 0.0);
    CHECK(std::abs(pd[0] + pd[1]) < 1e-12 * std::max(1.0, std::abs(pd[0])));
    CHECK(std::abs(pd[0] + lat.wpPrime(s.q[0] - s.q[1])) < 1e-12 * std::max(1.0, std::abs(pd[0])));

    s.p = {cplx(0.7, 0.1), cplx(-0.2, 0.4)};
    field(s, qd, pd);
    CHECK(std::abs(qd[0] + s.p[0]) < 1e-14);
    CHECK(std::abs(qd[1] + s.p[1]) < 1e-14);
}

TEST_CASE("analytic and finite-difference gradients agree") {
    Lattice lat = testLattice();
    Rng rng(4);
    for (const CMKind kind : {CMKind::gl, CMKind::so2n, CMKind::sp2n}) {
        CAPTURE(cmKindName(kind));
        const bool paired = kind != CMKind::gl;
        PhaseState s = randomState(rng, lat, 2, paired);
        CouplingData c{kind};
        auto analytic = analyticCMField(kind, c);
        auto fd = finiteDifferenceField(
            [kind, c](const PhaseState& st) { return hamiltonianClosedForm(kind, st, c); }, 1e-5,
            paired);
        std::vector<cplx> qa, pa, qf, pf;
        analytic(s, qa, pa);
        fd(s, qf, pf);
        for (int i = 0; i < s.n; ++i) {
            CHECK(std::abs(qa[std::size_t(i)] - qf[std::size_t(i)]) <
                  1e-7 * std::max(1.0, std::abs(qa[std::size_t(i)])));
            CHECK(std::abs(pa[std::size_t(i)] - pf[std::size_t(i)]) <
                  1e-7 * std::max(1.0, std::abs(pa[std::size_t(i)])));
        }
    }
}

TEST_CASE("free motion is integrated exactly") {
    Lattice lat = testLattice();
    PhaseState s(2, {cplx(0.1, 0.05), cplx(-0.2, -0.1)}, {cplx(0.3, 0.1), cplx(-0.4, 0.2)}, lat);
    auto freeField = [](const PhaseState& st, std::vector<cplx>& qd, std::vector<cplx>& pd) {
        qd.assign(st.q.size(), 0.0);
        pd.assign(st.p.size(), 0.0);
        for (std::size_t i = 0; i < st.q.size(); ++i) qd[i] = -st.p[i];
    };
    auto traj = integrate(s, freeField, 0.5, 1e-2);
    const PhaseState& end = traj.states.back();
    for (int i = 0; i < 2; ++i) {
        const cplx want = s.q[std::size_t(i)] - 0.5 * s.p[std::size_t(i)];
        CHECK(std::abs(end.q[std::size_t(i)] - want) < 1e-13);
        CHECK(std::abs(end.p[std::size_t(i)] - s.p[std::size_t(i)]) < 1e-15);
    }
}

TEST_CASE("energy drift scales as O(dt^4)") {
    // Mid-sized lattice: rough enough that the drift is measurable above
    // roundoff, far enough from collisions that the flow stays smooth.
    Lattice lat(cplx(0.9, 0.0), cplx(0.036, 0.945));
    Rng rng(8);
    auto [q, p] = oracle::tameConfiguration(rng, lat, 3, 0.03, 0.3);
    PhaseState s(3, q, p, lat);
    CouplingData c;
    auto H = [&](const PhaseState& st) { return hamiltonianClosedForm(CMKind::gl, st, c); };
    auto field = analyticCMField(CMKind::gl, c);

    auto driftFor = [&](double dt) {
        IntegrateOptions opt;
        opt.monitorH = H;
        opt.monitorStride = 5;
        auto traj = integrate(s, field, 0.4, dt, opt);
        double drift = 0.0;
        for (const auto& mr : traj.monitors)
            drift = std::max(drift, std::abs(mr.H - traj.monitors.front().H));
        return drift;
    };
    const double d1 = driftFor(8e-3);
    const double d2 = driftFor(4e-3);
    const double d3 = driftFor(2e-3);
    REQUIRE(d1 > 1e-12);  // measurable, not roundoff
    CHECK(d2 < d1 / 8.0);
    CHECK(d3 < d2 / 8.0);
}

TEST_CASE("tight energy conservation on a well-separated state") {
    Lattice lat(cplx(3.0, 0.0), cplx(0.1, 3.1));
    Rng rng(8);
    auto [q, p] = oracle::tameConfiguration(rng, lat, 3, 0.05, 0.08);
    PhaseState s(3, q, p, lat);
    CouplingData c;
    auto H = [&](const PhaseState& st) { return hamiltonianClosedForm(CMKind::gl, st, c); };
    IntegrateOptions opt;
    opt.monitorH = H;
    opt.monitorStride = 20;
    auto traj = integrate(s, analyticCMField(CMKind::gl, c), 1.0, 1e-3, opt);
    double drift = 0.0;
    for (const auto& mr : traj.monitors)
        drift = std::max(drift, std::abs(mr.H - traj.monitors.front().H));
    CHECK(drift < 1e-8 * (1.0 + std::abs(H(s))));
}

TEST_CASE("time reversal: integrate, flip momenta, integrate back") {
    Lattice lat = testLattice();
    Rng rng(12);
    PhaseState s = randomState(rng, lat, 2, false, 0.5);
    CouplingData c;
    auto field = analyticCMField(CMKind::gl, c);
    auto traj = integrate(s, field, 0.4, 1e-3);
    PhaseState mid = traj.states.back();
    for (auto& pi : mid.p) pi = -pi;
    auto back = integrate(mid, field, 0.4, 1e-3);
    const PhaseState& end = back.states.back();
    for (int i = 0; i < 2; ++i) {
        CHECK(std::abs(end.q[std::size_t(i)] - s.q[std::size_t(i)]) < 1e-7);
        CHECK(std::abs(end.p[std::size_t(i)] + s.p[std::size_t(i)]) < 1e-7);
    }
}

TEST_CASE("Newton-identity char-poly matches the direct determinant") {
    Rng rng(16);
    for (int p : {2, 3, 5}) {
        Matrix L(p, p);
        for (int i = 0; i < p; ++i)
            for (int j = 0; j < p; ++j) L(i, j) = rng.gaussian();
        const auto e = charPolyFromTraces(L);
        // det(L - x I) at a probe x, reconstructed from the e_k.
        const cplx x{0.37, -0.21};
        cplx poly = std::pow(x, p);
        for (int k = 1; k <= p; ++k)
            poly += ((k % 2 == 1) ? -1.0 : 1.0) * e[std::size_t(k - 1)] * std::pow(x, p - k);
        const cplx det = (L - x * Matrix::Identity(p, p)).determinant() *
                         ((p % 2 == 1) ? -1.0 : 1.0);
        CHECK(std::abs(poly - det) < 1e-9 * std::max(1.0, std::abs(det)));
        // Sum of eigenvalues from the root finder matches the trace.
        const auto ev = eigenvaluesViaCharPoly(L);
        cplx sum = 0.0;
        for (const auto& v : ev) sum += v;
        CHECK(std::abs(sum - L.trace()) < 1e-8 * std::max(1.0, std::abs(L.trace())));
    }
}

TEST_CASE("isospectral drift along the gl(3) flow") {
    Lattice lat(cplx(3.0, 0.0), cplx(0.1, 3.1));
    Rng rng(20);
    auto [q, p] = oracle::tameConfiguration(rng, lat, 3, 0.05, 0.08);
    PhaseState s(3, q, p, lat);
    CouplingData c;
    auto field = analyticCMField(CMKind::gl, c);
    IntegrateOptions opt;
    opt.monitorStride = 25;
    auto traj = integrate(s, field, 1.0, 1e-3, opt);

    std::vector<cplx> zs;
    while (zs.size() < 5) {
        const cplx z = rng.box(-2.5, 2.5, -2.5, 2.5);
        double d = lat.distToLattice(z);
        bool ok = d > 0.1 * lat.shortestPeriod();
        for (const auto& st : traj.states)
            for (const auto& qi : st.q)
                ok = ok && lat.distToLattice(z - qi) > 0.05 * lat.shortestPeriod();
        if (ok) zs.push_back(z);
    }
    // Thin the states for the drift scan.
    Trajectory thin;
    for (std::size_t i = 0; i < traj.states.size(); i += 4) thin.states.push_back(traj.states[i]);
    thin.states.push_back(traj.states.back());
    const auto rep = spectralInvariantDrift(CMKind::gl, c, thin, zs);
    CHECK(rep.maxDrift < 1e-6);
}

TEST_CASE("tr L(z) is z-independent for gl") {
    Lattice lat = testLattice();
    Rng rng(24);
    PhaseState s = randomState(rng, lat, 3, false);
    CouplingData c;
    MatrixField L = laxField(CMKind::gl, s, c);
    const cplx t0 = L.evaluate(cplx(0.13, 0.21)).trace();
    const cplx t1 = L.evaluate(cplx(-0.2, -0.34)).trace();
    CHECK(std::abs(t0 - t1) < 1e-10 * std::max(1.0, std::abs(t0)));
}

TEST_CASE("spectrum stays holomorphic at the position poles") {
    Lattice lat = testLattice();
    Rng rng(28);
    PhaseState s = randomState(rng, lat, 3, false, 0.6);
    CouplingData c;
    MatrixField L = laxField(CMKind::gl, s, c);
    for (const auto& qi : s.q) {
        const auto scan = spectrumHolomorphyScan(L, qi, 1e-2);
        CHECK(scan.maxEntry > 1e2);
        CHECK(scan.maxEig <= 2.0 * std::abs(scan.extrapolatedEig));
    }
}

TEST_CASE("cross-conservation: residue Hamiltonian conserved along the closed-form flow") {
    Lattice lat(cplx(3.0, 0.0), cplx(0.1, 3.1));
    Rng rng(32);
    auto [q0, p0] = oracle::tameConfiguration(rng, lat, 2, 0.05, 0.1);
    PhaseState s(2, q0, p0, lat);
    CouplingData c;
    auto field = analyticCMField(CMKind::gl, c);
    auto H2 = [&](const PhaseState& st) {
        MatrixField L = laxField(CMKind::gl, st, c);
        return hamiltonianViaResidue(L, 2, 1, cplx(0.0));
    };
    const cplx h0 = H2(s);
    auto traj = integrate(s, field, 1.0, 1e-3);
    const cplx h1 = H2(traj.states.back());
    CHECK(std::abs(h1 - h0) < 1e-7 * (1.0 + std::abs(h0)));
}

TEST_CASE("collision and NaN guards") {
    Lattice lat = testLattice();
    SUBCASE("head-on collision is detected") {
        // Closing speed 1 with dt small enough that a step lands inside the
        // collision window.
        PhaseState s(2, {cplx(0.05, 0.0), cplx(-0.05, 0.0)}, {cplx(0.5, 0.0), cplx(-0.5, 0.0)},
                     lat);
        auto freeField = [](const PhaseState& st, std::vector<cplx>& qd, std::vector<cplx>& pd) {
            qd.assign(st.q.size(), 0.0);
            pd.assign(st.p.size(), 0.0);
            for (std::size_t i = 0; i < st.q.size(); ++i) qd[i] = -st.p[i];
        };
        CHECK_THROWS_AS(integrate(s, freeField, 0.2, 1e-4), CollisionDetected);
    }
    SUBCASE("non-finite step is rejected") {
        PhaseState s(2, {cplx(0.2, 0.0), cplx(-0.2, 0.1)}, {cplx(0.0), cplx(0.0)}, lat);
        auto nanField = [](const PhaseState& st, std::vector<cplx>& qd, std::vector<cplx>& pd) {
            qd.assign(st.q.size(), cplx(std::numeric_limits<double>::quiet_NaN(), 0.0));
            pd.assign(st.p.size(), 0.0);
        };
        CHECK_THROWS_AS(integrate(s, nanField, 0.1, 1e-2), StepRejected);
    }
}
