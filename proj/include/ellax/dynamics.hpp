#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "ellax/cmsystems.hpp"
#include "ellax/numeric.hpp"

namespace ellax {

using HamiltonianFn = std::function<cplx(const PhaseState&)>;
using VectorFieldFn =
    std::function<void(const PhaseState&, std::vector<cplx>&, std::vector<cplx>&)>;

// ---------------------------------------------------------------------------
// Hamiltonian vector fields
// ---------------------------------------------------------------------------

enum class GradientMode { analytic, finiteDifference };

/// Canonical vector field qdot_i = dH/dp_i, pdot_i = -dH/dq_i. The analytic
/// mode covers the closed-form Calogero-Moser Hamiltonians through wpPrime;
/// the finite-difference mode works for any evaluator (central differences
/// with a real step, which is the holomorphic derivative for analytic H).
inline VectorFieldFn analyticCMField(CMKind kind, const CouplingData& c) {
    return [kind, c](const PhaseState& s, std::vector<cplx>& qdot, std::vector<cplx>& pdot) {
        const Lattice& lat = s.lattice;
        const int n = s.n;
        qdot.assign(std::size_t(n), 0.0);
        pdot.assign(std::size_t(n), 0.0);
        const double pfac = (kind == CMKind::gl) ? 1.0 : 2.0;
        for (int i = 0; i < n; ++i) qdot[std::size_t(i)] = -pfac * s.p[std::size_t(i)];
        for (int i = 0; i < n; ++i) {
            cplx grad = 0.0;  // dH/dq_i
            for (int j = 0; j < n; ++j) {
                if (j == i) continue;
                const cplx d = s.q[std::size_t(i)] - s.q[std::size_t(j)];
                grad += (kind == CMKind::gl ? 1.0 : 2.0) * lat.wpPrime(d);
                if (kind != CMKind::gl)
                    grad += 2.0 * lat.wpPrime(s.q[std::size_t(i)] + s.q[std::size_t(j)]);
            }
            if (kind == CMKind::sp2n)
                grad += 2.0 * c.epsilonSP * lat.wpPrime(2.0 * s.q[std::size_t(i)]);
            pdot[std::size_t(i)] = -grad;
        }
    };
}

inline VectorFieldFn finiteDifferenceField(const HamiltonianFn& H, double h = 1e-5,
                                           bool paired = false) {
    return [H, h, paired](const PhaseState& s, std::vector<cplx>& qdot, std::vector<cplx>& pdot) {
        const int n = s.n;
        qdot.assign(std::size_t(n), 0.0);
        pdot.assign(std::size_t(n), 0.0);
        PhaseState probe = s;
        auto paircheck = [&](const PhaseState& st) {
            if (st.minSeparation(paired) < 1e-4 * st.lattice.shortestPeriod())
                throw StencilHitsPole("finiteDifferenceField: stencil point near a collision");
        };
        for (int i = 0; i < n; ++i) {
            probe = s;
            probe.q[std::size_t(i)] = s.q[std::size_t(i)] + h;
            paircheck(probe);
            const cplx Hqp = H(probe);
            probe.q[std::size_t(i)] = s.q[std::size_t(i)] - h;
            paircheck(probe);
            const cplx Hqm = H(probe);
            pdot[std::size_t(i)] = -(Hqp - Hqm) / (2.0 * h);

            probe = s;
            probe.p[std::size_t(i)] = s.p[std::size_t(i)] + h;
            const cplx Hpp = H(probe);
            probe.p[std::size_t(i)] = s.p[std::size_t(i)] - h;
            const cplx Hpm = H(probe);
            qdot[std::size_t(i)] = (Hpp - Hpm) / (2.0 * h);
        }
    };
}

inline VectorFieldFn hamiltonVectorField(CMKind kind, const CouplingData& c, GradientMode mode,
                                         const HamiltonianFn& H = {}) {
    if (mode == GradientMode::analytic) return analyticCMField(kind, c);
    if (!H) throw error("hamiltonVectorField: finite-difference mode needs an evaluator");
    return finiteDifferenceField(H);
}

// ---------------------------------------------------------------------------
// Integration
// ---------------------------------------------------------------------------

struct MonitorRecord {
    double t = 0.0;
    cplx H{};
    std::vector<cplx> invariants;
};

struct Trajectory {
    std::vector<double> times;
    std::vector<PhaseState> states;
    std::string method = "rk4";
    double dt = 0.0;
    std::vector<MonitorRecord> monitors;
};

struct IntegrateOptions {
    double collisionTol = 1e-3;  // fraction of the shortest period
    bool paired = false;
    HamiltonianFn monitorH;
    std::function<std::vector<cplx>(const PhaseState&)> monitorInvariants;
    int monitorStride = 1;
};

/// Classical RK4 on the complexified phase space, with per-step collision and
/// NaN guards and optional conserved-quantity monitors.
inline Trajectory integrate(const PhaseState& s0, const VectorFieldFn& field, double T, double dt,
                            const IntegrateOptions& opt = {}) {
    if (!(dt > 0.0)) throw error("integrate: dt must be positive");
    const int n = s0.n;
    const std::size_t steps = std::size_t(std::llround(T / dt));
    Trajectory traj;
    traj.dt = dt;
    PhaseState s = s0;

    auto record = [&](double t) {
        traj.times.push_back(t);
        traj.states.push_back(s);
        if (opt.monitorH || opt.monitorInvariants) {
            MonitorRecord mr;
            mr.t = t;
            if (opt.monitorH) mr.H = opt.monitorH(s);
            if (opt.monitorInvariants) mr.invariants = opt.monitorInvariants(s);
            traj.monitors.push_back(std::move(mr));
        }
    };

    std::vector<cplx> k1q, k1p, k2q, k2p, k3q, k3p, k4q, k4p;
    PhaseState tmp = s0;
    record(0.0);
    for (std::size_t step = 0; step < steps; ++step) {
        field(s, k1q, k1p);
        tmp = s;
        for (int i = 0; i < n; ++i) {
            tmp.q[std::size_t(i)] = s.q[std::size_t(i)] + 0.5 * dt * k1q[std::size_t(i)];
            tmp.p[std::size_t(i)] = s.p[std::size_t(i)] + 0.5 * dt * k1p[std::size_t(i)];
        }
        field(tmp, k2q, k2p);
        for (int i = 0; i < n; ++i) {
            tmp.q[std::size_t(i)] = s.q[std::size_t(i)] + 0.5 * dt * k2q[std::size_t(i)];
            tmp.p[std::size_t(i)] = s.p[std::size_t(i)] + 0.5 * dt * k2p[std::size_t(i)];
        }
        field(tmp, k3q, k3p);
        for (int i = 0; i < n; ++i) {
            tmp.q[std::size_t(i)] = s.q[std::size_t(i)] + dt * k3q[std::size_t(i)];
            tmp.p[std::size_t(i)] = s.p[std::size_t(i)] + dt * k3p[std::size_t(i)];
        }
        field(tmp, k4q, k4p);
        for (int i = 0; i < n; ++i) {
            s.q[std::size_t(i)] += dt / 6.0 *
                                   (k1q[std::size_t(i)] + 2.0 * k2q[std::size_t(i)] +
                                    2.0 * k3q[std::size_t(i)] + k4q[std::size_t(i)]);
            s.p[std::size_t(i)] += dt / 6.0 *
                                   (k1p[std::size_t(i)] + 2.0 * k2p[std::size_t(i)] +
                                    2.0 * k3p[std::size_t(i)] + k4p[std::size_t(i)]);
        }
        for (int i = 0; i < n; ++i)
            if (!std::isfinite(s.q[std::size_t(i)].real()) || !std::isfinite(s.q[std::size_t(i)].imag()) ||
                !std::isfinite(s.p[std::size_t(i)].real()) || !std::isfinite(s.p[std::size_t(i)].imag()))
                throw StepRejected("integrate: non-finite state at t = " +
                                   std::to_string(double(step + 1) * dt));
        if (s.minSeparation(opt.paired) < opt.collisionTol * s.lattice.shortestPeriod())
            throw CollisionDetected("integrate: pole collision at t = " +
                                    std::to_string(double(step + 1) * dt));
        if ((step + 1) % std::size_t(std::max(1, opt.monitorStride)) == 0 || step + 1 == steps)
            record(double(step + 1) * dt);
    }
    return traj;
}

// ---------------------------------------------------------------------------
// Spectral invariants
// ---------------------------------------------------------------------------

/// Characteristic-polynomial data of L(z) from traces via Newton identities:
/// e_k with det(L - x) = (-1)^p (x^p - e_1 x^{p-1} + e_2 x^{p-2} - ...).
inline std::vector<cplx> charPolyFromTraces(const Matrix& L) {
    const int p = int(L.rows());
    std::vector<cplx> t(std::size_t(p) + 1);
    Matrix Lk = Matrix::Identity(p, p);
    for (int k = 1; k <= p; ++k) {
        Lk = Lk * L;
        t[std::size_t(k)] = Lk.trace();
    }
    std::vector<cplx> e(std::size_t(p) + 1);
    e[0] = 1.0;
    for (int k = 1; k <= p; ++k) {
        cplx acc = 0.0;
        for (int i = 1; i <= k; ++i) {
            const double sign = (i % 2 == 1) ? 1.0 : -1.0;
            acc += sign * e[std::size_t(k - i)] * t[std::size_t(i)];
        }
        e[std::size_t(k)] = acc / double(k);
    }
    return {e.begin() + 1, e.end()};
}

/// Eigenvalues through the characteristic polynomial (Durand-Kerner roots),
/// avoiding a general eigensolver; fine for the small sizes here.
inline std::vector<cplx> eigenvaluesViaCharPoly(const Matrix& L) {
    const int p = int(L.rows());
    const std::vector<cplx> e = charPolyFromTraces(L);
    // x^p - e1 x^{p-1} + e2 x^{p-2} - ... + (-1)^p e_p: monic coefficient list.
    std::vector<cplx> monic(static_cast<std::size_t>(p));
    for (int k = 1; k <= p; ++k) {
        const double sign = (k % 2 == 1) ? -1.0 : 1.0;
        monic[std::size_t(p - k)] = sign * e[std::size_t(k - 1)];
    }
    return polyRoots(monic);
}

struct SpectralData {
    cplx z;
    std::vector<cplx> charPolyCoeffs;
};

struct DriftReport {
    std::vector<cplx> zSamples;
    // max_t |e_k(z_j, t) - e_k(z_j, 0)| over the trajectory, per z sample and k.
    std::vector<std::vector<double>> drift;
    double maxDrift = 0.0;
};

inline DriftReport spectralInvariantDrift(CMKind kind, const CouplingData& c,
                                          const Trajectory& traj,
                                          const std::vector<cplx>& zSamples) {
    DriftReport rep;
    rep.zSamples = zSamples;
    std::vector<std::vector<cplx>> base;
    for (std::size_t j = 0; j < zSamples.size(); ++j) {
        MatrixField L0 = laxField(kind, traj.states.front(), c);
        base.push_back(charPolyFromTraces(L0.evaluate(zSamples[j])));
        rep.drift.emplace_back(base.back().size(), 0.0);
    }
    for (const auto& s : traj.states) {
        MatrixField L = laxField(kind, s, c);
        for (std::size_t j = 0; j < zSamples.size(); ++j) {
            const auto e = charPolyFromTraces(L.evaluate(zSamples[j]));
            for (std::size_t k = 0; k < e.size(); ++k) {
                const double d = std::abs(e[k] - base[j][k]);
                rep.drift[j][k] = std::max(rep.drift[j][k], d);
                rep.maxDrift = std::max(rep.maxDrift, d);
            }
        }
    }
    return rep;
}

struct HolomorphyScan {
    cplx center;
    double radius = 0.0;
    double maxEntry = 0.0;       // max |L entry| seen on the circle
    double maxEig = 0.0;         // max eigenvalue magnitude on the circle
    double extrapolatedEig = 0.0;  // linear extrapolation of max |eig| to r = 0
};

/// Traces the eigenvalue set of L(z) on a small circle around a gamma-point:
/// the entries blow up while the spectrum stays regular. The regular value at
/// the center is estimated by linear extrapolation from radii r and r/2.
inline HolomorphyScan spectrumHolomorphyScan(const MatrixField& lax, cplx center,
                                             double radius = 1e-2, int samples = 16) {
    HolomorphyScan scan;
    scan.center = center;
    scan.radius = radius;
    double maxR = 0.0, maxR2 = 0.0;
    for (int j = 0; j < samples; ++j) {
        const cplx w = std::exp(kI * (2.0 * kPi * double(j) / double(samples)));
        for (int lvl = 0; lvl < 2; ++lvl) {
            const double r = (lvl == 0) ? radius : radius / 2.0;
            const Matrix L = lax.evaluate(center + r * w);
            double m = 0.0;
            for (const cplx& ev : eigenvaluesViaCharPoly(L)) m = std::max(m, std::abs(ev));
            if (lvl == 0) {
                scan.maxEntry = std::max(scan.maxEntry, L.cwiseAbs().maxCoeff());
                maxR = std::max(maxR, m);
            } else {
                maxR2 = std::max(maxR2, m);
            }
        }
    }
    scan.maxEig = maxR;
    scan.extrapolatedEig = 2.0 * maxR2 - maxR;
    return scan;
}

}  // namespace ellax
