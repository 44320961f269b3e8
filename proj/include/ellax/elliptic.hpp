#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <vector>

#include "ellax/numeric.hpp"

namespace ellax {

struct CellReduction {
    cplx z0;     // representative in the fundamental cell centered at 0
    long m = 0;  // z = z0 + 2*m*omega1 + 2*n*omega3
    long n = 0;
};

/// A genus-1 curve given by two half-periods, together with everything the
/// Weierstrass functions need: nome, Eisenstein invariants, quasi-period
/// constants and the theta-series coefficient table.
///
/// sigma, zeta, wp, wpPrime are evaluated by reduction to the fundamental
/// cell followed by Jacobi-theta series in v = pi*z/(2*omega1); the series
/// converge geometrically for |nome| < 1. Quasi-periodicity corrections are
/// applied exactly, so sigma and zeta are correct on the whole plane and
/// wp, wpPrime are fully periodic.
///
/// Instances are immutable after construction; all evaluations are const and
/// safe to call concurrently.
class Lattice {
  public:
    static constexpr double tolTau = 1e-6;
    static constexpr double tolPole = 1e-8;  // in units of the shortest period
    static constexpr std::size_t maxTerms = 64;

    Lattice(cplx omega1, cplx omega3) : omega1_(omega1), omega3_(omega3) {
        tau_ = omega3 / omega1;
        if (!(tau_.imag() > tolTau)) {
            throw DegenerateLattice("Im(omega3/omega1) = " + std::to_string(tau_.imag()) +
                                    " is not positive");
        }
        nome_ = std::exp(kI * kPi * tau_);
        tauReduced_ = modularReduce(tau_);
        nomeWarning_ = std::abs(nome_) > 0.9;

        setupTheta();
        setupInvariants();

        shortestPeriod_ = std::abs(2.0 * omega1_);
        shortestPeriod_ = std::min(shortestPeriod_, std::abs(2.0 * omega3_));
        shortestPeriod_ = std::min(shortestPeriod_, std::abs(2.0 * (omega1_ + omega3_)));
        shortestPeriod_ = std::min(shortestPeriod_, std::abs(2.0 * (omega1_ - omega3_)));
    }

    cplx omega1() const { return omega1_; }
    cplx omega3() const { return omega3_; }
    cplx tau() const { return tau_; }
    cplx nome() const { return nome_; }
    cplx g2() const { return g2_; }
    cplx g3() const { return g3_; }
    cplx eta1() const { return eta1_; }
    cplx eta3() const { return eta3_; }
    double shortestPeriod() const { return shortestPeriod_; }
    bool nomeWarning() const { return nomeWarning_; }
    cplx tauReduced() const { return tauReduced_; }

    CellReduction reduce(cplx z) const {
        // Solve z = x*(2 omega1) + y*(2 omega3) over the reals.
        const cplx p1 = 2.0 * omega1_, p2 = 2.0 * omega3_;
        const double det = p1.real() * p2.imag() - p2.real() * p1.imag();
        const double x = (p2.imag() * z.real() - p2.real() * z.imag()) / det;
        const double y = (-p1.imag() * z.real() + p1.real() * z.imag()) / det;
        CellReduction r;
        r.m = static_cast<long>(std::floor(x + 0.5));
        r.n = static_cast<long>(std::floor(y + 0.5));
        r.z0 = z - double(r.m) * p1 - double(r.n) * p2;
        return r;
    }

    /// Distance from z to the nearest lattice point.
    double distToLattice(cplx z) const {
        const CellReduction r = reduce(z);
        double d = std::abs(r.z0);
        // The cell representative may still be closer to a corner translate.
        for (int dm = -1; dm <= 1; ++dm)
            for (int dn = -1; dn <= 1; ++dn)
                d = std::min(d, std::abs(r.z0 - 2.0 * double(dm) * omega1_ -
                                         2.0 * double(dn) * omega3_));
        return d;
    }

    cplx sigma(cplx z) const {
        const CellReduction r = reduce(z);
        const cplx v = kPi * r.z0 / (2.0 * omega1_);
        const Theta t = theta(v, 0);
        cplx s = (2.0 * omega1_ / kPi) * std::exp(eta1_ * r.z0 * r.z0 / (2.0 * omega1_)) *
                 t.T / t1p0_;
        if (r.m != 0 || r.n != 0) {
            const double sign = ((r.m + r.n + r.m * r.n) % 2 == 0) ? 1.0 : -1.0;
            const cplx shift = (2.0 * double(r.m) * eta1_ + 2.0 * double(r.n) * eta3_) *
                               (r.z0 + double(r.m) * omega1_ + double(r.n) * omega3_);
            s *= sign * std::exp(shift);
        }
        return s;
    }

    cplx zeta(cplx z) const {
        const CellReduction r = reduce(z);
        guardPole(r.z0, "zeta");
        const cplx v = kPi * r.z0 / (2.0 * omega1_);
        const Theta t = theta(v, 1);
        return eta1_ * r.z0 / omega1_ + (kPi / (2.0 * omega1_)) * t.T1 / t.T +
               2.0 * double(r.m) * eta1_ + 2.0 * double(r.n) * eta3_;
    }

    cplx wp(cplx z) const {
        const CellReduction r = reduce(z);
        guardPole(r.z0, "wp");
        const cplx v = kPi * r.z0 / (2.0 * omega1_);
        const Theta t = theta(v, 2);
        const cplx c = kPi / (2.0 * omega1_);
        return -eta1_ / omega1_ - c * c * (t.T2 * t.T - t.T1 * t.T1) / (t.T * t.T);
    }

    cplx wpPrime(cplx z) const {
        const CellReduction r = reduce(z);
        guardPole(r.z0, "wpPrime");
        const cplx v = kPi * r.z0 / (2.0 * omega1_);
        const Theta t = theta(v, 3);
        const cplx c = kPi / (2.0 * omega1_);
        return -c * c * c *
               (t.T3 * t.T * t.T - 3.0 * t.T2 * t.T1 * t.T + 2.0 * t.T1 * t.T1 * t.T1) /
               (t.T * t.T * t.T);
    }

    /// j-th derivative of wp, j <= 3. Orders beyond 1 use the differential
    /// equation, staying inside the q-series machinery.
    cplx wpDeriv(int j, cplx z) const {
        switch (j) {
            case 0: return wp(z);
            case 1: return wpPrime(z);
            case 2: {
                const cplx p = wp(z);
                return 6.0 * p * p - 0.5 * g2_;
            }
            case 3: return 12.0 * wp(z) * wpPrime(z);
            default: throw error("wpDeriv: order > 3 not supported");
        }
    }

  private:
    struct Theta {
        cplx T{}, T1{}, T2{}, T3{};
    };

    void guardPole(cplx z0, const char* who) const {
        if (std::abs(z0) < tolPole * shortestPeriod_)
            throw PoleAtLatticePoint(std::string(who) + ": argument within tol_pole of a lattice point");
    }

    static cplx modularReduce(cplx tau) {
        for (int i = 0; i < 64; ++i) {
            tau -= std::floor(tau.real() + 0.5);
            if (std::abs(tau) >= 1.0) break;
            tau = -1.0 / tau;
        }
        return tau;
    }

    void setupTheta() {
        // Coefficients a_n = (-1)^n q^{n(n+1)}; the common factor q^{1/4}
        // cancels in every ratio we use. The term count is fixed so that the
        // tail is below 1e-20 on the whole fundamental cell.
        const double imTau = tau_.imag();
        std::size_t N = static_cast<std::size_t>(std::ceil(std::sqrt(47.0 / (kPi * imTau) + 0.5))) + 2;
        N = std::min(std::max<std::size_t>(N, 4), maxTerms);
        coeff_.resize(N);
        cplx qpow{1.0, 0.0};  // q^{n(n+1)}
        const cplx q2 = nome_ * nome_;
        cplx qstep{1.0, 0.0};
        for (std::size_t n = 0; n < N; ++n) {
            coeff_[n] = (n % 2 == 0) ? qpow : -qpow;
            qstep *= q2;                 // q^{2(n+1)}
            qpow *= qstep;               // q^{(n+1)(n+2)}
        }
        t1p0_ = 0.0;
        t1ppp0_ = 0.0;
        for (std::size_t n = 0; n < N; ++n) {
            const double k = 2.0 * double(n) + 1.0;
            t1p0_ += coeff_[n] * k;
            t1ppp0_ -= coeff_[n] * k * k * k;
        }
    }

    void setupInvariants() {
        eta1_ = -kPi * kPi / (12.0 * omega1_) * (t1ppp0_ / t1p0_);
        eta3_ = (eta1_ * omega3_ - kI * kPi / 2.0) / omega1_;

        const cplx q2 = nome_ * nome_;
        cplx s3 = 0.0, s5 = 0.0, q2k = q2;
        for (std::size_t k = 1; k <= maxTerms; ++k) {
            const double kd = double(k);
            const cplx term = q2k / (1.0 - q2k);
            s3 += kd * kd * kd * term;
            s5 += kd * kd * kd * kd * kd * term;
            if (std::abs(q2k) * kd * kd * kd * kd * kd < 1e-18 * (1.0 + std::abs(s5))) break;
            q2k *= q2;
        }
        const cplx c = kPi / omega1_;
        const cplx c2 = c * c;
        g2_ = c2 * c2 * (1.0 + 240.0 * s3) / 12.0;
        g3_ = c2 * c2 * c2 * (1.0 - 504.0 * s5) / 216.0;

        const cplx disc = g2_ * g2_ * g2_ - 27.0 * g3_ * g3_;
        const double scale = std::max(1.0, std::norm(g2_) * std::abs(g2_));
        if (std::abs(disc) < 1e-12 * scale)
            throw DegenerateLattice("curve discriminant numerically zero");
    }

    /// Theta series and its first `order` derivatives at v (order <= 3).
    Theta theta(cplx v, int order) const {
        Theta out;
        const cplx s1 = std::sin(v), c1 = std::cos(v);
        const cplx s2 = 2.0 * s1 * c1, c2 = c1 * c1 - s1 * s1;
        cplx sn = s1, cn = c1;  // sin/cos((2n+1) v)
        double floorScale = 0.0;
        for (std::size_t n = 0; n < coeff_.size(); ++n) {
            const double k = 2.0 * double(n) + 1.0;
            const cplx a = coeff_[n];
            out.T += a * sn;
            if (order >= 1) out.T1 += a * k * cn;
            if (order >= 2) out.T2 -= a * k * k * sn;
            if (order >= 3) out.T3 -= a * k * k * k * cn;
            const double termSize = std::abs(a) * std::max(std::abs(sn), std::abs(cn)) *
                                    (order >= 3 ? k * k * k : (order >= 2 ? k * k : k));
            floorScale = std::max(floorScale, termSize);
            if (termSize < 1e-17 * (1.0 + floorScale) && n > 2) break;
            const cplx snNext = sn * c2 + cn * s2;
            cn = cn * c2 - sn * s2;
            sn = snNext;
        }
        return out;
    }

    cplx omega1_, omega3_, tau_, nome_, g2_, g3_, eta1_, eta3_, tauReduced_;
    std::vector<cplx> coeff_;
    cplx t1p0_, t1ppp0_;
    double shortestPeriod_ = 0.0;
    bool nomeWarning_ = false;
};

inline Lattice latticeFromPeriods(cplx omega1, cplx omega3) { return Lattice(omega1, omega3); }

inline CellReduction reduceToCell(cplx z, const Lattice& lat) { return lat.reduce(z); }

inline cplx sigma(cplx z, const Lattice& lat) { return lat.sigma(z); }
inline cplx zeta(cplx z, const Lattice& lat) { return lat.zeta(z); }
inline cplx wp(cplx z, const Lattice& lat) { return lat.wp(z); }
inline cplx wpPrime(cplx z, const Lattice& lat) { return lat.wpPrime(z); }

}  // namespace ellax
