#pragma once

#include <complex>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace ellax {

using cplx = std::complex<double>;

inline constexpr double kPi = 3.141592653589793238462643383279502884;
inline constexpr cplx kI{0.0, 1.0};

// Error kinds named by the failure they report. All derive from error so
// callers can catch the whole family at once.
struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DegenerateLattice : error { using error::error; };
struct PoleAtLatticePoint : error { using error::error; };
struct ContourHitsPole : error { using error::error; };
struct NoisyJet : error { using error::error; };
struct JetFailure : error { using error::error; };
struct DegenerateConfiguration : error { using error::error; };
struct NonGenericTyurinData : error { using error::error; };
struct NoSolution : error { using error::error; };
struct AmbiguousSolution : error { using error::error; };
struct PoleAtZ : error { using error::error; };
struct StencilHitsPole : error { using error::error; };
struct CollisionDetected : error { using error::error; };
struct StepRejected : error { using error::error; };

/// Deterministic random source; every randomized routine draws through one
/// of these so a fixed seed reproduces a run bit-for-bit.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    double uniform(double a, double b) {
        return std::uniform_real_distribution<double>(a, b)(gen_);
    }
    cplx box(double re0, double re1, double im0, double im1) {
        const double x = uniform(re0, re1);
        const double y = uniform(im0, im1);
        return {x, y};
    }
    /// Standard complex Gaussian (unit variance per axis).
    cplx gaussian() {
        std::normal_distribution<double> n(0.0, 1.0);
        const double x = n(gen_);
        const double y = n(gen_);
        return {x, y};
    }
    std::uint64_t integer(std::uint64_t n) {
        return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(gen_);
    }
    std::mt19937_64& engine() { return gen_; }

  private:
    std::mt19937_64 gen_;
};

/// All roots of a monic polynomial c[0] + c[1] x + ... + c[n-1] x^{n-1} + x^n
/// by Durand-Kerner iteration. Degrees here are tiny (matrix sizes p <= 8).
inline std::vector<cplx> polyRoots(const std::vector<cplx>& monicCoeffs) {
    const std::size_t n = monicCoeffs.size();
    if (n == 0) return {};
    auto eval = [&](cplx x) {
        cplx v{1.0, 0.0};
        for (std::size_t k = n; k-- > 0;) v = v * x + monicCoeffs[k];
        return v;
    };
    // Start on a circle whose radius bounds the root magnitudes.
    double radius = 0.0;
    for (const auto& c : monicCoeffs) radius = std::max(radius, std::abs(c));
    radius = 1.0 + radius;
    std::vector<cplx> roots(n);
    for (std::size_t k = 0; k < n; ++k)
        roots[k] = radius * std::exp(kI * (2.0 * kPi * double(k) / double(n) + 0.4));
    for (int iter = 0; iter < 200; ++iter) {
        double maxStep = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            cplx denom{1.0, 0.0};
            for (std::size_t j = 0; j < n; ++j)
                if (j != k) denom *= roots[k] - roots[j];
            const cplx step = eval(roots[k]) / denom;
            roots[k] -= step;
            maxStep = std::max(maxStep, std::abs(step));
        }
        if (maxStep < 1e-14 * (1.0 + radius)) break;
    }
    return roots;
}

}  // namespace ellax
