#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ellax/hierarchy.hpp"
#include "ellax/io.hpp"

namespace ellax::runner {

using ellax::ConfigError;

struct RunResult {
    json report;
    std::map<std::string, std::string> files;  // filename -> contents (CSV tables)
    bool pass = false;
};

namespace detail {

inline const json& field(const json& j, const std::string& key, const std::string& path) {
    if (!j.contains(key)) throw ConfigError("config error at " + path + ": missing field");
    return j.at(key);
}

inline double numberField(const json& j, const std::string& key, const std::string& path,
                          double fallback, bool required = false) {
    if (!j.contains(key)) {
        if (required) throw ConfigError("config error at " + path + ": missing field");
        return fallback;
    }
    if (!j.at(key).is_number()) throw ConfigError("config error at " + path + ": expected number");
    return j.at(key).get<double>();
}

inline Lattice parseLattice(const json& cfg) {
    if (!cfg.contains("lattice")) throw ConfigError("config error at lattice: missing field");
    const json& lj = cfg.at("lattice");
    const cplx o1 = complexFromJson(field(lj, "omega1", "lattice.omega1"), "lattice.omega1");
    const cplx o3 = complexFromJson(field(lj, "omega3", "lattice.omega3"), "lattice.omega3");
    try {
        return Lattice(o1, o3);
    } catch (const DegenerateLattice& e) {
        throw ConfigError(std::string("config error at lattice: ") + e.what());
    }
}

inline AlgebraKind parseKind(const json& j, const std::string& path) {
    const std::string family = field(j, "family", path + ".family").get<std::string>();
    const int n = field(j, "n", path + ".n").get<int>();
    try {
        return AlgebraKind::fromName(family, n);
    } catch (const error& e) {
        throw ConfigError("config error at " + path + ": " + e.what());
    }
}

inline CMKind parseCMKind(const std::string& name, const std::string& path) {
    if (name == "glCM") return CMKind::gl;
    if (name == "so2nCM") return CMKind::so2n;
    if (name == "sp2nCM") return CMKind::sp2n;
    throw ConfigError("config error at " + path + ": unknown system kind " + name);
}

/// Staggered positions along the real period with a jitter, the layout that
/// keeps trajectories away from collisions over unit times.
inline PhaseState makeState(const json& cfg, const Lattice& lat, Rng& rng, bool paired) {
    if (!cfg.contains("state")) throw ConfigError("config error at state: missing field");
    const json& sj = cfg.at("state");
    if (sj.contains("q")) {
        std::vector<cplx> q, p;
        const json& qj = field(sj, "q", "state.q");
        const json& pj = field(sj, "p", "state.p");
        if (!qj.is_array() || !pj.is_array() || qj.size() != pj.size() || qj.empty())
            throw ConfigError("config error at state: q and p must be equal-length arrays");
        for (std::size_t i = 0; i < qj.size(); ++i) {
            q.push_back(complexFromJson(qj[i], "state.q[" + std::to_string(i) + "]"));
            p.push_back(complexFromJson(pj[i], "state.p[" + std::to_string(i) + "]"));
        }
        return PhaseState(int(q.size()), q, p, lat);
    }
    const int n = int(numberField(sj, "n", "state.n", 0, true));
    if (n < 2) throw ConfigError("config error at state.n: need n >= 2");
    const double jitter = numberField(sj, "jitter", "state.jitter", 0.02);
    const double pScale = numberField(sj, "pScale", "state.pScale", 0.1);
    std::vector<cplx> q, p;
    for (int i = 0; i < n; ++i) {
        const double frac = paired ? (0.10 + 0.30 * (double(i) + 0.5) / double(n))
                                   : (double(i) + 0.5) / double(n);
        q.push_back(frac * 2.0 * lat.omega1() + (paired ? 0.17 : 0.3) * 2.0 * lat.omega3() +
                    jitter * lat.shortestPeriod() * rng.gaussian());
        p.push_back(pScale * rng.gaussian());
    }
    return PhaseState(n, q, p, lat);
}

struct CheckTable {
    json checks = json::array();
    bool pass = true;

    void add(const std::string& name, double residual, double tol) {
        json c;
        c["name"] = name;
        c["residual"] = residual;
        c["tolerance"] = tol;
        c["pass"] = residual <= tol;
        pass = pass && (residual <= tol);
        checks.push_back(c);
    }
    void addExact(const std::string& name, bool ok, const json& extra = {}) {
        json c;
        c["name"] = name;
        c["pass"] = ok;
        if (!extra.is_null()) c["detail"] = extra;
        pass = pass && ok;
        checks.push_back(c);
    }
};

// Direct lattice sums (Richardson-stabilized truncations), the in-product
// counterpart of the test-side oracle.
inline cplx richardsonLadder(cplx s8, cplx s4, cplx s2, cplx s1) {
    cplx lvl[4] = {s8, s4, s2, s1};
    const double orders[3] = {2.0, 3.0, 4.0};
    int len = 4;
    for (int step = 0; step < 3; ++step) {
        const double f = std::pow(2.0, orders[step]);
        for (int i = 0; i + 1 < len; ++i) lvl[i] = (f * lvl[i + 1] - lvl[i]) / (f - 1.0);
        --len;
    }
    return lvl[0];
}

inline std::pair<cplx, cplx> invariantsByLatticeSum(const Lattice& lat, int N) {
    const cplx p1 = 2.0 * lat.omega1(), p2 = 2.0 * lat.omega3();
    auto partial = [&](int level) {
        cplx g2s = 0.0, g3s = 0.0;
        for (int m = -level; m <= level; ++m)
            for (int n = -level; n <= level; ++n) {
                if (m == 0 && n == 0) continue;
                const cplx w = double(m) * p1 + double(n) * p2;
                const cplx iw2 = 1.0 / (w * w);
                g2s += 60.0 * iw2 * iw2;
                g3s += 140.0 * iw2 * iw2 * iw2;
            }
        return std::make_pair(g2s, g3s);
    };
    const auto a = partial(N / 8);
    const auto b = partial(N / 4);
    const auto c = partial(N / 2);
    const auto d = partial(N);
    return {richardsonLadder(a.first, b.first, c.first, d.first),
            richardsonLadder(a.second, b.second, c.second, d.second)};
}

inline cplx randomCellPoint(Rng& rng, const Lattice& lat, double margin) {
    for (int tries = 0; tries < 2000; ++tries) {
        const double x = rng.uniform(-0.5, 0.5);
        const double y = rng.uniform(-0.5, 0.5);
        const cplx z = x * 2.0 * lat.omega1() + y * 2.0 * lat.omega3();
        if (lat.distToLattice(z) > margin * lat.shortestPeriod()) return z;
    }
    throw error("randomCellPoint: no admissible point");
}

// ---------------------------------------------------------------------------
// elliptic-check
// ---------------------------------------------------------------------------

inline RunResult ellipticCheck(const json& cfg, Rng& rng, double tolScale) {
    const int nLattices = int(numberField(cfg, "lattices", "lattices", 5));
    const int nPoints = int(numberField(cfg, "points", "points", 100));
    const int sumN = int(numberField(cfg, "latticeSumN", "latticeSumN", 200));

    CheckTable table;
    double worstDiff = 0.0, worstProd = 0.0, worstPeriod = 0.0, worstChain = 0.0;
    double worstG2 = 0.0, worstG3 = 0.0, worstLegendre = 0.0, worstHalf = 0.0;
    for (int li = 0; li < nLattices; ++li) {
        const double scale = rng.uniform(0.4, 0.7);
        const double tilt = rng.uniform(-0.15, 0.15);
        const cplx o1 = scale * std::exp(kI * tilt);
        const cplx tau{rng.uniform(-0.3, 0.3), rng.uniform(0.8, 1.6)};
        Lattice lat(o1, o1 * tau);

        const auto direct = invariantsByLatticeSum(lat, sumN);
        worstG2 = std::max(worstG2, std::abs(lat.g2() - direct.first) /
                                        std::max(1.0, std::abs(direct.first)));
        worstG3 = std::max(worstG3, std::abs(lat.g3() - direct.second) /
                                        std::max(1.0, std::abs(direct.second)));
        worstLegendre = std::max(worstLegendre,
                                 std::abs(lat.eta1() * lat.omega3() - lat.eta3() * lat.omega1() -
                                          kI * kPi / 2.0));
        for (const cplx w : {lat.omega1(), lat.omega3(), lat.omega1() + lat.omega3()}) {
            const cplx e = lat.wp(w);
            worstHalf = std::max(worstHalf,
                                 std::abs(4.0 * e * e * e - lat.g2() * e - lat.g3()) /
                                     std::max(1.0, std::abs(e * e * e)));
        }

        for (int i = 0; i < nPoints; ++i) {
            const cplx z = randomCellPoint(rng, lat, 0.08);
            const cplx a = randomCellPoint(rng, lat, 0.08);
            const cplx P = lat.wp(z), Pp = lat.wpPrime(z);
            worstDiff = std::max(worstDiff,
                                 std::abs(Pp * Pp - (4.0 * P * P * P - lat.g2() * P - lat.g3())) /
                                     std::max(1.0, std::abs(P * P * P)));
            if (lat.distToLattice(z - a) > 0.04 * lat.shortestPeriod() &&
                lat.distToLattice(z + a) > 0.04 * lat.shortestPeriod()) {
                const cplx lhs = lat.sigma(z + a) * lat.sigma(z - a) /
                                 (lat.sigma(z) * lat.sigma(z) * lat.sigma(a) * lat.sigma(a));
                const cplx rhs = lat.wp(a) - lat.wp(z);
                worstProd = std::max(worstProd,
                                     std::abs(lhs - rhs) / std::max(1.0, std::abs(rhs)));
            }
            worstPeriod = std::max(
                worstPeriod, std::abs(lat.wp(z + 2.0 * lat.omega1()) - P) /
                                 std::max(1.0, std::abs(P)));
            worstPeriod = std::max(
                worstPeriod, std::abs(lat.wp(z + 2.0 * lat.omega3()) - P) /
                                 std::max(1.0, std::abs(P)));
        }
        // Log-derivative chain on a few points per lattice.
        const double h = 1e-5;
        for (int i = 0; i < 10; ++i) {
            const cplx z = randomCellPoint(rng, lat, 0.1);
            const cplx dLogSigma =
                (std::log(lat.sigma(z + h)) - std::log(lat.sigma(z - h))) / (2.0 * h);
            worstChain = std::max(worstChain, std::abs(dLogSigma - lat.zeta(z)) /
                                                  std::max(1.0, std::abs(lat.zeta(z))));
            const cplx dZeta = (lat.zeta(z + h) - lat.zeta(z - h)) / (2.0 * h);
            worstChain = std::max(worstChain,
                                  std::abs(dZeta + lat.wp(z)) / std::max(1.0, std::abs(lat.wp(z))));
        }
    }
    table.add("differential_equation", worstDiff, 1e-9 * tolScale);
    table.add("sigma_product_identity", worstProd, 1e-9 * tolScale);
    table.add("periodicity", worstPeriod, 1e-10 * tolScale);
    table.add("log_derivative_chain", worstChain, 1e-6 * tolScale);
    table.add("g2_vs_lattice_sum", worstG2, 1e-8 * tolScale);
    table.add("g3_vs_lattice_sum", worstG3, 1e-8 * tolScale);
    table.add("legendre_relation", worstLegendre, 1e-12 * tolScale);
    table.add("half_period_roots", worstHalf, 1e-9 * tolScale);

    RunResult out;
    out.report["checks"] = table.checks;
    out.pass = table.pass;
    return out;
}

// ---------------------------------------------------------------------------
// algebra-check
// ---------------------------------------------------------------------------

inline RunResult algebraCheck(const json& cfg, Rng& rng, double tolScale) {
    Lattice lat = parseLattice(cfg);
    const double tol = 1e-8 * tolScale;
    const int closurePairs = int(numberField(cfg, "closurePairs", "closurePairs", 20));
    const int reconstructions = int(numberField(cfg, "reconstructions", "reconstructions", 3));

    std::vector<AlgebraKind> kinds;
    if (cfg.contains("kinds")) {
        const json& kj = cfg.at("kinds");
        if (!kj.is_array()) throw ConfigError("config error at kinds: expected array");
        for (std::size_t i = 0; i < kj.size(); ++i)
            kinds.push_back(parseKind(kj[i], "kinds[" + std::to_string(i) + "]"));
    } else {
        kinds = {AlgebraKind::gl(2), AlgebraKind::so(4)};
    }

    CheckTable table;
    json details = json::array();
    for (const auto& kind : kinds) {
        Divisor D;
        D.points.emplace_back(cplx(0.0), 1);
        TyurinData T = TyurinData::random(kind, lat, rng, D.support());
        const auto LD = solveConstrainedSpace(kind, lat, D, T, SpaceKind::LD);
        double worstL = 0.0;
        for (int i = 0; i < reconstructions && i < LD.dimension; ++i) {
            const auto rep = checkLConstraints(LD.reconstruct(std::size_t(i)), T, tol);
            worstL = std::max(worstL, rep.worst());
        }
        table.add(kind.name() + "_L_constraints", worstL, tol);

        double worstClosure = 0.0;
        for (int pair = 0; pair < closurePairs; ++pair) {
            const std::size_t i = rng.integer(std::uint64_t(LD.dimension));
            std::size_t j = rng.integer(std::uint64_t(LD.dimension));
            if (j == i) j = (j + 1) % std::size_t(LD.dimension);
            const auto rep =
                commutatorClosure(LD.reconstruct(i), LD.reconstruct(j), T, tol);
            worstClosure = std::max(worstClosure, rep.worst());
        }
        table.add(kind.name() + "_closure", worstClosure, tol);

        const auto ND = solveConstrainedSpace(kind, lat, D, T, SpaceKind::ND);
        TyurinData Tdia{kind.diamond(), {}};
        for (const auto& tp : T.points)
            Tdia.points.push_back({tp.gamma, kind.embedVector(tp.alpha)});
        double worstM = 0.0;
        for (int i = 0; i < reconstructions && i < ND.dimension; ++i) {
            const auto rep = checkMConstraints(ND.reconstruct(std::size_t(i)), Tdia, tol);
            worstM = std::max(worstM, rep.worst());
        }
        table.add(kind.name() + "_M_constraints", worstM, tol);

        json d;
        d["kind"] = kind.name();
        d["dimLD"] = LD.dimension;
        d["dimND"] = ND.dimension;
        details.push_back(d);
    }

    RunResult out;
    out.report["checks"] = table.checks;
    out.report["spaces"] = details;
    out.pass = table.pass;
    return out;
}

// ---------------------------------------------------------------------------
// dim-check
// ---------------------------------------------------------------------------

inline RunResult dimCheck(const json& cfg, Rng& rng, double /*tolScale*/) {
    Lattice lat = parseLattice(cfg);
    const int configs = int(numberField(cfg, "configsPerKind", "configsPerKind", 3));
    std::vector<int> degDs{1};
    if (cfg.contains("degDs")) {
        degDs.clear();
        for (const auto& d : cfg.at("degDs")) degDs.push_back(d.get<int>());
    } else if (cfg.contains("degD")) {
        degDs = {int(numberField(cfg, "degD", "degD", 1))};
    }
    const bool graded = cfg.value("graded", true);
    const bool soVariant = cfg.value("soVariant", true);

    std::vector<AlgebraKind> kinds;
    if (cfg.contains("kinds")) {
        const json& kj = cfg.at("kinds");
        for (std::size_t i = 0; i < kj.size(); ++i)
            kinds.push_back(parseKind(kj[i], "kinds[" + std::to_string(i) + "]"));
    } else {
        kinds = {AlgebraKind::gl(2), AlgebraKind::gl(3), AlgebraKind::so(4), AlgebraKind::sp(2)};
    }

    CheckTable table;
    std::ostringstream csv;
    csv << "kind,space,param,config,expected,computed,pass\n";
    auto note = [&](const AlgebraKind& kind, const std::string& space, const std::string& param,
                    int config, int expected, int computed) {
        table.addExact(kind.name() + "_" + space + "_" + param + "_cfg" + std::to_string(config),
                       expected == computed,
                       json{{"expected", expected}, {"computed", computed}});
        csv << kind.name() << "," << space << "," << param << "," << config << "," << expected
            << "," << computed << "," << (expected == computed ? 1 : 0) << "\n";
    };

    for (const auto& kind : kinds) {
        for (int c = 0; c < configs; ++c) {
            for (const int degD : degDs) {
                Divisor D;
                D.points.emplace_back(cplx(0.0), degD);
                TyurinData T = TyurinData::random(kind, lat, rng, D.support());
                const auto LD = solveConstrainedSpace(kind, lat, D, T, SpaceKind::LD);
                note(kind, "LD", "degD" + std::to_string(degD), c, kind.dim() * degD,
                     LD.dimension);
                const auto ND = solveConstrainedSpace(kind, lat, D, T, SpaceKind::ND);
                note(kind, "ND", "degD" + std::to_string(degD), c,
                     kind.diamond().dim() * (degD + 1), ND.dimension);
            }
            if (graded) {
                const cplx Pplus = 0.11 * 2.0 * lat.omega1() + 0.41 * 2.0 * lat.omega3();
                const cplx Pminus = 0.43 * 2.0 * lat.omega1() + 0.12 * 2.0 * lat.omega3();
                TyurinData Tg = TyurinData::random(kind, lat, rng, {Pplus, Pminus});
                for (int m = -2; m <= 2; ++m) {
                    const auto G = gradedSubspace(kind, lat, m, Pplus, Pminus, Tg);
                    note(kind, "graded", "m" + std::to_string(m), c, kind.dim(), G.dimension);
                }
            }
        }
    }

    if (soVariant) {
        for (int c = 0; c < configs; ++c) {
            const int n = 2;
            const int degD = degDs.front();
            Divisor D;
            D.points.emplace_back(cplx(0.0), degD);
            std::vector<cplx> q;
            while (int(q.size()) < n) {
                const cplx qi = randomCellPoint(rng, lat, 0.15);
                bool ok = lat.distToLattice(2.0 * qi) > 0.1 * lat.shortestPeriod();
                for (const auto& qj : q) {
                    ok = ok && lat.distToLattice(qi - qj) > 0.12 * lat.shortestPeriod();
                    ok = ok && lat.distToLattice(qi + qj) > 0.12 * lat.shortestPeriod();
                }
                if (ok) q.push_back(qi);
            }
            std::vector<Vector> aP, aM;
            for (int i = 0; i < n; ++i) {
                Vector a(2 * n);
                for (int k = 0; k < 2 * n; ++k) a(k) = rng.gaussian();
                aP.push_back(a.normalized());
                Vector b = Vector::Zero(2 * n);
                for (int k = 0; k < n; ++k) b(k) = rng.gaussian();
                aM.push_back(b.normalized());
            }
            const auto NV = solveSoVariantSpace(n, lat, D, q, aP, aM);
            note(AlgebraKind::so(2 * n), "soVariant", "degD" + std::to_string(degD), c,
                 AlgebraKind::so(2 * n).dim() * (degD + 1), NV.dimension);
        }
    }

    RunResult out;
    out.report["checks"] = table.checks;
    out.files["dims.csv"] = csv.str();
    out.pass = table.pass;
    return out;
}

// ---------------------------------------------------------------------------
// cm-run
// ---------------------------------------------------------------------------

inline RunResult cmRun(const json& cfg, Rng& rng, double tolScale) {
    Lattice lat = parseLattice(cfg);
    const std::string kindName = cfg.value("kind", std::string("glCM"));
    const CMKind kind = parseCMKind(kindName, "kind");
    const bool paired = kind != CMKind::gl;
    CouplingData coupling{kind};
    if (cfg.contains("coupling"))
        coupling.epsilonSP = numberField(cfg.at("coupling"), "epsilon", "coupling.epsilon", 1.0);
    PhaseState s0 = makeState(cfg, lat, rng, paired);
    s0.requireValid(paired);

    CheckTable table;
    RunResult out;
    json reportState = toJson(s0);

    const double T = numberField(cfg, "T", "T", 0.0);
    const double dt = numberField(cfg, "dt", "dt", 1e-3);
    const int zCount = int(numberField(cfg, "zSamples", "zSamples", 5));
    const int stride = int(numberField(cfg, "monitorStride", "monitorStride", 10));

    if (T > 0.0) {
        std::vector<cplx> zs;
        while (int(zs.size()) < zCount) {
            const cplx z = randomCellPoint(rng, lat, 0.1);
            bool ok = true;
            for (const auto& qi : s0.q) {
                ok = ok && lat.distToLattice(z - qi) > 0.07 * lat.shortestPeriod();
                if (paired) ok = ok && lat.distToLattice(z + qi) > 0.07 * lat.shortestPeriod();
            }
            if (ok) zs.push_back(z);
        }
        auto H = [&](const PhaseState& st) { return hamiltonianClosedForm(kind, st, coupling); };
        auto invariants = [&](const PhaseState& st) {
            std::vector<cplx> inv;
            MatrixField L = laxField(kind, st, coupling);
            for (const cplx z : zs) {
                const auto e = charPolyFromTraces(L.evaluate(z));
                inv.insert(inv.end(), e.begin(), e.end());
            }
            return inv;
        };
        IntegrateOptions opt;
        opt.paired = paired;
        opt.monitorH = H;
        opt.monitorInvariants = invariants;
        opt.monitorStride = stride;
        Trajectory traj = integrate(s0, analyticCMField(kind, coupling), T, dt, opt);

        double hDrift = 0.0, invDrift = 0.0;
        for (const auto& mr : traj.monitors) {
            hDrift = std::max(hDrift, std::abs(mr.H - traj.monitors.front().H));
            for (std::size_t k = 0; k < mr.invariants.size(); ++k)
                invDrift = std::max(invDrift, std::abs(mr.invariants[k] -
                                                       traj.monitors.front().invariants[k]));
        }
        table.add("energy_drift", hDrift / (1.0 + std::abs(traj.monitors.front().H)),
                  1e-8 * tolScale);
        table.add("isospectral_drift", invDrift, 1e-6 * tolScale);

        std::ostringstream csv;
        writeTrajectoryCsv(csv, traj);
        out.files["trajectory.csv"] = csv.str();
        json zj = json::array();
        for (const cplx z : zs) zj.push_back(toJson(z));
        out.report["zSamples"] = zj;
        out.report["steps"] = int(std::llround(T / dt));
    }

    if (cfg.contains("residueCheck")) {
        const json& rc = cfg.at("residueCheck");
        const int states = int(numberField(rc, "states", "residueCheck.states", 50));
        json systems = rc.contains("systems") ? rc.at("systems") : json::array({json{
            {"kind", kindName}, {"n", s0.n}}});
        for (const auto& sysj : systems) {
            const CMKind k2 = parseCMKind(field(sysj, "kind", "residueCheck.systems.kind")
                                              .get<std::string>(),
                                          "residueCheck.systems.kind");
            const int n2 = field(sysj, "n", "residueCheck.systems.n").get<int>();
            const bool paired2 = k2 != CMKind::gl;
            CouplingData c2{k2};
            double worst = 0.0;
            for (int t = 0; t < states; ++t) {
                PhaseState st = [&] {
                    for (int tries = 0; tries < 4000; ++tries) {
                        std::vector<cplx> q, p;
                        for (int i = 0; i < n2; ++i) {
                            q.push_back(randomCellPoint(rng, lat, 0.02));
                            p.push_back(rng.gaussian());
                        }
                        PhaseState cand(n2, q, p, lat);
                        if (cand.minSeparation(paired2) > 0.12 * lat.shortestPeriod())
                            return cand;
                    }
                    throw error("cm-run: cannot draw a separated state");
                }();
                MatrixField L = laxField(k2, st, c2);
                const cplx Hres = hamiltonianViaResidue(L, 1, 1, cplx(0.0));
                const cplx Hclosed = hamiltonianClosedForm(k2, st, c2);
                worst = std::max(worst, std::abs(Hres - Hclosed) / (1.0 + std::abs(Hclosed)));
            }
            table.add("residue_vs_closed_" + cmKindName(k2) + "_n" + std::to_string(n2), worst,
                      1e-9 * tolScale);
        }
    }

    if (cfg.value("holomorphy", false)) {
        MatrixField L = laxField(kind, s0, coupling);
        double worstRatio = 0.0;
        double minEntry = std::numeric_limits<double>::infinity();
        for (const auto& qi : s0.q) {
            const auto scan = spectrumHolomorphyScan(L, qi, 1e-2);
            minEntry = std::min(minEntry, scan.maxEntry);
            worstRatio = std::max(worstRatio, scan.maxEig / std::abs(scan.extrapolatedEig));
        }
        table.addExact("holomorphy_pole_visible", minEntry > 1e2,
                       json{{"minMaxEntry", minEntry}});
        table.add("holomorphy_eig_ratio", worstRatio, 2.0);
    }

    out.report["checks"] = table.checks;
    out.report["state"] = reportState;
    out.report["coupling"] = toJson(coupling);
    out.pass = table.pass;
    return out;
}

// ---------------------------------------------------------------------------
// hierarchy-check
// ---------------------------------------------------------------------------

inline RunResult hierarchyCheck(const json& cfg, Rng& rng, double tolScale) {
    Lattice lat = parseLattice(cfg);
    PhaseState s = makeState(cfg, lat, rng, false);
    CouplingData coupling{CMKind::gl};
    const AlgebraKind kind = AlgebraKind::gl(s.n);

    CheckTable table;
    RunResult out;

    if (cfg.value("laxFlow", true)) {
        HierarchyIndex a(cplx(0.0), 1, 1, kind);
        std::vector<cplx> zs;
        while (zs.size() < 10) {
            const cplx z = randomCellPoint(rng, lat, 0.1);
            bool ok = true;
            for (const auto& qi : s.q)
                ok = ok && lat.distToLattice(z - qi) > 0.1 * lat.shortestPeriod();
            if (ok) zs.push_back(z);
        }
        std::vector<double> levels;
        double dt = numberField(cfg, "dt", "dt", 1e-3);
        const int halvings = int(numberField(cfg, "halvings", "halvings", 6));
        for (int i = 0; i <= halvings; ++i) {
            levels.push_back(dt);
            dt /= 2.0;
        }
        // Construction residual with the paper's vanishing normalization.
        {
            MatrixField L = laxField(CMKind::gl, s, coupling);
            TyurinData T = tyurinFromGLState(s);
            Divisor D;
            D.points.emplace_back(cplx(0.0), 1);
            const cplx P0 = 0.31 * 2.0 * lat.omega1() + 0.37 * 2.0 * lat.omega3();
            MaResult ma = constructMa(L, a, T, D, P0, 1e-8 * tolScale);
            table.add("Ma_solve_residual", ma.solveResidual, 1e-8 * tolScale);
            table.add("Ma_uniqueness_leak", ma.nullspaceLeak, 1e-8 * tolScale);
        }
        const auto rep = verifyLaxFlow(s, coupling, a, levels, zs, 1e-7 * tolScale);
        json levelTable = json::array();
        for (const auto& lv : rep.levels)
            levelTable.push_back(json{{"dt", lv.dt}, {"deviation", lv.deviation}});
        out.report["laxFlowLevels"] = levelTable;
        out.report["laxFlowOrders"] = rep.orders;
        out.report["laxFlowNormalization"] = "sliceFrozen";
        out.report["flowOrientation"] = "hierarchy (qdot = -dH/dp)";
        bool orderOk = true;
        for (const double ord : rep.orders) orderOk = orderOk && std::abs(ord - 2.0) < 0.4;
        table.addExact("laxFlow_order2", orderOk, json{{"orders", rep.orders}});
        table.add("laxFlow_deviation", rep.bestDeviation, 1e-6 * tolScale);

        const auto tyu = verifyTyurinDynamics(s, coupling, a, 1e-4, 1e-7 * tolScale);
        table.add("tyurin_qdot_law", tyu.maxQdotDeviation, 1e-6 * tolScale);
    }

    if (cfg.contains("involution")) {
        const json& inv = cfg.at("involution");
        if (!inv.is_array() || inv.size() < 2)
            throw ConfigError("config error at involution: expected >= 2 index objects");
        std::vector<HierarchyIndex> idx;
        for (std::size_t i = 0; i < inv.size(); ++i) {
            const std::string path = "involution[" + std::to_string(i) + "]";
            idx.emplace_back(cplx(0.0), int(numberField(inv[i], "k", path + ".k", 0, true)),
                             int(numberField(inv[i], "m", path + ".m", 1)), kind);
        }
        for (std::size_t i = 0; i < idx.size(); ++i)
            for (std::size_t j = i + 1; j < idx.size(); ++j) {
                auto Ha = residueHamiltonian(CMKind::gl, coupling, idx[i]);
                auto Hb = residueHamiltonian(CMKind::gl, coupling, idx[j]);
                const double scale = bracketScale(Ha, Hb, s);
                const cplx br = poissonBracket(Ha, Hb, s);
                table.add("bracket_k" + std::to_string(idx[i].k) + "_k" +
                              std::to_string(idx[j].k),
                          std::abs(br) / scale, 1e-6 * tolScale);
            }
    }

    if (cfg.value("zeroCurvature", false)) {
        HierarchyIndex a(cplx(0.0), 1, 1, kind);
        HierarchyIndex b(cplx(0.0), 2, 1, kind);
        std::vector<cplx> zs;
        while (zs.size() < 4) {
            const cplx z = randomCellPoint(rng, lat, 0.12);
            bool ok = true;
            for (const auto& qi : s.q)
                ok = ok && lat.distToLattice(z - qi) > 0.1 * lat.shortestPeriod();
            if (ok) zs.push_back(z);
        }
        const auto zc = zeroCurvatureCheck(s, coupling, a, b, 1e-4, zs, 1e-2 * tolScale);
        table.add("zero_curvature", zc.curvatureResidual, 1e-4 * tolScale);
        table.addExact("zero_curvature_checkM", zc.mabCheck.pass);
    }

    out.report["checks"] = table.checks;
    out.report["state"] = toJson(s);
    out.pass = table.pass;
    return out;
}

}  // namespace detail

/// Executes one command described by a config object. Returns the report and
/// any CSV tables; the caller decides where they land on disk.
inline RunResult run(const json& cfg, std::uint64_t seedOverride = 0,
                     double tolScaleOverride = 0.0) {
    if (!cfg.is_object()) throw ConfigError("config error at <root>: expected an object");
    if (cfg.value("schema", 1) != 1)
        throw ConfigError("config error at schema: unsupported schema version");
    if (!cfg.contains("command") || !cfg.at("command").is_string())
        throw ConfigError("config error at command: missing or not a string");
    const std::string command = cfg.at("command").get<std::string>();
    const std::uint64_t seed =
        seedOverride ? seedOverride : std::uint64_t(cfg.value("seed", 1));
    const double tolScale =
        tolScaleOverride > 0.0 ? tolScaleOverride : cfg.value("tolScale", 1.0);
    Rng rng(seed);

    RunResult out;
    if (command == "elliptic-check") out = detail::ellipticCheck(cfg, rng, tolScale);
    else if (command == "algebra-check") out = detail::algebraCheck(cfg, rng, tolScale);
    else if (command == "dim-check") out = detail::dimCheck(cfg, rng, tolScale);
    else if (command == "cm-run") out = detail::cmRun(cfg, rng, tolScale);
    else if (command == "hierarchy-check") out = detail::hierarchyCheck(cfg, rng, tolScale);
    else throw ConfigError("config error at command: unknown command " + command);

    out.report["schema"] = 1;
    out.report["command"] = command;
    out.report["seed"] = seed;
    out.report["tolScale"] = tolScale;
    out.report["pass"] = out.pass;
    return out;
}

/// Runs a config file and writes report.json, meta.json and any CSV outputs
/// into outDir. Returns the process exit code contract: 0 pass, 1 check
/// failure (config errors throw ConfigError and map to 2 in the CLI).
inline int runToFiles(const std::string& configPath, const std::string& outDir,
                      std::uint64_t seedOverride = 0, double tolScale = 0.0) {
    json cfg;
    try {
        cfg = json::parse(readFile(configPath));
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config error: invalid JSON: ") + e.what());
    }
    RunResult res = run(cfg, seedOverride, tolScale);
    std::filesystem::create_directories(outDir);
    writeFile(outDir + "/report.json", res.report.dump(2) + "\n");
    // Timestamps live outside the report so reruns are byte-identical.
    json meta;
    meta["timestamp"] = std::time(nullptr);
    meta["configPath"] = configPath;
    writeFile(outDir + "/meta.json", meta.dump(2) + "\n");
    for (const auto& [name, contents] : res.files) writeFile(outDir + "/" + name, contents);
    return res.pass ? 0 : 1;
}

}  // namespace ellax::runner
