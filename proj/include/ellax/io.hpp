#pragma once

#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "ellax/cmsystems.hpp"
#include "ellax/dynamics.hpp"
#include "ellax/laxspace.hpp"
#include "ellax/numeric.hpp"

namespace ellax {

using json = nlohmann::json;

/// Raised on malformed configuration input; the CLI maps it to exit code 2.
struct ConfigError : error {
    using error::error;
};

// Complex numbers travel as [re, im] pairs everywhere in the JSON interface.

inline json toJson(cplx z) { return json::array({z.real(), z.imag()}); }

inline cplx complexFromJson(const json& j, const std::string& path) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
        throw ConfigError("config error at " + path + ": expected [re, im]");
    return {j[0].get<double>(), j[1].get<double>()};
}

inline json toJson(const Vector& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(toJson(v(i)));
    return a;
}

inline json toJson(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(toJson(m(i, j)));
        rows.push_back(row);
    }
    return rows;
}

inline json toJson(const PoleBasisElement& el) {
    json j;
    switch (el.type) {
        case PoleBasisElement::Type::constant: j["type"] = "constant"; break;
        case PoleBasisElement::Type::wpDeriv:
            j["type"] = "wpDeriv";
            j["point"] = toJson(el.point);
            j["derivOrder"] = el.derivOrder;
            break;
        case PoleBasisElement::Type::zetaDiff:
            j["type"] = "zetaDiff";
            j["point"] = toJson(el.point);
            j["anchor"] = toJson(el.anchor);
            break;
    }
    return j;
}

/// Basis export: pole-basis descriptors, complex coefficient arrays and the
/// singular-value diagnostics.
inline json toJson(const FunctionSpaceBasis& basis) {
    json j;
    j["spaceLabel"] = basis.spaceLabel;
    j["valueAlgebra"] = basis.valueAlgebra.name();
    j["dimension"] = basis.dimension;
    j["poleBasis"] = json::array();
    for (const auto& el : basis.poleBasis) j["poleBasis"].push_back(toJson(el));
    j["coefficientBasis"] = json::array();
    for (const auto& Cs : basis.coefficientBasis) {
        json elem = json::array();
        for (const auto& Cb : Cs) elem.push_back(toJson(Cb));
        j["coefficientBasis"].push_back(elem);
    }
    j["singularValues"] = basis.singularValues;
    return j;
}

inline json toJson(const ConstraintReport& rep) {
    json j;
    j["pass"] = rep.pass;
    j["tolerance"] = rep.tol;
    j["membershipResidual"] = rep.resMembership;
    j["gammas"] = json::array();
    for (const auto& g : rep.gammas) {
        json gj;
        gj["gamma"] = toJson(g.gamma);
        gj["nu"] = toJson(g.nu);
        gj["kappa"] = toJson(g.kappa);
        gj["covector"] = toJson(g.covector);
        gj["resOrder2"] = g.resOrder2;
        gj["resOrder1"] = g.resOrder1;
        gj["resOrth"] = g.resOrth;
        gj["resEigen"] = g.resEigen;
        gj["resAdd2"] = g.resAdd2;
        gj["resExcess"] = g.resExcess;
        gj["pass"] = g.pass;
        j["gammas"].push_back(gj);
    }
    return j;
}

inline json toJson(const PhaseState& s) {
    json j;
    j["n"] = s.n;
    j["q"] = json::array();
    j["p"] = json::array();
    for (const auto& qi : s.q) j["q"].push_back(toJson(qi));
    for (const auto& pi : s.p) j["p"].push_back(toJson(pi));
    return j;
}

inline json toJson(const CouplingData& c) {
    json j;
    j["kind"] = cmKindName(c.kind);
    j["fGL"] = c.fGL;
    j["fB"] = c.fB;
    j["fC"] = c.fC;
    j["epsilon"] = c.epsilonSP;
    return j;
}

/// Trajectory export: one row per recorded time with Re/Im of every q_i, p_i,
/// the Hamiltonian and each tracked invariant.
inline void writeTrajectoryCsv(std::ostream& os, const Trajectory& traj) {
    const int n = traj.states.empty() ? 0 : traj.states.front().n;
    os << "t";
    for (int i = 0; i < n; ++i) os << ",re_q" << i << ",im_q" << i;
    for (int i = 0; i < n; ++i) os << ",re_p" << i << ",im_p" << i;
    os << ",re_H,im_H";
    const std::size_t nInv =
        traj.monitors.empty() ? 0 : traj.monitors.front().invariants.size();
    for (std::size_t k = 0; k < nInv; ++k) os << ",re_inv" << k << ",im_inv" << k;
    os << "\n";
    os.precision(17);
    for (std::size_t r = 0; r < traj.monitors.size(); ++r) {
        const auto& mr = traj.monitors[r];
        const auto& st = traj.states[std::min(r, traj.states.size() - 1)];
        os << mr.t;
        for (const auto& qi : st.q) os << "," << qi.real() << "," << qi.imag();
        for (const auto& pi : st.p) os << "," << pi.real() << "," << pi.imag();
        os << "," << mr.H.real() << "," << mr.H.imag();
        for (const auto& inv : mr.invariants) os << "," << inv.real() << "," << inv.imag();
        os << "\n";
    }
}

inline void writeFile(const std::string& path, const std::string& contents) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw error("cannot open output file: " + path);
    out << contents;
}

inline std::string readFile(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw error("cannot open input file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace ellax
