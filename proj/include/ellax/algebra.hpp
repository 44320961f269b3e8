#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "ellax/numeric.hpp"

namespace ellax {

/// One of the matrix Lie algebras the constraint machinery knows about,
/// together with the bilinear form sigma and the epsilon sign entering the
/// residue structure (alpha mu^t + eps mu alpha^t) sigma.
///
/// Conventions: gl/sl/s use sigma = id, eps = 0. so(2m) uses the block
/// antidiagonal symmetric form [[0,E],[E,0]] (so(2m+1) appends a 1), eps = -1.
/// sp(2m) uses the antisymmetric [[0,E],[-E,0]], eps = +1. tsp(2m) sits inside
/// sp(2m+2) with the bordered form and its members carry a zero first column
/// and last row.
class AlgebraKind {
  public:
    enum class Family { gl, sl, so, sp, s, tsp };

    static AlgebraKind gl(int n) { return AlgebraKind(Family::gl, n, n); }
    static AlgebraKind sl(int n) { return AlgebraKind(Family::sl, n, n); }
    static AlgebraKind scalars(int n) { return AlgebraKind(Family::s, n, n); }
    static AlgebraKind so(int n) { return AlgebraKind(Family::so, n, n); }
    /// sp(p) with p even (p = 2n).
    static AlgebraKind sp(int p) {
        if (p % 2 != 0) throw error("sp requires even matrix size");
        return AlgebraKind(Family::sp, p, p);
    }
    /// tsp(p) with p even; the matrices are (p+2) x (p+2).
    static AlgebraKind tsp(int p) {
        if (p % 2 != 0) throw error("tsp requires even inner size");
        return AlgebraKind(Family::tsp, p, p + 2);
    }

    static AlgebraKind fromName(const std::string& family, int n) {
        if (family == "gl") return gl(n);
        if (family == "sl") return sl(n);
        if (family == "so") return so(n);
        if (family == "sp") return sp(n);
        if (family == "s") return scalars(n);
        if (family == "tsp") return tsp(n);
        throw error("unknown algebra family: " + family);
    }

    Family family() const { return family_; }
    /// Size parameter as written in the name (gl(n), so(n), sp(2n), tsp(2n)).
    int n() const { return n_; }
    /// Matrix size.
    int p() const { return p_; }
    int epsilon() const { return eps_; }
    const Eigen::MatrixXcd& sigmaMatrix() const { return sigma_; }
    int dim() const { return int(basis_.size()); }
    const std::vector<Eigen::MatrixXcd>& basis() const { return basis_; }

    std::string name() const {
        switch (family_) {
            case Family::gl: return "gl(" + std::to_string(n_) + ")";
            case Family::sl: return "sl(" + std::to_string(n_) + ")";
            case Family::so: return "so(" + std::to_string(n_) + ")";
            case Family::sp: return "sp(" + std::to_string(n_) + ")";
            case Family::s: return "s(" + std::to_string(n_) + ")";
            case Family::tsp: return "tsp(" + std::to_string(n_) + ")";
        }
        return "?";
    }

    /// Max-entry violation of membership in this algebra.
    double membershipResidual(const Eigen::MatrixXcd& X) const {
        double r = 0.0;
        switch (family_) {
            case Family::gl: break;
            case Family::sl: r = std::abs(X.trace()); break;
            case Family::s: {
                const cplx c = X.trace() / double(p_);
                r = (X - c * Eigen::MatrixXcd::Identity(p_, p_)).cwiseAbs().maxCoeff();
                break;
            }
            case Family::so:
            case Family::sp:
                r = (X.transpose() * sigma_ + sigma_ * X).cwiseAbs().maxCoeff();
                break;
            case Family::tsp: {
                r = (X.transpose() * sigma_ + sigma_ * X).cwiseAbs().maxCoeff();
                r = std::max(r, X.col(0).cwiseAbs().maxCoeff());
                r = std::max(r, X.row(p_ - 1).cwiseAbs().maxCoeff());
                break;
            }
        }
        return r;
    }

    /// The partner algebra hosting M-operators (gl -> gl, so(2n) -> so(2n+1),
    /// sp(2n) -> tsp(2n)).
    AlgebraKind diamond() const {
        switch (family_) {
            case Family::gl:
            case Family::sl:
            case Family::s: return gl(n_);
            case Family::so: return (n_ % 2 == 0) ? so(n_ + 1) : *this;
            case Family::sp: return tsp(n_);
            case Family::tsp: return *this;
        }
        throw error("diamond: unreachable");
    }

    /// Standard embedding of this algebra into its diamond partner.
    Eigen::MatrixXcd embedMatrix(const Eigen::MatrixXcd& X) const {
        const AlgebraKind d = diamond();
        if (d.p() == p_) return X;
        Eigen::MatrixXcd Y = Eigen::MatrixXcd::Zero(d.p(), d.p());
        if (family_ == Family::so) {
            Y.topLeftCorner(p_, p_) = X;
        } else if (family_ == Family::sp) {
            Y.block(1, 1, p_, p_) = X;
        } else {
            throw error("embedMatrix: no embedding defined");
        }
        return Y;
    }

    Eigen::VectorXcd embedVector(const Eigen::VectorXcd& a) const {
        const AlgebraKind d = diamond();
        if (d.p() == p_) return a;
        Eigen::VectorXcd b = Eigen::VectorXcd::Zero(d.p());
        if (family_ == Family::so) {
            b.head(p_) = a;
        } else if (family_ == Family::sp) {
            b.segment(1, p_) = a;
        } else {
            throw error("embedVector: no embedding defined");
        }
        return b;
    }

    bool operator==(const AlgebraKind& o) const {
        return family_ == o.family_ && n_ == o.n_;
    }

  private:
    AlgebraKind(Family f, int n, int p) : family_(f), n_(n), p_(p) {
        sigma_ = makeSigma(f, p);
        eps_ = (f == Family::so) ? -1 : (f == Family::sp || f == Family::tsp) ? 1 : 0;
        basis_ = makeBasis();
    }

    static Eigen::MatrixXcd makeSigma(Family f, int p) {
        using M = Eigen::MatrixXcd;
        switch (f) {
            case Family::gl:
            case Family::sl:
            case Family::s: return M::Identity(p, p);
            case Family::so: {
                M s = M::Zero(p, p);
                const int m = p / 2;
                for (int i = 0; i < m; ++i) {
                    s(i, m + i) = 1.0;
                    s(m + i, i) = 1.0;
                }
                if (p % 2 == 1) s(p - 1, p - 1) = 1.0;
                return s;
            }
            case Family::sp: {
                M s = M::Zero(p, p);
                const int m = p / 2;
                for (int i = 0; i < m; ++i) {
                    s(i, m + i) = 1.0;
                    s(m + i, i) = -1.0;
                }
                return s;
            }
            case Family::tsp: {
                M s = M::Zero(p, p);
                s(0, p - 1) = 1.0;
                s(p - 1, 0) = -1.0;
                const int m = (p - 2) / 2;
                for (int i = 0; i < m; ++i) {
                    s(1 + i, 1 + m + i) = 1.0;
                    s(1 + m + i, 1 + i) = -1.0;
                }
                return s;
            }
        }
        throw error("makeSigma: unreachable");
    }

    /// Orthonormal basis from the nullspace of the defining linear relations.
    std::vector<Eigen::MatrixXcd> makeBasis() const {
        using M = Eigen::MatrixXcd;
        const int pp = p_ * p_;
        std::vector<Eigen::RowVectorXcd> rows;
        auto entry = [&](int i, int j) { return i * p_ + j; };

        if (family_ == Family::sl) {
            Eigen::RowVectorXcd tr = Eigen::RowVectorXcd::Zero(pp);
            for (int i = 0; i < p_; ++i) tr(entry(i, i)) = 1.0;
            rows.push_back(tr);
        } else if (family_ == Family::s) {
            for (int i = 0; i < p_; ++i)
                for (int j = 0; j < p_; ++j) {
                    if (i == j) continue;
                    Eigen::RowVectorXcd r = Eigen::RowVectorXcd::Zero(pp);
                    r(entry(i, j)) = 1.0;
                    rows.push_back(r);
                }
            for (int i = 1; i < p_; ++i) {
                Eigen::RowVectorXcd r = Eigen::RowVectorXcd::Zero(pp);
                r(entry(i, i)) = 1.0;
                r(entry(0, 0)) = -1.0;
                rows.push_back(r);
            }
        } else if (family_ == Family::so || family_ == Family::sp || family_ == Family::tsp) {
            // (X^t sigma + sigma X)_{ab} = sum_c X_{ca} sigma_{cb} + sigma_{ac} X_{cb}.
            for (int a = 0; a < p_; ++a)
                for (int b = 0; b < p_; ++b) {
                    Eigen::RowVectorXcd r = Eigen::RowVectorXcd::Zero(pp);
                    for (int c = 0; c < p_; ++c) {
                        r(entry(c, a)) += sigma_(c, b);
                        r(entry(c, b)) += sigma_(a, c);
                    }
                    rows.push_back(r);
                }
            if (family_ == Family::tsp) {
                for (int i = 0; i < p_; ++i) {
                    Eigen::RowVectorXcd r = Eigen::RowVectorXcd::Zero(pp);
                    r(entry(i, 0)) = 1.0;
                    rows.push_back(r);
                    Eigen::RowVectorXcd r2 = Eigen::RowVectorXcd::Zero(pp);
                    r2(entry(p_ - 1, i)) = 1.0;
                    rows.push_back(r2);
                }
            }
        }

        std::vector<M> out;
        if (rows.empty()) {
            out.reserve(std::size_t(pp));
            for (int i = 0; i < p_; ++i)
                for (int j = 0; j < p_; ++j) {
                    M B = M::Zero(p_, p_);
                    B(i, j) = 1.0;
                    out.push_back(B);
                }
            return out;
        }

        M A = M::Zero(Eigen::Index(rows.size()), pp);
        for (std::size_t r = 0; r < rows.size(); ++r) A.row(Eigen::Index(r)) = rows[r];
        Eigen::JacobiSVD<M> svd(A, Eigen::ComputeFullV);
        const auto& sv = svd.singularValues();
        const double thresh = 1e-10 * std::max(1.0, sv.size() ? sv(0) : 1.0);
        int rank = 0;
        for (Eigen::Index i = 0; i < sv.size(); ++i)
            if (sv(i) > thresh) ++rank;
        for (Eigen::Index c = rank; c < pp; ++c) {
            Eigen::VectorXcd v = svd.matrixV().col(c);
            M B(p_, p_);
            for (int i = 0; i < p_; ++i)
                for (int j = 0; j < p_; ++j) B(i, j) = v(entry(i, j));
            out.push_back(B);
        }
        return out;
    }

    Family family_;
    int n_;
    int p_;
    int eps_ = 0;
    Eigen::MatrixXcd sigma_;
    std::vector<Eigen::MatrixXcd> basis_;
};

}  // namespace ellax
