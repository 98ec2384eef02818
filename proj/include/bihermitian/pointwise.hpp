#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>

#include "errors.hpp"

/// Linear algebra at one tangent space of a real 4-manifold.
///
/// Matrix conventions, in a fixed basis e_a with dual basis e^a:
///   J      endomorphism, (J X)^a = J(a,b) X^b.
///   J*     action on covectors, J*α = -α∘J, matrix -Jᵀ.
///   ω      2-form as the map X ↦ ω(X,·), so m(b,a) = ω(e_a, e_b) and m = -mᵀ.
///   Q      bivector as the map α ↦ Q(α,·), so m(b,a) = Q(e^a, e^b).
///   g      symmetric, g(X,Y) = Yᵀ m X.
/// Composites are plain matrix products.  Worked example with the standard
/// J = [[0,-1,0,0],[1,0,0,0],[0,0,0,-1],[0,0,1,0]] and F = dx1∧dy1 + dx2∧dy2:
/// m_F = J, and the metric -m_F J is the identity.
namespace bihermitian {

using Vec4 = Eigen::Vector4d;
using Mat4 = Eigen::Matrix4d;
using CVec4 = Eigen::Vector4cd;
using CMat4 = Eigen::Matrix4cd;
using cplx = std::complex<double>;

inline constexpr double kAlgebraicTol = 1e-12;

struct ComplexStructurePt {
    Mat4 m;
};

struct TwoFormPt {
    Mat4 m;
};

struct BivectorPt {
    Mat4 m;
};

struct MetricPt {
    Mat4 m;
    bool positive_definite = false;
};

struct HoloBivectorPt {
    BivectorPt re;
    BivectorPt im;
};

inline Mat4 dual_action(const Mat4& j) { return -j.transpose(); }

inline double complex_structure_defect(const ComplexStructurePt& j)
{
    return (j.m * j.m + Mat4::Identity()).norm();
}

inline double antisymmetry_defect(const Mat4& m) { return (m + m.transpose()).norm(); }

/// Sign of the pairing of the J-fundamental form of the Euclidean-orthonormalised basis with
/// the reference volume e^0∧e^1∧e^2∧e^3.
inline double orientation_sign(const ComplexStructurePt& j)
{
    // Pfaffian of the 2-form ω(X,Y) = <JX, Y> with the identity metric symmetrised over J.
    Mat4 g = Mat4::Identity() + j.m.transpose() * j.m;
    Mat4 w = g * j.m;
    double pf = w(1, 0) * w(3, 2) - w(2, 0) * w(3, 1) + w(3, 0) * w(2, 1);
    return pf > 0 ? 1.0 : -1.0;
}

inline double anticommutation_defect(const BivectorPt& q, const ComplexStructurePt& j)
{
    return (j.m * q.m + q.m * dual_action(j.m)).norm();
}

/// (1,1) part and (2,0)+(0,2) part with respect to J.
inline Mat4 invariant_part(const Mat4& w, const Mat4& j) { return 0.5 * (w + j.transpose() * w * j); }

inline CMat4 invariant_part(const CMat4& w, const Mat4& j)
{
    CMat4 jc = j.cast<cplx>();
    return 0.5 * (w + jc.transpose() * w * jc);
}

inline Mat4 anti_part(const Mat4& w, const Mat4& j) { return w - invariant_part(w, j); }

inline std::pair<TwoFormPt, TwoFormPt> type_split(const TwoFormPt& w, const ComplexStructurePt& j)
{
    Mat4 inv = invariant_part(w.m, j.m);
    return {TwoFormPt{inv}, TwoFormPt{w.m - inv}};
}

/// ωJ - J*ω + ωQω as a map tangent → cotangent.
inline Mat4 gualtieri_residual(const Mat4& w, const Mat4& q, const Mat4& j)
{
    return w * j + j.transpose() * w + w * q * w;
}

inline Mat4 gualtieri_residual(const TwoFormPt& w, const BivectorPt& q, const ComplexStructurePt& j)
{
    return gualtieri_residual(w.m, q.m, j.m);
}

inline ComplexStructurePt build_jminus(const TwoFormPt& w, const BivectorPt& q, const ComplexStructurePt& j,
                                       double tol)
{
    double res = gualtieri_residual(w, q, j).norm();
    require(res <= tol, ErrorKind::InvalidInput,
            "build_jminus: Gualtieri residual " + std::to_string(res) + " exceeds tolerance");
    return {-j.m - q.m * w.m};
}

/// Smallest eigenvalue of the symmetric part.
inline double min_eigenvalue(const Mat4& g)
{
    Eigen::SelfAdjointEigenSolver<Mat4> es(0.5 * (g + g.transpose()), Eigen::EigenvaluesOnly);
    return es.eigenvalues()(0);
}

inline MetricPt build_metric(const TwoFormPt& w, const ComplexStructurePt& j, const ComplexStructurePt& jm)
{
    MetricPt g;
    g.m = -0.5 * w.m * (j.m - jm.m);
    double scale = g.m.norm();
    g.positive_definite = scale > 0 && min_eigenvalue(g.m) > kAlgebraicTol * scale;
    return g;
}

inline Mat4 commutator(const Mat4& jp, const Mat4& jm) { return 0.5 * (jp * jm - jm * jp); }

/// Φ = ½[J₊,J₋] with its index raised by g; returned as a map cotangent → tangent.
inline BivectorPt commutator_bivector(const ComplexStructurePt& jp, const ComplexStructurePt& jm, const MetricPt& g)
{
    Eigen::LDLT<Mat4> ldlt(0.5 * (g.m + g.m.transpose()));
    require(ldlt.info() == Eigen::Success && ldlt.isPositive() && std::abs(ldlt.vectorD().minCoeff()) > 0,
            ErrorKind::InvalidInput, "commutator_bivector: singular metric");
    Mat4 ginv = ldlt.solve(Mat4::Identity());
    return {commutator(jp.m, jm.m) * ginv};
}

inline double angle_p(const Mat4& jp, const Mat4& jm) { return -0.25 * (jp * jm).trace(); }

inline double angle_p(const ComplexStructurePt& jp, const ComplexStructurePt& jm) { return angle_p(jp.m, jm.m); }

/// ω = F₊ - (1/(1-p)) g(ΦJ₊·,·).
inline Mat4 extract_omega(const Mat4& g, const Mat4& jp, const Mat4& jm, double eps)
{
    double p = angle_p(jp, jm);
    require(p < 1.0 - eps, ErrorKind::Degenerate, "extract_omega: p too close to 1");
    Mat4 phi = commutator(jp, jm);
    return g * jp - g * phi * jp / (1.0 - p);
}

inline TwoFormPt extract_omega(const MetricPt& g, const ComplexStructurePt& jp, const ComplexStructurePt& jm,
                               double eps)
{
    return {extract_omega(g.m, jp.m, jm.m, eps)};
}

struct FixedPointResult {
    Mat4 omega;
    int iterations = 0;
    double residual = 0;
};

inline FixedPointResult fixed_point_solve_detail(const Mat4& f, const Mat4& q, const Mat4& j, double tol,
                                                 int max_iter)
{
    FixedPointResult out;
    out.omega = f;
    const double fscale = std::max(f.norm(), 1e-300);
    for (int it = 1; it <= max_iter; ++it) {
        Mat4 a = anti_part(0.5 * j.transpose() * (out.omega * q * out.omega), j);
        out.omega = f + a;
        out.iterations = it;
        out.residual = gualtieri_residual(out.omega, q, j).norm();
        if (!std::isfinite(out.residual) || a.norm() > 1e6 * fscale)
            throw Error(ErrorKind::NotConverged, "fixed_point_solve: iteration diverged");
        if (out.residual < tol) return out;
    }
    throw Error(ErrorKind::NotConverged, "fixed_point_solve: no convergence within max_iter");
}

inline TwoFormPt fixed_point_solve(const TwoFormPt& f, const BivectorPt& q, const ComplexStructurePt& j, double tol,
                                   int max_iter)
{
    return {fixed_point_solve_detail(f.m, q.m, j.m, tol, max_iter).omega};
}

enum class PointLabel { JPlusEqJMinus, JPlusEqNegJMinus, Generic };

inline const char* to_string(PointLabel l)
{
    switch (l) {
    case PointLabel::JPlusEqJMinus: return "J_PLUS_EQ_J_MINUS";
    case PointLabel::JPlusEqNegJMinus: return "J_PLUS_EQ_NEG_J_MINUS";
    default: return "GENERIC";
    }
}

inline PointLabel classify_point(double p, double tol)
{
    require(std::isfinite(p) && p >= -1.0 - tol && p <= 1.0 + tol, ErrorKind::InvalidInput,
            "classify_point: p outside [-1,1]");
    if (std::abs(p - 1.0) < tol) return PointLabel::JPlusEqJMinus;
    if (std::abs(p + 1.0) < tol) return PointLabel::JPlusEqNegJMinus;
    return PointLabel::Generic;
}

/// The standard complex structure of C² in the real basis (x1, y1, x2, y2).
inline Mat4 standard_j()
{
    Mat4 j = Mat4::Zero();
    j(1, 0) = 1;
    j(0, 1) = -1;
    j(3, 2) = 1;
    j(2, 3) = -1;
    return j;
}

/// Real matrix of the bivector h ∂_{z1}∧∂_{z2} in the real basis (x1, y1, x2, y2).
inline HoloBivectorPt holomorphic_bivector(cplx h)
{
    // ∂_{z_k} = ½(∂_{x_k} - i ∂_{y_k})
    CVec4 d1(0.5, cplx(0, -0.5), 0, 0);
    CVec4 d2(0, 0, 0.5, cplx(0, -0.5));
    CMat4 s = h * (d1 * d2.transpose() - d2 * d1.transpose());
    return {BivectorPt{s.real().transpose()}, BivectorPt{s.imag().transpose()}};
}

} // namespace bihermitian
