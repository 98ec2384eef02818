#pragma once

#include <cmath>
#include <numbers>

#include "forms.hpp"

namespace bihermitian {

inline Generator<Mat4> standard_j_generator()
{
    return [](const NodeGeometry& g) -> Mat4 { return g.jac_inv * standard_j() * g.jac; };
}

/// Pushforward of multiplication by i through the chart; γ-invariant.
inline MatField standard_complex_structure(GridPtr g)
{
    return sample<Mat4>(g, {}, ValueKind::Endomorphism, standard_j_generator());
}

inline double complex_structure_defect(const MatField& j)
{
    return parallel_max(j.size(), [&](std::size_t i) {
        return (j.data[i] * j.data[i] + Mat4::Identity()).norm() /
               std::max(1.0, j.data[i].squaredNorm() * 0.25);
    });
}

/// Lee form θ0 = -d log|z|² = -2 ln λ ds of the Hopf-Vaisman metric.
inline Vec4 theta0(double lambda) { return Vec4(-2 * std::log(lambda), 0, 0, 0); }

/// Coordinate matrix of g_t = g0 + (t-1)/|θ0|² (θ0⊗θ0 + Jθ0⊗Jθ0), g0 = |dz|²/|z|².
inline Mat4 vaisman_metric(const NodeGeometry& geo, double lambda, double t)
{
    Mat4 g0 = geo.jac.transpose() * geo.jac / (geo.r * geo.r);
    Vec4 th = theta0(lambda);
    Mat4 j = geo.jac_inv * standard_j() * geo.jac;
    Vec4 jth = j.transpose() * th;
    double n2 = th.dot(g0.ldlt().solve(th));
    return g0 + (t - 1) / n2 * (th * th.transpose() + jth * jth.transpose());
}

inline Generator<Mat4> vaisman_metric_generator(double lambda, double t)
{
    return [=](const NodeGeometry& geo) -> Mat4 { return vaisman_metric(geo, lambda, t); };
}

struct VaismanData {
    MatField g;   // metric
    Form2Field F; // F_t = g_t(J·,·), map G_t J; dF = θ_t∧F
    LeeData theta;
};

inline VaismanData vaisman_family(GridPtr grid, double t)
{
    require(t > 0, ErrorKind::InvalidInput, "vaisman_family: t must be positive");
    const double lambda = grid->lambda();
    VaismanData out;
    out.g = sample<Mat4>(grid, {}, ValueKind::Metric,
                         [=](const NodeGeometry& geo) -> Mat4 { return vaisman_metric(geo, lambda, t); });
    out.F = sample<Mat4>(grid, {}, ValueKind::TwoForm, [=](const NodeGeometry& geo) -> Mat4 {
        return vaisman_metric(geo, lambda, t) * (geo.jac_inv * standard_j() * geo.jac);
    });
    out.theta.theta = Form1Field(grid, {}, ValueKind::OneForm, t * theta0(lambda));
    out.theta.t_parameter = t;
    return out;
}

/// Frame sup-norm of dF - θ∧F.
inline double lck_residual(const Stencil& st, const Form2Field& F, const LeeData& th)
{
    auto r = novikov_d(st, F, &th);
    return frame_sup_norm(r);
}

inline double min_metric_eigenvalue(const MatField& g)
{
    const auto& grid = *g.grid;
    return parallel_min(g.size(), [&](std::size_t i) { return min_eigenvalue(frame_two_form(g.data[i], grid.frame(i))); });
}

/// t* with c0^{t*} = μ*, c0 = a1 a2, μ* the factor of the dual of L.
inline double select_t_for_bundle(const HopfParams& hp, const FlatBundleSpec& L)
{
    const double mu = L.factor(hp);
    require(mu > 1, ErrorKind::InvalidInput, "select_t_for_bundle: the bundle factor must exceed 1");
    const double c0 = hp.a1 * hp.a2;
    return std::log(1.0 / mu) / std::log(c0);
}

/// σ = h ∂_{z1}∧∂_{z2} with h = z1^{m1} z2^{m2}, m_i = p_i + 1.
struct SigmaField {
    MatField re;
    MatField im;
    int m1 = 0, m2 = 0;
    double scale = 1;
};

inline cplx sigma_coefficient(const Vec4& x, int m1, int m2, double scale)
{
    cplx z1(x(0), x(1)), z2(x(2), x(3));
    return scale * std::pow(z1, m1) * std::pow(z2, m2);
}

inline Generator<Mat4> sigma_generator(int m1, int m2, double scale, bool imag)
{
    return [=](const NodeGeometry& geo) -> Mat4 {
        auto s = holomorphic_bivector(sigma_coefficient(geo.x, m1, m2, scale));
        const Mat4& p = imag ? s.im.m : s.re.m;
        return geo.jac_inv * p * geo.jac_inv.transpose();
    };
}

inline SigmaField sigma_section(GridPtr g, const FlatBundleSpec& L, double scale = 1.0)
{
    require(L.power == 1, ErrorKind::InvalidInput, "sigma_section: expects the bundle itself (power 1)");
    const int m1 = L.p1 + 1, m2 = L.p2 + 1;
    require(m1 >= 0 && m2 >= 0, ErrorKind::InvalidInput,
            "sigma_section: K*⊗L has no monomial section for these exponents");
    SigmaField s;
    s.m1 = m1;
    s.m2 = m2;
    s.scale = scale;
    s.re = sample<Mat4>(g, L, ValueKind::Bivector, sigma_generator(m1, m2, scale, false));
    s.im = sample<Mat4>(g, L, ValueKind::Bivector, sigma_generator(m1, m2, scale, true));
    return s;
}

/// Residual of the twisted Cauchy-Riemann equation for σ, measured on the coefficient
/// h = <dz1∧dz2, σ>, a section whose factor is μ λ².
inline double sigma_cauchy_riemann_residual(const Stencil& st, const SigmaField& s, const MatField& j)
{
    const auto& g = *s.re.grid;
    FlatBundleSpec hb = s.re.bundle;
    CScalarField h(s.re.grid, hb, ValueKind::Scalar, 0.0);
    CVec4 dz1(1, cplx(0, 1), 0, 0), dz2(0, 0, 1, cplx(0, 1));
    CMat4 omega_amb = dz1 * dz2.transpose() - dz2 * dz1.transpose();
    parallel_for(g.size(), [&](std::size_t i) {
        NodeGeometry geo = g.geometry(i);
        const double rr = g.params().r0 / geo.r;
        CMat4 om = rr * rr * geo.jac.transpose().cast<cplx>() * omega_amb * geo.jac.cast<cplx>();
        CMat4 sg = s.re.data[i].cast<cplx>() + cplx(0, 1) * s.im.data[i].cast<cplx>();
        h.data[i] = 0.5 * (sg.transpose().cwiseProduct(om)).sum();
    });
    const double mu = hb.factor(g.params()) * g.lambda() * g.lambda();
    LeeData th{Form1Field(s.re.grid, {}, ValueKind::OneForm, Vec4(-std::log(mu), 0, 0, 0)), 0};
    auto dh = novikov_d(st, h, &th);
    double num = 0, den = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        CVec4 d01 = 0.5 * (dh.data[i] + cplx(0, 1) * (j.data[i].transpose().cast<cplx>() * dh.data[i]));
        num = std::max(num, frame_one_form(d01, g.frame(i)).norm());
        den = std::max(den, frame_one_form(dh.data[i], g.frame(i)).norm());
    }
    return den > 0 ? num / den : num;
}

/// -(1/2π) ∫ |θ|²_g dv_g by midpoint quadrature.
inline double degree_check(const MatField& g, const LeeData& th)
{
    const auto& grid = *g.grid;
    double integral = parallel_sum<double>(g.size(), [&](std::size_t i) {
        const Mat4& G = g.data[i];
        double det = G.determinant();
        require(det > 0, ErrorKind::Degenerate, "degree_check: degenerate volume element");
        const Vec4& t = th.theta.data[i];
        return t.dot(G.ldlt().solve(t)) * std::sqrt(det);
    });
    return -integral * grid.cell_volume() / (2 * std::numbers::pi);
}

/// Period of θ along the S¹ generator s ∈ [0,1] at a fixed point of the 3-sphere.
inline double lee_period(const LeeData& th)
{
    const auto& g = *th.theta.grid;
    double p = 0;
    for (int is = 0; is < g.n(AxisS); ++is) p += th.theta.data[g.index(is, 0, 0, 0)](AxisS);
    return p * g.h(AxisS);
}

/// exp(-∮θ) divided by the dual factor μ* of L.
inline double holonomy_check(const Stencil& st, const LeeData& th, const FlatBundleSpec& L)
{
    auto dth = exterior_d1(st, th.theta);
    const double scale = std::max(frame_sup_norm(th.theta), 1e-300);
    require(frame_sup_norm(dth) <= 1e-8 * scale + 1e-14, ErrorKind::InvalidInput,
            "holonomy_check: θ is not closed");
    const auto& hp = th.theta.grid->params();
    const double mu_star = L.dual().factor(hp);
    return std::exp(-lee_period(th)) / mu_star;
}

} // namespace bihermitian
