#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <vector>

#include "deformation.hpp"
#include "interp.hpp"

namespace bihermitian {

/// Section f of L*; `exponent` and `scale` tag the candidate f = scale·|z|^{2r}.
struct Potential {
    ScalarField f;
    double exponent = 0;
    double scale = 1;
};

inline Generator<double> radial_generator(double r, double scale = 1)
{
    return [=](const NodeGeometry& geo) { return scale * std::pow(geo.r, 2 * r); };
}

/// Scale with d d^c(scale·|z|^{2r}) equal to the Vaisman form F_r.
inline double calibrated_scale(double r) { return 1 / (4 * r); }

/// f = scale·|z|^{2r} as a section of `lstar`; its automorphy factor must be the bundle factor.
inline Potential radial_potential(GridPtr g, const FlatBundleSpec& lstar, double r, double scale = 1,
                                  double tol = 1e-10)
{
    const double res = seam_residual<double>(*g, lstar, radial_generator(r, 1.0));
    require(res <= tol, ErrorKind::InvalidInput,
            "radial_potential: |z|^{2r} has the wrong automorphy factor for this bundle (seam residual " +
                std::to_string(res) + ")");
    return {sample<double>(g, lstar, ValueKind::Scalar, radial_generator(r, scale)), r, scale};
}

struct PotentialForm {
    Form2Field F;
    double min_eig = 0;
    bool positive = false;
};

/// F = d_θ d^c_θ f with d^c = i(∂̄ - ∂) = J*d; rejects f when the J-invariant part of F is not positive.
inline PotentialForm lck_from_potential(const Stencil& st, const Potential& p, const LeeData& th, const MatField& j)
{
    const auto& g = *p.f.grid;
    const double th_s = -std::log(p.f.factor());
    require(std::abs(th.theta.data[0](AxisS) - th_s) <= 1e-12 * (1 + std::abs(th_s)), ErrorKind::InvalidInput,
            "lck_from_potential: Lee form does not match the bundle of f");
    auto df = novikov_d(st, p.f, &th);
    Form1Field dc(p.f.grid, p.f.bundle, ValueKind::OneForm, Vec4::Zero());
    parallel_for(g.size(), [&](std::size_t x) { dc.data[x] = -j.data[x].transpose() * df.data[x]; });
    PotentialForm out;
    out.F = novikov_d(st, dc, &th);
    out.min_eig = parallel_min(g.size(), [&](std::size_t x) {
        const Mat4& jx = j.data[x];
        Mat4 gm = -invariant_part(out.F.data[x], jx) * jx;
        return min_eigenvalue(frame_two_form(Mat4(0.5 * (gm + gm.transpose())), g.frame(x)));
    });
    out.positive = out.min_eig > 0;
    require(out.positive, ErrorKind::InvalidInput, "lck_from_potential: J-invariant part of F is not positive");
    return out;
}

/// X_f = Q(d_θ f, ·); the twists of Q and f must cancel.
inline Form1Field hamiltonian_field(const Stencil& st, const Potential& p, const LeeData& th, const MatField& q)
{
    const auto& g = *p.f.grid;
    require(std::abs(q.factor() * p.f.factor() - 1) <= 1e-12, ErrorKind::Config,
            "hamiltonian_field: the twists of Q and f do not cancel");
    auto df = novikov_d(st, p.f, &th);
    Form1Field x(p.f.grid, {}, ValueKind::Vector, Vec4::Zero());
    parallel_for(g.size(), [&](std::size_t i) { x.data[i] = q.data[i].transpose() * df.data[i]; });
    return x;
}

/// Closed-picture data of the flow at ambient points of C²∖0: the vector field X̂, the
/// L*-valued form F̂ and the L-valued Poisson bivector Q̂, all in the flat gauge.
struct AmbientFields {
    std::function<Vec4(const Vec4&)> velocity;
    std::function<Mat4(const Vec4&)> form;
    std::function<Mat4(const Vec4&)> poisson;
};

namespace detail {

inline Coord wrapped_coord(const Vec4& x, const HopfParams& hp, double& s_unwrapped)
{
    Coord c = coord_of(x, hp.lambda(), hp.r0);
    s_unwrapped = c.s;
    c.s -= std::floor(c.s);
    return c;
}

} // namespace detail

/// Ambient fields from grid data by cubic interpolation of frame components.
inline AmbientFields interpolated_fields(const Form1Field& xf, const Form2Field& f, const MatField& q)
{
    const auto g = xf.grid;
    const std::size_t n = g->size();
    auto xc = std::make_shared<std::vector<Vec4>>(n);
    auto fc = std::make_shared<std::vector<Mat4>>(n);
    auto qc = std::make_shared<std::vector<Mat4>>(n);
    parallel_for(n, [&](std::size_t i) {
        (*xc)[i] = g->frame_inv(i) * xf.data[i];
        (*fc)[i] = frame_two_form(f.data[i], g->frame(i));
        (*qc)[i] = frame_bivector(q.data[i], g->frame_inv(i));
    });
    auto ip = std::make_shared<GridInterpolator>(g);
    const HopfParams hp = g->params();
    const double mu_f = f.factor(), mu_q = q.factor();
    AmbientFields out;
    out.velocity = [=](const Vec4& x) -> Vec4 {
        double s;
        Coord c = detail::wrapped_coord(x, hp, s);
        return x.norm() * (*ip)(*xc, c);
    };
    out.form = [=](const Vec4& x) -> Mat4 {
        double s;
        Coord c = detail::wrapped_coord(x, hp, s);
        return std::pow(mu_f, s) / x.squaredNorm() * (*ip)(*fc, c);
    };
    out.poisson = [=](const Vec4& x) -> Mat4 {
        double s;
        Coord c = detail::wrapped_coord(x, hp, s);
        return std::pow(mu_q, s) * x.squaredNorm() * (*ip)(*qc, c);
    };
    return out;
}

/// Ambient fields of f = scale·|z|^{2r} and σ = sigma_scale·z1^{m1} z2^{m2} ∂_{z1}∧∂_{z2} in closed form.
inline AmbientFields radial_fields(double r, double scale, int m1, int m2, double sigma_scale)
{
    const Mat4 j0 = standard_j();
    AmbientFields out;
    out.poisson = [=](const Vec4& x) -> Mat4 {
        return holomorphic_bivector(sigma_coefficient(x, m1, m2, sigma_scale)).re.m;
    };
    auto poisson = out.poisson;
    out.velocity = [=](const Vec4& x) -> Vec4 {
        const double rho = x.squaredNorm();
        return poisson(x).transpose() * Vec4(2 * scale * r * std::pow(rho, r - 1) * x);
    };
    out.form = [=](const Vec4& x) -> Mat4 {
        const double rho = x.squaredNorm();
        // Hessian of ρ^r, then d(J* df) with comp(a,b) = ∂_a β_b - ∂_b β_a stored transposed
        Mat4 h = scale * (2 * r * std::pow(rho, r - 1) * Mat4::Identity() +
                          4 * r * (r - 1) * std::pow(rho, r - 2) * (x * x.transpose()));
        Mat4 dbeta = -(j0.transpose() * h).transpose(); // dbeta(a,b) = ∂_a β_b
        Mat4 comp = dbeta - dbeta.transpose();
        return comp.transpose();
    };
    return out;
}

struct FlowConfig {
    double t_final = 0.25;
    int n_steps = 16;
    double jacobian_step = 1e-5;

    void validate() const
    {
        require(n_steps >= 4 && n_steps % 2 == 0, ErrorKind::Config, "FlowConfig: n_steps must be even and at least 4");
        require(std::isfinite(t_final) && t_final >= 0, ErrorKind::Config, "FlowConfig: t_final must be non-negative");
        require(jacobian_step > 0 && jacobian_step < 1e-2, ErrorKind::Config, "FlowConfig: jacobian_step out of range");
    }
};

/// Flow samples φ_{s_k}(x) and Dφ_{s_k}(x) at s_k = k s/n for every node x.
struct FlowMap {
    GridPtr grid;
    std::vector<double> s;
    std::vector<Vec4> points;    // [node * (n+1) + k], ambient
    std::vector<Mat4> jacobians;

    std::size_t samples() const { return s.size(); }
    const Vec4& point(std::size_t node, std::size_t k) const { return points[node * samples() + k]; }
    const Mat4& jacobian(std::size_t node, std::size_t k) const { return jacobians[node * samples() + k]; }
};

namespace detail {

inline Vec4 rk4_step(const AmbientFields& f, const Vec4& x, double h)
{
    const Vec4 k1 = f.velocity(x);
    const Vec4 k2 = f.velocity(x + 0.5 * h * k1);
    const Vec4 k3 = f.velocity(x + 0.5 * h * k2);
    const Vec4 k4 = f.velocity(x + h * k3);
    Vec4 y = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
    const double ratio = y.norm() / x.norm();
    require(std::isfinite(ratio) && ratio > 1e-3 && ratio < 1e3, ErrorKind::Solver,
            "integrate_flow: characteristic escapes towards |z| = 0 or ∞; the flow time is too large");
    return y;
}

} // namespace detail

/// Fixed-step RK4 characteristics from every node; Jacobians by central differences of
/// neighbouring characteristics.
inline FlowMap integrate_flow(const AmbientFields& f, GridPtr grid, double s_final, int n_steps,
                              double jacobian_step = 1e-5)
{
    require(n_steps >= 1, ErrorKind::Config, "integrate_flow: n_steps must be positive");
    FlowMap m;
    m.grid = grid;
    const std::size_t ns = std::size_t(n_steps) + 1;
    for (std::size_t k = 0; k < ns; ++k) m.s.push_back(s_final * double(k) / n_steps);
    m.points.resize(grid->size() * ns);
    m.jacobians.resize(grid->size() * ns);
    const double h = s_final / n_steps;
    parallel_for(grid->size(), [&](std::size_t i) {
        const Vec4 x0 = grid->geometry(i).x;
        const double dx = jacobian_step * x0.norm();
        Vec4 c = x0;
        Vec4 plus[4], minus[4];
        for (int a = 0; a < 4; ++a) {
            plus[a] = x0 + dx * Vec4::Unit(a);
            minus[a] = x0 - dx * Vec4::Unit(a);
        }
        for (std::size_t k = 0; k < ns; ++k) {
            if (k > 0) {
                c = detail::rk4_step(f, c, h);
                for (int a = 0; a < 4; ++a) {
                    plus[a] = detail::rk4_step(f, plus[a], h);
                    minus[a] = detail::rk4_step(f, minus[a], h);
                }
            }
            Mat4 jac;
            for (int a = 0; a < 4; ++a) jac.col(a) = (plus[a] - minus[a]) / (2 * dx);
            m.points[i * ns + k] = c;
            m.jacobians[i * ns + k] = jac;
        }
    });
    return m;
}

struct FlowForm {
    Form2Field omega;              // stored field on the grid, section of L*
    std::vector<Mat4> omega_ambient; // per node, flat gauge
    FlowMap map;
};

/// ω(t) = ∫_0^t φ_s^* F ds by composite Simpson over the RK4 samples.
inline FlowForm omega_flow(const AmbientFields& f, GridPtr grid, const FlatBundleSpec& lstar, double t,
                           const FlowConfig& cfg)
{
    cfg.validate();
    const auto& g = *grid;
    FlowForm out;
    out.omega = Form2Field(grid, lstar, ValueKind::TwoForm, Mat4::Zero());
    out.omega_ambient.assign(g.size(), Mat4::Zero());
    out.map = integrate_flow(f, grid, t, cfg.n_steps, cfg.jacobian_step);
    if (t == 0) return out;
    const int n = cfg.n_steps;
    const double h = t / n;
    const double mu = lstar.factor(g.params());
    parallel_for(g.size(), [&](std::size_t i) {
        Mat4 acc = Mat4::Zero();
        for (int k = 0; k <= n; ++k) {
            const double w = (k == 0 || k == n) ? 1.0 : (k % 2 ? 4.0 : 2.0);
            const Mat4& d = out.map.jacobian(i, k);
            acc += w * (d.transpose() * f.form(out.map.point(i, k)) * d);
        }
        acc *= h / 3;
        out.omega_ambient[i] = 0.5 * (acc - acc.transpose());
        auto geo = g.geometry(i);
        Mat4 w = std::pow(mu, -geo.c.s) * geo.jac.transpose() * out.omega_ambient[i] * geo.jac;
        out.omega.data[i] = 0.5 * (w - w.transpose());
    });
    return out;
}

/// Sup over nodes of |-φ_t(J) - (-J - Q̂ ω̂(t))| with φ_t(J) = (Dφ_t)⁻¹ J Dφ_t.
inline double flow_structure_residual(const AmbientFields& f, const FlowForm& w)
{
    const auto& g = *w.omega.grid;
    const Mat4 j0 = standard_j();
    const std::size_t last = w.map.samples() - 1;
    return parallel_max(g.size(), [&](std::size_t i) {
        const Mat4& a = w.map.jacobian(i, last);
        Mat4 jt = a.partialPivLu().solve(Mat4(j0 * a));
        const Vec4 x = g.geometry(i).x;
        Mat4 rhs = -j0 - f.poisson(x) * w.omega_ambient[i];
        return (Mat4(-jt) - rhs).norm();
    });
}

struct CrossValidation {
    double t = 0;
    double discrepancy = 0;      // frame sup of ω_flow(t) - ω_series(t)
    double discrepancy_half = 0; // same at t/2
    double slope = 0;            // log2(discrepancy / discrepancy_half)
    double structure_residual = 0;
    double step_refinement = 0;  // frame sup of ω_flow(t) with n and 2n steps
};

inline double form_discrepancy(const Form2Field& a, const Form2Field& b)
{
    require(a.grid == b.grid && a.size() == b.size(), ErrorKind::InvalidInput, "cross_validate: mismatched grids");
    const auto& g = *a.grid;
    return parallel_max(g.size(), [&](std::size_t i) {
        return frame_two_form(Mat4(a.data[i] - b.data[i]), g.frame(i)).norm();
    });
}

/// Two-point slope of the flow/series discrepancy at t and t/2.
inline CrossValidation cross_validate(const Form2Field& flow_t, const Form2Field& series_t, const Form2Field& flow_half,
                                      const Form2Field& series_half, double t)
{
    CrossValidation cv;
    cv.t = t;
    cv.discrepancy = form_discrepancy(flow_t, series_t);
    cv.discrepancy_half = form_discrepancy(flow_half, series_half);
    cv.slope = cv.discrepancy_half > 0 ? std::log2(cv.discrepancy / cv.discrepancy_half) : 0.0;
    return cv;
}

} // namespace bihermitian
