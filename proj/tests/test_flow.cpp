#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include <bihermitian/flow.hpp>

using namespace bihermitian;

namespace {

struct FlowCase {
    GridPtr grid;
    DeformationProblem pb;
    double r;
    AmbientFields fields;

    explicit FlowCase(int k, int p2 = 0, double sigma_scale = 1.0)
        : grid(make_grid({0.5, 0.5, 1.0}, {8 * k, 4 * k + 1, 8 * k, 8 * k})),
          pb(make_problem(grid, {-1, p2, 1}, sigma_scale)), r(pb.t_star),
          fields(radial_fields(r, calibrated_scale(r), pb.sigma.m1, pb.sigma.m2, sigma_scale))
    {
    }
    FlatBundleSpec lstar() const { return pb.bundle.dual(); }
};

double relative_to_vaisman(const FlowCase& c, const Form2Field& f, double factor)
{
    Form2Field d = f;
    for (std::size_t i = 0; i < d.size(); ++i) d.data[i] -= factor * c.pb.f.data[i];
    return frame_sup_norm(d) / (std::abs(factor) * frame_sup_norm(c.pb.f));
}

} // namespace

TEST(Interpolation, ReproducesNodeValues)
{
    auto g = make_grid({0.5, 0.5, 1.0}, {8, 5, 8, 8});
    GridInterpolator ip(g);
    std::vector<double> v(g->size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::sin(double(i) * 0.37);
    for (std::size_t i = 0; i < v.size(); i += 11) EXPECT_NEAR(ip(v, g->coord(i)), v[i], 1e-13);
}

TEST(Interpolation, FourthOrderAcrossPoles)
{
    // a smooth function of the ambient point, probed next to both poles
    auto fn = [](const Vec4& x) { return x(0) * x(2) + std::cos(x(1)) * x(3) + x(3) * x(3); };
    auto err = [&](int k) {
        auto g = make_grid({0.5, 0.5, 1.0}, {8 * k, 4 * k + 1, 8 * k, 8 * k});
        GridInterpolator ip(g);
        std::vector<double> v(g->size());
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = fn(g->geometry(i).x / g->geometry(i).r);
        double e = 0;
        for (double eta : {0.01, 0.3, 0.9, 1.56})
            for (double xi : {0.1, 2.0, 4.5}) {
                Coord c{0.37, eta, xi, 1.3 * xi};
                auto geo = node_geometry(c, 0.5, 1.0);
                e = std::max(e, std::abs(ip(v, c) - fn(geo.x / geo.r)));
            }
        return e;
    };
    const double e1 = err(1), e2 = err(2);
    EXPECT_GT(std::log2(e1 / e2), 3.5) << e1 << " " << e2;
}

TEST(Potential, WrongExponentFailsSeamCheck)
{
    FlowCase c(1);
    EXPECT_NO_THROW(radial_potential(c.grid, c.lstar(), c.r));
    EXPECT_THROW(radial_potential(c.grid, c.lstar(), 0.3), Error);
}

TEST(Potential, ZeroIsRejected)
{
    FlowCase c(1);
    auto p = radial_potential(c.grid, c.lstar(), c.r, 0.0);
    try {
        lck_from_potential(*c.pb.stencil, p, c.pb.theta, c.pb.j);
        FAIL() << "zero potential accepted";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::InvalidInput);
    }
}

TEST(Potential, UncalibratedRadialIsProportionalToVaisman)
{
    // f = |z| at λ = 0.5 gives 4r F with r = 1/2
    std::vector<double> err;
    for (int k : {1, 2}) {
        FlowCase c(k);
        auto p = radial_potential(c.grid, c.lstar(), c.r);
        auto out = lck_from_potential(*c.pb.stencil, p, c.pb.theta, c.pb.j);
        EXPECT_TRUE(out.positive);
        err.push_back(relative_to_vaisman(c, out.F, 4 * c.r));
    }
    EXPECT_LT(err[0], 1e-2);
    EXPECT_GT(std::log2(err[0] / err[1]), 3.0);
}

TEST(Potential, ClosedFormMatchesVaismanExactly)
{
    for (int p2 : {0, -1}) {
        FlowCase c(1, p2);
        double worst = 0;
        const double mu = c.lstar().factor(c.grid->params());
        for (std::size_t i = 0; i < c.grid->size(); ++i) {
            auto geo = c.grid->geometry(i);
            Mat4 stored = std::pow(mu, -geo.c.s) * geo.jac.transpose() * c.fields.form(geo.x) * geo.jac;
            worst = std::max(worst, frame_two_form(Mat4(stored - c.pb.f.data[i]), c.grid->frame(i)).norm());
        }
        EXPECT_LT(worst / frame_sup_norm(c.pb.f), 1e-13) << "p2=" << p2;
    }
}

TEST(HamiltonianField, VanishesForZeroPoisson)
{
    FlowCase c(1, 0, 0.0);
    auto p = radial_potential(c.grid, c.lstar(), c.r);
    auto x = hamiltonian_field(*c.pb.stencil, p, c.pb.theta, c.pb.q);
    EXPECT_EQ(sup_norm(x), 0.0);
}

TEST(HamiltonianField, VanishesForConstantUntwisted)
{
    FlowCase c(1);
    auto g = c.grid;
    Potential p{ScalarField(g, {}, ValueKind::Scalar, 1.0), 0, 1};
    LeeData th = lee_form_for(g, {});
    MatField q = c.pb.q;
    q.bundle = {};
    auto x = hamiltonian_field(*c.pb.stencil, p, th, q);
    EXPECT_LT(sup_norm(x), 1e-14);
}

TEST(HamiltonianField, RejectsNonCancellingTwists)
{
    FlowCase c(1);
    auto p = radial_potential(c.grid, c.lstar(), c.r);
    MatField q = c.pb.q;
    q.bundle = c.lstar();
    try {
        hamiltonian_field(*c.pb.stencil, p, c.pb.theta, q);
        FAIL() << "twist mismatch accepted";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Config);
    }
}

TEST(HamiltonianField, GridRouteMatchesClosedForm)
{
    FlowCase c(1);
    auto p = radial_potential(c.grid, c.lstar(), c.r, calibrated_scale(c.r));
    auto x = hamiltonian_field(*c.pb.stencil, p, c.pb.theta, c.pb.q);
    auto ip = interpolated_fields(x, c.pb.f, c.pb.q);
    double worst = 0, scale = 0;
    for (std::size_t i = 0; i < c.grid->size(); i += 5) {
        Vec4 z = c.grid->geometry(i).x * 1.07;
        worst = std::max(worst, (ip.velocity(z) - c.fields.velocity(z)).norm());
        scale = std::max(scale, c.fields.velocity(z).norm());
    }
    EXPECT_LT(worst / scale, 1e-12);
}

TEST(HamiltonianField, VanishesOnZ2Overlay)
{
    FlowCase c(1);
    for (double xi : {0.0, 1.0, 2.5})
        for (double rr : {0.6, 0.9}) {
            Vec4 z(rr * std::cos(xi), rr * std::sin(xi), 0, 0);
            EXPECT_EQ(c.fields.velocity(z).norm(), 0.0);
        }
}

TEST(Flow, IdentityWhenFieldVanishes)
{
    FlowCase c(1, 0, 0.0);
    auto m = integrate_flow(c.fields, c.grid, 0.5, 4);
    for (std::size_t i = 0; i < c.grid->size(); ++i) {
        ASSERT_EQ(m.point(i, 4), c.grid->geometry(i).x);
        ASSERT_LT((m.jacobian(i, 4) - Mat4::Identity()).norm(), 1e-10);
    }
}

TEST(Flow, ReversibleAtIntegratorOrder)
{
    FlowCase c(1);
    auto rev = [&](int n) {
        auto m = integrate_flow(c.fields, c.grid, 1.0, n);
        double e = 0;
        for (std::size_t i = 0; i < c.grid->size(); i += 3) {
            Vec4 z = m.point(i, n);
            for (int k = 0; k < n; ++k) z = detail::rk4_step(c.fields, z, -1.0 / n);
            e = std::max(e, (z - c.grid->geometry(i).x).norm());
        }
        return e;
    };
    const double e4 = rev(4), e8 = rev(8);
    EXPECT_LT(e4, 1e-9);
    EXPECT_GT(std::log2(e4 / e8), 4.0);
}

TEST(Flow, EscapeIsReported)
{
    FlowCase c(1, 0, 50.0);
    try {
        integrate_flow(c.fields, c.grid, 400.0, 4);
        FAIL() << "escape not detected";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Solver);
    }
}

TEST(OmegaFlow, ZeroAtZero)
{
    FlowCase c(1);
    auto w = omega_flow(c.fields, c.grid, c.lstar(), 0.0, {});
    EXPECT_EQ(frame_sup_norm(w.omega), 0.0);
}

TEST(OmegaFlow, LinearWhenPoissonVanishes)
{
    FlowCase c(1, 0, 0.0);
    const double t = 0.4;
    auto w = omega_flow(c.fields, c.grid, c.lstar(), t, {});
    EXPECT_LT(relative_to_vaisman(c, w.omega, t), 1e-10);
}

TEST(OmegaFlow, RealAntisymmetric)
{
    FlowCase c(1);
    auto w = omega_flow(c.fields, c.grid, c.lstar(), 0.5, {});
    for (const auto& m : w.omega.data) {
        ASSERT_TRUE(m.allFinite());
        ASSERT_EQ((m + m.transpose()).norm(), 0.0);
    }
}

TEST(OmegaFlow, DerivativeAtZeroIsF)
{
    FlowCase c(1);
    FlowConfig cfg;
    cfg.n_steps = 4;
    auto e = [&](double h) { return relative_to_vaisman(c, omega_flow(c.fields, c.grid, c.lstar(), h, cfg).omega, h); };
    const double e1 = e(1e-2), e2 = e(5e-3);
    EXPECT_LT(e1, 1e-2);
    EXPECT_NEAR(std::log2(e1 / e2), 1.0, 0.1);
}

TEST(OmegaFlow, GualtieriResidualAtIntegratorOrder)
{
    FlowCase c(1);
    auto res = [&](int n) {
        FlowConfig cfg;
        cfg.n_steps = n;
        return gualtieri_field_residual(omega_flow(c.fields, c.grid, c.lstar(), 1.0, cfg).omega, c.pb.q, c.pb.j);
    };
    const double r4 = res(4), r8 = res(8);
    EXPECT_GT(std::log2(r4 / r8), 3.5) << r4 << " " << r8;
}

TEST(OmegaFlow, StructureIdentityAtIntegratorOrder)
{
    FlowCase c(1);
    auto res = [&](int n) {
        FlowConfig cfg;
        cfg.n_steps = n;
        return flow_structure_residual(c.fields, omega_flow(c.fields, c.grid, c.lstar(), 1.0, cfg));
    };
    const double r4 = res(4), r8 = res(8);
    EXPECT_LT(r8, 1e-7);
    EXPECT_GT(std::log2(r4 / r8), 3.5) << r4 << " " << r8;
}

TEST(CrossValidate, SharesFirstDerivativeWithSeries)
{
    FlowCase c(1);
    DeformConfig dc;
    auto s = build_series(c.pb, dc);
    const double t = 0.5;
    FlowConfig cfg;
    auto wt = omega_flow(c.fields, c.grid, c.lstar(), t, cfg);
    auto wh = omega_flow(c.fields, c.grid, c.lstar(), t / 2, cfg);
    auto cv = cross_validate(wt.omega, assemble(s, t), wh.omega, assemble(s, t / 2), t);
    EXPECT_GT(cv.discrepancy, 0.0);
    EXPECT_GE(cv.slope, 1.8);
}

TEST(CrossValidate, IdenticalWithoutPoisson)
{
    FlowCase c(1, 0, 0.0);
    DeformConfig dc;
    auto s = build_series(c.pb, dc);
    const double t = 0.5;
    auto wt = omega_flow(c.fields, c.grid, c.lstar(), t, {});
    auto wh = omega_flow(c.fields, c.grid, c.lstar(), t / 2, {});
    auto cv = cross_validate(wt.omega, assemble(s, t), wh.omega, assemble(s, t / 2), t);
    EXPECT_LT(cv.discrepancy / frame_sup_norm(c.pb.f), 1e-10);
}

TEST(CrossValidate, InterpolatedRouteConvergesToClosedForm)
{
    auto err = [](int k) {
        FlowCase c(k);
        auto p = radial_potential(c.grid, c.lstar(), c.r, calibrated_scale(c.r));
        auto x = hamiltonian_field(*c.pb.stencil, p, c.pb.theta, c.pb.q);
        auto ip = interpolated_fields(x, c.pb.f, c.pb.q);
        FlowConfig cfg;
        cfg.n_steps = 4;
        auto a = omega_flow(ip, c.grid, c.lstar(), 0.25, cfg);
        auto b = omega_flow(c.fields, c.grid, c.lstar(), 0.25, cfg);
        return form_discrepancy(a.omega, b.omega) / frame_sup_norm(b.omega);
    };
    // flow Jacobians differentiate the cubic interpolant, which is third order
    const double e1 = err(1), e2 = err(2);
    EXPECT_LT(e1, 1e-2);
    EXPECT_GT(std::log2(e1 / e2), 2.5) << e1 << " " << e2;
}
