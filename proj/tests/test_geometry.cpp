#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include <bihermitian/hopf.hpp>

#include <bihermitian/oracle_forms.hpp>

using namespace bihermitian;
using namespace bihermitian::oracles;

namespace {

GridPtr grid_at(int k, double lambda = 0.5)
{
    return make_grid({lambda, lambda, 1.0}, {8 * k, 4 * k + 1, 8 * k, 8 * k});
}

// Quadratic coefficients times the chart Jacobian carry angular modes up to 3.
GridPtr fine_angle_grid(int k) { return make_grid({0.5, 0.5, 1.0}, {8 * k, 8 * k + 1, 16 * k, 16 * k}); }

double d1_error(int k, double fault = 1.0)
{
    stencil_fault_scale() = fault;
    auto g = fine_angle_grid(k);
    Stencil st(*g);
    stencil_fault_scale() = 1.0;
    QuadraticOneForm a(7);
    FlatBundleSpec b{3, 0, 1};
    auto alpha = sample<Vec4>(g, b, ValueKind::OneForm, a.form());
    auto exact = sample<Mat4>(g, b, ValueKind::TwoForm, a.derivative());
    auto th = lee_form_for(g, b);
    return relative_frame_error(novikov_d(st, alpha, &th), exact);
}

double d2_error(int k)
{
    auto g = fine_angle_grid(k);
    Stencil st(*g);
    LinearTwoForm w(9);
    FlatBundleSpec b{3, 0, 1};
    auto om = sample<Mat4>(g, b, ValueKind::TwoForm, w.form());
    auto exact = sample<Vec4>(g, b, ValueKind::ThreeForm, w.derivative());
    auto th = lee_form_for(g, b);
    return relative_frame_error(novikov_d(st, om, &th), exact);
}

} // namespace

TEST(Grid, NodesInsideFundamentalAnnulus)
{
    auto g = grid_at(1);
    for (std::size_t i = 0; i < g->size(); ++i) {
        auto geo = g->geometry(i);
        EXPECT_GT(geo.x.norm(), g->lambda() * g->params().r0);
        EXPECT_LE(geo.x.norm(), g->params().r0 * (1 + 1e-15));
    }
}

TEST(Grid, RejectsBadConfigurations)
{
    EXPECT_THROW(make_grid({0.5, 0.4, 1.0}, {8, 5, 8, 8}), Error);
    EXPECT_THROW(make_grid({0.3, 0.5, 1.0}, {8, 5, 8, 8}), Error);
    EXPECT_THROW(make_grid({0.5, 0.5, 1.0}, {8, 5, 9, 8}), Error);
    EXPECT_THROW(make_grid({1.5, 1.5, 1.0}, {8, 5, 8, 8}), Error);
}

TEST(Grid, CoordinateRoundTrip)
{
    auto g = grid_at(1);
    for (std::size_t i = 0; i < g->size(); i += 7) {
        auto geo = g->geometry(i);
        Coord c = coord_of(geo.x, g->lambda(), 1.0);
        EXPECT_NEAR(c.s, geo.c.s, 1e-12);
        EXPECT_NEAR(c.eta, geo.c.eta, 1e-12);
        EXPECT_NEAR(std::remainder(c.xi1 - geo.c.xi1, 2 * std::numbers::pi), 0, 1e-12);
        EXPECT_NEAR(std::remainder(c.xi2 - geo.c.xi2, 2 * std::numbers::pi), 0, 1e-12);
    }
}

TEST(ComplexStructure, SquareAndSeam)
{
    auto g = grid_at(1);
    auto j = standard_complex_structure(g);
    EXPECT_LT(complex_structure_defect(j), 1e-12);
    EXPECT_LT(seam_residual<Mat4>(*g, {}, standard_j_generator()), 1e-12);
    // in the frame r ∂/∂x_k the structure is the standard block matrix
    for (std::size_t i = 0; i < g->size(); i += 13)
        EXPECT_LT((frame_endo(j[i], g->frame(i), g->frame_inv(i)) - standard_j()).norm(), 1e-12);
}

// Fourth order in coordinates; the frame sup-norm divides by cos η or sin η on the
// pole rows, which costs one order there.
TEST(Stencil, OneFormConvergence)
{
    double e1 = d1_error(1), e2 = d1_error(2);
    EXPECT_LT(e2, 1e-2);
    EXPECT_GT(e1 / e2, 7.0);
}

TEST(Stencil, TwoFormConvergence)
{
    double e1 = d2_error(1), e2 = d2_error(2);
    EXPECT_LT(e2, 1e-2);
    EXPECT_GT(e1 / e2, 7.0);
}

TEST(Stencil, CorruptedCoefficientBreaksConvergence)
{
    double e1 = d1_error(1, 0.99), e2 = d1_error(2, 0.99);
    EXPECT_LT(e1 / e2, 4.0);
}

TEST(Stencil, TransposeMatchesRowEntries)
{
    auto g = grid_at(1);
    Stencil st(*g);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n;
    std::vector<double> u(g->size()), v(g->size()), du(g->size()), dtv(g->size());
    for (auto& x : u) x = n(rng);
    for (auto& x : v) x = n(rng);
    for (int axis = 0; axis < 4; ++axis)
        for (int par : {1, -1}) {
            st.apply(axis, u.data(), du.data(), par);
            st.apply_transpose(axis, v.data(), dtv.data(), par);
            double lhs = 0, rhs = 0;
            for (std::size_t i = 0; i < u.size(); ++i) {
                lhs += v[i] * du[i];
                rhs += dtv[i] * u[i];
            }
            EXPECT_NEAR(lhs, rhs, 1e-10 * std::abs(lhs) + 1e-10);
            std::vector<std::pair<std::size_t, double>> row;
            for (std::size_t i = 0; i < g->size(); i += 101) {
                st.row_entries(axis, i, par, row);
                double acc = 0;
                for (auto [jn, c] : row) acc += c * u[jn];
                EXPECT_NEAR(acc, du[i], 1e-11);
            }
        }
}

TEST(Novikov, SquareVanishes)
{
    auto g = grid_at(1);
    Stencil st(*g);
    FlatBundleSpec b{2, 0, 1};
    auto f = sample<double>(g, b, ValueKind::Scalar, [](const NodeGeometry& geo) {
        return geo.x(0) * geo.x(3) + 0.3 * geo.x(1) * geo.x(1);
    });
    auto th = lee_form_for(g, b);
    auto df = novikov_d(st, f, &th);
    auto ddf = novikov_d(st, df, &th);
    auto dddf = novikov_d(st, ddf, &th);
    EXPECT_LT(frame_sup_norm(ddf), 1e-11 * frame_sup_norm(df));
    QuadraticOneForm a(4);
    auto alpha = sample<Vec4>(g, {3, 0, 1}, ValueKind::OneForm, a.form());
    auto th3 = lee_form_for(g, {3, 0, 1});
    auto da = novikov_d(st, alpha, &th3);
    EXPECT_LT(frame_sup_norm(novikov_d(st, da, &th3)), 1e-11 * frame_sup_norm(da));
    EXPECT_LT(sup_norm(exterior_d3(st, dddf)), 1e-300 + 1e-11);
}

TEST(Novikov, ConstantFunctionAndLocalPrimitive)
{
    auto g = grid_at(1);
    Stencil st(*g);
    ScalarField one(g, {}, ValueKind::Scalar, 1.0);
    EXPECT_LT(frame_sup_norm(novikov_d(st, one, nullptr)), 1e-12);
    // e^{c s} with θ = c ds is d_θ-closed; checked away from the periodic seam
    const double c = std::log(2.0);
    ScalarField f(g, {}, ValueKind::Scalar, 0.0);
    for (std::size_t i = 0; i < g->size(); ++i) f[i] = std::exp(c * g->s_of(i));
    LeeData th{Form1Field(g, {}, ValueKind::OneForm, Vec4(c, 0, 0, 0)), 0};
    auto df = novikov_d(st, f, &th);
    for (std::size_t i = 0; i < g->size(); ++i) {
        int is = g->multi(i)[0];
        if (is < 2 || is > g->n(AxisS) - 3) continue;
        EXPECT_LT(df[i].norm(), 2e-4);
    }
}

TEST(Vaisman, TEqualsOneIsBaseMetric)
{
    auto g = grid_at(1);
    auto v = vaisman_family(g, 1.0);
    for (std::size_t i = 0; i < g->size(); i += 17) {
        auto geo = g->geometry(i);
        Mat4 g0 = geo.jac.transpose() * geo.jac / (geo.r * geo.r);
        EXPECT_LT((v.g[i] - g0).norm(), 1e-12 * g0.norm());
    }
    EXPECT_THROW(vaisman_family(g, 0.0), Error);
}

TEST(Vaisman, LckResidualConverges)
{
    double r[2];
    for (int k = 1; k <= 2; ++k) {
        auto g = grid_at(k);
        Stencil st(*g);
        auto v = vaisman_family(g, 0.5);
        r[k - 1] = lck_residual(st, v.F, v.theta);
        EXPECT_GT(min_metric_eigenvalue(v.g), 0.49);
    }
    EXPECT_GT(r[0] / r[1], 3.0);
}

TEST(Vaisman, LeePeriodIsLinearInT)
{
    auto g = grid_at(1);
    auto v1 = vaisman_family(g, 1.0), v2 = vaisman_family(g, 0.5);
    EXPECT_NEAR(lee_period(v2.theta), 0.5 * lee_period(v1.theta), 1e-14);
}

TEST(SelectT, KnownValues)
{
    HopfParams hp{0.5, 0.5, 1.0};
    EXPECT_NEAR(select_t_for_bundle(hp, {-1, 0, 1}), 0.5, 1e-14);
    EXPECT_NEAR(select_t_for_bundle(hp, {-1, -1, 1}), 1.0, 1e-14);
    EXPECT_THROW(select_t_for_bundle(hp, {0, 0, 1}), Error);
    EXPECT_THROW(select_t_for_bundle(hp, {1, 0, 1}), Error);
}

TEST(Holonomy, RatioPinsNormalisation)
{
    auto g = grid_at(1);
    Stencil st(*g);
    auto v = vaisman_family(g, 0.5);
    EXPECT_NEAR(holonomy_check(st, v.theta, {-1, 0, 1}), 1.0, 1e-12);
    auto v2 = vaisman_family(g, 1.0);
    const double r2 = holonomy_check(st, v2.theta, {-1, 0, 1});
    EXPECT_NEAR(r2 * 0.5, 0.25, 1e-12);  // exp(-∮θ) squares
    LeeData zero{Form1Field(g, {}, ValueKind::OneForm, Vec4::Zero()), 0};
    EXPECT_NEAR(holonomy_check(st, zero, {0, 0, 1}), 1.0, 1e-15);
    LeeData open{Form1Field(g, {}, ValueKind::OneForm, Vec4::Zero()), 0};
    for (std::size_t i = 0; i < g->size(); ++i) open.theta[i](AxisXi1) = std::cos(g->coord(i).s * 2 * std::numbers::pi);
    EXPECT_THROW(holonomy_check(st, open, {0, 0, 1}), Error);
}

TEST(Degree, NegativeAndMatchesQuadratureOracle)
{
    // ∫|θ_t|² dv = 4t · t · Vol(g0), Vol(g0) = 2π² ln(1/λ)
    const double oracle = -4 * std::numbers::pi * 0.25 * std::log(2.0);
    double prev = 0;
    for (int k = 1; k <= 2; ++k) {
        auto g = grid_at(k);
        auto v = vaisman_family(g, 0.5);
        double d = degree_check(v.g, v.theta);
        EXPECT_LT(d, 0);
        EXPECT_NEAR(d, oracle, 0.05 / (k * k));
        if (k == 2) {
            EXPECT_LT(std::abs(d - prev) / std::abs(d), 0.02);
        }
        prev = d;
        LeeData twice = v.theta;
        for (auto& t : twice.theta.data) t *= 2;
        EXPECT_NEAR(degree_check(v.g, twice), 4 * d, 1e-12 * std::abs(d));
        LeeData zero{Form1Field(g, {}, ValueKind::OneForm, Vec4::Zero()), 0};
        EXPECT_EQ(degree_check(v.g, zero), 0.0);
    }
}

TEST(Sigma, SeamFactorAndZeros)
{
    auto g = grid_at(1);
    for (auto [p1, p2] : {std::pair{-1, 0}, {-1, -1}, {0, 0}}) {
        FlatBundleSpec b{p1, p2, 1};
        auto s = sigma_section(g, b);
        EXPECT_LT(seam_residual<Mat4>(*g, b, sigma_generator(s.m1, s.m2, 1.0, false)), 1e-12);
        EXPECT_LT(seam_residual<Mat4>(*g, b, sigma_generator(s.m1, s.m2, 1.0, true)), 1e-12);
        // the seam factor is a property of the section, not of the grid
        FlatBundleSpec wrong{p1 + 1, p2, 1};
        EXPECT_GT(seam_residual<Mat4>(*g, wrong, sigma_generator(s.m1, s.m2, 1.0, false)), 0.1);
    }
    EXPECT_THROW(sigma_section(g, {-2, 0, 1}), Error);
}

TEST(Sigma, AnticommutesAndVanishesOnCurves)
{
    auto g = grid_at(1);
    auto j = standard_complex_structure(g);
    auto s = sigma_section(g, {-1, 0, 1});
    for (std::size_t i = 0; i < g->size(); ++i)
        EXPECT_LT(anticommutation_defect({s.re[i]}, {j[i]}), 1e-12 * (1 + s.re[i].norm() * j[i].norm()));
    // σ = z2 ∂1∧∂2 vanishes on z2 = 0 only
    NodeGeometry on_e2 = node_geometry({0.3, 0.0, 1.0, 2.0}, 0.5, 1.0);
    NodeGeometry on_e1 = node_geometry({0.3, std::numbers::pi / 2, 1.0, 2.0}, 0.5, 1.0);
    EXPECT_EQ(std::abs(sigma_coefficient(on_e2.x, s.m1, s.m2, 1.0)), 0.0);
    EXPECT_GT(std::abs(sigma_coefficient(on_e1.x, s.m1, s.m2, 1.0)), 0.1);
    auto s11 = sigma_section(g, {-1, -1, 1});
    EXPECT_GT(std::abs(sigma_coefficient(on_e2.x, s11.m1, s11.m2, 1.0)), 0.5);
}

TEST(Sigma, TwistedCauchyRiemann)
{
    double r[2];
    for (int k = 1; k <= 2; ++k) {
        auto g = grid_at(k);
        Stencil st(*g);
        auto j = standard_complex_structure(g);
        r[k - 1] = sigma_cauchy_riemann_residual(st, sigma_section(g, {-1, 0, 1}), j);
    }
    EXPECT_GT(r[0] / r[1], 8.0);
}

TEST(Dolbeault, SplitReconstructsAndKillsHolomorphic)
{
    double r[2];
    for (int k = 1; k <= 2; ++k) {
        auto g = grid_at(k);
        Stencil st(*g);
        auto j = standard_complex_structure(g);
        // ∂̄ of the holomorphic 1-form z1 dz2, a section of L_{2,0}
        FlatBundleSpec b{2, 0, 1};
        auto alpha = sample<CVec4>(g, b, ValueKind::OneForm, [](const NodeGeometry& geo) -> CVec4 {
            cplx z1(geo.x(0), geo.x(1));
            CVec4 a(0, 0, z1, cplx(0, 1) * z1);
            return geo.jac.transpose().cast<cplx>() * a;
        });
        auto th = lee_form_for(g, b);
        auto split = dolbeault_split_theta(st, alpha, &th, j);
        auto full = novikov_d(st, alpha, &th);
        double recon = 0;
        for (std::size_t i = 0; i < g->size(); ++i)
            recon = std::max(recon, (split.del[i] + split.dbar[i] - full[i]).norm() / (1 + full[i].norm()));
        EXPECT_LT(recon, 1e-13);
        r[k - 1] = frame_sup_norm(split.dbar) / frame_sup_norm(split.del);
    }
    EXPECT_LT(r[1], 3e-3);
    EXPECT_GT(r[0] / r[1], 8.0);
}
