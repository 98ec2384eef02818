#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <memory>

#include <bihermitian/deformation.hpp>

using namespace bihermitian;

namespace {

struct Run {
    DeformationProblem pb;
    DeformationSeries s;
};

GridDims dims(int k) { return {8 * k, 4 * k + 1, 8 * k, 8 * k}; }

/// Cached series for bundle (-1, p2) at refinement k.
const Run& run(int k, int p2 = 0, double sigma_scale = 1.0, int order = 6)
{
    static std::map<std::tuple<int, int, double, int>, std::unique_ptr<Run>> cache;
    auto key = std::make_tuple(k, p2, sigma_scale, order);
    auto& slot = cache[key];
    if (!slot) {
        auto g = make_grid({0.5, 0.5, 1.0}, dims(k));
        auto pb = make_problem(g, {-1, p2, 1}, sigma_scale);
        DeformConfig cfg;
        cfg.order = order;
        auto s = build_series(pb, cfg);
        slot = std::make_unique<Run>(Run{std::move(pb), std::move(s)});
    }
    return *slot;
}

double field_diff(const Form2Field& a, const Form2Field& b)
{
    Form2Field d = a;
    for (std::size_t i = 0; i < d.size(); ++i) d.data[i] -= b.data[i];
    return frame_sup_norm(d);
}

} // namespace

TEST(Deformation, ProblemSetup)
{
    const auto& r = run(1);
    EXPECT_NEAR(r.pb.t_star, 0.5, 1e-14);
    EXPECT_EQ(r.pb.f.bundle, (FlatBundleSpec{-1, 0, -1}));
    EXPECT_EQ(r.pb.sigma.m1, 0);
    EXPECT_EQ(r.pb.sigma.m2, 1);
    EXPECT_LT(lck_residual(*r.pb.stencil, r.pb.f, r.pb.theta), 1e-2);
}

TEST(Deformation, RejectsBundleWithoutSection)
{
    auto g = make_grid({0.5, 0.5, 1.0}, dims(1));
    EXPECT_THROW(make_problem(g, {-2, 0, 1}), Error);
    EXPECT_THROW(make_problem(g, {-1, 0, 2}), Error);
}

TEST(Deformation, ZeroPoissonGivesLinearSeries)
{
    const auto& r = run(1, 0, 0.0);
    ASSERT_EQ(r.s.order(), 6);
    for (int n = 2; n <= 6; ++n) EXPECT_EQ(frame_sup_norm(r.s.terms[n - 1]), 0.0) << "n=" << n;
    const double t = 0.3;
    auto w = assemble(r.s, t);
    Form2Field tf = r.pb.f;
    for (auto& m : tf.data) m *= t;
    EXPECT_LT(field_diff(w, tf), 1e-15);
}

TEST(Deformation, SecondTermAntiPartClosedForm)
{
    const auto& r = run(1);
    const auto& g = *r.pb.grid;
    const auto& w2 = r.s.terms[1];
    double worst = 0, scale = frame_sup_norm(w2);
    for (std::size_t x = 0; x < g.size(); ++x) {
        const Mat4& j = r.pb.j.data[x];
        const Mat4& f = r.pb.f.data[x];
        Mat4 fqf = f * r.pb.q.data[x] * f;
        // ω₂ anti = -½ J*(F Q F), J* acting with matrix -Jᵀ
        Mat4 expect = anti_part(Mat4(0.5 * j.transpose() * fqf), j);
        expect = 0.5 * (expect - expect.transpose());
        Mat4 got = anti_part(w2.data[x], j);
        worst = std::max(worst, frame_two_form(Mat4(got - expect), g.frame(x)).norm());
    }
    EXPECT_LT(worst / scale, 1e-12);
}

TEST(Deformation, LemmaCertificateAndTermResidual)
{
    const auto& r = run(1);
    for (const auto& rec : r.s.log) {
        if (rec.n < 2) continue;
        EXPECT_LT(rec.lemma_cert, 1e-10) << "n=" << rec.n;
        EXPECT_LT(rec.term_residual, 1e-12) << "n=" << rec.n;
        EXPECT_TRUE(rec.stats.converged);
        EXPECT_LT(rec.stats.dbar_residual, 1e-8) << "n=" << rec.n;
    }
}

TEST(Deformation, AssembleEndpoints)
{
    const auto& r = run(1);
    EXPECT_EQ(frame_sup_norm(assemble(r.s, 0.0)), 0.0);
    DeformationSeries one;
    one.terms.push_back(r.s.terms[0]);
    one.log.push_back(r.s.log[0]);
    auto w = assemble(one, 0.7);
    Form2Field tf = r.pb.f;
    for (auto& m : tf.data) m *= 0.7;
    EXPECT_LT(field_diff(w, tf), 1e-14 * frame_sup_norm(tf));
}

TEST(Deformation, DerivativeAtZeroIsF)
{
    const auto& r = run(1);
    const double h = 1e-4;
    auto wp = assemble(r.s, h), wm = assemble(r.s, -h);
    Form2Field d = wp;
    for (std::size_t i = 0; i < d.size(); ++i) d.data[i] = (wp.data[i] - wm.data[i]) / (2 * h);
    EXPECT_LT(field_diff(d, r.pb.f) / frame_sup_norm(r.pb.f), 1e-6);
}

TEST(Deformation, LeadingOrderSlope)
{
    const auto& r = run(1);
    auto err = [&](double t) {
        Form2Field tf = r.pb.f;
        for (auto& m : tf.data) m *= t;
        return field_diff(assemble(r.s, t), tf);
    };
    const double e1 = err(0.02), e2 = err(0.01);
    EXPECT_NEAR(std::log2(e1 / e2), 2.0, 0.05);
}

TEST(Deformation, GualtieriResidualOfSeries)
{
    const auto& r = run(1);
    // truncation leaves O(t^{N+1}); small t sits at roundoff
    EXPECT_LT(gualtieri_field_residual(assemble(r.s, 0.05), r.pb.q, r.pb.j), 1e-10);
    const double a = gualtieri_field_residual(assemble(r.s, 0.4), r.pb.q, r.pb.j);
    const double b = gualtieri_field_residual(assemble(r.s, 0.2), r.pb.q, r.pb.j);
    EXPECT_GT(std::log2(a / b), 5.0);
}

TEST(Deformation, PositivityScan)
{
    DeformConfig cfg;
    const auto& flat = run(1, 0, 0.0);
    auto s0 = positivity_scan(flat.s, flat.pb, cfg);
    EXPECT_DOUBLE_EQ(s0.t_max, cfg.scan_t_max);
    const auto& r = run(1);
    auto s1 = positivity_scan(r.s, r.pb, cfg);
    EXPECT_GT(s1.t_max, 0.0);
    EXPECT_LE(s1.t_max, cfg.scan_t_max);
    ASSERT_EQ(s1.t_grid.size(), s1.min_eig.size());
    const auto& r4 = run(1, 0, 1.0, 4);
    auto s4 = positivity_scan(r4.s, r4.pb, cfg);
    EXPECT_GT(s1.t_max, 0.5 * s4.t_max);
}

TEST(Deformation, NijenhuisDistinguishesIntegrable)
{
    auto g = make_grid({0.5, 0.5, 1.0}, dims(1));
    Stencil st(*g);
    auto j = standard_complex_structure(g);
    const double integrable = nijenhuis_residual(st, j);
    EXPECT_LT(integrable, 1e-12);
    // rotate J in the (x2, x3) block by an angle varying along η
    MatField jb = j;
    for (std::size_t x = 0; x < g->size(); ++x) {
        auto geo = g->geometry(x);
        const double a = 0.3 * std::sin(2 * geo.c.eta);
        Mat4 rot = Mat4::Identity();
        rot(1, 1) = rot(2, 2) = std::cos(a);
        rot(1, 2) = -std::sin(a);
        rot(2, 1) = std::sin(a);
        Mat4 amb = rot * standard_j() * rot.transpose();
        jb.data[x] = geo.jac_inv * amb * geo.jac;
    }
    EXPECT_LT(complex_structure_defect(jb), 1e-12);
    EXPECT_GT(nijenhuis_residual(st, jb), 1e-2);
}

TEST(Deformation, LeeFormOfVaisman)
{
    auto g = make_grid({0.5, 0.5, 1.0}, dims(2));
    Stencil st(*g);
    auto v = vaisman_family(g, 0.5);
    auto th = lee_form_of(st, v.F);
    double worst = 0;
    for (std::size_t x = 0; x < g->size(); ++x)
        worst = std::max(worst, frame_one_form(Vec4(th.data[x] - v.theta.theta.data[x]), g->frame(x)).norm());
    EXPECT_LT(worst, 1e-2);
}

TEST(Deformation, BaselineIsClassTwo)
{
    const auto& r = run(1);
    DeformConfig cfg;
    auto sc = positivity_scan(r.s, r.pb, cfg);
    const double t = sc.t_max / 2;
    auto bs = build_structure(r.pb, assemble(r.s, t), t, cfg);
    const auto& rep = bs.report;
    EXPECT_TRUE(rep.valid);
    EXPECT_EQ(rep.cls, StructureClass::II);
    EXPECT_LT(rep.gualtieri, cfg.gualtieri_tol);
    EXPECT_GT(rep.min_eig, 0.0);
    EXPECT_NEAR(rep.overlay_z2_p_min, -1.0, 1e-8);
    EXPECT_NEAR(rep.overlay_z2_p_max, -1.0, 1e-8);
    EXPECT_GT(rep.delta, 0.0);
    EXPECT_GT(rep.p_min, -1 + rep.delta / 2);
    EXPECT_LT(rep.p_max, 1 - rep.delta);
}

TEST(Deformation, NowhereVanishingSectionIsClassOne)
{
    const auto& r = run(1, -1);
    DeformConfig cfg;
    auto sc = positivity_scan(r.s, r.pb, cfg);
    const double t = sc.t_max / 2;
    auto bs = build_structure(r.pb, assemble(r.s, t), t, cfg);
    const auto& rep = bs.report;
    EXPECT_TRUE(rep.valid);
    EXPECT_EQ(rep.cls, StructureClass::I);
    EXPECT_GT(rep.delta, 0.0);
    EXPECT_LT(std::max(std::abs(rep.p_min), std::abs(rep.p_max)), 1 - rep.delta / 2);
}

TEST(Deformation, ZeroPoissonStructureIsDegenerate)
{
    const auto& r = run(1, 0, 0.0);
    DeformConfig cfg;
    auto bs = build_structure(r.pb, assemble(r.s, 0.5), 0.5, cfg);
    for (std::size_t x = 0; x < bs.jm.size(); ++x) ASSERT_EQ(bs.jm.data[x], Mat4(-r.pb.j.data[x]));
    EXPECT_EQ(bs.report.cls, StructureClass::Degenerate);
    EXPECT_FALSE(bs.report.valid);
}

TEST(Deformation, RatioMonitor)
{
    const auto& flat = run(1, 0, 0.0);
    auto g0 = ratio_monitor(flat.s);
    EXPECT_EQ(g0.b_hat, 0.0);
    const auto& a = run(1, 0, 1.0);
    const auto& b = run(1, 0, 2.0);
    auto ga = ratio_monitor(a.s), gb = ratio_monitor(b.s);
    EXPECT_GT(ga.b_hat, 0.0);
    EXPECT_FALSE(ga.super_geometric);
    EXPECT_NEAR(gb.b_hat / ga.b_hat, 2.0, 1e-6);
}

TEST(Deformation, ClosednessDecaysUnderRefinement)
{
    const auto& a = run(1);
    const auto& b = run(2);
    for (int n : {2, 3}) {
        const double ca = closedness_residual(*a.pb.stencil, a.s.terms[n - 1], &a.pb.theta);
        const double cb = closedness_residual(*b.pb.stencil, b.s.terms[n - 1], &b.pb.theta);
        EXPECT_GT(std::log2(ca / cb), 2.0) << "n=" << n;
    }
}

TEST(Deformation, RoundTrip)
{
    DeformConfig cfg;
    double prev = 0;
    for (int k : {1, 2}) {
        const auto& r = run(k);
        const double t = 0.5;
        auto bs = build_structure(r.pb, assemble(r.s, t), t, cfg);
        auto rt = roundtrip_extract(r.pb, bs);
        EXPECT_LT(rt.invariant_error, 1e-12) << "k=" << k;
        EXPECT_NEAR(rt.factor, 1.0, 1e-6) << "k=" << k;
        if (k == 2) {
            EXPECT_LT(rt.closedness, prev / 4);
        }
        prev = rt.closedness;
    }
}

TEST(Deformation, NijenhuisDecaysUnderRefinement)
{
    DeformConfig cfg;
    std::vector<double> nij;
    for (int k : {1, 2}) {
        const auto& r = run(k);
        auto bs = build_structure(r.pb, assemble(r.s, 0.5), 0.5, cfg);
        nij.push_back(bs.report.nijenhuis);
    }
    EXPECT_GE(std::log2(nij[0] / nij[1]), 2.0);
}
