#include <gtest/gtest.h>

#include <bihermitian/pointwise.hpp>
#include <bihermitian/random_cases.hpp>

using namespace bihermitian;

namespace {

Mat4 standard_symplectic()
{
    // dx1∧dy1 + dx2∧dy2 as a map: m(b,a) = ω(e_a, e_b)
    Mat4 w = Mat4::Zero();
    w(1, 0) = 1;
    w(0, 1) = -1;
    w(3, 2) = 1;
    w(2, 3) = -1;
    return w;
}

// Re(dz1∧dz2) = dx1∧dx2 - dy1∧dy2
Mat4 real_dz1dz2()
{
    Mat4 w = Mat4::Zero();
    w(2, 0) = 1;
    w(0, 2) = -1;
    w(3, 1) = -1;
    w(1, 3) = 1;
    return w;
}

} // namespace

TEST(TypeSplit, SymplecticFormIsInvariant)
{
    auto [inv, anti] = type_split({standard_symplectic()}, {standard_j()});
    EXPECT_LT((inv.m - standard_symplectic()).norm(), 1e-15);
    EXPECT_LT(anti.m.norm(), 1e-15);
}

TEST(TypeSplit, HolomorphicVolumeIsAnti)
{
    auto [inv, anti] = type_split({real_dz1dz2()}, {standard_j()});
    EXPECT_LT(inv.m.norm(), 1e-15);
    EXPECT_LT((anti.m - real_dz1dz2()).norm(), 1e-15);
}

TEST(TypeSplit, ProjectionPair)
{
    RandomPointGenerator gen(11);
    for (int k = 0; k < 200; ++k) {
        auto p = gen.point(0.1);
        Mat4 w = gen.antisymmetric();
        auto [inv, anti] = type_split({w}, {p.j});
        EXPECT_LT((inv.m + anti.m - w).norm(), 1e-12);
        auto [ii, ia] = type_split(inv, {p.j});
        auto [ai, aa] = type_split(anti, {p.j});
        EXPECT_LT((ii.m - inv.m).norm(), 1e-12 * w.norm() * 10);
        EXPECT_LT(ia.m.norm(), 1e-11 * w.norm());
        EXPECT_LT(ai.m.norm(), 1e-11 * w.norm());
        EXPECT_LT((aa.m - anti.m).norm(), 1e-11 * w.norm());
    }
}

TEST(WorkedExample, StandardFormGivesIdentityMetric)
{
    Mat4 j = standard_j();
    EXPECT_LT((standard_symplectic() - j).norm(), 0.0 + 1e-300);
    auto g = build_metric({standard_symplectic()}, {j}, {-j});
    EXPECT_LT((g.m - Mat4::Identity()).norm(), 1e-15);
    EXPECT_TRUE(g.positive_definite);
    EXPECT_GT(orientation_sign({j}), 0);
}

TEST(Gualtieri, TrivialCases)
{
    RandomPointGenerator gen(12);
    for (int k = 0; k < 100; ++k) {
        auto p = gen.point(0.3);
        Mat4 inv = invariant_part(gen.antisymmetric(), p.j);
        EXPECT_LT(gualtieri_residual(inv, Mat4::Zero(), p.j).norm(), 1e-12 * inv.norm());
        EXPECT_EQ(gualtieri_residual(Mat4::Zero(), p.q, p.j).norm(), 0.0);
    }
}

TEST(BuildJminus, TrivialCases)
{
    RandomPointGenerator gen(13);
    auto p = gen.point(0.2);
    auto jm = build_jminus({p.f}, {Mat4::Zero()}, {p.j}, 1e-10);
    EXPECT_EQ((jm.m + p.j).norm(), 0.0);
    jm = build_jminus({Mat4::Zero()}, {p.q}, {p.j}, 1e-10);
    EXPECT_EQ((jm.m + p.j).norm(), 0.0);
    EXPECT_THROW(build_jminus({p.f}, {p.q}, {p.j}, 1e-10), Error);
}

TEST(BuildMetric, ZeroFormNotPositive)
{
    auto g = build_metric({Mat4::Zero()}, {standard_j()}, {-standard_j()});
    EXPECT_EQ(g.m.norm(), 0.0);
    EXPECT_FALSE(g.positive_definite);
}

TEST(FixedPoint, QZeroReturnsF)
{
    RandomPointGenerator gen(14);
    auto p = gen.point(0.0);
    auto r = fixed_point_solve_detail(p.f, Mat4::Zero(), p.j, 1e-12, 20);
    EXPECT_EQ(r.iterations, 1);
    EXPECT_LT((r.omega - p.f).norm(), 1e-14 * p.f.norm());
}

TEST(FixedPoint, ConvergesForSmallQ)
{
    RandomPointGenerator gen(15);
    for (int k = 0; k < 200; ++k) {
        auto p = gen.point(0.01);
        auto r = fixed_point_solve_detail(p.f, p.q, p.j, 1e-12 * p.f.norm(), 20);
        EXPECT_LE(r.iterations, 20);
        EXPECT_LT(gualtieri_residual(r.omega, p.q, p.j).norm(), 1e-12 * p.f.norm());
        EXPECT_LT((invariant_part(r.omega, p.j) - p.f).norm(), 1e-12 * p.f.norm());
    }
}

TEST(FixedPoint, ScalingEquivariance)
{
    RandomPointGenerator gen(16);
    auto p = gen.point(0.05);
    const double s = 3.7;
    Mat4 w1 = fixed_point_solve({p.f}, {p.q}, {p.j}, 1e-12 * p.f.norm(), 60).m;
    Mat4 w2 = fixed_point_solve({s * p.f}, {p.q / s}, {p.j}, 1e-13 * s, 60).m;
    EXPECT_LT((w2 - s * w1).norm(), 1e-12 * s * w1.norm());
}

TEST(FixedPoint, LargeQDiverges)
{
    RandomPointGenerator gen(17);
    auto p = gen.point(50.0);
    EXPECT_THROW(fixed_point_solve({p.f}, {p.q}, {p.j}, 1e-12, 200), Error);
}

TEST(Structure, JminusMetricAndOrthogonality)
{
    RandomPointGenerator gen(18);
    double worst_k = 0;
    for (int k = 0; k < 300; ++k) {
        auto p = gen.point(0.05);
        auto r = fixed_point_solve_detail(p.f, p.q, p.j, 1e-13 * p.f.norm(), 60);
        auto jm = build_jminus({r.omega}, {p.q}, {p.j}, 1e-10);
        EXPECT_LT((jm.m * jm.m + Mat4::Identity()).norm(), 1e-10);
        auto g = build_metric({r.omega}, {p.j}, jm);
        EXPECT_TRUE(g.positive_definite);
        const double gs = g.m.norm();
        EXPECT_LT((g.m - g.m.transpose()).norm(), 1e-10 * gs);
        EXPECT_LT((p.j.transpose() * g.m * p.j - g.m).norm(), 1e-10 * gs);
        EXPECT_LT((jm.m.transpose() * g.m * jm.m - g.m).norm(), 1e-10 * gs);
        if (r.residual > 0)
            worst_k = std::max(worst_k, (jm.m * jm.m + Mat4::Identity()).norm() / r.residual);
    }
    RecordProperty("jminus_square_over_residual", std::to_string(worst_k));
}

TEST(Structure, RecoveredBivectorIsProportional)
{
    RandomPointGenerator gen(19);
    double ratio_min = 1e300, ratio_max = -1e300;
    for (int k = 0; k < 200; ++k) {
        auto p = gen.point(0.05);
        Mat4 w = fixed_point_solve({p.f}, {p.q}, {p.j}, 1e-12 * p.f.norm(), 60).m;
        auto jm = build_jminus({w}, {p.q}, {p.j}, 1e-10);
        auto g = build_metric({w}, {p.j}, jm);
        Mat4 qr = commutator_bivector({p.j}, jm, g).m;
        const double c = (qr.cwiseProduct(p.q)).sum() / p.q.squaredNorm();
        EXPECT_LT((qr - c * p.q).norm(), 1e-9 * qr.norm());
        EXPECT_LT(anticommutation_defect({qr}, {p.j}), 1e-9 * qr.norm());
        ratio_min = std::min(ratio_min, c);
        ratio_max = std::max(ratio_max, c);
    }
    RecordProperty("recovered_q_ratio_min", std::to_string(ratio_min));
    RecordProperty("recovered_q_ratio_max", std::to_string(ratio_max));
}

TEST(Structure, CommutatorTrivialCases)
{
    RandomPointGenerator gen(20);
    auto p = gen.point(0.1);
    MetricPt g{-p.f * p.j, true};
    EXPECT_LT(commutator_bivector({p.j}, {-p.j}, g).m.norm(), 1e-14);
    EXPECT_LT(commutator_bivector({p.j}, {p.j}, g).m.norm(), 1e-14);
    EXPECT_THROW(commutator_bivector({p.j}, {p.j}, MetricPt{Mat4::Zero(), false}), Error);
}

TEST(AngleP, ExtremesAndConjugationInvariance)
{
    RandomPointGenerator gen(21);
    auto p = gen.point(0.05);
    EXPECT_NEAR(angle_p(p.j, p.j), 1.0, 1e-12);
    EXPECT_NEAR(angle_p(p.j, Mat4(-p.j)), -1.0, 1e-12);
    Mat4 w = fixed_point_solve({p.f}, {p.q}, {p.j}, 1e-12 * p.f.norm(), 60).m;
    Mat4 jm = -p.j - p.q * w;
    double pv = angle_p(p.j, jm);
    EXPECT_GT(pv, -1.0 - 1e-12);
    EXPECT_LT(pv, 1.0 + 1e-12);
    Mat4 c = Mat4::Identity() + 0.4 * gen.matrix();
    Mat4 ci = c.inverse();
    EXPECT_NEAR(angle_p(Mat4(c * p.j * ci), Mat4(c * jm * ci)), pv, 1e-12);
}

TEST(Extract, RecoversEngineForm)
{
    RandomPointGenerator gen(22);
    for (int k = 0; k < 200; ++k) {
        auto p = gen.point(0.05);
        Mat4 w = fixed_point_solve({p.f}, {p.q}, {p.j}, 1e-12 * p.f.norm(), 60).m;
        Mat4 jm = -p.j - p.q * w;
        Mat4 g = -0.5 * w * (p.j - jm);
        Mat4 we = extract_omega(g, p.j, jm, 1e-6);
        EXPECT_LT((invariant_part(we, p.j) - g * p.j).norm(), 1e-12 * g.norm());
        EXPECT_LT((we - w).norm(), 1e-10 * w.norm());
    }
}

TEST(Extract, TrivialAndDegenerate)
{
    RandomPointGenerator gen(23);
    auto p = gen.point(0.05);
    Mat4 g = -p.f * p.j;
    EXPECT_LT((extract_omega(g, p.j, Mat4(-p.j), 1e-6) - g * p.j).norm(), 1e-14 * g.norm());
    EXPECT_THROW(extract_omega(g, p.j, p.j, 1e-6), Error);
}

// Σ_{i+j=n} (ω_i Q ω_j)^{1,1} = 0 whenever ω_1..ω_{n-1} satisfy the term conditions,
// whatever their (1,1) parts are.
TEST(LemmaIdentity, RandomFamilies)
{
    RandomPointGenerator gen(24);
    for (int trial = 0; trial < 100; ++trial) {
        auto p = gen.point(0.3);
        std::vector<Mat4> w{Mat4::Zero(), p.f};
        for (int n = 2; n <= 7; ++n) {
            Mat4 rhs = Mat4::Zero();
            double scale = 0;
            for (int i = 1; i < n; ++i) {
                rhs += w[i] * p.q * w[n - i];
                scale += w[i].norm() * p.q.norm() * w[n - i].norm();
            }
            EXPECT_LT(invariant_part(rhs, p.j).norm(), 1e-12 * scale) << "n=" << n;
            Mat4 anti = anti_part(0.5 * p.j.transpose() * rhs, p.j);
            w.push_back(anti + invariant_part(gen.antisymmetric(), p.j));
        }
    }
}

TEST(Classify, Labels)
{
    EXPECT_EQ(classify_point(1.0, 1e-8), PointLabel::JPlusEqJMinus);
    EXPECT_EQ(classify_point(-1.0, 1e-8), PointLabel::JPlusEqNegJMinus);
    EXPECT_EQ(classify_point(0.0, 1e-8), PointLabel::Generic);
    EXPECT_THROW(classify_point(1.5, 1e-8), Error);
}

TEST(HoloBivector, TypeAndAnticommutation)
{
    RandomPointGenerator gen(25);
    auto s = holomorphic_bivector(cplx(0.7, -1.3));
    Mat4 j = standard_j();
    EXPECT_LT((s.im.m + j * s.re.m).norm(), 1e-15);
    EXPECT_LT((j * s.re.m * j.transpose() + s.re.m).norm(), 1e-15);
    EXPECT_LT(anticommutation_defect(s.re, {j}), 1e-15);
    for (int k = 0; k < 50; ++k) {
        auto p = gen.point(1.0);
        EXPECT_LT(anticommutation_defect({p.q}, {p.j}), 1e-12 * p.q.norm() * p.s.squaredNorm());
        EXPECT_LT(complex_structure_defect({p.j}), 1e-12 * p.s.norm() * p.s.inverse().norm());
        EXPECT_GT(orientation_sign({p.j}), 0);
    }
}
