#pragma once

#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "hodge.hpp"
#include "hopf.hpp"

namespace bihermitian {

struct DeformConfig {
    int order = 6;
    std::optional<double> t;
    double scan_t_max = 2.0;
    int scan_points = 64;
    double gualtieri_tol = 1e-6;
    double lemma_tol = 1e-10;
    double orthogonality_tol = 1e-6;
    double class_tol = 1e-8;
    double p_margin = 1e-6;
    double sigma_scale = 1.0;
    SolverConfig solver;
};

/// Everything fixed before the recursion: grid, J, σ, Q = Re σ, and the lcK form F of L*.
struct DeformationProblem {
    GridPtr grid;
    std::shared_ptr<const Stencil> stencil;
    FlatBundleSpec bundle;
    double t_star = 0;
    MatField j;
    SigmaField sigma;
    MatField q;
    Form2Field f;
    MatField g_vaisman;
    LeeData theta;
};

inline DeformationProblem make_problem(GridPtr grid, const FlatBundleSpec& L, double sigma_scale = 1.0)
{
    require(L.power == 1, ErrorKind::InvalidInput, "make_problem: bundle must have power 1");
    DeformationProblem pb;
    pb.grid = grid;
    pb.stencil = std::make_shared<const Stencil>(*grid);
    pb.bundle = L;
    pb.t_star = select_t_for_bundle(grid->params(), L);
    pb.j = standard_complex_structure(grid);
    pb.sigma = sigma_section(grid, L, sigma_scale);
    pb.q = pb.sigma.re;
    auto v = vaisman_family(grid, pb.t_star);
    pb.f = std::move(v.F);
    pb.f.bundle = L.dual();
    pb.g_vaisman = std::move(v.g);
    pb.theta = lee_form_for(grid, L.dual(), pb.t_star);
    return pb;
}

struct TermRecord {
    int n = 0;
    double norm = 0;
    double term_residual = 0;
    double lemma_cert = 0;
    SolveStats stats;
};

struct DeformationSeries {
    std::vector<Form2Field> terms;
    std::vector<TermRecord> log;
    int order() const { return static_cast<int>(terms.size()); }
};

namespace detail {

inline double frame_norm2(const Mat4& m, std::size_t i, const FundamentalGrid& g)
{
    return frame_two_form(m, g.frame(i)).norm();
}

inline double frame_normb(const Mat4& p, std::size_t i, const FundamentalGrid& g)
{
    return frame_bivector(p, g.frame_inv(i)).norm();
}

} // namespace detail

/// ½ Σ_{i+j=n} ω_i Q ω_j.
inline Form2Field quadratic_source(const DeformationSeries& s, const MatField& q, int n)
{
    const auto& t = s.terms;
    Form2Field out(t[0].grid, t[0].bundle, ValueKind::TwoForm, Mat4::Zero());
    parallel_for(out.size(), [&](std::size_t x) {
        Mat4 acc = Mat4::Zero();
        for (int i = 1; i < n; ++i) acc += t[i - 1].data[x] * q.data[x] * t[n - i - 1].data[x];
        out.data[x] = 0.5 * acc;
    });
    return out;
}

/// ω_n for n ≥ 2: anti-invariant part from the term condition, (1,1) part from ∂̄β = ω_n^{0,2}.
inline Form2Field recursion_step(int n, const DeformationSeries& s, const DeformationProblem& pb, const DbarOperator& op,
                                 const DeformConfig& cfg, TermRecord* rec = nullptr)
{
    require(n >= 2 && s.order() == n - 1, ErrorKind::InvalidInput, "recursion_step: terms 1..n-1 required");
    const auto& g = *pb.grid;
    auto src = quadratic_source(s, pb.q, n);
    TermRecord local;
    TermRecord& r = rec ? *rec : local;
    r.n = n;
    r.lemma_cert = parallel_max(g.size(), [&](std::size_t x) {
        double scale = 0;
        for (int i = 1; i < n; ++i)
            scale += 0.5 * detail::frame_norm2(s.terms[i - 1].data[x], x, g) * detail::frame_normb(pb.q.data[x], x, g) *
                     detail::frame_norm2(s.terms[n - i - 1].data[x], x, g);
        if (scale == 0) return 0.0;
        return detail::frame_norm2(invariant_part(src.data[x], pb.j.data[x]), x, g) / scale;
    });
    require(r.lemma_cert < cfg.lemma_tol, ErrorKind::Degenerate,
            "recursion_step: (1,1) part of the quadratic source is not negligible (order " + std::to_string(n) +
                ", certificate " + std::to_string(r.lemma_cert) + ")");
    Form2Field anti(pb.grid, pb.bundle.dual(), ValueKind::TwoForm, Mat4::Zero());
    parallel_for(g.size(), [&](std::size_t x) {
        const Mat4& j = pb.j.data[x];
        Mat4 a = anti_part(j.transpose() * src.data[x], j);
        anti.data[x] = 0.5 * (a - a.transpose());
    });
    auto u = project02(op, anti);
    auto beta = beta_coefficients(op, u, cfg.solver, &r.stats);
    auto w11 = assemble_omega11(op, beta, pb.j);
    Form2Field out = anti;
    parallel_for(g.size(), [&](std::size_t x) { out.data[x] += w11.data[x]; });
    const double src_norm = frame_sup_norm(src);
    r.term_residual = src_norm == 0 ? 0.0 : parallel_max(g.size(), [&](std::size_t x) {
        const Mat4& j = pb.j.data[x];
        Mat4 lhs = -j.transpose() * anti_part(out.data[x], j);
        return detail::frame_norm2(lhs - src.data[x], x, g);
    }) / src_norm;
    r.norm = frame_sup_norm(out);
    return out;
}

/// ω₁ = F, then recursion_step for n = 2..N.
inline DeformationSeries build_series(const DeformationProblem& pb, const DeformConfig& cfg)
{
    require(cfg.order >= 1, ErrorKind::Config, "build_series: order must be at least 1");
    DbarOperator op(vaisman_metric_generator(pb.grid->lambda(), pb.t_star), pb.theta, pb.bundle.dual());
    DeformationSeries s;
    s.terms.push_back(pb.f);
    TermRecord r1;
    r1.n = 1;
    r1.norm = frame_sup_norm(pb.f);
    s.log.push_back(r1);
    for (int n = 2; n <= cfg.order; ++n) {
        TermRecord rec;
        auto w = recursion_step(n, s, pb, op, cfg, &rec);
        s.terms.push_back(std::move(w));
        s.log.push_back(rec);
    }
    return s;
}

inline Form2Field assemble(const DeformationSeries& s, double t)
{
    require(s.order() >= 1, ErrorKind::InvalidInput, "assemble: empty series");
    Form2Field out(s.terms[0].grid, s.terms[0].bundle, ValueKind::TwoForm, Mat4::Zero());
    parallel_for(out.size(), [&](std::size_t x) {
        Mat4 acc = Mat4::Zero();
        double tn = 1;
        for (const auto& w : s.terms) {
            tn *= t;
            acc += tn * w.data[x];
        }
        out.data[x] = acc;
    });
    return out;
}

/// Frame sup of R = ωJ + Jᵀω + ωQω relative to the frame sup of ω.
inline double gualtieri_field_residual(const Form2Field& w, const MatField& q, const MatField& j)
{
    const auto& g = *w.grid;
    const double num = parallel_max(w.size(), [&](std::size_t x) {
        return detail::frame_norm2(gualtieri_residual(w.data[x], q.data[x], j.data[x]), x, g);
    });
    const double den = frame_sup_norm(w);
    return den == 0 ? 0.0 : num / den;
}

/// Frame sup of d_θω relative to the frame sup of ω.
inline double closedness_residual(const Stencil& st, const Form2Field& w, const LeeData* th)
{
    const double den = frame_sup_norm(w);
    return den == 0 ? 0.0 : frame_sup_norm(novikov_d(st, w, th)) / den;
}

/// Smallest eigenvalue over the grid of the frame matrix of -(ω^{1,1}/t)J.
inline double invariant_min_eigenvalue(const Form2Field& w, const MatField& j, double t)
{
    const auto& g = *w.grid;
    return parallel_min(w.size(), [&](std::size_t x) {
        Mat4 gm = -invariant_part(w.data[x], j.data[x]) * j.data[x] / t;
        return min_eigenvalue(frame_two_form(Mat4(0.5 * (gm + gm.transpose())), g.frame(x)));
    });
}

struct ScanResult {
    double t_max = 0;
    std::vector<double> t_grid;
    std::vector<double> min_eig;
    std::vector<double> gualtieri;
};

/// Largest grid t with all smaller grid t passing positivity first, then the residual tolerance.
inline ScanResult positivity_scan(const DeformationSeries& s, const DeformationProblem& pb, const DeformConfig& cfg)
{
    require(cfg.scan_points >= 1 && cfg.scan_t_max > 0, ErrorKind::Config, "positivity_scan: invalid scan range");
    ScanResult out;
    bool open = true;
    for (int k = 1; k <= cfg.scan_points; ++k) {
        const double t = cfg.scan_t_max * k / cfg.scan_points;
        auto w = assemble(s, t);
        const double me = invariant_min_eigenvalue(w, pb.j, t);
        const double gr = me > 0 ? gualtieri_field_residual(w, pb.q, pb.j) : INFINITY;
        out.t_grid.push_back(t);
        out.min_eig.push_back(me);
        out.gualtieri.push_back(gr);
        if (open && me > 0 && gr < cfg.gualtieri_tol)
            out.t_max = t;
        else
            open = false;
    }
    require(out.t_max > 0, ErrorKind::Degenerate,
            "positivity_scan: empty window; Q is too large for the truncation order on this scan range");
    return out;
}

enum class StructureClass { I, II, III, Degenerate };

inline const char* to_string(StructureClass c)
{
    switch (c) {
    case StructureClass::I: return "i";
    case StructureClass::II: return "ii";
    case StructureClass::III: return "iii";
    case StructureClass::Degenerate: return "degenerate";
    }
    return "?";
}

/// Pointwise structure at a curve overlay point, in the ambient frame.
struct OverlayPoint {
    Coord c;
    double p = 0;
    double min_eig = 0;
};

struct StructureReport {
    double t = 0;
    double gualtieri = 0;
    double jminus_square = 0;
    double orthogonality = 0;
    double nijenhuis = 0;
    double closedness = 0;
    double min_eig = 0;
    double p_min = 0, p_max = 0;
    double delta = 0;
    double overlay_z2_p_min = 0, overlay_z2_p_max = 0;
    double overlay_z1_p_min = 0, overlay_z1_p_max = 0;
    double overlay_min_eig = 0;
    StructureClass cls = StructureClass::Degenerate;
    bool valid = false;
    std::vector<std::string> diagnostics;
};

struct BiHermitianStructure {
    MatField g, jp, jm;
    ScalarField p;
    Form2Field omega;
    std::vector<OverlayPoint> overlay_z2, overlay_z1;
    StructureReport report;
};

namespace detail {

/// 4th-order value at the pole between rows 0, 1 and their reflections, frame components.
template <class T>
T pole_value(const T& u0, const T& u0r, const T& u1, const T& u1r)
{
    return T((9.0 * (u0 + u0r) - (u1 + u1r)) / 16.0);
}

} // namespace detail

/// Frame sup over the basis forms dx^k/|z| of the (0,2) part of d(α^{1,0}) for the almost complex structure j.
inline double nijenhuis_residual(const Stencil& st, const MatField& j)
{
    const auto& g = *j.grid;
    double worst = 0;
    for (int k = 0; k < 4; ++k) {
        CForm1Field a(j.grid, {}, ValueKind::OneForm, CVec4::Zero());
        parallel_for(g.size(), [&](std::size_t x) {
            auto geo = g.geometry(x);
            Vec4 al = geo.jac.row(k).transpose() / geo.r;
            a.data[x] = 0.5 * (al.cast<cplx>() - cplx(0, 1) * (j.data[x].transpose() * al).cast<cplx>());
        });
        auto da = exterior_d1(st, a);
        worst = std::max(worst, parallel_max(g.size(), [&](std::size_t x) {
                             CMat4 pi = projector01(j.data[x]);
                             CMat4 m02 = pi.transpose() * da.data[x] * pi;
                             return frame_two_form(m02, g.frame(x)).norm();
                         }));
    }
    return worst;
}

inline StructureClass classify_structure(const std::vector<double>& ps, double tol)
{
    bool plus = false, minus = false, generic = false;
    for (double p : ps) {
        switch (classify_point(p, tol)) {
        case PointLabel::JPlusEqJMinus: plus = true; break;
        case PointLabel::JPlusEqNegJMinus: minus = true; break;
        case PointLabel::Generic: generic = true; break;
        }
    }
    if (!generic) return StructureClass::Degenerate;
    if (plus && minus) return StructureClass::III;
    if (plus || minus) return StructureClass::II;
    return StructureClass::I;
}

/// J₋ = −J − Qω, g = −½ω(J − J₋), p and the verification report.
inline BiHermitianStructure build_structure(const DeformationProblem& pb, const Form2Field& w, double t,
                                            const DeformConfig& cfg)
{
    const auto& g = *pb.grid;
    require(t > 0, ErrorKind::InvalidInput, "build_structure: t must be positive");
    BiHermitianStructure bs;
    bs.omega = w;
    bs.jp = pb.j;
    bs.jm = MatField(pb.grid, {}, ValueKind::Endomorphism, Mat4::Zero());
    bs.g = MatField(pb.grid, pb.bundle.dual(), ValueKind::Metric, Mat4::Zero());
    bs.p = ScalarField(pb.grid, {}, ValueKind::Scalar, 0.0);
    auto& rep = bs.report;
    rep.t = t;
    parallel_for(g.size(), [&](std::size_t x) {
        const Mat4& j = pb.j.data[x];
        Mat4 jm = -j - pb.q.data[x] * w.data[x];
        bs.jm.data[x] = jm;
        Mat4 gm = -0.5 * w.data[x] * (j - jm);
        bs.g.data[x] = 0.5 * (gm + gm.transpose());
        bs.p.data[x] = angle_p(j, jm);
    });
    rep.gualtieri = gualtieri_field_residual(w, pb.q, pb.j);
    rep.jminus_square = parallel_max(g.size(), [&](std::size_t x) {
        const Mat4& jm = bs.jm.data[x];
        return frame_endo(Mat4(jm * jm + Mat4::Identity()), g.frame(x), g.frame_inv(x)).norm();
    });
    rep.orthogonality = parallel_max(g.size(), [&](std::size_t x) {
        const Mat4& gm = bs.g.data[x];
        const double n = gm.norm();
        const Mat4& jp = pb.j.data[x];
        const Mat4& jm = bs.jm.data[x];
        return std::max((jp.transpose() * gm * jp - gm).norm(), (jm.transpose() * gm * jm - gm).norm()) / n;
    });
    rep.min_eig = parallel_min(g.size(), [&](std::size_t x) {
        return min_eigenvalue(frame_two_form(bs.g.data[x], g.frame(x))) / t;
    });
    rep.p_min = parallel_min(g.size(), [&](std::size_t x) { return bs.p.data[x]; });
    rep.p_max = parallel_max_signed(g.size(), [&](std::size_t x) { return bs.p.data[x]; });
    rep.delta = std::min(1 + rep.p_min, 1 - rep.p_max);
    rep.nijenhuis = nijenhuis_residual(*pb.stencil, bs.jm);
    rep.closedness = closedness_residual(*pb.stencil, w, &pb.theta);

    // curve overlays: z₂ = 0 between the rows next to η = 0, z₁ = 0 next to η = π/2
    const int ns = g.n(AxisS), ne = g.n(AxisEta), n1 = g.n(AxisXi1), n2 = g.n(AxisXi2);
    const Mat4 jstd = standard_j();
    auto overlay_at = [&](std::size_t a0, std::size_t a0r, std::size_t a1, std::size_t a1r, Coord c) {
        auto wf = [&](std::size_t x) { return frame_two_form(w.data[x], g.frame(x)); };
        auto qf = [&](std::size_t x) { return frame_bivector(pb.q.data[x], g.frame_inv(x)); };
        Mat4 wp = detail::pole_value<Mat4>(wf(a0), wf(a0r), wf(a1), wf(a1r));
        Mat4 qp = detail::pole_value<Mat4>(qf(a0), qf(a0r), qf(a1), qf(a1r));
        wp = 0.5 * (wp - wp.transpose());
        qp = 0.5 * (qp - qp.transpose());
        Mat4 jm = -jstd - qp * wp;
        Mat4 gm = -0.5 * wp * (jstd - jm);
        gm = 0.5 * (gm + gm.transpose());
        return OverlayPoint{c, angle_p(jstd, jm), min_eigenvalue(gm) / t};
    };
    for (int is = 0; is < ns; ++is)
        for (int i1 = 0; i1 < n1; ++i1) {
            const int i2 = 0, i2r = n2 / 2;
            Coord c{g.s_of(is), 0.0, i1 * g.h(AxisXi1), 0.0};
            bs.overlay_z2.push_back(overlay_at(g.index(is, 0, i1, i2), g.index(is, 0, i1, i2r),
                                               g.index(is, 1, i1, i2), g.index(is, 1, i1, i2r), c));
        }
    for (int is = 0; is < ns; ++is)
        for (int i2 = 0; i2 < n2; ++i2) {
            const int i1 = 0, i1r = n1 / 2;
            Coord c{g.s_of(is), std::numbers::pi / 2, 0.0, i2 * g.h(AxisXi2)};
            bs.overlay_z1.push_back(overlay_at(g.index(is, ne - 1, i1, i2), g.index(is, ne - 1, i1r, i2),
                                               g.index(is, ne - 2, i1, i2), g.index(is, ne - 2, i1r, i2), c));
        }
    auto range = [](const std::vector<OverlayPoint>& v, double& lo, double& hi, double& me) {
        lo = INFINITY;
        hi = -INFINITY;
        for (const auto& o : v) {
            lo = std::min(lo, o.p);
            hi = std::max(hi, o.p);
            me = std::min(me, o.min_eig);
        }
    };
    rep.overlay_min_eig = INFINITY;
    range(bs.overlay_z2, rep.overlay_z2_p_min, rep.overlay_z2_p_max, rep.overlay_min_eig);
    range(bs.overlay_z1, rep.overlay_z1_p_min, rep.overlay_z1_p_max, rep.overlay_min_eig);

    std::vector<double> ps = bs.p.data;
    for (const auto& o : bs.overlay_z2) ps.push_back(o.p);
    for (const auto& o : bs.overlay_z1) ps.push_back(o.p);
    rep.cls = classify_structure(ps, cfg.class_tol);

    auto check = [&](bool ok, const std::string& msg) {
        if (!ok) rep.diagnostics.push_back(msg);
    };
    check(rep.gualtieri < cfg.gualtieri_tol, "gualtieri residual above tolerance");
    // J₋² + 1 = Q R, so its size is bounded by the Gualtieri residual
    check(rep.jminus_square <= cfg.gualtieri_tol * frame_sup_norm(w) * frame_sup_norm(pb.q) + 1e-12,
          "J- fails to square to -1");
    check(rep.orthogonality < cfg.orthogonality_tol, "J+ or J- not orthogonal for g");
    check(rep.min_eig > 0 && rep.overlay_min_eig > 0, "metric not positive definite");
    check(rep.p_max < 1 - cfg.p_margin && rep.overlay_z1_p_max < 1 - cfg.p_margin &&
              rep.overlay_z2_p_max < 1 - cfg.p_margin,
          "p reaches 1");
    check(rep.delta > 0, "p reaches -1 off the curve overlays");
    rep.valid = rep.diagnostics.empty();
    return bs;
}

/// Solve dF = θ∧F for θ pointwise (4×4 system).
inline Form1Field lee_form_of(const Stencil& st, const Form2Field& f)
{
    auto df = exterior_d2(st, f);
    Form1Field out(f.grid, {}, ValueKind::OneForm, Vec4::Zero());
    parallel_for(f.size(), [&](std::size_t x) {
        Mat4 a;
        for (int c = 0; c < 4; ++c) a.col(c) = wedge(Vec4(Vec4::Unit(c)), f.data[x]);
        out.data[x] = a.partialPivLu().solve(df.data[x]);
    });
    return out;
}

struct RoundTripReport {
    double invariant_error = 0;
    double closedness = 0;
    double lee_deviation = 0;
    double factor = 0;
};

/// Extract ω from (g, J₊, J₋) and compare with F₊ and the engine's ω.
inline RoundTripReport roundtrip_extract(const DeformationProblem& pb, const BiHermitianStructure& bs,
                                         double eps = 1e-6)
{
    const auto& g = *pb.grid;
    require(bs.report.p_max < 1 - eps, ErrorKind::Degenerate, "roundtrip_extract: p reaches 1");
    Form2Field ext(pb.grid, bs.omega.bundle, ValueKind::TwoForm, Mat4::Zero());
    Form2Field fp = ext, fm = ext;
    parallel_for(g.size(), [&](std::size_t x) {
        const Mat4& gm = bs.g.data[x];
        ext.data[x] = extract_omega(gm, bs.jp.data[x], bs.jm.data[x], eps);
        fp.data[x] = gm * bs.jp.data[x];
        fm.data[x] = gm * bs.jm.data[x];
    });
    RoundTripReport r;
    const double fn = frame_sup_norm(fp);
    r.invariant_error = parallel_max(g.size(), [&](std::size_t x) {
        return detail::frame_norm2(Mat4(invariant_part(ext.data[x], bs.jp.data[x]) - fp.data[x]), x, g);
    }) / fn;
    auto thp = lee_form_of(*pb.stencil, fp), thm = lee_form_of(*pb.stencil, fm);
    LeeData hat{Form1Field(pb.grid, {}, ValueKind::OneForm, Vec4::Zero()), 0};
    parallel_for(g.size(), [&](std::size_t x) { hat.theta.data[x] = 0.5 * (thp.data[x] + thm.data[x]); });
    r.closedness = closedness_residual(*pb.stencil, ext, &hat);
    r.lee_deviation = parallel_max(g.size(), [&](std::size_t x) {
        return frame_one_form(Vec4(hat.theta.data[x] - pb.theta.theta.data[x]), g.frame(x)).norm();
    });
    double num = 0, den = 0;
    for (std::size_t x = 0; x < g.size(); ++x) {
        num += (ext.data[x].cwiseProduct(bs.omega.data[x])).sum();
        den += bs.omega.data[x].squaredNorm();
    }
    r.factor = den == 0 ? 0.0 : num / den;
    return r;
}

struct GrowthReport {
    std::vector<double> norms;
    double b_hat = 0;
    bool super_geometric = false;
};

/// Fit log(n²‖ω_n‖) = a + n log b̂ over the nonzero terms n ≥ 2.
inline GrowthReport ratio_monitor(const DeformationSeries& s)
{
    require(s.order() >= 3, ErrorKind::InvalidInput, "ratio_monitor: needs at least three terms");
    GrowthReport g;
    std::vector<double> xs, ys;
    for (const auto& r : s.log) {
        g.norms.push_back(r.norm);
        if (r.n >= 2 && r.norm > 0) {
            xs.push_back(r.n);
            ys.push_back(std::log(double(r.n) * r.n * r.norm));
        }
    }
    if (xs.size() < 2) return g;
    const double k = double(xs.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sx += xs[i];
        sy += ys[i];
        sxx += xs[i] * xs[i];
        sxy += xs[i] * ys[i];
    }
    g.b_hat = std::exp((k * sxy - sx * sy) / (k * sxx - sx * sx));
    if (ys.size() >= 3) {
        bool growing = true;
        for (std::size_t i = 2; i < ys.size(); ++i)
            growing = growing && (ys[i] - ys[i - 1]) > (ys[i - 1] - ys[i - 2]) + std::log(1.5);
        g.super_geometric = growing;
    }
    return g;
}

} // namespace bihermitian
