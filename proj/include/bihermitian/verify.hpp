#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "deformation.hpp"
#include "hodge.hpp"
#include "hopf.hpp"
#include "oracle_forms.hpp"
#include "random_cases.hpp"

namespace bihermitian {

enum class Relation { AtMost, AtLeast, Below, Above };

inline const char* to_string(Relation r)
{
    switch (r) {
    case Relation::AtMost: return "<=";
    case Relation::AtLeast: return ">=";
    case Relation::Below: return "<";
    default: return ">";
    }
}

struct Check {
    std::string name;
    double value = 0;
    double bound = 0;
    Relation relation = Relation::AtMost;
    bool pass = false;
};

struct SuiteResult {
    std::string suite;
    std::uint64_t seed = 0;
    std::vector<Check> checks;
    std::vector<std::pair<std::string, double>> metrics;
    std::vector<std::string> errors;
    double seconds = 0;

    bool passed() const
    {
        for (const auto& c : checks)
            if (!c.pass) return false;
        return !checks.empty();
    }

    void add(std::string name, double value, Relation rel, double bound)
    {
        bool ok = false;
        switch (rel) {
        case Relation::AtMost: ok = value <= bound; break;
        case Relation::AtLeast: ok = value >= bound; break;
        case Relation::Below: ok = value < bound; break;
        case Relation::Above: ok = value > bound; break;
        }
        checks.push_back({std::move(name), value, bound, rel, ok && std::isfinite(value)});
    }

    /// Runs one group of checks; an exception becomes a failed `<name>_completed` check.
    template <class Fn>
    void section(const std::string& name, Fn&& fn)
    {
        try {
            fn();
        } catch (const std::exception& e) {
            errors.push_back(name + ": " + e.what());
            checks.push_back({name + "_completed", 0.0, 1.0, Relation::AtLeast, false});
        }
    }
};

/// Fault injection for the geometry suite: scales one stencil coefficient.
struct VerifyHooks {
    double stencil_fault = 1.0;
};

struct GeometryOptions {
    int coarse_k = 2;  // grid 8k × (4k+1) × 8k × 8k
    int fine_k = 4;
    double lambda = 0.5;
    double t_star = 0.5;
};

namespace detail {

class Stopwatch {
public:
    Stopwatch() : t0_(std::chrono::steady_clock::now()) {}
    double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count(); }

private:
    std::chrono::steady_clock::time_point t0_;
};

struct FaultGuard {
    explicit FaultGuard(double k) { stencil_fault_scale() = k; }
    ~FaultGuard() { stencil_fault_scale() = 1.0; }
};

inline GridPtr hopf_grid(int k, double lambda)
{
    return make_grid({lambda, lambda, 1.0}, {8 * k, 4 * k + 1, 8 * k, 8 * k});
}

inline DbarOperator::Coeffs random_coeffs(std::size_t n, std::mt19937_64& rng)
{
    std::normal_distribution<double> nd;
    DbarOperator::Coeffs v(n);
    for (auto& x : v) x = cplx(nd(rng), nd(rng));
    return v;
}

inline double coeff_rel_diff(const DbarOperator::Coeffs& a, const DbarOperator::Coeffs& b)
{
    DbarOperator::Coeffs d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
    return std::sqrt(DbarOperator::dot_re(d, d) / DbarOperator::dot_re(b, b));
}

} // namespace detail

/// Randomized pointwise identities over `cases` seeded tangent spaces.
inline SuiteResult verify_pointwise(std::uint64_t seed, int cases = 10000)
{
    detail::Stopwatch sw;
    SuiteResult r;
    r.suite = "pointwise";
    r.seed = seed;
    RandomPointGenerator gen(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    double lemma = 0, gual_inv = 0, gual_zero = 0, fp_square = 0, fp_gual = 0, orth = 0, sym = 0, extract = 0;
    double not_positive = 0, fixed_point_failures = 0;
    for (int c = 0; c < cases; ++c) {
        auto p = gen.point(1.0);
        // |J||Q||F| ≤ 0.2 keeps the fixed-point map a contraction
        p.q *= 0.2 * unit(gen.engine()) / (p.q.norm() * p.f.norm() * p.j.norm());

        // Σ_{i+j=n} (ω_i Q ω_j)^{1,1} vanishes for families built by the term conditions
        std::vector<Mat4> w{Mat4::Zero(), p.f};
        for (int n = 2; n <= 5; ++n) {
            Mat4 rhs = Mat4::Zero();
            double scale = 0;
            for (int i = 1; i < n; ++i) {
                rhs += w[i] * p.q * w[n - i];
                scale += w[i].norm() * p.q.norm() * w[n - i].norm();
            }
            if (scale > 0) lemma = std::max(lemma, invariant_part(rhs, p.j).norm() / scale);
            Mat4 anti = anti_part(0.5 * p.j.transpose() * rhs, p.j);
            w.push_back(anti + invariant_part(gen.antisymmetric(), p.j));
        }

        Mat4 inv = invariant_part(gen.antisymmetric(), p.j);
        gual_inv = std::max(gual_inv, gualtieri_residual(inv, Mat4::Zero(), p.j).norm() / inv.norm());
        gual_zero = std::max(gual_zero, gualtieri_residual(Mat4::Zero(), p.q, p.j).norm());

        FixedPointResult fp;
        try {
            fp = fixed_point_solve_detail(p.f, p.q, p.j, 1e-13 * p.f.norm() * p.j.norm(), 60);
        } catch (const Error&) {
            fixed_point_failures += 1;
            continue;
        }
        fp_gual = std::max(fp_gual, gualtieri_residual(fp.omega, p.q, p.j).norm() / (p.f.norm() * p.j.norm()));
        Mat4 jm = -p.j - p.q * fp.omega;
        fp_square = std::max(fp_square, (jm * jm + Mat4::Identity()).norm());
        Mat4 g = -0.5 * fp.omega * (p.j - jm);
        const double gs = g.norm();
        sym = std::max(sym, (g - g.transpose()).norm() / gs);
        Mat4 gsym = 0.5 * (g + g.transpose());
        orth = std::max(orth, std::max((p.j.transpose() * gsym * p.j - gsym).norm(),
                                       (jm.transpose() * gsym * jm - gsym).norm()) / gs);
        if (min_eigenvalue(gsym) <= 0) not_positive += 1;
        extract = std::max(extract, (extract_omega(gsym, p.j, jm, 1e-6) - fp.omega).norm() / fp.omega.norm());
    }
    r.add("lemma_identity", lemma, Relation::AtMost, 1e-12);
    r.add("gualtieri_invariant_form_zero_bivector", gual_inv, Relation::AtMost, 1e-12);
    r.add("gualtieri_zero_form", gual_zero, Relation::AtMost, 0.0);
    r.add("fixed_point_failures", fixed_point_failures, Relation::AtMost, 0.0);
    r.add("fixed_point_gualtieri", fp_gual, Relation::AtMost, 1e-12);
    r.add("jminus_square_plus_identity", fp_square, Relation::Below, 1e-10);
    r.add("metric_symmetry", sym, Relation::AtMost, 1e-10);
    r.add("orthogonality", orth, Relation::AtMost, 1e-10);
    r.add("metric_not_positive", not_positive, Relation::AtMost, 0.0);
    r.add("extract_roundtrip", extract, Relation::AtMost, 1e-10);
    r.metrics.push_back({"cases", double(cases)});
    r.seconds = sw.seconds();
    return r;
}

/// Stencil convergence, Novikov d² = 0, lcK residual under refinement, holonomy and degree.
inline SuiteResult verify_geometry(std::uint64_t seed, const VerifyHooks& hooks = {}, const GeometryOptions& opt = {})
{
    detail::Stopwatch sw;
    detail::FaultGuard guard(hooks.stencil_fault);
    SuiteResult r;
    r.suite = "geometry";
    r.seed = seed;

    // quadratic coefficients times the chart Jacobian carry angular modes up to 3
    auto angle_grid = [](int k) { return make_grid({0.5, 0.5, 1.0}, {8 * k, 8 * k + 1, 16 * k, 16 * k}); };
    r.section("stencil", [&] {
        const FlatBundleSpec b3{3, 0, 1};
        double e1[2], e2[2];
        for (int k = 1; k <= 2; ++k) {
            auto g = angle_grid(k);
            Stencil st(*g);
            auto th = lee_form_for(g, b3);
            oracles::QuadraticOneForm a(seed);
            auto alpha = sample<Vec4>(g, b3, ValueKind::OneForm, a.form());
            auto da = sample<Mat4>(g, b3, ValueKind::TwoForm, a.derivative());
            e1[k - 1] = oracles::relative_frame_error(novikov_d(st, alpha, &th), da);
            oracles::LinearTwoForm w(seed + 1);
            auto om = sample<Mat4>(g, b3, ValueKind::TwoForm, w.form());
            auto dw = sample<Vec4>(g, b3, ValueKind::ThreeForm, w.derivative());
            e2[k - 1] = oracles::relative_frame_error(novikov_d(st, om, &th), dw);
        }
        r.add("stencil_one_form_refinement_ratio", e1[0] / e1[1], Relation::AtLeast, 7.0);
        r.add("stencil_two_form_refinement_ratio", e2[0] / e2[1], Relation::AtLeast, 7.0);
    });

    r.section("novikov", [&] {
        auto g = detail::hopf_grid(1, opt.lambda);
        Stencil st(*g);
        FlatBundleSpec b{2, 0, 1};
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> nd;
        Mat4 h;
        for (int i = 0; i < 4; ++i)
            for (int k = 0; k < 4; ++k) h(i, k) = nd(rng);
        auto f = sample<double>(g, b, ValueKind::Scalar, [h](const NodeGeometry& geo) { return geo.x.dot(h * geo.x); });
        auto th = lee_form_for(g, b);
        auto df = novikov_d(st, f, &th);
        r.add("novikov_square", frame_sup_norm(novikov_d(st, df, &th)) / frame_sup_norm(df), Relation::AtMost, 1e-11);
    });

    r.section("vaisman", [&] {
        auto g = detail::hopf_grid(opt.coarse_k, opt.lambda);
        Stencil st(*g);
        auto v = vaisman_family(g, opt.t_star);
        r.add("degree", degree_check(v.g, v.theta), Relation::Below, 0.0);
        r.add("vaisman_min_metric_eigenvalue", min_metric_eigenvalue(v.g), Relation::Above, 0.0);
        r.add("holonomy_ratio_deviation", std::abs(holonomy_check(st, v.theta, {-1, 0, 1}) - 1), Relation::AtMost,
              1e-6);
    });

    r.section("lck_refinement", [&] {
        double lck[2];
        const int ks[2] = {opt.coarse_k, opt.fine_k};
        for (int i = 0; i < 2; ++i) {
            auto g = detail::hopf_grid(ks[i], opt.lambda);
            Stencil st(*g);
            auto v = vaisman_family(g, opt.t_star);
            lck[i] = lck_residual(st, v.F, v.theta);
        }
        r.metrics.push_back({"lck_residual_coarse", lck[0]});
        r.metrics.push_back({"lck_residual_fine", lck[1]});
        r.add("lck_refinement_ratio", lck[0] / lck[1], Relation::AtLeast, 3.0);
    });
    r.seconds = sw.seconds();
    return r;
}

/// Adjoint identity, self-adjointness, apply-then-solve and the baseline solve.
inline SuiteResult verify_hodge(std::uint64_t seed, int coarse_k = 2)
{
    detail::Stopwatch sw;
    SuiteResult r;
    r.suite = "hodge";
    r.seed = seed;
    std::mt19937_64 rng(seed);
    const FlatBundleSpec L{-1, 0, 1};
    const double lambda = 0.5, t = 0.5;
    r.section("operator", [&] {
        auto g = detail::hopf_grid(1, lambda);
        DbarOperator op(vaisman_metric_generator(lambda, t), lee_form_for(g, L), L);
        auto b = detail::random_coeffs(op.dim01(), rng), y = detail::random_coeffs(op.dim02(), rng);
        DbarOperator::Coeffs db, dsy;
        op.apply(b, db);
        op.apply_adjoint(y, dsy);
        const cplx lhs = DbarOperator::dot(db, y), rhs = DbarOperator::dot(b, dsy);
        r.add("adjoint_identity", std::abs(lhs - rhs) / std::abs(lhs), Relation::AtMost, 1e-12);
        auto x = detail::random_coeffs(op.dim02(), rng), z = detail::random_coeffs(op.dim02(), rng);
        DbarOperator::Coeffs lx, lz;
        op.laplacian(x, lx);
        op.laplacian(z, lz);
        const cplx a = DbarOperator::dot(lx, z), c = DbarOperator::dot(x, lz);
        r.add("laplacian_self_adjoint", std::abs(a - c) / std::abs(a), Relation::AtMost, 1e-12);
        r.add("laplacian_positive", DbarOperator::dot_re(x, lx), Relation::Above, 0.0);
    });
    r.section("apply_then_solve", [&] {
        auto g = detail::hopf_grid(coarse_k, lambda);
        DbarOperator op(vaisman_metric_generator(lambda, t), lee_form_for(g, L), L);
        auto u0 = detail::random_coeffs(op.dim02(), rng);
        DbarOperator::Coeffs a, ax;
        op.laplacian(u0, a);
        SolveStats stats;
        detail::Stopwatch solve;
        auto x = green(op, a, {}, &stats);
        r.metrics.push_back({"apply_then_solve_seconds", solve.seconds()});
        r.metrics.push_back({"apply_then_solve_iterations", double(stats.iterations)});
        op.laplacian(x, ax);
        r.add("apply_then_solve_residual", detail::coeff_rel_diff(ax, a), Relation::AtMost, 1e-10);
        r.add("apply_then_solve_recovery", detail::coeff_rel_diff(x, u0), Relation::AtMost, 1e-8);
    });
    r.section("baseline_solve", [&] {
        auto g = detail::hopf_grid(coarse_k, lambda);
        auto pb = make_problem(g, L);
        DeformConfig cfg;
        cfg.order = 2;
        detail::Stopwatch solve;
        auto s = build_series(pb, cfg);
        r.metrics.push_back({"baseline_solve_seconds", solve.seconds()});
        const auto& rec = s.log.back();
        r.metrics.push_back({"baseline_solve_iterations", double(rec.stats.iterations)});
        r.add("baseline_solve_converged", rec.stats.converged ? 1.0 : 0.0, Relation::AtLeast, 1.0);
        r.add("baseline_solve_relres", rec.stats.relres, Relation::AtMost, cfg.solver.rel_tol);
        r.add("baseline_dbar_residual", rec.stats.dbar_residual, Relation::AtMost, 1e-9);
        r.add("baseline_lemma_certificate", rec.lemma_cert, Relation::AtMost, cfg.lemma_tol);
    });
    r.seconds = sw.seconds();
    return r;
}

inline std::vector<SuiteResult> verify_suite(const std::string& name, std::uint64_t seed, const VerifyHooks& hooks = {})
{
    require(name == "pointwise" || name == "geometry" || name == "hodge" || name == "all", ErrorKind::Config,
            "verify: unknown suite '" + name + "' (expected pointwise, geometry, hodge or all)");
    std::vector<SuiteResult> out;
    if (name == "pointwise" || name == "all") out.push_back(verify_pointwise(seed));
    if (name == "geometry" || name == "all") out.push_back(verify_geometry(seed, hooks));
    if (name == "hodge" || name == "all") out.push_back(verify_hodge(seed));
    return out;
}

} // namespace bihermitian
