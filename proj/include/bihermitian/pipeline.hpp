#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "config.hpp"
#include "deformation.hpp"
#include "flow.hpp"
#include "io.hpp"

#ifndef BIHERMITIAN_VERSION
#define BIHERMITIAN_VERSION "0.1.0"
#endif

namespace bihermitian {

enum ExitCode : int { ExitValid = 0, ExitIo = 1, ExitInvalid = 2, ExitConfig = 3, ExitSolver = 4 };

inline int exit_code_for(ErrorKind k, const std::string& stage)
{
    switch (k) {
    case ErrorKind::Config: return ExitConfig;
    case ErrorKind::Solver:
    case ErrorKind::NotConverged: return ExitSolver;
    case ErrorKind::Io: return ExitIo;
    case ErrorKind::InvalidInput: return stage == "setup" ? ExitConfig : ExitInvalid;
    default: return ExitInvalid;
    }
}

struct RunOutcome {
    int exit_code = ExitInvalid;
    Json report;
    Json timing;
    std::vector<std::string> warnings;
};

inline Json versions_json()
{
    return Json{{"bihermitian", BIHERMITIAN_VERSION},
                {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                              std::to_string(EIGEN_MINOR_VERSION)},
                {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                      std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                      std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
#if defined(__VERSION__)
                {"compiler", __VERSION__},
#else
                {"compiler", "unknown"},
#endif
                {"cxx_standard", long(__cplusplus)}};
}

namespace detail {

class StageTimer {
public:
    StageTimer() : start_(clock::now()), last_(start_) {}

    void mark(const std::string& stage)
    {
        const auto now = clock::now();
        stages_[stage] = std::chrono::duration<double>(now - last_).count();
        last_ = now;
    }

    Json json() const
    {
        Json j = stages_;
        j["total"] = std::chrono::duration<double>(clock::now() - start_).count();
        j["threads"] = thread_count();
        return j;
    }

private:
    using clock = std::chrono::steady_clock;
    clock::time_point start_, last_;
    Json stages_ = Json::object();
};

/// Report skeleton: every residual field present, null until computed.
inline Json report_skeleton(const RunConfig& c)
{
    return Json{{"lambda", c.surface.lambda()},
                {"p1", c.bundle.p1},
                {"p2", c.bundle.p2},
                {"t_star_vaisman", nullptr},
                {"N", nullptr},
                {"t", nullptr},
                {"t_max", nullptr},
                {"residuals", {{"gualtieri", nullptr}, {"nijenhuis", nullptr}, {"closedness", nullptr}, {"lemma_cert", nullptr}}},
                {"p_min", nullptr},
                {"p_max", nullptr},
                {"class", nullptr},
                {"solver_stats", nullptr},
                {"verdict", "INVALID"},
                {"stage", nullptr},
                {"error", nullptr},
                {"diagnostics", Json::array()},
                {"structure", nullptr},
                {"roundtrip", nullptr},
                {"series", nullptr},
                {"scan", nullptr},
                {"refinement", nullptr},
                {"flow", nullptr},
                {"cross_validation", nullptr},
                {"warnings", Json::array()},
                {"versions", versions_json()},
                {"config", config_json(c)}};
}

inline Json structure_json(const StructureReport& r)
{
    return Json{{"t", r.t},
                {"gualtieri", r.gualtieri},
                {"jminus_square", r.jminus_square},
                {"orthogonality", r.orthogonality},
                {"nijenhuis", r.nijenhuis},
                {"closedness", r.closedness},
                {"min_eig", r.min_eig},
                {"p_min", r.p_min},
                {"p_max", r.p_max},
                {"delta", r.delta},
                {"overlay_z2", {{"p_min", r.overlay_z2_p_min}, {"p_max", r.overlay_z2_p_max}}},
                {"overlay_z1", {{"p_min", r.overlay_z1_p_min}, {"p_max", r.overlay_z1_p_max}}},
                {"overlay_min_eig", r.overlay_min_eig},
                {"class", to_string(r.cls)},
                {"valid", r.valid},
                {"diagnostics", r.diagnostics}};
}

inline void fill_core(Json& rep, const StructureReport& r)
{
    rep["residuals"]["gualtieri"] = r.gualtieri;
    rep["residuals"]["nijenhuis"] = r.nijenhuis;
    rep["residuals"]["closedness"] = r.closedness;
    rep["p_min"] = std::min(r.p_min, std::min(r.overlay_z1_p_min, r.overlay_z2_p_min));
    rep["p_max"] = std::max(r.p_max, std::max(r.overlay_z1_p_max, r.overlay_z2_p_max));
    rep["class"] = to_string(r.cls);
    rep["structure"] = structure_json(r);
}

inline Json roundtrip_json(const RoundTripReport& r)
{
    return Json{{"invariant_error", r.invariant_error},
                {"closedness", r.closedness},
                {"lee_deviation", r.lee_deviation},
                {"factor", r.factor}};
}

inline void write_overlay(const std::filesystem::path& p, const std::vector<OverlayPoint>& v)
{
    std::vector<std::vector<double>> rows;
    for (const auto& o : v) rows.push_back({o.c.s, o.c.eta, o.c.xi1, o.c.xi2, o.p, o.min_eig});
    write_csv(p, {"s", "eta", "xi1", "xi2", "p", "min_eig"}, rows);
}

inline std::string two_digits(int n)
{
    char buf[16];
    std::snprintf(buf, sizeof buf, "%02d", n);
    return buf;
}

/// Everything the deformation pipeline computes on one grid.
struct DeformRun {
    DeformationProblem pb;
    DeformationSeries series;
    std::optional<ScanResult> scan;
    double t = 0;
    BiHermitianStructure bs;
    RoundTripReport rt;
};

struct StageError {
    std::string stage;
    ErrorKind kind;
    std::string what;
};

template <class Fn>
std::optional<StageError> stage(const std::string& name, std::string& current, Fn&& fn)
{
    current = name;
    try {
        fn();
    } catch (const Error& e) {
        return StageError{name, e.kind(), e.what()};
    } catch (const std::exception& e) {
        return StageError{name, ErrorKind::InvalidInput, e.what()};
    }
    return std::nullopt;
}

inline void record_failure(RunOutcome& out, const StageError& e)
{
    out.report["verdict"] = "INVALID";
    out.report["stage"] = e.stage;
    out.report["error"] = e.what;
    out.exit_code = exit_code_for(e.kind, e.stage);
}

inline double refinement_order(double coarse, double fine, double ratio)
{
    return (coarse > 0 && fine > 0) ? std::log(coarse / fine) / std::log(ratio) : 0.0;
}

} // namespace detail

/// vaisman_family(select_t_for_bundle) → sigma_section → recursion → build_structure → roundtrip,
/// plus the optional refinement companion at the same t.  Writes report.json, timing.json,
/// field dumps, overlays and solver logs into `out` (when not empty).
inline RunOutcome run_deform(const RunConfig& cfg, const std::filesystem::path& out_dir)
{
    RunOutcome out;
    out.report = detail::report_skeleton(cfg);
    auto& rep = out.report;
    detail::StageTimer timer;
    std::string current;
    const auto& dc = cfg.deform;
    rep["N"] = dc.order;

    GridPtr grid;
    detail::DeformRun run;
    auto fail = [&](const detail::StageError& e) { detail::record_failure(out, e); };

    std::optional<detail::StageError> err = detail::stage("setup", current, [&] {
        grid = make_grid(cfg.surface, cfg.grid);
        run.pb = make_problem(grid, cfg.bundle, dc.sigma_scale);
        rep["t_star_vaisman"] = run.pb.t_star;
    });
    timer.mark("setup");

    if (!err) err = detail::stage("series", current, [&] {
        run.series = build_series(run.pb, dc);
        Json stats = Json::array();
        double cert = 0;
        for (const auto& r : run.series.log) {
            cert = std::max(cert, r.lemma_cert);
            stats.push_back({{"n", r.n},
                             {"norm", r.norm},
                             {"term_residual", r.term_residual},
                             {"lemma_cert", r.lemma_cert},
                             {"iterations", r.stats.iterations},
                             {"relres", r.stats.relres},
                             {"ritz_min", r.stats.ritz_min},
                             {"converged", r.n == 1 || r.stats.converged},
                             {"dbar_residual", r.stats.dbar_residual}});
        }
        rep["solver_stats"] = stats;
        rep["residuals"]["lemma_cert"] = cert;
        Json norms = Json::array();
        for (const auto& r : run.series.log) norms.push_back(r.norm);
        rep["series"] = {{"norms", norms}, {"b_hat", nullptr}, {"super_geometric", nullptr}};
        if (run.series.order() >= 3) {
            auto g = ratio_monitor(run.series);
            rep["series"]["b_hat"] = g.b_hat;
            rep["series"]["super_geometric"] = g.super_geometric;
        }
    });
    timer.mark("series");

    if (!err) err = detail::stage("scan", current, [&] {
        try {
            run.scan = positivity_scan(run.series, run.pb, dc);
            rep["t_max"] = run.scan->t_max;
            rep["scan"] = {{"t", run.scan->t_grid}, {"min_eig", run.scan->min_eig}, {"gualtieri", run.scan->gualtieri}};
        } catch (const Error& e) {
            if (!dc.t) throw;
            rep["warnings"].push_back(std::string("positivity scan failed: ") + e.what());
            out.warnings.push_back(rep["warnings"].back().get<std::string>());
        }
        run.t = dc.t ? *dc.t : cfg.t_fraction * run.scan->t_max;
        rep["t"] = run.t;
        if (run.scan && run.t > run.scan->t_max) {
            rep["warnings"].push_back("t exceeds the scanned window t_max");
            out.warnings.push_back("t exceeds the scanned window t_max");
        }
    });
    timer.mark("scan");

    if (!err) err = detail::stage("structure", current, [&] {
        run.bs = build_structure(run.pb, assemble(run.series, run.t), run.t, dc);
        detail::fill_core(rep, run.bs.report);
    });
    timer.mark("structure");

    if (!err) err = detail::stage("roundtrip", current, [&] {
        run.rt = roundtrip_extract(run.pb, run.bs);
        rep["roundtrip"] = detail::roundtrip_json(run.rt);
    });
    timer.mark("roundtrip");

    std::optional<detail::DeformRun> fine;
    if (!err && cfg.refinement) {
        err = detail::stage("refinement", current, [&] {
            detail::DeformRun f;
            auto g2 = make_grid(cfg.surface, *cfg.refinement);
            f.pb = make_problem(g2, cfg.bundle, dc.sigma_scale);
            f.series = build_series(f.pb, dc);
            f.t = run.t;
            f.bs = build_structure(f.pb, assemble(f.series, f.t), f.t, dc);
            f.rt = roundtrip_extract(f.pb, f.bs);
            const double ratio = double(cfg.refinement->n_s) / cfg.grid.n_s;
            const auto& a = run.bs.report;
            const auto& b = f.bs.report;
            rep["refinement"] = {
                {"grid", detail::grid_json(*cfg.refinement)},
                {"h_ratio", ratio},
                {"nijenhuis", b.nijenhuis},
                {"closedness", b.closedness},
                {"roundtrip_closedness", f.rt.closedness},
                {"gualtieri", b.gualtieri},
                {"p_min", b.p_min},
                {"p_max", b.p_max},
                {"class", to_string(b.cls)},
                {"valid", b.valid},
                {"nijenhuis_order", detail::refinement_order(a.nijenhuis, b.nijenhuis, ratio)},
                {"closedness_order", detail::refinement_order(a.closedness, b.closedness, ratio)},
                {"roundtrip_closedness_order", detail::refinement_order(run.rt.closedness, f.rt.closedness, ratio)},
            };
            fine = std::move(f);
        });
        timer.mark("refinement");
    }

    if (err) {
        fail(*err);
    } else {
        auto& diag = rep["diagnostics"];
        for (const auto& d : run.bs.report.diagnostics) diag.push_back(d);
        for (const auto& r : run.series.log)
            if (r.lemma_cert > dc.lemma_tol) diag.push_back("lemma certificate above tolerance at n=" + std::to_string(r.n));
        if (run.rt.invariant_error > cfg.roundtrip_tol) diag.push_back("round trip: invariant part differs from F+");
        if (fine) {
            const auto& rf = rep["refinement"];
            if (!fine->bs.report.valid) diag.push_back("refined structure is not valid");
            if (rf["nijenhuis_order"].get<double>() < cfg.nijenhuis_order_min)
                diag.push_back("Nijenhuis residual decays below the required order under refinement");
            if (!(fine->bs.report.closedness < run.bs.report.closedness))
                diag.push_back("closedness residual does not decay under refinement");
            if (!(fine->rt.closedness < run.rt.closedness))
                diag.push_back("round-trip closedness does not decay under refinement");
        }
        const bool valid = diag.empty();
        rep["verdict"] = valid ? "VALID" : "INVALID";
        out.exit_code = valid ? ExitValid : ExitInvalid;
    }

    if (!out_dir.empty()) {
        for (std::size_t i = 0; i < run.series.terms.size(); ++i)
            write_field(out_dir, "series_" + detail::two_digits(int(i) + 1), run.series.terms[i]);
        for (const auto& r : run.series.log) {
            if (r.n < 2) continue;
            std::vector<std::vector<double>> rows;
            for (const auto& e : r.stats.log) rows.push_back({double(e.iter), e.relres, e.ritz_min});
            write_csv(out_dir / ("solver_log_n" + detail::two_digits(r.n) + ".csv"), {"iter", "relres", "ritz_min"}, rows);
        }
        if (run.scan) {
            std::vector<std::vector<double>> rows;
            for (std::size_t i = 0; i < run.scan->t_grid.size(); ++i)
                rows.push_back({run.scan->t_grid[i], run.scan->min_eig[i], run.scan->gualtieri[i]});
            write_csv(out_dir / "scan.csv", {"t", "min_eig", "gualtieri"}, rows);
        }
        if (run.bs.p.grid) {
            write_field(out_dir, "omega", run.bs.omega);
            write_field(out_dir, "p", run.bs.p);
            write_field(out_dir, "metric", run.bs.g);
            write_field(out_dir, "jminus", run.bs.jm);
            detail::write_overlay(out_dir / "overlay_z2.csv", run.bs.overlay_z2);
            detail::write_overlay(out_dir / "overlay_z1.csv", run.bs.overlay_z1);
        }
        timer.mark("write");
        write_json(out_dir / "report.json", rep);
    }
    out.timing = timer.json();
    if (!out_dir.empty()) write_json(out_dir / "timing.json", out.timing);
    return out;
}

namespace detail {

/// Series terms from a deform output directory when it matches this run; empty with a reason otherwise.
inline std::optional<DeformationSeries> load_matching_series(const std::filesystem::path& dir, const RunConfig& cfg,
                                                             GridPtr grid, std::string& reason)
{
    const auto rp = dir / "report.json";
    if (!std::filesystem::exists(rp)) {
        reason = "no report.json in " + dir.string();
        return std::nullopt;
    }
    Json other;
    try {
        other = read_json(rp);
    } catch (const Error& e) {
        reason = e.what();
        return std::nullopt;
    }
    const Json mine = config_json(cfg);
    if (!other.contains("config") || !other.contains("N") || !other["N"].is_number_integer()) {
        reason = rp.string() + " is not a deform report";
        return std::nullopt;
    }
    const auto& oc = other["config"];
    for (const char* key : {"surface", "bundle", "grid"})
        if (oc.value(key, Json()) != mine[key]) {
            reason = std::string("series dump has a different ") + key;
            return std::nullopt;
        }
    if (oc["deform"].value("sigma_scale", Json()) != mine["deform"]["sigma_scale"]) {
        reason = "series dump has a different sigma_scale";
        return std::nullopt;
    }
    DeformationSeries s;
    const int n = other["N"].get<int>();
    try {
        for (int i = 1; i <= n; ++i) {
            auto f = read_field<Mat4>(dir / ("series_" + two_digits(i) + ".json"), grid);
            require(f.kind == ValueKind::TwoForm && f.bundle == cfg.bundle.dual(), ErrorKind::InvalidInput,
                    "series term " + std::to_string(i) + " has the wrong kind or bundle");
            s.terms.push_back(std::move(f));
            s.log.push_back(TermRecord{i, 0, 0, 0, {}});
        }
    } catch (const Error& e) {
        reason = e.what();
        return std::nullopt;
    }
    return s;
}

} // namespace detail

/// Hamiltonian-flow route to ω(t) at t = flow.t_final, with cross-validation against a deform
/// series dump in `compare` when one matches.
inline RunOutcome run_flow(const RunConfig& cfg, const std::filesystem::path& out_dir,
                           const std::optional<std::filesystem::path>& compare)
{
    RunOutcome out;
    out.report = detail::report_skeleton(cfg);
    auto& rep = out.report;
    detail::StageTimer timer;
    std::string current;
    const double t = cfg.flow.t_final;
    rep["t"] = t;

    GridPtr grid;
    DeformationProblem pb;
    AmbientFields fields;
    double potential_deviation = 0, potential_min_eig = 0;
    auto warn = [&](const std::string& w) {
        rep["warnings"].push_back(w);
        out.warnings.push_back(w);
    };

    std::optional<detail::StageError> err = detail::stage("setup", current, [&] {
        grid = make_grid(cfg.surface, cfg.grid);
        pb = make_problem(grid, cfg.bundle, cfg.deform.sigma_scale);
        rep["t_star_vaisman"] = pb.t_star;
        const double r = pb.t_star, scale = calibrated_scale(r);
        auto pot = radial_potential(grid, cfg.bundle.dual(), r, scale);
        auto pf = lck_from_potential(*pb.stencil, pot, pb.theta, pb.j);
        potential_deviation = form_discrepancy(pf.F, pb.f) / frame_sup_norm(pb.f);
        potential_min_eig = pf.min_eig;
        if (cfg.fields == FieldsRoute::ClosedForm) {
            fields = radial_fields(r, scale, pb.sigma.m1, pb.sigma.m2, cfg.deform.sigma_scale);
        } else {
            auto x = hamiltonian_field(*pb.stencil, pot, pb.theta, pb.q);
            fields = interpolated_fields(x, pf.F, pb.q);
        }
    });
    timer.mark("setup");

    FlowForm w, w2;
    Json flow_block;
    if (!err) err = detail::stage("flow", current, [&] {
        w = omega_flow(fields, grid, cfg.bundle.dual(), t, cfg.flow);
        FlowConfig c2 = cfg.flow;
        c2.n_steps *= 2;
        w2 = omega_flow(fields, grid, cfg.bundle.dual(), t, c2);
        const double r1 = flow_structure_residual(fields, w), r2 = flow_structure_residual(fields, w2);
        Form2Field tf = pb.f;
        for (auto& m : tf.data) m *= t;
        flow_block = {{"fields", to_string(cfg.fields)},
                      {"n_steps", cfg.flow.n_steps},
                      {"potential_deviation", potential_deviation},
                      {"potential_min_eig", potential_min_eig},
                      {"structure_residual", r1},
                      {"structure_residual_2n", r2},
                      {"structure_order", detail::refinement_order(r1, r2, 2.0)},
                      {"step_refinement", form_discrepancy(w.omega, w2.omega)},
                      {"linear_deviation", form_discrepancy(w.omega, tf) / frame_sup_norm(tf)}};
        rep["flow"] = flow_block;
    });
    timer.mark("flow");

    BiHermitianStructure bs;
    if (!err) err = detail::stage("structure", current, [&] {
        bs = build_structure(pb, w.omega, t, cfg.deform);
        detail::fill_core(rep, bs.report);
    });
    timer.mark("structure");

    if (!err) {
        if (!compare) {
            warn("no series dump given (--compare); flow-only report");
        } else {
            std::string reason;
            auto series = detail::load_matching_series(*compare, cfg, grid, reason);
            if (!series) {
                warn("no matching series dump: " + reason + "; flow-only report");
            } else {
                err = detail::stage("cross_validation", current, [&] {
                    rep["N"] = series->order();
                    auto wh = omega_flow(fields, grid, cfg.bundle.dual(), t / 2, cfg.flow);
                    auto cv = cross_validate(w.omega, assemble(*series, t), wh.omega, assemble(*series, t / 2), t);
                    cv.structure_residual = flow_block["structure_residual"].get<double>();
                    cv.step_refinement = flow_block["step_refinement"].get<double>();
                    rep["cross_validation"] = {{"t", cv.t},
                                               {"discrepancy", cv.discrepancy},
                                               {"discrepancy_half", cv.discrepancy_half},
                                               {"slope", cv.slope},
                                               {"structure_residual", cv.structure_residual},
                                               {"step_refinement", cv.step_refinement}};
                });
            }
        }
        timer.mark("cross_validation");
    }

    if (err) {
        detail::record_failure(out, *err);
    } else {
        for (const auto& d : bs.report.diagnostics) rep["diagnostics"].push_back(d);
        const bool valid = rep["diagnostics"].empty();
        rep["verdict"] = valid ? "VALID" : "INVALID";
        out.exit_code = valid ? ExitValid : ExitInvalid;
    }

    if (!out_dir.empty()) {
        if (w.omega.grid) {
            write_field(out_dir, "omega_flow", w.omega);
            std::vector<std::vector<double>> rows;
            const auto& m = w.map;
            for (std::size_t i = 0; i < grid->size(); i += std::size_t(cfg.trace_stride))
                for (std::size_t k = 0; k < m.samples(); ++k) {
                    const Vec4& x = m.point(i, k);
                    rows.push_back({double(i), m.s[k], x(0), x(1), x(2), x(3), m.jacobian(i, k).determinant()});
                }
            write_csv(out_dir / "flow_trace.csv", {"node", "s", "re_z1", "im_z1", "re_z2", "im_z2", "jacobian_det"}, rows);
        }
        if (bs.p.grid) {
            write_field(out_dir, "p", bs.p);
            detail::write_overlay(out_dir / "overlay_z2.csv", bs.overlay_z2);
            detail::write_overlay(out_dir / "overlay_z1.csv", bs.overlay_z1);
        }
        timer.mark("write");
        write_json(out_dir / "report.json", rep);
    }
    out.timing = timer.json();
    if (!out_dir.empty()) write_json(out_dir / "timing.json", out.timing);
    return out;
}

} // namespace bihermitian
