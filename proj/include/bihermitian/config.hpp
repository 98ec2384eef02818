#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>

#include "deformation.hpp"
#include "flow.hpp"
#include "io.hpp"

namespace bihermitian {

enum class FieldsRoute { ClosedForm, Interpolated };

inline const char* to_string(FieldsRoute r) { return r == FieldsRoute::ClosedForm ? "closed_form" : "interpolated"; }

/// Fully resolved run configuration; every field is echoed into the report.
struct RunConfig {
    HopfParams surface{0.5, 0.5, 1.0};
    FlatBundleSpec bundle{-1, 0, 1};
    GridDims grid{16, 9, 16, 16};
    std::optional<GridDims> refinement;
    DeformConfig deform;
    double t_fraction = 0.5;
    FlowConfig flow;
    FieldsRoute fields = FieldsRoute::ClosedForm;
    int trace_stride = 8;
    double roundtrip_tol = 1e-10;
    double nijenhuis_order_min = 2.0;
};

namespace detail {

/// Strict object reader: typed lookups with defaults, unknown keys rejected by finish().
class StrictObject {
public:
    StrictObject(const Json& j, std::string path) : j_(j), path_(std::move(path))
    {
        require(j.is_object(), ErrorKind::Config, path_ + ": expected an object");
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    double number(const std::string& key, double def)
    {
        if (!take(key)) return def;
        const auto& v = j_.at(key);
        require(v.is_number(), ErrorKind::Config, where(key) + ": expected a number");
        return v.get<double>();
    }

    std::optional<double> optional_number(const std::string& key, std::optional<double> def)
    {
        if (!take(key)) return def;
        const auto& v = j_.at(key);
        if (v.is_null()) return std::nullopt;
        require(v.is_number(), ErrorKind::Config, where(key) + ": expected a number or null");
        return v.get<double>();
    }

    int integer(const std::string& key, int def)
    {
        if (!take(key)) return def;
        const auto& v = j_.at(key);
        require(v.is_number_integer(), ErrorKind::Config, where(key) + ": expected an integer");
        return v.get<int>();
    }

    std::string string(const std::string& key, const std::string& def)
    {
        if (!take(key)) return def;
        const auto& v = j_.at(key);
        require(v.is_string(), ErrorKind::Config, where(key) + ": expected a string");
        return v.get<std::string>();
    }

    const Json* object(const std::string& key)
    {
        if (!take(key)) return nullptr;
        const auto& v = j_.at(key);
        if (v.is_null()) return nullptr;
        require(v.is_object(), ErrorKind::Config, where(key) + ": expected an object");
        return &v;
    }

    std::string where(const std::string& key) const { return path_ + "." + key; }

    void finish() const
    {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            require(seen_.count(it.key()), ErrorKind::Config, "unknown config key '" + where(it.key()) + "'");
    }

private:
    bool take(const std::string& key)
    {
        seen_.insert(key);
        return j_.contains(key);
    }

    const Json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

inline GridDims grid_from(const Json& j, const std::string& path, GridDims def)
{
    StrictObject o(j, path);
    GridDims d{o.integer("n_s", def.n_s), o.integer("n_eta", def.n_eta), o.integer("n_xi1", def.n_xi1),
               o.integer("n_xi2", def.n_xi2)};
    o.finish();
    require(d.n_s >= 4 && d.n_eta >= 3 && d.n_xi1 >= 4 && d.n_xi2 >= 4 && d.n_xi1 % 2 == 0 && d.n_xi2 % 2 == 0,
            ErrorKind::Config, path + ": need n_s >= 4, n_eta >= 3 and even n_xi1, n_xi2 >= 4");
    return d;
}

inline Json grid_json(const GridDims& d)
{
    return Json{{"n_s", d.n_s}, {"n_eta", d.n_eta}, {"n_xi1", d.n_xi1}, {"n_xi2", d.n_xi2}};
}

} // namespace detail

inline RunConfig parse_config(const Json& j)
{
    RunConfig c;
    detail::StrictObject top(j, "config");

    if (auto s = top.object("surface")) {
        detail::StrictObject o(*s, "config.surface");
        if (o.has("lambda")) {
            require(!o.has("a1") && !o.has("a2"), ErrorKind::Config,
                    "config.surface: give either lambda or (a1, a2), not both");
            const double l = o.number("lambda", 0.5);
            c.surface = {l, l, 1.0};
        } else {
            const double a1 = o.number("a1", 0.5), a2 = o.number("a2", a1);
            require(a1 == a2, ErrorKind::Config,
                    "config.surface: a1 != a2 is not supported by the numeric backend; the metric representative "
                    "used here has a closed form only for a1 = a2 = lambda");
            c.surface = {a1, a2, 1.0};
        }
        o.finish();
    }
    require(c.surface.a1 > 0 && c.surface.a1 < 1, ErrorKind::Config, "config.surface: lambda must lie in (0, 1)");

    if (auto b = top.object("bundle")) {
        detail::StrictObject o(*b, "config.bundle");
        c.bundle = {o.integer("p1", c.bundle.p1), o.integer("p2", c.bundle.p2), 1};
        o.finish();
    }

    if (auto g = top.object("grid")) c.grid = detail::grid_from(*g, "config.grid", c.grid);
    if (auto g = top.object("refinement")) c.refinement = detail::grid_from(*g, "config.refinement", c.grid);

    if (auto d = top.object("deform")) {
        detail::StrictObject o(*d, "config.deform");
        c.deform.order = o.integer("N", c.deform.order);
        c.deform.t = o.optional_number("t", c.deform.t);
        c.t_fraction = o.number("t_fraction", c.t_fraction);
        c.deform.scan_t_max = o.number("scan_t_max", c.deform.scan_t_max);
        c.deform.scan_points = o.integer("scan_points", c.deform.scan_points);
        c.deform.sigma_scale = o.number("sigma_scale", c.deform.sigma_scale);
        o.finish();
    }
    require(c.deform.order >= 1 && c.deform.order <= 32, ErrorKind::Config, "config.deform.N must lie in [1, 32]");
    require(!c.deform.t || (std::isfinite(*c.deform.t) && *c.deform.t > 0), ErrorKind::Config,
            "config.deform.t must be positive");
    require(c.t_fraction > 0 && c.t_fraction <= 1, ErrorKind::Config, "config.deform.t_fraction must lie in (0, 1]");
    require(c.deform.scan_t_max > 0 && c.deform.scan_points >= 1, ErrorKind::Config,
            "config.deform: scan_t_max must be positive and scan_points at least 1");
    require(std::isfinite(c.deform.sigma_scale), ErrorKind::Config, "config.deform.sigma_scale must be finite");

    if (auto f = top.object("flow")) {
        detail::StrictObject o(*f, "config.flow");
        c.flow.t_final = o.number("t_final", c.flow.t_final);
        c.flow.n_steps = o.integer("n_steps", c.flow.n_steps);
        c.flow.jacobian_step = o.number("jacobian_step", c.flow.jacobian_step);
        const std::string route = o.string("fields", to_string(c.fields));
        require(route == "closed_form" || route == "interpolated", ErrorKind::Config,
                "config.flow.fields must be \"closed_form\" or \"interpolated\"");
        c.fields = route == "closed_form" ? FieldsRoute::ClosedForm : FieldsRoute::Interpolated;
        c.trace_stride = o.integer("trace_stride", c.trace_stride);
        o.finish();
    }
    c.flow.validate();
    require(c.flow.t_final > 0, ErrorKind::Config, "config.flow.t_final must be positive");
    require(c.trace_stride >= 1, ErrorKind::Config, "config.flow.trace_stride must be at least 1");

    if (auto s = top.object("solver")) {
        detail::StrictObject o(*s, "config.solver");
        c.deform.solver.rel_tol = o.number("rel_tol", c.deform.solver.rel_tol);
        c.deform.solver.max_iter = o.integer("max_iter", c.deform.solver.max_iter);
        const std::string pc = o.string("preconditioner", "diagonal");
        require(pc == "diagonal" || pc == "none", ErrorKind::Config,
                "config.solver.preconditioner must be \"diagonal\" or \"none\"");
        c.deform.solver.preconditioner = pc == "diagonal" ? Preconditioner::Diagonal : Preconditioner::None;
        o.finish();
    }
    require(c.deform.solver.rel_tol > 0 && c.deform.solver.max_iter >= 1, ErrorKind::Config,
            "config.solver: rel_tol must be positive and max_iter at least 1");

    if (auto t = top.object("tolerances")) {
        detail::StrictObject o(*t, "config.tolerances");
        c.deform.gualtieri_tol = o.number("gualtieri", c.deform.gualtieri_tol);
        c.deform.lemma_tol = o.number("lemma", c.deform.lemma_tol);
        c.deform.orthogonality_tol = o.number("orthogonality", c.deform.orthogonality_tol);
        c.deform.class_tol = o.number("class", c.deform.class_tol);
        c.deform.p_margin = o.number("p_margin", c.deform.p_margin);
        c.roundtrip_tol = o.number("roundtrip", c.roundtrip_tol);
        c.nijenhuis_order_min = o.number("nijenhuis_order", c.nijenhuis_order_min);
        o.finish();
    }
    for (double v : {c.deform.gualtieri_tol, c.deform.lemma_tol, c.deform.orthogonality_tol, c.deform.class_tol,
                     c.deform.p_margin, c.roundtrip_tol})
        require(v > 0, ErrorKind::Config, "config.tolerances: tolerances must be positive");

    top.finish();
    return c;
}

inline RunConfig load_config(const std::filesystem::path& p)
{
    Json j;
    try {
        j = Json::parse(read_text(p));
    } catch (const Json::parse_error& e) {
        throw Error(ErrorKind::Config, p.string() + ": " + e.what());
    } catch (const Error& e) {
        throw Error(ErrorKind::Config, e.what());
    }
    return parse_config(j);
}

inline Json config_json(const RunConfig& c)
{
    const auto& d = c.deform;
    return Json{
        {"surface", {{"lambda", c.surface.lambda()}}},
        {"bundle", {{"p1", c.bundle.p1}, {"p2", c.bundle.p2}}},
        {"grid", detail::grid_json(c.grid)},
        {"refinement", c.refinement ? detail::grid_json(*c.refinement) : Json(nullptr)},
        {"deform",
         {{"N", d.order},
          {"t", d.t ? Json(*d.t) : Json(nullptr)},
          {"t_fraction", c.t_fraction},
          {"scan_t_max", d.scan_t_max},
          {"scan_points", d.scan_points},
          {"sigma_scale", d.sigma_scale}}},
        {"flow",
         {{"t_final", c.flow.t_final},
          {"n_steps", c.flow.n_steps},
          {"jacobian_step", c.flow.jacobian_step},
          {"fields", to_string(c.fields)},
          {"trace_stride", c.trace_stride}}},
        {"solver",
         {{"rel_tol", d.solver.rel_tol},
          {"max_iter", d.solver.max_iter},
          {"preconditioner", d.solver.preconditioner == Preconditioner::Diagonal ? "diagonal" : "none"}}},
        {"tolerances",
         {{"gualtieri", d.gualtieri_tol},
          {"lemma", d.lemma_tol},
          {"orthogonality", d.orthogonality_tol},
          {"class", d.class_tol},
          {"p_margin", d.p_margin},
          {"roundtrip", c.roundtrip_tol},
          {"nijenhuis_order", c.nijenhuis_order_min}}},
    };
}

} // namespace bihermitian
