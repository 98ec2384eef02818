#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "deformation.hpp"
#include "io.hpp"

namespace bihermitian {

struct Series2D {
    std::string label;
    std::vector<double> x, y;
};

struct PlotData {
    std::string title, xlabel, ylabel;
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
    std::vector<Series2D> lines;
};

namespace detail {

inline std::string svg_num(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

inline std::string svg_escape(const std::string& s)
{
    std::string out;
    for (char c : s) {
        if (c == '<') out += "&lt;";
        else if (c == '>') out += "&gt;";
        else if (c == '&') out += "&amp;";
        else out += c;
    }
    return out;
}

} // namespace detail

/// Static SVG line plot with a frame, axis ranges and one polyline per series.
inline std::string render_svg(const PlotData& d)
{
    const double W = 640, H = 400, ml = 70, mr = 20, mt = 40, mb = 50;
    double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
    for (const auto& s : d.lines)
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            x0 = std::min(x0, s.x[i]);
            x1 = std::max(x1, s.x[i]);
            y0 = std::min(y0, s.y[i]);
            y1 = std::max(y1, s.y[i]);
        }
    require(std::isfinite(x0) && std::isfinite(y0), ErrorKind::InvalidInput, "plot: no finite data to draw");
    if (x1 == x0) x1 = x0 + 1;
    if (y1 == y0) {
        y0 -= 0.5;
        y1 += 0.5;
    }
    auto px = [&](double x) { return ml + (x - x0) / (x1 - x0) * (W - ml - mr); };
    auto py = [&](double y) { return H - mb - (y - y0) / (y1 - y0) * (H - mt - mb); };
    const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};
    using detail::svg_num;
    std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" font-family=\"sans-serif\" "
                    "font-size=\"12\">\n";
    s += "<rect width=\"640\" height=\"400\" fill=\"white\"/>\n";
    s += "<text x=\"320\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" + detail::svg_escape(d.title) + "</text>\n";
    s += "<rect x=\"" + svg_num(ml) + "\" y=\"" + svg_num(mt) + "\" width=\"" + svg_num(W - ml - mr) + "\" height=\"" +
         svg_num(H - mt - mb) + "\" fill=\"none\" stroke=\"black\"/>\n";
    s += "<text x=\"" + svg_num(ml) + "\" y=\"" + svg_num(H - mb + 16) + "\">" + svg_num(x0) + "</text>\n";
    s += "<text x=\"" + svg_num(W - mr) + "\" y=\"" + svg_num(H - mb + 16) + "\" text-anchor=\"end\">" + svg_num(x1) +
         "</text>\n";
    s += "<text x=\"" + svg_num(ml - 6) + "\" y=\"" + svg_num(H - mb) + "\" text-anchor=\"end\">" + svg_num(y0) +
         "</text>\n";
    s += "<text x=\"" + svg_num(ml - 6) + "\" y=\"" + svg_num(mt + 10) + "\" text-anchor=\"end\">" + svg_num(y1) +
         "</text>\n";
    s += "<text x=\"320\" y=\"" + svg_num(H - 12) + "\" text-anchor=\"middle\">" + detail::svg_escape(d.xlabel) +
         "</text>\n";
    s += "<text x=\"16\" y=\"200\" text-anchor=\"middle\" transform=\"rotate(-90 16 200)\">" +
         detail::svg_escape(d.ylabel) + "</text>\n";
    for (std::size_t k = 0; k < d.lines.size(); ++k) {
        const auto& l = d.lines[k];
        std::string pts;
        for (std::size_t i = 0; i < l.x.size(); ++i)
            if (std::isfinite(l.x[i]) && std::isfinite(l.y[i]))
                pts += (pts.empty() ? "" : " ") + svg_num(px(l.x[i])) + "," + svg_num(py(l.y[i]));
        const char* c = colors[k % 4];
        s += "<polyline fill=\"none\" stroke=\"" + std::string(c) + "\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
        s += "<text x=\"" + svg_num(W - mr - 6) + "\" y=\"" + svg_num(mt + 16 + 14 * double(k)) + "\" text-anchor=\"end\" fill=\"" +
             c + "\">" + detail::svg_escape(l.label) + "</text>\n";
    }
    s += "</svg>\n";
    return s;
}

/// p along η at s = 0, ξ1 = 0 through the z₂ = 0 curve: ξ2 = π side at signed η < 0, ξ2 = 0 side at
/// η > 0.  The curve value comes from overlay_z2.csv next to the dump when present.
inline PlotData p_slice(const std::filesystem::path& header_path)
{
    const FieldHeader h = field_header_from(read_json(header_path));
    require(h.kind == ValueKind::Scalar, ErrorKind::InvalidInput,
            "plot p-slice: expected a scalar field dump, got '" + std::string(to_string(h.kind)) + "'");
    auto grid = make_grid({h.lambda, h.lambda, 1.0}, h.dims);
    auto p = read_field<double>(header_path, grid);
    const auto& g = *grid;
    const int ne = g.n(AxisEta), n2 = g.n(AxisXi2);
    PlotData d;
    d.title = "p across the z2 = 0 curve (s = 0, xi1 = 0)";
    d.xlabel = "signed eta";
    d.ylabel = "p";
    d.header = {"eta_signed", "p", "on_curve"};
    for (int row = ne - 1; row >= 0; --row) {
        const auto c = g.coord(g.index(0, row, 0, n2 / 2));
        d.rows.push_back({-c.eta, p[g.index(0, row, 0, n2 / 2)], 0});
    }
    double pole = detail::pole_value<double>(p[g.index(0, 0, 0, 0)], p[g.index(0, 0, 0, n2 / 2)],
                                             p[g.index(0, 1, 0, 0)], p[g.index(0, 1, 0, n2 / 2)]);
    const auto overlay = header_path.parent_path() / "overlay_z2.csv";
    if (std::filesystem::exists(overlay)) {
        auto t = read_csv(overlay);
        const int cs = t.column("s"), cx = t.column("xi1"), cp = t.column("p");
        for (const auto& r : t.rows)
            if (r[cs] == g.s_of(0) && r[cx] == 0.0) {
                pole = r[cp];
                break;
            }
    }
    d.rows.push_back({0.0, pole, 1});
    for (int row = 0; row < ne; ++row) {
        const auto c = g.coord(g.index(0, row, 0, 0));
        d.rows.push_back({c.eta, p[g.index(0, row, 0, 0)], 0});
    }
    Series2D line{"p", {}, {}};
    for (const auto& r : d.rows) {
        line.x.push_back(r[0]);
        line.y.push_back(r[1]);
    }
    d.lines.push_back(line);
    return d;
}

namespace detail {

inline const Json& report_block(const Json& rep, const char* key, const char* kind)
{
    require(rep.is_object() && !rep.empty(), ErrorKind::InvalidInput, std::string("plot ") + kind + ": empty report");
    require(rep.contains(key) && !rep[key].is_null(), ErrorKind::InvalidInput,
            std::string("plot ") + kind + ": report has no '" + key + "' block");
    return rep[key];
}

inline double num_or_nan(const Json& j) { return j.is_number() ? j.get<double>() : NAN; }

} // namespace detail

/// ‖ω_n‖ and n²‖ω_n‖ against n from the series block, log10 scale in the SVG.
inline PlotData residual_vs_n(const Json& rep)
{
    const auto& series = detail::report_block(rep, "series", "residual-vs-n");
    const auto& norms = series.at("norms");
    require(norms.is_array() && !norms.empty(), ErrorKind::InvalidInput, "plot residual-vs-n: empty series");
    const Json* stats = rep.contains("solver_stats") && rep["solver_stats"].is_array() ? &rep["solver_stats"] : nullptr;
    PlotData d;
    d.title = "series term norms";
    d.xlabel = "n";
    d.ylabel = "log10 norm";
    d.header = {"n", "norm", "n2_norm", "term_residual", "lemma_cert"};
    Series2D a{"log10 |w_n|", {}, {}}, b{"log10 n^2 |w_n|", {}, {}};
    for (std::size_t i = 0; i < norms.size(); ++i) {
        const double n = double(i + 1), v = detail::num_or_nan(norms[i]);
        double tr = NAN, lc = NAN;
        if (stats && i < stats->size()) {
            tr = detail::num_or_nan((*stats)[i].value("term_residual", Json()));
            lc = detail::num_or_nan((*stats)[i].value("lemma_cert", Json()));
        }
        d.rows.push_back({n, v, n * n * v, tr, lc});
        if (v > 0) {
            a.x.push_back(n);
            a.y.push_back(std::log10(v));
            b.x.push_back(n);
            b.y.push_back(std::log10(n * n * v));
        }
    }
    d.lines = {a, b};
    return d;
}

/// Nijenhuis and closedness residuals on the base and refined grids, log-log in the SVG.
inline PlotData residual_vs_refinement(const Json& rep)
{
    const auto& ref = detail::report_block(rep, "refinement", "residual-vs-refinement");
    const auto& st = detail::report_block(rep, "structure", "residual-vs-refinement");
    const auto& rt = detail::report_block(rep, "roundtrip", "residual-vs-refinement");
    const double n0 = rep.at("config").at("grid").at("n_s").get<double>();
    const double n1 = ref.at("grid").at("n_s").get<double>();
    PlotData d;
    d.title = "residuals under refinement";
    d.xlabel = "log10 n_s";
    d.ylabel = "log10 residual";
    d.header = {"n_s", "nijenhuis", "closedness", "roundtrip_closedness"};
    d.rows.push_back({n0, detail::num_or_nan(st["nijenhuis"]), detail::num_or_nan(st["closedness"]),
                      detail::num_or_nan(rt["closedness"])});
    d.rows.push_back({n1, detail::num_or_nan(ref["nijenhuis"]), detail::num_or_nan(ref["closedness"]),
                      detail::num_or_nan(ref["roundtrip_closedness"])});
    const char* labels[] = {"nijenhuis", "closedness", "roundtrip closedness"};
    for (int c = 1; c <= 3; ++c) {
        Series2D l{labels[c - 1], {}, {}};
        for (const auto& r : d.rows)
            if (r[c] > 0) {
                l.x.push_back(std::log10(r[0]));
                l.y.push_back(std::log10(r[c]));
            }
        d.lines.push_back(l);
    }
    return d;
}

/// Minimum metric eigenvalue and Gualtieri residual along the positivity scan.
inline PlotData scan_plot(const Json& rep)
{
    const auto& sc = detail::report_block(rep, "scan", "scan");
    const auto& t = sc.at("t");
    require(t.is_array() && !t.empty(), ErrorKind::InvalidInput, "plot scan: empty scan");
    PlotData d;
    d.title = "positivity scan";
    d.xlabel = "t";
    d.ylabel = "log10 value";
    d.header = {"t", "min_eig", "gualtieri"};
    Series2D a{"log10 min eig", {}, {}}, b{"log10 gualtieri", {}, {}};
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double tv = t[i].get<double>(), me = detail::num_or_nan(sc["min_eig"][i]),
                     gr = detail::num_or_nan(sc["gualtieri"][i]);
        d.rows.push_back({tv, me, gr});
        if (me > 0) {
            a.x.push_back(tv);
            a.y.push_back(std::log10(me));
        }
        if (gr > 0) {
            b.x.push_back(tv);
            b.y.push_back(std::log10(gr));
        }
    }
    d.lines = {a, b};
    return d;
}

inline const std::vector<std::string>& plot_kinds()
{
    static const std::vector<std::string> k = {"p-slice", "residual-vs-n", "residual-vs-refinement", "scan"};
    return k;
}

/// Writes `out` (CSV) and the SVG next to it with the extension replaced.
inline void make_plot(const std::filesystem::path& in, const std::string& kind, const std::filesystem::path& out)
{
    const auto& kinds = plot_kinds();
    require(std::find(kinds.begin(), kinds.end(), kind) != kinds.end(), ErrorKind::Config,
            "plot: unknown kind '" + kind + "' (expected p-slice, residual-vs-n, residual-vs-refinement or scan)");
    require(std::filesystem::exists(in), ErrorKind::Io, "plot: input " + in.string() + " does not exist");
    PlotData d;
    if (kind == "p-slice") {
        d = p_slice(in);
    } else {
        require(std::filesystem::file_size(in) > 0, ErrorKind::InvalidInput, "plot " + kind + ": empty report");
        const Json rep = read_json(in);
        if (kind == "residual-vs-n")
            d = residual_vs_n(rep);
        else if (kind == "residual-vs-refinement")
            d = residual_vs_refinement(rep);
        else
            d = scan_plot(rep);
    }
    write_csv(out, d.header, d.rows);
    auto svg = out;
    write_text(svg.replace_extension(".svg"), render_svg(d));
}

} // namespace bihermitian
