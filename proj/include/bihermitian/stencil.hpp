#pragma once

#include <array>
#include <vector>

#include "errors.hpp"
#include "grid.hpp"
#include "parallel.hpp"

namespace bihermitian {

/// Test hook: scales the ±8 coefficient of the fourth-order stencil.  Must stay 1 in production.
inline double& stencil_fault_scale()
{
    static double s = 1.0;
    return s;
}

/// Centred fourth-order first derivatives along the four grid axes.
///
/// s, ξ1, ξ2 are periodic.  η is staggered on (0, π/2); ghost rows come from the reflections
/// (-η, ξ1, ξ2) ~ (η, ξ1, ξ2+π) and (π-η, ξ1, ξ2) ~ (η, ξ1+π, ξ2), under which the η-component
/// of a form changes sign.  `parity` is that sign for the differentiated component.
class Stencil {
public:
    explicit Stencil(const FundamentalGrid& g) : Stencil(g, derivative_coefficients(), 1) {}

    /// Symmetric sixth difference scaled by `scale`/h: scale·h⁵ ∂⁶ on smooth data, 64·scale/h on the
    /// odd-even mode.
    static Stencil sixth_difference(const FundamentalGrid& g, double scale)
    {
        std::vector<double> c = {1, -6, 15, -20, 15, -6, 1};
        for (auto& x : c) x *= scale;
        return Stencil(g, std::move(c), 1);
    }

    const FundamentalGrid& grid() const { return g_; }

    /// out = D_axis in.
    template <class S>
    void apply(int axis, const S* in, S* out, int parity) const
    {
        run(axis, in, out, parity, false);
    }

    /// out = D_axisᵀ in (plain transpose of the matrix).
    template <class S>
    void apply_transpose(int axis, const S* in, S* out, int parity) const
    {
        run(axis, in, out, parity, true);
    }

    /// Nonzero structure of one matrix row: (column node, coefficient) pairs.
    void row_entries(int axis, std::size_t node, int parity,
                     std::vector<std::pair<std::size_t, double>>& out) const
    {
        out.clear();
        auto m = g_.multi(node);
        if (axis != AxisEta) {
            const int n = g_.n(axis);
            for (int o = -w_; o <= w_; ++o) {
                if (coef_[o + w_] == 0) continue;
                auto mm = m;
                mm[axis] = ((m[axis] + o) % n + n) % n;
                out.push_back({g_.index(mm[0], mm[1], mm[2], mm[3]), coef_[o + w_] / g_.h(axis)});
            }
            return;
        }
        for (const auto& e : rows_[m[1]]) {
            int i1 = m[2], i2 = m[3];
            if (e.shift == Shift::Xi1) i1 = (i1 + g_.n(AxisXi1) / 2) % g_.n(AxisXi1);
            if (e.shift == Shift::Xi2) i2 = (i2 + g_.n(AxisXi2) / 2) % g_.n(AxisXi2);
            out.push_back({g_.index(m[0], e.row, i1, i2), e.coef * (e.reflect ? parity : 1)});
        }
    }

private:
    enum class Shift { None, Xi1, Xi2 };
    struct Entry {
        int row;
        Shift shift;
        double coef;
        bool reflect;
    };

    static std::vector<double> derivative_coefficients()
    {
        const double k = stencil_fault_scale();
        return {1.0 / 12, -8.0 * k / 12, 0.0, 8.0 / 12, -1.0 / 12};
    }

    Stencil(const FundamentalGrid& g, std::vector<double> coef, int) : g_(g), coef_(std::move(coef))
    {
        w_ = int(coef_.size() / 2);
        const int ne = g.n(AxisEta);
        require(ne > w_, ErrorKind::InvalidInput, "Stencil: too few η rows for the stencil width");
        rows_.assign(ne, {});
        rows_t_.assign(ne, {});
        for (int i = 0; i < ne; ++i) {
            for (int m = -w_; m <= w_; ++m) {
                if (coef_[m + w_] == 0) continue;
                Entry e{i + m, Shift::None, coef_[m + w_] / g.h(AxisEta), false};
                if (e.row < 0) {
                    e.row = -1 - e.row;
                    e.shift = Shift::Xi2;
                    e.reflect = true;
                } else if (e.row >= ne) {
                    e.row = 2 * ne - 1 - e.row;
                    e.shift = Shift::Xi1;
                    e.reflect = true;
                }
                rows_[i].push_back(e);
                rows_t_[e.row].push_back({i, e.shift, e.coef, e.reflect});
            }
        }
    }

    template <class S>
    void run(int axis, const S* in, S* out, int parity, bool transpose) const
    {
        if (axis == AxisEta)
            run_eta(in, out, parity, transpose ? rows_t_ : rows_);
        else
            run_periodic(axis, in, out, transpose);
    }

    template <class S>
    void run_periodic(int axis, const S* in, S* out, bool transpose) const
    {
        const int n = g_.n(axis);
        const std::size_t st = g_.stride(axis);
        const std::size_t outer = g_.size() / (st * n);
        const double ih = 1.0 / g_.h(axis);
        const int nc = 2 * w_ + 1;
        std::vector<int> offs;
        std::vector<double> c;
        for (int o = 0; o < nc; ++o) {
            const double v = transpose ? coef_[nc - 1 - o] : coef_[o];
            if (v == 0) continue;
            offs.push_back(o - w_);
            c.push_back(v * ih);
        }
        parallel_for(outer * n, [&](std::size_t job) {
            const std::size_t p = job / n;
            const int k = int(job % n);
            const std::size_t base = p * st * n;
            const S* src[8];
            for (std::size_t e = 0; e < offs.size(); ++e)
                src[e] = in + base + std::size_t(((k + offs[e]) % n + n) % n) * st;
            S* dst = out + base + std::size_t(k) * st;
            for (std::size_t q = 0; q < st; ++q) {
                S acc = c[0] * src[0][q];
                for (std::size_t e = 1; e < offs.size(); ++e) acc += c[e] * src[e][q];
                dst[q] = acc;
            }
        });
    }

    template <class S>
    void run_eta(const S* in, S* out, int parity, const std::vector<std::vector<Entry>>& rows) const
    {
        const int ne = g_.n(AxisEta), n1 = g_.n(AxisXi1), n2 = g_.n(AxisXi2);
        const std::size_t st = g_.stride(AxisEta);
        const std::size_t ns = g_.n(AxisS);
        parallel_for(ns * ne, [&](std::size_t job) {
            const std::size_t is = job / ne;
            const int k = int(job % ne);
            S* dst = out + (is * ne + k) * st;
            for (std::size_t q = 0; q < st; ++q) dst[q] = S(0);
            for (const auto& e : rows[k]) {
                const S* src = in + (is * ne + e.row) * st;
                const double c = e.coef * (e.reflect ? parity : 1);
                if (e.shift == Shift::None) {
                    for (std::size_t q = 0; q < st; ++q) dst[q] += c * src[q];
                } else if (e.shift == Shift::Xi2) {
                    const int h2 = n2 / 2;
                    for (int i1 = 0; i1 < n1; ++i1) {
                        const S* sr = src + std::size_t(i1) * n2;
                        S* dr = dst + std::size_t(i1) * n2;
                        for (int i2 = 0; i2 < n2; ++i2) dr[i2] += c * sr[(i2 + h2) % n2];
                    }
                } else {
                    const int h1 = n1 / 2;
                    for (int i1 = 0; i1 < n1; ++i1) {
                        const S* sr = src + std::size_t((i1 + h1) % n1) * n2;
                        S* dr = dst + std::size_t(i1) * n2;
                        for (int i2 = 0; i2 < n2; ++i2) dr[i2] += c * sr[i2];
                    }
                }
            }
        });
    }

    const FundamentalGrid& g_;
    std::vector<double> coef_;
    int w_ = 2;
    std::vector<std::vector<Entry>> rows_, rows_t_;
};

/// Sign of the η-component under the pole reflections.
inline int axis_parity(int a) { return a == AxisEta ? -1 : 1; }

} // namespace bihermitian
