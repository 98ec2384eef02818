#pragma once

#include <cmath>
#include <vector>

#include "field.hpp"

namespace bihermitian {

namespace detail {

/// Cubic Lagrange weights on the nodes -1, 0, 1, 2 at offset t ∈ [0,1).
inline void cubic_weights(double t, double w[4])
{
    w[0] = -t * (t - 1) * (t - 2) / 6;
    w[1] = (t + 1) * (t - 1) * (t - 2) / 2;
    w[2] = -(t + 1) * t * (t - 2) / 2;
    w[3] = (t + 1) * t * (t - 1) / 6;
}

inline int wrap_index(int i, int n)
{
    i %= n;
    return i < 0 ? i + n : i;
}

} // namespace detail

/// Cubic tensor-product interpolation of per-node values that are functions of the point
/// (frame components, scalars), periodic in s, ξ1, ξ2.  Rows beyond the poles are the
/// reflections η ↦ -η, ξ2 ↦ ξ2 + π and η ↦ π - η, ξ1 ↦ ξ1 + π.
class GridInterpolator {
public:
    explicit GridInterpolator(GridPtr g) : g_(std::move(g)) {}

    const GridPtr& grid() const { return g_; }

    template <class T>
    T operator()(const std::vector<T>& data, const Coord& c) const
    {
        const auto& g = *g_;
        require(data.size() == g.size(), ErrorKind::InvalidInput, "GridInterpolator: size mismatch");
        const int ns = g.n(AxisS), ne = g.n(AxisEta), n1 = g.n(AxisXi1), n2 = g.n(AxisXi2);
        int i0[4];
        double w[4][4];
        const double u[4] = {c.s / g.h(AxisS), c.eta / g.h(AxisEta) - 0.5, c.xi1 / g.h(AxisXi1),
                             c.xi2 / g.h(AxisXi2)};
        for (int a = 0; a < 4; ++a) {
            const double f = std::floor(u[a]);
            i0[a] = int(f);
            detail::cubic_weights(u[a] - f, w[a]);
        }
        T acc = zero_value<T>();
        for (int a = 0; a < 4; ++a) {
            int row = i0[AxisEta] - 1 + a, sh1 = 0, sh2 = 0;
            if (row < 0) {
                row = -1 - row;
                sh2 = n2 / 2;
            } else if (row >= ne) {
                row = 2 * ne - 1 - row;
                sh1 = n1 / 2;
            }
            require(row >= 0 && row < ne, ErrorKind::InvalidInput, "GridInterpolator: η outside [0, π/2]");
            T slab = zero_value<T>();
            for (int b = 0; b < 4; ++b) {
                const int is = detail::wrap_index(i0[AxisS] - 1 + b, ns);
                for (int k = 0; k < 4; ++k) {
                    const int i1 = detail::wrap_index(i0[AxisXi1] - 1 + k + sh1, n1);
                    for (int l = 0; l < 4; ++l) {
                        const int i2 = detail::wrap_index(i0[AxisXi2] - 1 + l + sh2, n2);
                        slab += (w[AxisS][b] * w[AxisXi1][k] * w[AxisXi2][l]) * data[g.index(is, row, i1, i2)];
                    }
                }
            }
            acc += w[AxisEta][a] * slab;
        }
        return acc;
    }

private:
    GridPtr g_;
};

} // namespace bihermitian
