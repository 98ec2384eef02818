#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "errors.hpp"
#include "pointwise.hpp"

namespace bihermitian {

/// Contraction γ(z1, z2) = (a1 z1, a2 z2), real multipliers 0 < a1 <= a2 < 1.
struct HopfParams {
    double a1 = 0.5;
    double a2 = 0.5;
    double r0 = 1.0;

    void validate() const
    {
        require(a1 > 0 && a1 <= a2 && a2 < 1, ErrorKind::InvalidInput,
                "HopfParams: need 0 < a1 <= a2 < 1");
        require(r0 > 0, ErrorKind::InvalidInput, "HopfParams: r0 must be positive");
    }
    bool diagonal_equal() const { return a1 == a2; }
    double lambda() const { return a1; }
};

/// L_{p1,p2} raised to `power`; power -1 is the dual bundle.
struct FlatBundleSpec {
    int p1 = 0;
    int p2 = 0;
    int power = 1;

    /// Factor μ with s(γz) = μ s(z).
    double factor(const HopfParams& hp) const
    {
        return std::pow(std::pow(hp.a1, p1) * std::pow(hp.a2, p2), power);
    }
    FlatBundleSpec dual() const { return {p1, p2, -power}; }
    bool trivial() const { return power == 0 || (p1 == 0 && p2 == 0); }
    bool operator==(const FlatBundleSpec&) const = default;
};

struct GridDims {
    int n_s = 16;
    int n_eta = 9;
    int n_xi1 = 16;
    int n_xi2 = 16;

    std::size_t size() const { return std::size_t(n_s) * n_eta * n_xi1 * n_xi2; }
    bool operator==(const GridDims&) const = default;
};

enum Axis : int { AxisS = 0, AxisEta = 1, AxisXi1 = 2, AxisXi2 = 3 };

/// Hopf coordinates (s, η, ξ1, ξ2): z1 = r cosη e^{iξ1}, z2 = r sinη e^{iξ2}, r = r0 λ^s.
struct Coord {
    double s = 0, eta = 0, xi1 = 0, xi2 = 0;
};

struct NodeGeometry {
    Coord c;
    double r = 1;
    Vec4 x;        // ambient (x1, y1, x2, y2)
    Mat4 jac;      // ∂x/∂(s, η, ξ1, ξ2)
    Mat4 jac_inv;
};

inline NodeGeometry node_geometry(const Coord& c, double lambda, double r0)
{
    NodeGeometry g;
    g.c = c;
    g.r = r0 * std::pow(lambda, c.s);
    const double ce = std::cos(c.eta), se = std::sin(c.eta);
    const double c1 = std::cos(c.xi1), s1 = std::sin(c.xi1);
    const double c2 = std::cos(c.xi2), s2 = std::sin(c.xi2);
    const double r = g.r;
    g.x << r * ce * c1, r * ce * s1, r * se * c2, r * se * s2;
    const double ll = std::log(lambda);
    g.jac.col(0) = ll * g.x;
    g.jac.col(1) << -r * se * c1, -r * se * s1, r * ce * c2, r * ce * s2;
    g.jac.col(2) << -g.x(1), g.x(0), 0, 0;
    g.jac.col(3) << 0, 0, -g.x(3), g.x(2);
    g.jac_inv = g.jac.inverse();
    return g;
}

/// Hopf coordinates of an ambient point, with s left unwrapped.
inline Coord coord_of(const Vec4& x, double lambda, double r0)
{
    const double rho1 = std::hypot(x(0), x(1)), rho2 = std::hypot(x(2), x(3));
    const double r = std::hypot(rho1, rho2);
    Coord c;
    c.s = std::log(r / r0) / std::log(lambda);
    c.eta = std::atan2(rho2, rho1);
    c.xi1 = std::atan2(x(1), x(0));
    c.xi2 = std::atan2(x(3), x(2));
    const double tau = 2 * std::numbers::pi;
    if (c.xi1 < 0) c.xi1 += tau;
    if (c.xi2 < 0) c.xi2 += tau;
    return c;
}

/// Tensor grid over the fundamental domain s ∈ [0,1) of γ.  γ acts as s ↦ s+1, so the
/// seam s = 1 is identified with s = 0 and coordinate components of a section with factor
/// μ satisfy u(s+1) = μ u(s).
class FundamentalGrid {
public:
    FundamentalGrid(const HopfParams& hp, const GridDims& d) : hp_(hp), d_(d)
    {
        hp.validate();
        require(hp.diagonal_equal(), ErrorKind::InvalidInput,
                "FundamentalGrid: only a1 = a2 is supported by the numerical backend");
        require(d.n_s >= 5 && d.n_xi1 >= 6 && d.n_xi2 >= 6 && d.n_eta >= 2, ErrorKind::InvalidInput,
                "FundamentalGrid: resolution too small for the 5-point stencils");
        require(d.n_xi1 % 2 == 0 && d.n_xi2 % 2 == 0, ErrorKind::InvalidInput,
                "FundamentalGrid: n_xi1 and n_xi2 must be even");
        h_[AxisS] = 1.0 / d.n_s;
        h_[AxisEta] = 0.5 * std::numbers::pi / d.n_eta;
        h_[AxisXi1] = 2 * std::numbers::pi / d.n_xi1;
        h_[AxisXi2] = 2 * std::numbers::pi / d.n_xi2;
        n_[0] = d.n_s;
        n_[1] = d.n_eta;
        n_[2] = d.n_xi1;
        n_[3] = d.n_xi2;
        stride_[3] = 1;
        for (int a = 2; a >= 0; --a) stride_[a] = stride_[a + 1] * n_[a + 1];

        const std::size_t nb = base_size();
        frame_.resize(nb);
        frame_inv_.resize(nb);
        for (std::size_t b = 0; b < nb; ++b) {
            NodeGeometry g = node_geometry(coord(b), hp_.lambda(), 1.0);
            frame_inv_[b] = g.jac;  // r = 1 at s = 0
            frame_[b] = g.jac_inv;
        }
    }

    const HopfParams& params() const { return hp_; }
    const GridDims& dims() const { return d_; }
    double lambda() const { return hp_.lambda(); }
    double h(int axis) const { return h_[axis]; }
    int n(int axis) const { return n_[axis]; }
    std::size_t stride(int axis) const { return stride_[axis]; }
    std::size_t size() const { return d_.size(); }
    /// Number of nodes on one s-slice.
    std::size_t base_size() const { return stride_[0]; }

    std::size_t index(int is, int ie, int i1, int i2) const
    {
        return is * stride_[0] + ie * stride_[1] + i1 * stride_[2] + i2;
    }
    std::array<int, 4> multi(std::size_t idx) const
    {
        std::array<int, 4> m;
        for (int a = 0; a < 4; ++a) {
            m[a] = int(idx / stride_[a]);
            idx %= stride_[a];
        }
        return m;
    }
    Coord coord(std::size_t idx) const
    {
        auto m = multi(idx);
        return {m[0] * h_[0], (m[1] + 0.5) * h_[1], m[2] * h_[2], m[3] * h_[3]};
    }
    double s_of(std::size_t idx) const { return double(idx / stride_[0]) * h_[0]; }
    NodeGeometry geometry(std::size_t idx) const { return node_geometry(coord(idx), hp_.lambda(), hp_.r0); }

    /// Columns are the frame vectors r ∂/∂x_k in coordinate components; independent of s.
    const Mat4& frame(std::size_t idx) const { return frame_[idx % stride_[0]]; }
    /// Inverse frame, equal to the chart Jacobian divided by r.
    const Mat4& frame_inv(std::size_t idx) const { return frame_inv_[idx % stride_[0]]; }

    /// Quadrature weight of the coordinate cell.
    double cell_volume() const { return h_[0] * h_[1] * h_[2] * h_[3]; }

    /// Seam identification: node (0, ie, i1, i2) is identified with γ of the point at s = 1.
    Coord seam_image(std::size_t base) const
    {
        Coord c = coord(base);
        c.s = 1.0;
        return c;
    }

private:
    HopfParams hp_;
    GridDims d_;
    double h_[4];
    int n_[4];
    std::size_t stride_[4];
    std::vector<Mat4> frame_, frame_inv_;
};

using GridPtr = std::shared_ptr<const FundamentalGrid>;

inline GridPtr make_grid(const HopfParams& hp, const GridDims& d)
{
    return std::make_shared<const FundamentalGrid>(hp, d);
}

} // namespace bihermitian
