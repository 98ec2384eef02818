#pragma once

#include <array>
#include <random>

#include "field.hpp"
#include "forms.hpp"

// Ambient forms with homogeneous polynomial coefficients and their exact derivatives.
// Coordinate components scale by λ^{deg+p} under γ.
namespace bihermitian::oracles {

struct QuadraticOneForm {
    std::array<Mat4, 4> q;  // α_b = xᵀ Q_b x

    explicit QuadraticOneForm(std::uint64_t seed)
    {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> n;
        for (auto& m : q) {
            for (int i = 0; i < 4; ++i)
                for (int k = 0; k < 4; ++k) m(i, k) = n(rng);
            m = (0.5 * (m + m.transpose())).eval();
        }
    }
    Vec4 ambient(const Vec4& x) const
    {
        Vec4 a;
        for (int b = 0; b < 4; ++b) a(b) = x.dot(q[b] * x);
        return a;
    }
    Mat4 ambient_d(const Vec4& x) const
    {
        Mat4 comp;
        for (int a = 0; a < 4; ++a)
            for (int b = 0; b < 4; ++b) comp(a, b) = 2 * (q[b] * x)(a) - 2 * (q[a] * x)(b);
        return comp.transpose();
    }
    Generator<Vec4> form() const
    {
        return [this](const NodeGeometry& g) -> Vec4 { return g.jac.transpose() * ambient(g.x); };
    }
    Generator<Mat4> derivative() const
    {
        return [this](const NodeGeometry& g) -> Mat4 { return g.jac.transpose() * ambient_d(g.x) * g.jac; };
    }
};

struct LinearTwoForm {
    std::array<std::array<Vec4, 4>, 4> v;  // ω(e_b, e_c) = v_bc · x, antisymmetric in (b,c)

    explicit LinearTwoForm(std::uint64_t seed)
    {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> n;
        for (int b = 0; b < 4; ++b)
            for (int c = 0; c < 4; ++c) v[b][c].setZero();
        for (int b = 0; b < 4; ++b)
            for (int c = b + 1; c < 4; ++c) {
                for (int i = 0; i < 4; ++i) v[b][c](i) = n(rng);
                v[c][b] = -v[b][c];
            }
    }
    Mat4 ambient(const Vec4& x) const
    {
        Mat4 comp;
        for (int b = 0; b < 4; ++b)
            for (int c = 0; c < 4; ++c) comp(b, c) = v[b][c].dot(x);
        return comp.transpose();
    }
    Vec4 ambient_d() const
    {
        Vec4 out;
        for (int a = 0; a < 4; ++a) {
            const int b = detail::kComp[a][0], c = detail::kComp[a][1], d = detail::kComp[a][2];
            out(a) = v[c][d](b) - v[b][d](c) + v[b][c](d);
        }
        return out;
    }
    Generator<Mat4> form() const
    {
        return [this](const NodeGeometry& g) -> Mat4 { return g.jac.transpose() * ambient(g.x) * g.jac; };
    }
    Generator<Vec4> derivative() const
    {
        return [this](const NodeGeometry& g) -> Vec4 { return frame_three_form(ambient_d(), g.jac, g.jac_inv); };
    }
};

template <class T>
double relative_frame_error(const EquivariantField<T>& a, const EquivariantField<T>& b)
{
    auto diff = axpy(-1.0, b, a);
    return frame_sup_norm(diff) / frame_sup_norm(b);
}

} // namespace bihermitian::oracles
