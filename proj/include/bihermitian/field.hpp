#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "grid.hpp"
#include "parallel.hpp"

namespace bihermitian {

enum class ValueKind { Scalar, OneForm, TwoForm, ThreeForm, Vector, Bivector, Endomorphism, Metric };

inline const char* to_string(ValueKind k)
{
    switch (k) {
    case ValueKind::Scalar: return "scalar";
    case ValueKind::OneForm: return "one_form";
    case ValueKind::TwoForm: return "two_form";
    case ValueKind::ThreeForm: return "three_form";
    case ValueKind::Vector: return "vector";
    case ValueKind::Bivector: return "bivector";
    case ValueKind::Endomorphism: return "endomorphism";
    default: return "metric";
    }
}

/// Grid-sampled section of a flat bundle, stored in the periodic trivialisation
/// v(s) = μ^{-s} u(s) of the coordinate components u.  In this picture the flat
/// differential of the bundle becomes d_θ = d - θ∧ with θ = -ln μ ds.
/// Three-forms are stored as Vec4 with v[a] = T(e_b, e_c, e_d), (b<c<d) the complement of a.
template <class T>
struct EquivariantField {
    GridPtr grid;
    FlatBundleSpec bundle;
    ValueKind kind = ValueKind::Scalar;
    std::vector<T> data;

    EquivariantField() = default;
    EquivariantField(GridPtr g, FlatBundleSpec b, ValueKind k, const T& fill)
        : grid(std::move(g)), bundle(b), kind(k), data(grid->size(), fill)
    {
    }

    std::size_t size() const { return data.size(); }
    T& operator[](std::size_t i) { return data[i]; }
    const T& operator[](std::size_t i) const { return data[i]; }
    double factor() const { return bundle.factor(grid->params()); }
};

using ScalarField = EquivariantField<double>;
using CScalarField = EquivariantField<cplx>;
using Form1Field = EquivariantField<Vec4>;
using CForm1Field = EquivariantField<CVec4>;
using Form2Field = EquivariantField<Mat4>;
using CForm2Field = EquivariantField<CMat4>;
using Form3Field = EquivariantField<Vec4>;
using CForm3Field = EquivariantField<CVec4>;
using MatField = EquivariantField<Mat4>;

template <class T>
inline T zero_value()
{
    if constexpr (std::is_arithmetic_v<T> || std::is_same_v<T, cplx>)
        return T(0);
    else
        return T::Zero();
}

/// Closed-picture generator: coordinate components at an arbitrary Hopf coordinate.
template <class T>
using Generator = std::function<T(const NodeGeometry&)>;

template <class T>
EquivariantField<T> sample(GridPtr grid, FlatBundleSpec bundle, ValueKind kind, const Generator<T>& gen)
{
    EquivariantField<T> f(grid, bundle, kind, zero_value<T>());
    const double mu = f.factor();
    const auto& g = *grid;
    parallel_for(g.size(), [&](std::size_t i) {
        NodeGeometry geo = g.geometry(i);
        f.data[i] = gen(geo) * std::pow(mu, -geo.c.s);
    });
    return f;
}

template <class T>
double value_norm(const T& v)
{
    if constexpr (std::is_arithmetic_v<T> || std::is_same_v<T, cplx>)
        return std::abs(v);
    else
        return v.norm();
}

/// Largest relative mismatch between μ·u(z) and u(γz) over the seam nodes.
template <class T>
double seam_residual(const FundamentalGrid& g, FlatBundleSpec bundle, const Generator<T>& gen)
{
    const double mu = bundle.factor(g.params());
    double worst = 0, scale = 0;
    for (std::size_t b = 0; b < g.base_size(); ++b) {
        T inner = gen(g.geometry(b));
        T outer = gen(node_geometry(g.seam_image(b), g.lambda(), g.params().r0));
        worst = std::max(worst, value_norm(T(outer - inner * mu)));
        scale = std::max(scale, value_norm(T(inner * mu)));
    }
    return scale > 0 ? worst / scale : worst;
}

// Components in the frame r ∂/∂x_k; these are γ-invariant for untwisted tensors
// and smooth across the coordinate poles.
template <class M>
M frame_two_form(const M& m, const Mat4& e)
{
    return e.transpose().cast<typename M::Scalar>() * m * e.cast<typename M::Scalar>();
}

inline Mat4 frame_endo(const Mat4& k, const Mat4& e, const Mat4& einv) { return einv * k * e; }

inline Mat4 frame_bivector(const Mat4& p, const Mat4& einv) { return einv * p * einv.transpose(); }

template <class V>
V frame_one_form(const V& a, const Mat4& e)
{
    return e.transpose().cast<typename V::Scalar>() * a;
}

/// Three-form frame transform via the dual vector w^a = ±v[a], w' = det(E) E⁻¹ w.
template <class V>
V frame_three_form(const V& v, const Mat4& e, const Mat4& einv)
{
    using S = typename V::Scalar;
    const double sg[4] = {1, -1, 1, -1};
    V w;
    for (int a = 0; a < 4; ++a) w(a) = sg[a] * v(a);
    V w2 = (e.determinant() * einv).cast<S>() * w;
    V out;
    for (int a = 0; a < 4; ++a) out(a) = sg[a] * w2(a);
    return out;
}

template <class T>
double sup_norm(const EquivariantField<T>& f)
{
    return parallel_max(f.size(), [&](std::size_t i) { return value_norm(f.data[i]); });
}

/// Sup over nodes of the Frobenius norm in the frame r ∂/∂x_k.
template <class T>
double frame_sup_norm(const EquivariantField<T>& f)
{
    const auto& g = *f.grid;
    return parallel_max(f.size(), [&](std::size_t i) -> double {
        const Mat4& e = g.frame(i);
        const Mat4& ei = g.frame_inv(i);
        if constexpr (std::is_arithmetic_v<T> || std::is_same_v<T, cplx>) {
            return std::abs(f.data[i]);
        } else if constexpr (T::ColsAtCompileTime == 1) {
            switch (f.kind) {
            case ValueKind::Vector: return (ei.cast<typename T::Scalar>() * f.data[i]).norm();
            case ValueKind::ThreeForm: return frame_three_form(f.data[i], e, ei).norm();
            default: return frame_one_form(f.data[i], e).norm();
            }
        } else {
            using S = typename T::Scalar;
            switch (f.kind) {
            case ValueKind::Endomorphism: return (ei.cast<S>() * f.data[i] * e.cast<S>()).norm();
            case ValueKind::Bivector: return (ei.cast<S>() * f.data[i] * ei.transpose().cast<S>()).norm();
            default: return frame_two_form(f.data[i], e).norm();
            }
        }
    });
}

template <class T>
EquivariantField<T> axpy(double a, const EquivariantField<T>& x, const EquivariantField<T>& y)
{
    EquivariantField<T> out = y;
    parallel_for(out.size(), [&](std::size_t i) { out.data[i] = y.data[i] + a * x.data[i]; });
    return out;
}

} // namespace bihermitian
