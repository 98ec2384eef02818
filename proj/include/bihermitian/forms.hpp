#pragma once

#include <vector>

#include "field.hpp"
#include "stencil.hpp"

namespace bihermitian {

template <class S>
using V4 = Eigen::Matrix<S, 4, 1>;
template <class S>
using M4 = Eigen::Matrix<S, 4, 4>;

namespace detail {

// Ordered complement (b<c<d) of each index a.
inline constexpr int kComp[4][3] = {{1, 2, 3}, {0, 2, 3}, {0, 1, 3}, {0, 1, 2}};

template <class T, class S, class Get>
std::vector<S> component(const EquivariantField<T>& f, Get get)
{
    std::vector<S> out(f.size());
    parallel_for(f.size(), [&](std::size_t i) { out[i] = get(f.data[i]); });
    return out;
}

template <class S>
std::vector<S> derivative(const Stencil& st, int axis, const std::vector<S>& u, int parity)
{
    std::vector<S> out(u.size());
    st.apply(axis, u.data(), out.data(), parity);
    return out;
}

} // namespace detail

/// Discrete exterior derivatives on coordinate components.  Only smooth forms are
/// differentiated; vectors and endomorphisms are singular at the poles in these coordinates.
template <class S>
EquivariantField<V4<S>> exterior_d0(const Stencil& st, const EquivariantField<S>& f)
{
    EquivariantField<V4<S>> out(f.grid, f.bundle, ValueKind::OneForm, V4<S>::Zero());
    for (int a = 0; a < 4; ++a) {
        auto da = detail::derivative(st, a, f.data, 1);
        parallel_for(f.size(), [&](std::size_t i) { out.data[i](a) = da[i]; });
    }
    return out;
}

template <class S>
EquivariantField<M4<S>> exterior_d1(const Stencil& st, const EquivariantField<V4<S>>& alpha)
{
    EquivariantField<M4<S>> out(alpha.grid, alpha.bundle, ValueKind::TwoForm, M4<S>::Zero());
    for (int b = 0; b < 4; ++b) {
        auto ab = detail::component<V4<S>, S>(alpha, [b](const V4<S>& v) { return v(b); });
        for (int a = 0; a < 4; ++a) {
            if (a == b) continue;
            auto d = detail::derivative(st, a, ab, axis_parity(b));
            // comp(a,b) = ω(e_a, e_b) is stored at m(b,a)
            parallel_for(out.size(), [&](std::size_t i) {
                out.data[i](b, a) += d[i];
                out.data[i](a, b) -= d[i];
            });
        }
    }
    return out;
}

template <class S>
EquivariantField<V4<S>> exterior_d2(const Stencil& st, const EquivariantField<M4<S>>& w)
{
    EquivariantField<V4<S>> out(w.grid, w.bundle, ValueKind::ThreeForm, V4<S>::Zero());
    for (int c = 0; c < 4; ++c)
        for (int d = c + 1; d < 4; ++d) {
            auto wcd = detail::component<M4<S>, S>(w, [c, d](const M4<S>& m) { return m(d, c); });
            for (int b = 0; b < 4; ++b) {
                if (b == c || b == d) continue;
                auto der = detail::derivative(st, b, wcd, axis_parity(c) * axis_parity(d));
                // sign of e^b∧e^c∧e^d relative to its ordered form
                int pos = (b > c) + (b > d);
                double sg = (pos % 2 == 0) ? 1.0 : -1.0;
                int a = 6 - b - c - d;
                parallel_for(out.size(), [&](std::size_t i) { out.data[i](a) += sg * der[i]; });
            }
        }
    return out;
}

/// Coefficient of e^0∧e^1∧e^2∧e^3.
template <class S>
EquivariantField<S> exterior_d3(const Stencil& st, const EquivariantField<V4<S>>& t)
{
    EquivariantField<S> out(t.grid, t.bundle, ValueKind::Scalar, S(0));
    for (int a = 0; a < 4; ++a) {
        auto va = detail::component<V4<S>, S>(t, [a](const V4<S>& v) { return v(a); });
        auto der = detail::derivative(st, a, va, a == AxisEta ? 1 : -1);
        const double sg = (a % 2 == 0) ? 1.0 : -1.0;
        parallel_for(out.size(), [&](std::size_t i) { out.data[i] += sg * der[i]; });
    }
    return out;
}

template <class S>
V4<S> wedge(const Vec4& th, S f)
{
    return th.cast<S>() * f;
}

template <class S>
M4<S> wedge(const Vec4& th, const V4<S>& a)
{
    // comp(a,b) = θ_a α_b - θ_b α_a, m = compᵀ
    M4<S> comp = th.cast<S>() * a.transpose() - a * th.cast<S>().transpose();
    return comp.transpose();
}

template <class S>
V4<S> wedge(const Vec4& th, const M4<S>& m)
{
    V4<S> out;
    for (int a = 0; a < 4; ++a) {
        const int b = detail::kComp[a][0], c = detail::kComp[a][1], d = detail::kComp[a][2];
        out(a) = th(b) * m(d, c) - th(c) * m(d, b) + th(d) * m(c, b);
    }
    return out;
}

/// The Lee form of a twisted bundle in the periodic trivialisation.
struct LeeData {
    Form1Field theta;
    double t_parameter = 0;
};

inline LeeData lee_form_for(GridPtr g, FlatBundleSpec b, double t_parameter = 0)
{
    const double mu = b.factor(g->params());
    Vec4 th(-std::log(mu), 0, 0, 0);
    return {Form1Field(g, {}, ValueKind::OneForm, th), t_parameter};
}

template <class S>
EquivariantField<V4<S>> novikov_d(const Stencil& st, const EquivariantField<S>& f, const LeeData* th)
{
    auto out = exterior_d0(st, f);
    if (th) parallel_for(out.size(), [&](std::size_t i) { out.data[i] -= wedge(th->theta.data[i], f.data[i]); });
    return out;
}

template <class S>
EquivariantField<M4<S>> novikov_d(const Stencil& st, const EquivariantField<V4<S>>& a, const LeeData* th)
{
    auto out = exterior_d1(st, a);
    if (th) parallel_for(out.size(), [&](std::size_t i) { out.data[i] -= wedge(th->theta.data[i], a.data[i]); });
    return out;
}

template <class S>
EquivariantField<V4<S>> novikov_d(const Stencil& st, const EquivariantField<M4<S>>& w, const LeeData* th)
{
    auto out = exterior_d2(st, w);
    if (th) parallel_for(out.size(), [&](std::size_t i) { out.data[i] -= wedge(th->theta.data[i], w.data[i]); });
    return out;
}

/// Vector projector onto T^{0,1} for the endomorphism J: ½(1 + iJ).
inline CMat4 projector01(const Mat4& j) { return 0.5 * (CMat4::Identity() + cplx(0, 1) * j.cast<cplx>()); }

inline CMat4 projector10(const Mat4& j) { return 0.5 * (CMat4::Identity() - cplx(0, 1) * j.cast<cplx>()); }

/// (p,q) components of a complex 2-form, ω^{p,q}(X,Y) = ω(X^{..}, Y^{..}) summed over the type pairs.
struct TwoFormTypes {
    CMat4 c20, c11, c02;
};

inline TwoFormTypes two_form_types(const CMat4& m, const Mat4& j)
{
    CMat4 p10 = projector10(j), p01 = projector01(j);
    TwoFormTypes t;
    t.c20 = p10.transpose() * m * p10;
    t.c02 = p01.transpose() * m * p01;
    t.c11 = m - t.c20 - t.c02;
    return t;
}

/// Types of a complex 3-form on a complex surface: (2,1) and (1,2); (3,0) and (0,3) vanish.
inline std::pair<CVec4, CVec4> three_form_types(const CVec4& v, const Mat4& j)
{
    CMat4 p10 = projector10(j), p01 = projector01(j);
    // Full antisymmetric tensor, then project each slot.
    auto full = [&](const CVec4& x) {
        std::array<cplx, 64> t{};
        auto at = [&](int a, int b, int c) -> cplx& { return t[a * 16 + b * 4 + c]; };
        for (int a = 0; a < 4; ++a) {
            const int b = detail::kComp[a][0], c = detail::kComp[a][1], d = detail::kComp[a][2];
            cplx val = x(a);
            at(b, c, d) = val;
            at(c, d, b) = val;
            at(d, b, c) = val;
            at(c, b, d) = -val;
            at(b, d, c) = -val;
            at(d, c, b) = -val;
        }
        return t;
    };
    auto t = full(v);
    auto project = [&](const CMat4& pa, const CMat4& pb, const CMat4& pc) {
        CVec4 out;
        for (int a = 0; a < 4; ++a) {
            const int b = detail::kComp[a][0], c = detail::kComp[a][1], d = detail::kComp[a][2];
            cplx acc = 0;
            for (int x = 0; x < 4; ++x)
                for (int y = 0; y < 4; ++y)
                    for (int z = 0; z < 4; ++z)
                        acc += t[x * 16 + y * 4 + z] * pa(x, b) * pb(y, c) * pc(z, d);
            out(a) = acc;
        }
        return out;
    };
    CVec4 c21 = project(p10, p10, p01) + project(p10, p01, p10) + project(p01, p10, p10);
    CVec4 c12 = project(p01, p01, p10) + project(p01, p10, p01) + project(p10, p01, p01);
    return {c21, c12};
}

struct DolbeaultSplit1 {
    CForm2Field del;   // (2,0) + (1,1) part of d_θ α for α of type (1,0); generally the ∂_θ image
    CForm2Field dbar;  // (1,1) + (0,2)
};

/// Splits d_θ α (α a complex 1-form) into ∂_θ α and ∂̄_θ α.  The (1,1) part of d_θ α is assigned
/// by the type of α: ∂ raises the holomorphic degree, so (1,1) goes to ∂ for (0,1) inputs
/// and to ∂̄ for (1,0) inputs; the input is decomposed into its two types first.
inline DolbeaultSplit1 dolbeault_split_theta(const Stencil& st, const CForm1Field& alpha, const LeeData* th,
                                            const MatField& j)
{
    CForm1Field a10 = alpha, a01 = alpha;
    parallel_for(alpha.size(), [&](std::size_t i) {
        Mat4 jt = j.data[i].transpose();
        // (1,0) forms satisfy Jᵀα = iα
        a10.data[i] = 0.5 * (alpha.data[i] - cplx(0, 1) * (jt.cast<cplx>() * alpha.data[i]));
        a01.data[i] = alpha.data[i] - a10.data[i];
    });
    auto d10 = novikov_d(st, a10, th);
    auto d01 = novikov_d(st, a01, th);
    DolbeaultSplit1 out{d10, d10};
    parallel_for(alpha.size(), [&](std::size_t i) {
        auto t10 = two_form_types(d10.data[i], j.data[i]);
        auto t01 = two_form_types(d01.data[i], j.data[i]);
        out.del.data[i] = t10.c20 + t01.c11 + t01.c20;
        out.dbar.data[i] = t10.c11 + t10.c02 + t01.c02;
    });
    return out;
}

} // namespace bihermitian
