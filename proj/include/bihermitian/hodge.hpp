#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/special_functions/jacobi.hpp>
#include <unsupported/Eigen/FFT>

#include "forms.hpp"

namespace bihermitian {

/// Coefficient u of a (0,2)-form u Θ, Θ = dz̄1∧dz̄2/|z|²; Θ is γ-invariant.
struct Twisted02Scalar {
    GridPtr grid;
    FlatBundleSpec bundle;
    std::vector<cplx> u;
};

/// Coefficients of a (0,1)-form b1 ε̄1 + b2 ε̄2, ε̄k = dz̄k/|z|.
struct Twisted01Form {
    GridPtr grid;
    FlatBundleSpec bundle;
    std::vector<cplx> b[2];
};

enum class Preconditioner { Diagonal, None };

struct SolverConfig {
    double rel_tol = 1e-10;
    int max_iter = 5000;
    Preconditioner preconditioner = Preconditioner::Diagonal;
};

struct SolverLogEntry {
    int iter;
    double relres;
    double ritz_min;
};

struct SolveStats {
    int iterations = 0;
    double relres = 0;
    double ritz_min = 0;
    bool converged = false;
    /// ‖∂̄β - α‖/‖α‖ in the discrete norms, set by beta_of.
    double dbar_residual = 0;
    std::vector<SolverLogEntry> log;
};

namespace detail {

/// Smallest eigenvalue of the symmetric tridiagonal (a, b) by Sturm bisection in [lo, hi].
inline double tridiag_min_eig(const std::vector<double>& a, const std::vector<double>& b, double lo, double hi)
{
    auto count_below = [&](double x) {
        int cnt = 0;
        double q = 1;
        for (std::size_t i = 0; i < a.size(); ++i) {
            double off = i == 0 ? 0.0 : b[i - 1] * b[i - 1];
            q = a[i] - x - (i == 0 ? 0.0 : off / q);
            if (q == 0) q = 1e-300;
            if (q < 0) ++cnt;
        }
        return cnt;
    };
    for (int it = 0; it < 100 && hi - lo > 1e-7 * std::abs(hi); ++it) {
        double mid = 0.5 * (lo + hi);
        if (count_below(mid) > 0)
            hi = mid;
        else
            lo = mid;
    }
    return 0.5 * (lo + hi);
}

/// Gauss-Legendre rule on [a, b] (Golub-Welsch).
inline void gauss_legendre(int n, double a, double b, std::vector<double>& x, std::vector<double>& w)
{
    Eigen::MatrixXd jm = Eigen::MatrixXd::Zero(n, n);
    for (int k = 1; k < n; ++k) jm(k, k - 1) = jm(k - 1, k) = k / std::sqrt(4.0 * k * k - 1.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jm);
    x.resize(n);
    w.resize(n);
    for (int k = 0; k < n; ++k) {
        const double v = es.eigenvectors()(0, k);
        x[k] = 0.5 * (a + b) + 0.5 * (b - a) * es.eigenvalues()(k);
        w[k] = (b - a) * v * v;
    }
}

/// Number of regular functions of weight (m1, m2) with polynomial degree at most deg.
inline int regular_count(int m1, int m2, int deg)
{
    const int r = deg - std::abs(m1) - std::abs(m2);
    return r < 0 ? 0 : r / 2 + 1;
}

/// cos^a η sin^b η P_n^{(b,a)}(cos 2η) and its η-derivative: the η-profiles of smooth functions on
/// the 3-sphere with torus weights of modulus (a, b).
inline std::pair<double, double> regular_profile(int n, int a, int b, double eta)
{
    const double c = std::cos(eta), s = std::sin(eta), x = std::cos(2 * eta);
    const double p = boost::math::jacobi(unsigned(n), double(b), double(a), x);
    const double dp = n == 0 ? 0.0 : boost::math::jacobi_prime(unsigned(n), double(b), double(a), x);
    const double pw = std::pow(c, a) * std::pow(s, b);
    double dpw = 0;
    if (a > 0) dpw -= a * std::pow(c, a - 1) * std::pow(s, b + 1);
    if (b > 0) dpw += b * std::pow(c, a + 1) * std::pow(s, b - 1);
    return {pw * p, dpw * p - 2 * std::sin(2 * eta) * pw * dp};
}

inline int wrap_mode(int m, int n) { return ((m % n) + n) % n; }

/// DFT along s, ξ1 and ξ2 of every η row; the forward transform carries the 1/N factor.
inline void torus_fft(const FundamentalGrid& g, std::vector<cplx>& data, bool forward)
{
    const int axes[3] = {AxisS, AxisXi1, AxisXi2};
    const std::size_t total = g.size();
    for (int a : axes) {
        const int n = g.n(a);
        const std::size_t stride = g.stride(a);
        const std::size_t lines = total / n;
        parallel_chunks(lines, [&](std::size_t, std::size_t lb, std::size_t le) {
            Eigen::FFT<double> fft;
            fft.SetFlag(Eigen::FFT<double>::Unscaled);
            std::vector<cplx> in(n), out(n);
            for (std::size_t l = lb; l < le; ++l) {
                // line l: all indices with the a-th digit removed
                const std::size_t hi = l / stride, lo = l % stride;
                const std::size_t base = hi * stride * n + lo;
                for (int k = 0; k < n; ++k) in[k] = data[base + k * stride];
                if (forward)
                    fft.fwd(out.data(), in.data(), n);
                else
                    fft.inv(out.data(), in.data(), n);
                const double sc = forward ? 1.0 / n : 1.0;
                for (int k = 0; k < n; ++k) data[base + k * stride] = out[k] * sc;
            }
        });
    }
}

/// Frame ε̄k = dz̄k/|z| and dual vectors v̄k = |z| ∂/∂z̄k in Hopf coordinate components.
struct NodeFrame {
    CVec4 e[2];
    CVec4 v[2];
};

inline NodeFrame node_frame(const Coord& c, double lambda)
{
    const double ll = std::log(lambda);
    const double ce = std::cos(c.eta), se = std::sin(c.eta);
    const cplx i(0, 1);
    const cplx p1 = std::exp(-i * c.xi1), p2 = std::exp(-i * c.xi2);
    NodeFrame f;
    f.e[0] = p1 * CVec4(ll * ce, -se, -i * ce, 0);
    f.e[1] = p2 * CVec4(ll * se, ce, 0, -i * se);
    f.v[0] = std::conj(p1) * CVec4(ce / (2 * ll), -se / 2, i / (2 * ce), 0);
    f.v[1] = std::conj(p2) * CVec4(se / (2 * ll), ce / 2, 0, i / (2 * se));
    return f;
}

} // namespace detail

/// ∂̄_θ : Λ^{0,1} → Λ^{0,2} for a torus-invariant Hermitian metric g and a Lee form θ = θ_s ds,
/// discretised by Fourier series in (s, ξ1, ξ2) and, for each torus weight (m1, m2), the regular
/// η-profiles cos^{|m1|}η sin^{|m2|}η P_n(cos 2η) up to polynomial degree 2n_η - 2 on (0,2)-forms
/// and 2n_η - 1 on (0,1)-forms.  The profiles are smooth across both poles, so the discrete adjoint is
/// consistent there.  Both coefficient spaces carry bases orthonormal for the metric inner products
/// ⟨β,β'⟩ = ∫ g(β,β') dv_g and ⟨u,u'⟩ = ∫ g(uΘ,u'Θ) dv_g, which makes ∂̄* the conjugate transpose.
///
/// For the weight (M1, M2) of u the components have weights (M1, M2-1) and (M1-1, M2), and
/// u = -(cos η/2) b1' + ((M2-1)/(2 sin η) + sin η (½ - c)) b1
///     - (sin η/2) b2' - ((M1-1)/(2 cos η) + cos η (½ - c)) b2,  c = (2πiκ - θ_s)/(2 ln λ).
class DbarOperator {
public:
    using Coeffs = std::vector<cplx>;

    DbarOperator(const Generator<Mat4>& metric, const LeeData& theta, FlatBundleSpec bundle)
        : grid_(theta.theta.grid), bundle_(bundle)
    {
        const auto& gr = *grid_;
        const double tol = 1e-12;
        const Vec4 th0 = theta.theta.data[0];
        for (std::size_t i = 0; i < gr.size(); ++i)
            require((theta.theta.data[i] - th0).norm() <= tol * (1 + th0.norm()), ErrorKind::InvalidInput,
                    "DbarOperator: the Lee form must be constant");
        require(th0.tail<3>().norm() <= tol * (1 + th0.norm()), ErrorKind::InvalidInput,
                "DbarOperator: the Lee form must be a multiple of ds");
        theta_s_ = th0(AxisS);
        check_invariance(metric);
        build(metric);
    }

    const GridPtr& grid() const { return grid_; }
    const FlatBundleSpec& bundle() const { return bundle_; }
    std::size_t dim02() const { return dim02_; }
    std::size_t dim01() const { return dim01_; }

    /// ũ = ∂̄ b̃ in coefficient space.
    void apply(const Coeffs& b, Coeffs& u) const
    {
        u.assign(dim02_, 0.0);
        parallel_for(modes_.size(), [&](std::size_t m) {
            const Mode& md = modes_[m];
            const Block& bl = blocks_[md.block];
            Eigen::Map<const Eigen::VectorXcd> bv(b.data() + md.off01, bl.nb());
            Eigen::Map<Eigen::VectorXcd> uv(u.data() + md.off02, bl.nu);
            uv = bl.a * bv + md.c * (bl.c * bv);
        });
    }

    /// b̃ = ∂̄* ũ, the conjugate transpose in the orthonormal bases.
    void apply_adjoint(const Coeffs& u, Coeffs& b) const
    {
        b.assign(dim01_, 0.0);
        parallel_for(modes_.size(), [&](std::size_t m) {
            const Mode& md = modes_[m];
            const Block& bl = blocks_[md.block];
            Eigen::Map<const Eigen::VectorXcd> uv(u.data() + md.off02, bl.nu);
            Eigen::Map<Eigen::VectorXcd> bv(b.data() + md.off01, bl.nb());
            bv = bl.a.adjoint() * uv + std::conj(md.c) * (bl.c.adjoint() * uv);
        });
    }

    void laplacian(const Coeffs& x, Coeffs& out) const
    {
        Coeffs b;
        apply_adjoint(x, b);
        apply(b, out);
    }

    /// Diagonal of □̄ = ∂̄∂̄*.
    const std::vector<double>& diagonal() const { return diag_; }

    static cplx dot(const Coeffs& x, const Coeffs& y)
    {
        return parallel_sum<cplx>(x.size(), [&](std::size_t i) { return std::conj(x[i]) * y[i]; });
    }
    static double dot_re(const Coeffs& x, const Coeffs& y)
    {
        return parallel_sum<double>(x.size(), [&](std::size_t i) { return (std::conj(x[i]) * y[i]).real(); });
    }

    /// Metric-projection of nodal Θ-coefficients onto the discrete (0,2) space.
    Coeffs analyze02(const std::vector<cplx>& nodal) const
    {
        require(nodal.size() == grid_->size(), ErrorKind::InvalidInput, "analyze02: size mismatch");
        std::vector<cplx> spec = nodal;
        detail::torus_fft(*grid_, spec, true);
        Coeffs out(dim02_);
        const int ne = grid_->n(AxisEta);
        parallel_for(modes_.size(), [&](std::size_t m) {
            const Mode& md = modes_[m];
            const Block& bl = blocks_[md.block];
            Eigen::VectorXcd row(ne);
            for (int j = 0; j < ne; ++j) row(j) = spec[bin(md.kappa, j, md.m1, md.m2)];
            Eigen::Map<Eigen::VectorXcd>(out.data() + md.off02, bl.nu) = bl.fit * row;
        });
        return out;
    }

    std::vector<cplx> synthesize02(const Coeffs& u) const
    {
        std::vector<cplx> spec(grid_->size(), 0.0);
        const int ne = grid_->n(AxisEta);
        parallel_for(modes_.size(), [&](std::size_t m) {
            const Mode& md = modes_[m];
            const Block& bl = blocks_[md.block];
            Eigen::VectorXcd row = bl.eval_u * Eigen::Map<const Eigen::VectorXcd>(u.data() + md.off02, bl.nu);
            for (int j = 0; j < ne; ++j) spec[bin(md.kappa, j, md.m1, md.m2)] = row(j);
        });
        detail::torus_fft(*grid_, spec, false);
        return spec;
    }

    /// Nodal frame components of a discrete (0,1)-form.
    void synthesize01(const Coeffs& b, std::vector<cplx>* out) const
    {
        const int ne = grid_->n(AxisEta);
        for (int k = 0; k < 2; ++k) out[k].assign(grid_->size(), 0.0);
        parallel_for(modes_.size(), [&](std::size_t m) {
            const Mode& md = modes_[m];
            const Block& bl = blocks_[md.block];
            Eigen::Map<const Eigen::VectorXcd> bv(b.data() + md.off01, bl.nb());
            Eigen::VectorXcd r1 = bl.eval_b1 * bv, r2 = bl.eval_b2 * bv;
            for (int j = 0; j < ne; ++j) {
                out[0][bin(md.kappa, j, md.m1, md.m2 - 1)] = r1(j);
                out[1][bin(md.kappa, j, md.m1 - 1, md.m2)] = r2(j);
            }
        });
        for (int k = 0; k < 2; ++k) detail::torus_fft(*grid_, out[k], false);
    }

    /// Coordinate components of Σ b_k ε̄_k.
    CForm1Field to_coordinates(const std::vector<cplx>* b) const
    {
        CForm1Field out(grid_, bundle_, ValueKind::OneForm, CVec4::Zero());
        const double lambda = grid_->lambda();
        parallel_for(out.size(), [&](std::size_t i) {
            auto f = detail::node_frame(grid_->coord(i), lambda);
            out.data[i] = f.e[0] * b[0][i] + f.e[1] * b[1][i];
        });
        return out;
    }

    /// Coordinate 2-form d_θ(Σ b_k ε̄_k), differentiated exactly in the basis.
    CForm2Field d_theta(const Coeffs& b) const
    {
        const int ne = grid_->n(AxisEta);
        const double two_pi = 2 * std::numbers::pi;
        const cplx i(0, 1);
        // per frame index k: value and the derivatives along s, η, ξ1, ξ2
        std::vector<cplx> nod[2][5];
        for (auto& k : nod)
            for (auto& v : k) v.assign(grid_->size(), 0.0);
        parallel_for(modes_.size(), [&](std::size_t m) {
            const Mode& md = modes_[m];
            const Block& bl = blocks_[md.block];
            Eigen::Map<const Eigen::VectorXcd> bv(b.data() + md.off01, bl.nb());
            const Eigen::MatrixXcd* ev[2] = {&bl.eval_b1, &bl.eval_b2};
            const Eigen::MatrixXcd* ed[2] = {&bl.eval_db1, &bl.eval_db2};
            const int w1[2] = {md.m1, md.m1 - 1}, w2[2] = {md.m2 - 1, md.m2};
            for (int k = 0; k < 2; ++k) {
                Eigen::VectorXcd r = *ev[k] * bv, dr = *ed[k] * bv;
                for (int j = 0; j < ne; ++j) {
                    const std::size_t x = bin(md.kappa, j, w1[k], w2[k]);
                    nod[k][0][x] = r(j);
                    nod[k][1][x] = cplx(0, two_pi * md.kappa) * r(j);
                    nod[k][2][x] = dr(j);
                    nod[k][3][x] = i * double(w1[k]) * r(j);
                    nod[k][4][x] = i * double(w2[k]) * r(j);
                }
            }
        });
        for (auto& k : nod)
            for (auto& v : k) detail::torus_fft(*grid_, v, false);
        CForm2Field out(grid_, bundle_, ValueKind::TwoForm, CMat4::Zero());
        const double ll = std::log(grid_->lambda());
        parallel_for(out.size(), [&](std::size_t x) {
            const Coord c = grid_->coord(x);
            const double ce = std::cos(c.eta), se = std::sin(c.eta);
            const cplx p1 = std::exp(-i * c.xi1), p2 = std::exp(-i * c.xi2);
            const CVec4 e[2] = {p1 * CVec4(ll * ce, -se, -i * ce, 0), p2 * CVec4(ll * se, ce, 0, -i * se)};
            // ∂_μ e_k, rows μ
            CMat4 de[2] = {CMat4::Zero(), CMat4::Zero()};
            de[0].row(AxisEta) = (p1 * CVec4(-ll * se, -ce, i * se, 0)).transpose();
            de[0].row(AxisXi1) = (-i * e[0]).transpose();
            de[1].row(AxisEta) = (p2 * CVec4(ll * ce, -se, 0, -i * ce)).transpose();
            de[1].row(AxisXi2) = (-i * e[1]).transpose();
            CMat4 d = CMat4::Zero(); // d(μ,ν) = ∂_μ β_ν
            CVec4 beta = CVec4::Zero();
            for (int k = 0; k < 2; ++k) {
                CVec4 db(nod[k][1][x], nod[k][2][x], nod[k][3][x], nod[k][4][x]);
                d += de[k] * nod[k][0][x] + db * e[k].transpose();
                beta += e[k] * nod[k][0][x];
            }
            CMat4 w = d - d.transpose();
            w.row(AxisS) -= theta_s_ * beta.transpose();
            w.col(AxisS) += theta_s_ * beta;
            out.data[x] = w.transpose();
        });
        return out;
    }

    /// Coordinate 2-form of Θ at node i.
    CMat4 theta_form(std::size_t i) const
    {
        auto f = detail::node_frame(grid_->coord(i), grid_->lambda());
        CMat4 comp = f.e[0] * f.e[1].transpose() - f.e[1] * f.e[0].transpose();
        return comp.transpose();
    }

    /// (0,2) coefficient B(v̄1, v̄2) of a coordinate 2-form (map convention).
    cplx coefficient02(const CMat4& m, std::size_t i) const
    {
        auto f = detail::node_frame(grid_->coord(i), grid_->lambda());
        return (f.v[1].transpose() * m * f.v[0])(0, 0);
    }

    /// Coefficient-space ranges of one Fourier mode, for tests.
    struct ModeInfo {
        int kappa, m1, m2;
        std::size_t off02, off01;
        int n02, n01;
    };
    std::vector<ModeInfo> modes() const
    {
        std::vector<ModeInfo> out;
        for (const auto& md : modes_) {
            const Block& bl = blocks_[md.block];
            out.push_back({md.kappa, md.m1, md.m2, md.off02, md.off01, bl.nu, bl.nb()});
        }
        return out;
    }

private:
    struct Block {
        int nu = 0, nb1 = 0, nb2 = 0;
        Eigen::MatrixXcd a, c;      // ∂̄ = a + c(κ)·c, nu × nb
        Eigen::MatrixXcd fit;       // nodal η-row → coefficients, nu × n_η
        Eigen::MatrixXcd eval_u;    // n_η × nu
        Eigen::MatrixXcd eval_b1;   // n_η × nb
        Eigen::MatrixXcd eval_b2;
        Eigen::MatrixXcd eval_db1;  // η-derivatives at the nodes
        Eigen::MatrixXcd eval_db2;
        int nb() const { return nb1 + nb2; }
    };
    struct Mode {
        int kappa, m1, m2;
        int block;
        cplx c;
        std::size_t off02, off01;
    };

    std::size_t bin(int kappa, int j, int m1, int m2) const
    {
        const auto& g = *grid_;
        return g.index(detail::wrap_mode(kappa, g.n(AxisS)), j, detail::wrap_mode(m1, g.n(AxisXi1)),
                       detail::wrap_mode(m2, g.n(AxisXi2)));
    }

    void check_invariance(const Generator<Mat4>& metric) const
    {
        const double lambda = grid_->lambda(), r0 = grid_->params().r0;
        for (double eta : {0.3, 0.9}) {
            Mat4 ref = metric(node_geometry({0, eta, 0, 0}, lambda, r0));
            for (Coord c : {Coord{0.37, eta, 0, 0}, Coord{0, eta, 1.1, 0}, Coord{0, eta, 0, 2.3}}) {
                Mat4 other = metric(node_geometry(c, lambda, r0));
                require((other - ref).norm() <= 1e-10 * ref.norm(), ErrorKind::InvalidInput,
                        "DbarOperator: the metric must be invariant under s and the torus");
            }
        }
    }

    void build(const Generator<Mat4>& metric)
    {
        const auto& g = *grid_;
        const int ne = g.n(AxisEta), ns = g.n(AxisS), n1 = g.n(AxisXi1), n2 = g.n(AxisXi2);
        const double lambda = g.lambda(), ll = std::log(lambda), r0 = g.params().r0;
        const int deg02 = 2 * ne - 2, deg01 = 2 * ne - 1;

        // quadrature and metric data on (0, π/2)
        std::vector<double> qx, qw;
        detail::gauss_legendre(4 * ne + 16, 0.0, 0.5 * std::numbers::pi, qx, qw);
        const int nq = int(qx.size());
        const double torus = 4 * std::numbers::pi * std::numbers::pi;
        std::vector<Eigen::Matrix2cd> gram(nq);
        std::vector<double> rho1(nq), rho2(nq);
        for (int q = 0; q < nq; ++q) {
            Coord c{0, qx[q], 0, 0};
            Mat4 G = metric(node_geometry(c, lambda, r0));
            CMat4 gi = G.inverse().cast<cplx>();
            auto f = detail::node_frame(c, lambda);
            for (int p = 0; p < 2; ++p)
                for (int r = 0; r < 2; ++r) gram[q](p, r) = (f.e[p].adjoint() * gi * f.e[r])(0, 0);
            rho1[q] = torus * std::sqrt(G.determinant());
            rho2[q] = rho1[q] * gram[q].determinant().real();
        }
        std::vector<double> nodes(ne), nodew(ne);
        for (int j = 0; j < ne; ++j) {
            nodes[j] = (j + 0.5) * g.h(AxisEta);
            nodew[j] = std::sin(nodes[j]) * std::cos(nodes[j]);
        }

        const int b1lo = -n1 / 2 + 1, b2lo = -n2 / 2 + 1;
        const int nm1 = n1 - 1, nm2 = n2 - 1;
        blocks_.assign(std::size_t(nm1) * nm2, Block{});
        parallel_for(blocks_.size(), [&](std::size_t id) {
            const int M1 = b1lo + int(id / nm2), M2 = b2lo + int(id % nm2);
            blocks_[id] = make_block(M1, M2, deg02, deg01, qx, qw, gram, rho1, rho2, nodes, nodew);
        });

        dim02_ = dim01_ = 0;
        for (int kappa = -ns / 2 + 1; kappa <= ns / 2 - 1; ++kappa)
            for (int M1 = b1lo; M1 < b1lo + nm1; ++M1)
                for (int M2 = b2lo; M2 < b2lo + nm2; ++M2) {
                    const int id = (M1 - b1lo) * nm2 + (M2 - b2lo);
                    const Block& bl = blocks_[id];
                    if (bl.nu == 0) continue;
                    const cplx c = (cplx(0, 2 * std::numbers::pi * kappa) - theta_s_) / (2 * ll);
                    modes_.push_back({kappa, M1, M2, id, c, dim02_, dim01_});
                    dim02_ += bl.nu;
                    dim01_ += bl.nb();
                }

        diag_.assign(dim02_, 0.0);
        parallel_for(modes_.size(), [&](std::size_t m) {
            const Mode& md = modes_[m];
            const Block& bl = blocks_[md.block];
            Eigen::MatrixXcd d = bl.a + md.c * bl.c;
            for (int i = 0; i < bl.nu; ++i) diag_[md.off02 + i] = d.row(i).squaredNorm();
        });
    }

    static Block make_block(int M1, int M2, int deg02, int deg01, const std::vector<double>& qx,
                            const std::vector<double>& qw, const std::vector<Eigen::Matrix2cd>& gram,
                            const std::vector<double>& rho1, const std::vector<double>& rho2,
                            const std::vector<double>& nodes, const std::vector<double>& nodew)
    {
        Block bl;
        const int ne = int(nodes.size());
        bl.nu = std::min(detail::regular_count(M1, M2, deg02), ne);
        bl.nb1 = std::min(detail::regular_count(M1, M2 - 1, deg01), ne);
        bl.nb2 = std::min(detail::regular_count(M1 - 1, M2, deg01), ne);
        if (bl.nu == 0) return bl;
        const int nq = int(qx.size()), nb = bl.nb();

        // profiles at quadrature points and nodes, normalised in the round measure
        auto profiles = [&](int n, int a, int b, Eigen::MatrixXd& fq, Eigen::MatrixXd& dq, Eigen::MatrixXd& fn,
                            Eigen::MatrixXd& dn) {
            fq.resize(nq, n);
            dq.resize(nq, n);
            fn.resize(ne, n);
            dn.resize(ne, n);
            for (int k = 0; k < n; ++k) {
                double nrm = 0;
                for (int q = 0; q < nq; ++q) {
                    auto [f, df] = detail::regular_profile(k, a, b, qx[q]);
                    fq(q, k) = f;
                    dq(q, k) = df;
                    nrm += qw[q] * std::sin(qx[q]) * std::cos(qx[q]) * f * f;
                }
                nrm = 1 / std::sqrt(nrm);
                fq.col(k) *= nrm;
                dq.col(k) *= nrm;
                for (int j = 0; j < ne; ++j) {
                    auto [f, df] = detail::regular_profile(k, a, b, nodes[j]);
                    fn(j, k) = nrm * f;
                    dn(j, k) = nrm * df;
                }
            }
        };
        Eigen::MatrixXd uq, udq, un, udn, b1q, b1dq, b1n, b1dn, b2q, b2dq, b2n, b2dn;
        profiles(bl.nu, std::abs(M1), std::abs(M2), uq, udq, un, udn);
        profiles(bl.nb1, std::abs(M1), std::abs(M2 - 1), b1q, b1dq, b1n, b1dn);
        profiles(bl.nb2, std::abs(M1 - 1), std::abs(M2), b2q, b2dq, b2n, b2dn);

        Eigen::MatrixXcd m1 = Eigen::MatrixXcd::Zero(nb, nb);
        Eigen::MatrixXd m2 = Eigen::MatrixXd::Zero(bl.nu, bl.nu);
        Eigen::MatrixXcd pa = Eigen::MatrixXcd::Zero(bl.nu, nb), pc = pa;
        for (int q = 0; q < nq; ++q) {
            const double eta = qx[q], ce = std::cos(eta), se = std::sin(eta);
            const double w1 = qw[q] * rho1[q], w2 = qw[q] * rho2[q];
            Eigen::VectorXd fu = uq.row(q).transpose();
            m2 += w2 * fu * fu.transpose();
            Eigen::VectorXcd fb(nb), da(nb), dc(nb);
            for (int k = 0; k < bl.nb1; ++k) {
                fb(k) = b1q(q, k);
                da(k) = -0.5 * ce * b1dq(q, k) + ((M2 - 1) / (2 * se) + 0.5 * se) * b1q(q, k);
                dc(k) = -se * b1q(q, k);
            }
            for (int k = 0; k < bl.nb2; ++k) {
                fb(bl.nb1 + k) = b2q(q, k);
                da(bl.nb1 + k) = -0.5 * se * b2dq(q, k) - ((M1 - 1) / (2 * ce) + 0.5 * ce) * b2q(q, k);
                dc(bl.nb1 + k) = ce * b2q(q, k);
            }
            Eigen::MatrixXcd gq = Eigen::MatrixXcd::Zero(nb, nb);
            gq.topLeftCorner(bl.nb1, bl.nb1) = gram[q](0, 0) * fb.head(bl.nb1) * fb.head(bl.nb1).transpose();
            gq.topRightCorner(bl.nb1, bl.nb2) = gram[q](0, 1) * fb.head(bl.nb1) * fb.tail(bl.nb2).transpose();
            gq.bottomLeftCorner(bl.nb2, bl.nb1) = gram[q](1, 0) * fb.tail(bl.nb2) * fb.head(bl.nb1).transpose();
            gq.bottomRightCorner(bl.nb2, bl.nb2) = gram[q](1, 1) * fb.tail(bl.nb2) * fb.tail(bl.nb2).transpose();
            m1 += w1 * gq;
            pa += w2 * fu.cast<cplx>() * da.transpose();
            pc += w2 * fu.cast<cplx>() * dc.transpose();
        }
        Eigen::LLT<Eigen::MatrixXd> l2(m2);
        Eigen::LLT<Eigen::MatrixXcd> l1(m1);
        require(l2.info() == Eigen::Success && l1.info() == Eigen::Success, ErrorKind::Degenerate,
                "DbarOperator: metric mass matrix is not positive definite");
        Eigen::MatrixXd L2 = l2.matrixL();
        Eigen::MatrixXcd L1 = l1.matrixL();
        // ã = L2⁻¹ P L1⁻ᴴ
        auto transform = [&](const Eigen::MatrixXcd& p) -> Eigen::MatrixXcd {
            Eigen::MatrixXcd t = L2.cast<cplx>().triangularView<Eigen::Lower>().solve(p);
            return L1.triangularView<Eigen::Lower>().solve(t.adjoint()).adjoint();
        };
        bl.a = transform(pa);
        bl.c = transform(pc);

        Eigen::MatrixXd sw = Eigen::VectorXd::Map(nodew.data(), ne).cwiseSqrt().asDiagonal() * un;
        Eigen::MatrixXd pinv = sw.colPivHouseholderQr().solve(
            Eigen::MatrixXd(Eigen::VectorXd::Map(nodew.data(), ne).cwiseSqrt().asDiagonal()));
        bl.fit = (L2.transpose() * pinv).cast<cplx>();
        bl.eval_u = L2.cast<cplx>().triangularView<Eigen::Lower>().solve(un.cast<cplx>().transpose()).transpose();
        Eigen::MatrixXcd l1ih = L1.adjoint().triangularView<Eigen::Upper>().solve(Eigen::MatrixXcd::Identity(nb, nb));
        bl.eval_b1 = b1n.cast<cplx>() * l1ih.topRows(bl.nb1);
        bl.eval_b2 = b2n.cast<cplx>() * l1ih.bottomRows(bl.nb2);
        bl.eval_db1 = b1dn.cast<cplx>() * l1ih.topRows(bl.nb1);
        bl.eval_db2 = b2dn.cast<cplx>() * l1ih.bottomRows(bl.nb2);
        return bl;
    }

    GridPtr grid_;
    FlatBundleSpec bundle_;
    double theta_s_ = 0;
    std::vector<Block> blocks_;
    std::vector<Mode> modes_;
    std::size_t dim02_ = 0, dim01_ = 0;
    std::vector<double> diag_;
};

/// Preconditioned CG for □̄ x = α in coefficient space.
inline DbarOperator::Coeffs green(const DbarOperator& op, const DbarOperator::Coeffs& alpha, const SolverConfig& cfg,
                                  SolveStats* stats = nullptr)
{
    require(cfg.rel_tol > 0 && cfg.max_iter > 0, ErrorKind::InvalidInput, "green: invalid solver configuration");
    require(alpha.size() == op.dim02(), ErrorKind::InvalidInput, "green: size mismatch");
    const std::size_t n = op.dim02();
    SolveStats local;
    SolveStats& st = stats ? *stats : local;
    st = SolveStats{};
    DbarOperator::Coeffs x(n, 0.0);
    const double bnorm = std::sqrt(DbarOperator::dot_re(alpha, alpha));
    if (bnorm == 0) {
        st.converged = true;
        return x;
    }
    const auto& dg = op.diagonal();
    auto precond = [&](const DbarOperator::Coeffs& r, DbarOperator::Coeffs& z) {
        z.resize(n);
        if (cfg.preconditioner == Preconditioner::Diagonal)
            parallel_for(n, [&](std::size_t i) { z[i] = r[i] / dg[i]; });
        else
            z = r;
    };
    DbarOperator::Coeffs r = alpha, z, p, q;
    precond(r, z);
    p = z;
    double rho = DbarOperator::dot_re(r, z);
    std::vector<double> ta, tb;
    double prev_alpha = 0, prev_beta = 0, ritz = 1e300;
    for (int it = 1; it <= cfg.max_iter; ++it) {
        op.laplacian(p, q);
        const double pq = DbarOperator::dot_re(p, q);
        require(pq > 0 && std::isfinite(pq), ErrorKind::Solver, "green: operator lost positivity");
        const double a = rho / pq;
        parallel_for(n, [&](std::size_t i) {
            x[i] += a * p[i];
            r[i] -= a * q[i];
        });
        precond(r, z);
        const double rho_new = DbarOperator::dot_re(r, z);
        const double beta = rho_new / rho;
        // Lanczos tridiagonal from the CG coefficients
        ta.push_back(1.0 / a + (it > 1 ? prev_beta / prev_alpha : 0.0));
        tb.push_back(std::sqrt(std::max(beta, 0.0)) / a);
        double upper = std::min(ritz, ta.back() + 1e-300);
        if (it == 1) upper = ta[0];
        ritz = detail::tridiag_min_eig(ta, tb, 0.0, upper * (1 + 1e-12));
        prev_alpha = a;
        prev_beta = beta;
        const double rel = std::sqrt(DbarOperator::dot_re(r, r)) / bnorm;
        st.log.push_back({it, rel, ritz});
        st.iterations = it;
        st.relres = rel;
        st.ritz_min = ritz;
        if (rel <= cfg.rel_tol) {
            st.converged = true;
            return x;
        }
        parallel_for(n, [&](std::size_t i) { p[i] = z[i] + beta * p[i]; });
        rho = rho_new;
    }
    throw Error(ErrorKind::Solver, "green: no convergence in " + std::to_string(cfg.max_iter) +
                                       " iterations (relres " + std::to_string(st.relres) + ", ritz_min " +
                                       std::to_string(st.ritz_min) + ")");
}

/// Coefficients of the minimal-norm solution β = ∂̄* G α of ∂̄β = α.
inline DbarOperator::Coeffs beta_coefficients(const DbarOperator& op, const Twisted02Scalar& w02,
                                              const SolverConfig& cfg, SolveStats* stats = nullptr)
{
    require(w02.grid == op.grid(), ErrorKind::InvalidInput, "beta_of: mismatched grids");
    SolveStats local;
    SolveStats& st = stats ? *stats : local;
    auto alpha = op.analyze02(w02.u);
    auto x = green(op, alpha, cfg, &st);
    DbarOperator::Coeffs b, db;
    op.apply_adjoint(x, b);
    op.apply(b, db);
    const double an = DbarOperator::dot_re(alpha, alpha);
    double rn = 0;
    for (std::size_t i = 0; i < db.size(); ++i) rn += std::norm(db[i] - alpha[i]);
    st.dbar_residual = an == 0 ? 0.0 : std::sqrt(rn / an);
    return b;
}

/// β = ∂̄* G α as nodal frame components.
inline Twisted01Form beta_of(const DbarOperator& op, const Twisted02Scalar& w02, const SolverConfig& cfg,
                             SolveStats* stats = nullptr)
{
    auto b = beta_coefficients(op, w02, cfg, stats);
    Twisted01Form out{w02.grid, w02.bundle, {}};
    op.synthesize01(b, out.b);
    return out;
}

/// 2 Re (d_θ β)^{1,1} = ∂_θβ + conj.
inline Form2Field assemble_omega11(const Stencil& st, const CForm1Field& beta, const LeeData* th, const MatField& j)
{
    auto db = novikov_d(st, beta, th);
    Form2Field out(beta.grid, beta.bundle, ValueKind::TwoForm, Mat4::Zero());
    parallel_for(out.size(), [&](std::size_t i) { out.data[i] = 2.0 * invariant_part(db.data[i], j.data[i]).real(); });
    return out;
}

/// 2 Re (d_θ β)^{1,1} with β given by its coefficients.
inline Form2Field assemble_omega11(const DbarOperator& op, const DbarOperator::Coeffs& b, const MatField& j)
{
    auto db = op.d_theta(b);
    Form2Field out(op.grid(), op.bundle(), ValueKind::TwoForm, Mat4::Zero());
    parallel_for(out.size(), [&](std::size_t i) { out.data[i] = 2.0 * invariant_part(db.data[i], j.data[i]).real(); });
    return out;
}

/// Θ-coefficient of the (0,2) part of a real or complex 2-form field.
template <class M>
Twisted02Scalar project02(const DbarOperator& op, const EquivariantField<M>& w)
{
    Twisted02Scalar out{w.grid, w.bundle, std::vector<cplx>(w.size())};
    parallel_for(w.size(), [&](std::size_t i) { out.u[i] = op.coefficient02(w.data[i].template cast<cplx>(), i); });
    return out;
}

/// Real 2-form 2 Re(u Θ).
inline Form2Field expand02(const DbarOperator& op, const Twisted02Scalar& u)
{
    Form2Field out(u.grid, u.bundle, ValueKind::TwoForm, Mat4::Zero());
    parallel_for(out.size(), [&](std::size_t i) { out.data[i] = 2.0 * (u.u[i] * op.theta_form(i)).real(); });
    return out;
}

} // namespace bihermitian
