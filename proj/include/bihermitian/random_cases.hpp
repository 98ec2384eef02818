#pragma once

#include <random>

#include "pointwise.hpp"

namespace bihermitian {

/// A random tangent space: J = S J0 S⁻¹ (orientation kept), a positive (1,1) form F and a
/// bivector Q = Re σ of type (2,0)+(0,2).
struct RandomPoint {
    Mat4 j, f, q, s;
};

class RandomPointGenerator {
public:
    explicit RandomPointGenerator(std::uint64_t seed) : rng_(seed) {}

    Mat4 matrix()
    {
        Mat4 m;
        for (int i = 0; i < 4; ++i)
            for (int k = 0; k < 4; ++k) m(i, k) = normal_(rng_);
        return m;
    }

    Mat4 antisymmetric()
    {
        Mat4 m = matrix();
        return m - m.transpose();
    }

    /// Q is scaled to Frobenius norm `q_norm` in the frame where J is standard.
    RandomPoint point(double q_norm)
    {
        RandomPoint p;
        Mat4 s;
        do {
            s = Mat4::Identity() + 0.3 * matrix();
        } while (s.determinant() < 0.2);
        p.s = s;
        Mat4 sinv = s.inverse();
        Mat4 j0 = standard_j();
        p.j = s * j0 * sinv;
        Mat4 h = matrix();
        h = h * h.transpose() + 0.5 * Mat4::Identity();
        Mat4 g0 = h + j0.transpose() * h * j0;
        // metric in the new basis, then F = G J
        Mat4 g = sinv.transpose() * g0 * sinv;
        p.f = g * p.j;
        cplx c(normal_(rng_), normal_(rng_));
        auto sg = holomorphic_bivector(c);
        Mat4 q0 = sg.re.m;
        if (q0.norm() > 0) q0 *= q_norm / q0.norm();
        p.q = s * q0 * s.transpose();
        return p;
    }

    std::mt19937_64& engine() { return rng_; }

private:
    std::mt19937_64 rng_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

} // namespace bihermitian
