#pragma once

#include <vector>

#include "rjump/coefficients.hpp"
#include "rjump/mark_measure.hpp"

namespace bench {

inline rjump::Matrix m1(double v) { return rjump::Matrix::Constant(1, 1, v); }

// Scalar model with one Brownian and one jump channel on [0, 1].
inline rjump::CoefficientSet scalar_jump_model() {
    using rjump::Coefficient;
    rjump::CoefficientSet c;
    c.n = 1;
    c.m = 1;
    c.d = 1;
    c.A = Coefficient::constant(m1(0.1));
    c.B = Coefficient::constant(m1(1.0));
    c.Q = Coefficient::constant(m1(1.0));
    c.N = Coefficient::constant(m1(1.0));
    c.C.push_back(Coefficient::constant(m1(0.3)));
    c.D.push_back(Coefficient::constant(m1(0.1)));
    c.E.push_back(Coefficient::constant(m1(0.5)));
    c.F.push_back(Coefficient::constant(m1(0.5)));
    c.marks = rjump::MarkMeasure({"e0"}, {1.0});
    c.M = m1(1.0);
    c.delta = 1e-3;
    c.horizon = 1.0;
    c.check_shape();
    return c;
}

// Dense n-state, 2-control model with two Brownian channels and one mark.
inline rjump::CoefficientSet dense_model(int n) {
    using rjump::Coefficient;
    using rjump::Matrix;
    rjump::CoefficientSet c;
    c.n = n;
    c.m = 2;
    c.d = 2;
    Matrix a = Matrix::Zero(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) a(i, j) = (i == j ? -0.5 : 0.1 / (1 + i + j));
    Matrix b = Matrix::Zero(n, 2);
    for (int i = 0; i < n; ++i) {
        b(i, 0) = 1.0 / (1 + i);
        b(i, 1) = (i % 2 == 0) ? 0.5 : -0.25;
    }
    c.A = Coefficient::constant(a);
    c.B = Coefficient::constant(b);
    c.Q = Coefficient::constant(Matrix::Identity(n, n));
    c.N = Coefficient::constant(Matrix::Identity(2, 2));
    for (int k = 0; k < 2; ++k) {
        c.C.push_back(Coefficient::constant(Matrix::Identity(n, n) * (0.2 + 0.1 * k)));
        c.D.push_back(Coefficient::constant(b * 0.1));
    }
    c.E.push_back(Coefficient::constant(Matrix::Identity(n, n) * 0.3));
    c.F.push_back(Coefficient::constant(b * 0.05));
    c.marks = rjump::MarkMeasure({"e0"}, {0.8});
    c.M = Matrix::Identity(n, n);
    c.delta = 1e-3;
    c.horizon = 1.0;
    c.check_shape();
    return c;
}

}  // namespace bench
