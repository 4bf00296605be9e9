#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "gridscreen/common.hpp"

namespace gridscreen {

// Dense channels-first tensor (C x H x W) of doubles.
struct Tensor {
    int c = 0, h = 0, w = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(int c_, int h_, int w_) : c(c_), h(h_), w(w_), v(static_cast<std::size_t>(c_) * h_ * w_, 0.0) {}

    double& at(int ci, int y, int x) { return v[(static_cast<std::size_t>(ci) * h + y) * w + x]; }
    double at(int ci, int y, int x) const { return v[(static_cast<std::size_t>(ci) * h + y) * w + x]; }

    std::size_t size() const { return v.size(); }
    bool same_shape(const Tensor& o) const { return c == o.c && h == o.h && w == o.w; }

    bool all_finite() const {
        for (double x : v)
            if (!std::isfinite(x)) return false;
        return true;
    }

    double max_abs() const {
        double m = 0.0;
        for (double x : v) m = std::max(m, std::abs(x));
        return m;
    }
};

struct ShapeMismatch : GridscreenError {
    using GridscreenError::GridscreenError;
};

inline Tensor operator-(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw ShapeMismatch("tensor shapes differ");
    Tensor out = a;
    for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] -= b.v[i];
    return out;
}

inline Tensor operator+(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw ShapeMismatch("tensor shapes differ");
    Tensor out = a;
    for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] += b.v[i];
    return out;
}

inline Tensor operator*(double s, const Tensor& a) {
    Tensor out = a;
    for (double& x : out.v) x *= s;
    return out;
}

// out = alpha * a + beta * b
inline Tensor lincomb(double alpha, const Tensor& a, double beta, const Tensor& b) {
    if (!a.same_shape(b)) throw ShapeMismatch("tensor shapes differ");
    Tensor out(a.c, a.h, a.w);
    for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] = alpha * a.v[i] + beta * b.v[i];
    return out;
}

}  // namespace gridscreen
