#pragma once

#include <algorithm>
#include <array>
#include <cassert>
#include <cmath>
#include <cstdio>
#include <span>
#include <string>
#include <vector>

#ifndef M_PI
#define M_PI 3.14159265358979323846
#endif

namespace fbac {

/// Small vector with runtime dimension <= 3. Used for ambient points (d = 2, 3)
/// and base points (n = 1, 2).
struct Vec {
  int n = 0;
  std::array<double, 3> a{0.0, 0.0, 0.0};

  Vec() = default;
  explicit Vec(int dim) : n(dim) {}
  Vec(double x, double y) : n(2), a{x, y, 0.0} {}
  Vec(double x, double y, double z) : n(3), a{x, y, z} {}

  static Vec zero(int dim) { return Vec(dim); }

  double& operator[](int i) { return a[static_cast<size_t>(i)]; }
  double operator[](int i) const { return a[static_cast<size_t>(i)]; }

  Vec operator+(const Vec& o) const {
    Vec r(n);
    for (int i = 0; i < n; ++i) r[i] = a[size_t(i)] + o[i];
    return r;
  }
  Vec operator-(const Vec& o) const {
    Vec r(n);
    for (int i = 0; i < n; ++i) r[i] = a[size_t(i)] - o[i];
    return r;
  }
  Vec operator*(double s) const {
    Vec r(n);
    for (int i = 0; i < n; ++i) r[i] = a[size_t(i)] * s;
    return r;
  }
  Vec& operator+=(const Vec& o) {
    for (int i = 0; i < n; ++i) a[size_t(i)] += o[i];
    return *this;
  }
};

inline Vec operator*(double s, const Vec& v) { return v * s; }

inline double dot(const Vec& x, const Vec& y) {
  double s = 0;
  for (int i = 0; i < x.n; ++i) s += x[i] * y[i];
  return s;
}

inline double norm(const Vec& v) { return std::sqrt(dot(v, v)); }

/// Small square matrix with runtime dimension <= 3, row-major.
struct Mat {
  int n = 0;
  std::array<double, 9> a{};

  Mat() = default;
  explicit Mat(int dim) : n(dim) { a.fill(0.0); }

  static Mat identity(int dim) {
    Mat m(dim);
    for (int i = 0; i < dim; ++i) m(i, i) = 1.0;
    return m;
  }

  double& operator()(int i, int j) { return a[static_cast<size_t>(i * n + j)]; }
  double operator()(int i, int j) const { return a[static_cast<size_t>(i * n + j)]; }

  Mat operator+(const Mat& o) const {
    Mat r(n);
    for (int i = 0; i < n * n; ++i) r.a[size_t(i)] = a[size_t(i)] + o.a[size_t(i)];
    return r;
  }
  Mat operator-(const Mat& o) const {
    Mat r(n);
    for (int i = 0; i < n * n; ++i) r.a[size_t(i)] = a[size_t(i)] - o.a[size_t(i)];
    return r;
  }
  Mat operator*(double s) const {
    Mat r(n);
    for (int i = 0; i < n * n; ++i) r.a[size_t(i)] = a[size_t(i)] * s;
    return r;
  }

  double trace() const {
    double t = 0;
    for (int i = 0; i < n; ++i) t += (*this)(i, i);
    return t;
  }
};

inline Vec matvec(const Mat& m, const Vec& v) {
  Vec r(m.n);
  for (int i = 0; i < m.n; ++i) {
    double s = 0;
    for (int j = 0; j < m.n; ++j) s += m(i, j) * v[j];
    r[i] = s;
  }
  return r;
}

inline Mat matmul(const Mat& x, const Mat& y) {
  Mat r(x.n);
  for (int i = 0; i < x.n; ++i)
    for (int j = 0; j < x.n; ++j) {
      double s = 0;
      for (int k = 0; k < x.n; ++k) s += x(i, k) * y(k, j);
      r(i, j) = s;
    }
  return r;
}

inline Mat outer(const Vec& x, const Vec& y) {
  Mat r(x.n);
  for (int i = 0; i < x.n; ++i)
    for (int j = 0; j < x.n; ++j) r(i, j) = x[i] * y[j];
  return r;
}

/// Eigenvalues of a symmetric matrix (ascending). Closed forms for n = 1, 2;
/// the trigonometric (Cardano) method for n = 3.
inline std::array<double, 3> sym_eigenvalues(const Mat& m) {
  std::array<double, 3> ev{0.0, 0.0, 0.0};
  if (m.n == 1) {
    ev[0] = m(0, 0);
  } else if (m.n == 2) {
    double tr = m(0, 0) + m(1, 1);
    double det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
    double disc = std::sqrt(std::max(0.0, tr * tr / 4.0 - det));
    ev[0] = tr / 2.0 - disc;
    ev[1] = tr / 2.0 + disc;
  } else {
    double p1 = m(0, 1) * m(0, 1) + m(0, 2) * m(0, 2) + m(1, 2) * m(1, 2);
    if (p1 == 0.0) {
      ev = {m(0, 0), m(1, 1), m(2, 2)};
      std::sort(ev.begin(), ev.end());
      return ev;
    }
    double q = m.trace() / 3.0;
    double p2 = 0;
    for (int i = 0; i < 3; ++i) p2 += (m(i, i) - q) * (m(i, i) - q);
    p2 += 2.0 * p1;
    double p = std::sqrt(p2 / 6.0);
    Mat b(3);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) b(i, j) = (m(i, j) - (i == j ? q : 0.0)) / p;
    double detb = b(0, 0) * (b(1, 1) * b(2, 2) - b(1, 2) * b(2, 1)) -
                  b(0, 1) * (b(1, 0) * b(2, 2) - b(1, 2) * b(2, 0)) +
                  b(0, 2) * (b(1, 0) * b(2, 1) - b(1, 1) * b(2, 0));
    double r = std::clamp(detb / 2.0, -1.0, 1.0);
    double phi = std::acos(r) / 3.0;
    double e1 = q + 2.0 * p * std::cos(phi);
    double e3 = q + 2.0 * p * std::cos(phi + 2.0 * M_PI / 3.0);
    double e2 = 3.0 * q - e1 - e3;
    ev = {e3, e2, e1};
  }
  return ev;
}

/// Spectral norm (largest |eigenvalue|) of a symmetric matrix.
inline double spectral_norm_sym(const Mat& m) {
  auto ev = sym_eigenvalues(m);
  double r = 0;
  for (int i = 0; i < m.n; ++i) r = std::max(r, std::abs(ev[size_t(i)]));
  return r;
}

/// Eigenvalues of a (possibly nonsymmetric) matrix known to have real spectrum,
/// n <= 2. Used for the shape operator g^{-1} h.
inline std::array<double, 2> real_eigenvalues_2(const Mat& m) {
  if (m.n == 1) return {m(0, 0), 0.0};
  double tr = m(0, 0) + m(1, 1);
  double det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
  double disc = std::sqrt(std::max(0.0, tr * tr / 4.0 - det));
  return {tr / 2.0 - disc, tr / 2.0 + disc};
}

inline Mat inverse(const Mat& m) {
  Mat r(m.n);
  if (m.n == 1) {
    r(0, 0) = 1.0 / m(0, 0);
  } else if (m.n == 2) {
    double det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
    r(0, 0) = m(1, 1) / det;
    r(1, 1) = m(0, 0) / det;
    r(0, 1) = -m(0, 1) / det;
    r(1, 0) = -m(1, 0) / det;
  } else {
    double det = m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1)) -
                 m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0)) +
                 m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0));
    r(0, 0) = (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1)) / det;
    r(0, 1) = (m(0, 2) * m(2, 1) - m(0, 1) * m(2, 2)) / det;
    r(0, 2) = (m(0, 1) * m(1, 2) - m(0, 2) * m(1, 1)) / det;
    r(1, 0) = (m(1, 2) * m(2, 0) - m(1, 0) * m(2, 2)) / det;
    r(1, 1) = (m(0, 0) * m(2, 2) - m(0, 2) * m(2, 0)) / det;
    r(1, 2) = (m(0, 2) * m(1, 0) - m(0, 0) * m(1, 2)) / det;
    r(2, 0) = (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0)) / det;
    r(2, 1) = (m(0, 1) * m(2, 0) - m(0, 0) * m(2, 1)) / det;
    r(2, 2) = (m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0)) / det;
  }
  return r;
}

/// Pairwise (fixed-tree) summation: deterministic and more accurate than a
/// running sum for long vectors.
inline double pairwise_sum(std::span<const double> v) {
  size_t n = v.size();
  if (n == 0) return 0.0;
  if (n <= 8) {
    double s = 0;
    for (double x : v) s += x;
    return s;
  }
  size_t half = n / 2;
  return pairwise_sum(v.subspan(0, half)) + pairwise_sum(v.subspan(half));
}

/// Format with 17 significant digits: round-trips double exactly in text form.
inline std::string fmt17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return std::string(buf);
}

} // namespace fbac
