#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "structsum/diffcore/tape.hpp"

// Differentiable operations over Var. Every op computes its value eagerly and
// records a backward rule that accumulates into its parents' gradients.
namespace structsum::diffcore {

namespace detail {

inline void same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeMismatch(std::string(op) + ": " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
}

inline void require_rank(const Var& a, std::size_t rank, const char* op) {
  if (a.value().rank() != rank) {
    throw ShapeMismatch(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                        shape_string(a.shape()));
  }
}

template <typename F, typename D>
Var unary(const Var& a, F&& f, D&& dfdx_from_xy) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  add_flops(x.size());
  const auto ia = a.id();
  return a.tape().record(std::move(y), {a}, [ia, dfdx_from_xy](Tape& t, std::uint32_t self, const Tensor& g) {
    if (!t.requires_grad(ia)) return;
    const Tensor& x = t.value(ia);
    const Tensor& y = t.value(self);
    Tensor& ga = t.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * dfdx_from_xy(x[i], y[i]);
  });
}

}  // namespace detail

// ---------------------------------------------------------------- elementwise

inline Var add(const Var& a, const Var& b) {
  detail::same_shape(a, b, "add");
  Tensor y = a.value();
  y += b.value();
  add_flops(y.size());
  const auto ia = a.id(), ib = b.id();
  return a.tape().record(std::move(y), {a, b}, [ia, ib](Tape& t, std::uint32_t, const Tensor& g) {
    if (t.requires_grad(ia)) t.grad(ia) += g;
    if (t.requires_grad(ib)) t.grad(ib) += g;
  });
}

inline Var sub(const Var& a, const Var& b) {
  detail::same_shape(a, b, "sub");
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= bv[i];
  add_flops(y.size());
  const auto ia = a.id(), ib = b.id();
  return a.tape().record(std::move(y), {a, b}, [ia, ib](Tape& t, std::uint32_t, const Tensor& g) {
    if (t.requires_grad(ia)) t.grad(ia) += g;
    if (t.requires_grad(ib)) {
      Tensor& gb = t.grad(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

// Hadamard product.
inline Var mul(const Var& a, const Var& b) {
  detail::same_shape(a, b, "mul");
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= bv[i];
  add_flops(y.size());
  const auto ia = a.id(), ib = b.id();
  return a.tape().record(std::move(y), {a, b}, [ia, ib](Tape& t, std::uint32_t, const Tensor& g) {
    const Tensor& av = t.value(ia);
    const Tensor& bv = t.value(ib);
    if (t.requires_grad(ia)) {
      Tensor& ga = t.grad(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.requires_grad(ib)) {
      Tensor& gb = t.grad(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

inline Var scale(const Var& a, double c) {
  Tensor y = a.value();
  for (double& v : y.values()) v *= c;
  add_flops(y.size());
  const auto ia = a.id();
  return a.tape().record(std::move(y), {a}, [ia, c](Tape& t, std::uint32_t, const Tensor& g) {
    Tensor& ga = t.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
  });
}

inline Var add_scalar(const Var& a, double c) {
  Tensor y = a.value();
  for (double& v : y.values()) v += c;
  add_flops(y.size());
  const auto ia = a.id();
  return a.tape().record(std::move(y), {a}, [ia](Tape& t, std::uint32_t, const Tensor& g) { t.grad(ia) += g; });
}

// 1 - a
inline Var one_minus(const Var& a) { return add_scalar(scale(a, -1.0), 1.0); }

inline Var tanh(const Var& a) {
  return detail::unary(
      a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

inline Var sigmoid(const Var& a) {
  return detail::unary(
      a,
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

inline Var exp(const Var& a) {
  return detail::unary(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

inline Var log(const Var& a) {
  return detail::unary(
      a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

// Values outside [lo, hi] are pinned; the gradient there is zero.
inline Var clamp(const Var& a, double lo, double hi) {
  return detail::unary(
      a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

inline Var relu(const Var& a) {
  return detail::unary(
      a, [](double x) { return x > 0 ? x : 0.0; }, [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

// Elementwise minimum. Ties send the gradient to `a`.
inline Var minimum(const Var& a, const Var& b) {
  detail::same_shape(a, b, "minimum");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor y(av.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::min(av[i], bv[i]);
  add_flops(y.size());
  const auto ia = a.id(), ib = b.id();
  return a.tape().record(std::move(y), {a, b}, [ia, ib](Tape& t, std::uint32_t, const Tensor& g) {
    const Tensor& av = t.value(ia);
    const Tensor& bv = t.value(ib);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const bool pick_a = av[i] <= bv[i];
      if (pick_a && t.requires_grad(ia)) t.grad(ia)[i] += g[i];
      if (!pick_a && t.requires_grad(ib)) t.grad(ib)[i] += g[i];
    }
  });
}

// ---------------------------------------------------------------- reductions

inline Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  add_flops(a.size());
  const auto ia = a.id();
  return a.tape().record(Tensor::scalar(s), {a}, [ia](Tape& t, std::uint32_t, const Tensor& g) {
    Tensor& ga = t.grad(ia);
    for (double& v : ga.values()) v += g[0];
  });
}

// Matrix reduction. axis 0 sums over rows (one value per column),
// axis 1 sums over columns (one value per row).
inline Var sum_axis(const Var& a, int axis) {
  detail::require_rank(a, 2, "sum_axis");
  const Tensor& x = a.value();
  const std::size_t m = x.rows(), n = x.cols();
  Tensor y(Shape{axis == 0 ? n : m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y[axis == 0 ? j : i] += x.at(i, j);
  add_flops(x.size());
  const auto ia = a.id();
  return a.tape().record(std::move(y), {a}, [ia, axis, m, n](Tape& t, std::uint32_t, const Tensor& g) {
    Tensor& ga = t.grad(ia);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga.at(i, j) += g[axis == 0 ? j : i];
  });
}

inline Var dot(const Var& a, const Var& b) { return sum(mul(a, b)); }

// Max over rows of a matrix, one value per column. Ties go to the first row.
inline Var max_rows(const Var& a) {
  detail::require_rank(a, 2, "max_rows");
  const Tensor& x = a.value();
  const std::size_t m = x.rows(), n = x.cols();
  if (m == 0) throw ShapeMismatch("max_rows of empty matrix");
  Tensor y(Shape{n});
  std::vector<std::size_t> arg(n, 0);
  for (std::size_t j = 0; j < n; ++j) {
    y[j] = x.at(0, j);
    for (std::size_t i = 1; i < m; ++i) {
      if (x.at(i, j) > y[j]) {
        y[j] = x.at(i, j);
        arg[j] = i;
      }
    }
  }
  add_flops(x.size());
  const auto ia = a.id();
  return a.tape().record(std::move(y), {a}, [ia, arg](Tape& t, std::uint32_t, const Tensor& g) {
    Tensor& ga = t.grad(ia);
    for (std::size_t j = 0; j < arg.size(); ++j) ga.at(arg[j], j) += g[j];
  });
}

// ------------------------------------------------------------ linear algebra

inline Var matmul(const Var& a, const Var& b) {
  detail::require_rank(a, 2, "matmul");
  detail::require_rank(b, 2, "matmul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  if (bv.rows() != k) {
    throw ShapeMismatch("matmul: " + shape_string(av.shape()) + " x " + shape_string(bv.shape()));
  }
  Tensor y(Shape{m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av.at(i, p);
      if (aip == 0.0) continue;
      const double* brow = &bv.storage()[p * n];
      double* yrow = &y.storage()[i * n];
      for (std::size_t j = 0; j < n; ++j) yrow[j] += aip * brow[j];
    }
  add_flops(2 * m * n * k);
  const auto ia = a.id(), ib = b.id();
  return a.tape().record(std::move(y), {a, b}, [ia, ib, m, k, n](Tape& t, std::uint32_t, const Tensor& g) {
    const Tensor& av = t.value(ia);
    const Tensor& bv = t.value(ib);
    if (t.requires_grad(ia)) {
      Tensor& ga = t.grad(ia);  // g * b^T
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          const double* grow = &g.storage()[i * n];
          const double* brow = &bv.storage()[p * n];
          for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
          ga.at(i, p) += s;
        }
    }
    if (t.requires_grad(ib)) {
      Tensor& gb = t.grad(ib);  // a^T * g
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = av.at(i, p);
          if (aip == 0.0) continue;
          const double* grow = &g.storage()[i * n];
          double* gbrow = &gb.storage()[p * n];
          for (std::size_t j = 0; j < n; ++j) gbrow[j] += aip * grow[j];
        }
    }
  });
}

// Matrix [m x k] times vector [k] -> vector [m].
inline Var matvec(const Var& a, const Var& x) {
  detail::require_rank(a, 2, "matvec");
  detail::require_rank(x, 1, "matvec");
  const Tensor& av = a.value();
  const Tensor& xv = x.value();
  const std::size_t m = av.rows(), k = av.cols();
  if (xv.size() != k) {
    throw ShapeMismatch("matvec: " + shape_string(av.shape()) + " x " + shape_string(xv.shape()));
  }
  Tensor y(Shape{m});
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = &av.storage()[i * k];
    double s = 0.0;
    for (std::size_t p = 0; p < k; ++p) s += arow[p] * xv[p];
    y[i] = s;
  }
  add_flops(2 * m * k);
  const auto ia = a.id(), ix = x.id();
  return a.tape().record(std::move(y), {a, x}, [ia, ix, m, k](Tape& t, std::uint32_t, const Tensor& g) {
    const Tensor& av = t.value(ia);
    const Tensor& xv = t.value(ix);
    if (t.requires_grad(ia)) {
      Tensor& ga = t.grad(ia);
      for (std::size_t i = 0; i < m; ++i) {
        if (g[i] == 0.0) continue;
        double* garow = &ga.storage()[i * k];
        for (std::size_t p = 0; p < k; ++p) garow[p] += g[i] * xv[p];
      }
    }
    if (t.requires_grad(ix)) {
      Tensor& gx = t.grad(ix);
      for (std::size_t i = 0; i < m; ++i) {
        if (g[i] == 0.0) continue;
        const double* arow = &av.storage()[i * k];
        for (std::size_t p = 0; p < k; ++p) gx[p] += g[i] * arow[p];
      }
    }
  });
}

inline Var transpose(const Var& a) {
  detail::require_rank(a, 2, "transpose");
  const Tensor& x = a.value();
  const std::size_t m = x.rows(), n = x.cols();
  Tensor y(Shape{n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y.at(j, i) = x.at(i, j);
  const auto ia = a.id();
  return a.tape().record(std::move(y), {a}, [ia, m, n](Tape& t, std::uint32_t, const Tensor& g) {
    Tensor& ga = t.grad(ia);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga.at(i, j) += g.at(j, i);
  });
}

inline Var outer(const Var& a, const Var& b) {
  detail::require_rank(a, 1, "outer");
  detail::require_rank(b, 1, "outer");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const std::size_t m = av.size(), n = bv.size();
  Tensor y(Shape{m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y.at(i, j) = av[i] * bv[j];
  add_flops(m * n);
  const auto ia = a.id(), ib = b.id();
  return a.tape().record(std::move(y), {a, b}, [ia, ib, m, n](Tape& t, std::uint32_t, const Tensor& g) {
    const Tensor& av = t.value(ia);
    const Tensor& bv = t.value(ib);
    if (t.requires_grad(ia)) {
      Tensor& ga = t.grad(ia);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ga[i] += g.at(i, j) * bv[j];
    }
    if (t.requires_grad(ib)) {
      Tensor& gb = t.grad(ib);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gb[j] += g.at(i, j) * av[i];
    }
  });
}

// Diagonal of a square matrix.
inline Var diag(const Var& a) {
  detail::require_rank(a, 2, "diag");
  const Tensor& x = a.value();
  const std::size_t n = x.rows();
  if (x.cols() != n) throw ShapeMismatch("diag of non-square " + shape_string(x.shape()));
  Tensor y(Shape{n});
  for (std::size_t i = 0; i < n; ++i) y[i] = x.at(i, i);
  const auto ia = a.id();
  return a.tape().record(std::move(y), {a}, [ia, n](Tape& t, std::uint32_t, const Tensor& g) {
    Tensor& ga = t.grad(ia);
    for (std::size_t i = 0; i < n; ++i) ga.at(i, i) += g[i];
  });
}

// Square matrix with `v` on the diagonal.
inline Var diag_embed(const Var& v) {
  detail::require_rank(v, 1, "diag_embed");
  const std::size_t n = v.size();
  Tensor y(Shape{n, n});
  for (std::size_t i = 0; i < n; ++i) y.at(i, i) = v.value()[i];
  const auto iv = v.id();
  return v.tape().record(std::move(y), {v}, [iv, n](Tape& t, std::uint32_t, const Tensor& g) {
    Tensor& gv = t.grad(iv);
    for (std::size_t i = 0; i < n; ++i) gv[i] += g.at(i, i);
  });
}

// Inverse of a square matrix by LU decomposition with partial pivoting.
inline Tensor invert(const Tensor& m, double pivot_floor = 1e-12) {
  if (m.rank() != 2 || m.rows() != m.cols()) throw ShapeMismatch("matinv of " + shape_string(m.shape()));
  const std::size_t n = m.rows();
  Tensor lu = m;
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    double best = std::abs(lu.at(col, col));
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::abs(lu.at(r, col)) > best) {
        best = std::abs(lu.at(r, col));
        pivot = r;
      }
    }
    if (!(best >= pivot_floor)) {
      throw SingularMatrix("matrix is singular: pivot " + std::to_string(best) + " at column " +
                           std::to_string(col));
    }
    if (pivot != col) {
      for (std::size_t j = 0; j < n; ++j) std::swap(lu.at(col, j), lu.at(pivot, j));
      std::swap(perm[col], perm[pivot]);
    }
    const double d = lu.at(col, col);
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = lu.at(r, col) / d;
      lu.at(r, col) = f;
      if (f == 0.0) continue;
      for (std::size_t j = col + 1; j < n; ++j) lu.at(r, j) -= f * lu.at(col, j);
    }
  }
  // Solve LU x = P e_j for every column j.
  Tensor inv(Shape{n, n});
  std::vector<double> x(n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < n; ++i) x[i] = (perm[i] == j) ? 1.0 : 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t p = 0; p < i; ++p) x[i] -= lu.at(i, p) * x[p];
    for (std::size_t ii = n; ii-- > 0;) {
      for (std::size_t p = ii + 1; p < n; ++p) x[ii] -= lu.at(ii, p) * x[p];
      x[ii] /= lu.at(ii, ii);
    }
    for (std::size_t i = 0; i < n; ++i) inv.at(i, j) = x[i];
  }
  add_flops(2 * n * n * n);
  return inv;
}

// d(inv) = -inv * dm * inv, so dL/dm = -inv^T * G * inv^T.
inline Var matinv(const Var& a) {
  Tensor y = invert(a.value());
  const auto ia = a.id();
  return a.tape().record(std::move(y), {a}, [ia](Tape& t, std::uint32_t self, const Tensor& g) {
    const Tensor& inv = t.value(self);
    const std::size_t n = inv.rows();
    Tensor tmp(Shape{n, n});  // inv^T * G
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t i = 0; i < n; ++i) {
        const double v = inv.at(p, i);
        if (v == 0.0) continue;
        for (std::size_t j = 0; j < n; ++j) tmp.at(i, j) += v * g.at(p, j);
      }
    Tensor& ga = t.grad(ia);  // -= tmp * inv^T
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t p = 0; p < n; ++p) s += tmp.at(i, p) * inv.at(j, p);
        ga.at(i, j) -= s;
      }
  });
}

// ------------------------------------------------------------- broadcasting

// Adds vector v [n] to every row of matrix a [m x n].
inline Var add_rowvec(const Var& a, const Var& v) {
  detail::require_rank(a, 2, "add_rowvec");
  const Tensor& x = a.value();
  const std::size_t m = x.rows(), n = x.cols();
  if (v.size() != n) throw ShapeMismatch("add_rowvec: " + shape_string(x.shape()) + " + " + shape_string(v.shape()));
  Tensor y = x;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y.at(i, j) += v.value()[j];
  add_flops(m * n);
  const auto ia = a.id(), iv = v.id();
  return a.tape().record(std::move(y), {a, v}, [ia, iv, m, n](Tape& t, std::uint32_t, const Tensor& g) {
    if (t.requires_grad(ia)) t.grad(ia) += g;
    if (t.requires_grad(iv)) {
      Tensor& gv = t.grad(iv);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gv[j] += g.at(i, j);
    }
  });
}

// Scales column j of a [m x n] by v[j] (axis 1) or row i by v[i] (axis 0).
inline Var scale_by(const Var& a, const Var& v, int axis) {
  detail::require_rank(a, 2, "scale_by");
  const Tensor& x = a.value();
  const std::size_t m = x.rows(), n = x.cols();
  if (v.size() != (axis == 1 ? n : m)) {
    throw ShapeMismatch("scale_by: " + shape_string(x.shape()) + " by " + shape_string(v.shape()));
  }
  Tensor y = x;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y.at(i, j) *= v.value()[axis == 1 ? j : i];
  add_flops(m * n);
  const auto ia = a.id(), iv = v.id();
  return a.tape().record(std::move(y), {a, v}, [ia, iv, m, n, axis](Tape& t, std::uint32_t, const Tensor& g) {
    const Tensor& x = t.value(ia);
    const Tensor& vv = t.value(iv);
    if (t.requires_grad(ia)) {
      Tensor& ga = t.grad(ia);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ga.at(i, j) += g.at(i, j) * vv[axis == 1 ? j : i];
    }
    if (t.requires_grad(iv)) {
      Tensor& gv = t.grad(iv);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gv[axis == 1 ? j : i] += g.at(i, j) * x.at(i, j);
    }
  });
}

// Multiplies a tensor by a scalar-valued Var.
inline Var mul_scalar(const Var& a, const Var& s) {
  if (s.size() != 1) throw ShapeMismatch("mul_scalar: factor shape " + shape_string(s.shape()));
  const double c = s.value()[0];
  Tensor y = a.value();
  for (double& v : y.values()) v *= c;
  add_flops(y.size());
  const auto ia = a.id(), is = s.id();
  return a.tape().record(std::move(y), {a, s}, [ia, is](Tape& t, std::uint32_t, const Tensor& g) {
    const double c = t.value(is)[0];
    if (t.requires_grad(ia)) {
      Tensor& ga = t.grad(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
    }
    if (t.requires_grad(is)) {
      const Tensor& av = t.value(ia);
      double s = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) s += g[i] * av[i];
      t.grad(is)[0] += s;
    }
  });
}

// --------------------------------------------------------- shape / indexing

inline Var reshape(const Var& a, Shape shape) {
  if (shape_size(shape) != a.size()) {
    throw ShapeMismatch("reshape " + shape_string(a.shape()) + " to " + shape_string(shape));
  }
  Tensor y(std::move(shape), a.value().storage());
  const auto ia = a.id();
  return a.tape().record(std::move(y), {a}, [ia](Tape& t, std::uint32_t, const Tensor& g) {
    Tensor& ga = t.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

// Concatenation of rank-1 vectors.
inline Var concat(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeMismatch("concat of nothing");
  std::vector<double> data;
  std::vector<std::size_t> offsets;
  for (const Var& p : parts) {
    detail::require_rank(p, 1, "concat");
    offsets.push_back(data.size());
    const auto& s = p.value().storage();
    data.insert(data.end(), s.begin(), s.end());
  }
  std::vector<std::uint32_t> ids;
  for (const Var& p : parts) ids.push_back(p.id());
  return parts.front().tape().record(Tensor::vector(std::move(data)), parts,
                                     [ids, offsets](Tape& t, std::uint32_t, const Tensor& g) {
                                       for (std::size_t k = 0; k < ids.size(); ++k) {
                                         if (!t.requires_grad(ids[k])) continue;
                                         Tensor& gp = t.grad(ids[k]);
                                         for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[offsets[k] + i];
                                       }
                                     });
}

// Side-by-side concatenation of matrices with equal row counts.
inline Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeMismatch("concat_cols of nothing");
  const std::size_t m = parts.front().value().rows();
  std::vector<std::size_t> widths, offsets;
  std::size_t total = 0;
  for (const Var& p : parts) {
    detail::require_rank(p, 2, "concat_cols");
    if (p.value().rows() != m) throw ShapeMismatch("concat_cols: row count mismatch");
    offsets.push_back(total);
    widths.push_back(p.value().cols());
    total += p.value().cols();
  }
  Tensor y(Shape{m, total});
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& x = parts[k].value();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < widths[k]; ++j) y.at(i, offsets[k] + j) = x.at(i, j);
  }
  std::vector<std::uint32_t> ids;
  for (const Var& p : parts) ids.push_back(p.id());
  return parts.front().tape().record(std::move(y), parts,
                                     [ids, offsets, widths, m](Tape& t, std::uint32_t, const Tensor& g) {
                                       for (std::size_t k = 0; k < ids.size(); ++k) {
                                         if (!t.requires_grad(ids[k])) continue;
                                         Tensor& gp = t.grad(ids[k]);
                                         for (std::size_t i = 0; i < m; ++i)
                                           for (std::size_t j = 0; j < widths[k]; ++j)
                                             gp.at(i, j) += g.at(i, offsets[k] + j);
                                       }
                                     });
}

// Stacks equal-length vectors as the rows of a matrix.
inline Var stack_rows(const std::vector<Var>& rows) {
  if (rows.empty()) throw ShapeMismatch("stack_rows of nothing");
  const std::size_t n = rows.front().size();
  for (const Var& r : rows) {
    detail::require_rank(r, 1, "stack_rows");
    if (r.size() != n) throw ShapeMismatch("stack_rows: ragged rows");
  }
  Var flat = concat(rows);
  return reshape(flat, Shape{rows.size(), n});
}

// Stacks matrices with equal column counts on top of each other.
inline Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeMismatch("concat_rows of nothing");
  const std::size_t n = parts.front().value().cols();
  std::vector<Var> flat;
  std::size_t rows = 0;
  for (const Var& p : parts) {
    detail::require_rank(p, 2, "concat_rows");
    if (p.value().cols() != n) throw ShapeMismatch("concat_rows: column count mismatch");
    rows += p.value().rows();
    flat.push_back(reshape(p, Shape{p.size()}));
  }
  return reshape(concat(flat), Shape{rows, n});
}

// Contiguous slice [begin, begin + len) of a vector.
inline Var slice(const Var& a, std::size_t begin, std::size_t len) {
  detail::require_rank(a, 1, "slice");
  if (begin + len > a.size()) throw ShapeMismatch("slice out of range");
  const auto& s = a.value().storage();
  Tensor y = Tensor::vector(std::vector<double>(s.begin() + begin, s.begin() + begin + len));
  const auto ia = a.id();
  return a.tape().record(std::move(y), {a}, [ia, begin](Tape& t, std::uint32_t, const Tensor& g) {
    Tensor& ga = t.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[begin + i] += g[i];
  });
}

// Columns [begin, begin + len) of a matrix.
inline Var slice_cols(const Var& a, std::size_t begin, std::size_t len) {
  detail::require_rank(a, 2, "slice_cols");
  const Tensor& x = a.value();
  const std::size_t m = x.rows();
  if (begin + len > x.cols()) throw ShapeMismatch("slice_cols out of range");
  Tensor y(Shape{m, len});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < len; ++j) y.at(i, j) = x.at(i, begin + j);
  const auto ia = a.id();
  return a.tape().record(std::move(y), {a}, [ia, begin, len, m](Tape& t, std::uint32_t, const Tensor& g) {
    Tensor& ga = t.grad(ia);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < len; ++j) ga.at(i, begin + j) += g.at(i, j);
  });
}

// Rows [begin, begin + len) of a matrix.
inline Var slice_rows(const Var& a, std::size_t begin, std::size_t len) {
  detail::require_rank(a, 2, "slice_rows");
  const Tensor& x = a.value();
  const std::size_t n = x.cols();
  if (begin + len > x.rows()) throw ShapeMismatch("slice_rows out of range");
  const auto& s = x.storage();
  Tensor y(Shape{len, n}, std::vector<double>(s.begin() + begin * n, s.begin() + (begin + len) * n));
  const auto ia = a.id();
  return a.tape().record(std::move(y), {a}, [ia, begin, n](Tape& t, std::uint32_t, const Tensor& g) {
    Tensor& ga = t.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[begin * n + i] += g[i];
  });
}

inline Var row(const Var& a, std::size_t i) {
  detail::require_rank(a, 2, "row");
  return reshape(slice_rows(a, i, 1), Shape{a.value().cols()});
}

inline Var col(const Var& a, std::size_t j) {
  detail::require_rank(a, 2, "col");
  return reshape(slice_cols(a, j, 1), Shape{a.value().rows()});
}

// Single element of a vector as a scalar.
inline Var pick(const Var& a, std::size_t i) {
  if (i >= a.size()) throw ShapeMismatch("pick index out of range");
  const auto ia = a.id();
  return a.tape().record(Tensor::scalar(a.value()[i]), {a},
                         [ia, i](Tape& t, std::uint32_t, const Tensor& g) { t.grad(ia)[i] += g[0]; });
}

// Rows of `table` selected by `ids`, as an [ids.size() x cols] matrix.
inline Var gather_rows(const Var& table, const std::vector<std::size_t>& ids) {
  detail::require_rank(table, 2, "gather_rows");
  const Tensor& x = table.value();
  const std::size_t n = x.cols();
  Tensor y(Shape{ids.size(), n});
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] >= x.rows()) throw IdOutOfRange("row id " + std::to_string(ids[r]) + " >= " + std::to_string(x.rows()));
    for (std::size_t j = 0; j < n; ++j) y.at(r, j) = x.at(ids[r], j);
  }
  const auto it = table.id();
  return table.tape().record(std::move(y), {table}, [it, ids, n](Tape& t, std::uint32_t, const Tensor& g) {
    Tensor& gt = t.grad(it);
    for (std::size_t r = 0; r < ids.size(); ++r)
      for (std::size_t j = 0; j < n; ++j) gt.at(ids[r], j) += g.at(r, j);
  });
}

// out[index[i]] += x[i], out has `size` entries.
inline Var scatter_add(const Var& x, const std::vector<std::size_t>& index, std::size_t size) {
  detail::require_rank(x, 1, "scatter_add");
  if (index.size() != x.size()) throw ShapeMismatch("scatter_add: index length mismatch");
  Tensor y(Shape{size});
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= size) throw IdOutOfRange("scatter index " + std::to_string(index[i]) + " >= " + std::to_string(size));
    y[index[i]] += x.value()[i];
  }
  add_flops(index.size());
  const auto ix = x.id();
  return x.tape().record(std::move(y), {x}, [ix, index](Tape& t, std::uint32_t, const Tensor& g) {
    Tensor& gx = t.grad(ix);
    for (std::size_t i = 0; i < index.size(); ++i) gx[i] += g[index[i]];
  });
}

// Extends a vector with trailing zeros to `size` entries.
inline Var pad_to(const Var& x, std::size_t size) {
  detail::require_rank(x, 1, "pad_to");
  if (size < x.size()) throw ShapeMismatch("pad_to smaller than input");
  if (size == x.size()) return x;
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return scatter_add(x, idx, size);
}

// ------------------------------------------------------------------ softmax

namespace detail {

inline void softmax_inplace(double* v, std::size_t n, std::size_t stride, const std::vector<bool>* mask) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i)
    if (!mask || (*mask)[i]) mx = std::max(mx, v[i * stride]);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double& e = v[i * stride];
    e = (!mask || (*mask)[i]) ? std::exp(e - mx) : 0.0;
    z += e;
  }
  for (std::size_t i = 0; i < n; ++i) v[i * stride] /= z;
}

}  // namespace detail

// Softmax of a vector, or of a matrix along `axis` (1: within each row,
// 0: within each column). Uses max subtraction.
inline Var softmax(const Var& a, int axis = -1) {
  const Tensor& x = a.value();
  Tensor y = x;
  std::size_t groups = 1, n = x.size(), stride = 1, gstride = 0;
  if (x.rank() == 2) {
    if (axis == 0) {
      groups = x.cols(), n = x.rows(), stride = x.cols(), gstride = 1;
    } else {
      groups = x.rows(), n = x.cols(), stride = 1, gstride = x.cols();
    }
  } else if (x.rank() != 1) {
    throw ShapeMismatch("softmax of " + shape_string(x.shape()));
  }
  for (std::size_t gi = 0; gi < groups; ++gi) detail::softmax_inplace(&y.storage()[gi * gstride], n, stride, nullptr);
  add_flops(3 * x.size());
  const auto ia = a.id();
  return a.tape().record(std::move(y), {a},
                         [ia, groups, n, stride, gstride](Tape& t, std::uint32_t self, const Tensor& g) {
                           const Tensor& y = t.value(self);
                           Tensor& ga = t.grad(ia);
                           for (std::size_t gi = 0; gi < groups; ++gi) {
                             const std::size_t base = gi * gstride;
                             double s = 0.0;
                             for (std::size_t i = 0; i < n; ++i) s += g[base + i * stride] * y[base + i * stride];
                             for (std::size_t i = 0; i < n; ++i) {
                               const std::size_t k = base + i * stride;
                               ga[k] += y[k] * (g[k] - s);
                             }
                           }
                         });
}

// Softmax over the entries of a vector where mask is true; the rest get 0.
inline Var masked_softmax(const Var& a, const std::vector<bool>& mask) {
  detail::require_rank(a, 1, "masked_softmax");
  if (mask.size() != a.size()) throw ShapeMismatch("masked_softmax: mask length mismatch");
  if (std::none_of(mask.begin(), mask.end(), [](bool b) { return b; })) {
    throw AllMasked("softmax with every position masked");
  }
  Tensor y = a.value();
  detail::softmax_inplace(y.storage().data(), y.size(), 1, &mask);
  add_flops(3 * y.size());
  const auto ia = a.id();
  return a.tape().record(std::move(y), {a}, [ia](Tape& t, std::uint32_t self, const Tensor& g) {
    const Tensor& y = t.value(self);
    Tensor& ga = t.grad(ia);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += g[i] * y[i];
    for (std::size_t i = 0; i < y.size(); ++i) ga[i] += y[i] * (g[i] - s);
  });
}

}  // namespace structsum::diffcore
