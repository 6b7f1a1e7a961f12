#include "probmed/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace probmed::diff {
namespace {

enum class Broadcast { Same, Row, Col, Scalar };

Broadcast classify(const char* op, const Tensor& a, const Tensor& b) {
  if (a.same_shape(b)) return Broadcast::Same;
  if (b.rows() == 1 && b.cols() == 1) return Broadcast::Scalar;
  if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::Row;
  if (b.cols() == 1 && b.rows() == a.rows()) return Broadcast::Col;
  throw_shape_error(op, a, b);
}

inline std::size_t rhs_index(Broadcast kind, std::size_t i, std::size_t j, std::size_t cols) {
  switch (kind) {
    case Broadcast::Same: return i * cols + j;
    case Broadcast::Row: return j;
    case Broadcast::Col: return i;
    case Broadcast::Scalar: return 0;
  }
  return 0;
}

// Elementwise binary op. `fwd(x, y)` computes the value; `dx(x, y, out)` and
// `dy(x, y, out)` the local partials.
template <class Fwd, class Dx, class Dy>
Var binary(const char* op, Var a, Var b, Fwd fwd, Dx dx, Dy dy) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Broadcast kind = classify(op, av, bv);
  Tensor out(av.rows(), av.cols());
  const std::size_t cols = av.cols();
  for (std::size_t i = 0; i < av.rows(); ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      out(i, j) = fwd(av(i, j), bv[rhs_index(kind, i, j, cols)]);
    }
  }
  Graph& g = a.graph();
  Tensor out_copy = out;
  return g.record(std::move(out), {a, b},
                  [kind, av, bv, out = std::move(out_copy), dx, dy](
                      const Tensor& grad, std::span<Tensor* const> in) {
                    const std::size_t c = av.cols();
                    for (std::size_t i = 0; i < av.rows(); ++i) {
                      for (std::size_t j = 0; j < c; ++j) {
                        const std::size_t bi = rhs_index(kind, i, j, c);
                        const double gij = grad(i, j);
                        if (in[0]) (*in[0])(i, j) += gij * dx(av(i, j), bv[bi], out(i, j));
                        if (in[1]) (*in[1])[bi] += gij * dy(av(i, j), bv[bi], out(i, j));
                      }
                    }
                  });
}

// Elementwise unary op; `deriv(x, out)` is the local derivative.
template <class Fwd, class Deriv>
Var unary(Var a, Fwd fwd, Deriv deriv) {
  const Tensor& av = a.value();
  Tensor out(av.rows(), av.cols());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  Tensor out_copy = out;
  return a.graph().record(std::move(out), {a},
                          [av, out = std::move(out_copy), deriv](
                              const Tensor& grad, std::span<Tensor* const> in) {
                            if (!in[0]) return;
                            Tensor& ga = *in[0];
                            for (std::size_t i = 0; i < av.size(); ++i) {
                              ga[i] += grad[i] * deriv(av[i], out[i]);
                            }
                          });
}

Tensor matmul_values(const Tensor& a, const Tensor& b) {
  Tensor out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
    }
  }
  return out;
}

}  // namespace

Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.rows()) throw_shape_error("matmul", av, bv);
  return a.graph().record(matmul_values(av, bv), {a, b},
                          [av, bv](const Tensor& grad, std::span<Tensor* const> in) {
                            const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
                            if (in[0]) {
                              Tensor& ga = *in[0];  // grad * b^T
                              for (std::size_t i = 0; i < m; ++i)
                                for (std::size_t p = 0; p < k; ++p) {
                                  double acc = 0.0;
                                  for (std::size_t j = 0; j < n; ++j) acc += grad(i, j) * bv(p, j);
                                  ga(i, p) += acc;
                                }
                            }
                            if (in[1]) {
                              Tensor& gb = *in[1];  // a^T * grad
                              for (std::size_t i = 0; i < m; ++i)
                                for (std::size_t p = 0; p < k; ++p) {
                                  const double aip = av(i, p);
                                  if (aip == 0.0) continue;
                                  for (std::size_t j = 0; j < n; ++j) gb(p, j) += aip * grad(i, j);
                                }
                            }
                          });
}

Var transpose(Var a) {
  const Tensor& av = a.value();
  Tensor out(av.cols(), av.rows());
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (std::size_t j = 0; j < av.cols(); ++j) out(j, i) = av(i, j);
  return a.graph().record(std::move(out), {a}, [](const Tensor& grad, std::span<Tensor* const> in) {
    if (!in[0]) return;
    Tensor& ga = *in[0];
    for (std::size_t i = 0; i < ga.rows(); ++i)
      for (std::size_t j = 0; j < ga.cols(); ++j) ga(i, j) += grad(j, i);
  });
}

Var add(Var a, Var b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y, double) { return y; }, [](double x, double, double) { return x; });
}

Var div(Var a, Var b) {
  return binary(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; },
      [](double, double y, double out) { return -out / y; });
}

Var scale(Var a, double factor) {
  return unary(
      a, [factor](double x) { return factor * x; }, [factor](double, double) { return factor; });
}

Var add_scalar(Var a, double offset) {
  return unary(
      a, [offset](double x) { return x + offset; }, [](double, double) { return 1.0; });
}

Var negate(Var a) {
  return unary(
      a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Var exp(Var a) {
  return unary(
      a, [](double x) { return std::exp(x); }, [](double, double out) { return out; });
}

Var expm1(Var a) {
  return unary(
      a, [](double x) { return std::expm1(x); }, [](double, double out) { return out + 1.0; });
}

Var log(Var a) {
  return unary(
      a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var sqrt(Var a) {
  return unary(
      a, [](double x) { return std::sqrt(x); }, [](double, double out) { return 0.5 / out; });
}

Var square(Var a) {
  return unary(
      a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var relu(Var a) {
  return unary(
      a, [](double x) { return x < 0.0 ? 0.0 : x; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var clamp_min(Var a, double floor) {
  return unary(
      a, [floor](double x) { return x < floor ? floor : x; },
      [floor](double x, double) { return x > floor ? 1.0 : 0.0; });
}

Var sum(Var a) {
  const Tensor& av = a.value();
  double acc = 0.0;
  for (double v : av.data()) acc += v;
  return a.graph().record(Tensor::scalar(acc), {a},
                          [](const Tensor& grad, std::span<Tensor* const> in) {
                            if (!in[0]) return;
                            const double g = grad[0];
                            for (double& v : in[0]->data()) v += g;
                          });
}

Var mean(Var a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var col_mean(Var a) {
  const Tensor& av = a.value();
  const std::size_t m = av.rows();
  if (m == 0) throw ShapeError("col_mean: tensor has no rows");
  Tensor out(1, av.cols());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < av.cols(); ++j) out(0, j) += av(i, j);
  for (double& v : out.data()) v /= static_cast<double>(m);
  return a.graph().record(std::move(out), {a},
                          [m](const Tensor& grad, std::span<Tensor* const> in) {
                            if (!in[0]) return;
                            Tensor& ga = *in[0];
                            const double inv = 1.0 / static_cast<double>(m);
                            for (std::size_t i = 0; i < ga.rows(); ++i)
                              for (std::size_t j = 0; j < ga.cols(); ++j) ga(i, j) += grad(0, j) * inv;
                          });
}

Var row_sum(Var a) {
  const Tensor& av = a.value();
  Tensor out(av.rows(), 1);
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (std::size_t j = 0; j < av.cols(); ++j) out(i, 0) += av(i, j);
  return a.graph().record(std::move(out), {a}, [](const Tensor& grad, std::span<Tensor* const> in) {
    if (!in[0]) return;
    Tensor& ga = *in[0];
    for (std::size_t i = 0; i < ga.rows(); ++i)
      for (std::size_t j = 0; j < ga.cols(); ++j) ga(i, j) += grad(i, 0);
  });
}

Var logsumexp_rows(Var a) {
  const Tensor& av = a.value();
  Tensor out(av.rows(), 1);
  for (std::size_t i = 0; i < av.rows(); ++i) out(i, 0) = logsumexp(av.row_span(i));
  Tensor out_copy = out;
  return a.graph().record(std::move(out), {a},
                          [av, lse = std::move(out_copy)](const Tensor& grad,
                                                          std::span<Tensor* const> in) {
                            if (!in[0]) return;
                            Tensor& ga = *in[0];
                            for (std::size_t i = 0; i < av.rows(); ++i)
                              for (std::size_t j = 0; j < av.cols(); ++j)
                                ga(i, j) += grad(i, 0) * std::exp(av(i, j) - lse(i, 0));
                          });
}

Var log_softmax_rows(Var a) {
  const Tensor& av = a.value();
  Tensor out(av.rows(), av.cols());
  for (std::size_t i = 0; i < av.rows(); ++i) {
    const double lse = logsumexp(av.row_span(i));
    for (std::size_t j = 0; j < av.cols(); ++j) out(i, j) = av(i, j) - lse;
  }
  Tensor out_copy = out;
  return a.graph().record(std::move(out), {a},
                          [ls = std::move(out_copy)](const Tensor& grad,
                                                     std::span<Tensor* const> in) {
                            if (!in[0]) return;
                            Tensor& ga = *in[0];
                            for (std::size_t i = 0; i < ls.rows(); ++i) {
                              double gsum = 0.0;
                              for (std::size_t j = 0; j < ls.cols(); ++j) gsum += grad(i, j);
                              for (std::size_t j = 0; j < ls.cols(); ++j)
                                ga(i, j) += grad(i, j) - std::exp(ls(i, j)) * gsum;
                            }
                          });
}

Var softmax_rows(Var a) {
  const Tensor& av = a.value();
  Tensor out(av.rows(), av.cols());
  for (std::size_t i = 0; i < av.rows(); ++i) {
    const double lse = logsumexp(av.row_span(i));
    for (std::size_t j = 0; j < av.cols(); ++j) out(i, j) = std::exp(av(i, j) - lse);
  }
  Tensor out_copy = out;
  return a.graph().record(std::move(out), {a},
                          [s = std::move(out_copy)](const Tensor& grad,
                                                    std::span<Tensor* const> in) {
                            if (!in[0]) return;
                            Tensor& ga = *in[0];
                            for (std::size_t i = 0; i < s.rows(); ++i) {
                              double dot = 0.0;
                              for (std::size_t j = 0; j < s.cols(); ++j) dot += grad(i, j) * s(i, j);
                              for (std::size_t j = 0; j < s.cols(); ++j)
                                ga(i, j) += s(i, j) * (grad(i, j) - dot);
                            }
                          });
}

Var concat_rows(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.cols()) throw_shape_error("concat_rows", av, bv);
  Tensor out(av.rows() + bv.rows(), av.cols());
  std::copy(av.data().begin(), av.data().end(), out.data().begin());
  std::copy(bv.data().begin(), bv.data().end(), out.data().begin() + av.size());
  const std::size_t split = av.size();
  return a.graph().record(std::move(out), {a, b},
                          [split](const Tensor& grad, std::span<Tensor* const> in) {
                            if (in[0])
                              for (std::size_t i = 0; i < split; ++i) (*in[0])[i] += grad[i];
                            if (in[1])
                              for (std::size_t i = 0; i < in[1]->size(); ++i)
                                (*in[1])[i] += grad[split + i];
                          });
}

Var concat_cols(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rows() != bv.rows()) throw_shape_error("concat_cols", av, bv);
  const std::size_t ca = av.cols(), cb = bv.cols();
  Tensor out(av.rows(), ca + cb);
  for (std::size_t i = 0; i < av.rows(); ++i) {
    for (std::size_t j = 0; j < ca; ++j) out(i, j) = av(i, j);
    for (std::size_t j = 0; j < cb; ++j) out(i, ca + j) = bv(i, j);
  }
  return a.graph().record(std::move(out), {a, b},
                          [ca, cb](const Tensor& grad, std::span<Tensor* const> in) {
                            for (std::size_t i = 0; i < grad.rows(); ++i) {
                              if (in[0])
                                for (std::size_t j = 0; j < ca; ++j) (*in[0])(i, j) += grad(i, j);
                              if (in[1])
                                for (std::size_t j = 0; j < cb; ++j) (*in[1])(i, j) += grad(i, ca + j);
                            }
                          });
}

Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  const Tensor& av = a.value();
  if (begin + count > av.rows()) {
    throw ShapeError("slice_rows: rows [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") out of range for " + shape_string(av));
  }
  const std::size_t c = av.cols();
  Tensor out(count, c);
  std::copy(av.data().begin() + begin * c, av.data().begin() + (begin + count) * c,
            out.data().begin());
  return a.graph().record(std::move(out), {a},
                          [begin, c](const Tensor& grad, std::span<Tensor* const> in) {
                            if (!in[0]) return;
                            for (std::size_t i = 0; i < grad.size(); ++i) (*in[0])[begin * c + i] += grad[i];
                          });
}

Var slice_cols(Var a, std::size_t begin, std::size_t count) {
  const Tensor& av = a.value();
  if (begin + count > av.cols()) {
    throw ShapeError("slice_cols: cols [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") out of range for " + shape_string(av));
  }
  Tensor out(av.rows(), count);
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (std::size_t j = 0; j < count; ++j) out(i, j) = av(i, begin + j);
  return a.graph().record(std::move(out), {a},
                          [begin](const Tensor& grad, std::span<Tensor* const> in) {
                            if (!in[0]) return;
                            for (std::size_t i = 0; i < grad.rows(); ++i)
                              for (std::size_t j = 0; j < grad.cols(); ++j) (*in[0])(i, begin + j) += grad(i, j);
                          });
}

Var l2_normalize_rows(Var a, double eps) {
  const Tensor& av = a.value();
  Tensor out(av.rows(), av.cols());
  std::vector<double> norms(av.rows());
  std::vector<bool> floored(av.rows());
  for (std::size_t i = 0; i < av.rows(); ++i) {
    double sq = 0.0;
    for (double v : av.row_span(i)) sq += v * v;
    floored[i] = !(sq > eps);
    norms[i] = std::sqrt(floored[i] ? eps : sq);
    for (std::size_t j = 0; j < av.cols(); ++j) out(i, j) = av(i, j) / norms[i];
  }
  Tensor out_copy = out;
  return a.graph().record(
      std::move(out), {a},
      [y = std::move(out_copy), norms = std::move(norms), floored = std::move(floored)](
          const Tensor& grad, std::span<Tensor* const> in) {
        if (!in[0]) return;
        Tensor& ga = *in[0];
        for (std::size_t i = 0; i < y.rows(); ++i) {
          double dot = 0.0;
          if (!floored[i])
            for (std::size_t j = 0; j < y.cols(); ++j) dot += y(i, j) * grad(i, j);
          for (std::size_t j = 0; j < y.cols(); ++j)
            ga(i, j) += (grad(i, j) - y(i, j) * dot) / norms[i];
        }
      });
}

Var gather(Var a, std::vector<std::pair<std::size_t, std::size_t>> index) {
  const Tensor& av = a.value();
  Tensor out(index.size(), 1);
  for (std::size_t k = 0; k < index.size(); ++k) {
    const auto [r, c] = index[k];
    if (r >= av.rows() || c >= av.cols()) {
      throw ShapeError("gather: index (" + std::to_string(r) + ", " + std::to_string(c) +
                       ") out of range for " + shape_string(av));
    }
    out(k, 0) = av(r, c);
  }
  return a.graph().record(std::move(out), {a},
                          [index = std::move(index)](const Tensor& grad,
                                                     std::span<Tensor* const> in) {
                            if (!in[0]) return;
                            for (std::size_t k = 0; k < index.size(); ++k)
                              (*in[0])(index[k].first, index[k].second) += grad(k, 0);
                          });
}

}  // namespace probmed::diff
