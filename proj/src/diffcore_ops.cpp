#include "mplexnet/diffcore/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "mplexnet/error.hpp"

namespace mplexnet::diffcore {

using detail::Node;
using detail::make_result;

namespace {

void require_matrix(const Tensor& t, const char* op, const char* name) {
  if (t.shape().size() != 2)
    throw DimensionError(std::string(op) + ": " + name + " must be a matrix, got " + shape_str(t.shape()));
}

void add_into(std::vector<double>& dst, std::span<const double> src) {
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
}

void add_column_sums(std::vector<double>& db, std::span<const double> g, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) db[c] += g[r * cols + c];
}

}  // namespace

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
  require_matrix(x, "affine", "x");
  require_matrix(w, "affine", "W");
  const auto n = x.dim(0), din = x.dim(1), dout = w.dim(1);
  if (w.dim(0) != din || b.size() != dout)
    throw DimensionError("affine: x " + shape_str(x.shape()) + " does not conform with W " + shape_str(w.shape()) +
                         " and b " + shape_str(b.shape()));
  std::vector<double> out(n * dout);
  kernels::matmul(x.values(), w.values(), out, n, din, dout);
  const auto bias = b.values();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < dout; ++c) out[r * dout + c] += bias[c];
  return make_result({n, dout}, std::move(out), {x, w, b}, [n, din, dout](Node& self) {
    auto& xn = *self.parents[0];
    auto& wn = *self.parents[1];
    auto& bn = *self.parents[2];
    if (xn.requires_grad) kernels::matmul_a_bt_acc(self.grad, wn.value, xn.grad_buffer(), n, din, dout);
    if (wn.requires_grad) kernels::matmul_at_b_acc(xn.value, self.grad, wn.grad_buffer(), n, din, dout);
    if (bn.requires_grad) add_column_sums(bn.grad_buffer(), self.grad, n, dout);
  });
}

Tensor affine_transposed(const Tensor& x, const Tensor& w, const Tensor& b) {
  require_matrix(x, "affine_transposed", "x");
  require_matrix(w, "affine_transposed", "W");
  const auto n = x.dim(0), dcode = x.dim(1), dout = w.dim(0);
  if (w.dim(1) != dcode || b.size() != dout)
    throw DimensionError("affine_transposed: x " + shape_str(x.shape()) + " does not conform with W^T of " +
                         shape_str(w.shape()) + " and b " + shape_str(b.shape()));
  std::vector<double> out(n * dout, 0.0);
  kernels::matmul_a_bt_acc(x.values(), w.values(), out, n, dout, dcode);
  const auto bias = b.values();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < dout; ++c) out[r * dout + c] += bias[c];
  return make_result({n, dout}, std::move(out), {x, w, b}, [n, dcode, dout](Node& self) {
    auto& xn = *self.parents[0];
    auto& wn = *self.parents[1];
    auto& bn = *self.parents[2];
    if (xn.requires_grad) {
      std::vector<double> tmp(n * dcode);
      kernels::matmul(self.grad, wn.value, tmp, n, dout, dcode);
      add_into(xn.grad_buffer(), tmp);
    }
    if (wn.requires_grad) kernels::matmul_at_b_acc(self.grad, xn.value, wn.grad_buffer(), n, dout, dcode);
    if (bn.requires_grad) add_column_sums(bn.grad_buffer(), self.grad, n, dout);
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul", "a");
  require_matrix(b, "matmul", "b");
  const auto n = a.dim(0), k = a.dim(1), m = b.dim(1);
  if (b.dim(0) != k)
    throw DimensionError("matmul: " + shape_str(a.shape()) + " does not conform with " + shape_str(b.shape()));
  std::vector<double> out(n * m);
  kernels::matmul(a.values(), b.values(), out, n, k, m);
  return make_result({n, m}, std::move(out), {a, b}, [n, k, m](Node& self) {
    auto& an = *self.parents[0];
    auto& bn = *self.parents[1];
    if (an.requires_grad) kernels::matmul_a_bt_acc(self.grad, bn.value, an.grad_buffer(), n, k, m);
    if (bn.requires_grad) kernels::matmul_at_b_acc(an.value, self.grad, bn.grad_buffer(), n, k, m);
  });
}

Tensor leaky_relu(const Tensor& x, double neg_slope) {
  auto in = x.values();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > 0.0 ? in[i] : neg_slope * in[i];
  return make_result(x.shape(), std::move(out), {x}, [neg_slope](Node& self) {
    auto& xn = *self.parents[0];
    auto& g = xn.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += xn.value[i] > 0.0 ? self.grad[i] : neg_slope * self.grad[i];
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw DimensionError("add: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  auto av = a.values(), bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (auto& p : self.parents)
      if (p->requires_grad) add_into(p->grad_buffer(), self.grad);
  });
}

Tensor add_bias(const Tensor& x, const Tensor& b) {
  require_matrix(x, "add_bias", "x");
  const auto n = x.dim(0), d = x.dim(1);
  if (b.size() != d) throw DimensionError("add_bias: x " + shape_str(x.shape()) + " with b " + shape_str(b.shape()));
  auto xv = x.values(), bv = b.values();
  std::vector<double> out(xv.size());
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) out[r * d + c] = xv[r * d + c] + bv[c];
  return make_result(x.shape(), std::move(out), {x, b}, [n, d](Node& self) {
    auto& xn = *self.parents[0];
    auto& bn = *self.parents[1];
    if (xn.requires_grad) add_into(xn.grad_buffer(), self.grad);
    if (bn.requires_grad) add_column_sums(bn.grad_buffer(), self.grad, n, d);
  });
}

Tensor scale(const Tensor& x, double factor) {
  auto in = x.values();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = factor * in[i];
  return make_result(x.shape(), std::move(out), {x}, [factor](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
  });
}

Tensor scale_by(const Tensor& x, const Tensor& s) {
  if (s.size() != 1) throw DimensionError("scale_by: factor must have one element, got " + shape_str(s.shape()));
  const double f = s.values()[0];
  auto in = x.values();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f * in[i];
  return make_result(x.shape(), std::move(out), {x, s}, [](Node& self) {
    auto& xn = *self.parents[0];
    auto& sn = *self.parents[1];
    if (xn.requires_grad) {
      auto& g = xn.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += sn.value[0] * self.grad[i];
    }
    if (sn.requires_grad) {
      double acc = 0.0;
      for (std::size_t i = 0; i < self.grad.size(); ++i) acc += xn.value[i] * self.grad[i];
      sn.grad_buffer()[0] += acc;
    }
  });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  require_matrix(a, "concat_cols", "a");
  require_matrix(b, "concat_cols", "b");
  const auto n = a.dim(0), da = a.dim(1), db = b.dim(1);
  if (b.dim(0) != n)
    throw DimensionError("concat_cols: row counts differ, " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<double> out(n * (da + db));
  auto av = a.values(), bv = b.values();
  for (std::size_t r = 0; r < n; ++r) {
    std::copy_n(av.data() + r * da, da, out.data() + r * (da + db));
    std::copy_n(bv.data() + r * db, db, out.data() + r * (da + db) + da);
  }
  return make_result({n, da + db}, std::move(out), {a, b}, [n, da, db](Node& self) {
    auto& an = *self.parents[0];
    auto& bn = *self.parents[1];
    const auto w = da + db;
    if (an.requires_grad) {
      auto& g = an.grad_buffer();
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < da; ++c) g[r * da + c] += self.grad[r * w + c];
    }
    if (bn.requires_grad) {
      auto& g = bn.grad_buffer();
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < db; ++c) g[r * db + c] += self.grad[r * w + da + c];
    }
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.size())
    throw DimensionError("reshape: " + shape_str(x.shape()) + " cannot become " + shape_str(shape));
  auto in = x.values();
  return make_result(std::move(shape), std::vector<double>(in.begin(), in.end()), {x},
                     [](Node& self) { add_into(self.parents[0]->grad_buffer(), self.grad); });
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
  if (rows.empty()) throw DimensionError("stack_rows: no rows");
  const auto width = rows.front().size();
  std::vector<double> out;
  out.reserve(rows.size() * width);
  for (const auto& r : rows) {
    if (r.size() != width)
      throw DimensionError("stack_rows: row of shape " + shape_str(r.shape()) + " differs from width " +
                           std::to_string(width));
    auto v = r.values();
    out.insert(out.end(), v.begin(), v.end());
  }
  return make_result({rows.size(), width}, std::move(out), rows, [width](Node& self) {
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      auto& p = *self.parents[i];
      if (!p.requires_grad) continue;
      auto& g = p.grad_buffer();
      for (std::size_t c = 0; c < width; ++c) g[c] += self.grad[i * width + c];
    }
  });
}

Tensor mean_rows(const Tensor& x) {
  require_matrix(x, "mean_rows", "x");
  const auto n = x.dim(0), d = x.dim(1);
  auto in = x.values();
  std::vector<double> out(d, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) out[c] += in[r * d + c];
  for (auto& v : out) v /= static_cast<double>(n);
  return make_result({1, d}, std::move(out), {x}, [n, d](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < d; ++c) g[r * d + c] += inv * self.grad[c];
  });
}

Tensor spmm(std::shared_ptr<const kernels::CsrMatrix<double>> s, const Tensor& h) {
  require_matrix(h, "spmm", "H");
  if (s->cols != h.dim(0))
    throw DimensionError("spmm: S [" + std::to_string(s->rows) + "x" + std::to_string(s->cols) +
                         "] does not conform with H " + shape_str(h.shape()));
  const auto d = h.dim(1);
  std::vector<double> out(s->rows * d);
  kernels::spmm(*s, h.values(), d, out);
  return make_result({s->rows, d}, std::move(out), {h}, [s, d](Node& self) {
    kernels::spmm_t_acc(*s, nullptr, self.grad, d, self.parents[0]->grad_buffer(), kernels::Exec::serial);
  });
}

Tensor block_spmm(std::vector<std::shared_ptr<const kernels::CsrMatrix<double>>> blocks, const Tensor& h) {
  require_matrix(h, "block_spmm", "H");
  const auto d = h.dim(1);
  const auto nb = blocks.size();
  std::vector<std::size_t> in_off(nb + 1, 0), out_off(nb + 1, 0);
  for (std::size_t b = 0; b < nb; ++b) {
    in_off[b + 1] = in_off[b] + blocks[b]->cols;
    out_off[b + 1] = out_off[b] + blocks[b]->rows;
  }
  if (in_off[nb] != h.dim(0))
    throw DimensionError("block_spmm: operators consume " + std::to_string(in_off[nb]) + " rows but H is " +
                         shape_str(h.shape()));
  std::vector<double> out(out_off[nb] * d);
  const auto hv = h.values();
  const bool par = kernels::default_exec() == kernels::Exec::parallel && nb > 1;
  const auto n = static_cast<long>(nb);
#pragma omp parallel for schedule(static) if (par)
  for (long bi = 0; bi < n; ++bi) {
    const auto b = static_cast<std::size_t>(bi);
    kernels::spmm(*blocks[b], hv.subspan(in_off[b] * d, blocks[b]->cols * d), d,
                  std::span(out).subspan(out_off[b] * d, blocks[b]->rows * d), kernels::Exec::serial);
  }
  Shape shape{out_off[nb], d};
  return make_result(std::move(shape), std::move(out), {h},
                     [blocks = std::move(blocks), in_off = std::move(in_off), out_off = std::move(out_off), d,
                      par](Node& self) {
                       auto& g = self.parents[0]->grad_buffer();
                       const auto n = static_cast<long>(blocks.size());
#pragma omp parallel for schedule(static) if (par)
                       for (long bi = 0; bi < n; ++bi) {
                         const auto b = static_cast<std::size_t>(bi);
                         kernels::spmm_t_acc(*blocks[b], nullptr,
                                             std::span<const double>(self.grad).subspan(out_off[b] * d,
                                                                                        blocks[b]->rows * d),
                                             d, std::span(g).subspan(in_off[b] * d, blocks[b]->cols * d),
                                             kernels::Exec::serial);
                       }
                     });
}

Tensor weighted_sum(const Tensor& x, std::span<const double> weights) {
  if (weights.size() != x.size())
    throw DimensionError("weighted_sum: " + std::to_string(weights.size()) + " weights for " + shape_str(x.shape()));
  auto in = x.values();
  double acc = 0.0;
  for (std::size_t i = 0; i < in.size(); ++i) acc += in[i] * weights[i];
  std::vector<double> w(weights.begin(), weights.end());
  return make_result({1}, {acc}, {x}, [w = std::move(w)](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0] * w[i];
  });
}

Tensor mse_loss(const Tensor& x, const Tensor& target) {
  if (x.shape() != target.shape())
    throw DimensionError("mse_loss: " + shape_str(x.shape()) + " vs " + shape_str(target.shape()));
  auto xv = x.values(), tv = target.values();
  double acc = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i) acc += (xv[i] - tv[i]) * (xv[i] - tv[i]);
  const double n = static_cast<double>(xv.size());
  return make_result({1}, {acc / n}, {x, target}, [n](Node& self) {
    auto& xn = *self.parents[0];
    auto& tn = *self.parents[1];
    const double k = 2.0 * self.grad[0] / n;
    if (xn.requires_grad) {
      auto& g = xn.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += k * (xn.value[i] - tn.value[i]);
    }
    if (tn.requires_grad) {
      auto& g = tn.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= k * (xn.value[i] - tn.value[i]);
    }
  });
}

std::vector<double> softmax_rows(const Tensor& logits) {
  require_matrix(logits, "softmax_rows", "logits");
  const auto n = logits.dim(0), c = logits.dim(1);
  auto in = logits.values();
  std::vector<double> out(n * c);
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = in.data() + r * c;
    const double mx = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
    for (std::size_t j = 0; j < c; ++j) out[r * c + j] = std::exp(row[j] - mx) / z;
  }
  return out;
}

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  require_matrix(logits, "softmax_cross_entropy", "logits");
  const auto n = logits.dim(0), c = logits.dim(1);
  if (labels.size() != n)
    throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for logits " +
                         shape_str(logits.shape()));
  for (auto l : labels)
    if (l < 0 || static_cast<std::size_t>(l) >= c)
      throw ConfigError("softmax_cross_entropy: label " + std::to_string(l) + " outside [0, " + std::to_string(c) +
                        ")");
  auto in = logits.values();
  std::vector<double> probs(n * c);
  double loss = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = in.data() + r * c;
    const double mx = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
    const double log_z = std::log(z);
    for (std::size_t j = 0; j < c; ++j) probs[r * c + j] = std::exp(row[j] - mx - log_z);
    loss += log_z - (row[labels[r]] - mx);
  }
  std::vector<int> lab(labels.begin(), labels.end());
  return make_result({1}, {loss / static_cast<double>(n)}, {logits},
                     [n, c, probs = std::move(probs), lab = std::move(lab)](Node& self) {
                       auto& g = self.parents[0]->grad_buffer();
                       const double k = self.grad[0] / static_cast<double>(n);
                       for (std::size_t r = 0; r < n; ++r) {
                         for (std::size_t j = 0; j < c; ++j) {
                           const double onehot = static_cast<std::size_t>(lab[r]) == j ? 1.0 : 0.0;
                           g[r * c + j] += k * (probs[r * c + j] - onehot);
                         }
                       }
                     });
}

}  // namespace mplexnet::diffcore
