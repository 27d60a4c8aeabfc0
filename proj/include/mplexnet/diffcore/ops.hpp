#pragma once

#include <memory>
#include <span>
#include <vector>

#include "mplexnet/diffcore/tensor.hpp"
#include "mplexnet/kernels.hpp"

namespace mplexnet::diffcore {

inline constexpr double kLeakySlope = 0.01;

/// x[N x Din] * W[Din x Dout] + b[Dout]
Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b);
/// x[N x Dout] * W[Din x Dout]^T + b[Din]; the decoder half of a tied autoencoder.
Tensor affine_transposed(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor leaky_relu(const Tensor& x, double neg_slope = kLeakySlope);

Tensor add(const Tensor& a, const Tensor& b);
/// x[N x D] + b[D] broadcast over rows.
Tensor add_bias(const Tensor& x, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
/// x * s where s is a one-element tensor (e.g. a learnable epsilon).
Tensor scale_by(const Tensor& x, const Tensor& s);

/// [N x D1] ++ [N x D2] -> [N x (D1 + D2)]
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor reshape(const Tensor& x, Shape shape);
/// Stacks same-sized tensors as rows of an [n x size] matrix.
Tensor stack_rows(const std::vector<Tensor>& rows);
/// [N x D] -> [1 x D]
Tensor mean_rows(const Tensor& x);

/// S[R x C] * H[C x D]. S is shared, not copied, by the recorded backward rule.
Tensor spmm(std::shared_ptr<const kernels::CsrMatrix<double>> s, const Tensor& h);

/// Block-diagonal product: H is the row-wise stack of blocks sized by each
/// operator's column count; block b of the output is blocks[b] * H_b. Used to
/// batch per-sample graph operators without materializing the diagonal.
Tensor block_spmm(std::vector<std::shared_ptr<const kernels::CsrMatrix<double>>> blocks, const Tensor& h);

/// Sum of elementwise products with a constant weight vector.
Tensor weighted_sum(const Tensor& x, std::span<const double> weights);

Tensor mse_loss(const Tensor& x, const Tensor& target);
/// Mean over rows of -log softmax(logits[n])[labels[n]].
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);

/// Row-wise softmax of an [N x C] matrix (no gradient).
std::vector<double> softmax_rows(const Tensor& logits);

}  // namespace mplexnet::diffcore
