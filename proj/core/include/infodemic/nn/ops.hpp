#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "infodemic/common.hpp"
#include "infodemic/features.hpp"
#include "infodemic/nn/tensor.hpp"

namespace infodemic::nn {

enum class Activation { none, relu };
enum class Mode { train, eval };

/// x[batch, in] * w[in, out] + b[out], optional ReLU.
Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b, Activation activation = Activation::none);

/// Same as dense() for a constant sparse input batch (one row per example).
Tensor sparse_dense(const SparseMatrix& x, const Tensor& w, const Tensor& b,
                    Activation activation = Activation::none);

/// Inverted dropout: in train mode each element is zeroed with probability
/// `rate` and survivors are scaled by 1/(1-rate). Identity in eval mode.
Tensor dropout(const Tensor& x, double rate, Mode mode, Rng& rng);

/// Gathers rows of `table[vocab, dim]` for `indices` laid out [batch, time].
/// Row 0 is the padding row and receives no gradient.
Tensor embedding(std::span<const std::uint32_t> indices, std::size_t batch, std::size_t time,
                 const Tensor& table);

Tensor reshape(const Tensor& x, Shape shape);
/// [batch, ...] -> [batch, prod(...)].
Tensor flatten(const Tensor& x);

/// Valid cross-correlation over time with ReLU:
/// x[batch, time, ch] * kernels[width, ch, filters] + b[filters] -> [batch, time-width+1, filters].
Tensor conv1d(const Tensor& x, const Tensor& kernels, const Tensor& b);

/// Non-overlapping mean pooling over time, stride = window. Trailing steps
/// that do not fill a window are dropped.
Tensor avgpool1d(const Tensor& x, std::size_t window);
/// Mean over the time axis: [batch, time, ch] -> [batch, ch].
Tensor global_avgpool1d(const Tensor& x);

/// Concatenates rank-2 tensors along the feature axis.
Tensor concat(std::span<const Tensor> parts);

/// Input projection [in, G*hidden], recurrent projection [hidden, G*hidden]
/// and bias [G*hidden]; G = 3 (z|r|h) for GRU, 4 (i|f|g|o) for LSTM.
struct RecurrentWeights {
  Tensor input_kernel;
  Tensor recurrent_kernel;
  Tensor bias;
};

/// GRU over x[batch, time, in]:
///   z = sigmoid(x Wz + h Uz + bz), r = sigmoid(x Wr + h Ur + br),
///   c = tanh(x Wh + (r * h) Uh + bh), h' = (1 - z) * h + z * c.
/// Steps at or beyond lengths[b] carry the state unchanged (empty `lengths`
/// means every row is full length). Returns [batch, time, hidden] or the
/// final state [batch, hidden].
Tensor gru(const Tensor& x, const RecurrentWeights& weights, std::span<const std::size_t> lengths,
           bool return_sequence);

/// LSTM with input/forget/output gates and cell state:
///   c' = f * c + i * g, h' = o * tanh(c'). Same masking and output rules as gru().
Tensor lstm(const Tensor& x, const RecurrentWeights& weights, std::span<const std::size_t> lengths,
            bool return_sequence);

/// Mean over the batch of -log softmax(logits)[label]; returns a scalar tensor.
Tensor softmax_sparse_ce(const Tensor& logits, std::span<const int> labels);

/// Sum of all elements (scalar); handy as a test objective.
Tensor sum(const Tensor& x);

/// Row-wise softmax of a [rows, classes] array.
NdArray softmax(const NdArray& logits);

}  // namespace infodemic::nn
