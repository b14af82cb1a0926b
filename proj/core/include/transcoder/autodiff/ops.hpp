#pragma once

#include <cstdint>
#include <span>

#include "transcoder/autodiff/tape.hpp"
#include "transcoder/autodiff/tensor.hpp"
#include "transcoder/util/rng.hpp"

// Differentiable operations. Each op validates shapes, computes its output,
// rejects non-finite results with NumericError, and (when the tape is
// recording and an input requires grad) appends its backward rule.
//
// Broadcasting is limited to trailing-dimension affine terms (add_bias,
// layer_norm gain/bias).
namespace transcoder::ad {

/// Score added at masked attention positions. Finite so that every tensor
/// stays finite; after max-subtraction it underflows to an exact zero weight.
inline constexpr double kMaskedScore = -1e9;

/// [m x k] * [k x n] -> [m x n].
template <typename T>
DiffTensor<T> matmul(Tape<T>& tape, const DiffTensor<T>& a, const DiffTensor<T>& b);

/// Batched product over the leading dimension:
/// [B x m x k] * [B x k x n], or [B x m x k] * [B x n x k]^T when transpose_b.
template <typename T>
DiffTensor<T> batched_matmul(Tape<T>& tape, const DiffTensor<T>& a, const DiffTensor<T>& b,
                             bool transpose_b);

template <typename T>
DiffTensor<T> add(Tape<T>& tape, const DiffTensor<T>& a, const DiffTensor<T>& b);

/// Elementwise product of equally shaped tensors.
template <typename T>
DiffTensor<T> mul(Tape<T>& tape, const DiffTensor<T>& a, const DiffTensor<T>& b);

/// x[..., n] + bias[n].
template <typename T>
DiffTensor<T> add_bias(Tape<T>& tape, const DiffTensor<T>& x, const DiffTensor<T>& bias);

template <typename T>
DiffTensor<T> scale(Tape<T>& tape, const DiffTensor<T>& x, T factor);

/// Sum of all entries as a scalar (shape {}).
template <typename T>
DiffTensor<T> sum(Tape<T>& tape, const DiffTensor<T>& x);

template <typename T>
DiffTensor<T> tanh(Tape<T>& tape, const DiffTensor<T>& x);

/// GELU, tanh approximation.
template <typename T>
DiffTensor<T> gelu(Tape<T>& tape, const DiffTensor<T>& x);

/// Softmax along `axis`, computed with max-subtraction.
template <typename T>
DiffTensor<T> softmax(Tape<T>& tape, const DiffTensor<T>& x, std::size_t axis);

/// Normalizes over the last dimension, then applies gain and bias.
/// Throws ConfigError when eps <= 0.
template <typename T>
DiffTensor<T> layer_norm(Tape<T>& tape, const DiffTensor<T>& x, const DiffTensor<T>& gain,
                         const DiffTensor<T>& bias, double eps);

/// Mean negative log-likelihood over positions whose target is not pad_id.
/// logits: [..., vocab]; targets: one id per leading position.
template <typename T>
DiffTensor<T> cross_entropy(Tape<T>& tape, const DiffTensor<T>& logits, std::span<const std::int32_t> targets,
                            std::int32_t pad_id);

/// Row gather: table[V x d], ids -> [n x d].
template <typename T>
DiffTensor<T> embedding(Tape<T>& tape, const DiffTensor<T>& table, std::span<const std::int32_t> ids);

/// [B*S x H*dh] -> [B*H x S x dh].
template <typename T>
DiffTensor<T> split_heads(Tape<T>& tape, const DiffTensor<T>& x, std::size_t batch, std::size_t seq,
                          std::size_t heads);

/// [B*H x S x dh] -> [B*S x H*dh].
template <typename T>
DiffTensor<T> merge_heads(Tape<T>& tape, const DiffTensor<T>& x, std::size_t batch, std::size_t heads);

/// Prepends a shared per-head prefix to every batch row:
/// x[B*H x S x dh], prefix[L x H*dh] -> [B*H x (L+S) x dh].
template <typename T>
DiffTensor<T> concat_prefix(Tape<T>& tape, const DiffTensor<T>& x, const DiffTensor<T>& prefix,
                            std::size_t heads);

/// scores[B*H x Sq x Sk] + kMaskedScore where mask[b, q, k] is set.
/// mask is laid out [B x Sq x Sk] and shared across heads.
template <typename T>
DiffTensor<T> add_mask(Tape<T>& tape, const DiffTensor<T>& scores, std::span<const std::uint8_t> mask,
                       std::size_t heads);

/// Inverted dropout. Returns `x` itself when rate == 0.
template <typename T>
DiffTensor<T> dropout(Tape<T>& tape, const DiffTensor<T>& x, double rate, util::Rng& rng);

/// Columns [start, start+count) of a matrix.
template <typename T>
DiffTensor<T> slice_cols(Tape<T>& tape, const DiffTensor<T>& x, std::size_t start, std::size_t count);

template <typename T>
DiffTensor<T> reshape(Tape<T>& tape, const DiffTensor<T>& x, Shape shape);

}  // namespace transcoder::ad
