// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gfolds/rng.hpp"
#include "gfolds/tensor.hpp"

// Differentiable operations. All are instantiated for float and double; the
// double instantiation is the reference path used by gradient checks.
namespace gfolds::ops {

// Same shapes, or `b` rank-1 with the last extent of `a` (bias broadcast).
template <class T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <class T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b);

// Elementwise product of equal shapes.
template <class T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <class T>
BasicTensor<T> scale(const BasicTensor<T>& a, T factor);

// [n,k]x[k,m], with an optional leading batch extent on either or both
// operands: [B,n,k]x[k,m], [n,k]x[B,k,m], [B,n,k]x[B,k,m].
template <class T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b);

// x W + bias for x [..., in], W [in, out], bias [out].
template <class T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias);

// Swaps the last two axes.
template <class T>
BasicTensor<T> transpose(const BasicTensor<T>& a);

template <class T>
BasicTensor<T> reshape(const BasicTensor<T>& a, Shape shape);

// Columns [start, start+len) of the last axis.
template <class T>
BasicTensor<T> slice_last(const BasicTensor<T>& a, std::size_t start, std::size_t len);

template <class T>
BasicTensor<T> concat_last(const std::vector<BasicTensor<T>>& parts);

// Exact (erf) GeLU.
template <class T>
BasicTensor<T> gelu(const BasicTensor<T>& a);

// Softmax over the last axis. `key_bias`, when given, is added before the
// exponent: its length is m * G for last extent m, and the rows of `a` are
// split into G consecutive equal groups, group g using bias row g. -inf
// entries exclude a column; a row with every column excluded yields zeros.
template <class T>
BasicTensor<T> softmax_last(const BasicTensor<T>& a, std::span<const T> key_bias = {});

// Normalizes over the last axis (biased variance), then gain * xhat + bias.
template <class T>
BasicTensor<T> layer_norm(const BasicTensor<T>& x, const BasicTensor<T>& gain,
                          const BasicTensor<T>& bias, double eps);

// Row gather from a [V, d] table; gradient scatters back into the table.
template <class T>
BasicTensor<T> embedding(const BasicTensor<T>& table, std::span<const std::int32_t> ids);

// out[dst[e]] += x[e] for x [E, d]; out has n_out rows.
template <class T>
BasicTensor<T> scatter_add_rows(const BasicTensor<T>& x, std::span<const std::size_t> dst,
                                std::size_t n_out);

// Multiplies each last-axis row i by the constant factors[i].
template <class T>
BasicTensor<T> scale_rows(const BasicTensor<T>& x, std::span<const T> factors);

template <class T>
BasicTensor<T> sum(const BasicTensor<T>& a);

template <class T>
BasicTensor<T> mean(const BasicTensor<T>& a);

// Mean negative log-likelihood over rows of `logits` [R, V] whose ignore
// flag is zero. Throws EmptyBatchError when every row is ignored.
template <class T>
BasicTensor<T> cross_entropy(const BasicTensor<T>& logits, std::span<const std::int32_t> targets,
                             std::span<const std::uint8_t> ignore = {});

// Inverted dropout; identity when rate == 0.
template <class T>
BasicTensor<T> dropout(const BasicTensor<T>& a, double rate, Rng& rng);

}  // namespace gfolds::ops
