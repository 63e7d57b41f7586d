#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "sts/tensor.hpp"

namespace sts::ops {

// Elementwise. Binary ops need identical shapes; add/sub additionally accept a
// rank-1 `b` whose length equals a's last extent (bias broadcast).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double offset);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope = 0.2);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);  // DomainError on non-positive input
Tensor square(const Tensor& a);
Tensor clamp(const Tensor& a, double lo, double hi);
/// Keeps entries where keep != 0 and writes +0.0 elsewhere; no gradient through
/// dropped entries.
Tensor mask(const Tensor& a, std::span<const std::uint8_t> keep);

// Reductions remove `axis`.
Tensor sum(const Tensor& a, std::size_t axis);
Tensor mean(const Tensor& a, std::size_t axis);
Tensor sum_all(const Tensor& a);

Tensor matmul(const Tensor& a, const Tensor& b);      // [m,k] x [k,n]
Tensor transpose(const Tensor& a);                     // rank 2
Tensor bmm(const Tensor& a, const Tensor& b);         // [B,m,k] x [B,k,n]
Tensor bmm_nt(const Tensor& a, const Tensor& b);      // [B,m,k] x [B,n,k]^T
/// x [..., k] times w^T for w [m, k] -> [..., m]
Tensor linear(const Tensor& x, const Tensor& w);

Tensor softmax(const Tensor& a, std::size_t axis);
/// Softmax over the last axis restricted to entries where mask != 0; entries
/// outside the mask are exactly 0. A row with empty support is all zeros.
Tensor masked_softmax(const Tensor& a, std::span<const std::uint8_t> mask);

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length);
std::vector<Tensor> split(const Tensor& a, std::size_t axis, const std::vector<std::size_t>& sizes);
Tensor stack(const std::vector<Tensor>& parts, std::size_t axis);

Tensor reshape(const Tensor& a, Shape shape);
Tensor permute(const Tensor& a, const std::vector<std::size_t>& axes);

/// Rows of `a` along axis 0 picked by `indices`.
Tensor index_select(const Tensor& a, std::span<const std::size_t> indices);
/// out[indices[p]] += a[p] along axis 0, `rows` output rows.
Tensor index_add(const Tensor& a, std::span<const std::size_t> indices, std::size_t rows);
/// out[p, ...] = a[p, ...] * w[p] for rank-1 w of length a.extent(0).
Tensor scale_rows(const Tensor& a, const Tensor& w);

}  // namespace sts::ops
