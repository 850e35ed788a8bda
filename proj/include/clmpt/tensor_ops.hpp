#pragma once
// Differentiable primitives over Tensor. Shape rules are fixed per
// primitive; there is no implicit broadcasting beyond what is documented
// here. Complex-valued tensors interleave (re, im) pairs in the last axis.

#include <vector>

#include "clmpt/tensor.hpp"

namespace clmpt {

// ---- elementwise / arithmetic ----
Tensor add(const Tensor& a, const Tensor& b);        // same shape
Tensor sub(const Tensor& a, const Tensor& b);        // same shape
Tensor mul(const Tensor& a, const Tensor& b);        // same shape, elementwise
Tensor scalar_mul(const Tensor& a, double s);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sigmoid(const Tensor& a);

// ---- linear algebra ----
Tensor matmul(const Tensor& a, const Tensor& b);     // (m,k)x(k,n) -> (m,n)
Tensor transpose(const Tensor& a);                   // 2-D
Tensor add_rowwise(const Tensor& mat, const Tensor& vec);  // (m,n)+(n), per row
Tensor mul_rowwise(const Tensor& mat, const Tensor& vec);  // (m,n)*(n), per row

// ---- complex (interleaved re/im in the last axis, even extent) ----
Tensor complex_hadamard(const Tensor& a, const Tensor& b);  // same shape
Tensor conjugate(const Tensor& a);

// ---- reductions / normalizations ----
Tensor softmax_lastdim(const Tensor& a);
Tensor logsumexp_lastdim(const Tensor& a);   // reduces last axis
Tensor layer_norm_lastdim(const Tensor& a, double eps = 1e-5);
Tensor mean(const Tensor& a, int64_t axis);
Tensor sum(const Tensor& a, int64_t axis);
Tensor max(const Tensor& a, int64_t axis);   // backward routes to first max
Tensor sum_all(const Tensor& a);             // -> scalar
Tensor l2_norm_lastdim(const Tensor& a);     // reduces last axis
// Mean over rows of sum_j |z_j|^3 (complex modulus per coordinate) -> scalar.
Tensor cube_norm_penalty(const Tensor& a);
Tensor cosine_similarity(const Tensor& a, const Tensor& b);      // same shape, reduce last
Tensor cosine_similarity_rows(const Tensor& mat, const Tensor& vec);  // (k,n)x(n) -> (k)

// ---- shape manipulation ----
Tensor reshape(const Tensor& a, std::vector<int64_t> new_shape);
Tensor stack_rows(const std::vector<Tensor>& rows);          // k vectors (n) -> (k,n)
Tensor concat_rows(const std::vector<Tensor>& mats);         // 2-D, same column count
Tensor concat_cols(const std::vector<Tensor>& mats);         // 2-D, same row count
Tensor concat_vecs(const std::vector<Tensor>& vecs);         // 1-D
Tensor slice_rows(const Tensor& a, int64_t start, int64_t len);  // 2-D
Tensor slice_cols(const Tensor& a, int64_t start, int64_t len);  // 2-D
Tensor slice_vec(const Tensor& a, int64_t start, int64_t len);   // 1-D
Tensor row(const Tensor& a, int64_t i);                          // (m,n) -> (n)
Tensor gather_rows(const Tensor& a, const std::vector<int64_t>& indices);  // -> (k,n)

// Mean over rows of [logsumexp(row) - row[label]]; labels are not
// differentiated through.
Tensor cross_entropy_mean(const Tensor& logits, const std::vector<int64_t>& labels);

// -log(softmax(logits)[0]) for a 1-D logit vector, computed relative to
// logits[0] so that tiny losses keep full precision.
Tensor neg_log_softmax_first(const Tensor& logits);

// Max over all input coordinates of |analytic - numeric| /
// max(1e-8, |analytic| + |numeric|), numeric by central differences.
double grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& fn,
                  const std::vector<Tensor>& inputs, double step = 1e-5);

} // namespace clmpt
