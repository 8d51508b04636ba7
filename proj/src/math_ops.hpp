#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "linalg.hpp"

namespace iace {

// Unit-norm dense vector in the shared cross-modal space. Construction goes
// through l2_normalize; functions taking Embeddings re-check the norm because
// the struct itself does not forbid direct mutation.
struct Embedding {
    Vec values;

    std::size_t dim() const { return values.size(); }
};

inline constexpr double kUnitNormTol = 1e-6;  // float32 encoder outputs drift about this much

// Scales x to unit L2 norm, preserving direction. Zero or non-finite norm is
// a degenerate-input error, never a silent NaN.
Embedding l2_normalize(const Vec& x);

bool is_unit_norm(const Vec& v, double tol = kUnitNormTol);

// Spherical guidance loss between two unit vectors:
//     L = 2 * [ arcsin( ||t - v|| / 2 ) ]^2
// Half-chord is clamped into [0, 1] before arcsin so float drift on
// near-antipodal pairs cannot produce NaN. Range is [0, pi^2/2].
double spherical_loss(const Embedding& t, const Embedding& v);

// dL/dv of spherical_loss. Zero vector at t == v (the minimum); clamped away
// from the arcsin'(1) pole so antipodal inputs yield a finite direction.
Vec spherical_loss_grad(const Embedding& t, const Embedding& v);

// Max-subtracted softmax.
Vec softmax(const Vec& logits);
// log(softmax(logits)[idx]) computed stably.
double log_softmax_at(const Vec& logits, std::size_t idx);

// Multi-head self-attention parameters. Every per-head projection maps the
// token feature dimension to d_k; the output projection maps the
// concatenated heads back to the model dimension.
struct AttentionParams {
    std::size_t heads = 1;
    std::size_t d_k = 1;
    std::vector<Matrix> w_query;  // heads x (model_dim x d_k)
    std::vector<Matrix> w_key;
    std::vector<Matrix> w_value;
    Matrix w_out;  // (heads * d_k) x model_dim
};

AttentionParams seeded_attention_params(std::size_t model_dim, std::size_t heads, std::size_t d_k,
                                        std::uint64_t seed);

// SA(F) = concat_j( softmax(F Wq_j (F Wk_j)^T / sqrt(d_k)) F Wv_j ) W.
// tokens: n x model_dim, one row per token/region. Output has the same row
// count and is permutation-equivariant in the rows.
Matrix multi_head_self_attention(const Matrix& tokens, const AttentionParams& params);

}  // namespace iace
