#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "checkpoint.hpp"
#include "linalg.hpp"
#include "rng.hpp"

namespace iace {

enum class FusionVariant {
    bidirectional_vt,
    direction,
    unify,
    textual_only,
    visual_only,
    visual_textual,
};

std::string to_string(FusionVariant v);
FusionVariant fusion_variant_from_string(const std::string& name);

// Late-fusion head: two branch projections (text / visual), ReLU, concat,
// then a two-layer stack [concat_width -> hidden -> out]. The unify variant
// concatenates four projected branches, so its stack input is twice as wide.
struct FusionParams {
    std::size_t embed_dim = 0;
    std::size_t hidden_dim = 0;
    std::size_t out_dim = 0;
    std::size_t branch_count = 2;  // 2 normally, 4 for unify

    Matrix Wt;      // hidden_dim x embed_dim
    Matrix bt;      // 1 x hidden_dim
    Matrix Wv;      // hidden_dim x embed_dim
    Matrix bv;      // 1 x hidden_dim
    Matrix post1W;  // hidden_dim x (branch_count * hidden_dim)
    Matrix post1b;  // 1 x hidden_dim
    Matrix post2W;  // out_dim x hidden_dim
    Matrix post2b;  // 1 x out_dim

    std::size_t concat_width() const { return branch_count * hidden_dim; }
    void validate() const;
    ParamRefs param_refs();
    ConstParamRefs param_refs() const;
    static FusionParams zeros(std::size_t embed, std::size_t hidden, std::size_t out,
                              std::size_t branches = 2);
    // Normal init scaled by 1/sqrt(fan_in) per matrix, zero biases; every
    // matrix draws from its own named substream of `seed`.
    static FusionParams seeded(std::size_t embed, std::size_t hidden, std::size_t out,
                               std::uint64_t seed, std::size_t branches = 2);
};

std::size_t fusion_branch_count(FusionVariant v);

// Intermediates kept by the forward pass so the backward pass can avoid any
// recomputation. `mask` is empty when dropout was off.
struct FuseCache {
    std::vector<Vec> inputs;        // per-branch inputs
    std::vector<bool> text_branch;  // which projection each branch used
    std::vector<Vec> z;             // per-branch pre-ReLU
    Vec x;                          // concatenation of ReLU(z)
    Vec z1;                         // post1 pre-ReLU
    Vec h1;                         // post1 post-ReLU
    Vec h1_dropped;                 // after inverted-dropout scaling
    Vec mask;                       // keep flags, already divided by keep prob
    Vec out;
};

// Inference-mode fuse: [ReLU(Wt a + bt), ReLU(Wv b + bv)] through the post stack.
Vec fuse(const Vec& text_in, const Vec& visual_in, const FusionParams& p);

// Training-capable forward. dropout_rate > 0 with rng != nullptr samples a
// fresh keep mask; otherwise runs deterministically.
Vec fuse_forward(const Vec& text_in, const Vec& visual_in, const FusionParams& p,
                 double dropout_rate, Rng* rng, FuseCache& cache);

// Accumulates parameter gradients into `grads` (same shapes as p) and returns
// per-branch input gradients.
std::vector<Vec> fuse_backward(const Vec& dout, const FusionParams& p, const FuseCache& cache,
                               FusionParams& grads);

struct VariantInputs {
    const Vec* t1 = nullptr;
    const Vec* i1 = nullptr;
    const Vec* t2 = nullptr;  // absent on single-sentence tasks: aliases t1
    const Vec* i2 = nullptr;  // absent on single-sentence tasks: aliases i1
};

struct VariantCache {
    std::vector<FuseCache> branches;  // two for bidirectional_vt, one otherwise
    Vec out;
};

// Variant registry:
//   bidirectional_vt: fuse(t1, i2) + fuse(i1, t2), elementwise sum, shared params
//   direction:        fuse(t1 - i1, t2 - i2)
//   unify:            four-branch concat in order (t1, t2, i1, i2)
//   textual_only:     fuse(t1, t2)
//   visual_only:      fuse(i1, i2)
//   visual_textual:   fuse(i1, t2)
Vec apply_variant(FusionVariant v, const VariantInputs& in, const FusionParams& p);
Vec apply_variant_forward(FusionVariant v, const VariantInputs& in, const FusionParams& p,
                          double dropout_rate, Rng* rng, VariantCache& cache);
void apply_variant_backward(const Vec& dout, FusionVariant v, const FusionParams& p,
                            const VariantCache& cache, FusionParams& grads);

}  // namespace iace
