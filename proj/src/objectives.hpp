#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "checkpoint.hpp"
#include "linalg.hpp"
#include "math_ops.hpp"

namespace iace {

enum class TaskType { classification, regression };

struct LossConfig {
    double lambda = 0.5;   // joint balance: lambda * imagine + (1 - lambda) * lang
    double lambda1 = 1.0;  // masked-LM term weight
    double lambda2 = 1.0;  // voken-classification term weight
    TaskType task_type = TaskType::classification;
    std::size_t num_classes = 2;
    bool batch_sum = false;  // literal sum over the batch instead of the mean

    void validate() const;
};

// Affine map features -> K logits (classification) or one value (regression).
struct ClassifierHead {
    std::size_t in_dim = 0;
    std::size_t out_dim = 0;
    Matrix W;  // out_dim x in_dim
    Matrix b;  // 1 x out_dim

    void validate() const;
    Vec logits(const Vec& features) const;
    ParamRefs param_refs(const std::string& prefix);
    ConstParamRefs param_refs(const std::string& prefix) const;
    static ClassifierHead zeros(std::size_t in, std::size_t out);
    static ClassifierHead seeded(std::size_t in, std::size_t out, std::uint64_t seed,
                                 const std::string& label);
};

// Cross-entropy -log p_y (classification) or squared error (regression) for
// one example.
double imagine_loss(const Vec& fused, double y, const ClassifierHead& head, const LossConfig& cfg);
// Same functional form on the text-only pathway.
double lang_loss(const Vec& text_features, double y, const ClassifierHead& head,
                 const LossConfig& cfg);

// Batch loss, mean by default, sum with cfg.batch_sum.
double head_batch_loss(const std::vector<Vec>& features, const std::vector<double>& labels,
                       const ClassifierHead& head, const LossConfig& cfg);
// Accumulates head gradients and writes per-sample feature gradients.
double head_batch_loss_backward(const std::vector<Vec>& features, const std::vector<double>& labels,
                                const ClassifierHead& head, const LossConfig& cfg,
                                ClassifierHead& grads, std::vector<Vec>& dfeatures);

double joint_loss(double imagine, double lang, const LossConfig& cfg);

// One sequence in a voken-pretraining batch. voken_targets pairs with the
// masked positions one to one.
struct MaskedSequence {
    std::vector<std::uint32_t> tokens;
    std::vector<std::size_t> masked_positions;
    std::vector<std::size_t> voken_targets;
};
using MaskedBatch = std::vector<MaskedSequence>;

// Desk-scale pretraining network: trainable token + position tables; the
// context for a masked slot is the mean of unmasked token embeddings plus the
// slot's position row; two affine heads (vocabulary and voken bank) on top.
struct PretrainModel {
    std::size_t vocab_size = 0;
    std::size_t hidden_dim = 0;
    std::size_t bank_size = 0;
    std::size_t max_positions = 0;

    Matrix token_emb;  // vocab_size x hidden_dim
    Matrix pos_emb;    // max_positions x hidden_dim
    Matrix mlm_W;      // vocab_size x hidden_dim
    Matrix mlm_b;      // 1 x vocab_size
    Matrix voken_W;    // bank_size x hidden_dim
    Matrix voken_b;    // 1 x bank_size

    void validate() const;
    Vec context(const MaskedSequence& seq, std::size_t position) const;
    ParamRefs param_refs();
    ConstParamRefs param_refs() const;
    static PretrainModel zeros(std::size_t vocab, std::size_t hidden, std::size_t bank,
                               std::size_t max_pos);
    static PretrainModel seeded(std::size_t vocab, std::size_t hidden, std::size_t bank,
                                std::size_t max_pos, std::uint64_t seed);
};

// Sum over masked positions of -lambda1 log q(token) - lambda2 log p(voken).
double pretrain_loss(const MaskedBatch& batch, const PretrainModel& model, const LossConfig& cfg);
double pretrain_loss_backward(const MaskedBatch& batch, const PretrainModel& model,
                              const LossConfig& cfg, PretrainModel& grads);

// Nearest bank image per token under the spherical loss; ties go to the
// lowest index. Uses the dot product, which orders identically on the sphere.
std::vector<std::size_t> assign_vokens(const std::vector<Embedding>& token_embeddings,
                                       const std::vector<Embedding>& image_bank);

}  // namespace iace
