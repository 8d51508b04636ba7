#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "data.hpp"
#include "encoders.hpp"
#include "fusion.hpp"
#include "imagination.hpp"
#include "metrics.hpp"
#include "objectives.hpp"

namespace iace {

// Adam with decoupled weight decay. Parameters are attached as (value, grad)
// matrix pairs; anything not attached is untouched, which is how the lambda
// boundary cases keep unused branches bit-identical to their initialization.
class AdamW {
public:
    AdamW(double lr, double weight_decay)
        : lr_(lr), weight_decay_(weight_decay) {}

    void attach(Matrix* param, Matrix* grad);
    void attach_all(const ParamRefs& params, const ParamRefs& grads);
    void step();
    std::size_t attached() const { return slots_.size(); }

private:
    struct Slot {
        Matrix* p;
        Matrix* g;
        Vec m;
        Vec v;
    };
    double lr_;
    double weight_decay_;
    double beta1_ = 0.9;
    double beta2_ = 0.999;
    double eps_ = 1e-8;
    std::size_t t_ = 0;
    std::vector<Slot> slots_;
};

struct TrainConfig {
    std::string stage = "finetune";  // finetune | pretrain
    std::size_t epochs = 3;
    std::size_t batch_size = 32;
    double lr = 1e-4;
    double weight_decay = 0.01;
    std::uint64_t seed = 0;
    std::size_t patience = 0;  // early stopping, 0 = off
    LossConfig loss;
    FusionVariant variant = FusionVariant::bidirectional_vt;
    double dropout = 0.1;
    std::size_t fusion_hidden = 512;
    std::size_t fusion_out = 128;
    double mask_prob = 0.15;  // pretraining only

    void validate() const;
    static TrainConfig finetune_defaults(TaskId task);
    static TrainConfig pretrain_defaults();
};

struct EpochLog {
    std::size_t epoch = 0;
    std::map<std::string, double> losses;       // finetune: imagine/lang/joint
    std::map<std::string, double> dev_metrics;  // per-task metric map
};

struct RunReport {
    std::string stage;
    std::string task;
    std::string variant;
    double lambda = 0.5;
    std::uint64_t seed = 0;
    std::vector<EpochLog> epochs;
    std::size_t best_epoch = 0;
    std::map<std::string, double> initial_metrics;  // pretraining held-out baseline
    std::map<std::string, double> final_metrics;
    std::string config_digest;
    std::string subset_manifest_digest;

    std::string to_json() const;
    std::string digest() const;  // sha256 of to_json
};

// One example with every embedding the variants can ask for. Single-sentence
// tasks leave the pair slots empty; multiple-choice tasks carry one visual and
// textual embedding per candidate.
struct PreparedExample {
    std::string example_id;
    double label = 0.0;
    Vec t1, i1;
    Vec t2, i2;                        // empty on single-sentence tasks
    std::vector<Vec> cand_t2, cand_i2; // multiple-choice candidates
    Vec lang_features;                 // concat(t1, t2-or-t1)
    std::vector<Vec> cand_lang;        // per-candidate text features
};

// Encodes sentences and resolves imaginations from the cache. Missing cache
// entries are a hard precondition failure listing every absent prompt hash.
std::vector<PreparedExample> prepare_examples(const std::vector<TextExample>& examples,
                                              TaskId task, const ToyTextEncoder& encoder,
                                              const ImaginationCache& cache,
                                              const GenerationConfig& gen_cfg);

struct FinetuneModel {
    FusionVariant variant = FusionVariant::bidirectional_vt;
    FusionParams fuse;
    ClassifierHead imagine_head;  // fusion_out -> K (1 for regression / multiple choice)
    ClassifierHead lang_head;     // 2 * embed_dim -> K

    ParamRefs param_refs();
    ConstParamRefs param_refs() const;
    static FinetuneModel seeded(TaskId task, std::size_t embed_dim, const TrainConfig& cfg);
};

RunReport finetune(const std::vector<PreparedExample>& train,
                   const std::vector<PreparedExample>& dev, TaskId task, const TrainConfig& cfg,
                   FinetuneModel& model);

// Metric map over the fused (imagination) pathway.
std::map<std::string, double> evaluate_model(const FinetuneModel& model,
                                             const std::vector<PreparedExample>& dev, TaskId task);

// Nearest bank image for every vocabulary id, using the frozen encoder's
// token-embedding rows.
std::vector<std::size_t> voken_table(const ToyTextEncoder& encoder,
                                     const std::vector<Embedding>& image_bank);

// Deterministic per-epoch masking: token kept/masked by an epoch-seeded
// stream, at least one masked slot per sequence.
MaskedBatch build_masked_batch(const std::vector<std::vector<std::uint32_t>>& sequences,
                               const std::vector<std::size_t>& vokens, double mask_prob,
                               std::uint64_t seed, const std::string& label);

RunReport pretrain(const std::vector<std::vector<std::uint32_t>>& train_corpus,
                   const std::vector<std::vector<std::uint32_t>>& heldout_corpus,
                   const std::vector<std::size_t>& voken_map, PretrainModel& model,
                   const TrainConfig& cfg);

}  // namespace iace
