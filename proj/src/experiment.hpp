#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "data.hpp"
#include "encoders.hpp"
#include "imagination.hpp"
#include "trainer.hpp"

namespace iace {

// Whole-experiment configuration. One JSON document, one top-level seed; every
// random stream (sampler, generation, training, image bank) derives from that
// seed through named substreams, so a config digest pins the entire run.
struct ExperimentConfig {
    std::string task = "sst2";
    std::string data_dir = "data";
    std::string cache_root = "cache";
    std::string out_dir = "out";
    std::uint64_t seed = 0;
    double fraction = 1.0;
    bool stratified = true;
    std::size_t workers = 1;

    struct Generation {
        std::size_t steps = 200;
        std::size_t image_size = 128;
        double learning_rate = 0.05;
        bool backtracking = true;
    } generation;

    struct Encoder {
        std::size_t embed_dim = 512;
        std::size_t vocab_size = 8192;
        std::size_t max_seq_len = 126;
    } encoder;

    struct Train {
        std::size_t epochs = 3;
        std::size_t batch_size = 32;
        double lr = 1e-4;
        bool lr_set = false;  // unset -> task default (1e-4 GLUE, 2e-5 SWAG)
        double weight_decay = 0.01;
        double dropout = 0.1;
        std::size_t patience = 0;
        double lambda = 0.5;
        double lambda1 = 1.0;
        double lambda2 = 1.0;
        bool batch_sum = false;
        std::string variant = "bidirectional_vt";
        std::size_t fusion_hidden = 512;
        std::size_t fusion_out = 128;
    } train;

    struct Pretrain {
        std::size_t epochs = 30;
        std::size_t batch_size = 32;
        double lr = 2e-4;
        double weight_decay = 0.01;
        std::size_t patience = 0;
        double mask_prob = 0.15;
        std::size_t hidden_dim = 64;
        std::size_t bank_size = 32;
        double heldout_fraction = 0.1;
        std::string corpus_file = "corpus.txt";
    } pretrain;

    std::string to_json() const;
    static ExperimentConfig from_json(const std::string& text, const std::string& origin);
    static ExperimentConfig load(const std::filesystem::path& file);
    // Dotted-path override, e.g. set_field("train.lambda", "0.5").
    void set_field(const std::string& dotted_key, const std::string& value);
    void validate() const;
    std::string digest() const;  // 16 hex chars over the canonical JSON

    // Derived pieces (seeds come from named substreams of `seed`).
    EncoderSpec encoder_spec() const;
    GenerationConfig generation_config() const;
    TrainConfig train_config() const;
    TrainConfig pretrain_config() const;
    FewShotSpec few_shot_spec() const;
    std::filesystem::path run_dir() const;
};

struct ImagineSummary {
    std::size_t generated = 0;
    std::size_t skipped_cached = 0;
    std::vector<std::pair<std::string, std::string>> failures;  // prompt_hash -> error
    std::string to_json() const;
    std::string summary_line() const;  // "generated=N skipped_cached=M failed=K"
};

ImagineSummary cmd_imagine(const ExperimentConfig& cfg);
RunReport cmd_finetune(const ExperimentConfig& cfg);
RunReport cmd_pretrain(const ExperimentConfig& cfg);
std::map<std::string, double> cmd_evaluate(const ExperimentConfig& cfg);
// Collects finetune reports under out_dir into out_dir/report.csv; returns the
// CSV text.
std::string cmd_report(const ExperimentConfig& cfg);

// Stable JSON summary for the C API / CLI: {"command":..., ...}.
std::string run_command(const ExperimentConfig& cfg, const std::string& command);

}  // namespace iace
