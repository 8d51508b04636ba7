#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "encoders.hpp"
#include "math_ops.hpp"

namespace iace {

struct GenerationConfig {
    std::size_t steps = 200;
    std::size_t image_size = 128;  // one of 64, 128, 256
    double learning_rate = 0.05;
    std::uint64_t seed = 0;
    bool backtracking = true;

    void validate() const;
    // 16-hex-char prefix of the SHA-256 of the canonical JSON form; part of the cache key.
    std::string digest() const;
    std::string canonical_json() const;
};

struct ImaginationRecord {
    std::string prompt_hash;
    std::string prompt;  // normalized form
    Embedding embedding;
    Vec latent;              // inline latent (embedding-space at desk scale)
    std::string latent_ref;  // sidecar filename when the latent lives outside the JSON
    std::vector<double> loss_trace;
    GenerationConfig config;

    double final_loss() const { return loss_trace.empty() ? 0.0 : loss_trace.back(); }
    std::size_t steps_run() const { return loss_trace.size(); }
    std::string to_json() const;
    static ImaginationRecord from_json(const std::string& text, const std::string& origin);
};

// Trim plus collapse of ASCII whitespace runs; NFC is treated as identity.
std::string normalize_prompt(const std::string& prompt);
std::string prompt_hash(const std::string& prompt);

// Gradient descent on a unit-norm latent toward `target`. trace[0] is the initial
// loss and each accepted update appends one entry, so the trace never exceeds
// cfg.steps entries. Stops early on exact convergence, a zero gradient, or (with
// backtracking) when halving the step down to 1e-12 finds no strict improvement.
ImaginationRecord optimize_latent(const Embedding& target, const std::string& normalized_prompt,
                                  const GenerationConfig& cfg, const Vec* init = nullptr);

ImaginationRecord generate_imagination(const std::string& prompt, const EncoderSpec& target_encoder,
                                       const GenerationConfig& cfg);
ImaginationRecord generate_imagination(const std::string& prompt, const ToyTextEncoder& encoder,
                                       const GenerationConfig& cfg);

// Content-addressed store: <root>/<hash[0:2]>/<hash>.<config_digest>.json plus an
// append-only manifest.jsonl. Writes go through a temp file and an atomic rename.
class ImaginationCache {
public:
    explicit ImaginationCache(std::filesystem::path root, bool latent_sidecar = false);

    // Returns the stored path. Re-putting an identical record is a no-op; the same
    // key with a different prompt is a hard integrity error.
    std::filesystem::path put(const ImaginationRecord& rec);
    std::optional<ImaginationRecord> get(const std::string& prompt, const GenerationConfig& cfg) const;
    std::optional<ImaginationRecord> get_by_key(const std::string& hash, const std::string& config_digest) const;
    bool contains(const std::string& prompt, const GenerationConfig& cfg) const;

    const std::filesystem::path& root() const { return root_; }
    std::filesystem::path manifest_path() const { return root_ / "manifest.jsonl"; }
    std::filesystem::path entry_path(const std::string& hash, const std::string& config_digest) const;
    std::size_t manifest_lines() const;

private:
    std::filesystem::path root_;
    bool latent_sidecar_;
};

}  // namespace iace
