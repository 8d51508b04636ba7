#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "math_ops.hpp"

namespace iace {

enum class Modality { text, image };

// Description of one encoder in the shared cross-modal space. Text and image
// encoders must agree on embed_dim for the spherical loss and late fusion to
// be well-defined.
struct EncoderSpec {
    Modality modality = Modality::text;
    std::size_t embed_dim = 512;
    std::string identifier = "toy";
    bool deterministic = true;
    std::uint64_t seed = 0;
    std::size_t vocab_size = 8192;
    std::size_t max_seq_len = 126;
};

struct TokenSequence {
    std::vector<std::uint32_t> tokens;

    std::size_t length() const { return tokens.size(); }
};

// Whitespace split + ASCII lowercase + FNV-1a hash bucketing into
// [0, vocab_size). Sequences longer than max_seq_len are truncated.
TokenSequence tokenize(const std::string& text, const EncoderSpec& spec);

// Deterministic desk-scale text encoder: embedding lookup, one self-attention
// layer, mean pool, l2 normalize. All parameters derive from spec.seed, so
// identical specs reproduce identical embeddings across process restarts.
class ToyTextEncoder {
public:
    explicit ToyTextEncoder(const EncoderSpec& spec);

    Embedding encode(const TokenSequence& seq) const;
    Embedding encode_text(const std::string& text) const;

    // Unit-normalized embedding-table row; the cross-modal position of a
    // single token, used for voken assignment.
    Embedding token_embedding(std::uint32_t token_id) const;

    const EncoderSpec& spec() const { return spec_; }

private:
    EncoderSpec spec_;
    Matrix embedding_table_;  // vocab_size x embed_dim
    AttentionParams attention_;
};

// Desk-scale image "encoder": the payload already lives in the shared
// embedding space, so encoding is dimension-checked normalization.
Embedding encode_image(const Vec& latent_or_pixels, const EncoderSpec& spec);

// Adapter for an external encoder executable: UTF-8 text (or an image file
// path) on stdin, a JSON array of embed_dim floats on stdout.
class SubprocessEncoderAdapter {
public:
    SubprocessEncoderAdapter(std::string command, EncoderSpec spec);

    Embedding encode(const std::string& input) const;

private:
    std::string command_;
    EncoderSpec spec_;
};

// Adapter for an external encoder endpoint: POST the text as a plain body,
// expect a JSON array of embed_dim floats back.
class HttpEncoderAdapter {
public:
    HttpEncoderAdapter(std::string host, int port, std::string path, EncoderSpec spec);

    Embedding encode(const std::string& input) const;

private:
    std::string host_;
    int port_;
    std::string path_;
    EncoderSpec spec_;
};

}  // namespace iace
