#include "encoders.hpp"

#include <array>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>

#include <unistd.h>

#include <httplib.h>
#include <json.hpp>

#include "errors.hpp"
#include "rng.hpp"

namespace iace {

TokenSequence tokenize(const std::string& text, const EncoderSpec& spec) {
    if (spec.vocab_size == 0) throw_invalid("tokenize: vocab_size must be positive");
    TokenSequence seq;
    std::string word;
    auto flush = [&] {
        if (word.empty()) return;
        if (seq.tokens.size() < spec.max_seq_len) {
            seq.tokens.push_back(static_cast<std::uint32_t>(fnv1a64(word) % spec.vocab_size));
        }
        word.clear();
    };
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            flush();
        } else {
            word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        }
    }
    flush();
    return seq;
}

ToyTextEncoder::ToyTextEncoder(const EncoderSpec& spec) : spec_(spec) {
    if (spec.modality != Modality::text) throw_invalid("ToyTextEncoder: spec.modality must be text");
    if (spec.embed_dim < 2) throw_invalid("ToyTextEncoder: embed_dim must be >= 2");
    Rng rng(derive_seed(spec.seed, "text-encoder-emb:" + spec.identifier));
    embedding_table_ = Matrix(spec.vocab_size, spec.embed_dim);
    const double scale = 1.0 / std::sqrt(static_cast<double>(spec.embed_dim));
    for (auto& x : embedding_table_.data) x = scale * rng.next_normal();

    const std::size_t heads = 2;
    const std::size_t d_k = std::max<std::size_t>(1, spec.embed_dim / heads);
    attention_ = seeded_attention_params(spec.embed_dim, heads, d_k,
                                         derive_seed(spec.seed, "text-encoder-attn:" + spec.identifier));
}

Embedding ToyTextEncoder::encode(const TokenSequence& seq) const {
    if (seq.tokens.empty()) throw_invalid("encode_text: empty token sequence");
    if (seq.tokens.size() > spec_.max_seq_len) throw_invalid("encode_text: sequence exceeds max length");
    Matrix rows(seq.tokens.size(), spec_.embed_dim);
    for (std::size_t i = 0; i < seq.tokens.size(); ++i) {
        const std::uint32_t id = seq.tokens[i];
        if (id >= spec_.vocab_size) throw_invalid("encode_text: unknown token id " + std::to_string(id));
        for (std::size_t c = 0; c < spec_.embed_dim; ++c) rows.at(i, c) = embedding_table_.at(id, c);
    }
    const Matrix attended = multi_head_self_attention(rows, attention_);
    Vec pooled(spec_.embed_dim, 0.0);
    for (std::size_t i = 0; i < attended.rows; ++i) {
        for (std::size_t c = 0; c < spec_.embed_dim; ++c) pooled[c] += attended.at(i, c);
    }
    for (double& x : pooled) x /= static_cast<double>(attended.rows);
    return l2_normalize(pooled);
}

Embedding ToyTextEncoder::encode_text(const std::string& text) const {
    return encode(tokenize(text, spec_));
}

Embedding ToyTextEncoder::token_embedding(std::uint32_t token_id) const {
    if (token_id >= spec_.vocab_size) throw_invalid("token_embedding: unknown token id");
    Vec row(spec_.embed_dim);
    for (std::size_t c = 0; c < spec_.embed_dim; ++c) row[c] = embedding_table_.at(token_id, c);
    return l2_normalize(row);
}

Embedding encode_image(const Vec& latent_or_pixels, const EncoderSpec& spec) {
    if (spec.modality != Modality::image) throw_invalid("encode_image: spec.modality must be image");
    if (latent_or_pixels.size() != spec.embed_dim) {
        throw_invalid("encode_image: payload dimension " + std::to_string(latent_or_pixels.size()) +
                      " != embed_dim " + std::to_string(spec.embed_dim));
    }
    return l2_normalize(latent_or_pixels);
}

namespace {

Embedding parse_adapter_reply(const std::string& body, const EncoderSpec& spec, const std::string& origin) {
    nlohmann::json parsed;
    try {
        parsed = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
        throw IaceError(ErrorCode::parse, origin + ": reply is not valid JSON: " + e.what());
    }
    if (!parsed.is_array()) throw_parse(origin + ": reply must be a JSON array of floats");
    if (parsed.size() != spec.embed_dim) {
        throw_parse(origin + ": reply length " + std::to_string(parsed.size()) + " != embed_dim " +
                    std::to_string(spec.embed_dim));
    }
    Vec values;
    values.reserve(parsed.size());
    for (const auto& x : parsed) {
        if (!x.is_number()) throw_parse(origin + ": reply array must contain only numbers");
        values.push_back(x.get<double>());
    }
    return l2_normalize(values);
}

}  // namespace

SubprocessEncoderAdapter::SubprocessEncoderAdapter(std::string command, EncoderSpec spec)
    : command_(std::move(command)), spec_(std::move(spec)) {
    if (command_.empty()) throw_invalid("SubprocessEncoderAdapter: empty command");
}

Embedding SubprocessEncoderAdapter::encode(const std::string& input) const {
    // Text reaches the child's stdin through a temp file so the command line
    // never needs quoting.
    namespace fs = std::filesystem;
    static std::atomic<std::uint64_t> counter{0};
    const fs::path tmp = fs::temp_directory_path() /
                         ("iace-adapter-" + std::to_string(::getpid()) + "-" +
                          std::to_string(counter.fetch_add(1)) + ".txt");
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw_io("subprocess adapter: cannot write " + tmp.string());
        out << input;
    }
    const std::string cmd = command_ + " < " + tmp.string();
    std::string body;
    FILE* pipe = ::popen(cmd.c_str(), "r");
    if (!pipe) {
        fs::remove(tmp);
        throw_io("subprocess adapter: failed to launch: " + command_);
    }
    std::array<char, 4096> buf;
    std::size_t got = 0;
    while ((got = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) {
        body.append(buf.data(), got);
    }
    const int status = ::pclose(pipe);
    fs::remove(tmp);
    if (status != 0) {
        throw_io("subprocess adapter: '" + command_ + "' exited with status " + std::to_string(status));
    }
    return parse_adapter_reply(body, spec_, "subprocess adapter '" + command_ + "'");
}

HttpEncoderAdapter::HttpEncoderAdapter(std::string host, int port, std::string path, EncoderSpec spec)
    : host_(std::move(host)), port_(port), path_(std::move(path)), spec_(std::move(spec)) {}

Embedding HttpEncoderAdapter::encode(const std::string& input) const {
    httplib::Client client(host_, port_);
    client.set_read_timeout(30, 0);
    auto res = client.Post(path_, input, "text/plain; charset=utf-8");
    if (!res) throw_io("http adapter: request to " + host_ + path_ + " failed");
    if (res->status != 200) {
        throw_io("http adapter: endpoint returned status " + std::to_string(res->status));
    }
    return parse_adapter_reply(res->body, spec_, "http adapter");
}

}  // namespace iace
