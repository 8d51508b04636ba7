#include "imagination.hpp"

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include <json.hpp>

#include "errors.hpp"
#include "rng.hpp"
#include "sha256.hpp"

namespace iace {

using nlohmann::json;
namespace fs = std::filesystem;

void GenerationConfig::validate() const {
    if (steps < 1) throw_invalid("GenerationConfig: steps must be >= 1");
    if (image_size != 64 && image_size != 128 && image_size != 256) {
        throw_invalid("GenerationConfig: image_size must be 64, 128 or 256, got " +
                      std::to_string(image_size));
    }
    if (!(learning_rate > 0.0)) throw_invalid("GenerationConfig: learning_rate must be positive");
}

std::string GenerationConfig::canonical_json() const {
    json j;
    j["backtracking"] = backtracking;
    j["image_size"] = image_size;
    j["learning_rate"] = learning_rate;
    j["seed"] = seed;
    j["steps"] = steps;
    return j.dump();  // keys stay sorted, doubles round-trip
}

std::string GenerationConfig::digest() const {
    return sha256_hex(canonical_json()).substr(0, 16);
}

std::string normalize_prompt(const std::string& prompt) {
    std::string out;
    out.reserve(prompt.size());
    bool pending_space = false;
    for (char c : prompt) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            pending_space = !out.empty();
        } else {
            if (pending_space) out.push_back(' ');
            pending_space = false;
            out.push_back(c);
        }
    }
    return out;
}

std::string prompt_hash(const std::string& prompt) {
    return sha256_hex(normalize_prompt(prompt));
}

static json record_to_json_obj(const ImaginationRecord& rec, bool inline_latent) {
    json j;
    j["prompt_hash"] = rec.prompt_hash;
    j["prompt"] = rec.prompt;
    j["embedding"] = rec.embedding.values;
    if (inline_latent) {
        j["latent"] = rec.latent;
    } else {
        j["latent_ref"] = rec.latent_ref;
    }
    j["loss_trace"] = rec.loss_trace;
    j["config"] = json::parse(rec.config.canonical_json());
    return j;
}

std::string ImaginationRecord::to_json() const {
    return record_to_json_obj(*this, latent_ref.empty()).dump();
}

ImaginationRecord ImaginationRecord::from_json(const std::string& text, const std::string& origin) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw_integrity("cache entry corrupt: " + origin + ": " + e.what());
    }
    ImaginationRecord rec;
    try {
        rec.prompt_hash = j.at("prompt_hash").get<std::string>();
        rec.prompt = j.at("prompt").get<std::string>();
        rec.embedding.values = j.at("embedding").get<Vec>();
        if (j.contains("latent")) {
            rec.latent = j.at("latent").get<Vec>();
        } else {
            rec.latent_ref = j.at("latent_ref").get<std::string>();
        }
        rec.loss_trace = j.at("loss_trace").get<std::vector<double>>();
        const json& c = j.at("config");
        rec.config.steps = c.at("steps").get<std::size_t>();
        rec.config.image_size = c.at("image_size").get<std::size_t>();
        rec.config.learning_rate = c.at("learning_rate").get<double>();
        rec.config.seed = c.at("seed").get<std::uint64_t>();
        rec.config.backtracking = c.at("backtracking").get<bool>();
    } catch (const json::exception& e) {
        throw_integrity("cache entry corrupt: " + origin + ": " + e.what());
    }
    if (rec.prompt_hash != iace::prompt_hash(rec.prompt)) {
        throw_integrity("cache entry corrupt: " + origin + ": prompt_hash does not match prompt");
    }
    if (rec.loss_trace.empty()) {
        throw_integrity("cache entry corrupt: " + origin + ": empty loss_trace");
    }
    return rec;
}

ImaginationRecord optimize_latent(const Embedding& target, const std::string& normalized_prompt,
                                  const GenerationConfig& cfg, const Vec* init) {
    cfg.validate();
    if (!is_unit_norm(target.values)) throw_invalid("optimize_latent: target embedding must be unit-norm");
    if (normalized_prompt.empty()) throw_invalid("optimize_latent: prompt empty after normalization");

    ImaginationRecord rec;
    rec.prompt = normalized_prompt;
    rec.prompt_hash = sha256_hex(normalized_prompt);
    rec.config = cfg;

    const std::size_t dim = target.dim();
    Embedding v;
    if (init != nullptr) {
        if (init->size() != dim) throw_invalid("optimize_latent: init latent dimension mismatch");
        v = l2_normalize(*init);
    } else {
        Rng rng(derive_seed(cfg.seed, "latent:" + rec.prompt_hash));
        v = l2_normalize(rng.normal_vector(dim));
    }

    double cur = spherical_loss(target, v);
    rec.loss_trace.push_back(cur);
    for (std::size_t step = 1; step < cfg.steps; ++step) {
        if (cur == 0.0) break;
        Vec g = spherical_loss_grad(target, v);
        if (norm2(g) == 0.0) break;
        if (cfg.backtracking) {
            double eta = cfg.learning_rate;
            bool improved = false;
            while (eta >= 1e-12) {
                Vec cand = v.values;
                axpy(-eta, g, cand);
                Embedding vc = l2_normalize(cand);
                const double lc = spherical_loss(target, vc);
                if (lc < cur) {
                    v = std::move(vc);
                    cur = lc;
                    improved = true;
                    break;
                }
                eta *= 0.5;
            }
            if (!improved) break;
        } else {
            Vec cand = v.values;
            axpy(-cfg.learning_rate, g, cand);
            v = l2_normalize(cand);
            cur = spherical_loss(target, v);
        }
        rec.loss_trace.push_back(cur);
    }

    rec.embedding = v;
    rec.latent = v.values;
    return rec;
}

ImaginationRecord generate_imagination(const std::string& prompt, const ToyTextEncoder& encoder,
                                       const GenerationConfig& cfg) {
    const std::string normalized = normalize_prompt(prompt);
    if (normalized.empty()) throw_invalid("generate_imagination: prompt empty after normalization");
    return optimize_latent(encoder.encode_text(normalized), normalized, cfg);
}

ImaginationRecord generate_imagination(const std::string& prompt, const EncoderSpec& target_encoder,
                                       const GenerationConfig& cfg) {
    return generate_imagination(prompt, ToyTextEncoder(target_encoder), cfg);
}

ImaginationCache::ImaginationCache(fs::path root, bool latent_sidecar)
    : root_(std::move(root)), latent_sidecar_(latent_sidecar) {
    std::error_code ec;
    fs::create_directories(root_, ec);
    if (ec) throw_io("cache: cannot create root " + root_.string() + ": " + ec.message());
}

fs::path ImaginationCache::entry_path(const std::string& hash, const std::string& config_digest) const {
    if (hash.size() < 2) throw_invalid("cache: prompt hash too short: " + hash);
    return root_ / hash.substr(0, 2) / (hash + "." + config_digest + ".json");
}

static void write_atomic(const fs::path& target, const std::string& content) {
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw_io("cache: cannot open temp file " + tmp.string());
        out << content;
        out.flush();
        if (!out) throw_io("cache: write failed for " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) throw_io("cache: rename " + tmp.string() + " -> " + target.string() + " failed: " + ec.message());
}

static std::string latent_sidecar_bytes(const Vec& latent) {
    std::string buf;
    buf.reserve(8 + 4 * latent.size());
    const std::uint64_t n = latent.size();
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((n >> (8 * i)) & 0xff));
    for (double x : latent) {
        const float f = static_cast<float>(x);
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
    }
    return buf;
}

static Vec read_latent_sidecar(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw_integrity("cache entry corrupt: missing latent sidecar " + path.string());
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (buf.size() < 8) throw_integrity("cache entry corrupt: short latent sidecar " + path.string());
    std::uint64_t n = 0;
    for (int i = 0; i < 8; ++i) n |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[i])) << (8 * i);
    if (buf.size() != 8 + 4 * n) {
        throw_integrity("cache entry corrupt: latent sidecar size mismatch " + path.string());
    }
    Vec latent(n);
    for (std::uint64_t j = 0; j < n; ++j) {
        std::uint32_t bits = 0;
        for (int i = 0; i < 4; ++i) {
            bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[8 + 4 * j + i])) << (8 * i);
        }
        float f;
        std::memcpy(&f, &bits, 4);
        latent[j] = static_cast<double>(f);
    }
    return latent;
}

fs::path ImaginationCache::put(const ImaginationRecord& rec) {
    if (rec.prompt_hash != prompt_hash(rec.prompt)) {
        throw_invalid("cache: record prompt_hash does not match its prompt");
    }
    if (rec.loss_trace.empty()) throw_invalid("cache: record has empty loss_trace");
    if (!is_unit_norm(rec.embedding.values)) throw_invalid("cache: record embedding must be unit-norm");

    const std::string digest = rec.config.digest();
    const fs::path path = entry_path(rec.prompt_hash, digest);

    if (fs::exists(path)) {
        std::ifstream in(path, std::ios::binary);
        std::string existing((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        ImaginationRecord prev = ImaginationRecord::from_json(existing, path.string());
        if (prev.prompt != rec.prompt) {
            throw_integrity("cache: hash collision at " + path.string() + ": stored prompt differs");
        }
        return path;  // idempotent: entry and manifest line already present
    }

    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw_io("cache: cannot create " + path.parent_path().string() + ": " + ec.message());

    ImaginationRecord stored = rec;
    if (latent_sidecar_) {
        const std::string sidecar_name = rec.prompt_hash + "." + digest + ".latent.bin";
        write_atomic(path.parent_path() / sidecar_name, latent_sidecar_bytes(rec.latent));
        stored.latent_ref = sidecar_name;
    } else {
        stored.latent_ref.clear();
    }
    write_atomic(path, stored.to_json() + "\n");

    json line;
    line["prompt_hash"] = rec.prompt_hash;
    line["config_digest"] = digest;
    line["final_loss"] = rec.final_loss();
    line["steps_run"] = rec.steps_run();
    line["path"] = fs::relative(path, root_).generic_string();
    std::ofstream manifest(manifest_path(), std::ios::app);
    if (!manifest) throw_io("cache: cannot append to " + manifest_path().string());
    manifest << line.dump() << "\n";
    return path;
}

std::optional<ImaginationRecord> ImaginationCache::get_by_key(const std::string& hash,
                                                              const std::string& config_digest) const {
    const fs::path path = entry_path(hash, config_digest);
    if (!fs::exists(path)) return std::nullopt;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw_io("cache: cannot read " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    ImaginationRecord rec = ImaginationRecord::from_json(text, path.string());
    if (rec.prompt_hash != hash) {
        throw_integrity("cache entry corrupt: " + path.string() + ": hash does not match filename");
    }
    if (!rec.latent_ref.empty()) {
        rec.latent = read_latent_sidecar(path.parent_path() / rec.latent_ref);
    }
    return rec;
}

std::optional<ImaginationRecord> ImaginationCache::get(const std::string& prompt,
                                                       const GenerationConfig& cfg) const {
    return get_by_key(prompt_hash(prompt), cfg.digest());
}

bool ImaginationCache::contains(const std::string& prompt, const GenerationConfig& cfg) const {
    return fs::exists(entry_path(prompt_hash(prompt), cfg.digest()));
}

std::size_t ImaginationCache::manifest_lines() const {
    std::ifstream in(manifest_path());
    if (!in) return 0;
    std::size_t count = 0;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) ++count;
    }
    return count;
}

}  // namespace iace
