#include "objectives.hpp"

#include <cmath>

#include "errors.hpp"
#include "rng.hpp"

namespace iace {

void LossConfig::validate() const {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw_invalid("LossConfig: lambda must be in [0, 1]");
    if (lambda1 < 0.0 || lambda2 < 0.0) throw_invalid("LossConfig: lambda1/lambda2 must be nonnegative");
    if (task_type == TaskType::classification && num_classes < 2) {
        throw_invalid("LossConfig: classification needs num_classes >= 2");
    }
}

void ClassifierHead::validate() const {
    if (in_dim == 0 || out_dim == 0) throw_invalid("ClassifierHead: dimensions must be positive");
    if (W.rows != out_dim || W.cols != in_dim || b.rows != 1 || b.cols != out_dim) {
        throw_invalid("ClassifierHead: parameter shapes inconsistent");
    }
}

Vec ClassifierHead::logits(const Vec& features) const {
    if (features.size() != in_dim) {
        throw_invalid("ClassifierHead: feature dimension " + std::to_string(features.size()) +
                      ", expected " + std::to_string(in_dim));
    }
    Vec z = matvec(W, features);
    for (std::size_t i = 0; i < z.size(); ++i) z[i] += b.data[i];
    return z;
}

ParamRefs ClassifierHead::param_refs(const std::string& prefix) {
    return {{prefix + ".W", &W}, {prefix + ".b", &b}};
}

ConstParamRefs ClassifierHead::param_refs(const std::string& prefix) const {
    return {{prefix + ".W", &W}, {prefix + ".b", &b}};
}

ClassifierHead ClassifierHead::zeros(std::size_t in, std::size_t out) {
    ClassifierHead h;
    h.in_dim = in;
    h.out_dim = out;
    h.W = Matrix(out, in);
    h.b = Matrix(1, out);
    h.validate();
    return h;
}

ClassifierHead ClassifierHead::seeded(std::size_t in, std::size_t out, std::uint64_t seed,
                                      const std::string& label) {
    ClassifierHead h = zeros(in, out);
    Rng rng(derive_seed(seed, "head:" + label));
    const double scale = 1.0 / std::sqrt(static_cast<double>(in));
    for (double& x : h.W.data) x = rng.next_normal() * scale;
    return h;
}

static std::size_t class_label(double y, const LossConfig& cfg, const char* where) {
    const double r = std::nearbyint(y);
    if (std::abs(y - r) > 1e-9 || r < 0.0 || r >= static_cast<double>(cfg.num_classes)) {
        throw_invalid(std::string(where) + ": label " + std::to_string(y) +
                      " outside {0.." + std::to_string(cfg.num_classes - 1) + "}");
    }
    return static_cast<std::size_t>(r);
}

static double example_loss(const Vec& features, double y, const ClassifierHead& head,
                           const LossConfig& cfg, const char* where) {
    cfg.validate();
    head.validate();
    if (cfg.task_type == TaskType::classification) {
        if (head.out_dim != cfg.num_classes) {
            throw_invalid(std::string(where) + ": head emits " + std::to_string(head.out_dim) +
                          " logits for " + std::to_string(cfg.num_classes) + " classes");
        }
        const std::size_t label = class_label(y, cfg, where);
        return -log_softmax_at(head.logits(features), label);
    }
    if (head.out_dim != 1) throw_invalid(std::string(where) + ": regression head must emit 1 value");
    const double pred = head.logits(features)[0];
    const double d = pred - y;
    return d * d;
}

double imagine_loss(const Vec& fused, double y, const ClassifierHead& head, const LossConfig& cfg) {
    return example_loss(fused, y, head, cfg, "imagine_loss");
}

double lang_loss(const Vec& text_features, double y, const ClassifierHead& head,
                 const LossConfig& cfg) {
    return example_loss(text_features, y, head, cfg, "lang_loss");
}

double head_batch_loss(const std::vector<Vec>& features, const std::vector<double>& labels,
                       const ClassifierHead& head, const LossConfig& cfg) {
    if (features.size() != labels.size()) throw_invalid("batch loss: features/labels size mismatch");
    if (features.empty()) throw_invalid("batch loss: empty batch");
    double total = 0.0;
    for (std::size_t i = 0; i < features.size(); ++i) {
        total += example_loss(features[i], labels[i], head, cfg, "batch loss");
    }
    return cfg.batch_sum ? total : total / static_cast<double>(features.size());
}

double head_batch_loss_backward(const std::vector<Vec>& features, const std::vector<double>& labels,
                                const ClassifierHead& head, const LossConfig& cfg,
                                ClassifierHead& grads, std::vector<Vec>& dfeatures) {
    if (features.size() != labels.size()) throw_invalid("batch loss: features/labels size mismatch");
    if (features.empty()) throw_invalid("batch loss: empty batch");
    cfg.validate();
    head.validate();
    const double scale = cfg.batch_sum ? 1.0 : 1.0 / static_cast<double>(features.size());

    double total = 0.0;
    dfeatures.assign(features.size(), Vec());
    for (std::size_t i = 0; i < features.size(); ++i) {
        const Vec z = head.logits(features[i]);
        Vec dz;
        if (cfg.task_type == TaskType::classification) {
            if (head.out_dim != cfg.num_classes) {
                throw_invalid("batch loss: head emits " + std::to_string(head.out_dim) +
                              " logits for " + std::to_string(cfg.num_classes) + " classes");
            }
            const std::size_t label = class_label(labels[i], cfg, "batch loss");
            total += -log_softmax_at(z, label);
            dz = softmax(z);
            dz[label] -= 1.0;
        } else {
            if (head.out_dim != 1) throw_invalid("batch loss: regression head must emit 1 value");
            const double d = z[0] - labels[i];
            total += d * d;
            dz = {2.0 * d};
        }
        for (double& g : dz) g *= scale;
        for (std::size_t k = 0; k < head.out_dim; ++k) grads.b.data[k] += dz[k];
        add_outer(grads.W, dz, features[i]);
        dfeatures[i] = matvec_t(head.W, dz);
    }
    return cfg.batch_sum ? total : total / static_cast<double>(features.size());
}

double joint_loss(double imagine, double lang, const LossConfig& cfg) {
    cfg.validate();
    return cfg.lambda * imagine + (1.0 - cfg.lambda) * lang;
}

void PretrainModel::validate() const {
    if (vocab_size == 0 || hidden_dim == 0 || bank_size == 0 || max_positions == 0) {
        throw_invalid("PretrainModel: dimensions must be positive");
    }
    if (token_emb.rows != vocab_size || token_emb.cols != hidden_dim ||
        pos_emb.rows != max_positions || pos_emb.cols != hidden_dim ||
        mlm_W.rows != vocab_size || mlm_W.cols != hidden_dim || mlm_b.cols != vocab_size ||
        voken_W.rows != bank_size || voken_W.cols != hidden_dim || voken_b.cols != bank_size) {
        throw_invalid("PretrainModel: parameter shapes inconsistent");
    }
}

ParamRefs PretrainModel::param_refs() {
    return {
        {"pretrain.token_emb", &token_emb}, {"pretrain.pos_emb", &pos_emb},
        {"pretrain.mlm.W", &mlm_W},         {"pretrain.mlm.b", &mlm_b},
        {"pretrain.voken.W", &voken_W},     {"pretrain.voken.b", &voken_b},
    };
}

ConstParamRefs PretrainModel::param_refs() const {
    return {
        {"pretrain.token_emb", &token_emb}, {"pretrain.pos_emb", &pos_emb},
        {"pretrain.mlm.W", &mlm_W},         {"pretrain.mlm.b", &mlm_b},
        {"pretrain.voken.W", &voken_W},     {"pretrain.voken.b", &voken_b},
    };
}

PretrainModel PretrainModel::zeros(std::size_t vocab, std::size_t hidden, std::size_t bank,
                                   std::size_t max_pos) {
    PretrainModel m;
    m.vocab_size = vocab;
    m.hidden_dim = hidden;
    m.bank_size = bank;
    m.max_positions = max_pos;
    m.token_emb = Matrix(vocab, hidden);
    m.pos_emb = Matrix(max_pos, hidden);
    m.mlm_W = Matrix(vocab, hidden);
    m.mlm_b = Matrix(1, vocab);
    m.voken_W = Matrix(bank, hidden);
    m.voken_b = Matrix(1, bank);
    m.validate();
    return m;
}

PretrainModel PretrainModel::seeded(std::size_t vocab, std::size_t hidden, std::size_t bank,
                                    std::size_t max_pos, std::uint64_t seed) {
    PretrainModel m = zeros(vocab, hidden, bank, max_pos);
    const double scale = 1.0 / std::sqrt(static_cast<double>(hidden));
    auto fill = [&](Matrix& mat, const char* label) {
        Rng rng(derive_seed(seed, std::string("pretrain:") + label));
        for (double& x : mat.data) x = rng.next_normal() * scale;
    };
    fill(m.token_emb, "token_emb");
    fill(m.pos_emb, "pos_emb");
    fill(m.mlm_W, "mlm.W");
    fill(m.voken_W, "voken.W");
    return m;  // head biases stay zero
}

static void check_sequence(const MaskedSequence& seq, const PretrainModel& model) {
    if (seq.masked_positions.empty()) throw_invalid("pretrain: sequence with empty mask set");
    if (seq.voken_targets.size() != seq.masked_positions.size()) {
        throw_invalid("pretrain: masked position without a voken target");
    }
    if (seq.tokens.size() > model.max_positions) {
        throw_invalid("pretrain: sequence longer than position table (" +
                      std::to_string(seq.tokens.size()) + " > " +
                      std::to_string(model.max_positions) + ")");
    }
    for (std::size_t pos : seq.masked_positions) {
        if (pos >= seq.tokens.size()) throw_invalid("pretrain: masked position out of range");
    }
    for (std::uint32_t tok : seq.tokens) {
        if (tok >= model.vocab_size) throw_invalid("pretrain: token id out of vocabulary");
    }
    for (std::size_t v : seq.voken_targets) {
        if (v >= model.bank_size) throw_invalid("pretrain: voken target out of bank range");
    }
}

static bool is_masked(const MaskedSequence& seq, std::size_t pos) {
    for (std::size_t p : seq.masked_positions) {
        if (p == pos) return true;
    }
    return false;
}

Vec PretrainModel::context(const MaskedSequence& seq, std::size_t position) const {
    Vec h(hidden_dim, 0.0);
    std::size_t unmasked = 0;
    for (std::size_t p = 0; p < seq.tokens.size(); ++p) {
        if (is_masked(seq, p)) continue;
        const double* row = token_emb.row(seq.tokens[p]);
        for (std::size_t i = 0; i < hidden_dim; ++i) h[i] += row[i];
        ++unmasked;
    }
    if (unmasked > 0) {
        for (double& x : h) x /= static_cast<double>(unmasked);
    }
    const double* prow = pos_emb.row(position);
    for (std::size_t i = 0; i < hidden_dim; ++i) h[i] += prow[i];
    return h;
}

double pretrain_loss(const MaskedBatch& batch, const PretrainModel& model, const LossConfig& cfg) {
    cfg.validate();
    model.validate();
    if (batch.empty()) throw_invalid("pretrain: empty batch");
    double total = 0.0;
    for (const MaskedSequence& seq : batch) {
        check_sequence(seq, model);
        for (std::size_t k = 0; k < seq.masked_positions.size(); ++k) {
            const std::size_t pos = seq.masked_positions[k];
            const Vec h = model.context(seq, pos);
            if (cfg.lambda1 > 0.0) {
                Vec z = matvec(model.mlm_W, h);
                for (std::size_t i = 0; i < z.size(); ++i) z[i] += model.mlm_b.data[i];
                total += -cfg.lambda1 * log_softmax_at(z, seq.tokens[pos]);
            }
            if (cfg.lambda2 > 0.0) {
                Vec z = matvec(model.voken_W, h);
                for (std::size_t i = 0; i < z.size(); ++i) z[i] += model.voken_b.data[i];
                total += -cfg.lambda2 * log_softmax_at(z, seq.voken_targets[k]);
            }
        }
    }
    return total;
}

double pretrain_loss_backward(const MaskedBatch& batch, const PretrainModel& model,
                              const LossConfig& cfg, PretrainModel& grads) {
    cfg.validate();
    model.validate();
    if (batch.empty()) throw_invalid("pretrain: empty batch");
    double total = 0.0;
    for (const MaskedSequence& seq : batch) {
        check_sequence(seq, model);
        // unmasked token list reused across this sequence's masked slots
        std::vector<std::size_t> unmasked;
        for (std::size_t p = 0; p < seq.tokens.size(); ++p) {
            if (!is_masked(seq, p)) unmasked.push_back(p);
        }
        for (std::size_t k = 0; k < seq.masked_positions.size(); ++k) {
            const std::size_t pos = seq.masked_positions[k];
            const Vec h = model.context(seq, pos);
            Vec dh(model.hidden_dim, 0.0);
            if (cfg.lambda1 > 0.0) {
                Vec z = matvec(model.mlm_W, h);
                for (std::size_t i = 0; i < z.size(); ++i) z[i] += model.mlm_b.data[i];
                total += -cfg.lambda1 * log_softmax_at(z, seq.tokens[pos]);
                Vec dz = softmax(z);
                dz[seq.tokens[pos]] -= 1.0;
                for (double& g : dz) g *= cfg.lambda1;
                for (std::size_t i = 0; i < dz.size(); ++i) grads.mlm_b.data[i] += dz[i];
                add_outer(grads.mlm_W, dz, h);
                Vec back = matvec_t(model.mlm_W, dz);
                axpy(1.0, back, dh);
            }
            if (cfg.lambda2 > 0.0) {
                Vec z = matvec(model.voken_W, h);
                for (std::size_t i = 0; i < z.size(); ++i) z[i] += model.voken_b.data[i];
                total += -cfg.lambda2 * log_softmax_at(z, seq.voken_targets[k]);
                Vec dz = softmax(z);
                dz[seq.voken_targets[k]] -= 1.0;
                for (double& g : dz) g *= cfg.lambda2;
                for (std::size_t i = 0; i < dz.size(); ++i) grads.voken_b.data[i] += dz[i];
                add_outer(grads.voken_W, dz, h);
                Vec back = matvec_t(model.voken_W, dz);
                axpy(1.0, back, dh);
            }
            // context = mean(unmasked token rows) + position row
            double* prow = grads.pos_emb.row(pos);
            for (std::size_t i = 0; i < model.hidden_dim; ++i) prow[i] += dh[i];
            if (!unmasked.empty()) {
                const double inv = 1.0 / static_cast<double>(unmasked.size());
                for (std::size_t p : unmasked) {
                    double* trow = grads.token_emb.row(seq.tokens[p]);
                    for (std::size_t i = 0; i < model.hidden_dim; ++i) trow[i] += dh[i] * inv;
                }
            }
        }
    }
    return total;
}

std::vector<std::size_t> assign_vokens(const std::vector<Embedding>& token_embeddings,
                                       const std::vector<Embedding>& image_bank) {
    if (image_bank.empty()) throw_invalid("assign_vokens: image bank is empty");
    std::vector<std::size_t> out;
    out.reserve(token_embeddings.size());
    for (const Embedding& tok : token_embeddings) {
        std::size_t best = 0;
        double best_dot = dot(tok.values, image_bank[0].values);
        for (std::size_t j = 1; j < image_bank.size(); ++j) {
            const double d = dot(tok.values, image_bank[j].values);
            if (d > best_dot) {
                best_dot = d;
                best = j;
            }
        }
        out.push_back(best);
    }
    return out;
}

}  // namespace iace
