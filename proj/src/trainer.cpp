#include "trainer.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "errors.hpp"
#include "rng.hpp"
#include "sha256.hpp"

namespace iace {

using nlohmann::json;

void AdamW::attach(Matrix* param, Matrix* grad) {
    if (param == nullptr || grad == nullptr) throw_invalid("AdamW: null parameter");
    if (param->size() != grad->size()) throw_invalid("AdamW: param/grad shape mismatch");
    slots_.push_back({param, grad, Vec(param->size(), 0.0), Vec(param->size(), 0.0)});
}

void AdamW::attach_all(const ParamRefs& params, const ParamRefs& grads) {
    if (params.size() != grads.size()) throw_invalid("AdamW: param/grad list mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].first != grads[i].first) {
            throw_invalid("AdamW: param/grad name mismatch at " + params[i].first);
        }
        attach(params[i].second, grads[i].second);
    }
}

void AdamW::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (Slot& s : slots_) {
        for (std::size_t i = 0; i < s.p->size(); ++i) {
            const double g = s.g->data[i];
            s.m[i] = beta1_ * s.m[i] + (1.0 - beta1_) * g;
            s.v[i] = beta2_ * s.v[i] + (1.0 - beta2_) * g * g;
            const double mhat = s.m[i] / bc1;
            const double vhat = s.v[i] / bc2;
            s.p->data[i] -= lr_ * (mhat / (std::sqrt(vhat) + eps_) +
                                   weight_decay_ * s.p->data[i]);
        }
    }
}

void TrainConfig::validate() const {
    if (stage != "finetune" && stage != "pretrain") {
        throw_invalid("TrainConfig: stage must be finetune or pretrain");
    }
    if (epochs < 1) throw_invalid("TrainConfig: epochs must be >= 1");
    if (batch_size < 1) throw_invalid("TrainConfig: batch_size must be >= 1");
    if (!(lr > 0.0) && lr != 0.0) throw_invalid("TrainConfig: lr must be nonnegative");
    if (lr < 0.0) throw_invalid("TrainConfig: lr must be nonnegative");
    if (weight_decay < 0.0) throw_invalid("TrainConfig: weight_decay must be nonnegative");
    if (dropout < 0.0 || dropout >= 1.0) throw_invalid("TrainConfig: dropout must be in [0, 1)");
    if (!(mask_prob > 0.0) || mask_prob > 1.0) throw_invalid("TrainConfig: mask_prob must be in (0, 1]");
    if (fusion_hidden == 0 || fusion_out == 0) throw_invalid("TrainConfig: fusion dims must be positive");
    loss.validate();
}

TrainConfig TrainConfig::finetune_defaults(TaskId task) {
    TrainConfig cfg;
    cfg.stage = "finetune";
    cfg.epochs = 3;
    cfg.batch_size = 32;
    cfg.lr = task == TaskId::swag ? 2e-5 : 1e-4;
    cfg.weight_decay = 0.01;
    cfg.dropout = 0.1;
    return cfg;
}

TrainConfig TrainConfig::pretrain_defaults() {
    TrainConfig cfg;
    cfg.stage = "pretrain";
    cfg.epochs = 30;
    cfg.batch_size = 32;
    cfg.lr = 2e-4;
    cfg.weight_decay = 0.01;
    return cfg;
}

std::string RunReport::to_json() const {
    json j;
    j["stage"] = stage;
    j["task"] = task;
    j["variant"] = variant;
    j["lambda"] = lambda;
    j["seed"] = seed;
    json eps = json::array();
    for (const EpochLog& e : epochs) {
        json je;
        je["epoch"] = e.epoch;
        je["losses"] = e.losses;
        je["dev_metrics"] = e.dev_metrics;
        eps.push_back(std::move(je));
    }
    j["epochs"] = std::move(eps);
    j["best_epoch"] = best_epoch;
    j["initial_metrics"] = initial_metrics;
    j["final_metrics"] = final_metrics;
    j["config_digest"] = config_digest;
    j["subset_manifest_digest"] = subset_manifest_digest;
    return j.dump();
}

std::string RunReport::digest() const { return sha256_hex(to_json()); }

std::vector<PreparedExample> prepare_examples(const std::vector<TextExample>& examples,
                                              TaskId task, const ToyTextEncoder& encoder,
                                              const ImaginationCache& cache,
                                              const GenerationConfig& gen_cfg) {
    const TaskInfo& info = task_info(task);
    std::vector<PreparedExample> out;
    out.reserve(examples.size());
    json missing = json::array();

    auto lookup = [&](const std::string& sentence, Vec& slot) {
        auto rec = cache.get(sentence, gen_cfg);
        if (!rec) {
            json entry;
            entry["prompt_hash"] = prompt_hash(sentence);
            entry["prompt"] = normalize_prompt(sentence);
            missing.push_back(std::move(entry));
            return;
        }
        slot = rec->embedding.values;
    };

    for (const TextExample& ex : examples) {
        if (ex.sentences.size() != info.sentence_arity) {
            throw_invalid("prepare_examples: example " + ex.example_id + " has " +
                          std::to_string(ex.sentences.size()) + " sentences, task needs " +
                          std::to_string(info.sentence_arity));
        }
        PreparedExample p;
        p.example_id = ex.example_id;
        p.label = ex.label;
        if (info.multiple_choice) {
            p.t1 = encoder.encode_text(ex.context).values;
            lookup(ex.context, p.i1);
            for (const std::string& cand : ex.sentences) {
                p.cand_t2.push_back(encoder.encode_text(cand).values);
                Vec iv;
                lookup(cand, iv);
                p.cand_i2.push_back(std::move(iv));
                p.cand_lang.push_back(concat(p.t1, p.cand_t2.back()));
            }
        } else {
            p.t1 = encoder.encode_text(ex.sentences[0]).values;
            lookup(ex.sentences[0], p.i1);
            if (info.sentence_arity >= 2) {
                p.t2 = encoder.encode_text(ex.sentences[1]).values;
                lookup(ex.sentences[1], p.i2);
                p.lang_features = concat(p.t1, p.t2);
            } else {
                p.lang_features = concat(p.t1, p.t1);
            }
        }
        out.push_back(std::move(p));
    }

    if (!missing.empty()) {
        json details;
        details["missing"] = std::move(missing);
        throw IaceError(ErrorCode::precondition,
                        "missing imaginations for " + std::to_string(details["missing"].size()) +
                            " sentences; run the imagine stage first",
                        details.dump());
    }
    return out;
}

ParamRefs FinetuneModel::param_refs() {
    ParamRefs refs = fuse.param_refs();
    for (auto& r : imagine_head.param_refs("head.imagine")) refs.push_back(r);
    for (auto& r : lang_head.param_refs("head.lang")) refs.push_back(r);
    return refs;
}

ConstParamRefs FinetuneModel::param_refs() const {
    ConstParamRefs refs = fuse.param_refs();
    for (auto& r : imagine_head.param_refs("head.imagine")) refs.push_back(r);
    for (auto& r : lang_head.param_refs("head.lang")) refs.push_back(r);
    return refs;
}

FinetuneModel FinetuneModel::seeded(TaskId task, std::size_t embed_dim, const TrainConfig& cfg) {
    const TaskInfo& info = task_info(task);
    const std::size_t k = (info.type == TaskType::regression || info.multiple_choice)
                              ? 1
                              : info.num_classes;
    FinetuneModel m;
    m.variant = cfg.variant;
    m.fuse = FusionParams::seeded(embed_dim, cfg.fusion_hidden, cfg.fusion_out, cfg.seed,
                                  fusion_branch_count(cfg.variant));
    m.imagine_head = ClassifierHead::seeded(cfg.fusion_out, k, cfg.seed, "imagine");
    m.lang_head = ClassifierHead::seeded(2 * embed_dim, k, cfg.seed, "lang");
    return m;
}

static void zero(Matrix& m) { std::fill(m.data.begin(), m.data.end(), 0.0); }

static void zero_fusion(FusionParams& g) {
    zero(g.Wt); zero(g.bt); zero(g.Wv); zero(g.bv);
    zero(g.post1W); zero(g.post1b); zero(g.post2W); zero(g.post2b);
}

static void zero_head(ClassifierHead& g) { zero(g.W); zero(g.b); }

static void scale_head(ClassifierHead& g, double s) {
    for (double& x : g.W.data) x *= s;
    for (double& x : g.b.data) x *= s;
}

static VariantInputs variant_inputs(const PreparedExample& ex) {
    VariantInputs in;
    in.t1 = &ex.t1;
    in.i1 = &ex.i1;
    if (!ex.t2.empty()) in.t2 = &ex.t2;
    if (!ex.i2.empty()) in.i2 = &ex.i2;
    return in;
}

static VariantInputs candidate_inputs(const PreparedExample& ex, std::size_t k) {
    VariantInputs in;
    in.t1 = &ex.t1;
    in.i1 = &ex.i1;
    in.t2 = &ex.cand_t2[k];
    in.i2 = &ex.cand_i2[k];
    return in;
}

static LossConfig task_loss_config(const TrainConfig& cfg, const TaskInfo& info) {
    LossConfig lcfg = cfg.loss;
    lcfg.task_type = info.type;
    if (info.type == TaskType::classification) lcfg.num_classes = info.num_classes;
    return lcfg;
}

static double primary_metric(const std::map<std::string, double>& metrics, const TaskInfo& info) {
    const std::string key = info.metric == "correlation" ? "pearson" : info.metric;
    const auto it = metrics.find(key);
    if (it == metrics.end()) throw_invalid("metrics: missing primary metric " + key);
    return it->second;
}

std::map<std::string, double> evaluate_model(const FinetuneModel& model,
                                             const std::vector<PreparedExample>& dev, TaskId task) {
    const TaskInfo& info = task_info(task);
    if (dev.empty()) throw_invalid("evaluate: empty dev split");
    const FusionVariant variant = model.variant;

    if (info.multiple_choice) {
        std::vector<int> preds, labels;
        for (const PreparedExample& ex : dev) {
            Vec scores;
            for (std::size_t k = 0; k < ex.cand_t2.size(); ++k) {
                const Vec fused = apply_variant(variant, candidate_inputs(ex, k), model.fuse);
                scores.push_back(model.imagine_head.logits(fused)[0]);
            }
            preds.push_back(static_cast<int>(
                std::max_element(scores.begin(), scores.end()) - scores.begin()));
            labels.push_back(static_cast<int>(ex.label));
        }
        return classification_metrics(preds, labels, info.num_classes);
    }

    if (info.type == TaskType::regression) {
        std::vector<double> preds, labels;
        for (const PreparedExample& ex : dev) {
            const Vec fused = apply_variant(variant, variant_inputs(ex), model.fuse);
            preds.push_back(model.imagine_head.logits(fused)[0]);
            labels.push_back(ex.label);
        }
        return regression_metrics(preds, labels);
    }

    std::vector<int> preds, labels;
    for (const PreparedExample& ex : dev) {
        const Vec fused = apply_variant(variant, variant_inputs(ex), model.fuse);
        const Vec z = model.imagine_head.logits(fused);
        preds.push_back(static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin()));
        labels.push_back(static_cast<int>(ex.label));
    }
    return classification_metrics(preds, labels, info.num_classes);
}

RunReport finetune(const std::vector<PreparedExample>& train,
                   const std::vector<PreparedExample>& dev, TaskId task, const TrainConfig& cfg,
                   FinetuneModel& model) {
    cfg.validate();
    const TaskInfo& info = task_info(task);
    if (train.empty()) throw_invalid("finetune: empty training subset");
    if (dev.empty()) throw_invalid("finetune: empty dev split");
    const LossConfig lcfg = task_loss_config(cfg, info);
    const double lambda = lcfg.lambda;

    const std::size_t embed_dim = train[0].t1.size();
    model = FinetuneModel::seeded(task, embed_dim, cfg);

    FusionParams fuse_g = FusionParams::zeros(model.fuse.embed_dim, model.fuse.hidden_dim,
                                              model.fuse.out_dim, model.fuse.branch_count);
    ClassifierHead imagine_g = ClassifierHead::zeros(model.imagine_head.in_dim,
                                                     model.imagine_head.out_dim);
    ClassifierHead lang_g = ClassifierHead::zeros(model.lang_head.in_dim, model.lang_head.out_dim);

    AdamW opt(cfg.lr, cfg.weight_decay);
    if (lambda > 0.0) {
        opt.attach_all(model.fuse.param_refs(), fuse_g.param_refs());
        opt.attach_all(model.imagine_head.param_refs("head.imagine"),
                       imagine_g.param_refs("head.imagine"));
    }
    if (lambda < 1.0) {
        opt.attach_all(model.lang_head.param_refs("head.lang"), lang_g.param_refs("head.lang"));
    }

    RunReport report;
    report.stage = "finetune";
    report.task = info.name;
    report.variant = to_string(cfg.variant);
    report.lambda = lambda;
    report.seed = cfg.seed;

    FinetuneModel best = model;
    double best_metric = -1e300;
    std::size_t best_epoch = 0;
    std::size_t since_best = 0;

    const std::size_t n = train.size();
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng erng(derive_seed(cfg.seed, "epoch:" + std::to_string(epoch)));
        const std::vector<std::size_t> order = erng.permutation(n);

        double sum_imagine = 0.0, sum_lang = 0.0;
        std::size_t seen = 0;
        std::size_t batch_id = 0;
        for (std::size_t start = 0; start < n; start += cfg.batch_size, ++batch_id) {
            const std::size_t stop = std::min(n, start + cfg.batch_size);
            const std::size_t bsz = stop - start;
            zero_fusion(fuse_g);
            zero_head(imagine_g);
            zero_head(lang_g);

            double batch_imagine = 0.0;
            double batch_lang = 0.0;

            if (info.multiple_choice) {
                const double scale = lcfg.batch_sum ? 1.0 : 1.0 / static_cast<double>(bsz);
                for (std::size_t bi = start; bi < stop; ++bi) {
                    const PreparedExample& ex = train[order[bi]];
                    const std::size_t cands = ex.cand_t2.size();
                    std::vector<VariantCache> caches(cands);
                    std::vector<Vec> fused(cands);
                    Vec scores(cands);
                    for (std::size_t k = 0; k < cands; ++k) {
                        fused[k] = apply_variant_forward(cfg.variant, candidate_inputs(ex, k),
                                                         model.fuse, cfg.dropout, &erng, caches[k]);
                        scores[k] = model.imagine_head.logits(fused[k])[0];
                    }
                    const std::size_t y = static_cast<std::size_t>(ex.label);
                    batch_imagine += -log_softmax_at(scores, y);
                    if (lambda > 0.0) {
                        Vec ds = softmax(scores);
                        ds[y] -= 1.0;
                        for (std::size_t k = 0; k < cands; ++k) {
                            const double dz = ds[k] * scale * lambda;
                            for (std::size_t c = 0; c < model.imagine_head.in_dim; ++c) {
                                imagine_g.W.data[c] += dz * fused[k][c];
                            }
                            imagine_g.b.data[0] += dz;
                            Vec dfused(model.imagine_head.in_dim);
                            for (std::size_t c = 0; c < dfused.size(); ++c) {
                                dfused[c] = model.imagine_head.W.data[c] * dz;
                            }
                            apply_variant_backward(dfused, cfg.variant, model.fuse, caches[k],
                                                   fuse_g);
                        }
                    }
                    Vec lang_scores(cands);
                    for (std::size_t k = 0; k < cands; ++k) {
                        lang_scores[k] = model.lang_head.logits(ex.cand_lang[k])[0];
                    }
                    batch_lang += -log_softmax_at(lang_scores, y);
                    if (lambda < 1.0) {
                        Vec ds = softmax(lang_scores);
                        ds[y] -= 1.0;
                        for (std::size_t k = 0; k < cands; ++k) {
                            const double dz = ds[k] * scale * (1.0 - lambda);
                            for (std::size_t c = 0; c < model.lang_head.in_dim; ++c) {
                                lang_g.W.data[c] += dz * ex.cand_lang[k][c];
                            }
                            lang_g.b.data[0] += dz;
                        }
                    }
                }
                if (!lcfg.batch_sum) {
                    batch_imagine /= static_cast<double>(bsz);
                    batch_lang /= static_cast<double>(bsz);
                }
            } else {
                std::vector<Vec> fused(bsz), lang_feats(bsz);
                std::vector<double> labels(bsz);
                std::vector<VariantCache> caches(bsz);
                for (std::size_t bi = 0; bi < bsz; ++bi) {
                    const PreparedExample& ex = train[order[start + bi]];
                    fused[bi] = apply_variant_forward(cfg.variant, variant_inputs(ex), model.fuse,
                                                      cfg.dropout, &erng, caches[bi]);
                    lang_feats[bi] = ex.lang_features;
                    labels[bi] = ex.label;
                }
                if (lambda > 0.0) {
                    std::vector<Vec> dfused;
                    batch_imagine = head_batch_loss_backward(fused, labels, model.imagine_head,
                                                             lcfg, imagine_g, dfused);
                    scale_head(imagine_g, lambda);
                    for (std::size_t bi = 0; bi < bsz; ++bi) {
                        for (double& g : dfused[bi]) g *= lambda;
                        apply_variant_backward(dfused[bi], cfg.variant, model.fuse, caches[bi],
                                               fuse_g);
                    }
                } else {
                    batch_imagine = head_batch_loss(fused, labels, model.imagine_head, lcfg);
                }
                if (lambda < 1.0) {
                    std::vector<Vec> dlang;
                    batch_lang = head_batch_loss_backward(lang_feats, labels, model.lang_head,
                                                          lcfg, lang_g, dlang);
                    scale_head(lang_g, 1.0 - lambda);
                } else {
                    batch_lang = head_batch_loss(lang_feats, labels, model.lang_head, lcfg);
                }
            }

            const double batch_joint = joint_loss(batch_imagine, batch_lang, lcfg);
            if (!std::isfinite(batch_joint)) {
                json details;
                details["epoch"] = epoch;
                details["batch"] = batch_id;
                throw IaceError(ErrorCode::internal,
                                "non-finite loss at epoch " + std::to_string(epoch) + " batch " +
                                    std::to_string(batch_id),
                                details.dump());
            }
            opt.step();
            sum_imagine += batch_imagine * static_cast<double>(bsz);
            sum_lang += batch_lang * static_cast<double>(bsz);
            seen += bsz;
        }

        EpochLog log;
        log.epoch = epoch;
        const double li = sum_imagine / static_cast<double>(seen);
        const double ll = sum_lang / static_cast<double>(seen);
        log.losses["imagine"] = li;
        log.losses["lang"] = ll;
        log.losses["joint"] = joint_loss(li, ll, lcfg);
        log.dev_metrics = evaluate_model(model, dev, task);
        report.epochs.push_back(log);

        const double metric = primary_metric(log.dev_metrics, info);
        if (metric > best_metric) {
            best_metric = metric;
            best_epoch = epoch;
            best = model;
            since_best = 0;
        } else {
            ++since_best;
            if (cfg.patience > 0 && since_best >= cfg.patience) break;
        }
    }

    model = best;
    report.best_epoch = best_epoch;
    report.final_metrics = report.epochs[best_epoch].dev_metrics;
    return report;
}

std::vector<std::size_t> voken_table(const ToyTextEncoder& encoder,
                                     const std::vector<Embedding>& image_bank) {
    std::vector<Embedding> tokens;
    tokens.reserve(encoder.spec().vocab_size);
    for (std::size_t id = 0; id < encoder.spec().vocab_size; ++id) {
        tokens.push_back(encoder.token_embedding(static_cast<std::uint32_t>(id)));
    }
    return assign_vokens(tokens, image_bank);
}

MaskedBatch build_masked_batch(const std::vector<std::vector<std::uint32_t>>& sequences,
                               const std::vector<std::size_t>& vokens, double mask_prob,
                               std::uint64_t seed, const std::string& label) {
    if (!(mask_prob > 0.0) || mask_prob > 1.0) {
        throw_invalid("build_masked_batch: mask_prob must be in (0, 1]");
    }
    Rng rng(derive_seed(seed, label));
    MaskedBatch batch;
    batch.reserve(sequences.size());
    for (std::size_t s = 0; s < sequences.size(); ++s) {
        const auto& seq = sequences[s];
        if (seq.empty()) throw_invalid("build_masked_batch: empty sequence at index " +
                                       std::to_string(s));
        MaskedSequence ms;
        ms.tokens = seq;
        for (std::size_t pos = 0; pos < seq.size(); ++pos) {
            if (rng.next_double() < mask_prob) ms.masked_positions.push_back(pos);
        }
        if (ms.masked_positions.empty()) {
            ms.masked_positions.push_back(rng.below(seq.size()));
        }
        for (std::size_t pos : ms.masked_positions) {
            const std::uint32_t tok = seq[pos];
            if (tok >= vokens.size()) throw_invalid("build_masked_batch: token outside voken table");
            ms.voken_targets.push_back(vokens[tok]);
        }
        batch.push_back(std::move(ms));
    }
    return batch;
}

RunReport pretrain(const std::vector<std::vector<std::uint32_t>>& train_corpus,
                   const std::vector<std::vector<std::uint32_t>>& heldout_corpus,
                   const std::vector<std::size_t>& voken_map, PretrainModel& model,
                   const TrainConfig& cfg) {
    cfg.validate();
    model.validate();
    if (train_corpus.empty()) throw_invalid("pretrain: empty corpus");
    if (heldout_corpus.empty()) throw_invalid("pretrain: empty held-out corpus");
    if (voken_map.size() < model.vocab_size) {
        throw_invalid("pretrain: voken table smaller than vocabulary");
    }
    const LossConfig lcfg = cfg.loss;

    PretrainModel grads = PretrainModel::zeros(model.vocab_size, model.hidden_dim,
                                               model.bank_size, model.max_positions);
    AdamW opt(cfg.lr, cfg.weight_decay);
    opt.attach(&model.token_emb, &grads.token_emb);
    opt.attach(&model.pos_emb, &grads.pos_emb);
    if (lcfg.lambda1 > 0.0) {
        opt.attach(&model.mlm_W, &grads.mlm_W);
        opt.attach(&model.mlm_b, &grads.mlm_b);
    }
    if (lcfg.lambda2 > 0.0) {
        opt.attach(&model.voken_W, &grads.voken_W);
        opt.attach(&model.voken_b, &grads.voken_b);
    }

    // Fixed held-out masking so epoch-over-epoch numbers are comparable.
    const MaskedBatch heldout = build_masked_batch(heldout_corpus, voken_map, cfg.mask_prob,
                                                   cfg.seed, "mask:heldout");
    LossConfig mlm_only = lcfg;
    mlm_only.lambda1 = 1.0;
    mlm_only.lambda2 = 0.0;
    auto heldout_eval = [&] {
        std::map<std::string, double> m;
        m["heldout_total"] = pretrain_loss(heldout, model, lcfg);
        m["heldout_mlm"] = pretrain_loss(heldout, model, mlm_only);
        return m;
    };

    RunReport report;
    report.stage = "pretrain";
    report.task = "pretrain";
    report.variant = "";
    report.lambda = lcfg.lambda;
    report.seed = cfg.seed;
    report.initial_metrics = heldout_eval();

    PretrainModel best = model;
    double best_loss = report.initial_metrics["heldout_total"];
    std::size_t best_epoch = 0;
    std::size_t since_best = 0;
    std::map<std::string, double> best_metrics = report.initial_metrics;

    const std::size_t n = train_corpus.size();
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const MaskedBatch masked = build_masked_batch(train_corpus, voken_map, cfg.mask_prob,
                                                      cfg.seed, "mask:epoch:" + std::to_string(epoch));
        Rng erng(derive_seed(cfg.seed, "order:epoch:" + std::to_string(epoch)));
        const std::vector<std::size_t> order = erng.permutation(n);

        double train_total = 0.0;
        std::size_t batch_id = 0;
        for (std::size_t start = 0; start < n; start += cfg.batch_size, ++batch_id) {
            const std::size_t stop = std::min(n, start + cfg.batch_size);
            MaskedBatch batch;
            batch.reserve(stop - start);
            for (std::size_t i = start; i < stop; ++i) batch.push_back(masked[order[i]]);

            zero(grads.token_emb); zero(grads.pos_emb);
            zero(grads.mlm_W); zero(grads.mlm_b);
            zero(grads.voken_W); zero(grads.voken_b);
            const double loss = pretrain_loss_backward(batch, model, lcfg, grads);
            if (!std::isfinite(loss)) {
                json details;
                details["epoch"] = epoch;
                details["batch"] = batch_id;
                throw IaceError(ErrorCode::internal,
                                "non-finite loss at epoch " + std::to_string(epoch) + " batch " +
                                    std::to_string(batch_id),
                                details.dump());
            }
            opt.step();
            train_total += loss;
        }

        EpochLog log;
        log.epoch = epoch;
        log.losses["train_total"] = train_total;
        const auto held = heldout_eval();
        log.losses.insert(held.begin(), held.end());
        report.epochs.push_back(log);

        if (held.at("heldout_total") < best_loss) {
            best_loss = held.at("heldout_total");
            best_epoch = epoch;
            best = model;
            best_metrics = held;
            since_best = 0;
        } else {
            ++since_best;
            if (cfg.patience > 0 && since_best >= cfg.patience) break;
        }
    }

    model = best;
    report.best_epoch = best_epoch;
    report.final_metrics = best_metrics;
    const double init_mlm = report.initial_metrics["heldout_mlm"];
    if (init_mlm > 0.0) {
        report.final_metrics["mlm_decrease"] =
            (init_mlm - best_metrics.at("heldout_mlm")) / init_mlm;
    }
    return report;
}

}  // namespace iace
