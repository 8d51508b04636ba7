// End-to-end acceptance checks. Each criterion prints exactly one PASS/FAIL
// line; the binary exits nonzero if any of them fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "data.hpp"
#include "experiment.hpp"
#include "fixtures.hpp"
#include "fusion.hpp"
#include "imagination.hpp"
#include "math_ops.hpp"
#include "metrics.hpp"
#include "objectives.hpp"
#include "oracles.hpp"
#include "trainer.hpp"

using iace::Embedding;
using iace::FusionParams;
using iace::FusionVariant;
using iace::Vec;

namespace {

struct Check {
    bool ok = true;
    std::string detail;

    void expect(bool cond, const std::string& why) {
        if (!cond && ok) {
            ok = false;
            detail = why;
        }
    }
};

std::string fmt(double v) {
    std::ostringstream out;
    out.precision(6);
    out << v;
    return out.str();
}

// ---- 1. spherical loss values -------------------------------------------

void criterion_loss_values(Check& c) {
    Vec e1(4, 0.0), e2(4, 0.0);
    e1[0] = 1.0;
    e2[1] = 1.0;
    const Embedding t{e1}, orth{e2};
    Vec anti = e1;
    anti[0] = -1.0;

    const double at_target = iace::spherical_loss(t, t);
    c.expect(at_target == 0.0, "loss at the target is " + fmt(at_target) + ", want 0");

    const double quarter = iace::spherical_loss(t, orth);
    c.expect(std::abs(quarter - 1.2337005501361697) <= 1e-9,
             "orthogonal loss " + fmt(quarter) + " != pi^2/8");

    const double half = iace::spherical_loss(t, Embedding{anti});
    c.expect(std::abs(half - 4.934802200544679) <= 1e-9,
             "antipodal loss " + fmt(half) + " != pi^2/2");

    iace::Rng rng(101);
    for (int rep = 0; rep < 50; ++rep) {
        const Vec a = testutil::random_unit(rng, 16);
        const Vec b = testutil::random_unit(rng, 16);
        const double chord = iace::spherical_loss(Embedding{a}, Embedding{b});
        const double angle = testutil::spherical_loss_angle_form(a, b);
        c.expect(std::abs(chord - angle) <= 1e-9 * std::max(1.0, angle),
                 "chord and angle forms disagree: " + fmt(chord) + " vs " + fmt(angle));
    }
}

// ---- 2. analytic gradients vs finite differences -------------------------

void criterion_gradients(Check& c) {
    iace::Rng rng(103);

    for (int rep = 0; rep < 20; ++rep) {
        const Vec t = testutil::random_unit(rng, 16);
        const Vec v = testutil::random_unit(rng, 16);
        const Vec g = iace::spherical_loss_grad(Embedding{t}, Embedding{v});
        // raw perturbations of size 1e-6 stay inside the unit-norm tolerance
        auto f = [&](const Vec& x) { return iace::spherical_loss(Embedding{t}, Embedding{x}); };
        const double rel = testutil::fd_check(f, v, g, 1e-6);
        c.expect(rel <= 1e-4, "spherical gradient rel err " + fmt(rel));
    }

    const std::size_t e = 5, h = 4, o = 3;
    for (int rep = 0; rep < 20; ++rep) {
        FusionParams p = FusionParams::seeded(e, h, o, 1000 + rep);
        Vec a, b, weights = rng.normal_vector(o);
        iace::FuseCache cache;
        double margin = 0.0;
        do {  // keep pre-activations away from the ReLU kinks
            a = rng.normal_vector(e);
            b = rng.normal_vector(e);
            iace::fuse_forward(a, b, p, 0.0, nullptr, cache);
            margin = 1e9;
            for (const Vec& z : cache.z) {
                for (double x : z) margin = std::min(margin, std::abs(x));
            }
            for (double x : cache.z1) margin = std::min(margin, std::abs(x));
        } while (margin < 1e-3);

        FusionParams grads = FusionParams::zeros(e, h, o);
        const std::vector<Vec> dinputs = iace::fuse_backward(weights, p, cache, grads);

        auto loss_with = [&](const Vec& x, const Vec& y) {
            const Vec out = iace::fuse(x, y, p);
            double s = 0.0;
            for (std::size_t i = 0; i < o; ++i) s += weights[i] * out[i];
            return s;
        };
        auto check_mat = [&](iace::Matrix& mat, const iace::Matrix& g, const char* name) {
            auto f = [&](const Vec& flat) {
                Vec saved = mat.data;
                mat.data = flat;
                const double val = loss_with(a, b);
                mat.data = saved;
                return val;
            };
            const double rel = testutil::fd_check(f, mat.data, g.data, 1e-6);
            c.expect(rel <= 1e-4, std::string("fusion ") + name + " rel err " + fmt(rel));
        };
        check_mat(p.Wt, grads.Wt, "Wt");
        check_mat(p.Wv, grads.Wv, "Wv");
        check_mat(p.post1W, grads.post1W, "post1W");
        check_mat(p.post2W, grads.post2W, "post2W");
        check_mat(p.bt, grads.bt, "bt");
        check_mat(p.post2b, grads.post2b, "post2b");

        auto fa = [&](const Vec& x) { return loss_with(x, b); };
        const double rel_a = testutil::fd_check(fa, a, dinputs[0], 1e-6);
        c.expect(rel_a <= 1e-4, "fusion text-input rel err " + fmt(rel_a));
        auto fb = [&](const Vec& y) { return loss_with(a, y); };
        const double rel_b = testutil::fd_check(fb, b, dinputs[1], 1e-6);
        c.expect(rel_b <= 1e-4, "fusion visual-input rel err " + fmt(rel_b));
    }

    for (int rep = 0; rep < 20; ++rep) {
        const bool regression = rep % 2 == 1;
        iace::LossConfig lcfg;
        lcfg.task_type = regression ? iace::TaskType::regression : iace::TaskType::classification;
        lcfg.num_classes = 3;
        const std::size_t out = regression ? 1 : 3;
        iace::ClassifierHead head = iace::ClassifierHead::seeded(5, out, 2000 + rep, "acc");
        std::vector<Vec> feats;
        std::vector<double> labels;
        for (int i = 0; i < 4; ++i) {
            feats.push_back(rng.normal_vector(5));
            labels.push_back(regression ? rng.next_normal() : double(rng.below(3)));
        }
        iace::ClassifierHead hg = iace::ClassifierHead::zeros(5, out);
        std::vector<Vec> dfeats;
        iace::head_batch_loss_backward(feats, labels, head, lcfg, hg, dfeats);
        auto fw = [&](const Vec& flat) {
            Vec saved = head.W.data;
            head.W.data = flat;
            const double val = iace::head_batch_loss(feats, labels, head, lcfg);
            head.W.data = saved;
            return val;
        };
        const double rel = testutil::fd_check(fw, head.W.data, hg.W.data, 1e-6);
        c.expect(rel <= 1e-4, "head W rel err " + fmt(rel));
        auto fx = [&](const Vec& x) {
            Vec saved = feats[0];
            feats[0] = x;
            const double val = iace::head_batch_loss(feats, labels, head, lcfg);
            feats[0] = saved;
            return val;
        };
        const double rel_x = testutil::fd_check(fx, feats[0], dfeats[0], 1e-6);
        c.expect(rel_x <= 1e-4, "head feature rel err " + fmt(rel_x));
    }

    iace::LossConfig pcfg;
    pcfg.lambda1 = 0.8;
    pcfg.lambda2 = 0.6;
    for (int rep = 0; rep < 20; ++rep) {
        iace::PretrainModel m = iace::PretrainModel::seeded(5, 3, 3, 6, 3000 + rep);
        iace::MaskedBatch batch;
        for (int s = 0; s < 2; ++s) {
            iace::MaskedSequence seq;
            seq.tokens = {std::uint32_t(rng.below(5)), std::uint32_t(rng.below(5)),
                          std::uint32_t(rng.below(5))};
            seq.masked_positions = {rng.below(3)};
            seq.voken_targets = {rng.below(3)};
            batch.push_back(seq);
        }
        iace::PretrainModel grads = iace::PretrainModel::zeros(5, 3, 3, 6);
        iace::pretrain_loss_backward(batch, m, pcfg, grads);
        for (auto [mat, g] : {std::pair{&m.token_emb, &grads.token_emb},
                              std::pair{&m.pos_emb, &grads.pos_emb},
                              std::pair{&m.mlm_W, &grads.mlm_W},
                              std::pair{&m.mlm_b, &grads.mlm_b},
                              std::pair{&m.voken_W, &grads.voken_W},
                              std::pair{&m.voken_b, &grads.voken_b}}) {
            auto f = [&](const Vec& flat) {
                Vec saved = mat->data;
                mat->data = flat;
                const double val = iace::pretrain_loss(batch, m, pcfg);
                mat->data = saved;
                return val;
            };
            const double rel = testutil::fd_check(f, mat->data, g->data, 1e-6);
            c.expect(rel <= 1e-4, "pretrain gradient rel err " + fmt(rel));
        }
    }
}

// ---- 3. joint-loss boundary behavior --------------------------------------

void criterion_lambda_boundaries(Check& c) {
    const auto data = testutil::planted_dataset(96, 40, 8, 107);
    iace::TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 32;
    cfg.lr = 1e-3;
    cfg.weight_decay = 0.01;
    cfg.dropout = 0.1;
    cfg.seed = 109;
    cfg.fusion_hidden = 16;
    cfg.fusion_out = 8;
    const iace::FinetuneModel init = iace::FinetuneModel::seeded(iace::TaskId::sst2, 8, cfg);

    cfg.loss.lambda = 0.0;
    iace::FinetuneModel m0;
    const iace::RunReport r0 = iace::finetune(data.train, data.dev, iace::TaskId::sst2, cfg, m0);
    for (const auto& e : r0.epochs) {
        c.expect(std::abs(e.losses.at("joint") - e.losses.at("lang")) <= 1e-9,
                 "lambda 0: joint != lang at epoch " + std::to_string(e.epoch));
    }
    c.expect(m0.fuse.Wt.data == init.fuse.Wt.data &&
                 m0.fuse.post2W.data == init.fuse.post2W.data &&
                 m0.imagine_head.W.data == init.imagine_head.W.data,
             "lambda 0: fused pathway weights moved");
    c.expect(m0.lang_head.W.data != init.lang_head.W.data,
             "lambda 0: language head never trained");

    cfg.loss.lambda = 1.0;
    iace::FinetuneModel m1;
    const iace::RunReport r1 = iace::finetune(data.train, data.dev, iace::TaskId::sst2, cfg, m1);
    for (const auto& e : r1.epochs) {
        c.expect(std::abs(e.losses.at("joint") - e.losses.at("imagine")) <= 1e-9,
                 "lambda 1: joint != imagine at epoch " + std::to_string(e.epoch));
    }
    c.expect(m1.lang_head.W.data == init.lang_head.W.data &&
                 m1.lang_head.b.data == init.lang_head.b.data,
             "lambda 1: language head weights moved");

    cfg.loss.lambda = 0.3;
    iace::FinetuneModel mid;
    const iace::RunReport rm = iace::finetune(data.train, data.dev, iace::TaskId::sst2, cfg, mid);
    for (const auto& e : rm.epochs) {
        const double want = 0.3 * e.losses.at("imagine") + 0.7 * e.losses.at("lang");
        c.expect(std::abs(e.losses.at("joint") - want) <= 1e-9,
                 "lambda 0.3: joint is not the stated blend at epoch " + std::to_string(e.epoch));
    }
}

// ---- 4. latent optimization convergence -----------------------------------

void criterion_generator(Check& c) {
    iace::GenerationConfig gen;
    gen.steps = 500;
    gen.image_size = 64;
    gen.learning_rate = 0.05;
    gen.backtracking = true;
    gen.seed = 113;

    iace::Rng rng(115);
    int converged = 0;
    for (int k = 0; k < 100; ++k) {
        const Embedding target{testutil::random_unit(rng, 16)};
        const auto rec =
            iace::optimize_latent(target, "probe " + std::to_string(k), gen, nullptr);
        c.expect(rec.steps_run() <= gen.steps,
                 "trace longer than the step budget on probe " + std::to_string(k));
        for (std::size_t i = 1; i < rec.loss_trace.size(); ++i) {
            c.expect(rec.loss_trace[i] < rec.loss_trace[i - 1],
                     "non-monotone trace on probe " + std::to_string(k));
        }
        if (rec.final_loss() < 1e-3) ++converged;
    }
    c.expect(converged >= 95,
             "only " + std::to_string(converged) + "/100 probes reached loss < 1e-3");
}

// ---- 5. voken assignment vs brute force ------------------------------------

void criterion_vokens(Check& c) {
    iace::Rng rng(117);
    std::vector<Embedding> tokens, bank;
    for (int i = 0; i < 1000; ++i) tokens.push_back(Embedding{testutil::random_unit(rng, 32)});
    for (int j = 0; j < 100; ++j) bank.push_back(Embedding{testutil::random_unit(rng, 32)});
    const auto got = iace::assign_vokens(tokens, bank);
    const auto want = testutil::brute_force_vokens(tokens, bank);
    c.expect(got == want, "assignments differ from the brute-force scan");
}

// ---- 6. few-shot sampler behavior ------------------------------------------

void criterion_sampler(Check& c) {
    const auto train = testutil::sentiment_examples(10000, 0, "train");
    iace::FewShotSpec spec;
    spec.fraction = 0.003;
    spec.seed = 5;

    const auto subset = iace::few_shot_subset(train, spec);
    c.expect(subset.size() == 30,
             "subset size " + std::to_string(subset.size()) + ", want 30");
    std::size_t pos = 0;
    for (const auto& ex : subset) pos += ex.label == 1.0 ? 1 : 0;
    c.expect(pos >= 14 && pos <= 16,
             "positive count " + std::to_string(pos) + " outside 15 +/- 1");

    const auto again = iace::few_shot_subset(train, spec);
    bool identical = again.size() == subset.size();
    for (std::size_t i = 0; identical && i < subset.size(); ++i) {
        identical = again[i].example_id == subset[i].example_id;
    }
    c.expect(identical, "same seed did not reproduce the same subset");

    std::set<std::string> distinct;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        iace::FewShotSpec s = spec;
        s.seed = seed;
        std::string ids;
        for (const auto& ex : iace::few_shot_subset(train, s)) ids += ex.example_id + ",";
        distinct.insert(ids);
    }
    c.expect(distinct.size() >= 19,
             "only " + std::to_string(distinct.size()) + "/20 seeds gave distinct subsets");
}

// ---- 7 and 8. planted-signal learning and the ablation ordering ------------

struct PlantedRuns {
    double bidirectional = 0.0;
    double textual_only = 0.0;
    double visual_only = 0.0;
};

PlantedRuns& planted_runs() {
    static PlantedRuns runs = [] {
        const auto data = testutil::planted_dataset(1600, 400, 16, 2024);
        iace::TrainConfig cfg;
        cfg.epochs = 50;
        cfg.batch_size = 32;
        cfg.lr = 1e-3;
        cfg.weight_decay = 0.01;
        cfg.dropout = 0.1;
        cfg.seed = 7;
        cfg.loss.lambda = 1.0;
        cfg.fusion_hidden = 32;
        cfg.fusion_out = 32;

        PlantedRuns out;
        auto run = [&](FusionVariant v) {
            iace::TrainConfig vcfg = cfg;
            vcfg.variant = v;
            iace::FinetuneModel model;
            const auto report =
                iace::finetune(data.train, data.dev, iace::TaskId::sst2, vcfg, model);
            return report.final_metrics.at("accuracy");
        };
        out.bidirectional = run(FusionVariant::bidirectional_vt);
        out.textual_only = run(FusionVariant::textual_only);
        out.visual_only = run(FusionVariant::visual_only);
        return out;
    }();
    return runs;
}

void criterion_planted_signal(Check& c) {
    const PlantedRuns& runs = planted_runs();
    c.expect(runs.bidirectional >= 0.95,
             "bidirectional accuracy " + fmt(runs.bidirectional) + " < 0.95");
    c.expect(runs.textual_only <= 0.60,
             "text-only accuracy " + fmt(runs.textual_only) + " > 0.60");
}

void criterion_ablation_order(Check& c) {
    const PlantedRuns& runs = planted_runs();
    c.expect(runs.visual_only >= 0.90,
             "visual-only accuracy " + fmt(runs.visual_only) + " < 0.90");
    c.expect(runs.bidirectional >= 0.90,
             "bidirectional accuracy " + fmt(runs.bidirectional) + " < 0.90");
    c.expect(runs.textual_only <= 0.60,
             "text-only accuracy " + fmt(runs.textual_only) + " > 0.60");
}

// ---- 9. metric conventions --------------------------------------------------

void criterion_metrics(Check& c) {
    const std::vector<int> preds = {1, 1, 0, 0};
    const std::vector<int> labels = {1, 0, 1, 0};
    const auto counts = iace::binary_counts(preds, labels);
    c.expect(iace::accuracy(preds, labels) == 0.5, "accuracy != 0.5 exactly");
    c.expect(iace::precision(counts) == 0.5, "precision != 0.5 exactly");
    c.expect(iace::recall(counts) == 0.5, "recall != 0.5 exactly");
    c.expect(iace::f1_score(counts) == 0.5, "f1 != 0.5 exactly");

    const std::vector<double> x = {1.0, 2.0, 3.0, 4.0, 5.0};
    std::vector<double> y;
    for (double v : x) y.push_back(2.0 * v + 1.0);
    const double r = iace::pearson(x, y);
    c.expect(std::abs(r - 1.0) <= 1e-12, "perfect-line pearson " + fmt(r) + " != 1");
}

// ---- 10. rerun determinism ---------------------------------------------------

void criterion_rerun_determinism(Check& c) {
    namespace fs = std::filesystem;
    const fs::path root = testutil::fresh_dir("acceptance-rerun");
    testutil::write_sst2_fixture(root / "data", 30, 20);

    iace::ExperimentConfig cfg;
    cfg.task = "sst2";
    cfg.data_dir = (root / "data").generic_string();
    cfg.cache_root = (root / "cache").generic_string();
    cfg.out_dir = (root / "out").generic_string();
    cfg.seed = 42;
    cfg.generation.steps = 50;
    cfg.generation.image_size = 64;
    cfg.encoder.embed_dim = 16;
    cfg.encoder.vocab_size = 512;
    cfg.encoder.max_seq_len = 16;
    cfg.train.epochs = 2;
    cfg.train.batch_size = 8;
    cfg.train.lr = 3e-3;
    cfg.train.lr_set = true;
    cfg.train.fusion_hidden = 16;
    cfg.train.fusion_out = 8;

    auto read_file = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        std::ostringstream buf;
        buf << in.rdbuf();
        return buf.str();
    };

    auto run_once = [&] {
        const auto imagined = iace::cmd_imagine(cfg);
        const auto report = iace::cmd_finetune(cfg);
        const auto metrics = iace::cmd_evaluate(cfg);
        std::string digest = report.digest();
        std::string ckpt = read_file(cfg.run_dir() / "checkpoint.json");
        std::ostringstream m;
        for (const auto& [k, v] : metrics) m << k << "=" << v << ";";
        return std::tuple<std::size_t, std::string, std::string, std::string>(
            imagined.generated, digest, ckpt, m.str());
    };

    const auto first = run_once();
    c.expect(std::get<0>(first) == 50, "first pass generated " +
                                           std::to_string(std::get<0>(first)) +
                                           " imaginations, want 50");

    fs::remove_all(cfg.cache_root);
    fs::remove_all(cfg.out_dir);
    const auto second = run_once();
    c.expect(std::get<0>(second) == 50, "second pass did not regenerate the cache");
    c.expect(std::get<1>(first) == std::get<1>(second), "report digests differ between reruns");
    c.expect(std::get<2>(first) == std::get<2>(second) && !std::get<2>(first).empty(),
             "checkpoint bytes differ between reruns");
    c.expect(std::get<3>(first) == std::get<3>(second), "evaluation metrics differ between reruns");
}

}  // namespace

int main() {
    struct Criterion {
        const char* name;
        double time_limit_s;
        std::function<void(Check&)> fn;
    };
    const std::vector<Criterion> criteria = {
        {"spherical loss endpoints and closed-form agreement", 0.0, criterion_loss_values},
        {"analytic gradients match finite differences (20+ instances per module)", 30.0,
         criterion_gradients},
        {"joint-loss boundaries freeze the unused pathway", 0.0, criterion_lambda_boundaries},
        {"latent optimization reaches loss < 1e-3 on 95+/100 probes", 60.0, criterion_generator},
        {"voken assignment matches brute force at 1000x100", 10.0, criterion_vokens},
        {"few-shot sampler: exact counts, seed determinism", 0.0, criterion_sampler},
        {"planted signal: fused >= 0.95 accuracy, text-only <= 0.60", 300.0,
         criterion_planted_signal},
        {"ablation order: visual and fused >= 0.90, text-only <= 0.60", 0.0,
         criterion_ablation_order},
        {"metric conventions: 0.5 confusion point, perfect pearson", 0.0, criterion_metrics},
        {"imagine-finetune-evaluate reruns are byte-identical", 0.0,
         criterion_rerun_determinism},
    };

    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto start = std::chrono::steady_clock::now();
        Check check;
        try {
            criteria[i].fn(check);
        } catch (const std::exception& e) {
            check.expect(false, std::string("exception: ") + e.what());
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (criteria[i].time_limit_s > 0.0 && secs > criteria[i].time_limit_s) {
            check.expect(false, "took " + fmt(secs) + "s, limit " +
                                    fmt(criteria[i].time_limit_s) + "s");
        }
        if (check.ok) {
            std::printf("PASS %2zu. %s (%.2fs)\n", i + 1, criteria[i].name, secs);
        } else {
            std::printf("FAIL %2zu. %s (%.2fs): %s\n", i + 1, criteria[i].name, secs,
                        check.detail.c_str());
            ++failures;
        }
        std::fflush(stdout);
    }
    if (failures > 0) {
        std::printf("%d of %zu criteria failed\n", failures, criteria.size());
        return 1;
    }
    std::printf("all %zu criteria passed\n", criteria.size());
    return 0;
}
