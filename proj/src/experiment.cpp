#include "experiment.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_set>

#include "checkpoint.hpp"
#include "errors.hpp"
#include "rng.hpp"
#include "sha256.hpp"

namespace iace {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::string read_file(const fs::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw_io("cannot read " + file.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const fs::path& file, const std::string& content) {
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) throw_io("cannot write " + file.string());
    out << content;
    if (!out) throw_io("short write to " + file.string());
}

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& origin) {
    if (!j.is_object()) throw_parse(origin + ": expected a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!allowed.count(it.key())) throw_parse(origin + ": unknown field '" + it.key() + "'");
    }
}

template <typename T>
void read_field(const json& j, const char* key, T& out, const std::string& origin) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw_parse(origin + ": field '" + std::string(key) + "': " + e.what());
    }
}

fs::path task_dir(const ExperimentConfig& cfg) {
    return fs::path(cfg.data_dir) / task_info(task_from_string(cfg.task)).name;
}

// Every distinct sentence a task's examples can ask an imagination for, in
// first-seen order.
std::vector<std::string> collect_prompts(const TaskSplits& splits) {
    std::vector<std::string> prompts;
    std::unordered_set<std::string> seen;
    auto add = [&](const std::string& text) {
        if (text.empty()) return;
        std::string norm = normalize_prompt(text);
        if (norm.empty() || !seen.insert(norm).second) return;
        prompts.push_back(norm);
    };
    for (const auto* split : {&splits.train, &splits.dev}) {
        for (const auto& ex : *split) {
            add(ex.context);
            for (const auto& s : ex.sentences) add(s);
        }
    }
    return prompts;
}

std::string primary_metric_key(const TaskInfo& info) {
    if (info.metric == "correlation") return "pearson";
    return info.metric;
}

}  // namespace

std::string ExperimentConfig::to_json() const {
    json j;
    j["task"] = task;
    j["data_dir"] = data_dir;
    j["cache_root"] = cache_root;
    j["out_dir"] = out_dir;
    j["seed"] = seed;
    j["fraction"] = fraction;
    j["stratified"] = stratified;
    j["workers"] = workers;
    j["generation"] = {{"steps", generation.steps},
                       {"image_size", generation.image_size},
                       {"learning_rate", generation.learning_rate},
                       {"backtracking", generation.backtracking}};
    j["encoder"] = {{"embed_dim", encoder.embed_dim},
                    {"vocab_size", encoder.vocab_size},
                    {"max_seq_len", encoder.max_seq_len}};
    json t;
    t["epochs"] = train.epochs;
    t["batch_size"] = train.batch_size;
    if (train.lr_set) t["lr"] = train.lr;
    t["weight_decay"] = train.weight_decay;
    t["dropout"] = train.dropout;
    t["patience"] = train.patience;
    t["lambda"] = train.lambda;
    t["lambda1"] = train.lambda1;
    t["lambda2"] = train.lambda2;
    t["batch_sum"] = train.batch_sum;
    t["variant"] = train.variant;
    t["fusion_hidden"] = train.fusion_hidden;
    t["fusion_out"] = train.fusion_out;
    j["train"] = t;
    j["pretrain"] = {{"epochs", pretrain.epochs},
                     {"batch_size", pretrain.batch_size},
                     {"lr", pretrain.lr},
                     {"weight_decay", pretrain.weight_decay},
                     {"patience", pretrain.patience},
                     {"mask_prob", pretrain.mask_prob},
                     {"hidden_dim", pretrain.hidden_dim},
                     {"bank_size", pretrain.bank_size},
                     {"heldout_fraction", pretrain.heldout_fraction},
                     {"corpus_file", pretrain.corpus_file}};
    return j.dump(2) + "\n";
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text, const std::string& origin) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw_parse(origin + ": " + e.what());
    }
    check_keys(j,
               {"task", "data_dir", "cache_root", "out_dir", "seed", "fraction", "stratified",
                "workers", "generation", "encoder", "train", "pretrain"},
               origin);
    ExperimentConfig cfg;
    read_field(j, "task", cfg.task, origin);
    read_field(j, "data_dir", cfg.data_dir, origin);
    read_field(j, "cache_root", cfg.cache_root, origin);
    read_field(j, "out_dir", cfg.out_dir, origin);
    read_field(j, "seed", cfg.seed, origin);
    read_field(j, "fraction", cfg.fraction, origin);
    read_field(j, "stratified", cfg.stratified, origin);
    read_field(j, "workers", cfg.workers, origin);
    if (j.contains("generation")) {
        const json& g = j.at("generation");
        check_keys(g, {"steps", "image_size", "learning_rate", "backtracking"},
                   origin + ": generation");
        read_field(g, "steps", cfg.generation.steps, origin);
        read_field(g, "image_size", cfg.generation.image_size, origin);
        read_field(g, "learning_rate", cfg.generation.learning_rate, origin);
        read_field(g, "backtracking", cfg.generation.backtracking, origin);
    }
    if (j.contains("encoder")) {
        const json& e = j.at("encoder");
        check_keys(e, {"embed_dim", "vocab_size", "max_seq_len"}, origin + ": encoder");
        read_field(e, "embed_dim", cfg.encoder.embed_dim, origin);
        read_field(e, "vocab_size", cfg.encoder.vocab_size, origin);
        read_field(e, "max_seq_len", cfg.encoder.max_seq_len, origin);
    }
    if (j.contains("train")) {
        const json& t = j.at("train");
        check_keys(t,
                   {"epochs", "batch_size", "lr", "weight_decay", "dropout", "patience", "lambda",
                    "lambda1", "lambda2", "batch_sum", "variant", "fusion_hidden", "fusion_out"},
                   origin + ": train");
        read_field(t, "epochs", cfg.train.epochs, origin);
        read_field(t, "batch_size", cfg.train.batch_size, origin);
        if (t.contains("lr")) {
            cfg.train.lr_set = true;
            read_field(t, "lr", cfg.train.lr, origin);
        }
        read_field(t, "weight_decay", cfg.train.weight_decay, origin);
        read_field(t, "dropout", cfg.train.dropout, origin);
        read_field(t, "patience", cfg.train.patience, origin);
        read_field(t, "lambda", cfg.train.lambda, origin);
        read_field(t, "lambda1", cfg.train.lambda1, origin);
        read_field(t, "lambda2", cfg.train.lambda2, origin);
        read_field(t, "batch_sum", cfg.train.batch_sum, origin);
        read_field(t, "variant", cfg.train.variant, origin);
        read_field(t, "fusion_hidden", cfg.train.fusion_hidden, origin);
        read_field(t, "fusion_out", cfg.train.fusion_out, origin);
    }
    if (j.contains("pretrain")) {
        const json& p = j.at("pretrain");
        check_keys(p,
                   {"epochs", "batch_size", "lr", "weight_decay", "patience", "mask_prob",
                    "hidden_dim", "bank_size", "heldout_fraction", "corpus_file"},
                   origin + ": pretrain");
        read_field(p, "epochs", cfg.pretrain.epochs, origin);
        read_field(p, "batch_size", cfg.pretrain.batch_size, origin);
        read_field(p, "lr", cfg.pretrain.lr, origin);
        read_field(p, "weight_decay", cfg.pretrain.weight_decay, origin);
        read_field(p, "patience", cfg.pretrain.patience, origin);
        read_field(p, "mask_prob", cfg.pretrain.mask_prob, origin);
        read_field(p, "hidden_dim", cfg.pretrain.hidden_dim, origin);
        read_field(p, "bank_size", cfg.pretrain.bank_size, origin);
        read_field(p, "heldout_fraction", cfg.pretrain.heldout_fraction, origin);
        read_field(p, "corpus_file", cfg.pretrain.corpus_file, origin);
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig ExperimentConfig::load(const fs::path& file) {
    return from_json(read_file(file), file.string());
}

void ExperimentConfig::set_field(const std::string& dotted_key, const std::string& value) {
    if (dotted_key.empty()) throw_invalid("set_field: empty key");
    json j = json::parse(to_json());
    json parsed;
    try {
        parsed = json::parse(value);
        if (parsed.is_object() || parsed.is_array()) parsed = json(value);
    } catch (const json::exception&) {
        parsed = json(value);  // bare strings like "sst2" arrive unquoted
    }
    json* cur = &j;
    std::size_t start = 0;
    while (true) {
        std::size_t dot = dotted_key.find('.', start);
        std::string part = dotted_key.substr(start, dot - start);
        if (part.empty()) throw_invalid("set_field: malformed key '" + dotted_key + "'");
        if (dot == std::string::npos) {
            (*cur)[part] = parsed;
            break;
        }
        cur = &((*cur)[part]);
        start = dot + 1;
    }
    *this = from_json(j.dump(), "set_field('" + dotted_key + "')");
}

void ExperimentConfig::validate() const {
    task_from_string(task);  // throws for unknown names
    if (!(fraction > 0.0) || fraction > 1.0)
        throw_invalid("fraction must be in (0, 1], got " + std::to_string(fraction));
    if (workers == 0) throw_invalid("workers must be at least 1");
    generation_config().validate();
    if (encoder.embed_dim == 0 || encoder.vocab_size == 0 || encoder.max_seq_len == 0)
        throw_invalid("encoder dimensions must be positive");
    train_config().validate();
    pretrain_config().validate();
    if (!(pretrain.heldout_fraction > 0.0) || pretrain.heldout_fraction >= 1.0)
        throw_invalid("pretrain.heldout_fraction must be in (0, 1)");
    if (pretrain.corpus_file.empty()) throw_invalid("pretrain.corpus_file must be set");
}

std::string ExperimentConfig::digest() const { return sha256_hex(to_json()).substr(0, 16); }

EncoderSpec ExperimentConfig::encoder_spec() const {
    EncoderSpec spec;
    spec.modality = Modality::text;
    spec.embed_dim = encoder.embed_dim;
    spec.vocab_size = encoder.vocab_size;
    spec.max_seq_len = encoder.max_seq_len;
    spec.seed = derive_seed(seed, "encoder");
    return spec;
}

GenerationConfig ExperimentConfig::generation_config() const {
    GenerationConfig gen;
    gen.steps = generation.steps;
    gen.image_size = generation.image_size;
    gen.learning_rate = generation.learning_rate;
    gen.backtracking = generation.backtracking;
    gen.seed = derive_seed(seed, "generation");
    return gen;
}

TrainConfig ExperimentConfig::train_config() const {
    TrainConfig tc = TrainConfig::finetune_defaults(task_from_string(task));
    tc.epochs = train.epochs;
    tc.batch_size = train.batch_size;
    if (train.lr_set) tc.lr = train.lr;
    tc.weight_decay = train.weight_decay;
    tc.dropout = train.dropout;
    tc.patience = train.patience;
    tc.loss.lambda = train.lambda;
    tc.loss.lambda1 = train.lambda1;
    tc.loss.lambda2 = train.lambda2;
    tc.loss.batch_sum = train.batch_sum;
    tc.variant = fusion_variant_from_string(train.variant);
    tc.fusion_hidden = train.fusion_hidden;
    tc.fusion_out = train.fusion_out;
    tc.seed = derive_seed(seed, "train");
    return tc;
}

TrainConfig ExperimentConfig::pretrain_config() const {
    TrainConfig tc = TrainConfig::pretrain_defaults();
    tc.epochs = pretrain.epochs;
    tc.batch_size = pretrain.batch_size;
    tc.lr = pretrain.lr;
    tc.weight_decay = pretrain.weight_decay;
    tc.patience = pretrain.patience;
    tc.mask_prob = pretrain.mask_prob;
    tc.loss.lambda1 = train.lambda1;
    tc.loss.lambda2 = train.lambda2;
    tc.seed = derive_seed(seed, "pretrain");
    return tc;
}

FewShotSpec ExperimentConfig::few_shot_spec() const {
    FewShotSpec spec;
    spec.fraction = fraction;
    spec.stratified = stratified;
    spec.seed = derive_seed(seed, "sampler");
    return spec;
}

fs::path ExperimentConfig::run_dir() const { return fs::path(out_dir) / ("run-" + digest()); }

std::string ImagineSummary::summary_line() const {
    std::ostringstream out;
    out << "generated=" << generated << " skipped_cached=" << skipped_cached
        << " failed=" << failures.size();
    return out.str();
}

std::string ImagineSummary::to_json() const {
    json j;
    j["command"] = "imagine";
    j["generated"] = generated;
    j["skipped_cached"] = skipped_cached;
    j["failed"] = failures.size();
    j["failures"] = json::array();
    for (const auto& [hash, error] : failures)
        j["failures"].push_back({{"prompt_hash", hash}, {"error", error}});
    return j.dump();
}

ImagineSummary cmd_imagine(const ExperimentConfig& cfg) {
    cfg.validate();
    const TaskId id = task_from_string(cfg.task);
    const TaskSplits splits = load_task(task_dir(cfg), id);
    const std::vector<std::string> prompts = collect_prompts(splits);
    const GenerationConfig gen = cfg.generation_config();
    const ToyTextEncoder encoder(cfg.encoder_spec());
    ImaginationCache cache(cfg.cache_root);

    ImagineSummary summary;
    std::vector<std::size_t> pending;
    for (std::size_t i = 0; i < prompts.size(); ++i) {
        if (cache.contains(prompts[i], gen))
            ++summary.skipped_cached;
        else
            pending.push_back(i);
    }

    std::vector<std::optional<ImaginationRecord>> results(prompts.size());
    std::vector<std::string> errors(prompts.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        while (true) {
            const std::size_t slot = next.fetch_add(1);
            if (slot >= pending.size()) return;
            const std::size_t i = pending[slot];
            try {
                results[i] = generate_imagination(prompts[i], encoder, gen);
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
        }
    };
    const std::size_t n_threads = std::min(cfg.workers, std::max<std::size_t>(pending.size(), 1));
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t + 1 < n_threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    // Cache writes stay sequential and in input order so the manifest is
    // reproducible regardless of worker count.
    for (const std::size_t i : pending) {
        if (results[i]) {
            cache.put(*results[i]);
            ++summary.generated;
        } else {
            summary.failures.emplace_back(prompt_hash(prompts[i]), errors[i]);
        }
    }
    return summary;
}

RunReport cmd_finetune(const ExperimentConfig& cfg) {
    cfg.validate();
    const TaskId id = task_from_string(cfg.task);
    const TaskInfo& info = task_info(id);
    const TaskSplits splits = load_task(task_dir(cfg), id);
    const FewShotSpec fs_spec = cfg.few_shot_spec();
    const std::vector<TextExample> subset =
        few_shot_subset(splits.train, fs_spec, info.type == TaskType::regression);
    const std::string manifest = subset_manifest_jsonl(info.name, fs_spec, subset);

    const ToyTextEncoder encoder(cfg.encoder_spec());
    const ImaginationCache cache(cfg.cache_root);
    const GenerationConfig gen = cfg.generation_config();
    const auto train_set = prepare_examples(subset, id, encoder, cache, gen);
    const auto dev_set = prepare_examples(splits.dev, id, encoder, cache, gen);

    FinetuneModel model;
    RunReport report = finetune(train_set, dev_set, id, cfg.train_config(), model);
    report.config_digest = cfg.digest();
    report.subset_manifest_digest = sha256_hex(manifest).substr(0, 16);

    const fs::path dir = cfg.run_dir();
    fs::create_directories(dir);
    write_file(dir / "config.json", cfg.to_json());
    write_file(dir / "subset.jsonl", manifest);
    write_file(dir / "report.json", report.to_json());
    checkpoint_save((dir / "checkpoint.json").string(), as_const_refs(model.param_refs()));
    return report;
}

RunReport cmd_pretrain(const ExperimentConfig& cfg) {
    cfg.validate();
    fs::path corpus_path(cfg.pretrain.corpus_file);
    if (corpus_path.is_relative()) corpus_path = fs::path(cfg.data_dir) / corpus_path;
    const std::string text = read_file(corpus_path);

    const EncoderSpec spec = cfg.encoder_spec();
    std::vector<std::vector<std::uint32_t>> sequences;
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        TokenSequence seq = tokenize(line, spec);
        if (!seq.tokens.empty()) sequences.push_back(std::move(seq.tokens));
    }
    if (sequences.empty()) throw_precondition("pretraining corpus is empty: " + corpus_path.string());

    std::size_t heldout =
        std::max<std::size_t>(1, std::llround(cfg.pretrain.heldout_fraction * sequences.size()));
    if (heldout >= sequences.size())
        throw_precondition("pretraining corpus too small: " + std::to_string(sequences.size()) +
                           " sequences leave no training data after the held-out split");
    std::vector<std::vector<std::uint32_t>> train_corpus(sequences.begin(),
                                                         sequences.end() - heldout);
    std::vector<std::vector<std::uint32_t>> heldout_corpus(sequences.end() - heldout,
                                                           sequences.end());

    const ToyTextEncoder encoder(spec);
    Rng bank_rng(derive_seed(cfg.seed, "bank"));
    std::vector<Embedding> bank;
    bank.reserve(cfg.pretrain.bank_size);
    for (std::size_t i = 0; i < cfg.pretrain.bank_size; ++i)
        bank.push_back(l2_normalize(bank_rng.normal_vector(spec.embed_dim)));
    const std::vector<std::size_t> vokens = voken_table(encoder, bank);

    PretrainModel model =
        PretrainModel::seeded(spec.vocab_size, cfg.pretrain.hidden_dim, cfg.pretrain.bank_size,
                              spec.max_seq_len, derive_seed(cfg.seed, "pretrain:init"));
    RunReport report = pretrain(train_corpus, heldout_corpus, vokens, model, cfg.pretrain_config());
    report.config_digest = cfg.digest();

    const fs::path dir = cfg.run_dir();
    fs::create_directories(dir);
    write_file(dir / "config.json", cfg.to_json());
    write_file(dir / "report.json", report.to_json());
    checkpoint_save((dir / "checkpoint.json").string(), as_const_refs(model.param_refs()));
    return report;
}

std::map<std::string, double> cmd_evaluate(const ExperimentConfig& cfg) {
    cfg.validate();
    const fs::path ckpt = cfg.run_dir() / "checkpoint.json";
    if (!fs::exists(ckpt))
        throw_precondition("no checkpoint at " + ckpt.string() +
                           "; run finetune with this config first");

    const TaskId id = task_from_string(cfg.task);
    const TaskSplits splits = load_task(task_dir(cfg), id);
    const ToyTextEncoder encoder(cfg.encoder_spec());
    const ImaginationCache cache(cfg.cache_root);
    const auto dev_set = prepare_examples(splits.dev, id, encoder, cache, cfg.generation_config());

    FinetuneModel model = FinetuneModel::seeded(id, cfg.encoder.embed_dim, cfg.train_config());
    checkpoint_load(ckpt.string(), model.param_refs());
    const auto metrics = evaluate_model(model, dev_set, id);

    json j;
    j["task"] = task_info(id).name;
    j["split"] = "dev";
    j["metrics"] = metrics;
    write_file(cfg.run_dir() / "metrics.json", j.dump(2) + "\n");
    return metrics;
}

std::string cmd_report(const ExperimentConfig& cfg) {
    struct CsvRow {
        std::string task;
        double fraction;
        std::uint64_t seed;
        std::string variant;
        double lambda;
        std::string metric;
        double score;
    };
    std::vector<CsvRow> rows;
    const fs::path root(cfg.out_dir);
    if (fs::exists(root)) {
        for (const auto& entry : fs::directory_iterator(root)) {
            if (!entry.is_directory()) continue;
            const fs::path report_file = entry.path() / "report.json";
            const fs::path config_file = entry.path() / "config.json";
            if (!fs::exists(report_file) || !fs::exists(config_file)) continue;
            json rj;
            try {
                rj = json::parse(read_file(report_file));
            } catch (const json::exception& e) {
                throw_parse(report_file.string() + ": " + e.what());
            }
            if (rj.value("stage", "") != "finetune") continue;
            const ExperimentConfig run_cfg =
                ExperimentConfig::load(config_file);
            const TaskInfo& info = task_info(task_from_string(rj.at("task").get<std::string>()));
            const std::string key = primary_metric_key(info);
            const json& finals = rj.at("final_metrics");
            if (!finals.contains(key)) continue;
            rows.push_back({info.name, run_cfg.fraction, run_cfg.seed,
                            rj.at("variant").get<std::string>(), rj.at("lambda").get<double>(),
                            info.metric, finals.at(key).get<double>()});
        }
    }
    std::sort(rows.begin(), rows.end(), [](const CsvRow& a, const CsvRow& b) {
        return std::tie(a.task, a.fraction, a.seed, a.variant, a.lambda) <
               std::tie(b.task, b.fraction, b.seed, b.variant, b.lambda);
    });
    std::ostringstream csv;
    csv << "task,fraction,seed,variant,lambda,metric,score\n";
    for (const auto& r : rows) {
        csv << r.task << ',' << json(r.fraction).dump() << ',' << r.seed << ',' << r.variant << ','
            << json(r.lambda).dump() << ',' << r.metric << ',' << json(r.score).dump() << '\n';
    }
    fs::create_directories(root);
    write_file(root / "report.csv", csv.str());
    return csv.str();
}

std::string run_command(const ExperimentConfig& cfg, const std::string& command) {
    if (command == "imagine") {
        return cmd_imagine(cfg).to_json();
    }
    if (command == "finetune" || command == "pretrain") {
        const RunReport report = command == "finetune" ? cmd_finetune(cfg) : cmd_pretrain(cfg);
        json j;
        j["command"] = command;
        j["run_dir"] = cfg.run_dir().generic_string();
        j["report_digest"] = report.digest();
        j["report"] = json::parse(report.to_json());
        return j.dump();
    }
    if (command == "evaluate") {
        json j;
        j["command"] = "evaluate";
        j["task"] = task_info(task_from_string(cfg.task)).name;
        j["metrics"] = cmd_evaluate(cfg);
        return j.dump();
    }
    if (command == "report") {
        const std::string csv = cmd_report(cfg);
        json j;
        j["command"] = "report";
        j["path"] = (fs::path(cfg.out_dir) / "report.csv").generic_string();
        j["rows"] = std::count(csv.begin(), csv.end(), '\n') - 1;
        return j.dump();
    }
    throw_invalid("unknown command '" + command +
                  "' (expected imagine, pretrain, finetune, evaluate or report)");
}

}  // namespace iace
