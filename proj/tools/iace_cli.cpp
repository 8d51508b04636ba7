// Command-line front end. Talks to the engine exclusively through the C API in
// iace/iace.h; JSON in, JSON out.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <iace/iace.h>

namespace {

using nlohmann::json;

struct Options {
    std::string config_file;
    std::string task;
    std::string variant;
    std::string cache_root;
    std::string out_dir;
    std::string data_dir;
    std::string sweep_lambda;
    double fraction = 1.0;
    std::uint64_t seed = 0;
    double lambda = 0.5;
    std::uint64_t steps = 200;
    std::uint64_t workers = 1;
};

struct Flags {
    CLI::Option* task = nullptr;
    CLI::Option* fraction = nullptr;
    CLI::Option* seed = nullptr;
    CLI::Option* variant = nullptr;
    CLI::Option* lambda = nullptr;
    CLI::Option* steps = nullptr;
    CLI::Option* cache_root = nullptr;
    CLI::Option* out_dir = nullptr;
    CLI::Option* data_dir = nullptr;
    CLI::Option* workers = nullptr;
};

Flags add_common_flags(CLI::App* cmd, Options& opt) {
    Flags f;
    cmd->add_option("--config", opt.config_file, "experiment config JSON file");
    f.task = cmd->add_option("--task", opt.task, "task name (sst2, qnli, qqp, mnli, mrpc, stsb, swag)");
    f.fraction = cmd->add_option("--fraction", opt.fraction, "few-shot training fraction in (0, 1]");
    f.seed = cmd->add_option("--seed", opt.seed, "experiment seed");
    f.variant = cmd->add_option("--variant", opt.variant, "fusion variant");
    f.lambda = cmd->add_option("--lambda", opt.lambda, "joint loss balance in [0, 1]");
    f.steps = cmd->add_option("--steps", opt.steps, "imagination optimization steps");
    f.cache_root = cmd->add_option("--cache-root", opt.cache_root, "imagination cache directory");
    f.out_dir = cmd->add_option("--out", opt.out_dir, "output directory for run artifacts");
    f.data_dir = cmd->add_option("--data-dir", opt.data_dir, "dataset root directory");
    f.workers = cmd->add_option("--workers", opt.workers, "imagine worker pool width");
    return f;
}

class Handle {
public:
    Handle() : exp_(iace_experiment_create()) {}
    ~Handle() { iace_experiment_destroy(exp_); }
    Handle(const Handle&) = delete;
    Handle& operator=(const Handle&) = delete;
    iace_experiment* get() const { return exp_; }

private:
    iace_experiment* exp_;
};

// Prints the handle's error JSON to stderr and returns the status as exit code.
int fail(iace_experiment* exp, iace_status status) {
    const char* err = iace_experiment_error(exp);
    if (err && *err) {
        std::cerr << err << "\n";
    } else {
        std::cerr << R"({"code":)" << static_cast<int>(status) << R"(,"name":")"
                  << iace_status_name(status) << R"(","message":"command failed"})" << "\n";
    }
    return static_cast<int>(status);
}

int fail_message(const std::string& message) {
    json j{{"code", static_cast<int>(IACE_ERR_INTERNAL)},
           {"name", "internal"},
           {"message", message}};
    std::cerr << j.dump() << "\n";
    return static_cast<int>(IACE_ERR_INTERNAL);
}

iace_status apply_config(iace_experiment* exp, const Options& opt, const Flags& f,
                         double lambda_override, bool use_lambda_override) {
    iace_status st = IACE_OK;
    auto set = [&](const char* key, const std::string& value) {
        if (st == IACE_OK) st = iace_experiment_set(exp, key, value.c_str());
    };
    if (!opt.config_file.empty()) {
        st = iace_experiment_load_config_file(exp, opt.config_file.c_str());
        if (st != IACE_OK) return st;
    }
    // Precedence: flags beat IACE_CACHE_ROOT, which beats the config file.
    if (const char* env_root = std::getenv("IACE_CACHE_ROOT"); env_root && *env_root)
        set("cache_root", env_root);
    if (f.task->count()) set("task", opt.task);
    if (f.fraction->count()) set("fraction", std::to_string(opt.fraction));
    if (f.seed->count()) set("seed", std::to_string(opt.seed));
    if (f.variant->count()) set("train.variant", opt.variant);
    if (f.lambda->count()) set("train.lambda", std::to_string(opt.lambda));
    if (use_lambda_override) set("train.lambda", std::to_string(lambda_override));
    if (f.steps->count()) set("generation.steps", std::to_string(opt.steps));
    if (f.cache_root->count()) set("cache_root", opt.cache_root);
    if (f.out_dir->count()) set("out_dir", opt.out_dir);
    if (f.data_dir->count()) set("data_dir", opt.data_dir);
    if (f.workers->count()) set("workers", std::to_string(opt.workers));
    return st;
}

int run_simple(const Options& opt, const Flags& f, const std::string& command) {
    Handle handle;
    if (!handle.get()) return fail_message("could not allocate experiment handle");
    iace_status st = apply_config(handle.get(), opt, f, 0.0, false);
    if (st != IACE_OK) return fail(handle.get(), st);
    st = iace_experiment_run(handle.get(), command.c_str());
    if (st != IACE_OK) return fail(handle.get(), st);

    const std::string summary = iace_experiment_summary(handle.get());
    if (command == "imagine") {
        json j = json::parse(summary);
        std::cout << "generated=" << j.at("generated").get<std::size_t>()
                  << " skipped_cached=" << j.at("skipped_cached").get<std::size_t>()
                  << " failed=" << j.at("failed").get<std::size_t>() << "\n";
        if (j.at("failed").get<std::size_t>() > 0) {
            std::cerr << j.at("failures").dump() << "\n";
            return static_cast<int>(IACE_ERR_IO);
        }
        return 0;
    }
    std::cout << summary << "\n";
    return 0;
}

std::vector<double> parse_sweep(const std::string& text) {
    std::vector<double> values;
    std::size_t start = 0;
    while (start <= text.size()) {
        const std::size_t comma = text.find(',', start);
        const std::string item = text.substr(start, comma - start);
        if (!item.empty()) values.push_back(std::stod(item));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return values;
}

int run_finetune(const Options& opt, const Flags& f) {
    if (opt.sweep_lambda.empty()) return run_simple(opt, f, "finetune");

    std::vector<double> lambdas;
    try {
        lambdas = parse_sweep(opt.sweep_lambda);
    } catch (const std::exception&) {
        return fail_message("--sweep-lambda expects a comma-separated list of numbers");
    }
    if (lambdas.empty()) return fail_message("--sweep-lambda expects at least one value");
    for (const double lambda : lambdas) {
        Handle handle;
        if (!handle.get()) return fail_message("could not allocate experiment handle");
        iace_status st = apply_config(handle.get(), opt, f, lambda, true);
        if (st != IACE_OK) return fail(handle.get(), st);
        st = iace_experiment_run(handle.get(), "finetune");
        if (st != IACE_OK) return fail(handle.get(), st);
        std::cout << iace_experiment_summary(handle.get()) << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"imagination-augmented cross-modal experiment runner"};
    app.require_subcommand(1);
    app.footer("Cache root precedence: --cache-root flag, then IACE_CACHE_ROOT, then the config file.");

    Options opt;
    struct Sub {
        CLI::App* cmd;
        Flags flags;
        std::string name;
    };
    std::vector<Sub> subs;
    for (const char* name : {"imagine", "pretrain", "finetune", "evaluate", "report"}) {
        CLI::App* cmd = app.add_subcommand(name, std::string(name) + " stage");
        subs.push_back({cmd, add_common_flags(cmd, opt), name});
    }
    // finetune also accepts a lambda sweep
    subs[2].cmd->add_option("--sweep-lambda", opt.sweep_lambda,
                            "comma-separated lambda values; one finetune run each");

    CLI11_PARSE(app, argc, argv);

    try {
        for (const Sub& sub : subs) {
            if (!sub.cmd->parsed()) continue;
            if (sub.name == "finetune") return run_finetune(opt, sub.flags);
            return run_simple(opt, sub.flags, sub.name);
        }
    } catch (const std::exception& e) {
        return fail_message(e.what());
    }
    return fail_message("no command given");
}
