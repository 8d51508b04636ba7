#include "iace/iace.h"

#include <json.hpp>

#include <cstring>
#include <string>

#include "errors.hpp"
#include "experiment.hpp"
#include "math_ops.hpp"

using nlohmann::json;

struct iace_experiment {
    iace::ExperimentConfig config;
    std::string summary;
    std::string error;
    std::string scratch;  // backs config/digest string returns
};

namespace {

static_assert(static_cast<int>(IACE_ERR_INVALID_ARGUMENT) ==
              static_cast<int>(iace::ErrorCode::invalid_argument));
static_assert(static_cast<int>(IACE_ERR_PRECONDITION) ==
              static_cast<int>(iace::ErrorCode::precondition));
static_assert(static_cast<int>(IACE_ERR_IO) == static_cast<int>(iace::ErrorCode::io));
static_assert(static_cast<int>(IACE_ERR_PARSE) == static_cast<int>(iace::ErrorCode::parse));
static_assert(static_cast<int>(IACE_ERR_INTEGRITY) == static_cast<int>(iace::ErrorCode::integrity));
static_assert(static_cast<int>(IACE_ERR_INTERNAL) == static_cast<int>(iace::ErrorCode::internal));

std::string error_json(iace_status code, const std::string& message, const std::string& details) {
    json j;
    j["code"] = static_cast<int>(code);
    j["name"] = iace_status_name(code);
    j["message"] = message;
    if (details.empty()) {
        j["details"] = nullptr;
    } else {
        try {
            j["details"] = json::parse(details);
        } catch (const json::exception&) {
            j["details"] = details;
        }
    }
    return j.dump();
}

// Runs `fn`, routing any failure into the handle's error slot.
template <typename Fn>
iace_status guarded(iace_experiment* exp, Fn&& fn) {
    if (!exp) return IACE_ERR_INVALID_ARGUMENT;
    exp->error.clear();
    try {
        fn();
        return IACE_OK;
    } catch (const iace::IaceError& e) {
        const auto code = static_cast<iace_status>(static_cast<int>(e.code()));
        exp->error = error_json(code, e.what(), e.details_json());
        return code;
    } catch (const std::exception& e) {
        exp->error = error_json(IACE_ERR_INTERNAL, e.what(), "");
        return IACE_ERR_INTERNAL;
    }
}

// Stateless variant: no handle to record the message on.
template <typename Fn>
iace_status guarded_status(Fn&& fn) {
    try {
        fn();
        return IACE_OK;
    } catch (const iace::IaceError& e) {
        return static_cast<iace_status>(static_cast<int>(e.code()));
    } catch (const std::exception&) {
        return IACE_ERR_INTERNAL;
    }
}

}  // namespace

extern "C" {

const char* iace_status_name(iace_status status) {
    switch (status) {
        case IACE_OK:
            return "ok";
        case IACE_ERR_INVALID_ARGUMENT:
            return "invalid_argument";
        case IACE_ERR_PRECONDITION:
            return "precondition";
        case IACE_ERR_IO:
            return "io";
        case IACE_ERR_PARSE:
            return "parse";
        case IACE_ERR_INTEGRITY:
            return "integrity";
        case IACE_ERR_INTERNAL:
            return "internal";
    }
    return "unknown";
}

iace_experiment* iace_experiment_create(void) {
    try {
        return new iace_experiment();
    } catch (...) {
        return nullptr;
    }
}

void iace_experiment_destroy(iace_experiment* exp) { delete exp; }

iace_status iace_experiment_load_config(iace_experiment* exp, const char* json_text) {
    return guarded(exp, [&] {
        if (!json_text) iace::throw_invalid("load_config: json_text is null");
        exp->config = iace::ExperimentConfig::from_json(json_text, "config");
    });
}

iace_status iace_experiment_load_config_file(iace_experiment* exp, const char* path) {
    return guarded(exp, [&] {
        if (!path) iace::throw_invalid("load_config_file: path is null");
        exp->config = iace::ExperimentConfig::load(path);
    });
}

iace_status iace_experiment_set(iace_experiment* exp, const char* dotted_key, const char* value) {
    return guarded(exp, [&] {
        if (!dotted_key || !value) iace::throw_invalid("set: key and value must be non-null");
        exp->config.set_field(dotted_key, value);
    });
}

const char* iace_experiment_config(iace_experiment* exp) {
    if (!exp) return "";
    exp->scratch = exp->config.to_json();
    return exp->scratch.c_str();
}

const char* iace_experiment_config_digest(iace_experiment* exp) {
    if (!exp) return "";
    exp->scratch = exp->config.digest();
    return exp->scratch.c_str();
}

iace_status iace_experiment_run(iace_experiment* exp, const char* command) {
    return guarded(exp, [&] {
        if (!command) iace::throw_invalid("run: command is null");
        exp->summary = iace::run_command(exp->config, command);
    });
}

const char* iace_experiment_summary(const iace_experiment* exp) {
    return exp ? exp->summary.c_str() : "";
}

const char* iace_experiment_error(const iace_experiment* exp) {
    return exp ? exp->error.c_str() : "";
}

iace_status iace_l2_normalize(const double* in, size_t n, double* out) {
    return guarded_status([&] {
        if (!in || !out || n == 0) iace::throw_invalid("l2_normalize: null buffer or empty input");
        const iace::Embedding e = iace::l2_normalize(iace::Vec(in, in + n));
        std::memcpy(out, e.values.data(), n * sizeof(double));
    });
}

iace_status iace_spherical_loss(const double* target, const double* value, size_t n,
                                double* loss_out) {
    return guarded_status([&] {
        if (!target || !value || !loss_out || n == 0)
            iace::throw_invalid("spherical_loss: null buffer or empty input");
        iace::Embedding t{iace::Vec(target, target + n)};
        iace::Embedding v{iace::Vec(value, value + n)};
        *loss_out = iace::spherical_loss(t, v);
    });
}

iace_status iace_spherical_loss_grad(const double* target, const double* value, size_t n,
                                     double* grad_out, double* loss_out) {
    return guarded_status([&] {
        if (!target || !value || !grad_out || n == 0)
            iace::throw_invalid("spherical_loss_grad: null buffer or empty input");
        iace::Embedding t{iace::Vec(target, target + n)};
        iace::Embedding v{iace::Vec(value, value + n)};
        const iace::Vec g = iace::spherical_loss_grad(t, v);
        std::memcpy(grad_out, g.data(), n * sizeof(double));
        if (loss_out) *loss_out = iace::spherical_loss(t, v);
    });
}

}  // extern "C"
