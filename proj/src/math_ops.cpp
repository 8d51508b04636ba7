#include "math_ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "errors.hpp"
#include "rng.hpp"

namespace iace {

Embedding l2_normalize(const Vec& x) {
    if (x.empty()) throw_invalid("l2_normalize: empty vector");
    const double n = norm2(x);
    if (n == 0.0 || !std::isfinite(n)) {
        throw_invalid("l2_normalize: degenerate input (zero or non-finite norm)");
    }
    Embedding e{x};
    for (double& v : e.values) v /= n;
    return e;
}

bool is_unit_norm(const Vec& v, double tol) {
    return std::abs(norm2(v) - 1.0) <= tol;
}

namespace {

void check_spherical_inputs(const Embedding& t, const Embedding& v) {
    if (t.dim() != v.dim()) throw_invalid("spherical_loss: dimension mismatch");
    if (t.dim() < 2) throw_invalid("spherical_loss: dim must be >= 2");
    if (!is_unit_norm(t.values) || !is_unit_norm(v.values)) {
        throw_precondition("spherical_loss: inputs must be unit-norm (tol 1e-6)");
    }
}

}  // namespace

double spherical_loss(const Embedding& t, const Embedding& v) {
    check_spherical_inputs(t, v);
    double chord_sq = 0.0;
    for (std::size_t i = 0; i < t.dim(); ++i) {
        const double d = t.values[i] - v.values[i];
        chord_sq += d * d;
    }
    const double half_chord = std::clamp(std::sqrt(chord_sq) / 2.0, 0.0, 1.0);
    const double a = std::asin(half_chord);
    return 2.0 * a * a;
}

Vec spherical_loss_grad(const Embedding& t, const Embedding& v) {
    check_spherical_inputs(t, v);
    Vec diff(t.dim());
    double chord_sq = 0.0;
    for (std::size_t i = 0; i < t.dim(); ++i) {
        diff[i] = v.values[i] - t.values[i];
        chord_sq += diff[i] * diff[i];
    }
    const double u = std::sqrt(chord_sq) / 2.0;
    if (u == 0.0) return Vec(t.dim(), 0.0);  // stationary point of the loss
    // d/dv 2*asin(u)^2 = asin(u) / (u * sqrt(1 - u^2)) * (v - t);
    // cap u below 1 so the pole at antipodal pairs stays finite.
    const double uc = std::min(u, 1.0 - 1e-12);
    const double coef = std::asin(uc) / (uc * std::sqrt(1.0 - uc * uc));
    for (double& d : diff) d *= coef;
    return diff;
}

Vec softmax(const Vec& logits) {
    if (logits.empty()) throw_invalid("softmax: empty logits");
    const double m = *std::max_element(logits.begin(), logits.end());
    Vec out(logits.size());
    double z = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - m);
        z += out[i];
    }
    for (double& p : out) p /= z;
    return out;
}

double log_softmax_at(const Vec& logits, std::size_t idx) {
    if (idx >= logits.size()) throw_invalid("log_softmax_at: index out of range");
    const double m = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double l : logits) z += std::exp(l - m);
    return (logits[idx] - m) - std::log(z);
}

AttentionParams seeded_attention_params(std::size_t model_dim, std::size_t heads, std::size_t d_k,
                                        std::uint64_t seed) {
    if (model_dim == 0 || heads == 0 || d_k == 0) {
        throw_invalid("seeded_attention_params: dimensions must be positive");
    }
    AttentionParams p;
    p.heads = heads;
    p.d_k = d_k;
    const double scale = 1.0 / std::sqrt(static_cast<double>(model_dim));
    for (std::size_t h = 0; h < heads; ++h) {
        Rng rng(derive_seed(seed, "attn-head-" + std::to_string(h)));
        Matrix q(model_dim, d_k), k(model_dim, d_k), v(model_dim, d_k);
        for (auto& x : q.data) x = scale * rng.next_normal();
        for (auto& x : k.data) x = scale * rng.next_normal();
        for (auto& x : v.data) x = scale * rng.next_normal();
        p.w_query.push_back(std::move(q));
        p.w_key.push_back(std::move(k));
        p.w_value.push_back(std::move(v));
    }
    Rng rng(derive_seed(seed, "attn-out"));
    p.w_out = Matrix(heads * d_k, model_dim);
    const double out_scale = 1.0 / std::sqrt(static_cast<double>(heads * d_k));
    for (auto& x : p.w_out.data) x = out_scale * rng.next_normal();
    return p;
}

namespace {

void check_attention_shapes(const Matrix& tokens, const AttentionParams& p) {
    if (tokens.rows == 0) throw_invalid("multi_head_self_attention: no token rows");
    if (p.heads == 0 || p.w_query.size() != p.heads || p.w_key.size() != p.heads ||
        p.w_value.size() != p.heads) {
        throw_invalid("multi_head_self_attention: head count / projection mismatch");
    }
    for (std::size_t h = 0; h < p.heads; ++h) {
        const bool ok = p.w_query[h].rows == tokens.cols && p.w_query[h].cols == p.d_k &&
                        p.w_key[h].rows == tokens.cols && p.w_key[h].cols == p.d_k &&
                        p.w_value[h].rows == tokens.cols && p.w_value[h].cols == p.d_k;
        if (!ok) throw_invalid("multi_head_self_attention: per-head projection shape mismatch");
    }
    if (p.w_out.rows != p.heads * p.d_k) {
        throw_invalid("multi_head_self_attention: output projection shape mismatch");
    }
}

}  // namespace

Matrix multi_head_self_attention(const Matrix& tokens, const AttentionParams& params) {
    check_attention_shapes(tokens, params);
    const std::size_t n = tokens.rows;
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(params.d_k));

    Matrix heads_concat(n, params.heads * params.d_k);
    for (std::size_t h = 0; h < params.heads; ++h) {
        Matrix q = matmul(tokens, params.w_query[h]);  // n x d_k
        Matrix k = matmul(tokens, params.w_key[h]);
        Matrix v = matmul(tokens, params.w_value[h]);
        for (std::size_t i = 0; i < n; ++i) {
            Vec scores(n);
            for (std::size_t j = 0; j < n; ++j) {
                double s = 0.0;
                for (std::size_t c = 0; c < params.d_k; ++c) s += q.at(i, c) * k.at(j, c);
                scores[j] = s * inv_sqrt_dk;
            }
            const Vec weights = softmax(scores);
            for (std::size_t c = 0; c < params.d_k; ++c) {
                double s = 0.0;
                for (std::size_t j = 0; j < n; ++j) s += weights[j] * v.at(j, c);
                heads_concat.at(i, h * params.d_k + c) = s;
            }
        }
    }
    return matmul(heads_concat, params.w_out);
}

}  // namespace iace
