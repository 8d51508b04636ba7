#include "fusion.hpp"

#include <cmath>

#include "errors.hpp"

namespace iace {

std::string to_string(FusionVariant v) {
    switch (v) {
        case FusionVariant::bidirectional_vt: return "bidirectional_vt";
        case FusionVariant::direction: return "direction";
        case FusionVariant::unify: return "unify";
        case FusionVariant::textual_only: return "textual_only";
        case FusionVariant::visual_only: return "visual_only";
        case FusionVariant::visual_textual: return "visual_textual";
    }
    return "unknown";
}

FusionVariant fusion_variant_from_string(const std::string& name) {
    if (name == "bidirectional_vt") return FusionVariant::bidirectional_vt;
    if (name == "direction") return FusionVariant::direction;
    if (name == "unify") return FusionVariant::unify;
    if (name == "textual_only") return FusionVariant::textual_only;
    if (name == "visual_only") return FusionVariant::visual_only;
    if (name == "visual_textual") return FusionVariant::visual_textual;
    throw_invalid("unknown fusion variant: " + name +
                  " (expected bidirectional_vt|direction|unify|textual_only|visual_only|visual_textual)");
}

std::size_t fusion_branch_count(FusionVariant v) {
    return v == FusionVariant::unify ? 4 : 2;
}

void FusionParams::validate() const {
    if (embed_dim == 0 || hidden_dim == 0 || out_dim == 0) {
        throw_invalid("FusionParams: dimensions must be positive");
    }
    if (branch_count != 2 && branch_count != 4) {
        throw_invalid("FusionParams: branch_count must be 2 or 4");
    }
    auto expect = [](const Matrix& m, std::size_t r, std::size_t c, const char* name) {
        if (m.rows != r || m.cols != c) {
            throw_invalid(std::string("FusionParams: ") + name + " has wrong shape");
        }
    };
    expect(Wt, hidden_dim, embed_dim, "Wt");
    expect(bt, 1, hidden_dim, "bt");
    expect(Wv, hidden_dim, embed_dim, "Wv");
    expect(bv, 1, hidden_dim, "bv");
    expect(post1W, hidden_dim, concat_width(), "post1.W");
    expect(post1b, 1, hidden_dim, "post1.b");
    expect(post2W, out_dim, hidden_dim, "post2.W");
    expect(post2b, 1, out_dim, "post2.b");
}

ParamRefs FusionParams::param_refs() {
    return {
        {"fuse.Wt", &Wt},         {"fuse.bt", &bt},
        {"fuse.Wv", &Wv},         {"fuse.bv", &bv},
        {"fuse.post1.W", &post1W}, {"fuse.post1.b", &post1b},
        {"fuse.post2.W", &post2W}, {"fuse.post2.b", &post2b},
    };
}

ConstParamRefs FusionParams::param_refs() const {
    return {
        {"fuse.Wt", &Wt},         {"fuse.bt", &bt},
        {"fuse.Wv", &Wv},         {"fuse.bv", &bv},
        {"fuse.post1.W", &post1W}, {"fuse.post1.b", &post1b},
        {"fuse.post2.W", &post2W}, {"fuse.post2.b", &post2b},
    };
}

FusionParams FusionParams::zeros(std::size_t embed, std::size_t hidden, std::size_t out,
                                 std::size_t branches) {
    FusionParams p;
    p.embed_dim = embed;
    p.hidden_dim = hidden;
    p.out_dim = out;
    p.branch_count = branches;
    p.Wt = Matrix(hidden, embed);
    p.bt = Matrix(1, hidden);
    p.Wv = Matrix(hidden, embed);
    p.bv = Matrix(1, hidden);
    p.post1W = Matrix(hidden, p.concat_width());
    p.post1b = Matrix(1, hidden);
    p.post2W = Matrix(out, hidden);
    p.post2b = Matrix(1, out);
    p.validate();
    return p;
}

static void init_matrix(Matrix& m, std::uint64_t seed, const std::string& label) {
    Rng rng(derive_seed(seed, "fusion:" + label));
    const double scale = 1.0 / std::sqrt(static_cast<double>(m.cols));
    for (double& x : m.data) x = rng.next_normal() * scale;
}

FusionParams FusionParams::seeded(std::size_t embed, std::size_t hidden, std::size_t out,
                                  std::uint64_t seed, std::size_t branches) {
    FusionParams p = zeros(embed, hidden, out, branches);
    init_matrix(p.Wt, seed, "Wt");
    init_matrix(p.Wv, seed, "Wv");
    init_matrix(p.post1W, seed, "post1.W");
    init_matrix(p.post2W, seed, "post2.W");
    return p;  // biases stay zero
}

static Vec affine(const Matrix& w, const Matrix& b, const Vec& x) {
    Vec y = matvec(w, x);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += b.data[i];
    return y;
}

static Vec relu(const Vec& x) {
    Vec y = x;
    for (double& v : y) v = v > 0.0 ? v : 0.0;
    return y;
}

static Vec fuse_slots(const std::vector<Vec>& inputs, const std::vector<bool>& text_branch,
                      const FusionParams& p, double dropout_rate, Rng* rng, FuseCache& cache) {
    p.validate();
    if (inputs.size() != p.branch_count) {
        throw_invalid("fuse: expected " + std::to_string(p.branch_count) + " branch inputs, got " +
                      std::to_string(inputs.size()));
    }
    if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
        throw_invalid("fuse: dropout_rate must be in [0, 1)");
    }
    cache.inputs = inputs;
    cache.text_branch = text_branch;
    cache.z.clear();
    cache.x.clear();
    cache.x.reserve(p.concat_width());
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        if (inputs[k].size() != p.embed_dim) {
            throw_invalid("fuse: branch " + std::to_string(k) + " has dimension " +
                          std::to_string(inputs[k].size()) + ", expected " +
                          std::to_string(p.embed_dim));
        }
        const Matrix& w = text_branch[k] ? p.Wt : p.Wv;
        const Matrix& b = text_branch[k] ? p.bt : p.bv;
        Vec z = affine(w, b, inputs[k]);
        Vec a = relu(z);
        cache.z.push_back(std::move(z));
        cache.x.insert(cache.x.end(), a.begin(), a.end());
    }

    cache.z1 = affine(p.post1W, p.post1b, cache.x);
    cache.h1 = relu(cache.z1);

    if (dropout_rate > 0.0 && rng != nullptr) {
        const double keep = 1.0 - dropout_rate;
        cache.mask.resize(cache.h1.size());
        cache.h1_dropped.resize(cache.h1.size());
        for (std::size_t i = 0; i < cache.h1.size(); ++i) {
            const bool kept = rng->next_double() >= dropout_rate;
            cache.mask[i] = kept ? 1.0 / keep : 0.0;
            cache.h1_dropped[i] = cache.h1[i] * cache.mask[i];
        }
    } else {
        cache.mask.clear();
        cache.h1_dropped = cache.h1;
    }

    cache.out = affine(p.post2W, p.post2b, cache.h1_dropped);
    return cache.out;
}

Vec fuse_forward(const Vec& text_in, const Vec& visual_in, const FusionParams& p,
                 double dropout_rate, Rng* rng, FuseCache& cache) {
    if (p.branch_count != 2) throw_invalid("fuse: params built for unify need four inputs");
    return fuse_slots({text_in, visual_in}, {true, false}, p, dropout_rate, rng, cache);
}

Vec fuse(const Vec& text_in, const Vec& visual_in, const FusionParams& p) {
    FuseCache cache;
    return fuse_forward(text_in, visual_in, p, 0.0, nullptr, cache);
}

std::vector<Vec> fuse_backward(const Vec& dout, const FusionParams& p, const FuseCache& cache,
                               FusionParams& grads) {
    if (dout.size() != p.out_dim) throw_invalid("fuse_backward: dout dimension mismatch");

    // out = post2W * h1_dropped + post2b
    for (std::size_t i = 0; i < dout.size(); ++i) grads.post2b.data[i] += dout[i];
    add_outer(grads.post2W, dout, cache.h1_dropped);
    Vec dh1d = matvec_t(p.post2W, dout);

    // dropout then ReLU on z1
    Vec dz1(cache.z1.size());
    for (std::size_t i = 0; i < dz1.size(); ++i) {
        double g = dh1d[i];
        if (!cache.mask.empty()) g *= cache.mask[i];
        dz1[i] = cache.z1[i] > 0.0 ? g : 0.0;
    }
    for (std::size_t i = 0; i < dz1.size(); ++i) grads.post1b.data[i] += dz1[i];
    add_outer(grads.post1W, dz1, cache.x);
    Vec dx = matvec_t(p.post1W, dz1);

    std::vector<Vec> dinputs;
    dinputs.reserve(cache.inputs.size());
    std::size_t offset = 0;
    for (std::size_t k = 0; k < cache.inputs.size(); ++k) {
        Vec dz(p.hidden_dim);
        for (std::size_t i = 0; i < p.hidden_dim; ++i) {
            dz[i] = cache.z[k][i] > 0.0 ? dx[offset + i] : 0.0;
        }
        Matrix& gw = cache.text_branch[k] ? grads.Wt : grads.Wv;
        Matrix& gb = cache.text_branch[k] ? grads.bt : grads.bv;
        add_outer(gw, dz, cache.inputs[k]);
        for (std::size_t i = 0; i < p.hidden_dim; ++i) gb.data[i] += dz[i];
        const Matrix& w = cache.text_branch[k] ? p.Wt : p.Wv;
        dinputs.push_back(matvec_t(w, dz));
        offset += p.hidden_dim;
    }
    return dinputs;
}

static const Vec& require(const Vec* v, const char* slot, FusionVariant variant) {
    if (v == nullptr) {
        throw_invalid("apply_variant: " + to_string(variant) + " requires embedding " + slot);
    }
    return *v;
}

static Vec diff(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw_invalid("apply_variant: direction inputs differ in dimension");
    Vec d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
    return d;
}

Vec apply_variant_forward(FusionVariant v, const VariantInputs& in, const FusionParams& p,
                          double dropout_rate, Rng* rng, VariantCache& cache) {
    if (p.branch_count != fusion_branch_count(v)) {
        throw_invalid("apply_variant: params built for " + std::to_string(p.branch_count) +
                      " branches, but " + to_string(v) + " needs " +
                      std::to_string(fusion_branch_count(v)));
    }
    // Pair slots default to the first sentence on single-sentence tasks.
    const Vec* t2 = in.t2 != nullptr ? in.t2 : in.t1;
    const Vec* i2 = in.i2 != nullptr ? in.i2 : in.i1;

    cache.branches.clear();
    switch (v) {
        case FusionVariant::bidirectional_vt: {
            const Vec& t1v = require(in.t1, "t1", v);
            const Vec& i1v = require(in.i1, "i1", v);
            const Vec& t2v = require(t2, "t2", v);
            const Vec& i2v = require(i2, "i2", v);
            cache.branches.resize(2);
            Vec a = fuse_slots({t1v, i2v}, {true, false}, p, dropout_rate, rng, cache.branches[0]);
            Vec b = fuse_slots({i1v, t2v}, {true, false}, p, dropout_rate, rng, cache.branches[1]);
            cache.out.resize(a.size());
            for (std::size_t i = 0; i < a.size(); ++i) cache.out[i] = a[i] + b[i];
            return cache.out;
        }
        case FusionVariant::direction: {
            Vec d1 = diff(require(in.t1, "t1", v), require(in.i1, "i1", v));
            Vec d2 = diff(require(t2, "t2", v), require(i2, "i2", v));
            cache.branches.resize(1);
            cache.out = fuse_slots({d1, d2}, {true, false}, p, dropout_rate, rng, cache.branches[0]);
            return cache.out;
        }
        case FusionVariant::unify: {
            const Vec& t1v = require(in.t1, "t1", v);
            const Vec& t2v = require(t2, "t2", v);
            const Vec& i1v = require(in.i1, "i1", v);
            const Vec& i2v = require(i2, "i2", v);
            cache.branches.resize(1);
            cache.out = fuse_slots({t1v, t2v, i1v, i2v}, {true, true, false, false}, p,
                                   dropout_rate, rng, cache.branches[0]);
            return cache.out;
        }
        case FusionVariant::textual_only: {
            cache.branches.resize(1);
            cache.out = fuse_slots({require(in.t1, "t1", v), require(t2, "t2", v)}, {true, false},
                                   p, dropout_rate, rng, cache.branches[0]);
            return cache.out;
        }
        case FusionVariant::visual_only: {
            cache.branches.resize(1);
            cache.out = fuse_slots({require(in.i1, "i1", v), require(i2, "i2", v)}, {true, false},
                                   p, dropout_rate, rng, cache.branches[0]);
            return cache.out;
        }
        case FusionVariant::visual_textual: {
            cache.branches.resize(1);
            cache.out = fuse_slots({require(in.i1, "i1", v), require(t2, "t2", v)}, {true, false},
                                   p, dropout_rate, rng, cache.branches[0]);
            return cache.out;
        }
    }
    throw_invalid("apply_variant: unhandled variant");
}

Vec apply_variant(FusionVariant v, const VariantInputs& in, const FusionParams& p) {
    VariantCache cache;
    return apply_variant_forward(v, in, p, 0.0, nullptr, cache);
}

void apply_variant_backward(const Vec& dout, FusionVariant v, const FusionParams& p,
                            const VariantCache& cache, FusionParams& grads) {
    if (v == FusionVariant::bidirectional_vt) {
        if (cache.branches.size() != 2) throw_invalid("apply_variant_backward: stale cache");
        fuse_backward(dout, p, cache.branches[0], grads);
        fuse_backward(dout, p, cache.branches[1], grads);
        return;
    }
    if (cache.branches.size() != 1) throw_invalid("apply_variant_backward: stale cache");
    fuse_backward(dout, p, cache.branches[0], grads);
}

}  // namespace iace
