#pragma once

// Dataset and directory builders shared by the unit and acceptance tests.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <unistd.h>

#include "data.hpp"
#include "linalg.hpp"
#include "oracles.hpp"
#include "rng.hpp"
#include "trainer.hpp"

namespace testutil {

// Fresh directory under the system temp root; wiped if it already exists.
inline std::filesystem::path fresh_dir(const std::string& tag) {
    static std::atomic<std::uint64_t> counter{0};
    const auto p = std::filesystem::temp_directory_path() /
                   ("iace-test-" + tag + "-" + std::to_string(::getpid()) + "-" +
                    std::to_string(counter.fetch_add(1)));
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

// Balanced binary sentiment sentences. Every sentence across both splits is
// distinct, so the imagination cache entry count equals the sentence count.
inline std::vector<iace::TextExample> sentiment_examples(std::size_t n, std::size_t offset,
                                                         const std::string& split) {
    static const char* kGood[] = {"great", "wonderful", "delightful", "charming", "excellent",
                                  "joyous", "brilliant", "warm", "superb", "uplifting"};
    static const char* kBad[] = {"dull", "tedious", "boring", "clumsy", "poor",
                                 "joyless", "weak", "cold", "wooden", "dreary"};
    static const char* kNouns[] = {"movie", "film", "story", "script", "cast",
                                   "scene", "finale", "premise", "drama", "comedy"};
    std::vector<iace::TextExample> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t k = offset + i;
        const bool positive = k % 2 == 0;
        iace::TextExample ex;
        ex.example_id = split + ":" + std::to_string(i);
        ex.sentences = {std::string("a ") + (positive ? kGood[k / 2 % 10] : kBad[k / 2 % 10]) +
                        " " + kNouns[k / 4 % 10] + " take " + std::to_string(k)};
        ex.label = positive ? 1.0 : 0.0;
        out.push_back(std::move(ex));
    }
    return out;
}

// Writes <dir>/sst2/{train,dev}.tsv and returns the data root.
inline std::filesystem::path write_sst2_fixture(const std::filesystem::path& data_root,
                                                std::size_t n_train, std::size_t n_dev) {
    const auto dir = data_root / "sst2";
    std::filesystem::create_directories(dir);
    iace::write_split(dir / "train.tsv", iace::TaskId::sst2, sentiment_examples(n_train, 0, "train"));
    iace::write_split(dir / "dev.tsv", iace::TaskId::sst2,
                      sentiment_examples(n_dev, n_train, "dev"));
    return data_root;
}

// Planted-signal dataset: the label is the sign of w . (i1 + i2) for a fixed
// direction w, the imagination embeddings lean toward +/-w, and the text
// embeddings are label-independent noise.
struct PlantedData {
    std::vector<iace::PreparedExample> train;
    std::vector<iace::PreparedExample> dev;
    iace::Vec w;
};

inline PlantedData planted_dataset(std::size_t n_train, std::size_t n_dev, std::size_t dim,
                                   std::uint64_t seed) {
    iace::Rng rng(seed);
    PlantedData data;
    data.w = random_unit(rng, dim);
    auto dot = [](const iace::Vec& a, const iace::Vec& b) {
        double s = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
        return s;
    };
    auto make = [&](std::size_t n, const std::string& tag) {
        std::vector<iace::PreparedExample> out;
        out.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            const int label = static_cast<int>(i % 2);
            const double sgn = label == 1 ? 1.0 : -1.0;
            iace::Vec i1, i2;
            while (true) {
                auto lean = [&](void) {
                    iace::Vec x = rng.normal_vector(dim);
                    for (std::size_t d = 0; d < dim; ++d) x[d] = sgn * data.w[d] + 0.5 * x[d];
                    return iace::l2_normalize(x).values;
                };
                i1 = lean();
                i2 = lean();
                if ((dot(data.w, i1) + dot(data.w, i2) > 0.0) == (label == 1)) break;
            }
            iace::PreparedExample ex;
            ex.example_id = tag + ":" + std::to_string(i);
            ex.label = label;
            ex.t1 = random_unit(rng, dim);
            ex.t2 = random_unit(rng, dim);
            ex.i1 = i1;
            ex.i2 = i2;
            ex.lang_features = iace::concat(ex.t1, ex.t2);
            out.push_back(std::move(ex));
        }
        return out;
    };
    data.train = make(n_train, "train");
    data.dev = make(n_dev, "dev");
    return data;
}

// Small template-language corpus for pretraining tests: short determiner /
// adjective / noun / verb sentences over a closed vocabulary.
inline std::vector<std::string> template_corpus(std::size_t lines, std::uint64_t seed) {
    static const char* kDet[] = {"the", "a", "one", "that"};
    static const char* kAdj[] = {"red", "small", "bright", "quiet", "old", "fast"};
    static const char* kNoun[] = {"fox",   "tree",  "river", "stone", "bird",
                                  "house", "cloud", "horse", "road",  "lamp"};
    static const char* kVerb[] = {"sees",   "takes", "finds", "follows",
                                  "passes", "holds", "nears", "leaves"};
    iace::Rng rng(seed);
    std::vector<std::string> out;
    out.reserve(lines);
    for (std::size_t i = 0; i < lines; ++i) {
        std::string s = std::string(kDet[rng.below(4)]) + " " + kAdj[rng.below(6)] + " " +
                        kNoun[rng.below(10)] + " " + kVerb[rng.below(8)] + " " +
                        kDet[rng.below(4)] + " " + kNoun[rng.below(10)];
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace testutil
