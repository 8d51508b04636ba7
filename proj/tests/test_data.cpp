#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include <json.hpp>

#include "data.hpp"
#include "errors.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using iace::FewShotRegime;
using iace::FewShotSpec;
using iace::TaskId;
using iace::TextExample;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& file, const std::string& text) {
    std::ofstream out(file, std::ios::binary);
    out << text;
}

TextExample pair_example(const std::string& id, const std::string& a, const std::string& b,
                         double label) {
    TextExample ex;
    ex.example_id = id;
    ex.sentences = {a, b};
    ex.label = label;
    return ex;
}

}  // namespace

TEST_CASE("task names resolve with aliases and case folding") {
    CHECK(iace::task_from_string("sst2") == TaskId::sst2);
    CHECK(iace::task_from_string("SST-2") == TaskId::sst2);
    CHECK(iace::task_from_string("STS-B") == TaskId::stsb);
    CHECK(iace::task_from_string("QQP") == TaskId::qqp);
    CHECK(iace::task_from_string("MNLI") == TaskId::mnli);
    const std::string msg =
        testutil::error_message_of([] { iace::task_from_string("imdb"); });
    CHECK(msg.find("imdb") != std::string::npos);
    CHECK(msg.find("sst2") != std::string::npos);  // lists the known names
    CHECK(iace::all_tasks().size() == 7);
}

TEST_CASE("task registry metadata") {
    CHECK(iace::task_info(TaskId::stsb).type == iace::TaskType::regression);
    CHECK(iace::task_info(TaskId::stsb).metric == "correlation");
    CHECK(iace::task_info(TaskId::mrpc).metric == "acc_f1_avg");
    CHECK(iace::task_info(TaskId::qqp).metric == "acc_f1_avg");
    CHECK(iace::task_info(TaskId::mnli).num_classes == 3);
    CHECK(iace::task_info(TaskId::swag).multiple_choice);
    CHECK(iace::task_info(TaskId::swag).sentence_arity == 4);
    CHECK_FALSE(iace::task_info(TaskId::sst2).multiple_choice);
}

TEST_CASE("tsv parsing keeps fields, lines, and carriage returns straight") {
    const auto rows = iace::parse_tsv("a\tb\n\nx\ty\r\nlast\t\n", "mem");
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].fields == std::vector<std::string>{"a", "b"});
    CHECK(rows[0].line == 1);
    CHECK(rows[1].fields == std::vector<std::string>{"x", "y"});
    CHECK(rows[1].line == 3);  // blank line 2 is skipped
    CHECK(rows[2].fields == std::vector<std::string>{"last", ""});

    CHECK(testutil::error_code_of([] { iace::parse_tsv("", "mem"); }) ==
          iace::ErrorCode::parse);
    CHECK(testutil::error_message_of([] { iace::parse_tsv("", "mem"); }).find("mem") !=
          std::string::npos);
}

TEST_CASE("csv parsing handles RFC 4180 quoting") {
    const std::string text =
        "id,text,label\n"
        "1,\"hello, world\",0\n"
        "2,\"a \"\"quoted\"\" word\",1\n"
        "3,\"line one\nline two\",0\n"
        "4,plain,1\r\n";
    const auto rows = iace::parse_csv(text, "mem");
    REQUIRE(rows.size() == 5);
    CHECK(rows[1].fields[1] == "hello, world");
    CHECK(rows[2].fields[1] == "a \"quoted\" word");
    CHECK(rows[3].fields[1] == "line one\nline two");
    CHECK(rows[3].line == 4);
    CHECK(rows[4].line == 6);  // the embedded newline consumed one line number
    CHECK(rows[4].fields == std::vector<std::string>{"4", "plain", "1"});

    CHECK(testutil::error_code_of([] { iace::parse_csv("a,\"open\n", "mem"); }) ==
          iace::ErrorCode::parse);
    const std::string quote_msg =
        testutil::error_message_of([] { iace::parse_csv("x,ab\"cd\n", "mem"); });
    CHECK(quote_msg.find("line 1") != std::string::npos);
    CHECK(testutil::error_code_of([] { iace::parse_csv("\n\n", "mem"); }) ==
          iace::ErrorCode::parse);
}

TEST_CASE("csv records can start with an empty field") {
    const auto rows = iace::parse_csv(",x,y\n", "mem");
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].fields == std::vector<std::string>{"", "x", "y"});
}

TEST_CASE("every task round-trips through its on-disk format") {
    const fs::path dir = testutil::fresh_dir("roundtrip");

    auto roundtrip = [&](TaskId task, const std::vector<TextExample>& examples,
                         const std::string& fname) {
        const fs::path file = dir / fname;
        iace::write_split(file, task, examples);
        const auto loaded = iace::load_split(file, task, "train");
        REQUIRE(loaded.size() == examples.size());
        for (std::size_t i = 0; i < examples.size(); ++i) {
            CHECK(loaded[i].sentences == examples[i].sentences);
            CHECK(loaded[i].label == examples[i].label);
        }
        return loaded;
    };

    SUBCASE("sst2") {
        std::vector<TextExample> ex;
        ex.push_back({"train:0", "", {"a fine movie"}, 1.0, true});
        ex.push_back({"train:1", "", {"dreadful pacing"}, 0.0, true});
        roundtrip(TaskId::sst2, ex, "sst2.tsv");
    }
    SUBCASE("qnli") {
        roundtrip(TaskId::qnli,
                  {pair_example("train:0", "what is it?", "it is a test", 0.0),
                   pair_example("train:1", "who did it?", "nobody knows", 1.0)},
                  "qnli.tsv");
    }
    SUBCASE("qqp") {
        roundtrip(TaskId::qqp,
                  {pair_example("train:0", "how to cook rice", "how do I cook rice", 1.0),
                   pair_example("train:1", "how to cook rice", "where is mars", 0.0)},
                  "qqp.tsv");
    }
    SUBCASE("mnli") {
        roundtrip(TaskId::mnli,
                  {pair_example("train:0", "a man eats", "a person eats", 1.0),
                   pair_example("train:1", "a man eats", "nobody eats", 0.0),
                   pair_example("train:2", "a man eats", "he might be hungry", 2.0)},
                  "mnli.tsv");
    }
    SUBCASE("mrpc") {
        roundtrip(TaskId::mrpc,
                  {pair_example("train:0", "the deal closed", "the deal was closed", 1.0),
                   pair_example("train:1", "the deal closed", "rain fell in spain", 0.0)},
                  "mrpc.tsv");
    }
    SUBCASE("stsb") {
        const auto loaded = roundtrip(
            TaskId::stsb,
            {pair_example("train:0", "a cat sits", "a cat is sitting", 4.75),
             pair_example("train:1", "a cat sits", "stocks fell", 0.0),
             pair_example("train:2", "a cat sits", "a dog sits", 2.5)},
            "stsb.tsv");
        CHECK(loaded[0].label == 4.75);
    }
    SUBCASE("swag, including commas and quotes in endings") {
        TextExample ex;
        ex.example_id = "train:0";
        ex.context = "He opens the door.";
        ex.sentences = {"He walks in, smiling.", "He says \"hello\".", "He leaves.",
                        "He waits."};
        ex.label = 1.0;
        const fs::path file = dir / "swag.csv";
        iace::write_split(file, TaskId::swag, {ex});
        const auto loaded = iace::load_split(file, TaskId::swag, "train");
        REQUIRE(loaded.size() == 1);
        CHECK(loaded[0].context == ex.context);
        CHECK(loaded[0].sentences == ex.sentences);
        CHECK(loaded[0].label == 1.0);
    }
}

TEST_CASE("write_split rejects fields that cannot round-trip") {
    const fs::path dir = testutil::fresh_dir("tsv-safe");
    TextExample ex;
    ex.example_id = "train:0";
    ex.sentences = {"has a\ttab"};
    ex.label = 0.0;
    CHECK(testutil::error_code_of([&] {
              iace::write_split(dir / "bad.tsv", TaskId::sst2, {ex});
          }) == iace::ErrorCode::invalid_argument);

    TextExample wrong_arity;
    wrong_arity.example_id = "train:0";
    wrong_arity.sentences = {"only one"};
    CHECK(testutil::error_code_of([&] {
              iace::write_split(dir / "bad2.tsv", TaskId::qnli, {wrong_arity});
          }) == iace::ErrorCode::invalid_argument);
}

TEST_CASE("load_split reports precise parse failures") {
    const fs::path dir = testutil::fresh_dir("load-errors");

    write_text(dir / "nocol.tsv", "sentence\n good movie\n");
    const std::string missing =
        testutil::error_message_of([&] { iace::load_split(dir / "nocol.tsv", TaskId::sst2, "train"); });
    CHECK(missing.find("missing column 'label'") != std::string::npos);

    write_text(dir / "width.tsv", "sentence\tlabel\nok\t1\nshort\n");
    const std::string width =
        testutil::error_message_of([&] { iace::load_split(dir / "width.tsv", TaskId::sst2, "train"); });
    CHECK(width.find("line 3: expected 2 fields, got 1") != std::string::npos);

    write_text(dir / "badint.tsv", "sentence\tlabel\nok\t1\nbad\ttwo\n");
    const std::string badint =
        testutil::error_message_of([&] { iace::load_split(dir / "badint.tsv", TaskId::sst2, "train"); });
    CHECK(badint.find("line 3") != std::string::npos);
    CHECK(badint.find("'two'") != std::string::npos);

    write_text(dir / "range.tsv", "sentence\tlabel\nok\t2\n");
    CHECK(testutil::error_message_of([&] {
              iace::load_split(dir / "range.tsv", TaskId::sst2, "train");
          }).find("label must be 0 or 1") != std::string::npos);

    write_text(dir / "qnli.tsv", "question\tsentence\tlabel\nq\ts\tmaybe\n");
    const std::string qnli =
        testutil::error_message_of([&] { iace::load_split(dir / "qnli.tsv", TaskId::qnli, "train"); });
    CHECK(qnli.find("entailment|not_entailment") != std::string::npos);

    write_text(dir / "stsb.tsv", "sentence1\tsentence2\tscore\na\tb\t7.5\n");
    CHECK(testutil::error_message_of([&] {
              iace::load_split(dir / "stsb.tsv", TaskId::stsb, "train");
          }).find("score must be in [0, 5]") != std::string::npos);

    write_text(dir / "mnli.tsv", "sentence1\tsentence2\tgold_label\na\tb\tmaybe\n");
    CHECK(testutil::error_message_of([&] {
              iace::load_split(dir / "mnli.tsv", TaskId::mnli, "train");
          }).find("contradiction|entailment|neutral") != std::string::npos);

    CHECK(testutil::error_code_of([&] {
              iace::load_split(dir / "does-not-exist.tsv", TaskId::sst2, "train");
          }) == iace::ErrorCode::io);
}

TEST_CASE("mnli dev split falls back to dev_matched") {
    const fs::path dir = testutil::fresh_dir("mnli-fallback");
    const std::vector<TextExample> train = {pair_example("train:0", "a", "b", 1.0)};
    const std::vector<TextExample> dev = {pair_example("dev:0", "c", "d", 2.0)};
    iace::write_split(dir / "train.tsv", TaskId::mnli, train);
    iace::write_split(dir / "dev_matched.tsv", TaskId::mnli, dev);
    const auto splits = iace::load_task(dir, TaskId::mnli);
    REQUIRE(splits.dev.size() == 1);
    CHECK(splits.dev[0].label == 2.0);

    // a real dev.tsv wins over the fallback
    iace::write_split(dir / "dev.tsv", TaskId::mnli,
                      {pair_example("dev:0", "e", "f", 0.0)});
    CHECK(iace::load_task(dir, TaskId::mnli).dev[0].label == 0.0);
}

TEST_CASE("few-shot sampling hits exact stratified counts") {
    const auto train = testutil::sentiment_examples(10000, 0, "train");
    FewShotSpec spec;
    spec.fraction = 0.003;
    spec.seed = 7;
    const auto subset = iace::few_shot_subset(train, spec);
    REQUIRE(subset.size() == 30);
    std::size_t pos = 0;
    for (const auto& ex : subset) pos += ex.label == 1.0 ? 1 : 0;
    CHECK(pos == 15);

    // same spec twice gives the identical subset
    const auto again = iace::few_shot_subset(train, spec);
    REQUIRE(again.size() == subset.size());
    for (std::size_t i = 0; i < subset.size(); ++i) {
        CHECK(again[i].example_id == subset[i].example_id);
    }

    // a different seed almost surely picks different examples
    FewShotSpec other = spec;
    other.seed = 8;
    const auto moved = iace::few_shot_subset(train, other);
    bool same = true;
    for (std::size_t i = 0; i < subset.size() && same; ++i) {
        same = moved[i].example_id == subset[i].example_id;
    }
    CHECK_FALSE(same);
}

TEST_CASE("few-shot subsets preserve original train order") {
    const auto train = testutil::sentiment_examples(400, 0, "train");
    FewShotSpec spec;
    spec.fraction = 0.05;
    spec.seed = 3;
    const auto subset = iace::few_shot_subset(train, spec);
    REQUIRE(subset.size() == 20);
    std::size_t last = 0;
    bool first = true;
    for (const auto& ex : subset) {
        const std::size_t idx = std::stoul(ex.example_id.substr(ex.example_id.find(':') + 1));
        if (!first) CHECK(idx > last);
        last = idx;
        first = false;
    }
}

TEST_CASE("rounding is half away from zero and floors at one per class") {
    // 7 examples, fraction 0.5: 3.5 rounds up to 4
    auto train = testutil::sentiment_examples(8, 0, "train");
    train.pop_back();
    FewShotSpec spec;
    spec.fraction = 0.5;
    spec.stratified = false;
    CHECK(iace::few_shot_subset(train, spec).size() == 4);

    // tiny fraction still keeps one example per class when stratified
    std::vector<TextExample> skewed;
    for (int i = 0; i < 9; ++i) {
        TextExample ex;
        ex.example_id = "train:" + std::to_string(i);
        ex.sentences = {"negative " + std::to_string(i)};
        ex.label = 0.0;
        skewed.push_back(ex);
    }
    TextExample rare;
    rare.example_id = "train:9";
    rare.sentences = {"positive"};
    rare.label = 1.0;
    skewed.push_back(rare);

    FewShotSpec tiny;
    tiny.fraction = 0.2;
    const auto subset = iace::few_shot_subset(skewed, tiny);
    REQUIRE(subset.size() == 2);
    std::multiset<double> labels;
    for (const auto& ex : subset) labels.insert(ex.label);
    CHECK(labels.count(0.0) == 1);
    CHECK(labels.count(1.0) == 1);

    // unstratified minimum is one example overall
    FewShotSpec micro;
    micro.fraction = 0.0001;
    micro.stratified = false;
    CHECK(iace::few_shot_subset(skewed, micro).size() == 1);

    // fraction 1.0 returns the whole split
    FewShotSpec full;
    full.fraction = 1.0;
    CHECK(iace::few_shot_subset(skewed, full).size() == skewed.size());
}

TEST_CASE("regression labels force the unstratified path") {
    std::vector<TextExample> train;
    for (int i = 0; i < 20; ++i) {
        TextExample ex;
        ex.example_id = "train:" + std::to_string(i);
        ex.sentences = {"a", "b"};
        ex.label = 0.25 * i;
        train.push_back(ex);
    }
    FewShotSpec spec;
    spec.fraction = 0.25;
    const auto subset = iace::few_shot_subset(train, spec, /*regression_labels=*/true);
    CHECK(subset.size() == 5);

    // without the flag, fractional labels in stratified mode are an error
    const std::string msg =
        testutil::error_message_of([&] { iace::few_shot_subset(train, spec); });
    CHECK(msg.find("regression_labels") != std::string::npos);
}

TEST_CASE("few-shot spec validation and regime names") {
    FewShotSpec spec;
    spec.fraction = 0.0;
    CHECK(testutil::error_code_of([&] { spec.validate(); }) ==
          iace::ErrorCode::invalid_argument);
    spec.fraction = 1.5;
    CHECK(testutil::error_code_of([&] { spec.validate(); }) ==
          iace::ErrorCode::invalid_argument);

    spec.fraction = 0.003;
    CHECK(spec.regime() == FewShotRegime::extreme);
    spec.fraction = 0.03;
    CHECK(spec.regime() == FewShotRegime::normal);
    spec.fraction = 1.0;
    CHECK(spec.regime() == FewShotRegime::full);
    spec.fraction = 0.25;
    CHECK(spec.regime() == FewShotRegime::custom);

    CHECK(testutil::error_code_of([&] {
              FewShotSpec ok;
              iace::few_shot_subset({}, ok);
          }) == iace::ErrorCode::invalid_argument);
}

TEST_CASE("subset manifest is one header line plus one id line per example") {
    const auto train = testutil::sentiment_examples(40, 0, "train");
    FewShotSpec spec;
    spec.fraction = 0.1;
    spec.seed = 11;
    const auto subset = iace::few_shot_subset(train, spec);
    const std::string manifest = iace::subset_manifest_jsonl("sst2", spec, subset);

    std::vector<std::string> lines;
    std::size_t pos = 0;
    while (pos < manifest.size()) {
        const std::size_t end = manifest.find('\n', pos);
        lines.push_back(manifest.substr(pos, end - pos));
        pos = end + 1;
    }
    REQUIRE(lines.size() == subset.size() + 1);

    const json header = json::parse(lines[0]);
    CHECK(header["task"] == "sst2");
    CHECK(header["fraction"] == 0.1);
    CHECK(header["seed"] == 11);
    CHECK(header["stratified"] == true);
    CHECK(header["size"] == subset.size());
    for (std::size_t i = 0; i < subset.size(); ++i) {
        CHECK(json::parse(lines[i + 1])["example_id"] == subset[i].example_id);
    }
}
