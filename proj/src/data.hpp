#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "objectives.hpp"

namespace iace {

enum class TaskId { sst2, qnli, qqp, mnli, mrpc, stsb, swag };

struct TaskInfo {
    TaskId id;
    std::string name;
    std::size_t sentence_arity;  // sentence slots per example (SWAG: 4 candidate endings)
    TaskType type = TaskType::classification;
    std::size_t num_classes = 2;
    std::string metric;  // accuracy | acc_f1_avg | correlation
    bool multiple_choice = false;
};

const TaskInfo& task_info(TaskId id);
TaskId task_from_string(const std::string& name);
const std::vector<TaskId>& all_tasks();

struct TextExample {
    std::string example_id;
    std::string context;                 // SWAG leading sentence; empty elsewhere
    std::vector<std::string> sentences;  // task arity entries
    double label = 0.0;
    bool has_label = true;
};

struct TaskSplits {
    std::vector<TextExample> train;
    std::vector<TextExample> dev;
};

// Parsed delimited rows; `line` is the 1-based input line the record starts on.
struct Row {
    std::vector<std::string> fields;
    std::size_t line = 0;
};

std::vector<Row> parse_tsv(const std::string& text, const std::string& origin);
// RFC 4180: quoted fields may contain delimiters, quotes ("" escape) and newlines.
std::vector<Row> parse_csv(const std::string& text, const std::string& origin);

std::vector<TextExample> load_split(const std::filesystem::path& file, TaskId task,
                                    const std::string& split_name);
TaskSplits load_task(const std::filesystem::path& dir, TaskId task);

// Writes a split back in the task's on-disk format (header + rows). Loading
// the result reproduces the examples; tests and fixture generators rely on it.
void write_split(const std::filesystem::path& file, TaskId task,
                 const std::vector<TextExample>& examples);

enum class FewShotRegime { extreme, normal, full, custom };

struct FewShotSpec {
    double fraction = 1.0;
    std::uint64_t seed = 0;
    bool stratified = true;

    void validate() const;
    FewShotRegime regime() const;
};

// Deterministic subset of size max(C, round(fraction*N)) stratified over class
// labels (largest-remainder quotas, at least one example per class), or
// max(1, round(fraction*N)) unstratified. Regression labels have no classes,
// so those tasks always take the unstratified path. round() is
// half-away-from-zero. Output preserves the original train order.
std::vector<TextExample> few_shot_subset(const std::vector<TextExample>& train,
                                         const FewShotSpec& spec, bool regression_labels = false);

// Header object line followed by one {"example_id": ...} line per example.
std::string subset_manifest_jsonl(const std::string& task_name, const FewShotSpec& spec,
                                  const std::vector<TextExample>& subset);

}  // namespace iace
