#include "data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <map>

#include <json.hpp>

#include "errors.hpp"
#include "rng.hpp"

namespace iace {

using nlohmann::json;
namespace fs = std::filesystem;

static const std::vector<TaskInfo>& registry() {
    static const std::vector<TaskInfo> tasks = {
        {TaskId::sst2, "sst2", 1, TaskType::classification, 2, "accuracy", false},
        {TaskId::qnli, "qnli", 2, TaskType::classification, 2, "accuracy", false},
        {TaskId::qqp, "qqp", 2, TaskType::classification, 2, "acc_f1_avg", false},
        {TaskId::mnli, "mnli", 2, TaskType::classification, 3, "accuracy", false},
        {TaskId::mrpc, "mrpc", 2, TaskType::classification, 2, "acc_f1_avg", false},
        {TaskId::stsb, "stsb", 2, TaskType::regression, 0, "correlation", false},
        {TaskId::swag, "swag", 4, TaskType::classification, 4, "accuracy", true},
    };
    return tasks;
}

const TaskInfo& task_info(TaskId id) {
    for (const TaskInfo& t : registry()) {
        if (t.id == id) return t;
    }
    throw_invalid("task_info: unhandled task id");
}

TaskId task_from_string(const std::string& name) {
    std::string lowered;
    for (char c : name) lowered.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    if (lowered == "sst-2") lowered = "sst2";
    if (lowered == "sts-b") lowered = "stsb";
    for (const TaskInfo& t : registry()) {
        if (t.name == lowered) return t.id;
    }
    std::string known;
    for (const TaskInfo& t : registry()) known += (known.empty() ? "" : ", ") + t.name;
    throw_invalid("unknown task '" + name + "' (known: " + known + ")");
}

const std::vector<TaskId>& all_tasks() {
    static const std::vector<TaskId> ids = [] {
        std::vector<TaskId> v;
        for (const TaskInfo& t : registry()) v.push_back(t.id);
        return v;
    }();
    return ids;
}

static std::string read_file(const fs::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw_io("cannot open " + file.string());
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

std::vector<Row> parse_tsv(const std::string& text, const std::string& origin) {
    std::vector<Row> rows;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        if (pos == text.size() && line_no > 0) break;
        std::size_t end = text.find('\n', pos);
        if (end == std::string::npos) end = text.size();
        std::string line = text.substr(pos, end - pos);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        ++line_no;
        pos = end + 1;
        if (line.empty()) {
            if (pos > text.size()) break;  // trailing newline
            continue;
        }
        Row row;
        row.line = line_no;
        std::size_t field_start = 0;
        while (true) {
            const std::size_t tab = line.find('\t', field_start);
            if (tab == std::string::npos) {
                row.fields.push_back(line.substr(field_start));
                break;
            }
            row.fields.push_back(line.substr(field_start, tab - field_start));
            field_start = tab + 1;
        }
        rows.push_back(std::move(row));
        if (pos > text.size()) break;
    }
    if (rows.empty()) throw_parse(origin + ": file is empty");
    return rows;
}

std::vector<Row> parse_csv(const std::string& text, const std::string& origin) {
    std::vector<Row> rows;
    Row current;
    std::string field;
    bool in_quotes = false;
    bool record_started = false;
    std::size_t line_no = 1;

    auto end_field = [&] {
        current.fields.push_back(std::move(field));
        field.clear();
    };
    auto end_record = [&] {
        if (!record_started) return;
        end_field();
        rows.push_back(std::move(current));
        current = Row{};
        record_started = false;
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (!record_started && c != '\n' && c != '\r') {
            record_started = true;
            current.line = line_no;
        }
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                if (c == '\n') ++line_no;
                field.push_back(c);
            }
            continue;
        }
        switch (c) {
            case '"':
                if (!field.empty()) throw_parse(origin + " line " + std::to_string(line_no) +
                                                ": quote inside unquoted field");
                in_quotes = true;
                break;
            case ',':
                if (!record_started) {  // record beginning with an empty field
                    record_started = true;
                    current.line = line_no;
                }
                end_field();
                break;
            case '\r':
                break;
            case '\n':
                end_record();
                ++line_no;
                break;
            default:
                field.push_back(c);
        }
    }
    if (in_quotes) throw_parse(origin + ": unterminated quoted field");
    end_record();
    if (rows.empty()) throw_parse(origin + ": file is empty");
    return rows;
}

static std::size_t column_index(const Row& header, const std::string& name, const std::string& origin) {
    for (std::size_t i = 0; i < header.fields.size(); ++i) {
        if (header.fields[i] == name) return i;
    }
    throw_parse(origin + ": missing column '" + name + "' in header");
}

static int parse_int_label(const std::string& s, const std::string& origin, std::size_t line) {
    try {
        std::size_t used = 0;
        const int v = std::stoi(s, &used);
        if (used != s.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw_parse(origin + " line " + std::to_string(line) + ": bad integer label '" + s + "'");
    }
}

static double parse_real_label(const std::string& s, const std::string& origin, std::size_t line) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw_parse(origin + " line " + std::to_string(line) + ": bad numeric label '" + s + "'");
    }
}

static double qnli_label(const std::string& s, const std::string& origin, std::size_t line) {
    if (s == "entailment") return 0.0;
    if (s == "not_entailment") return 1.0;
    throw_parse(origin + " line " + std::to_string(line) + ": bad label '" + s +
                "' (expected entailment|not_entailment)");
}

// Alphabetical class order keeps the mapping stable without a label file.
static double mnli_label(const std::string& s, const std::string& origin, std::size_t line) {
    if (s == "contradiction") return 0.0;
    if (s == "entailment") return 1.0;
    if (s == "neutral") return 2.0;
    throw_parse(origin + " line " + std::to_string(line) + ": bad label '" + s +
                "' (expected contradiction|entailment|neutral)");
}

static void check_width(const Row& row, std::size_t expected, const std::string& origin) {
    if (row.fields.size() != expected) {
        throw_parse(origin + " line " + std::to_string(row.line) + ": expected " +
                    std::to_string(expected) + " fields, got " + std::to_string(row.fields.size()));
    }
}

std::vector<TextExample> load_split(const fs::path& file, TaskId task, const std::string& split_name) {
    const TaskInfo& info = task_info(task);
    const std::string origin = file.string();
    const std::string text = read_file(file);
    const std::vector<Row> rows =
        info.id == TaskId::swag ? parse_csv(text, origin) : parse_tsv(text, origin);
    const Row& header = rows[0];

    std::vector<TextExample> out;
    out.reserve(rows.size() - 1);
    auto id_for = [&](std::size_t record_idx) {
        return split_name + ":" + std::to_string(record_idx);
    };

    switch (info.id) {
        case TaskId::sst2: {
            const std::size_t c_sent = column_index(header, "sentence", origin);
            const std::size_t c_label = column_index(header, "label", origin);
            for (std::size_t r = 1; r < rows.size(); ++r) {
                check_width(rows[r], header.fields.size(), origin);
                TextExample ex;
                ex.example_id = id_for(r - 1);
                ex.sentences = {rows[r].fields[c_sent]};
                const int label = parse_int_label(rows[r].fields[c_label], origin, rows[r].line);
                if (label != 0 && label != 1) {
                    throw_parse(origin + " line " + std::to_string(rows[r].line) +
                                ": label must be 0 or 1");
                }
                ex.label = label;
                out.push_back(std::move(ex));
            }
            break;
        }
        case TaskId::qnli: {
            const std::size_t c_q = column_index(header, "question", origin);
            const std::size_t c_s = column_index(header, "sentence", origin);
            const std::size_t c_label = column_index(header, "label", origin);
            for (std::size_t r = 1; r < rows.size(); ++r) {
                check_width(rows[r], header.fields.size(), origin);
                TextExample ex;
                ex.example_id = id_for(r - 1);
                ex.sentences = {rows[r].fields[c_q], rows[r].fields[c_s]};
                ex.label = qnli_label(rows[r].fields[c_label], origin, rows[r].line);
                out.push_back(std::move(ex));
            }
            break;
        }
        case TaskId::qqp: {
            const std::size_t c_q1 = column_index(header, "question1", origin);
            const std::size_t c_q2 = column_index(header, "question2", origin);
            const std::size_t c_label = column_index(header, "is_duplicate", origin);
            for (std::size_t r = 1; r < rows.size(); ++r) {
                check_width(rows[r], header.fields.size(), origin);
                TextExample ex;
                ex.example_id = id_for(r - 1);
                ex.sentences = {rows[r].fields[c_q1], rows[r].fields[c_q2]};
                const int label = parse_int_label(rows[r].fields[c_label], origin, rows[r].line);
                if (label != 0 && label != 1) {
                    throw_parse(origin + " line " + std::to_string(rows[r].line) +
                                ": is_duplicate must be 0 or 1");
                }
                ex.label = label;
                out.push_back(std::move(ex));
            }
            break;
        }
        case TaskId::mnli: {
            const std::size_t c_s1 = column_index(header, "sentence1", origin);
            const std::size_t c_s2 = column_index(header, "sentence2", origin);
            const std::size_t c_label = column_index(header, "gold_label", origin);
            for (std::size_t r = 1; r < rows.size(); ++r) {
                check_width(rows[r], header.fields.size(), origin);
                TextExample ex;
                ex.example_id = id_for(r - 1);
                ex.sentences = {rows[r].fields[c_s1], rows[r].fields[c_s2]};
                ex.label = mnli_label(rows[r].fields[c_label], origin, rows[r].line);
                out.push_back(std::move(ex));
            }
            break;
        }
        case TaskId::mrpc: {
            const std::size_t c_label = column_index(header, "Quality", origin);
            const std::size_t c_s1 = column_index(header, "#1 String", origin);
            const std::size_t c_s2 = column_index(header, "#2 String", origin);
            for (std::size_t r = 1; r < rows.size(); ++r) {
                check_width(rows[r], header.fields.size(), origin);
                TextExample ex;
                ex.example_id = id_for(r - 1);
                ex.sentences = {rows[r].fields[c_s1], rows[r].fields[c_s2]};
                const int label = parse_int_label(rows[r].fields[c_label], origin, rows[r].line);
                if (label != 0 && label != 1) {
                    throw_parse(origin + " line " + std::to_string(rows[r].line) +
                                ": Quality must be 0 or 1");
                }
                ex.label = label;
                out.push_back(std::move(ex));
            }
            break;
        }
        case TaskId::stsb: {
            const std::size_t c_s1 = column_index(header, "sentence1", origin);
            const std::size_t c_s2 = column_index(header, "sentence2", origin);
            const std::size_t c_label = column_index(header, "score", origin);
            for (std::size_t r = 1; r < rows.size(); ++r) {
                check_width(rows[r], header.fields.size(), origin);
                TextExample ex;
                ex.example_id = id_for(r - 1);
                ex.sentences = {rows[r].fields[c_s1], rows[r].fields[c_s2]};
                ex.label = parse_real_label(rows[r].fields[c_label], origin, rows[r].line);
                if (ex.label < 0.0 || ex.label > 5.0) {
                    throw_parse(origin + " line " + std::to_string(rows[r].line) +
                                ": score must be in [0, 5]");
                }
                out.push_back(std::move(ex));
            }
            break;
        }
        case TaskId::swag: {
            const std::size_t c_sent1 = column_index(header, "sent1", origin);
            const std::size_t c_sent2 = column_index(header, "sent2", origin);
            std::size_t c_end[4];
            for (int k = 0; k < 4; ++k) {
                c_end[k] = column_index(header, "ending" + std::to_string(k), origin);
            }
            const std::size_t c_label = column_index(header, "label", origin);
            for (std::size_t r = 1; r < rows.size(); ++r) {
                check_width(rows[r], header.fields.size(), origin);
                TextExample ex;
                ex.example_id = id_for(r - 1);
                ex.context = rows[r].fields[c_sent1];
                const std::string& s2 = rows[r].fields[c_sent2];
                for (int k = 0; k < 4; ++k) {
                    const std::string& end = rows[r].fields[c_end[k]];
                    ex.sentences.push_back(s2.empty() ? end : s2 + " " + end);
                }
                const int label = parse_int_label(rows[r].fields[c_label], origin, rows[r].line);
                if (label < 0 || label > 3) {
                    throw_parse(origin + " line " + std::to_string(rows[r].line) +
                                ": label must be in 0..3");
                }
                ex.label = label;
                out.push_back(std::move(ex));
            }
            break;
        }
    }
    return out;
}

TaskSplits load_task(const fs::path& dir, TaskId task) {
    const TaskInfo& info = task_info(task);
    TaskSplits splits;
    if (info.id == TaskId::swag) {
        splits.train = load_split(dir / "train.csv", task, "train");
        splits.dev = load_split(dir / "val.csv", task, "dev");
        return splits;
    }
    splits.train = load_split(dir / "train.tsv", task, "train");
    fs::path dev = dir / "dev.tsv";
    if (!fs::exists(dev) && info.id == TaskId::mnli) dev = dir / "dev_matched.tsv";
    splits.dev = load_split(dev, task, "dev");
    return splits;
}

static std::string tsv_safe(const std::string& s, const fs::path& file) {
    if (s.find('\t') != std::string::npos || s.find('\n') != std::string::npos) {
        throw_invalid("write_split: field with tab/newline cannot round-trip in " + file.string());
    }
    return s;
}

static std::string csv_quote(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out += "\"";
    return out;
}

static std::string real_str(double v) {
    return json(v).dump();
}

void write_split(const fs::path& file, TaskId task, const std::vector<TextExample>& examples) {
    const TaskInfo& info = task_info(task);
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) throw_io("write_split: cannot open " + file.string());

    auto check_arity = [&](const TextExample& ex) {
        if (ex.sentences.size() != info.sentence_arity) {
            throw_invalid("write_split: example " + ex.example_id + " has " +
                          std::to_string(ex.sentences.size()) + " sentences, task needs " +
                          std::to_string(info.sentence_arity));
        }
    };

    switch (info.id) {
        case TaskId::sst2:
            out << "sentence\tlabel\n";
            for (const auto& ex : examples) {
                check_arity(ex);
                out << tsv_safe(ex.sentences[0], file) << "\t" << static_cast<int>(ex.label) << "\n";
            }
            break;
        case TaskId::qnli: {
            out << "index\tquestion\tsentence\tlabel\n";
            std::size_t idx = 0;
            for (const auto& ex : examples) {
                check_arity(ex);
                out << idx++ << "\t" << tsv_safe(ex.sentences[0], file) << "\t"
                    << tsv_safe(ex.sentences[1], file) << "\t"
                    << (ex.label == 0.0 ? "entailment" : "not_entailment") << "\n";
            }
            break;
        }
        case TaskId::qqp: {
            out << "id\tqid1\tqid2\tquestion1\tquestion2\tis_duplicate\n";
            std::size_t idx = 0;
            for (const auto& ex : examples) {
                check_arity(ex);
                out << idx << "\t" << 2 * idx << "\t" << 2 * idx + 1 << "\t"
                    << tsv_safe(ex.sentences[0], file) << "\t" << tsv_safe(ex.sentences[1], file)
                    << "\t" << static_cast<int>(ex.label) << "\n";
                ++idx;
            }
            break;
        }
        case TaskId::mnli: {
            out << "index\tsentence1\tsentence2\tgold_label\n";
            static const char* names[] = {"contradiction", "entailment", "neutral"};
            std::size_t idx = 0;
            for (const auto& ex : examples) {
                check_arity(ex);
                const int label = static_cast<int>(ex.label);
                if (label < 0 || label > 2) throw_invalid("write_split: bad mnli label");
                out << idx++ << "\t" << tsv_safe(ex.sentences[0], file) << "\t"
                    << tsv_safe(ex.sentences[1], file) << "\t" << names[label] << "\n";
            }
            break;
        }
        case TaskId::mrpc:
            out << "Quality\t#1 ID\t#2 ID\t#1 String\t#2 String\n";
            for (std::size_t i = 0; i < examples.size(); ++i) {
                const auto& ex = examples[i];
                check_arity(ex);
                out << static_cast<int>(ex.label) << "\t" << 2 * i << "\t" << 2 * i + 1 << "\t"
                    << tsv_safe(ex.sentences[0], file) << "\t" << tsv_safe(ex.sentences[1], file)
                    << "\n";
            }
            break;
        case TaskId::stsb: {
            out << "index\tsentence1\tsentence2\tscore\n";
            std::size_t idx = 0;
            for (const auto& ex : examples) {
                check_arity(ex);
                out << idx++ << "\t" << tsv_safe(ex.sentences[0], file) << "\t"
                    << tsv_safe(ex.sentences[1], file) << "\t" << real_str(ex.label) << "\n";
            }
            break;
        }
        case TaskId::swag: {
            out << "video-id,fold-ind,startphrase,sent1,sent2,gold-source,"
                   "ending0,ending1,ending2,ending3,label\n";
            std::size_t idx = 0;
            for (const auto& ex : examples) {
                check_arity(ex);
                out << csv_quote("vid" + std::to_string(idx)) << "," << idx << ","
                    << csv_quote(ex.context) << "," << csv_quote(ex.context) << ",,gold,";
                for (int k = 0; k < 4; ++k) out << csv_quote(ex.sentences[k]) << ",";
                out << static_cast<int>(ex.label) << "\n";
                ++idx;
            }
            break;
        }
    }
    if (!out) throw_io("write_split: write failed for " + file.string());
}

void FewShotSpec::validate() const {
    if (!(fraction > 0.0) || fraction > 1.0) {
        throw_invalid("FewShotSpec: fraction must be in (0, 1], got " + std::to_string(fraction));
    }
}

FewShotRegime FewShotSpec::regime() const {
    auto near = [&](double x) { return std::abs(fraction - x) < 1e-12; };
    if (near(0.001) || near(0.003) || near(0.005)) return FewShotRegime::extreme;
    if (near(0.01) || near(0.03) || near(0.05)) return FewShotRegime::normal;
    if (near(1.0)) return FewShotRegime::full;
    return FewShotRegime::custom;
}

static std::size_t round_half_away(double x) {
    return static_cast<std::size_t>(std::floor(x + 0.5));
}

std::vector<TextExample> few_shot_subset(const std::vector<TextExample>& train,
                                         const FewShotSpec& spec, bool regression_labels) {
    spec.validate();
    if (train.empty()) throw_invalid("few_shot_subset: empty train split");
    const std::size_t n = train.size();
    Rng rng(derive_seed(spec.seed, "fewshot"));

    std::vector<std::size_t> chosen;
    if (!spec.stratified || regression_labels) {
        const std::size_t target = std::min(n, std::max<std::size_t>(
                                                   1, round_half_away(spec.fraction * n)));
        const std::vector<std::size_t> perm = rng.permutation(n);
        chosen.assign(perm.begin(), perm.begin() + target);
    } else {
        std::map<long long, std::vector<std::size_t>> by_class;
        for (std::size_t i = 0; i < n; ++i) {
            const double lab = train[i].label;
            const double r = std::nearbyint(lab);
            if (std::abs(lab - r) > 1e-9) {
                throw_invalid("few_shot_subset: non-integer label in stratified mode; "
                              "pass regression_labels=true");
            }
            by_class[static_cast<long long>(r)].push_back(i);
        }
        const std::size_t classes = by_class.size();
        const std::size_t target =
            std::min(n, std::max(classes, round_half_away(spec.fraction * n)));

        // Largest-remainder quotas, then repair to the min-1 floor and class capacity.
        struct Quota {
            long long label;
            std::size_t count;
            std::size_t q;
            double rem;
        };
        std::vector<Quota> quotas;
        std::size_t assigned = 0;
        for (const auto& [label, members] : by_class) {
            const double exact =
                static_cast<double>(target) * static_cast<double>(members.size()) /
                static_cast<double>(n);
            Quota qt{label, members.size(), static_cast<std::size_t>(std::floor(exact)),
                     exact - std::floor(exact)};
            assigned += qt.q;
            quotas.push_back(qt);
        }
        std::vector<std::size_t> order(quotas.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (quotas[a].rem != quotas[b].rem) return quotas[a].rem > quotas[b].rem;
            if (quotas[a].count != quotas[b].count) return quotas[a].count > quotas[b].count;
            return quotas[a].label < quotas[b].label;
        });
        for (std::size_t k = 0; assigned < target; k = (k + 1) % order.size()) {
            Quota& qt = quotas[order[k]];
            if (qt.q < qt.count) {
                ++qt.q;
                ++assigned;
            }
        }
        auto take_from_largest = [&](std::size_t skip) {
            std::size_t best = quotas.size();
            for (std::size_t i = 0; i < quotas.size(); ++i) {
                if (i == skip || quotas[i].q <= 1) continue;
                if (best == quotas.size() || quotas[i].q > quotas[best].q ||
                    (quotas[i].q == quotas[best].q && quotas[i].label < quotas[best].label)) {
                    best = i;
                }
            }
            if (best < quotas.size()) --quotas[best].q;
        };
        for (std::size_t i = 0; i < quotas.size(); ++i) {
            if (quotas[i].q == 0) {
                quotas[i].q = 1;
                take_from_largest(i);
            }
        }

        for (const Quota& qt : quotas) {
            const auto& members = by_class[qt.label];
            const std::vector<std::size_t> perm = rng.permutation(members.size());
            for (std::size_t k = 0; k < qt.q && k < members.size(); ++k) {
                chosen.push_back(members[perm[k]]);
            }
        }
    }

    std::sort(chosen.begin(), chosen.end());
    std::vector<TextExample> out;
    out.reserve(chosen.size());
    for (std::size_t idx : chosen) out.push_back(train[idx]);
    return out;
}

std::string subset_manifest_jsonl(const std::string& task_name, const FewShotSpec& spec,
                                  const std::vector<TextExample>& subset) {
    json header;
    header["task"] = task_name;
    header["fraction"] = spec.fraction;
    header["seed"] = spec.seed;
    header["stratified"] = spec.stratified;
    header["size"] = subset.size();
    std::string out = header.dump() + "\n";
    for (const TextExample& ex : subset) {
        json line;
        line["example_id"] = ex.example_id;
        out += line.dump() + "\n";
    }
    return out;
}

}  // namespace iace
