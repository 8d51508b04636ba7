#include "checkpoint.hpp"

#include <fstream>
#include <iterator>
#include <set>

#include <json.hpp>

#include "errors.hpp"

namespace iace {

using nlohmann::json;

ConstParamRefs as_const_refs(const ParamRefs& refs) {
    ConstParamRefs out;
    out.reserve(refs.size());
    for (const auto& [name, mat] : refs) out.emplace_back(name, mat);
    return out;
}

std::string checkpoint_to_json(const ConstParamRefs& params) {
    json j = json::object();
    for (const auto& [name, mat] : params) {
        if (j.contains(name)) throw_invalid("checkpoint: duplicate parameter name " + name);
        json entry;
        entry["shape"] = {mat->rows, mat->cols};
        json data = json::array();
        for (double x : mat->data) data.push_back(static_cast<double>(static_cast<float>(x)));
        entry["data"] = std::move(data);
        j[name] = std::move(entry);
    }
    return j.dump();
}

void checkpoint_save(const std::string& path, const ConstParamRefs& params) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw_io("checkpoint: cannot open " + path + " for writing");
    out << checkpoint_to_json(params) << "\n";
    if (!out) throw_io("checkpoint: write failed for " + path);
}

void checkpoint_from_json(const std::string& text, const ParamRefs& params, const std::string& origin) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw_parse("checkpoint " + origin + ": " + e.what());
    }
    if (!j.is_object()) throw_parse("checkpoint " + origin + ": top level must be an object");

    std::set<std::string> expected;
    for (const auto& [name, mat] : params) expected.insert(name);
    for (const auto& item : j.items()) {
        if (!expected.count(item.key())) {
            throw_integrity("checkpoint " + origin + ": unexpected parameter " + item.key());
        }
    }
    for (const auto& [name, mat] : params) {
        if (!j.contains(name)) throw_integrity("checkpoint " + origin + ": missing parameter " + name);
        const json& entry = j[name];
        try {
            const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
            if (shape.size() != 2 || shape[0] != mat->rows || shape[1] != mat->cols) {
                throw_integrity("checkpoint " + origin + ": shape mismatch for " + name);
            }
            const auto data = entry.at("data").get<std::vector<double>>();
            if (data.size() != mat->rows * mat->cols) {
                throw_integrity("checkpoint " + origin + ": data length mismatch for " + name);
            }
            mat->data = data;
        } catch (const json::exception& e) {
            throw_parse("checkpoint " + origin + ": bad entry for " + name + ": " + e.what());
        }
    }
}

void checkpoint_load(const std::string& path, const ParamRefs& params) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw_io("checkpoint: cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    checkpoint_from_json(text, params, path);
}

}  // namespace iace
