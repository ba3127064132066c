#include "sere/manifest.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <istream>
#include <set>
#include <sstream>

#include "sere/errors.hpp"

namespace sere {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    fields.push_back(cur);
    return fields;
}

Role parse_role(const std::string& token, int line_no) {
    if (token == "labeled_source") return Role::LabeledSource;
    if (token == "unlabeled_source") return Role::UnlabeledSource;
    if (token == "unlabeled_target") return Role::UnlabeledTarget;
    if (token == "eval_target") return Role::EvalTarget;
    throw ValidationError("manifest line " + std::to_string(line_no) + ": unknown role '" +
                          token + "'");
}

}  // namespace

const char* role_name(Role role) {
    switch (role) {
        case Role::LabeledSource: return "labeled_source";
        case Role::UnlabeledSource: return "unlabeled_source";
        case Role::UnlabeledTarget: return "unlabeled_target";
        case Role::EvalTarget: return "eval_target";
    }
    return "?";
}

std::string Manifest::resolve(const std::string& path) const {
    std::filesystem::path p(path);
    if (p.is_absolute() || base_dir.empty()) return path;
    return (std::filesystem::path(base_dir) / p).string();
}

int Manifest::class_index(const std::string& label) const {
    auto it = std::find(classes.begin(), classes.end(), label);
    return it == classes.end() ? -1 : static_cast<int>(it - classes.begin());
}

Manifest parse_manifest(std::istream& in, std::string base_dir) {
    Manifest manifest;
    manifest.base_dir = std::move(base_dir);

    std::string line;
    if (!std::getline(in, line)) throw FormatError("manifest is empty");
    const std::string header = "id,path,language,role,label";
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != header) {
        throw FormatError("manifest header must be '" + header + "'");
    }

    std::set<std::string> seen_ids;
    std::set<std::string> labels;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        std::vector<std::string> fields = split_fields(line);
        if (fields.size() != 5) {
            throw ValidationError("manifest line " + std::to_string(line_no) + ": expected 5 fields, got " +
                                  std::to_string(fields.size()));
        }
        ManifestRow row;
        row.id = fields[0];
        row.path = fields[1];
        row.language = fields[2];
        row.role = parse_role(fields[3], line_no);
        row.label = fields[4];

        if (row.id.empty()) {
            throw ValidationError("manifest line " + std::to_string(line_no) + ": empty id");
        }
        if (!seen_ids.insert(row.id).second) {
            throw ValidationError("manifest line " + std::to_string(line_no) + ": duplicate id '" +
                                  row.id + "'");
        }
        const bool needs_label = row.role == Role::LabeledSource || row.role == Role::EvalTarget;
        if (needs_label && row.label.empty()) {
            throw ValidationError("manifest line " + std::to_string(line_no) + ": role " +
                                  role_name(row.role) + " requires a label");
        }
        if (!needs_label && !row.label.empty()) {
            throw ValidationError("manifest line " + std::to_string(line_no) + ": role " +
                                  role_name(row.role) + " must not carry a label");
        }
        if (needs_label) labels.insert(row.label);
        manifest.rows.push_back(std::move(row));
    }

    manifest.classes.assign(labels.begin(), labels.end());
    return manifest;
}

Manifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open manifest: " + path);
    std::filesystem::path dir = std::filesystem::path(path).parent_path();
    return parse_manifest(in, dir.string());
}

}  // namespace sere
