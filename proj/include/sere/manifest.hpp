#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sere {

/// Role of one utterance in the dual-path protocol.
enum class Role { LabeledSource, UnlabeledSource, UnlabeledTarget, EvalTarget };

const char* role_name(Role role);

struct ManifestRow {
    std::string id;
    std::string path;  // base path; loader appends .emb.sere / .feat.sere
    std::string language;
    Role role = Role::UnlabeledSource;
    std::string label;  // set only for labeled_source and eval_target
};

struct Manifest {
    std::vector<ManifestRow> rows;
    std::vector<std::string> classes;  // sorted unique labels
    std::string base_dir;

    std::string resolve(const std::string& path) const;
    int class_index(const std::string& label) const;  // -1 when unknown
};

/// Parses the CSV (header `id,path,language,role,label`). Errors name the
/// offending line. Fields must not contain commas or quotes.
Manifest parse_manifest(std::istream& in, std::string base_dir);
Manifest load_manifest(const std::string& path);

}  // namespace sere
