#include "sere/dataset.hpp"

#include "sere/errors.hpp"
#include "sere/tensor_file.hpp"

namespace sere {

Sample load_sample(const Manifest& manifest, const ManifestRow& row, double epsilon) {
    Matrix H = load_tensor(manifest.resolve(row.path + ".emb.sere"));
    Matrix feats = load_tensor(manifest.resolve(row.path + ".feat.sere"));
    if (feats.cols() != 4) {
        throw ValidationError("sample " + row.id + ": feature file must have 4 columns, has " +
                              std::to_string(feats.cols()));
    }
    if (H.rows() < 1 || feats.rows() < 1) {
        throw ValidationError("sample " + row.id + ": empty tensor");
    }
    int label = row.label.empty() ? -1 : manifest.class_index(row.label);
    return prepare_sample(row.id, label, std::move(H), feats, epsilon);
}

Dataset load_dataset(const Manifest& manifest, double epsilon) {
    Dataset data;
    data.classes = manifest.classes;

    int dim = -1;
    for (const ManifestRow& row : manifest.rows) {
        Sample s = load_sample(manifest, row, epsilon);
        if (dim < 0) dim = s.H.cols();
        if (s.H.cols() != dim) {
            throw ValidationError("sample " + row.id + ": embedding dim " +
                                  std::to_string(s.H.cols()) + " != " + std::to_string(dim) +
                                  " (dims must be consistent within a run)");
        }
        switch (row.role) {
            case Role::LabeledSource: data.labeled.push_back(std::move(s)); break;
            case Role::UnlabeledSource: data.unl_source.push_back(std::move(s)); break;
            case Role::UnlabeledTarget: data.unl_target.push_back(std::move(s)); break;
            case Role::EvalTarget: data.eval_target.push_back(std::move(s)); break;
        }
    }
    return data;
}

}  // namespace sere
