#include "sere/model_io.hpp"

#include <filesystem>

#include <json.hpp>

#include "sere/errors.hpp"
#include "sere/io.hpp"
#include "sere/tensor_file.hpp"

namespace sere {

namespace fs = std::filesystem;
using nlohmann::json;

void save_model(const std::string& dir, const SereModel& model) {
    fs::create_directories(dir);

    const int d = static_cast<int>(model.params.gate.w.size());
    const int num_classes = model.prototypes.rows();
    const int width = d + 5;
    const bool head = model.params.has_projection();

    Matrix payload(1 + num_classes + (head ? d : 0), width, 0.0);
    for (int m = 0; m < d; ++m) payload(0, m) = model.params.gate.w[static_cast<size_t>(m)];
    payload(0, d) = model.params.gate.b;
    payload(0, d + 1) = model.params.irf.alpha;
    payload(0, d + 2) = model.params.irf.beta;
    payload(0, d + 3) = model.params.irf.gamma;
    payload(0, d + 4) = model.params.irf.delta;
    for (int c = 0; c < num_classes; ++c) {
        for (int m = 0; m < model.prototypes.cols(); ++m) payload(1 + c, m) = model.prototypes(c, m);
    }
    if (head) {
        for (int r = 0; r < d; ++r) {
            for (int c = 0; c < d; ++c) payload(1 + num_classes + r, c) = model.params.projection(r, c);
        }
    }
    save_tensor((fs::path(dir) / "model.sere").string(), payload);

    json meta;
    meta["format"] = "sere-model";
    meta["version"] = 1;
    meta["dim"] = d;
    meta["classes"] = model.classes;
    meta["lambda1"] = model.tric.lambda1;
    meta["lambda2"] = model.tric.lambda2;
    meta["epsilon"] = model.epsilon;
    meta["labeled_ids"] = model.labeled_ids;
    meta["projection_head"] = head;
    write_file_atomic((fs::path(dir) / "model.json").string(), meta.dump(2) + "\n");
}

SereModel load_model(const std::string& dir) {
    json meta;
    try {
        meta = json::parse(read_file((fs::path(dir) / "model.json").string()));
    } catch (const json::exception& e) {
        throw FormatError("bad model.json: " + std::string(e.what()));
    }
    if (meta.value("format", "") != "sere-model" || meta.value("version", 0) != 1) {
        throw FormatError("not a sere-model checkpoint: " + dir);
    }

    SereModel model;
    const int d = meta.at("dim").get<int>();
    model.classes = meta.at("classes").get<std::vector<std::string>>();
    model.tric.lambda1 = meta.at("lambda1").get<double>();
    model.tric.lambda2 = meta.at("lambda2").get<double>();
    model.epsilon = meta.at("epsilon").get<double>();
    model.labeled_ids = meta.at("labeled_ids").get<std::vector<std::string>>();
    const bool head = meta.at("projection_head").get<bool>();

    Matrix payload = load_tensor((fs::path(dir) / "model.sere").string());
    const int num_classes = static_cast<int>(model.classes.size());
    const int expect_rows = 1 + num_classes + (head ? d : 0);
    if (payload.cols() != d + 5 || payload.rows() != expect_rows) {
        throw FormatError("model.sere shape does not match model.json");
    }

    model.params.gate.w.resize(static_cast<size_t>(d));
    for (int m = 0; m < d; ++m) model.params.gate.w[static_cast<size_t>(m)] = payload(0, m);
    model.params.gate.b = payload(0, d);
    model.params.irf.alpha = payload(0, d + 1);
    model.params.irf.beta = payload(0, d + 2);
    model.params.irf.gamma = payload(0, d + 3);
    model.params.irf.delta = payload(0, d + 4);

    model.prototypes = Matrix(num_classes, d + 4);
    for (int c = 0; c < num_classes; ++c) {
        for (int m = 0; m < d + 4; ++m) model.prototypes(c, m) = payload(1 + c, m);
    }
    if (head) {
        model.params.projection = Matrix(d, d);
        for (int r = 0; r < d; ++r) {
            for (int c = 0; c < d; ++c) model.params.projection(r, c) = payload(1 + num_classes + r, c);
        }
    }
    return model;
}

}  // namespace sere
