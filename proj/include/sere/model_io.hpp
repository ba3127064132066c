#pragma once

#include <string>

#include "sere/trainer.hpp"

namespace sere {

/// Checkpoint layout: <dir>/model.sere holds the numeric payload in the
/// tensor file format (row 0 = [w, b, alpha, beta, gamma, delta]; next C
/// rows = enhanced prototypes zero-padded to the same width; optional d
/// rows of the projection head). <dir>/model.json carries dimensions,
/// class names, loss weights and the labeled reference ids.
void save_model(const std::string& dir, const SereModel& model);

SereModel load_model(const std::string& dir);

}  // namespace sere
