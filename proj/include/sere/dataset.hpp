#pragma once

#include "sere/manifest.hpp"
#include "sere/trainer.hpp"

namespace sere {

/// Loads every manifest row into a prepared Sample. Each row's `path` is
/// a base name: embeddings live at <path>.emb.sere (T x d) and static
/// features at <path>.feat.sere (T_f x 4). Validates that the embedding
/// dimension is identical across the run.
Dataset load_dataset(const Manifest& manifest, double epsilon);

/// Loads a single row.
Sample load_sample(const Manifest& manifest, const ManifestRow& row, double epsilon);

}  // namespace sere
