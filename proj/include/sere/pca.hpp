#pragma once

#include "sere/matrix.hpp"

namespace sere {

/// Projects samples (rows) onto their top-2 principal axes. Returns an
/// N x 2 score matrix (centered data times the component basis).
/// Components are found by power iteration with deflation; a component
/// whose eigenvalue underflows is returned as all-zero scores.
/// Throws PreconditionError for fewer than 3 samples.
Matrix pca_2d(const Matrix& samples);

}  // namespace sere
