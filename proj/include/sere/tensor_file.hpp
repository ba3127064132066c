#pragma once

#include <iosfwd>
#include <string>

#include "sere/matrix.hpp"

namespace sere {

/// Binary tensor container: magic "SERE", version u32 LE, rows u32 LE,
/// cols u32 LE, then rows*cols float32 LE row-major. Values must be
/// finite; reads validate this.
constexpr uint32_t kTensorVersion = 1;

void write_tensor(std::ostream& out, const Matrix& m);

/// Throws FormatError on bad magic/version/size, ValidationError on
/// non-finite payload values.
Matrix read_tensor(std::istream& in);

/// File wrappers. Saves are atomic (temp file + rename).
void save_tensor(const std::string& path, const Matrix& m);
Matrix load_tensor(const std::string& path);

}  // namespace sere
