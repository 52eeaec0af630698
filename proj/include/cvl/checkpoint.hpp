#pragma once

#include <string>

#include "cvl/model.hpp"

namespace cvl {

// Versioned binary container: config snapshot, vocabulary, then named
// parameter blobs (name, shape, little-endian 64-bit floats). Loading
// rebuilds the model from the stored config and validates every blob's
// shape against it. Layout in docs/FORMATS.md.
void save_checkpoint(const std::string& path, CvlModel& model);
CvlModel load_checkpoint(const std::string& path);

}  // namespace cvl
