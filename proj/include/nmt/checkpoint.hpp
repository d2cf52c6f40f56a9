#pragma once

#include <string>

#include "nmt/model.hpp"

// Checkpoint file layout: a magic line, the UTF-8 JSON header size in bytes,
// the JSON header (format version, config, vocabulary fingerprints, parameter
// directory with name/shape/offset), a newline, then the parameter blocks as
// little-endian 32-bit floats in directory order.

namespace nmt {

void save_checkpoint(const Model<float>& model, const std::string& path);
Model<float> load_checkpoint(const std::string& path);

}  // namespace nmt
