#pragma once

#include <string>
#include <vector>

#include "nrreg/geometry.hpp"

namespace nrreg {

// Bundled parametric models, addressable as pseudo-paths "synth:<name>".
// Used wherever a real mesh dataset is not supplied.
const std::vector<std::string>& synthetic_model_names();

TriMesh make_synthetic(const std::string& name);

// Loads either a "synth:<name>" model or an OFF file from disk.
TriMesh load_model(const std::string& path);

}  // namespace nrreg
