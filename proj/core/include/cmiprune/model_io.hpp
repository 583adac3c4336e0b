#pragma once

#include "cmiprune/model.hpp"

#include <filesystem>
#include <string>

namespace cmiprune {

/// model.json plus one <f8 NPY file per tensor. Conv weights are stored as
/// out x in x k x k, the dense head as classes x inputs.
void save_model(const std::filesystem::path& dir, const ToyModel& model,
                const std::string& config_hash = {});
ToyModel load_model(const std::filesystem::path& dir);

}  // namespace cmiprune
