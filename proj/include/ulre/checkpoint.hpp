#pragma once

#include <filesystem>
#include <vector>

#include "ulre/model.hpp"
#include "ulre/tensor_file.hpp"

namespace ulre {

// Checkpoints are tensor files: a u8 record "header" holding JSON text
// {"format_version", "layer_dims", "slope", "head"}, then "layer<i>.weight"
// (out x in) and "layer<i>.bias" f64 records.
inline constexpr int kCheckpointFormatVersion = 1;

std::vector<TensorRecord> model_to_records(const EstimatorModel& model);
EstimatorModel model_from_records(const std::vector<TensorRecord>& records);

void save_checkpoint(const std::filesystem::path& path, const EstimatorModel& model);
EstimatorModel load_checkpoint(const std::filesystem::path& path);

}  // namespace ulre
