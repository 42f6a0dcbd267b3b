#pragma once

#include <string>

#include "steps/trainer.hpp"

namespace steps {

// Checkpoint archive ("STCK"): magic | u32 version | u64 json_len | JSON
// metadata | float64 blocks. Metadata carries the encoder config, modality
// names/dims and block offsets; blocks carry parameters and, when present,
// Adam state and the training history for resume.
void save_checkpoint(const std::string& path, const TrainResult& result);
TrainResult load_checkpoint(const std::string& path);

}  // namespace steps
