#pragma once

#include <string>

#include "steps/types.hpp"

namespace steps {

// Binary feature store ("STPF"):
//   magic "STPF" | u32 version=1 | u64 T | u64 D, all little-endian,
//   then T*D float32, row-major. 24 header bytes total.
// fps / timestamps / modality name live in the manifest, not here.
void write_feature_store(const FeatureSequence& seq, const std::string& path);
FeatureSequence read_feature_store(const std::string& path);

}  // namespace steps
