#pragma once

#include <string>

#include "steps/types.hpp"

namespace steps {

// Manifest JSON layout:
// {
//   "modalities": ["rgb", "flow"],
//   "videos": [
//     {"video_id": "v0",
//      "fps": 10.0,
//      "features": {"rgb": "v0_rgb.stpf", "flow": "v0_flow.stpf"},
//      "step_labels": "v0_steps.json",      // optional, JSON int array
//      "phase_labels": "v0_phases.json",    // optional
//      "timestamps": [0.0, 0.1, ...]        // optional, defaults to t/fps
//     }, ...
//   ]
// }
// Relative paths are resolved against the manifest's directory.
Manifest load_manifest(const std::string& path);

// Writes manifest JSON plus one STPF file per (video, modality) and
// label JSON files, under out_dir. Returns the manifest path.
std::string save_dataset(const Manifest& m, const std::string& out_dir);

}  // namespace steps
