#pragma once

namespace maneuver {

// Toolkit release plus the on-disk format generations it reads and writes.
// Bump a format constant whenever its layout changes incompatibly; readers
// reject files from other generations instead of misparsing them.
inline constexpr const char* kToolkitVersion = "0.1.0";
inline constexpr int kInterchangeVersion = 1;  // frames/ + tracks.csv + events.csv + meta.json
// Tensor files carry the magic "MNT1"; checkpoints carry "MNCK" with their
// own version field (see nets/checkpoint.hpp).

}  // namespace maneuver
