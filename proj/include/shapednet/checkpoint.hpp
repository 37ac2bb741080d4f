#pragma once

#include <cstdint>
#include <string>

#include "shapednet/network.hpp"

namespace shapednet {

// Checkpoint layout: magic "SNF1", u32 LE version, u32 LE tensor count, then
// per tensor: u32 LE name length + UTF-8 name, u32 LE rank, rank u32 LE dims,
// and a row-major payload of f32 LE values.
inline constexpr uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, ShapedNetModel& model);

// Strict full restore: every model state entry must be present with matching
// shape, and the file may not contain extras.
void load_checkpoint(const std::string& path, ShapedNetModel& model);

// Replaces backbone conv parameters (and their running stats) only; head and
// regression parameters are untouched. The file may contain more tensors
// (e.g. a full checkpoint); missing or mis-shaped backbone entries raise a
// checkpoint error listing every mismatch.
void load_pretrained_backbone(ShapedNetModel& model, const std::string& path);

}  // namespace shapednet
