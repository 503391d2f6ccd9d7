#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mambair/model.hpp"
#include "mambair/optim.hpp"

namespace mambair {

// Binary layout, all integers little-endian:
//   "MIRC" | u32 version (1) | u32 count | count x entry      parameters
//   u32 count | count x entry                                 optimizer
// entry: u16 name length | UTF-8 name | u8 rank | u32 dims[rank] | f32 payload
// The optimizer section holds "m/<param>", "v/<param>" and a rank-0 "step".
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelState params;
  AdamState optimizer;
};

std::vector<unsigned char> encode_checkpoint(const ModelState& params, const AdamState& optimizer);
Checkpoint decode_checkpoint(const std::vector<unsigned char>& bytes);

void save_checkpoint(const std::string& path, const ModelState& params,
                     const AdamState& optimizer = {});
Checkpoint load_checkpoint(const std::string& path);

/// Copies checkpoint values into `target`, which must have exactly the same
/// parameter names and shapes.
void assign_parameters(ModelState& target, const ModelState& source);

}  // namespace mambair
