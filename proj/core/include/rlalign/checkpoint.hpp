#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "rlalign/neural.hpp"

namespace rlalign::nn {

// Checkpoint layout (all integers u32 LE unless noted):
//   "RLQNET1" (7 bytes), version,
//   architecture: input_h, input_w, input_c, conv count,
//                 per conv {filters, kernel, stride, batch_norm},
//                 max_pool, fc_units, fc_relu, head, actions,
//                 f32 bn_momentum, f32 bn_eps,
//   u64 adam step, tensor count,
//   per tensor in layer order: name length, name bytes, rank, dims,
//                 u8 trainable, f32 values, then (trainable only) f32 Adam m
//                 and f32 Adam v.
inline constexpr char kCheckpointMagic[7] = {'R', 'L', 'Q', 'N', 'E', 'T', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<unsigned char> encode_checkpoint(const QNetwork<float>& net);
// Throws FormatError on bad magic, version, architecture or truncation.
QNetwork<float> decode_checkpoint(const std::vector<unsigned char>& bytes,
                                  const std::optional<NetSpec>& expected = std::nullopt);

void save_checkpoint(const QNetwork<float>& net, const std::filesystem::path& path);
QNetwork<float> load_checkpoint(const std::filesystem::path& path,
                                const std::optional<NetSpec>& expected = std::nullopt);

} // namespace rlalign::nn
