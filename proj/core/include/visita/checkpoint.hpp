#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "visita/data_io.hpp"
#include "visita/encoders.hpp"

namespace visita {

inline constexpr char kCheckpointMagic[4] = {'M', 'K', 'V', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  std::vector<std::uint32_t> dims;  // empty for a scalar
  std::vector<double> values;

  bool operator==(const NamedTensor&) const = default;
};

/// "MKVT", u32 version, then per tensor: u16 name length, name bytes, u8 rank,
/// u32 dims, f64 payload. All integers and floats little-endian.
std::string encode_tensors(std::span<const NamedTensor> tensors);
/// FormatError (mentioning MKVT) on bad magic or truncation;
/// UnsupportedFormatError on an unknown version.
std::vector<NamedTensor> decode_tensors(std::string_view bytes, std::string_view what = "checkpoint");

struct Checkpoint {
  MatchModel model;
  Vocab vocab;
};

std::vector<NamedTensor> checkpoint_tensors(const MatchModel& model, const Vocab& vocab);
/// Inverse of checkpoint_tensors. FormatError on missing, unknown or
/// misshapen tensors.
Checkpoint checkpoint_from_tensors(std::span<const NamedTensor> tensors, std::string_view what = "checkpoint");

std::string serialize_checkpoint(const MatchModel& model, const Vocab& vocab);
Checkpoint deserialize_checkpoint(std::string_view bytes, std::string_view what = "checkpoint");
void save_checkpoint(const std::filesystem::path& path, const MatchModel& model, const Vocab& vocab);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace visita
