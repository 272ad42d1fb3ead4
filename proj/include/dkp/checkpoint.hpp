// Copyright 2026 The dkp Authors. Apache 2.0 License.
//
// Binary checkpoint, little-endian:
//   "DKPT" | u32 version | { char[4] tag | u64 length | payload }*
// Sections: CONF (config JSON), VOCB (tokens), MODL (weights),
// STAT (step, epoch, RNG state, epoch log).

#ifndef DKP_CHECKPOINT_HPP_
#define DKP_CHECKPOINT_HPP_

#include <cstdint>
#include <string>

#include "dkp/train.hpp"

namespace dkp {

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string serialize_checkpoint(const TrainState& st);
// Throws FormatError on a bad magic, version, truncation or malformed section.
TrainState deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const TrainState& st, const std::string& path);
TrainState load_checkpoint(const std::string& path);

}  // namespace dkp

#endif  // DKP_CHECKPOINT_HPP_
