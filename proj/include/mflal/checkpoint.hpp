#pragma once

#include <cstdint>
#include <string>

#include "mflal/controller.hpp"

namespace mflal {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Self-describing binary snapshot of a run: magic, format version, schema
/// hash, then the resolved config, RNG state, every model parameter,
/// standardizers, dataset, oracle records, cost ledger and loop state, and
/// a trailing checksum.
std::string serialize_checkpoint(const ActiveLearner& learner);
/// Rebuilds a learner; throws CheckpointError on truncation, corruption or
/// a version mismatch, before any state is exposed.
ActiveLearner deserialize_checkpoint(const std::string& bytes);

/// Writes through a temporary file and rename.
void save_checkpoint(const ActiveLearner& learner, const std::string& path);
ActiveLearner load_checkpoint(const std::string& path);

}  // namespace mflal
