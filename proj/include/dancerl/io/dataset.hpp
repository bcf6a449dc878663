#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dancerl/demos/demos.hpp"

namespace dancerl {

// Trajectories are stored without music; tracks are regenerated from their
// seed under the same EnvConfig, whose digest is checked on load.
//   "DRLDEMO\0" | u32 version | u64 env digest | u64 seed | str source |
//   u32 levels | f64 level... | per level: u32 count, trajectories | u64 checksum
// trajectory: u64 track seed | i32 length | i32 beat period | u8 has noise | f64 noise |
//             u32 poses | (i32 upper, i32 lower)... | u32 logps | f64...
void save_demo_set(const std::filesystem::path& path, const RankedDemoSet& set,
                   const EnvConfig& env);
RankedDemoSet load_demo_set(const std::filesystem::path& path, const EnvConfig& env);

// A plain trajectory list is a demo set with one level.
void save_trajectories(const std::filesystem::path& path, const std::vector<Trajectory>& trajs,
                       const EnvConfig& env);
std::vector<Trajectory> load_trajectories(const std::filesystem::path& path, const EnvConfig& env);

std::uint64_t env_digest(const EnvConfig& env);

}  // namespace dancerl
