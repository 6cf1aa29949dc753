#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "hwm/env/env.hpp"
#include "hwm/util/binio.hpp"

namespace hwm::data {

inline constexpr char kTrajectoryMagic[4] = {'H', 'W', 'M', '1'};
inline constexpr std::uint32_t kTrajectoryVersion = 1;

std::vector<std::uint8_t> encode_trajectory(const env::Trajectory& t);
/// Throws FormatError; if `expect` is set, a file for another env is EnvMismatch.
env::Trajectory decode_trajectory(std::span<const std::uint8_t> bytes,
                                  std::optional<env::EnvId> expect = std::nullopt);

/// Atomic write. Returns the CRC stored in the file.
std::uint32_t write_trajectory(const env::Trajectory& t, const std::filesystem::path& path);
env::Trajectory read_trajectory(const std::filesystem::path& path, std::optional<env::EnvId> expect = std::nullopt);

}  // namespace hwm::data
