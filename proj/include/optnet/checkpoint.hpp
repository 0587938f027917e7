#pragma once

#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

#include "json.hpp"
#include "optnet/parameter.hpp"

namespace optnet {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Writes `count` doubles as little-endian IEEE-754 binary64.
void write_raw_doubles(const std::filesystem::path& path, std::span<const double> values);
std::vector<double> read_raw_doubles(const std::filesystem::path& path);

/// Saves parameters as `<manifest>` (JSON: names, shapes, offsets, `meta`)
/// plus a sibling `.bin` file holding the values in declared order.
void save_checkpoint(const std::filesystem::path& manifest, std::span<Parameter* const> params,
                     const nlohmann::json& meta = nlohmann::json::object());

/// Loads into existing parameters; names and shapes must match the manifest
/// exactly. Returns the stored `meta` object.
nlohmann::json load_checkpoint(const std::filesystem::path& manifest,
                               std::span<Parameter* const> params);

}  // namespace optnet
