#include "optnet/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

namespace optnet {

using nlohmann::json;

namespace {

std::uint64_t to_little_endian(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  std::uint64_t r = 0;
  for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xffu) << (8 * (7 - i));
  return r;
}

std::filesystem::path data_path(const std::filesystem::path& manifest) {
  auto p = manifest;
  p.replace_extension(".bin");
  return p;
}

}  // namespace

void write_raw_doubles(const std::filesystem::path& path, std::span<const double> values) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open " + path.string() + " for writing");
  for (double v : values) {
    const std::uint64_t bits = to_little_endian(std::bit_cast<std::uint64_t>(v));
    char buf[8];
    std::memcpy(buf, &bits, 8);
    out.write(buf, 8);
  }
  if (!out) throw CheckpointError("write failed: " + path.string());
}

std::vector<double> read_raw_doubles(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() % 8 != 0) throw CheckpointError(path.string() + ": size is not a multiple of 8");
  std::vector<double> out(bytes.size() / 8);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint64_t bits;
    std::memcpy(&bits, bytes.data() + 8 * i, 8);
    out[i] = std::bit_cast<double>(to_little_endian(bits));
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& manifest, std::span<Parameter* const> params,
                     const json& meta) {
  json tensors = json::array();
  std::vector<double> all;
  for (const Parameter* p : params) {
    tensors.push_back({{"name", p->name},
                       {"rows", p->value.rows()},
                       {"cols", p->value.cols()},
                       {"offset", all.size()}});
    all.insert(all.end(), p->value.values().begin(), p->value.values().end());
  }
  const auto bin = data_path(manifest);
  json j = {{"format", "optnet-parameters"},
            {"version", 1},
            {"dtype", "float64-le"},
            {"data", bin.filename().string()},
            {"tensors", tensors},
            {"meta", meta}};
  write_raw_doubles(bin, all);
  std::ofstream out(manifest);
  if (!out) throw CheckpointError("cannot open " + manifest.string() + " for writing");
  out << j.dump(2) << '\n';
}

json load_checkpoint(const std::filesystem::path& manifest, std::span<Parameter* const> params) {
  std::ifstream in(manifest);
  if (!in) throw CheckpointError("cannot open " + manifest.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw CheckpointError(manifest.string() + ": " + e.what());
  }
  if (j.value("format", "") != "optnet-parameters")
    throw CheckpointError(manifest.string() + ": not a parameter manifest");
  const auto& tensors = j.at("tensors");
  if (tensors.size() != params.size())
    throw CheckpointError("checkpoint has " + std::to_string(tensors.size()) +
                          " tensors, model has " + std::to_string(params.size()));
  const auto data = read_raw_doubles(manifest.parent_path() / j.at("data").get<std::string>());
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    const auto& t = tensors[i];
    const auto rows = t.at("rows").get<std::size_t>(), cols = t.at("cols").get<std::size_t>();
    const auto offset = t.at("offset").get<std::size_t>();
    if (t.at("name").get<std::string>() != p.name || rows != p.value.rows() ||
        cols != p.value.cols())
      throw CheckpointError("checkpoint tensor " + std::to_string(i) + " does not match " + p.name);
    if (offset + rows * cols > data.size())
      throw CheckpointError("checkpoint data file is truncated");
    std::copy(data.begin() + static_cast<std::ptrdiff_t>(offset),
              data.begin() + static_cast<std::ptrdiff_t>(offset + rows * cols),
              p.value.values().begin());
  }
  return j.value("meta", json::object());
}

}  // namespace optnet
