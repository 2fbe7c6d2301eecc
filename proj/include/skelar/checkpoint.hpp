#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "skelar/common.hpp"
#include "skelar/tensor.hpp"

namespace skelar {

// Binary parameter checkpoint: magic "SKLR", u32 version, then per-record
// (u32 name length, UTF-8 name, u32 rank, u64 dims, f64 values) with all
// integers and floats little-endian.
struct CheckpointRecord {
  std::string name;
  Shape dims;
  std::vector<double> values;
};

namespace detail {

inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void write_le(std::ostream& out, T v) {
  static_assert(sizeof(T) <= 8);
  unsigned char buf[sizeof(T)];
  std::uint64_t bits = 0;
  std::memcpy(&bits, &v, sizeof(T));
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
bool read_le(std::istream& in, T& v) {
  unsigned char buf[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(buf), sizeof(T))) return false;
  std::uint64_t bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  std::memcpy(&v, &bits, sizeof(T));
  return true;
}

}  // namespace detail

// Atomic: writes to a temp file in the same directory, then renames.
inline void save_checkpoint(const std::filesystem::path& path,
                            const std::vector<CheckpointRecord>& records) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw data_error("cannot open checkpoint file for writing: " + tmp.string());
    out.write("SKLR", 4);
    detail::write_le<std::uint32_t>(out, detail::kCheckpointVersion);
    for (const CheckpointRecord& rec : records) {
      if (rec.values.size() != shape_numel(rec.dims)) {
        throw contract_error("checkpoint record '" + rec.name + "' has inconsistent dims");
      }
      detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(rec.name.size()));
      out.write(rec.name.data(), static_cast<std::streamsize>(rec.name.size()));
      detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(rec.dims.size()));
      for (std::size_t d : rec.dims) detail::write_le<std::uint64_t>(out, d);
      for (double v : rec.values) detail::write_le<double>(out, v);
    }
    if (!out) throw data_error("checkpoint write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::vector<CheckpointRecord> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open checkpoint file: " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "SKLR", 4) != 0) {
    throw data_error("not a checkpoint file (bad magic): " + path.string());
  }
  std::uint32_t version = 0;
  if (!detail::read_le(in, version) || version != detail::kCheckpointVersion) {
    throw data_error("unsupported checkpoint version in " + path.string());
  }
  std::vector<CheckpointRecord> records;
  for (;;) {
    std::uint32_t name_len = 0;
    if (!detail::read_le(in, name_len)) break;  // clean EOF
    CheckpointRecord rec;
    rec.name.resize(name_len);
    if (!in.read(rec.name.data(), name_len)) throw data_error("truncated checkpoint: " + path.string());
    std::uint32_t rank = 0;
    if (!detail::read_le(in, rank)) throw data_error("truncated checkpoint: " + path.string());
    rec.dims.resize(rank);
    for (std::uint32_t i = 0; i < rank; ++i) {
      std::uint64_t d = 0;
      if (!detail::read_le(in, d)) throw data_error("truncated checkpoint: " + path.string());
      rec.dims[i] = static_cast<std::size_t>(d);
    }
    rec.values.resize(shape_numel(rec.dims));
    for (double& v : rec.values)
      if (!detail::read_le(in, v)) throw data_error("truncated checkpoint: " + path.string());
    records.push_back(std::move(rec));
  }
  return records;
}

// Named-parameter registry helpers.
inline CheckpointRecord record_of(const std::string& name, const Tensor& t) {
  return CheckpointRecord{name, t.shape(), t.values()};
}

inline const CheckpointRecord& find_record(const std::vector<CheckpointRecord>& records,
                                           const std::string& name) {
  for (const CheckpointRecord& r : records)
    if (r.name == name) return r;
  throw data_error("checkpoint record not found: " + name);
}

inline bool has_record(const std::vector<CheckpointRecord>& records, const std::string& name) {
  for (const CheckpointRecord& r : records)
    if (r.name == name) return true;
  return false;
}

inline void load_into(const std::vector<CheckpointRecord>& records, const std::string& name,
                      Tensor& t) {
  const CheckpointRecord& rec = find_record(records, name);
  if (rec.dims != t.shape()) {
    throw data_error("checkpoint record '" + name + "' has shape " + shape_str(rec.dims) +
                     ", expected " + shape_str(t.shape()));
  }
  t.values() = rec.values;
}

}  // namespace skelar
