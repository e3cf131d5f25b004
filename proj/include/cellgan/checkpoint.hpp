#pragma once

#include <string>
#include <vector>

#include "cellgan/tensor.hpp"

namespace cellgan::ckpt {

// Checkpoint container format: magic "CGAN", format version u32, then
// per-tensor records (name length + name, rank, dims as u64, raw
// little-endian f32 values) until end of file. Non-tensor state (optimizer
// step counters, RNG state bytes, metadata) rides along as f32 records under
// reserved "__"-prefixed names.

inline constexpr uint32_t kFormatVersion = 1;

struct TensorRecord {
  std::string name;
  ad::Shape shape;
  std::vector<float> data;
};

void write_checkpoint(const std::string& path, const std::vector<TensorRecord>& records);
std::vector<TensorRecord> read_checkpoint(const std::string& path);

TensorRecord scalar_record(const std::string& name, double value);
TensorRecord bytes_record(const std::string& name, const std::string& bytes);

const TensorRecord* find_record(const std::vector<TensorRecord>& records, const std::string& name);
double get_scalar(const std::vector<TensorRecord>& records, const std::string& name);
std::string get_bytes(const std::vector<TensorRecord>& records, const std::string& name);

}  // namespace cellgan::ckpt
