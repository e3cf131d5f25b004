#include "cellgan/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace cellgan::ckpt {

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'C', 'G', 'A', 'N'};

template <typename T>
void put(std::string& buf, T v) {
  char tmp[sizeof(T)];
  std::memcpy(tmp, &v, sizeof(T));
  buf.append(tmp, sizeof(T));
}

template <typename T>
T take(const std::string& buf, size_t& pos) {
  if (pos + sizeof(T) > buf.size())
    throw DataError("checkpoint: truncated file (record cut short)");
  T v;
  std::memcpy(&v, buf.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

void write_checkpoint(const std::string& path, const std::vector<TensorRecord>& records) {
  std::string buf;
  buf.append(kMagic, 4);
  put<uint32_t>(buf, kFormatVersion);
  for (const auto& r : records) {
    put<uint64_t>(buf, (uint64_t)r.name.size());
    buf.append(r.name);
    put<uint64_t>(buf, (uint64_t)r.shape.size());
    int64_t numel = 1;
    for (int d : r.shape) {
      put<uint64_t>(buf, (uint64_t)d);
      numel *= d;
    }
    if ((int64_t)r.data.size() != numel)
      throw DataError("checkpoint: record '" + r.name + "' data does not fill its dims");
    buf.append(reinterpret_cast<const char*>(r.data.data()), r.data.size() * sizeof(float));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("checkpoint: cannot open for writing: " + path);
  out.write(buf.data(), (std::streamsize)buf.size());
  if (!out) throw DataError("checkpoint: write failed: " + path);
}

std::vector<TensorRecord> read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("checkpoint: cannot open: " + path);
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  size_t pos = 0;
  if (buf.size() < 8 || std::memcmp(buf.data(), kMagic, 4) != 0)
    throw DataError("checkpoint: bad magic bytes in " + path);
  pos = 4;
  const uint32_t version = take<uint32_t>(buf, pos);
  if (version != kFormatVersion)
    throw DataError(strfmt("checkpoint: unsupported format version %u", version));

  std::vector<TensorRecord> records;
  while (pos < buf.size()) {
    TensorRecord r;
    const uint64_t name_len = take<uint64_t>(buf, pos);
    if (pos + name_len > buf.size()) throw DataError("checkpoint: truncated name");
    r.name.assign(buf.data() + pos, name_len);
    pos += name_len;
    const uint64_t rank = take<uint64_t>(buf, pos);
    if (rank > 8) throw DataError("checkpoint: implausible tensor rank");
    uint64_t numel = 1;
    for (uint64_t i = 0; i < rank; ++i) {
      const uint64_t d = take<uint64_t>(buf, pos);
      r.shape.push_back((int)d);
      numel *= d;
    }
    if (pos + numel * sizeof(float) > buf.size())
      throw DataError("checkpoint: truncated tensor data for '" + r.name + "'");
    r.data.resize(numel);
    std::memcpy(r.data.data(), buf.data() + pos, numel * sizeof(float));
    pos += numel * sizeof(float);
    records.push_back(std::move(r));
  }
  return records;
}

TensorRecord scalar_record(const std::string& name, double value) {
  return TensorRecord{name, {1}, {(float)value}};
}

TensorRecord bytes_record(const std::string& name, const std::string& bytes) {
  TensorRecord r;
  r.name = name;
  r.shape = {(int)bytes.size()};
  r.data.reserve(bytes.size());
  for (unsigned char c : bytes) r.data.push_back((float)c);
  return r;
}

const TensorRecord* find_record(const std::vector<TensorRecord>& records,
                                const std::string& name) {
  for (const auto& r : records)
    if (r.name == name) return &r;
  return nullptr;
}

double get_scalar(const std::vector<TensorRecord>& records, const std::string& name) {
  const TensorRecord* r = find_record(records, name);
  if (!r || r->data.size() != 1)
    throw DataError("checkpoint: missing scalar record '" + name + "'");
  return (double)r->data[0];
}

std::string get_bytes(const std::vector<TensorRecord>& records, const std::string& name) {
  const TensorRecord* r = find_record(records, name);
  if (!r) throw DataError("checkpoint: missing record '" + name + "'");
  std::string s;
  s.reserve(r->data.size());
  for (float f : r->data) s.push_back((char)(unsigned char)f);
  return s;
}

}  // namespace cellgan::ckpt
