#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace voc {

// Little-endian byte stream helpers. All on-disk formats in this project are
// explicitly little-endian, so serialization goes through these rather than
// raw memcpy of host types.

void put_u8(std::vector<uint8_t>& out, uint8_t v);
void put_u16(std::vector<uint8_t>& out, uint16_t v);
void put_u32(std::vector<uint8_t>& out, uint32_t v);
void put_u64(std::vector<uint8_t>& out, uint64_t v);
void put_f32(std::vector<uint8_t>& out, float v);
void put_f64(std::vector<uint8_t>& out, double v);

/// Cursor over an in-memory byte buffer. Reads throw IoError past the end.
class ByteReader {
 public:
  explicit ByteReader(std::span<const uint8_t> data) : data_(data) {}
  uint8_t u8();
  uint16_t u16();
  uint32_t u32();
  uint64_t u64();
  float f32();
  double f64();
  std::span<const uint8_t> bytes(std::size_t n);
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  std::span<const uint8_t> data_;
  std::size_t pos_ = 0;
};

std::vector<uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, std::span<const uint8_t> bytes);
void write_file(const std::string& path, const std::string& text);
bool file_exists(const std::string& path);

/// FNV-1a 64-bit hash, used for artifact fingerprints in run manifests.
uint64_t fnv1a64(std::span<const uint8_t> bytes);
std::string fnv1a64_hex(std::span<const uint8_t> bytes);

/// Shortest decimal rendering that round-trips a double ("%.17g" trimmed).
/// Every CSV and JSON number the project emits goes through this, so re-runs
/// produce byte-identical files.
std::string format_double(double v);

/// Minimal CSV emitter. Fields are written verbatim; numeric fields should be
/// pre-formatted with format_double.
class CsvWriter {
 public:
  void row(const std::vector<std::string>& fields);
  const std::string& str() const { return out_; }
  void save(const std::string& path) const;

 private:
  std::string out_;
};

std::vector<std::vector<std::string>> parse_csv(const std::string& text);

/// Binary P5 PGM, maxval 255.
void write_pgm(const std::string& path, int h, int w, std::span<const uint8_t> px);

// Container framing shared by codebook files, checkpoints, and the tabular
// model file: u32 header length, JSON header bytes, then a raw blob.
void write_json_blob(const std::string& path, const std::string& json,
                     std::span<const uint8_t> blob);
std::pair<std::string, std::vector<uint8_t>> read_json_blob(const std::string& path);

std::vector<uint8_t> doubles_to_f64_le(std::span<const double> v);
std::vector<double> f64_le_to_doubles(std::span<const uint8_t> bytes);
std::vector<uint8_t> doubles_to_f32_le(std::span<const double> v);
std::vector<double> f32_le_to_doubles(std::span<const uint8_t> bytes);

}  // namespace voc
