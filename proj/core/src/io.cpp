#include "voc/io.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "voc/error.hpp"

namespace voc {

void put_u8(std::vector<uint8_t>& out, uint8_t v) { out.push_back(v); }

void put_u16(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(static_cast<uint8_t>(v & 0xff));
  out.push_back(static_cast<uint8_t>(v >> 8));
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}

void put_u64(std::vector<uint8_t>& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}

void put_f32(std::vector<uint8_t>& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

void put_f64(std::vector<uint8_t>& out, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(out, bits);
}

uint8_t ByteReader::u8() {
  if (pos_ + 1 > data_.size()) throw IoError("byte stream truncated");
  return data_[pos_++];
}

uint16_t ByteReader::u16() {
  uint16_t lo = u8(), hi = u8();
  return static_cast<uint16_t>(lo | (hi << 8));
}

uint32_t ByteReader::u32() {
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(u8()) << (8 * i);
  return v;
}

uint64_t ByteReader::u64() {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(u8()) << (8 * i);
  return v;
}

float ByteReader::f32() {
  uint32_t bits = u32();
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

double ByteReader::f64() {
  uint64_t bits = u64();
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

std::span<const uint8_t> ByteReader::bytes(std::size_t n) {
  if (pos_ + n > data_.size()) throw IoError("byte stream truncated");
  auto s = data_.subspan(pos_, n);
  pos_ += n;
  return s;
}

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for reading: " + path);
  f.seekg(0, std::ios::end);
  auto n = static_cast<std::size_t>(f.tellg());
  f.seekg(0);
  std::vector<uint8_t> buf(n);
  if (n > 0) f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n));
  if (!f) throw IoError("read failed: " + path);
  return buf;
}

void write_file(const std::string& path, std::span<const uint8_t> bytes) {
  auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed: " + path);
}

void write_file(const std::string& path, const std::string& text) {
  write_file(path, std::span<const uint8_t>(reinterpret_cast<const uint8_t*>(text.data()), text.size()));
}

bool file_exists(const std::string& path) { return std::filesystem::exists(path); }

uint64_t fnv1a64(std::span<const uint8_t> bytes) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string fnv1a64_hex(std::span<const uint8_t> bytes) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(bytes)));
  return buf;
}

std::string format_double(double v) {
  // Shortest of %.15g/%.16g/%.17g that parses back to the same bits.
  char buf[40];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    double back = std::strtod(buf, nullptr);
    if (back == v) return buf;
  }
  return buf;
}

void CsvWriter::row(const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out_ += ',';
    out_ += fields[i];
  }
  out_ += '\n';
}

void CsvWriter::save(const std::string& path) const { write_file(path, out_); }

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> cur;
  std::string field;
  for (char c : text) {
    if (c == ',') {
      cur.push_back(field);
      field.clear();
    } else if (c == '\n') {
      cur.push_back(field);
      field.clear();
      rows.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  if (!field.empty() || !cur.empty()) {
    cur.push_back(field);
    rows.push_back(cur);
  }
  return rows;
}

void write_pgm(const std::string& path, int h, int w, std::span<const uint8_t> px) {
  if (static_cast<std::size_t>(h) * static_cast<std::size_t>(w) != px.size())
    throw InvalidInputError("write_pgm: pixel count does not match dimensions");
  std::string header = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  std::vector<uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), px.begin(), px.end());
  write_file(path, out);
}

void write_json_blob(const std::string& path, const std::string& json,
                     std::span<const uint8_t> blob) {
  std::vector<uint8_t> out;
  put_u32(out, static_cast<uint32_t>(json.size()));
  out.insert(out.end(), json.begin(), json.end());
  out.insert(out.end(), blob.begin(), blob.end());
  write_file(path, out);
}

std::pair<std::string, std::vector<uint8_t>> read_json_blob(const std::string& path) {
  auto bytes = read_file(path);
  ByteReader r(bytes);
  uint32_t n = r.u32();
  auto js = r.bytes(n);
  std::string json(js.begin(), js.end());
  std::vector<uint8_t> blob(bytes.begin() + 4 + n, bytes.end());
  return {json, blob};
}

std::vector<uint8_t> doubles_to_f64_le(std::span<const double> v) {
  std::vector<uint8_t> out;
  out.reserve(v.size() * 8);
  for (double d : v) put_f64(out, d);
  return out;
}

std::vector<double> f64_le_to_doubles(std::span<const uint8_t> bytes) {
  if (bytes.size() % 8) throw IoError("f64 blob length not a multiple of 8");
  ByteReader r(bytes);
  std::vector<double> out(bytes.size() / 8);
  for (auto& d : out) d = r.f64();
  return out;
}

std::vector<uint8_t> doubles_to_f32_le(std::span<const double> v) {
  std::vector<uint8_t> out;
  out.reserve(v.size() * 4);
  for (double d : v) put_f32(out, static_cast<float>(d));
  return out;
}

std::vector<double> f32_le_to_doubles(std::span<const uint8_t> bytes) {
  if (bytes.size() % 4) throw IoError("f32 blob length not a multiple of 4");
  ByteReader r(bytes);
  std::vector<double> out(bytes.size() / 4);
  for (auto& d : out) d = static_cast<double>(r.f32());
  return out;
}

}  // namespace voc
