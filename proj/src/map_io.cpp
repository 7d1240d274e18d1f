#include "sslam/io/map_io.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace sslam {

namespace {

constexpr std::array<char, 4> kMagic = {'S', 'F', 'L', 'M'};
constexpr std::uint32_t kVersion = 1;
constexpr int kFloatsPerSurfel = 13;  // center 3, quat xyzw 4, scales 2, opacity, color 3

std::uint32_t crc32(const std::uint8_t* data, size_t size) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t crc = 0xFFFFFFFFu;
  for (size_t i = 0; i < size; ++i) crc = table[(crc ^ data[i]) & 0xFF] ^ (crc >> 8);
  return crc ^ 0xFFFFFFFFu;
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xFF));
  out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xFF));
  out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xFF));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  put_u32(out, static_cast<std::uint32_t>(v & 0xFFFFFFFFu));
  put_u32(out, static_cast<std::uint32_t>(v >> 32));
}

void put_f32(std::vector<std::uint8_t>& out, float v) {
  put_u32(out, std::bit_cast<std::uint32_t>(v));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint64_t get_u64(const std::uint8_t* p) {
  return static_cast<std::uint64_t>(get_u32(p)) |
         (static_cast<std::uint64_t>(get_u32(p + 4)) << 32);
}

float get_f32(const std::uint8_t* p) { return std::bit_cast<float>(get_u32(p)); }

}  // namespace

void save_map(const std::string& path, const SurfelMapd& map) {
  std::vector<std::uint8_t> payload;
  payload.reserve(static_cast<size_t>(map.size()) * kFloatsPerSurfel * 4);
  for (const Surfeld& s : map.surfels) {
    for (int c = 0; c < 3; ++c) put_f32(payload, static_cast<float>(s.center[c]));
    for (int c = 0; c < 4; ++c) put_f32(payload, static_cast<float>(s.orientation.coeffs()[c]));
    put_f32(payload, static_cast<float>(s.su));
    put_f32(payload, static_cast<float>(s.sv));
    put_f32(payload, static_cast<float>(s.opacity));
    for (int c = 0; c < 3; ++c) put_f32(payload, static_cast<float>(s.color[c]));
  }

  std::vector<std::uint8_t> header;
  header.insert(header.end(), kMagic.begin(), kMagic.end());
  put_u32(header, kVersion);
  put_u64(header, static_cast<std::uint64_t>(map.size()));

  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os.write(reinterpret_cast<const char*>(header.data()),
           static_cast<std::streamsize>(header.size()));
  os.write(reinterpret_cast<const char*>(payload.data()),
           static_cast<std::streamsize>(payload.size()));
  std::vector<std::uint8_t> tail;
  put_u32(tail, crc32(payload.data(), payload.size()));
  os.write(reinterpret_cast<const char*>(tail.data()), static_cast<std::streamsize>(tail.size()));
  if (!os) throw std::runtime_error("write failed: " + path);
}

SurfelMapd load_map(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                                  std::istreambuf_iterator<char>());
  if (bytes.size() < 20) throw std::runtime_error("truncated map file: " + path);
  if (std::memcmp(bytes.data(), kMagic.data(), 4) != 0) {
    throw std::runtime_error("bad magic in map file: " + path);
  }
  if (get_u32(bytes.data() + 4) != kVersion) {
    throw std::runtime_error("unsupported map file version: " + path);
  }
  const std::uint64_t count = get_u64(bytes.data() + 8);
  const size_t payload_size = static_cast<size_t>(count) * kFloatsPerSurfel * 4;
  if (bytes.size() != 16 + payload_size + 4) {
    throw std::runtime_error("map file size mismatch: " + path);
  }
  const std::uint8_t* payload = bytes.data() + 16;
  const std::uint32_t stored_crc = get_u32(payload + payload_size);
  if (crc32(payload, payload_size) != stored_crc) {
    throw std::runtime_error("map file checksum mismatch: " + path);
  }

  SurfelMapd map;
  map.surfels.reserve(static_cast<size_t>(count));
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint8_t* rec = payload + i * kFloatsPerSurfel * 4;
    Surfeld s;
    for (int c = 0; c < 3; ++c) s.center[c] = get_f32(rec + 4 * c);
    Eigen::Vector4d q;
    for (int c = 0; c < 4; ++c) q[c] = get_f32(rec + 4 * (3 + c));
    s.orientation.coeffs() = q;
    s.orientation.normalize();
    s.su = get_f32(rec + 4 * 7);
    s.sv = get_f32(rec + 4 * 8);
    s.opacity = get_f32(rec + 4 * 9);
    for (int c = 0; c < 3; ++c) s.color[c] = get_f32(rec + 4 * (10 + c));
    map.surfels.push_back(s);
  }
  ++map.generation;
  return map;
}

}  // namespace sslam
