#pragma once

// Binary file formats, all little-endian.
//
// CIM1 image:  "CIM1" | u32 height | u32 width | u32 flags | height*width x (f32 re, f32 im)
// MSK1 mask:   "MSK1" | u32 height | u32 width | u8 kind | u32 R_num | u32 R_den
//              | ceil(height*width/8) bytes, row-major, least significant bit first
//
// CIM1 flags are reserved and written as 0.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "dgec/core.hpp"
#include "dgec/forward_model.hpp"

namespace dgec {

static_assert(std::endian::native == std::endian::little, "file formats assume a little-endian host");

/// Malformed or unreadable file.
class FormatError : public Error {
 public:
  using Error::Error;
};

namespace wire {

inline void put_u8(std::vector<std::uint8_t>& buf, std::uint8_t v) { buf.push_back(v); }

inline void put_u16(std::vector<std::uint8_t>& buf, std::uint16_t v) {
  for (int i = 0; i < 2; ++i) buf.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_u32(std::vector<std::uint8_t>& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_f32(std::vector<std::uint8_t>& buf, float v) { put_u32(buf, std::bit_cast<std::uint32_t>(v)); }

inline void put_f64(std::vector<std::uint8_t>& buf, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

inline void put_magic(std::vector<std::uint8_t>& buf, const char* magic) {
  buf.insert(buf.end(), magic, magic + 4);
}

/// Cursor over a byte buffer; throws FormatError on overrun.
class Reader {
 public:
  Reader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

  std::size_t remaining() const { return size_ - pos_; }
  std::size_t position() const { return pos_; }

  void need(std::size_t n) const {
    if (remaining() < n) throw FormatError("truncated data: need " + std::to_string(n) + " bytes at offset " +
                                           std::to_string(pos_) + ", have " + std::to_string(remaining()));
  }

  std::uint8_t u8() {
    need(1);
    return data_[pos_++];
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = 0;
    for (int i = 0; i < 2; ++i) v |= static_cast<std::uint16_t>(data_[pos_++]) << (8 * i);
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_++]) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_++]) << (8 * i);
    return std::bit_cast<double>(v);
  }
  std::array<char, 4> magic() {
    need(4);
    std::array<char, 4> m{};
    std::memcpy(m.data(), data_ + pos_, 4);
    pos_ += 4;
    return m;
  }

 private:
  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

inline bool magic_is(const std::array<char, 4>& m, const char* expected) { return std::memcmp(m.data(), expected, 4) == 0; }

/// Interleaved float32 payload of an image (no header).
inline void put_image_payload(std::vector<std::uint8_t>& buf, const CVector& data) {
  buf.reserve(buf.size() + static_cast<std::size_t>(data.size()) * 8);
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    put_f32(buf, static_cast<float>(data[i].real()));
    put_f32(buf, static_cast<float>(data[i].imag()));
  }
}

inline CVector get_image_payload(Reader& rd, std::size_t count) {
  rd.need(count * 8);
  CVector out(static_cast<Eigen::Index>(count));
  for (std::size_t i = 0; i < count; ++i) {
    const float re = rd.f32();
    const float im = rd.f32();
    out[static_cast<Eigen::Index>(i)] = cplx(re, im);
  }
  return out;
}

}  // namespace wire

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("short write to " + path.string());
}

// ---------------------------------------------------------------------------
// CIM1

inline std::vector<std::uint8_t> encode_cim1(const ComplexImage& img) {
  std::vector<std::uint8_t> buf;
  wire::put_magic(buf, "CIM1");
  wire::put_u32(buf, static_cast<std::uint32_t>(img.height));
  wire::put_u32(buf, static_cast<std::uint32_t>(img.width));
  wire::put_u32(buf, 0);
  wire::put_image_payload(buf, img.data);
  return buf;
}

inline ComplexImage decode_cim1(const std::vector<std::uint8_t>& bytes) {
  wire::Reader rd(bytes.data(), bytes.size());
  if (!wire::magic_is(rd.magic(), "CIM1")) throw FormatError("not a CIM1 image (bad magic)");
  const std::uint32_t h = rd.u32();
  const std::uint32_t w = rd.u32();
  rd.u32();  // flags
  const std::size_t n = static_cast<std::size_t>(h) * w;
  if (rd.remaining() != n * 8) {
    throw FormatError("CIM1 payload is " + std::to_string(rd.remaining()) + " bytes, header implies " +
                      std::to_string(n * 8));
  }
  return ComplexImage(h, w, wire::get_image_payload(rd, n));
}

inline void save_cim1(const std::filesystem::path& path, const ComplexImage& img) { write_bytes(path, encode_cim1(img)); }
inline ComplexImage load_cim1(const std::filesystem::path& path) { return decode_cim1(read_bytes(path)); }

// ---------------------------------------------------------------------------
// MSK1

inline std::vector<std::uint8_t> encode_msk1(const SamplingMask& mask) {
  std::vector<std::uint8_t> buf;
  wire::put_magic(buf, "MSK1");
  wire::put_u32(buf, static_cast<std::uint32_t>(mask.height));
  wire::put_u32(buf, static_cast<std::uint32_t>(mask.width));
  wire::put_u8(buf, static_cast<std::uint8_t>(mask.kind));
  wire::put_u32(buf, mask.acceleration.num);
  wire::put_u32(buf, mask.acceleration.den);
  const std::size_t n = mask.sampled.size();
  std::vector<std::uint8_t> bits((n + 7) / 8, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (mask.sampled[i]) bits[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
  }
  buf.insert(buf.end(), bits.begin(), bits.end());
  return buf;
}

inline SamplingMask decode_msk1(const std::vector<std::uint8_t>& bytes) {
  wire::Reader rd(bytes.data(), bytes.size());
  if (!wire::magic_is(rd.magic(), "MSK1")) throw FormatError("not a MSK1 mask (bad magic)");
  SamplingMask mask;
  mask.height = rd.u32();
  mask.width = rd.u32();
  const std::uint8_t kind = rd.u8();
  if (kind > 1) throw FormatError("MSK1 mask has unknown kind " + std::to_string(kind));
  mask.kind = static_cast<MaskKind>(kind);
  mask.acceleration.num = rd.u32();
  mask.acceleration.den = rd.u32();
  if (mask.acceleration.num == 0 || mask.acceleration.den == 0) throw FormatError("MSK1 mask has zero R term");
  const std::size_t n = mask.height * mask.width;
  if (rd.remaining() != (n + 7) / 8) throw FormatError("MSK1 bit grid has the wrong length");
  mask.sampled.assign(n, 0);
  for (std::size_t byte = 0; byte < (n + 7) / 8; ++byte) {
    const std::uint8_t v = rd.u8();
    for (std::size_t b = 0; b < 8 && byte * 8 + b < n; ++b) mask.sampled[byte * 8 + b] = (v >> b) & 1u;
  }
  return mask;
}

inline void save_msk1(const std::filesystem::path& path, const SamplingMask& mask) { write_bytes(path, encode_msk1(mask)); }
inline SamplingMask load_msk1(const std::filesystem::path& path) { return decode_msk1(read_bytes(path)); }

}  // namespace dgec
