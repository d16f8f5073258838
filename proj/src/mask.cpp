#include "ebgcn/mask.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "ebgcn/errors.hpp"

namespace ebgcn {

namespace {
constexpr char kMagic[4] = {'E', 'B', 'M', '1'};

size_t count_ones(const std::vector<uint8_t>& bits) {
  size_t n = 0;
  for (uint8_t b : bits) n += (b != 0);
  return n;
}
}  // namespace

PruneMask PruneMask::make(std::vector<uint8_t> bits, double ratio) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) {
    throw argument_error("PruneMask: ratio must be in [0,1]");
  }
  PruneMask m;
  m.popcount_ = count_ones(bits);
  const auto expect = static_cast<size_t>(
      std::llround((1.0 - ratio) * static_cast<double>(bits.size())));
  if (m.popcount_ != expect) {
    throw contract_error("PruneMask: popcount " + std::to_string(m.popcount_) +
                         " does not match round((1-ratio)*size) = " +
                         std::to_string(expect));
  }
  m.bits_ = std::move(bits);
  m.ratio_ = ratio;
  return m;
}

PruneMask PruneMask::from_bits(std::vector<uint8_t> bits) {
  PruneMask m;
  m.popcount_ = count_ones(bits);
  m.ratio_ = bits.empty() ? 0.0
                          : 1.0 - static_cast<double>(m.popcount_) /
                                      static_cast<double>(bits.size());
  m.bits_ = std::move(bits);
  return m;
}

std::vector<uint8_t> mask_to_bytes(const PruneMask& m) {
  const size_t n = m.size();
  std::vector<uint8_t> out(16 + (n + 7) / 8, 0);
  std::memcpy(out.data(), kMagic, 4);
  const auto len = static_cast<uint32_t>(n);
  for (int i = 0; i < 4; ++i) out[4 + i] = static_cast<uint8_t>(len >> (8 * i));
  uint64_t rbits;
  const double ratio = m.target_ratio();
  std::memcpy(&rbits, &ratio, 8);
  for (int i = 0; i < 8; ++i) out[8 + i] = static_cast<uint8_t>(rbits >> (8 * i));
  for (size_t i = 0; i < n; ++i) {
    if (m.bit(i)) out[16 + i / 8] |= static_cast<uint8_t>(1u << (i % 8));
  }
  return out;
}

PruneMask mask_from_bytes(const std::vector<uint8_t>& blob) {
  if (blob.size() < 16 || std::memcmp(blob.data(), kMagic, 4) != 0) {
    throw format_error("mask blob: bad header");
  }
  uint32_t len = 0;
  for (int i = 0; i < 4; ++i) len |= static_cast<uint32_t>(blob[4 + i]) << (8 * i);
  uint64_t rbits = 0;
  for (int i = 0; i < 8; ++i) rbits |= static_cast<uint64_t>(blob[8 + i]) << (8 * i);
  double ratio;
  std::memcpy(&ratio, &rbits, 8);
  const size_t expect = 16 + (static_cast<size_t>(len) + 7) / 8;
  if (blob.size() != expect) {
    throw format_error("mask blob: expected " + std::to_string(expect) +
                       " bytes, got " + std::to_string(blob.size()));
  }
  std::vector<uint8_t> bits(len, 0);
  for (uint32_t i = 0; i < len; ++i) {
    bits[i] = (blob[16 + i / 8] >> (i % 8)) & 1u;
  }
  return PruneMask::make(std::move(bits), ratio);
}

void save_mask(const PruneMask& m, const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw io_error("cannot open for writing: " + path);
  const auto bytes = mask_to_bytes(m);
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!f) throw io_error("write failed: " + path);
}

PruneMask load_mask(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open: " + path);
  std::vector<uint8_t> blob((std::istreambuf_iterator<char>(f)),
                            std::istreambuf_iterator<char>());
  return mask_from_bytes(blob);
}

}  // namespace ebgcn
