#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace ebgcn {

// Binary keep-mask over edges or flattened weights; 1 = kept, 0 = pruned.
// Immutable once built: popcount(bits) == round((1 - target_ratio) * size)
// always holds.
class PruneMask {
 public:
  PruneMask() = default;

  // bits + the pruning ratio they were derived at. Throws contract_error
  // if the popcount does not match round((1 - ratio) * size).
  static PruneMask make(std::vector<uint8_t> bits, double ratio);

  // Infers the ratio from the bits (ratio = 1 - popcount/size).
  static PruneMask from_bits(std::vector<uint8_t> bits);

  size_t size() const { return bits_.size(); }
  size_t popcount() const { return popcount_; }
  double target_ratio() const { return ratio_; }
  bool bit(size_t i) const { return bits_[i] != 0; }
  const std::vector<uint8_t>& bits() const { return bits_; }
  bool empty() const { return bits_.empty(); }

  bool operator==(const PruneMask& o) const { return bits_ == o.bits_; }

 private:
  std::vector<uint8_t> bits_;
  size_t popcount_ = 0;
  double ratio_ = 0.0;
};

// Bit-packed blob with a 16-byte header: magic "EBM1", u32 little-endian
// bit count, f64 little-endian target ratio; then ceil(size/8) data bytes,
// LSB-first within each byte.
std::vector<uint8_t> mask_to_bytes(const PruneMask& m);
PruneMask mask_from_bytes(const std::vector<uint8_t>& blob);

void save_mask(const PruneMask& m, const std::string& path);
PruneMask load_mask(const std::string& path);

}  // namespace ebgcn
