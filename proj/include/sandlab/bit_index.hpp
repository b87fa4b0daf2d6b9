#pragma once

#include <bit>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

namespace sandlab {

// Ordered set of integers in [0, capacity) with constant-time membership and
// predecessor/successor through a three-level bitmap. Capacity tops out at
// 64^3 positions, far above any lattice used here.
class BitIndex {
 public:
  explicit BitIndex(int capacity)
      : cap_(capacity),
        count_(0),
        l0_(static_cast<size_t>((capacity + 63) / 64), 0),
        l1_((l0_.size() + 63) / 64, 0),
        l2_(0) {
    if (capacity < 1 || l1_.size() > 64)
      throw std::invalid_argument("BitIndex: capacity out of range");
  }

  int capacity() const { return cap_; }
  int size() const { return count_; }
  bool empty() const { return count_ == 0; }

  bool test(int i) const { return (l0_[i >> 6] >> (i & 63)) & 1u; }

  void set(int i) {
    uint64_t& w = l0_[i >> 6];
    const uint64_t bit = 1ull << (i & 63);
    if (w & bit) return;
    w |= bit;
    l1_[i >> 12] |= 1ull << ((i >> 6) & 63);
    l2_ |= 1ull << (i >> 12);
    ++count_;
  }

  void clear(int i) {
    uint64_t& w = l0_[i >> 6];
    const uint64_t bit = 1ull << (i & 63);
    if (!(w & bit)) return;
    w &= ~bit;
    --count_;
    if (w == 0) {
      uint64_t& s = l1_[i >> 12];
      s &= ~(1ull << ((i >> 6) & 63));
      if (s == 0) l2_ &= ~(1ull << (i >> 12));
    }
  }

  // Smallest member >= i.
  std::optional<int> next_geq(int i) const {
    if (count_ == 0) return std::nullopt;
    if (i < 0) i = 0;
    if (i >= cap_) return std::nullopt;
    const int w0 = i >> 6;
    if (uint64_t w = bits_from(l0_[w0], i & 63))
      return (w0 << 6) | std::countr_zero(w);
    const int w1 = w0 >> 6;
    if (uint64_t s = bits_from(l1_[w1], (w0 & 63) + 1)) {
      const int wa = (w1 << 6) | std::countr_zero(s);
      return (wa << 6) | std::countr_zero(l0_[wa]);
    }
    if (uint64_t t = bits_from(l2_, w1 + 1)) {
      const int wb = std::countr_zero(t);
      const int wa = (wb << 6) | std::countr_zero(l1_[wb]);
      return (wa << 6) | std::countr_zero(l0_[wa]);
    }
    return std::nullopt;
  }

  // Largest member <= i.
  std::optional<int> prev_leq(int i) const {
    if (count_ == 0) return std::nullopt;
    if (i >= cap_) i = cap_ - 1;
    if (i < 0) return std::nullopt;
    const int w0 = i >> 6;
    if (uint64_t w = bits_upto(l0_[w0], i & 63))
      return (w0 << 6) | top_bit(w);
    const int w1 = w0 >> 6;
    if (uint64_t s = bits_upto(l1_[w1], (w0 & 63) - 1)) {
      const int wa = (w1 << 6) | top_bit(s);
      return (wa << 6) | top_bit(l0_[wa]);
    }
    if (uint64_t t = bits_upto(l2_, w1 - 1)) {
      const int wb = top_bit(t);
      const int wa = (wb << 6) | top_bit(l1_[wb]);
      return (wa << 6) | top_bit(l0_[wa]);
    }
    return std::nullopt;
  }

  std::optional<int> min() const { return next_geq(0); }
  std::optional<int> max() const { return prev_leq(cap_ - 1); }

  std::vector<int> collect() const {
    std::vector<int> out;
    out.reserve(count_);
    for (size_t wi = 0; wi < l0_.size(); ++wi) {
      uint64_t w = l0_[wi];
      while (w) {
        out.push_back(static_cast<int>(wi << 6) | std::countr_zero(w));
        w &= w - 1;
      }
    }
    return out;
  }

  friend bool operator==(const BitIndex& a, const BitIndex& b) {
    return a.cap_ == b.cap_ && a.count_ == b.count_ && a.l0_ == b.l0_;
  }

 private:
  static uint64_t bits_from(uint64_t w, int b) {
    return b >= 64 ? 0 : (w & (~0ull << b));
  }
  static uint64_t bits_upto(uint64_t w, int b) {
    if (b < 0) return 0;
    return b >= 63 ? w : (w & ((2ull << b) - 1));
  }
  static int top_bit(uint64_t w) { return 63 - std::countl_zero(w); }

  int cap_;
  int count_;
  std::vector<uint64_t> l0_;
  std::vector<uint64_t> l1_;
  uint64_t l2_;
};

}  // namespace sandlab
