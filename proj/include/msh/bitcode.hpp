// Fixed-width binary code, bit-packed into 64-bit words. Bit convention:
// +1 maps to bit 1, -1 to bit 0; padding bits past n_bits stay zero.
#pragma once

#include <cstdint>
#include <vector>

#include "msh/errors.hpp"

namespace msh {

class Bitcode {
 public:
  Bitcode() = default;
  explicit Bitcode(std::uint32_t n_bits)
      : n_bits_(n_bits), words_((n_bits + 63) / 64, 0) {}

  // Packs the signs of a real vector, sign(0) = +1.
  static Bitcode from_signs(const double* values, std::size_t n) {
    Bitcode code(static_cast<std::uint32_t>(n));
    for (std::size_t i = 0; i < n; ++i) {
      if (values[i] >= 0.0) code.words_[i >> 6] |= (1ull << (i & 63));
    }
    return code;
  }

  static Bitcode from_signs(const std::vector<double>& values) {
    return from_signs(values.data(), values.size());
  }

  std::uint32_t n_bits() const { return n_bits_; }
  std::size_t n_words() const { return words_.size(); }
  const std::uint64_t* words() const { return words_.data(); }
  std::uint64_t* words() { return words_.data(); }

  bool bit(std::size_t i) const { return (words_[i >> 6] >> (i & 63)) & 1ull; }

  void set_bit(std::size_t i, bool value) {
    if (value) {
      words_[i >> 6] |= (1ull << (i & 63));
    } else {
      words_[i >> 6] &= ~(1ull << (i & 63));
    }
  }

  // Unpacks to {-1, +1}.
  std::vector<double> to_signs() const {
    std::vector<double> out(n_bits_);
    for (std::size_t i = 0; i < n_bits_; ++i) out[i] = bit(i) ? 1.0 : -1.0;
    return out;
  }

  friend bool operator==(const Bitcode& a, const Bitcode& b) {
    return a.n_bits_ == b.n_bits_ && a.words_ == b.words_;
  }

 private:
  std::uint32_t n_bits_ = 0;
  std::vector<std::uint64_t> words_;
};

}  // namespace msh
