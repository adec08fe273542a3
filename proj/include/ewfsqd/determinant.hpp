#pragma once

#include <bit>
#include <compare>
#include <cstdint>
#include <functional>
#include <string>

namespace ewfsqd {

using Mask = std::uint64_t;

/// Occupation bitmasks for one determinant (or one raw measured bitstring).
/// Bit p of `alpha` is spin-orbital p-alpha; bit p of `beta` is p-beta.
/// In Jordan-Wigner order the alpha block precedes the beta block.
struct Determinant {
  Mask alpha = 0;
  Mask beta = 0;

  int n_alpha() const noexcept { return std::popcount(alpha); }
  int n_beta() const noexcept { return std::popcount(beta); }

  friend auto operator<=>(const Determinant&, const Determinant&) = default;
};

struct DeterminantHash {
  std::size_t operator()(const Determinant& d) const noexcept {
    std::uint64_t h = d.alpha * 0x9E3779B97F4A7C15ULL;
    h ^= d.beta + 0x7F4A7C159E3779B9ULL + (h << 6) + (h >> 2);
    return static_cast<std::size_t>(h);
  }
};

/// Text form: character k is spin-orbital k (0..M-1 alpha, M..2M-1 beta).
std::string to_bitstring(const Determinant& d, int norb);
Determinant from_bitstring(const std::string& bits, int norb);

}  // namespace ewfsqd
