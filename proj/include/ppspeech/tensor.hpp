#pragma once

#include <cstddef>
#include <cstdint>
#include <numeric>
#include <string_view>
#include <vector>

#include "ppspeech/errors.hpp"

namespace ppspeech {

// Dense row-major float32 tensor. All kernels in this engine accumulate in a
// fixed left-to-right order so results are bit-reproducible across runs and
// thread schedules.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<float> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
    data.assign(numel(), 0.0f);
  }

  static Tensor zeros(std::vector<std::size_t> s) { return Tensor(std::move(s)); }

  std::size_t numel() const {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
  }
  std::size_t rank() const { return shape.size(); }

  float& at(std::size_t i) { return data[i]; }
  float at(std::size_t i) const { return data[i]; }
  float& at(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
  float at(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }
  float& at(std::size_t i, std::size_t j, std::size_t k) {
    return data[(i * shape[1] + j) * shape[2] + k];
  }
  float at(std::size_t i, std::size_t j, std::size_t k) const {
    return data[(i * shape[1] + j) * shape[2] + k];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

inline void require_shape(bool ok, const char* what) {
  if (!ok) throw ShapeMismatch(what);
}

// SplitMix64 stream. Chosen because it is trivially portable: the sequence is
// a pure function of the 64-bit seed, with no platform-dependent state.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : state_(seed) {}

  // Derives an independent stream for a named tensor: the name is folded into
  // the seed with FNV-1a so every (seed, name) pair starts a distinct stream.
  SeededRng(std::uint64_t seed, std::string_view name) : state_(seed ^ fnv1a(name)) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), quantized to 24 bits so the float value is exact.
  float next_unit() { return static_cast<float>(next_u64() >> 40) * (1.0f / 16777216.0f); }

  // Uniform in [lo, hi).
  float next_in(float lo, float hi) { return lo + (hi - lo) * next_unit(); }

  // Uniform integer in [0, n).
  std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

  static std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (char c : s) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ull;
    }
    return h;
  }

 private:
  std::uint64_t state_;
};

}  // namespace ppspeech
