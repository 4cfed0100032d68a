#pragma once

#include <cstdint>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace rmabm {

// Random source for one simulation instance. Every stochastic choice in a
// simulation draws from a single Rng in a fixed order, so a seed pins the
// whole trajectory. State round-trips through text for checkpointing.
class Rng {
 public:
  Rng() : engine_(0) {}
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  void reseed(std::uint64_t seed) { engine_.seed(seed); }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Multiply-shift bound; the bias of ~n/2^64 is
  // far below anything observable.
  std::uint64_t uniform_int(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(engine_()) * n) >> 64);
  }

  int uniform_index(int n) {
    return static_cast<int>(uniform_int(static_cast<std::uint64_t>(n)));
  }

  bool bernoulli(double p) { return uniform() < p; }

  // k distinct indices from [0, n), in draw order. Rejection sampling when k
  // is small relative to n (the hot path), partial Fisher-Yates otherwise.
  // k > n is treated as k == n.
  void sample_distinct(int n, int k, std::vector<int>& out) {
    if (k > n) k = n;
    out.clear();
    if (3 * k <= n) {
      for (int i = 0; i < k; ++i) {
        int candidate;
        bool fresh;
        do {
          candidate = uniform_index(n);
          fresh = true;
          for (int j = 0; j < i; ++j) {
            if (out[static_cast<std::size_t>(j)] == candidate) {
              fresh = false;
              break;
            }
          }
        } while (!fresh);
        out.push_back(candidate);
      }
    } else {
      scratch_.resize(static_cast<std::size_t>(n));
      std::iota(scratch_.begin(), scratch_.end(), 0);
      for (int i = 0; i < k; ++i) {
        const int j = i + uniform_index(n - i);
        std::swap(scratch_[static_cast<std::size_t>(i)],
                  scratch_[static_cast<std::size_t>(j)]);
        out.push_back(scratch_[static_cast<std::size_t>(i)]);
      }
    }
  }

  // In-place Fisher-Yates shuffle driven by this engine.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    const int n = static_cast<int>(v.size());
    for (int i = n - 1; i > 0; --i) {
      const int j = uniform_index(i + 1);
      std::swap(v[static_cast<std::size_t>(i)], v[static_cast<std::size_t>(j)]);
    }
  }

  std::string serialize() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
  }

  void deserialize(const std::string& text) {
    std::istringstream is(text);
    is >> engine_;
  }

  bool operator==(const Rng& other) const { return engine_ == other.engine_; }

 private:
  std::mt19937_64 engine_;
  std::vector<int> scratch_;  // reused by sample_distinct, not part of the state
};

}  // namespace rmabm
