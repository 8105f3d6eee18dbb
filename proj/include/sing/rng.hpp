#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace sing {

// mt19937_64 with hand-rolled uniform/normal draws. std::*_distribution
// objects carry implementation-defined internal state; generating directly
// from the engine keeps sampled streams a pure function of the serialized
// engine state, which checkpoint resume relies on.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : eng_(seed) {}

  // [0,1) with 53 random bits.
  double uniform() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller, no cached spare.
  double normal() {
    double u1;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double two_pi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
  }

  // Unbiased integer in [0,n), n >= 1.
  std::uint64_t integer(std::uint64_t n) {
    if (n <= 1) return 0;
    const std::uint64_t bound = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do {
      x = eng_();
    } while (x >= bound);
    return x % n;
  }

  std::uint64_t raw() { return eng_(); }

  Rng fork() { return Rng(eng_()); }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[integer(i)]);
    }
  }

  // mt19937_64 stream state is specified by the standard, so this is a
  // portable decimal dump.
  std::string serialize() const {
    std::ostringstream os;
    os << eng_;
    return os.str();
  }

  static Rng deserialize(const std::string& state) {
    Rng r;
    std::istringstream is(state);
    is >> r.eng_;
    return r;
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace sing
