#include "miml/rng.hpp"

#include <cmath>

namespace miml {

std::uint64_t derive_seed(std::uint64_t master, std::string_view purpose,
                          std::initializer_list<std::uint64_t> coords) {
  std::uint64_t h = mix64(master ^ 0xa0761d6478bd642fULL);
  for (char c : purpose) h = mix64(h ^ static_cast<std::uint64_t>(static_cast<unsigned char>(c)));
  for (std::uint64_t v : coords) h = mix64(h ^ v);
  return h;
}

std::uint64_t Rng::uniform_int(std::uint64_t n) {
  if (n <= 1) return 0;
  // rejection sampling: accept r in [0, 2^64 - 2^64 mod n)
  const std::uint64_t overshoot = (UINT64_MAX % n + 1) % n;
  const std::uint64_t limit = UINT64_MAX - overshoot;
  std::uint64_t r;
  do {
    r = engine_();
  } while (r > limit);
  return r % n;
}

double Rng::normal() {
  // Box-Muller; u1 in (0,1] so the log is finite
  double u1 = (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
  double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.141592653589793238462643383279502884 * u2);
}

}  // namespace miml
