#include "meel/prng.hpp"

#include <cmath>
#include <numbers>

#include "meel/error.hpp"

namespace meel {

namespace {

constexpr std::uint64_t rotl(std::uint64_t x, int k) {
  return (x << k) | (x >> (64 - k));
}

}  // namespace

std::uint64_t splitmix64(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Prng::Prng(std::uint64_t seed) {
  std::uint64_t x = seed;
  for (auto& w : state_.words) w = splitmix64(x);
}

Prng Prng::for_stream(std::uint64_t seed, std::uint64_t stream_id) {
  std::uint64_t x = seed;
  std::uint64_t mixed = splitmix64(x);
  std::uint64_t y = stream_id ^ 0xD1B54A32D192ED03ULL;
  mixed ^= splitmix64(y);
  return Prng(mixed);
}

std::uint64_t Prng::next_u64() {
  auto& s = state_.words;
  const std::uint64_t result = rotl(s[1] * 5, 7) * 9;
  const std::uint64_t t = s[1] << 17;
  s[2] ^= s[0];
  s[3] ^= s[1];
  s[1] ^= s[2];
  s[0] ^= s[3];
  s[2] ^= t;
  s[3] = rotl(s[3], 45);
  return result;
}

double Prng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t Prng::uniform_index(std::uint64_t n) {
  if (n == 0) throw Error(ErrorCode::kInvalidArgument, "uniform_index: n must be > 0");
  // Rejection sampling removes modulo bias.
  const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % n);
  std::uint64_t r;
  do {
    r = next_u64();
  } while (r >= limit);
  return r % n;
}

double Prng::gaussian() {
  if (state_.has_spare) {
    state_.has_spare = false;
    return state_.spare;
  }
  double u1;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  state_.spare = radius * std::sin(angle);
  state_.has_spare = true;
  return radius * std::cos(angle);
}

std::vector<double> Prng::gaussian_vector(std::size_t n) {
  std::vector<double> out(n);
  for (auto& v : out) v = gaussian();
  return out;
}

}  // namespace meel
