#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace meel {

// xoshiro256** seeded through splitmix64. Gaussian draws use the Box-Muller
// transform and keep the second value of each pair as a spare, so the whole
// generator state is four words plus the spare and is trivially serializable.
// Output is identical on every platform with IEEE-754 doubles and a
// correctly rounded libm log/sqrt/cos/sin.
class Prng {
 public:
  struct State {
    std::array<std::uint64_t, 4> words{};
    bool has_spare = false;
    double spare = 0.0;

    bool operator==(const State&) const = default;
  };

  explicit Prng(std::uint64_t seed);

  // Independent stream derived from (seed, stream_id); used for per-epoch
  // sampling so that a resumed run regenerates the same epoch plan.
  static Prng for_stream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 bits of resolution.
  double uniform();
  // Uniform integer in [0, n). n must be > 0.
  std::uint64_t uniform_index(std::uint64_t n);
  double gaussian();
  std::vector<double> gaussian_vector(std::size_t n);

  const State& state() const { return state_; }
  void set_state(const State& state) { state_ = state; }

 private:
  Prng() = default;
  State state_;
};

std::uint64_t splitmix64(std::uint64_t& x);

}  // namespace meel
