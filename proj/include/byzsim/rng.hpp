#pragma once
// Deterministic random streams with counter-based splitting.
//
// Every random decision in the library flows from one master seed. Independent
// streams are derived by hashing the master seed together with a short
// identity path (e.g. {round_tag, round_index, client_id}), so a stream's
// output is a pure function of (seed, identity) and never depends on the order
// in which other streams were created or consumed. That keeps per-client work
// order-independent and safe to run in parallel.

#include <cstdint>
#include <initializer_list>
#include <random>

namespace byzsim {

// SplitMix64 finalizer: cheap 64-bit mixer with full avalanche.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Stream-identity tags used across the library. Kept in one place so two
// subsystems can never collide on the same derived stream.
enum StreamTag : std::uint64_t {
  kTagSuite = 1,    // objective-suite construction
  kTagProbe = 2,    // sigma/kappa probe points
  kTagCorrupt = 3,  // static corrupt-client selection
  kTagSample = 4,   // per-round client sampling
  kTagClient = 5,   // per-round, per-client minibatch draws
  kTagAttack = 6,   // per-round adversarial randomness
  kTagEigen = 7,    // power-iteration start vectors
  kTagVerify = 8,   // verification-harness instance generation
};

// One derived stream: a thin wrapper over std::mt19937_64 with the few
// distributions we need. Streams are value types owned by their caller.
class Rng {
 public:
  explicit Rng(std::uint64_t state) : gen_(state) {}

  static Rng derive(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
    std::uint64_t h = mix64(seed);
    for (std::uint64_t id : path) h = mix64(h ^ mix64(id));
    return Rng(h);
  }

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1).
  double uniform01() { return std::uniform_real_distribution<double>(0.0, 1.0)(gen_); }

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(gen_);
  }

  double normal() { return std::normal_distribution<double>(0.0, 1.0)(gen_); }

  // Uniform integer in [0, n). n must be >= 1.
  std::uint64_t below(std::uint64_t n) {
    return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(gen_);
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace byzsim
