// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <span>

namespace entrgi {

// Stream labels used when deriving substreams. A draw is a pure function of
// the derivation path, so results do not depend on thread scheduling:
//
//   run root         Rng(seed)
//   per prompt       root key mixed with (kStreamPrompt, prompt_index)
//   per trajectory   prompt.derive(kStreamTrajectory, trajectory_index)
//   per timestep     trajectory.derive(kStreamTimestep, t)
//   inner iteration  step.derive(kStreamInner, j)
//   commit phase     step.derive(kStreamCommit, 0)
enum StreamLabel : std::uint64_t {
  kStreamTrajectory = 1,
  kStreamTimestep = 2,
  kStreamInner = 3,
  kStreamCommit = 4,
  kStreamPrompt = 5,
  kStreamCorpus = 6,
  kStreamTable = 7,
  kStreamReward = 8,
};

/// Counter-based generator built on the splitmix64 finalizer. State is a
/// (key, counter) pair; output i is mix(key + i * gamma). Integer-only, so
/// sequences are bit-identical on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : key_(mix(seed + kGamma)) {}

  /// Child stream addressed by (label, index); independent of draws made on
  /// the parent before or after.
  Rng derive(std::uint64_t label, std::uint64_t index) const {
    Rng child(0);
    child.key_ = mix(key_ ^ mix(label * kGamma + index + 1));
    child.counter_ = 0;
    child.have_gaussian_ = false;
    return child;
  }

  std::uint64_t next_u64() { return mix(key_ + (++counter_) * kGamma); }

  /// Uniform in [0, 1) with 53-bit resolution.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller; consumes two uniforms per pair.
  double next_gaussian() {
    if (have_gaussian_) {
      have_gaussian_ = false;
      return spare_gaussian_;
    }
    double u1 = next_double();
    double u2 = next_double();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * 3.14159265358979323846 * u2;
    spare_gaussian_ = radius * std::sin(angle);
    have_gaussian_ = true;
    return radius * std::cos(angle);
  }

  std::uint64_t key() const { return key_; }

  /// Key of Rng(seed).derive(label, index) without building the instances,
  /// for addressing substreams by value (e.g. per-prompt seeds).
  static std::uint64_t derive_key(std::uint64_t seed, std::uint64_t label,
                                  std::uint64_t index) {
    return mix(mix(seed + kGamma) ^ mix(label * kGamma + index + 1));
  }

 private:
  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ull;

  static std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ull;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBull;
    z ^= z >> 31;
    return z;
  }

  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
  bool have_gaussian_ = false;
  double spare_gaussian_ = 0.0;
};

/// Inverse-CDF draw from a categorical distribution given a uniform variate.
/// `probs` must be nonnegative; trailing floating-point slack falls through
/// to the last index with positive mass.
inline int sample_categorical(std::span<const double> probs, double u) {
  double cumulative = 0.0;
  int last_positive = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    cumulative += probs[i];
    if (probs[i] > 0.0) last_positive = static_cast<int>(i);
    if (u < cumulative) return static_cast<int>(i);
  }
  return last_positive;
}

}  // namespace entrgi
