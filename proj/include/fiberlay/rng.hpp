#pragma once

#include <array>
#include <cstdint>

namespace fiberlay {

/// Philox4x32-10 block cipher (Salmon et al.); the counter-based core of
/// RngStream.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

/// Standard normal quantile (Wichura's AS241, ~1e-16 relative accuracy).
double inverse_normal_cdf(double p);

/// SplitMix64 mix of (seed, tag): independent seeds for the auxiliary
/// ensembles of one experiment.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag);

/// Reproducible substream keyed by (seed, stream_id). The n-th Gaussian
/// depends only on (seed, stream_id, n), never on how other streams were
/// consumed, so ensembles can be split across workers freely.
///
/// Gaussians and uniforms come from disjoint counter lanes: drawing a uniform
/// (e.g. for a bridge-crossing test) does not shift the Gaussian sequence.
class RngStream {
 public:
  RngStream() = default;
  RngStream(std::uint64_t seed, std::uint64_t stream_id)
      : seed_(seed), stream_id_(stream_id) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  double gaussian() { return inverse_normal_cdf(next_open_unit(gauss_)); }
  double uniform() { return next_open_unit(unif_); }

  /// Fresh stream with the same key and a derived id; used when one logical
  /// path needs an independent auxiliary source.
  RngStream substream(std::uint64_t salt) const;

 private:
  struct Lane {
    std::uint64_t block = 0;
    std::array<std::uint32_t, 4> words{};
    int used = 4;
  };

  double next_open_unit(Lane& lane);
  std::array<std::uint32_t, 4> block(std::uint64_t index, std::uint32_t lane_tag) const;

  std::uint64_t seed_ = 0;
  std::uint64_t stream_id_ = 0;
  Lane gauss_;
  Lane unif_;
};

}  // namespace fiberlay
