#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "meel/numerics.hpp"
#include "meel/prng.hpp"

namespace meel {

using VideoId = std::uint32_t;

// Owner of randomly initialized queue slots. Never assigned to a real video,
// so such slots are never masked.
inline constexpr VideoId kNoOwner = std::numeric_limits<VideoId>::max();

// Tolerance on ||e|| - 1 for embeddings entering a queue.
inline constexpr double kUnitNormTolerance = 1e-6;

// Fixed-capacity FIFO of unit embeddings tagged with the video they came from.
// Storage is a ring buffer; `oldest_slot` points at the next slot to be
// overwritten.
class CrossModalQueue {
 public:
  CrossModalQueue() = default;
  CrossModalQueue(Matrix embeddings, std::vector<VideoId> owners, std::size_t oldest_slot);

  // K random unit vectors owned by kNoOwner.
  static CrossModalQueue random(std::size_t capacity, std::size_t dim, Prng& prng);

  std::size_t capacity() const { return embeddings_.rows(); }
  std::size_t dim() const { return embeddings_.cols(); }
  std::size_t oldest_slot() const { return oldest_slot_; }

  // Raw slot access; slot order is irrelevant to every loss.
  std::span<const double> embedding(std::size_t slot) const { return embeddings_.row(slot); }
  VideoId owner(std::size_t slot) const { return owners_[slot]; }
  const Matrix& embeddings() const { return embeddings_; }
  const std::vector<VideoId>& owners() const { return owners_; }

  // Slot index of the i-th entry counting from the oldest.
  std::size_t slot_of(std::size_t age_rank) const { return (oldest_slot_ + age_rank) % capacity(); }

  // Replaces the batch.rows() oldest entries with the batch, row 0 first.
  void enqueue(const Matrix& batch, std::span<const VideoId> owners);

  bool operator==(const CrossModalQueue&) const = default;

 private:
  Matrix embeddings_;
  std::vector<VideoId> owners_;
  std::size_t oldest_slot_ = 0;
};

// Logits for one query: index 0 is the positive, index 1 + s is queue slot s.
struct MaskedLogits {
  Vector values;
  std::vector<bool> mask;  // same length as values; true = excluded

  std::size_t masked_count() const;
};

MaskedLogits masked_negative_logits(std::span<const double> query,
                                    std::span<const double> positive_key,
                                    const CrossModalQueue& queue, VideoId query_owner,
                                    double temperature);

// Per-video text centers. Rows are classes (training videos), not constrained
// to the unit sphere.
struct CenterBank {
  Matrix centers;

  std::size_t class_count() const { return centers.rows(); }
  std::size_t dim() const { return centers.cols(); }

  bool operator==(const CenterBank&) const = default;
};

// Rows drawn from N(0, init_std^2 I).
CenterBank center_bank_init(std::size_t class_count, std::size_t dim, double init_std, Prng& prng);

// Mini-batch center rule: for each class j present in the batch,
//   delta_j = sum_{i: y_i = j} (c_j - t_i) / (1 + n_j),  c_j <- c_j - step * delta_j.
// Classes absent from the batch are untouched.
void update_centers(CenterBank& bank, const Matrix& texts, std::span<const std::size_t> labels,
                    double step);

}  // namespace meel
