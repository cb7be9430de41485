#include "meel/memory.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "meel/error.hpp"

namespace meel {

namespace {

void check_unit(std::span<const double> e, const char* what) {
  const double n = l2_norm(e);
  if (std::abs(n - 1.0) > kUnitNormTolerance) {
    throw Error(ErrorCode::kInvalidArgument,
                std::string(what) + ": embedding norm " + std::to_string(n) + " is not 1");
  }
}

}  // namespace

CrossModalQueue::CrossModalQueue(Matrix embeddings, std::vector<VideoId> owners,
                                 std::size_t oldest_slot)
    : embeddings_(std::move(embeddings)), owners_(std::move(owners)), oldest_slot_(oldest_slot) {
  if (embeddings_.rows() == 0 || embeddings_.cols() == 0) {
    throw Error(ErrorCode::kInvalidArgument, "queue: capacity and dim must be > 0");
  }
  if (owners_.size() != embeddings_.rows() || oldest_slot_ >= embeddings_.rows()) {
    throw Error(ErrorCode::kDimensionMismatch, "queue: owners/cursor inconsistent with capacity");
  }
}

CrossModalQueue CrossModalQueue::random(std::size_t capacity, std::size_t dim, Prng& prng) {
  if (capacity == 0 || dim == 0) {
    throw Error(ErrorCode::kInvalidArgument, "queue: capacity and dim must be > 0");
  }
  Matrix e(capacity, dim);
  for (std::size_t s = 0; s < capacity; ++s) {
    // A Gaussian draw is almost never degenerate; redraw if it is.
    Vector g;
    do {
      g = prng.gaussian_vector(dim);
    } while (!(l2_norm(g) > kNormEpsilon));
    const Vector u = l2_normalize(g);
    std::copy(u.begin(), u.end(), e.row(s).begin());
  }
  return CrossModalQueue(std::move(e), std::vector<VideoId>(capacity, kNoOwner), 0);
}

void CrossModalQueue::enqueue(const Matrix& batch, std::span<const VideoId> owners) {
  if (batch.rows() > capacity()) {
    throw Error(ErrorCode::kInvalidArgument, "enqueue: batch of " + std::to_string(batch.rows()) +
                                                 " exceeds capacity " + std::to_string(capacity()));
  }
  if (batch.cols() != dim() || owners.size() != batch.rows()) {
    throw Error(ErrorCode::kDimensionMismatch, "enqueue: batch shape mismatch");
  }
  for (std::size_t i = 0; i < batch.rows(); ++i) check_unit(batch.row(i), "enqueue");
  for (std::size_t i = 0; i < batch.rows(); ++i) {
    const auto src = batch.row(i);
    std::copy(src.begin(), src.end(), embeddings_.row(oldest_slot_).begin());
    owners_[oldest_slot_] = owners[i];
    oldest_slot_ = (oldest_slot_ + 1) % capacity();
  }
}

std::size_t MaskedLogits::masked_count() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
}

MaskedLogits masked_negative_logits(std::span<const double> query,
                                    std::span<const double> positive_key,
                                    const CrossModalQueue& queue, VideoId query_owner,
                                    double temperature) {
  if (!(temperature > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "temperature must be > 0");
  }
  if (query.size() != queue.dim() || positive_key.size() != queue.dim()) {
    throw Error(ErrorCode::kDimensionMismatch, "masked logits: embedding dim mismatch");
  }
  MaskedLogits out;
  out.values.resize(1 + queue.capacity());
  out.mask.assign(1 + queue.capacity(), false);
  out.values[0] = dot(query, positive_key) / temperature;
  for (std::size_t s = 0; s < queue.capacity(); ++s) {
    if (query_owner != kNoOwner && queue.owner(s) == query_owner) {
      out.values[1 + s] = kMaskedLogit;
      out.mask[1 + s] = true;
    } else {
      out.values[1 + s] = dot(query, queue.embedding(s)) / temperature;
    }
  }
  return out;
}

CenterBank center_bank_init(std::size_t class_count, std::size_t dim, double init_std,
                            Prng& prng) {
  if (class_count == 0 || dim == 0) {
    throw Error(ErrorCode::kInvalidArgument, "center bank: class count and dim must be > 0");
  }
  CenterBank bank{Matrix(class_count, dim)};
  for (double& v : bank.centers.values()) v = init_std * prng.gaussian();
  return bank;
}

void update_centers(CenterBank& bank, const Matrix& texts, std::span<const std::size_t> labels,
                    double step) {
  if (!(step > 0.0 && step <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "center step must lie in (0, 1]");
  }
  if (texts.rows() != labels.size() || texts.cols() != bank.dim()) {
    throw Error(ErrorCode::kDimensionMismatch, "update_centers: batch shape mismatch");
  }
  for (std::size_t y : labels) {
    if (y >= bank.class_count()) {
      throw Error(ErrorCode::kOutOfRange, "update_centers: class " + std::to_string(y) +
                                              " out of range for " +
                                              std::to_string(bank.class_count()) + " centers");
    }
  }
  // Ordered map keeps the summation order deterministic.
  std::map<std::size_t, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < labels.size(); ++i) members[labels[i]].push_back(i);
  for (const auto& [cls, rows] : members) {
    auto c = bank.centers.row(cls);
    Vector delta(bank.dim(), 0.0);
    for (std::size_t i : rows) {
      const auto t = texts.row(i);
      for (std::size_t k = 0; k < delta.size(); ++k) delta[k] += c[k] - t[k];
    }
    const double denom = 1.0 + static_cast<double>(rows.size());
    for (std::size_t k = 0; k < delta.size(); ++k) c[k] -= step * delta[k] / denom;
  }
}

}  // namespace meel
