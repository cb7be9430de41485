#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "meel/datakit.hpp"
#include "meel/encoder.hpp"
#include "meel/numerics.hpp"

namespace meel {

// One-to-many video/text relation over an evaluation split, in split-local
// indices: video i in [0, p), text j in [0, q).
struct GroundTruth {
  std::vector<std::size_t> text_owner;               // q entries
  std::vector<std::vector<std::size_t>> video_texts; // p entries

  static GroundTruth from_owners(std::span<const std::size_t> text_owner, std::size_t video_count);

  std::size_t video_count() const { return video_texts.size(); }
  std::size_t text_count() const { return text_owner.size(); }
};

enum class Direction { kTextToVideo, kVideoToText };

// 1-based ranks from a p x q video-by-text similarity matrix, sorted by
// descending similarity with ties going to the lower candidate index.
// Text-to-video: one rank per text, of its owner video among all p videos.
// Video-to-text: one rank per video, the best rank among its texts.
std::vector<std::size_t> compute_ranks(const Matrix& similarity, const GroundTruth& truth,
                                       Direction direction);

struct DirectionMetrics {
  double r1 = 0.0;   // percent
  double r5 = 0.0;
  double r10 = 0.0;
  double medr = 0.0;
  double meanr = 0.0;
};

struct RetrievalReport {
  DirectionMetrics t2v;
  DirectionMetrics v2t;
  double rsum = 0.0;

  // {"t2v": {"r1",...,"meanr"}, "v2t": {...}, "rsum": x}
  std::string to_json() const;
};

DirectionMetrics summarize_direction(std::span<const std::size_t> ranks);
RetrievalReport summarize_metrics(std::span<const std::size_t> ranks_t2v,
                                  std::span<const std::size_t> ranks_v2t);

// Videos of a split and every caption they own, with split-local ground truth.
struct EvalSplit {
  Matrix video_features;
  Matrix caption_features;
  GroundTruth truth;
};

EvalSplit make_eval_split(const Dataset& dataset, std::span<const VideoId> videos);

// Encodes both modalities, builds the cosine similarity matrix and reports
// every metric.
RetrievalReport evaluate_encoders(const MlpParams& video_encoder, const MlpParams& text_encoder,
                                  const EvalSplit& split);

}  // namespace meel
