#pragma once

#include <cstddef>
#include <span>

#include "meel/memory.hpp"
#include "meel/numerics.hpp"

namespace meel {

// Bidirectional hinge loss with the single hardest in-batch negative per
// anchor. Rows of `videos` and `texts` are unit embeddings; row i of each
// forms the positive pair, so similarity is the plain dot product.
//   loss = 1/B * sum_i [ max(0, margin - s(v_i,t_i) + max_{j!=i} s(v_i,t_j))
//                      + max(0, margin - s(v_i,t_i) + max_{j!=i} s(v_j,t_i)) ]
// Ties between negatives go to the lowest index.
struct TripletLoss {
  double loss = 0.0;
  Matrix grad_videos;
  Matrix grad_texts;
  std::vector<std::size_t> hardest_text;   // per video anchor
  std::vector<std::size_t> hardest_video;  // per text anchor
};

TripletLoss triplet_ranking_loss(const Matrix& videos, const Matrix& texts, double margin);

// InfoNCE of one query against [positive | queue] with label 0. The positive
// key and queue are momentum-encoded constants: only the query receives a
// gradient. Passing the text queue gives the video-to-text term, the video
// queue the text-to-video term.
struct InfoNce {
  double loss = 0.0;
  Vector grad_query;
};

InfoNce infonce_loss(std::span<const double> query, std::span<const double> positive_key,
                     const CrossModalQueue& queue, VideoId query_owner, double temperature);

// Mean of infonce_loss over the rows of `queries`.
struct BatchInfoNce {
  double loss = 0.0;
  Matrix grad_queries;
};

BatchInfoNce infonce_batch(const Matrix& queries, const Matrix& positive_keys,
                           const CrossModalQueue& queue, std::span<const VideoId> owners,
                           double temperature);

// 1/2 * sum_i ||t_i - c_{y_i}||^2, gradient wrt texts only.
struct CenterLoss {
  double loss = 0.0;
  Matrix grad_texts;
};

CenterLoss center_loss(const Matrix& texts, std::span<const std::size_t> labels,
                       const CenterBank& bank);

struct LossReport {
  double l_tri = 0.0;
  double l_v2t = 0.0;
  double l_t2v = 0.0;
  double l_c = 0.0;
  double total = 0.0;
  Matrix grad_videos;  // B x d, d total / d v_i
  Matrix grad_texts;   // B x d, d total / d t_i
};

struct LossParts {
  TripletLoss triplet;
  BatchInfoNce v2t;  // gradients wrt videos
  BatchInfoNce t2v;  // gradients wrt texts
  CenterLoss center;
};

// total = l_tri + l_v2t + l_t2v + center_weight * l_c, gradients summed the
// same way. Empty gradient matrices in `parts` are treated as zero.
LossReport total_loss(const LossParts& parts, double center_weight);

}  // namespace meel
