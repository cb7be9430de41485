#include "meel/objective.hpp"

#include <cmath>
#include <string>

#include "meel/error.hpp"

namespace meel {

TripletLoss triplet_ranking_loss(const Matrix& videos, const Matrix& texts, double margin) {
  const std::size_t batch = videos.rows();
  if (batch < 2) throw Error(ErrorCode::kInvalidArgument, "triplet loss needs a batch of >= 2");
  if (texts.rows() != batch || texts.cols() != videos.cols()) {
    throw Error(ErrorCode::kDimensionMismatch, "triplet loss: video/text batch shape mismatch");
  }
  Matrix sim(batch, batch);
  for (std::size_t i = 0; i < batch; ++i) {
    for (std::size_t j = 0; j < batch; ++j) sim(i, j) = dot(videos.row(i), texts.row(j));
  }

  TripletLoss out;
  out.grad_videos = Matrix(batch, videos.cols());
  out.grad_texts = Matrix(batch, texts.cols());
  out.hardest_text.resize(batch);
  out.hardest_video.resize(batch);
  const double scale = 1.0 / static_cast<double>(batch);

  for (std::size_t i = 0; i < batch; ++i) {
    std::size_t hard_t = i == 0 ? 1 : 0;
    std::size_t hard_v = hard_t;
    for (std::size_t j = 0; j < batch; ++j) {
      if (j == i) continue;
      if (sim(i, j) > sim(i, hard_t)) hard_t = j;
      if (sim(j, i) > sim(hard_v, i)) hard_v = j;
    }
    out.hardest_text[i] = hard_t;
    out.hardest_video[i] = hard_v;

    const double positive = sim(i, i);
    const double hinge_v = margin - positive + sim(i, hard_t);
    if (hinge_v > 0.0) {
      out.loss += hinge_v;
      // d/dv_i (t_neg - t_i), d/dt_i (-v_i), d/dt_neg (+v_i)
      axpy(scale, texts.row(hard_t), out.grad_videos.row(i));
      axpy(-scale, texts.row(i), out.grad_videos.row(i));
      axpy(-scale, videos.row(i), out.grad_texts.row(i));
      axpy(scale, videos.row(i), out.grad_texts.row(hard_t));
    }
    const double hinge_t = margin - positive + sim(hard_v, i);
    if (hinge_t > 0.0) {
      out.loss += hinge_t;
      axpy(scale, videos.row(hard_v), out.grad_texts.row(i));
      axpy(-scale, videos.row(i), out.grad_texts.row(i));
      axpy(-scale, texts.row(i), out.grad_videos.row(i));
      axpy(scale, texts.row(i), out.grad_videos.row(hard_v));
    }
  }
  out.loss *= scale;
  return out;
}

InfoNce infonce_loss(std::span<const double> query, std::span<const double> positive_key,
                     const CrossModalQueue& queue, VideoId query_owner, double temperature) {
  const MaskedLogits logits =
      masked_negative_logits(query, positive_key, queue, query_owner, temperature);
  const CrossEntropy ce = softmax_cross_entropy_with_grad(logits.values, 0);

  // logits[0] = q.k+/tau, logits[1+s] = q.queue_s/tau; masked slots have
  // zero logit gradient so they drop out here too.
  InfoNce out;
  out.loss = ce.loss;
  out.grad_query.assign(query.size(), 0.0);
  axpy(ce.grad[0] / temperature, positive_key, out.grad_query);
  for (std::size_t s = 0; s < queue.capacity(); ++s) {
    const double g = ce.grad[1 + s];
    if (g != 0.0) axpy(g / temperature, queue.embedding(s), out.grad_query);
  }
  return out;
}

BatchInfoNce infonce_batch(const Matrix& queries, const Matrix& positive_keys,
                           const CrossModalQueue& queue, std::span<const VideoId> owners,
                           double temperature) {
  const std::size_t batch = queries.rows();
  if (batch == 0 || positive_keys.rows() != batch || owners.size() != batch ||
      positive_keys.cols() != queries.cols()) {
    throw Error(ErrorCode::kDimensionMismatch, "infonce batch: shape mismatch");
  }
  BatchInfoNce out;
  out.grad_queries = Matrix(batch, queries.cols());
  const double scale = 1.0 / static_cast<double>(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    const InfoNce one =
        infonce_loss(queries.row(i), positive_keys.row(i), queue, owners[i], temperature);
    out.loss += one.loss;
    axpy(scale, one.grad_query, out.grad_queries.row(i));
  }
  out.loss *= scale;
  return out;
}

CenterLoss center_loss(const Matrix& texts, std::span<const std::size_t> labels,
                       const CenterBank& bank) {
  if (texts.rows() != labels.size() || texts.cols() != bank.dim()) {
    throw Error(ErrorCode::kDimensionMismatch, "center loss: batch shape mismatch");
  }
  CenterLoss out;
  out.grad_texts = Matrix(texts.rows(), texts.cols());
  for (std::size_t i = 0; i < texts.rows(); ++i) {
    if (labels[i] >= bank.class_count()) {
      throw Error(ErrorCode::kOutOfRange, "center loss: class " + std::to_string(labels[i]) +
                                              " out of range for " +
                                              std::to_string(bank.class_count()) + " centers");
    }
    const auto t = texts.row(i);
    const auto c = bank.centers.row(labels[i]);
    auto g = out.grad_texts.row(i);
    for (std::size_t k = 0; k < t.size(); ++k) {
      g[k] = t[k] - c[k];
      out.loss += 0.5 * g[k] * g[k];
    }
  }
  return out;
}

namespace {

void add_scaled(Matrix& dst, const Matrix& src, double scale) {
  if (src.empty()) return;
  if (dst.empty()) dst = Matrix(src.rows(), src.cols());
  if (dst.rows() != src.rows() || dst.cols() != src.cols()) {
    throw Error(ErrorCode::kDimensionMismatch, "total loss: gradient shape mismatch");
  }
  axpy(scale, src.values(), dst.values());
}

}  // namespace

LossReport total_loss(const LossParts& parts, double center_weight) {
  LossReport r;
  r.l_tri = parts.triplet.loss;
  r.l_v2t = parts.v2t.loss;
  r.l_t2v = parts.t2v.loss;
  r.l_c = parts.center.loss;
  for (double v : {r.l_tri, r.l_v2t, r.l_t2v, r.l_c}) {
    if (!std::isfinite(v)) throw Error(ErrorCode::kInvalidArgument, "total loss: non-finite component");
  }
  r.total = r.l_tri + r.l_v2t + r.l_t2v + center_weight * r.l_c;
  add_scaled(r.grad_videos, parts.triplet.grad_videos, 1.0);
  add_scaled(r.grad_videos, parts.v2t.grad_queries, 1.0);
  add_scaled(r.grad_texts, parts.triplet.grad_texts, 1.0);
  add_scaled(r.grad_texts, parts.t2v.grad_queries, 1.0);
  if (center_weight != 0.0) add_scaled(r.grad_texts, parts.center.grad_texts, center_weight);
  return r;
}

}  // namespace meel
