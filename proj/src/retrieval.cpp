#include "meel/retrieval.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include <json.hpp>

#include "meel/error.hpp"

namespace meel {

GroundTruth GroundTruth::from_owners(std::span<const std::size_t> text_owner,
                                     std::size_t video_count) {
  GroundTruth gt;
  gt.text_owner.assign(text_owner.begin(), text_owner.end());
  gt.video_texts.resize(video_count);
  for (std::size_t j = 0; j < text_owner.size(); ++j) {
    if (text_owner[j] >= video_count) {
      throw Error(ErrorCode::kOutOfRange, "ground truth: text " + std::to_string(j) +
                                              " owned by missing video " +
                                              std::to_string(text_owner[j]));
    }
    gt.video_texts[text_owner[j]].push_back(j);
  }
  return gt;
}

namespace {

// Position of `target` among `scores` sorted descending, ties to lower index.
std::size_t rank_of(std::size_t target, std::size_t count,
                    const auto& score /* (candidate) -> double */) {
  const double s = score(target);
  std::size_t better = 0;
  for (std::size_t c = 0; c < count; ++c) {
    const double sc = score(c);
    if (sc > s || (sc == s && c < target)) ++better;
  }
  return better + 1;
}

}  // namespace

std::vector<std::size_t> compute_ranks(const Matrix& similarity, const GroundTruth& truth,
                                       Direction direction) {
  const std::size_t p = truth.video_count();
  const std::size_t q = truth.text_count();
  if (similarity.rows() != p || similarity.cols() != q) {
    throw Error(ErrorCode::kDimensionMismatch,
                "compute_ranks: similarity is " + std::to_string(similarity.rows()) + "x" +
                    std::to_string(similarity.cols()) + ", ground truth expects " +
                    std::to_string(p) + "x" + std::to_string(q));
  }
  std::vector<std::size_t> ranks;
  if (direction == Direction::kTextToVideo) {
    ranks.reserve(q);
    for (std::size_t j = 0; j < q; ++j) {
      ranks.push_back(
          rank_of(truth.text_owner[j], p, [&](std::size_t i) { return similarity(i, j); }));
    }
  } else {
    ranks.reserve(p);
    for (std::size_t i = 0; i < p; ++i) {
      if (truth.video_texts[i].empty()) {
        throw Error(ErrorCode::kInvalidArgument,
                    "compute_ranks: video " + std::to_string(i) + " has no texts");
      }
      std::size_t best = q + 1;
      for (std::size_t g : truth.video_texts[i]) {
        best = std::min(best, rank_of(g, q, [&](std::size_t j) { return similarity(i, j); }));
      }
      ranks.push_back(best);
    }
  }
  return ranks;
}

DirectionMetrics summarize_direction(std::span<const std::size_t> ranks) {
  if (ranks.empty()) throw Error(ErrorCode::kInvalidArgument, "summarize: empty rank list");
  const double n = static_cast<double>(ranks.size());
  auto recall_at = [&](std::size_t k) {
    const auto hits = std::count_if(ranks.begin(), ranks.end(), [k](std::size_t r) { return r <= k; });
    return 100.0 * static_cast<double>(hits) / n;
  };
  DirectionMetrics m;
  m.r1 = recall_at(1);
  m.r5 = recall_at(5);
  m.r10 = recall_at(10);
  std::vector<std::size_t> sorted(ranks.begin(), ranks.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t mid = sorted.size() / 2;
  m.medr = sorted.size() % 2 == 1
               ? static_cast<double>(sorted[mid])
               : 0.5 * static_cast<double>(sorted[mid - 1] + sorted[mid]);
  m.meanr = static_cast<double>(std::accumulate(sorted.begin(), sorted.end(), std::size_t{0})) / n;
  return m;
}

RetrievalReport summarize_metrics(std::span<const std::size_t> ranks_t2v,
                                  std::span<const std::size_t> ranks_v2t) {
  RetrievalReport r;
  r.t2v = summarize_direction(ranks_t2v);
  r.v2t = summarize_direction(ranks_v2t);
  r.rsum = r.t2v.r1 + r.t2v.r5 + r.t2v.r10 + r.v2t.r1 + r.v2t.r5 + r.v2t.r10;
  return r;
}

std::string RetrievalReport::to_json() const {
  auto dir = [](const DirectionMetrics& m) {
    return nlohmann::ordered_json{
        {"r1", m.r1}, {"r5", m.r5}, {"r10", m.r10}, {"medr", m.medr}, {"meanr", m.meanr}};
  };
  nlohmann::ordered_json j{{"t2v", dir(t2v)}, {"v2t", dir(v2t)}, {"rsum", rsum}};
  return j.dump();
}

EvalSplit make_eval_split(const Dataset& dataset, std::span<const VideoId> videos) {
  if (videos.empty()) throw Error(ErrorCode::kInvalidArgument, "evaluation split is empty");
  const auto by_video = dataset.captions_by_video();
  std::size_t n_captions = 0;
  for (VideoId v : videos) {
    if (v >= dataset.video_count()) {
      throw Error(ErrorCode::kOutOfRange, "evaluation split references missing video " +
                                              std::to_string(v));
    }
    n_captions += by_video[v].size();
  }
  EvalSplit split;
  split.video_features = Matrix(videos.size(), dataset.video_dim());
  split.caption_features = Matrix(n_captions, dataset.text_dim());
  std::vector<std::size_t> owner;
  owner.reserve(n_captions);
  std::size_t row = 0;
  for (std::size_t i = 0; i < videos.size(); ++i) {
    const auto src = dataset.video_features.row(videos[i]);
    std::copy(src.begin(), src.end(), split.video_features.row(i).begin());
    for (std::size_t c : by_video[videos[i]]) {
      const auto cap = dataset.caption_features.row(c);
      std::copy(cap.begin(), cap.end(), split.caption_features.row(row++).begin());
      owner.push_back(i);
    }
  }
  split.truth = GroundTruth::from_owners(owner, videos.size());
  return split;
}

RetrievalReport evaluate_encoders(const MlpParams& video_encoder, const MlpParams& text_encoder,
                                  const EvalSplit& split) {
  const Matrix videos = encode_rows(video_encoder, split.video_features);
  const Matrix texts = encode_rows(text_encoder, split.caption_features);
  const Matrix sim = similarity_matrix(videos, texts);
  const auto t2v = compute_ranks(sim, split.truth, Direction::kTextToVideo);
  const auto v2t = compute_ranks(sim, split.truth, Direction::kVideoToText);
  return summarize_metrics(t2v, v2t);
}

}  // namespace meel
