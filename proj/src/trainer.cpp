#include "meel/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "meel/error.hpp"

namespace meel {

namespace {

[[noreturn]] void bad_config(const std::string& field, const std::string& why) {
  throw Error(ErrorCode::kConfig, "invalid train config field '" + field + "': " + why);
}

}  // namespace

void validate(const TrainConfig& c) {
  if (c.dim == 0) bad_config("dim", "must be > 0");
  for (std::size_t h : c.hidden_dims) {
    if (h == 0) bad_config("hidden_dims", "every hidden width must be > 0");
  }
  if (c.batch_size < 2) bad_config("batch_size", "must be >= 2 (in-batch negatives)");
  if (c.queue_size == 0) bad_config("queue_size", "must be > 0");
  if (c.queue_size % c.batch_size != 0) {
    bad_config("queue_size", "queue size " + std::to_string(c.queue_size) +
                                 " must be an integer multiple of the batch size " +
                                 std::to_string(c.batch_size));
  }
  if (!(c.temperature > 0.0) || !std::isfinite(c.temperature)) bad_config("temperature", "must be > 0");
  if (!std::isfinite(c.margin) || c.margin < 0.0) bad_config("margin", "must be >= 0");
  if (!std::isfinite(c.center_weight) || c.center_weight < 0.0) bad_config("center_weight", "must be >= 0");
  if (!(c.center_step > 0.0 && c.center_step <= 1.0)) bad_config("center_step", "must lie in (0, 1]");
  if (c.momentum_schedule.empty()) bad_config("momentum_schedule", "must not be empty");
  if (c.momentum_schedule.front().from_epoch != 1) {
    bad_config("momentum_schedule", "first stage must start at epoch 1");
  }
  for (std::size_t i = 0; i < c.momentum_schedule.size(); ++i) {
    const auto& s = c.momentum_schedule[i];
    if (!(s.momentum >= 0.0 && s.momentum < 1.0)) bad_config("momentum_schedule", "momentum must lie in [0, 1)");
    if (i > 0) {
      const auto& prev = c.momentum_schedule[i - 1];
      if (s.from_epoch <= prev.from_epoch) bad_config("momentum_schedule", "epochs must increase");
      if (s.momentum < prev.momentum) bad_config("momentum_schedule", "momentum must not decrease");
    }
  }
  if (!(c.learning_rate > 0.0) || !std::isfinite(c.learning_rate)) bad_config("learning_rate", "must be > 0");
  if (!(c.beta1 >= 0.0 && c.beta1 < 1.0)) bad_config("beta1", "must lie in [0, 1)");
  if (!(c.beta2 >= 0.0 && c.beta2 < 1.0)) bad_config("beta2", "must lie in [0, 1)");
  if (!(c.adam_eps > 0.0)) bad_config("adam_eps", "must be > 0");
  if (c.epochs == 0) bad_config("epochs", "must be > 0");
}

double momentum_for_epoch(const TrainConfig& config, std::size_t epoch) {
  double m = config.momentum_schedule.front().momentum;
  for (const auto& stage : config.momentum_schedule) {
    if (stage.from_epoch <= epoch) m = stage.momentum;
  }
  return m;
}

AdamMoments AdamMoments::zeros_like(const MlpParams& params) {
  return {params.zeros_like(), params.zeros_like()};
}

void adam_step(MlpParams& params, const MlpParams& grads, AdamMoments& moments,
               const AdamOptions& options, std::uint64_t step) {
  if (step == 0) throw Error(ErrorCode::kInvalidArgument, "adam_step: step is 1-based");
  if (!params.same_shape(grads) || !params.same_shape(moments.first) ||
      !params.same_shape(moments.second)) {
    throw Error(ErrorCode::kDimensionMismatch, "adam_step: parameter/gradient shape mismatch");
  }
  const double t = static_cast<double>(step);
  const double correct1 = 1.0 - std::pow(options.beta1, t);
  const double correct2 = 1.0 - std::pow(options.beta2, t);
  auto p = params.tensors();
  const auto g = grads.tensors();
  auto m = moments.first.tensors();
  auto v = moments.second.tensors();
  for (std::size_t k = 0; k < p.size(); ++k) {
    for (std::size_t i = 0; i < p[k].size(); ++i) {
      const double gi = g[k][i];
      m[k][i] = options.beta1 * m[k][i] + (1.0 - options.beta1) * gi;
      v[k][i] = options.beta2 * v[k][i] + (1.0 - options.beta2) * gi * gi;
      const double m_hat = m[k][i] / correct1;
      const double v_hat = v[k][i] / correct2;
      p[k][i] -= options.learning_rate * m_hat / (std::sqrt(v_hat) + options.eps);
    }
  }
}

TrainState init_state(const Dataset& dataset, const TrainConfig& config) {
  validate(config);
  validate(dataset);
  if (dataset.splits.train.size() < config.batch_size) {
    throw Error(ErrorCode::kConfig, "train split has " + std::to_string(dataset.splits.train.size()) +
                                        " videos, fewer than batch_size " +
                                        std::to_string(config.batch_size));
  }
  Prng prng(config.seed);
  TrainState s;
  s.video = EncoderPair::from_query(
      init_params(dataset.video_dim(), config.hidden_dims, config.dim, prng));
  s.text = EncoderPair::from_query(
      init_params(dataset.text_dim(), config.hidden_dims, config.dim, prng));
  s.video_queue = CrossModalQueue::random(config.queue_size, config.dim, prng);
  s.text_queue = CrossModalQueue::random(config.queue_size, config.dim, prng);
  // Centers start at the scale of unit embeddings.
  s.centers = center_bank_init(dataset.splits.train.size(), config.dim,
                               1.0 / std::sqrt(static_cast<double>(config.dim)), prng);
  s.video_adam = AdamMoments::zeros_like(s.video.query);
  s.text_adam = AdamMoments::zeros_like(s.text.query);
  s.class_videos = dataset.splits.train;
  s.sampler_seed = prng.next_u64();
  return s;
}

std::vector<Batch> plan_epoch(const Dataset& dataset, std::size_t batch_size, Prng& prng) {
  const auto& train = dataset.splits.train;
  if (batch_size == 0 || train.size() < batch_size) {
    throw Error(ErrorCode::kInvalidArgument, "plan_epoch: " + std::to_string(train.size()) +
                                                 " training videos cannot fill a batch of " +
                                                 std::to_string(batch_size));
  }
  const auto by_video = dataset.captions_by_video();
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  // Fisher-Yates with the library PRNG (std::shuffle is not portable).
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[prng.uniform_index(i)]);
  }
  std::vector<Batch> batches;
  for (std::size_t start = 0; start + batch_size <= order.size(); start += batch_size) {
    Batch batch;
    batch.reserve(batch_size);
    for (std::size_t k = start; k < start + batch_size; ++k) {
      const VideoId v = train[order[k]];
      const auto& caps = by_video[v];
      batch.push_back({v, caps[prng.uniform_index(caps.size())], order[k]});
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

std::vector<Batch> epoch_batches(const TrainState& state, const Dataset& dataset,
                                 const TrainConfig& config, std::uint64_t epoch) {
  Prng prng = Prng::for_stream(state.sampler_seed, epoch);
  return plan_epoch(dataset, config.batch_size, prng);
}

namespace {

struct BranchForward {
  Matrix query;  // B x d
  Matrix key;    // B x d
  std::vector<ForwardCache> caches;
};

BranchForward run_branch(const EncoderPair& pair, const Matrix& features,
                         std::span<const std::size_t> rows, std::size_t dim) {
  BranchForward out{Matrix(rows.size(), dim), Matrix(rows.size(), dim), {}};
  out.caches.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    Encoded e = forward(pair.query, features.row(rows[i]));
    std::copy(e.embedding.begin(), e.embedding.end(), out.query.row(i).begin());
    out.caches.push_back(std::move(e.cache));
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Vector k = encode(pair.key, features.row(rows[i]));
    std::copy(k.begin(), k.end(), out.key.row(i).begin());
  }
  return out;
}

MlpParams backprop(const MlpParams& params, const std::vector<ForwardCache>& caches,
                   const Matrix& grad_embeddings) {
  MlpParams grads = params.zeros_like();
  for (std::size_t i = 0; i < caches.size(); ++i) {
    backward_accumulate(params, caches[i], grad_embeddings.row(i), grads);
  }
  return grads;
}

}  // namespace

StepReport train_step(TrainState& state, const Batch& batch, const Dataset& dataset,
                      const TrainConfig& config) {
  const std::size_t b = batch.size();
  if (b < 2) throw Error(ErrorCode::kInvalidArgument, "train_step: batch needs >= 2 items");
  std::vector<std::size_t> video_rows(b), caption_rows(b), labels(b);
  std::vector<VideoId> owners(b);
  for (std::size_t i = 0; i < b; ++i) {
    video_rows[i] = batch[i].video;
    caption_rows[i] = batch[i].caption;
    labels[i] = batch[i].label;
    owners[i] = batch[i].video;
  }

  StepReport report;
  report.momentum = momentum_for_epoch(config, state.epochs_done + 1);

  // (1)-(2) query and key forward passes.
  const BranchForward videos = run_branch(state.video, dataset.video_features, video_rows, config.dim);
  const BranchForward texts = run_branch(state.text, dataset.caption_features, caption_rows, config.dim);

  // (3)-(5) losses.
  LossParts parts;
  if (config.use_infonce) {
    parts.v2t = infonce_batch(videos.query, texts.key, state.text_queue, owners, config.temperature);
    parts.t2v = infonce_batch(texts.query, videos.key, state.video_queue, owners, config.temperature);
  }
  parts.triplet = triplet_ranking_loss(videos.query, texts.query, config.margin);
  if (config.use_center) parts.center = center_loss(texts.query, labels, state.centers);
  report.losses = total_loss(parts, config.use_center ? config.center_weight : 0.0);

  // (6)-(7) backprop into the query encoders and Adam.
  const MlpParams video_grads = backprop(state.video.query, videos.caches, report.losses.grad_videos);
  const MlpParams text_grads = backprop(state.text.query, texts.caches, report.losses.grad_texts);
  const AdamOptions adam{config.learning_rate, config.beta1, config.beta2, config.adam_eps};
  ++state.step;
  adam_step(state.video.query, video_grads, state.video_adam, adam, state.step);
  adam_step(state.text.query, text_grads, state.text_adam, adam, state.step);

  // (8) key encoders.
  if (config.use_momentum) {
    momentum_update(state.video, report.momentum);
    momentum_update(state.text, report.momentum);
  } else {
    sync_key_from_query(state.video);
    sync_key_from_query(state.text);
  }

  // (9) memory queues take the key embeddings.
  state.video_queue.enqueue(videos.key, owners);
  state.text_queue.enqueue(texts.key, owners);

  // (10) text centers.
  if (config.use_center) update_centers(state.centers, texts.query, labels, config.center_step);
  return report;
}

std::size_t advance(TrainState& state, const Dataset& dataset, const TrainConfig& config,
                    std::size_t max_steps, const StepObserver& observer) {
  const auto batches = epoch_batches(state, dataset, config, state.epochs_done);
  std::size_t run = 0;
  while (state.step_in_epoch < batches.size() && run < max_steps) {
    const StepReport r = train_step(state, batches[state.step_in_epoch], dataset, config);
    ++state.step_in_epoch;
    ++run;
    if (observer) observer(state, r);
  }
  if (state.step_in_epoch >= batches.size()) {
    ++state.epochs_done;
    state.step_in_epoch = 0;
  }
  return run;
}

RetrievalReport evaluate(const TrainState& state, const Dataset& dataset,
                         std::span<const VideoId> split, EvalEncoder encoder) {
  const EvalSplit eval = make_eval_split(dataset, split);
  if (eval.video_features.cols() != state.video.query.input_dim() ||
      eval.caption_features.cols() != state.text.query.input_dim()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "model expects video/text dims " + std::to_string(state.video.query.input_dim()) +
                    "/" + std::to_string(state.text.query.input_dim()) + ", dataset has " +
                    std::to_string(eval.video_features.cols()) + "/" +
                    std::to_string(eval.caption_features.cols()));
  }
  const bool momentum = encoder == EvalEncoder::kMomentum;
  return evaluate_encoders(momentum ? state.video.key : state.video.query,
                           momentum ? state.text.key : state.text.query, eval);
}

FitResult fit(const Dataset& dataset, const TrainConfig& config, const FitCallbacks& callbacks) {
  if (dataset.splits.val.empty()) {
    throw Error(ErrorCode::kConfig, "fit needs a non-empty validation split");
  }
  FitResult result;
  result.final_state = init_state(dataset, config);
  TrainState& state = result.final_state;
  double best_rsum = -1.0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    EpochRecord record;
    record.epoch = epoch;
    record.momentum = momentum_for_epoch(config, epoch);
    std::size_t steps = 0;
    advance(state, dataset, config, std::numeric_limits<std::size_t>::max(),
            [&](const TrainState& s, const StepReport& r) {
              record.l_tri += r.losses.l_tri;
              record.l_v2t += r.losses.l_v2t;
              record.l_t2v += r.losses.l_t2v;
              record.l_c += r.losses.l_c;
              record.total += r.losses.total;
              ++steps;
              if (callbacks.on_step) callbacks.on_step(s, r);
            });
    if (steps > 0) {
      const double n = static_cast<double>(steps);
      record.l_tri /= n;
      record.l_v2t /= n;
      record.l_t2v /= n;
      record.l_c /= n;
      record.total /= n;
    }
    record.validation = evaluate(state, dataset, dataset.splits.val, config.eval_encoder);
    if (record.validation.rsum > best_rsum) {
      best_rsum = record.validation.rsum;
      result.best_state = state;
      result.best_epoch = epoch;
    }
    result.history.push_back(record);
    if (callbacks.on_epoch) callbacks.on_epoch(record);
  }
  return result;
}

}  // namespace meel
