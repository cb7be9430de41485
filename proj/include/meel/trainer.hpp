#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "meel/datakit.hpp"
#include "meel/encoder.hpp"
#include "meel/io.hpp"
#include "meel/memory.hpp"
#include "meel/objective.hpp"
#include "meel/retrieval.hpp"

namespace meel {

// Momentum used from `from_epoch` (1-based) until the next stage begins.
struct MomentumStage {
  std::size_t from_epoch = 1;
  double momentum = 0.99;

  bool operator==(const MomentumStage&) const = default;
};

enum class EvalEncoder { kMomentum, kQuery };

struct TrainConfig {
  std::size_t dim = 128;
  std::vector<std::size_t> hidden_dims{256};
  std::size_t batch_size = 64;
  std::size_t queue_size = 2560;
  double temperature = 0.07;
  double margin = 0.2;
  double center_weight = 0.005;
  double center_step = 0.5;
  std::vector<MomentumStage> momentum_schedule{{1, 0.99}, {3, 0.999}};
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t epochs = 15;
  std::uint64_t seed = 0;
  EvalEncoder eval_encoder = EvalEncoder::kMomentum;
  // Ablation switches.
  bool use_infonce = true;
  bool use_center = true;
  bool use_momentum = true;  // false: key encoders are re-synced to the query every step
};

// Throws Error(kConfig) naming the offending field.
void validate(const TrainConfig& config);

double momentum_for_epoch(const TrainConfig& config, std::size_t epoch);

struct AdamMoments {
  MlpParams first;
  MlpParams second;

  static AdamMoments zeros_like(const MlpParams& params);

  bool operator==(const AdamMoments&) const = default;
};

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam; `step` is 1-based.
void adam_step(MlpParams& params, const MlpParams& grads, AdamMoments& moments,
               const AdamOptions& options, std::uint64_t step);

struct TrainState {
  EncoderPair video;
  EncoderPair text;
  CrossModalQueue video_queue;
  CrossModalQueue text_queue;
  CenterBank centers;
  AdamMoments video_adam;
  AdamMoments text_adam;
  std::vector<VideoId> class_videos;  // center class index -> training video
  std::uint64_t epochs_done = 0;
  std::uint64_t step = 0;           // optimizer steps taken
  std::uint64_t step_in_epoch = 0;  // batches of the current epoch already consumed
  std::uint64_t sampler_seed = 0;

  bool operator==(const TrainState&) const = default;
};

TrainState init_state(const Dataset& dataset, const TrainConfig& config);

struct BatchItem {
  VideoId video = 0;
  std::size_t caption = 0;  // caption row in the dataset
  std::size_t label = 0;    // center class (position in the train split)
};
using Batch = std::vector<BatchItem>;

// Random permutation of the training videos cut into batches of distinct
// videos (partial tail dropped), one uniformly chosen caption per video.
std::vector<Batch> plan_epoch(const Dataset& dataset, std::size_t batch_size, Prng& prng);

// Batches of 0-based epoch `epoch` for this state.
std::vector<Batch> epoch_batches(const TrainState& state, const Dataset& dataset,
                                 const TrainConfig& config, std::uint64_t epoch);

struct StepReport {
  LossReport losses;
  double momentum = 0.0;
};

// One optimizer step, in order: query forward, key forward, InfoNCE against
// the queues, triplet loss, center loss, backprop into the query encoders,
// Adam, momentum update of the key encoders, enqueue of the key embeddings,
// center update.
StepReport train_step(TrainState& state, const Batch& batch, const Dataset& dataset,
                      const TrainConfig& config);

using StepObserver = std::function<void(const TrainState&, const StepReport&)>;

// Runs steps of the current epoch until it ends or `max_steps` have run;
// finishing the epoch advances state.epochs_done. Returns steps run.
std::size_t advance(TrainState& state, const Dataset& dataset, const TrainConfig& config,
                    std::size_t max_steps = std::numeric_limits<std::size_t>::max(),
                    const StepObserver& observer = {});

RetrievalReport evaluate(const TrainState& state, const Dataset& dataset,
                         std::span<const VideoId> split, EvalEncoder encoder);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double momentum = 0.0;
  double l_tri = 0.0;     // means over the epoch's steps
  double l_v2t = 0.0;
  double l_t2v = 0.0;
  double l_c = 0.0;
  double total = 0.0;
  RetrievalReport validation;
};

struct FitResult {
  TrainState final_state;
  TrainState best_state;
  std::size_t best_epoch = 0;
  std::vector<EpochRecord> history;
};

struct FitCallbacks {
  StepObserver on_step;
  std::function<void(const EpochRecord&)> on_epoch;
};

// Trains for config.epochs, evaluating on the validation split after every
// epoch and keeping the state with the highest validation RSum (earliest
// epoch wins ties).
FitResult fit(const Dataset& dataset, const TrainConfig& config, const FitCallbacks& callbacks = {});

// Checkpoint: "MEELCK01" | u32 LE version | u64 LE payload length | payload,
// all reals as f64 LE.
inline constexpr char kCheckpointMagic[8] = {'M', 'E', 'E', 'L', 'C', 'K', '0', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

Bytes serialize_state(const TrainState& state);
TrainState deserialize_state(std::span<const std::uint8_t> bytes);
void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
TrainState load_checkpoint(const std::filesystem::path& path);

}  // namespace meel
