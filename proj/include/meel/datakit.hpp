#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "meel/memory.hpp"
#include "meel/numerics.hpp"

namespace meel {

struct Splits {
  std::vector<VideoId> train;
  std::vector<VideoId> val;
  std::vector<VideoId> test;

  bool operator==(const Splits&) const = default;
};

struct Dataset {
  Matrix video_features;              // n_v x D_v
  Matrix caption_features;            // n_t x D_t
  std::vector<VideoId> caption_owner; // n_t
  Splits splits;

  std::size_t video_count() const { return video_features.rows(); }
  std::size_t caption_count() const { return caption_features.rows(); }
  std::size_t video_dim() const { return video_features.cols(); }
  std::size_t text_dim() const { return caption_features.cols(); }

  // Caption row indices per video, ascending.
  std::vector<std::vector<std::size_t>> captions_by_video() const;

  bool operator==(const Dataset&) const = default;
};

// Throws Error(kValidation) naming the first violated invariant.
void validate(const Dataset& dataset);

struct SynthConfig {
  std::size_t n_videos = 1000;
  std::size_t captions_per_video = 5;
  std::size_t latent_dim = 16;
  std::size_t video_dim = 64;
  std::size_t text_dim = 48;
  double noise_std = 0.3;
  std::uint64_t seed = 0;
  // Explicit split sizes. When all three are zero the videos are split
  // 70/10/20 in index order.
  std::size_t train_videos = 0;
  std::size_t val_videos = 0;
  std::size_t test_videos = 0;
};

void validate(const SynthConfig& config);

// The generated data plus the generator's ground-truth maps, so tests can
// build an oracle retriever.
struct SyntheticDataset {
  Dataset dataset;
  Matrix video_map;  // D_v x latent
  Matrix text_map;   // D_t x latent
  Matrix latents;    // n_videos x latent
};

// Per video z ~ N(0, I); video = A z + e_v, each caption = B z + e_t with
// A, B ~ N(0, 1/latent) fixed per seed and e ~ N(0, noise_std^2 I).
SyntheticDataset generate_synthetic(const SynthConfig& config);

// Feature file: "MEELFT01" | u32 LE rows | u32 LE dim | rows*dim f32 LE, row-major.
inline constexpr char kFeatureMagic[8] = {'M', 'E', 'E', 'L', 'F', 'T', '0', '1'};

void write_features(const std::filesystem::path& path, const Matrix& features);
Matrix read_features(const std::filesystem::path& path);

// Writes video_features.bin, caption_features.bin and manifest.json into
// `dir` and returns the manifest path.
std::filesystem::path save_dataset(const Dataset& dataset, const std::filesystem::path& dir);

// Feature paths in the manifest resolve relative to the manifest's directory.
Dataset load_dataset(const std::filesystem::path& manifest_path);

}  // namespace meel
