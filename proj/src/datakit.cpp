#include "meel/datakit.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <set>
#include <string>

#include <json.hpp>

#include "meel/error.hpp"
#include "meel/io.hpp"
#include "meel/prng.hpp"

namespace meel {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<std::vector<std::size_t>> Dataset::captions_by_video() const {
  std::vector<std::vector<std::size_t>> out(video_count());
  for (std::size_t c = 0; c < caption_owner.size(); ++c) {
    if (caption_owner[c] < out.size()) out[caption_owner[c]].push_back(c);
  }
  return out;
}

namespace {

[[noreturn]] void invalid(const std::string& what) { throw Error(ErrorCode::kValidation, what); }

void check_split(const std::vector<VideoId>& ids, const char* name, std::size_t n_videos,
                 std::vector<int>& seen_in, int split_index) {
  static const char* kNames[] = {"train", "val", "test"};
  for (VideoId v : ids) {
    if (v >= n_videos) {
      invalid(std::string("split '") + name + "' references video " + std::to_string(v) +
              " but only " + std::to_string(n_videos) + " videos exist");
    }
    if (seen_in[v] == split_index) {
      invalid(std::string("split '") + name + "' lists video " + std::to_string(v) + " twice");
    }
    if (seen_in[v] >= 0) {
      invalid(std::string("splits '") + kNames[seen_in[v]] + "' and '" + name +
              "' overlap at video " + std::to_string(v));
    }
    seen_in[v] = split_index;
  }
}

}  // namespace

void validate(const Dataset& d) {
  if (d.video_count() == 0 || d.video_dim() == 0) invalid("dataset has no video features");
  if (d.caption_count() == 0 || d.text_dim() == 0) invalid("dataset has no caption features");
  if (d.caption_owner.size() != d.caption_count()) {
    invalid("caption_owner has " + std::to_string(d.caption_owner.size()) +
            " entries but the caption feature file has " + std::to_string(d.caption_count()) +
            " rows");
  }
  std::vector<std::size_t> per_video(d.video_count(), 0);
  for (std::size_t c = 0; c < d.caption_owner.size(); ++c) {
    const VideoId v = d.caption_owner[c];
    if (v >= d.video_count()) {
      invalid("caption_owner[" + std::to_string(c) + "] = " + std::to_string(v) +
              " references a missing video (" + std::to_string(d.video_count()) + " videos)");
    }
    ++per_video[v];
  }
  for (std::size_t v = 0; v < per_video.size(); ++v) {
    if (per_video[v] == 0) invalid("video " + std::to_string(v) + " has no captions");
  }
  std::vector<int> seen_in(d.video_count(), -1);
  check_split(d.splits.train, "train", d.video_count(), seen_in, 0);
  check_split(d.splits.val, "val", d.video_count(), seen_in, 1);
  check_split(d.splits.test, "test", d.video_count(), seen_in, 2);
}

void validate(const SynthConfig& c) {
  auto require = [](bool ok, const char* field) {
    if (!ok) throw Error(ErrorCode::kConfig, std::string("invalid synthetic config field '") + field + "'");
  };
  require(c.n_videos > 0, "n_videos");
  require(c.captions_per_video > 0, "captions_per_video");
  require(c.latent_dim > 0, "latent_dim");
  require(c.video_dim > 0, "video_dim");
  require(c.text_dim > 0, "text_dim");
  require(std::isfinite(c.noise_std) && c.noise_std >= 0.0, "noise_std");
  require(c.train_videos + c.val_videos + c.test_videos <= c.n_videos, "train_videos");
}

namespace {

double to_storage(double v) { return static_cast<double>(static_cast<float>(v)); }

Matrix gaussian_matrix(std::size_t rows, std::size_t cols, double std_dev, Prng& prng) {
  Matrix m(rows, cols);
  for (double& v : m.values()) v = std_dev * prng.gaussian();
  return m;
}

void mix_into(const Matrix& map, std::span<const double> z, double noise_std, Prng& prng,
              std::span<double> out) {
  for (std::size_t r = 0; r < map.rows(); ++r) {
    const double noise = noise_std > 0.0 ? noise_std * prng.gaussian() : 0.0;
    out[r] = to_storage(dot(map.row(r), z) + noise);
  }
}

}  // namespace

SyntheticDataset generate_synthetic(const SynthConfig& config) {
  validate(config);
  Prng prng(config.seed);
  const double map_std = 1.0 / std::sqrt(static_cast<double>(config.latent_dim));

  SyntheticDataset out;
  out.video_map = gaussian_matrix(config.video_dim, config.latent_dim, map_std, prng);
  out.text_map = gaussian_matrix(config.text_dim, config.latent_dim, map_std, prng);
  out.latents = gaussian_matrix(config.n_videos, config.latent_dim, 1.0, prng);

  Dataset& d = out.dataset;
  const std::size_t n_captions = config.n_videos * config.captions_per_video;
  d.video_features = Matrix(config.n_videos, config.video_dim);
  d.caption_features = Matrix(n_captions, config.text_dim);
  d.caption_owner.resize(n_captions);
  for (std::size_t v = 0; v < config.n_videos; ++v) {
    const auto z = out.latents.row(v);
    mix_into(out.video_map, z, config.noise_std, prng, d.video_features.row(v));
    for (std::size_t k = 0; k < config.captions_per_video; ++k) {
      const std::size_t c = v * config.captions_per_video + k;
      mix_into(out.text_map, z, config.noise_std, prng, d.caption_features.row(c));
      d.caption_owner[c] = static_cast<VideoId>(v);
    }
  }

  std::size_t n_train = config.train_videos;
  std::size_t n_val = config.val_videos;
  std::size_t n_test = config.test_videos;
  if (n_train + n_val + n_test == 0) {
    n_train = config.n_videos * 7 / 10;
    n_val = config.n_videos / 10;
    n_test = config.n_videos - n_train - n_val;
  }
  VideoId next = 0;
  for (std::size_t i = 0; i < n_train; ++i) d.splits.train.push_back(next++);
  for (std::size_t i = 0; i < n_val; ++i) d.splits.val.push_back(next++);
  for (std::size_t i = 0; i < n_test; ++i) d.splits.test.push_back(next++);
  validate(d);
  return out;
}

void write_features(const fs::path& path, const Matrix& features) {
  if (features.rows() == 0 || features.cols() == 0) {
    throw Error(ErrorCode::kInvalidArgument, "write_features: zero-sized matrix");
  }
  if (features.rows() > UINT32_MAX || features.cols() > UINT32_MAX) {
    throw Error(ErrorCode::kInvalidArgument, "write_features: matrix too large for u32 header");
  }
  ByteWriter w;
  w.put_raw(std::string_view(kFeatureMagic, sizeof(kFeatureMagic)));
  w.put_u32(static_cast<std::uint32_t>(features.rows()));
  w.put_u32(static_cast<std::uint32_t>(features.cols()));
  for (double v : features.values()) w.put_f32(static_cast<float>(v));
  write_file_atomic(path, w.bytes());
}

Matrix read_features(const fs::path& path) {
  const Bytes bytes = read_file(path);
  constexpr std::size_t kHeader = sizeof(kFeatureMagic) + 8;
  if (bytes.size() < sizeof(kFeatureMagic) ||
      std::memcmp(bytes.data(), kFeatureMagic, sizeof(kFeatureMagic)) != 0) {
    throw Error(ErrorCode::kFormat, path.string() + ": not a feature file (bad magic)");
  }
  if (bytes.size() < kHeader) {
    throw Error(ErrorCode::kTruncated, path.string() + ": truncated header: expected " +
                                           std::to_string(kHeader) + " bytes, got " +
                                           std::to_string(bytes.size()));
  }
  ByteReader r(bytes);
  r.get_raw(sizeof(kFeatureMagic));
  const std::uint64_t rows = r.get_u32();
  const std::uint64_t cols = r.get_u32();
  if (rows == 0 || cols == 0) {
    throw Error(ErrorCode::kFormat, path.string() + ": zero dimension in header (" +
                                        std::to_string(rows) + "x" + std::to_string(cols) + ")");
  }
  const std::uint64_t expected = kHeader + rows * cols * 4;
  if (bytes.size() < expected) {
    throw Error(ErrorCode::kTruncated, path.string() + ": truncated payload: expected " +
                                           std::to_string(expected) + " bytes, got " +
                                           std::to_string(bytes.size()));
  }
  if (bytes.size() > expected) {
    throw Error(ErrorCode::kFormat, path.string() + ": trailing data: expected " +
                                        std::to_string(expected) + " bytes, got " +
                                        std::to_string(bytes.size()));
  }
  Matrix m(rows, cols);
  for (double& v : m.values()) v = r.get_f32();
  return m;
}

fs::path save_dataset(const Dataset& dataset, const fs::path& dir) {
  validate(dataset);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create directory " + dir.string());
  write_features(dir / "video_features.bin", dataset.video_features);
  write_features(dir / "caption_features.bin", dataset.caption_features);
  json manifest = {
      {"video_features", "video_features.bin"},
      {"caption_features", "caption_features.bin"},
      {"caption_owner", dataset.caption_owner},
      {"splits",
       {{"train", dataset.splits.train}, {"val", dataset.splits.val}, {"test", dataset.splits.test}}},
  };
  const fs::path manifest_path = dir / "manifest.json";
  write_file_atomic(manifest_path, manifest.dump(2) + "\n");
  return manifest_path;
}

namespace {

std::vector<VideoId> id_list(const json& j, const std::string& what) {
  if (!j.is_array()) invalid(what + " must be an array of video indices");
  std::vector<VideoId> out;
  out.reserve(j.size());
  for (const auto& e : j) {
    if (!e.is_number_unsigned() || e.get<std::uint64_t>() >= kNoOwner) {
      invalid(what + " must contain non-negative integer video indices");
    }
    out.push_back(e.get<VideoId>());
  }
  return out;
}

}  // namespace

Dataset load_dataset(const fs::path& manifest_path) {
  const Bytes raw = read_file(manifest_path);
  json m;
  try {
    m = json::parse(raw.begin(), raw.end());
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kFormat, manifest_path.string() + ": invalid JSON: " + e.what());
  }
  if (!m.is_object()) invalid("manifest must be a JSON object");
  for (const char* key : {"video_features", "caption_features", "caption_owner", "splits"}) {
    if (!m.contains(key)) invalid(std::string("manifest is missing '") + key + "'");
  }
  for (const auto& [key, value] : m.items()) {
    if (key != "video_features" && key != "caption_features" && key != "caption_owner" &&
        key != "splits") {
      invalid("manifest has unknown key '" + key + "'");
    }
  }
  const fs::path base = manifest_path.parent_path();
  auto resolve = [&](const json& p, const char* what) {
    if (!p.is_string()) invalid(std::string(what) + " must be a path string");
    fs::path path(p.get<std::string>());
    return path.is_absolute() ? path : base / path;
  };

  Dataset d;
  d.video_features = read_features(resolve(m["video_features"], "video_features"));
  d.caption_features = read_features(resolve(m["caption_features"], "caption_features"));
  d.caption_owner = id_list(m["caption_owner"], "caption_owner");
  const json& splits = m["splits"];
  if (!splits.is_object()) invalid("splits must be an object");
  for (const auto& [key, value] : splits.items()) {
    if (key != "train" && key != "val" && key != "test") invalid("splits has unknown key '" + key + "'");
  }
  if (splits.contains("train")) d.splits.train = id_list(splits["train"], "splits.train");
  if (splits.contains("val")) d.splits.val = id_list(splits["val"], "splits.val");
  if (splits.contains("test")) d.splits.test = id_list(splits["test"], "splits.test");
  validate(d);
  return d;
}

}  // namespace meel
