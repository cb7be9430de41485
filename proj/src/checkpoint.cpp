#include <cstring>
#include <string>

#include "meel/error.hpp"
#include "meel/trainer.hpp"

namespace meel {

namespace {

[[noreturn]] void corrupt(const std::string& what) {
  throw Error(ErrorCode::kFormat, "checkpoint: " + what);
}

std::uint32_t narrow(std::size_t n) {
  if (n > UINT32_MAX) throw Error(ErrorCode::kInvalidArgument, "checkpoint: dimension exceeds u32");
  return static_cast<std::uint32_t>(n);
}

void put_reals(ByteWriter& w, std::span<const double> values) {
  for (double v : values) w.put_f64(v);
}

void put_matrix(ByteWriter& w, const Matrix& m) {
  w.put_u32(narrow(m.rows()));
  w.put_u32(narrow(m.cols()));
  put_reals(w, m.values());
}

void put_params(ByteWriter& w, const MlpParams& p) {
  w.put_u32(static_cast<std::uint32_t>(p.activation));
  w.put_u32(narrow(p.layers.size()));
  for (const auto& layer : p.layers) {
    put_matrix(w, layer.weight);
    put_reals(w, layer.bias);
  }
}

void put_queue(ByteWriter& w, const CrossModalQueue& q) {
  put_matrix(w, q.embeddings());
  for (VideoId o : q.owners()) w.put_u32(o);
  w.put_u32(narrow(q.oldest_slot()));
}

// Guards allocation against absurd sizes from a corrupted header.
void check_fits(const ByteReader& r, std::uint64_t count, std::uint64_t width) {
  if (count * width > r.remaining()) {
    throw Error(ErrorCode::kTruncated, "checkpoint: declared block of " +
                                           std::to_string(count * width) + " bytes, only " +
                                           std::to_string(r.remaining()) + " left");
  }
}

Matrix get_matrix(ByteReader& r) {
  const std::uint64_t rows = r.get_u32();
  const std::uint64_t cols = r.get_u32();
  check_fits(r, rows * cols, 8);
  Matrix m(rows, cols);
  for (double& v : m.values()) v = r.get_f64();
  return m;
}

MlpParams get_params(ByteReader& r) {
  MlpParams p;
  const std::uint32_t act = r.get_u32();
  if (act != static_cast<std::uint32_t>(Activation::kTanh)) corrupt("unknown activation " + std::to_string(act));
  p.activation = static_cast<Activation>(act);
  const std::uint32_t depth = r.get_u32();
  check_fits(r, depth, 8);
  for (std::uint32_t l = 0; l < depth; ++l) {
    DenseLayer layer;
    layer.weight = get_matrix(r);
    check_fits(r, layer.weight.rows(), 8);
    layer.bias.resize(layer.weight.rows());
    for (double& v : layer.bias) v = r.get_f64();
    if (l > 0 && layer.weight.cols() != p.layers.back().weight.rows()) {
      corrupt("layer " + std::to_string(l) + " does not chain with the previous layer");
    }
    p.layers.push_back(std::move(layer));
  }
  if (p.layers.empty()) corrupt("encoder without layers");
  return p;
}

CrossModalQueue get_queue(ByteReader& r) {
  Matrix e = get_matrix(r);
  check_fits(r, e.rows(), 4);
  std::vector<VideoId> owners(e.rows());
  for (auto& o : owners) o = r.get_u32();
  const std::uint32_t oldest = r.get_u32();
  try {
    return CrossModalQueue(std::move(e), std::move(owners), oldest);
  } catch (const Error& err) {
    corrupt(std::string("invalid queue: ") + err.what());
  }
}

}  // namespace

Bytes serialize_state(const TrainState& s) {
  ByteWriter body;
  body.put_u64(s.epochs_done);
  body.put_u64(s.step);
  body.put_u64(s.step_in_epoch);
  body.put_u64(s.sampler_seed);
  for (const EncoderPair* pair : {&s.video, &s.text}) {
    put_params(body, pair->query);
    put_params(body, pair->key);
  }
  for (const AdamMoments* adam : {&s.video_adam, &s.text_adam}) {
    put_params(body, adam->first);
    put_params(body, adam->second);
  }
  put_queue(body, s.video_queue);
  put_queue(body, s.text_queue);
  put_matrix(body, s.centers.centers);
  body.put_u32(narrow(s.class_videos.size()));
  for (VideoId v : s.class_videos) body.put_u32(v);

  ByteWriter out;
  out.put_raw(std::string_view(kCheckpointMagic, sizeof(kCheckpointMagic)));
  out.put_u32(kCheckpointVersion);
  out.put_u64(body.bytes().size());
  out.put_raw(body.bytes());
  return out.take();
}

TrainState deserialize_state(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < sizeof(kCheckpointMagic) ||
      std::memcmp(bytes.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
    corrupt("bad magic bytes");
  }
  ByteReader header(bytes.subspan(sizeof(kCheckpointMagic)));
  const std::uint32_t version = header.get_u32();
  if (version != kCheckpointVersion) {
    corrupt("unsupported version " + std::to_string(version) + " (expected " +
            std::to_string(kCheckpointVersion) + ")");
  }
  const std::uint64_t length = header.get_u64();
  if (header.remaining() != length) {
    throw Error(ErrorCode::kTruncated, "checkpoint: payload declares " + std::to_string(length) +
                                           " bytes, file holds " +
                                           std::to_string(header.remaining()));
  }
  ByteReader r(header.get_raw(length));

  TrainState s;
  s.epochs_done = r.get_u64();
  s.step = r.get_u64();
  s.step_in_epoch = r.get_u64();
  s.sampler_seed = r.get_u64();
  for (EncoderPair* pair : {&s.video, &s.text}) {
    pair->query = get_params(r);
    pair->key = get_params(r);
    if (!pair->query.same_shape(pair->key)) corrupt("query/key encoder shapes differ");
  }
  for (auto [adam, params] : {std::pair{&s.video_adam, &s.video.query}, std::pair{&s.text_adam, &s.text.query}}) {
    adam->first = get_params(r);
    adam->second = get_params(r);
    if (!adam->first.same_shape(*params) || !adam->second.same_shape(*params)) {
      corrupt("optimizer moments do not match encoder shapes");
    }
  }
  s.video_queue = get_queue(r);
  s.text_queue = get_queue(r);
  s.centers.centers = get_matrix(r);
  const std::uint32_t n_classes = r.get_u32();
  check_fits(r, n_classes, 4);
  s.class_videos.resize(n_classes);
  for (auto& v : s.class_videos) v = r.get_u32();
  if (r.remaining() != 0) corrupt(std::to_string(r.remaining()) + " trailing payload bytes");

  const std::size_t d = s.video.query.output_dim();
  if (s.text.query.output_dim() != d || s.video_queue.dim() != d || s.text_queue.dim() != d ||
      s.centers.dim() != d) {
    corrupt("embedding dimensions are inconsistent");
  }
  if (s.centers.class_count() != s.class_videos.size()) corrupt("center count mismatch");
  return s;
}

void save_checkpoint(const TrainState& state, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_state(state));
}

TrainState load_checkpoint(const std::filesystem::path& path) {
  return deserialize_state(read_file(path));
}

}  // namespace meel
