#include <doctest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <json.hpp>

#include "meel/datakit.hpp"
#include "meel/error.hpp"
#include "support.hpp"

using namespace meel;
using meel::testing::TempDir;
namespace fs = std::filesystem;

namespace {

std::vector<unsigned char> file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void put_bytes(const fs::path& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::kIo;
}

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  FAIL("expected an error");
  return {};
}

// Least squares x = argmin ||B x - y|| through the normal equations, solved
// by Gaussian elimination with partial pivoting.
Vector least_squares(const Matrix& b, std::span<const double> y) {
  const std::size_t n = b.cols();
  std::vector<std::vector<double>> a(n, std::vector<double>(n + 1, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t r = 0; r < b.rows(); ++r) a[i][j] += b(r, i) * b(r, j);
    }
    for (std::size_t r = 0; r < b.rows(); ++r) a[i][n] += b(r, i) * y[r];
  }
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    }
    std::swap(a[col], a[pivot]);
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = a[r][col] / a[col][col];
      for (std::size_t c = col; c <= n; ++c) a[r][c] -= f * a[col][c];
    }
  }
  Vector x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = a[i][n] / a[i][i];
  return x;
}

Dataset tiny_dataset() {
  Dataset d;
  d.video_features = Matrix(2, 3, {1, 2, 3, 4, 5, 6});
  d.caption_features = Matrix(3, 2, {1, 0, 0, 1, 0.5, 0.5});
  d.caption_owner = {0, 1, 1};
  d.splits.train = {0};
  d.splits.test = {1};
  return d;
}

}  // namespace

TEST_CASE("synthetic generation is deterministic per seed") {
  SynthConfig cfg;
  cfg.n_videos = 40;
  const SyntheticDataset a = generate_synthetic(cfg);
  const SyntheticDataset b = generate_synthetic(cfg);
  CHECK(a.dataset == b.dataset);
  cfg.seed = 1;
  CHECK_FALSE(generate_synthetic(cfg).dataset == a.dataset);
}

TEST_CASE("synthetic shapes, captions per video and default split") {
  SynthConfig cfg;
  cfg.n_videos = 50;
  cfg.captions_per_video = 3;
  const Dataset d = generate_synthetic(cfg).dataset;
  CHECK(d.video_count() == 50);
  CHECK(d.caption_count() == 150);
  CHECK(d.video_dim() == 64);
  CHECK(d.text_dim() == 48);
  for (const auto& caps : d.captions_by_video()) CHECK(caps.size() == 3);
  CHECK(d.splits.train.size() == 35);
  CHECK(d.splits.val.size() == 5);
  CHECK(d.splits.test.size() == 10);
  CHECK(d.splits.val.front() == 35);

  cfg.train_videos = 10;
  cfg.val_videos = 2;
  cfg.test_videos = 3;
  const Dataset custom = generate_synthetic(cfg).dataset;
  CHECK(custom.splits.train.size() == 10);
  CHECK(custom.splits.val.size() == 2);
  CHECK(custom.splits.test.size() == 3);
}

TEST_CASE("synthetic config validation names the field") {
  SynthConfig cfg;
  cfg.n_videos = 0;
  CHECK(message_of([&] { generate_synthetic(cfg); }).find("n_videos") != std::string::npos);
  cfg = {};
  cfg.noise_std = -0.1;
  CHECK(code_of([&] { validate(cfg); }) == ErrorCode::kConfig);
  CHECK(message_of([&] { validate(cfg); }).find("noise_std") != std::string::npos);
}

TEST_CASE("noise-free data is retrievable through the generator's own maps") {
  SynthConfig cfg;
  cfg.n_videos = 500;
  cfg.noise_std = 0.0;
  cfg.seed = 3;
  const SyntheticDataset s = generate_synthetic(cfg);
  const Dataset& d = s.dataset;
  REQUIRE(d.splits.test.size() == 100);
  const auto caps = d.captions_by_video();

  // Invert the text map on each test caption, push the latent through the
  // video map and rank test videos by cosine similarity.
  std::size_t hits = 0, queries = 0;
  for (VideoId owner : d.splits.test) {
    for (std::size_t c : caps[owner]) {
      const Vector z = least_squares(s.text_map, d.caption_features.row(c));
      Vector predicted(s.video_map.rows());
      for (std::size_t r = 0; r < predicted.size(); ++r) predicted[r] = dot(s.video_map.row(r), z);
      VideoId best = d.splits.test.front();
      double best_score = -2.0;
      for (VideoId v : d.splits.test) {
        const double score = cosine_similarity(predicted, d.video_features.row(v));
        if (score > best_score) {
          best_score = score;
          best = v;
        }
      }
      hits += best == owner ? 1 : 0;
      ++queries;
    }
  }
  const double r1 = 100.0 * static_cast<double>(hits) / static_cast<double>(queries);
  CHECK(r1 > 90.0);
}

TEST_CASE("feature file layout") {
  TempDir dir("features");
  SUBCASE("2x3 file is 40 bytes") {
    write_features(dir / "a.bin", Matrix(2, 3, {1, 2, 3, 4, 5, 6}));
    CHECK(fs::file_size(dir / "a.bin") == 40);
  }
  SUBCASE("1x1 file matches the hand-assembled bytes") {
    const std::vector<unsigned char> golden = {'M', 'E', 'E', 'L', 'F', 'T', '0', '1',
                                               0x01, 0x00, 0x00, 0x00,   // rows
                                               0x01, 0x00, 0x00, 0x00,   // dim
                                               0x00, 0x00, 0xC0, 0xBF};  // -1.5f
    write_features(dir / "one.bin", Matrix(1, 1, {-1.5}));
    CHECK(file_bytes(dir / "one.bin") == golden);
    put_bytes(dir / "golden.bin", golden);
    CHECK(read_features(dir / "golden.bin") == Matrix(1, 1, {-1.5}));
  }
  SUBCASE("round trip at 32-bit precision") {
    Prng prng(1);
    const Matrix m = meel::testing::random_matrix(prng, 7, 5);
    write_features(dir / "r.bin", m);
    const Matrix back = read_features(dir / "r.bin");
    REQUIRE(back.rows() == 7);
    REQUIRE(back.cols() == 5);
    for (std::size_t i = 0; i < m.values().size(); ++i) {
      CHECK(back.values()[i] == static_cast<double>(static_cast<float>(m.values()[i])));
    }
  }
  SUBCASE("zero-sized matrices are rejected") {
    CHECK_THROWS_AS(write_features(dir / "z.bin", Matrix(0, 3)), Error);
  }
}

TEST_CASE("read_features rejects malformed files") {
  TempDir dir("malformed");
  write_features(dir / "ok.bin", Matrix(2, 3, {1, 2, 3, 4, 5, 6}));
  auto bytes = file_bytes(dir / "ok.bin");

  SUBCASE("bad magic") {
    auto bad = bytes;
    bad[0] = 'X';
    put_bytes(dir / "bad.bin", bad);
    CHECK(code_of([&] { read_features(dir / "bad.bin"); }) == ErrorCode::kFormat);
  }
  SUBCASE("truncated payload names both byte counts") {
    auto cut = bytes;
    cut.resize(30);
    put_bytes(dir / "cut.bin", cut);
    CHECK(code_of([&] { read_features(dir / "cut.bin"); }) == ErrorCode::kTruncated);
    const std::string msg = message_of([&] { read_features(dir / "cut.bin"); });
    CHECK(msg.find("40") != std::string::npos);
    CHECK(msg.find("30") != std::string::npos);
  }
  SUBCASE("zero dimension") {
    auto zero = bytes;
    std::memset(zero.data() + 12, 0, 4);
    put_bytes(dir / "zero.bin", zero);
    CHECK(code_of([&] { read_features(dir / "zero.bin"); }) == ErrorCode::kFormat);
  }
  SUBCASE("trailing bytes") {
    auto extra = bytes;
    extra.push_back(0);
    put_bytes(dir / "extra.bin", extra);
    CHECK(code_of([&] { read_features(dir / "extra.bin"); }) == ErrorCode::kFormat);
  }
  SUBCASE("missing file") {
    CHECK(code_of([&] { read_features(dir / "nope.bin"); }) == ErrorCode::kIo);
  }
}

TEST_CASE("dataset export and load round trip") {
  TempDir dir("roundtrip");
  SynthConfig cfg;
  cfg.n_videos = 30;
  const Dataset d = generate_synthetic(cfg).dataset;
  const fs::path manifest = save_dataset(d, dir / "data");
  CHECK(fs::exists(dir / "data" / "video_features.bin"));
  CHECK(fs::exists(dir / "data" / "caption_features.bin"));
  CHECK(load_dataset(manifest) == d);
}

TEST_CASE("load_dataset validation") {
  TempDir dir("validation");
  const fs::path manifest = save_dataset(tiny_dataset(), dir.path());
  auto edit = [&](const std::function<void(nlohmann::json&)>& change) {
    std::ifstream in(manifest);
    nlohmann::json j = nlohmann::json::parse(in);
    change(j);
    const fs::path out = dir / "edited.json";
    std::ofstream(out) << j.dump();
    return out;
  };
  CHECK(load_dataset(manifest) == tiny_dataset());

  SUBCASE("dangling owner") {
    const auto p = edit([](auto& j) { j["caption_owner"] = {0, 1, 2}; });
    CHECK(code_of([&] { load_dataset(p); }) == ErrorCode::kValidation);
  }
  SUBCASE("overlapping splits name both sets") {
    const auto p = edit([](auto& j) { j["splits"]["test"] = {0, 1}; });
    CHECK(code_of([&] { load_dataset(p); }) == ErrorCode::kValidation);
    const std::string msg = message_of([&] { load_dataset(p); });
    CHECK(msg.find("train") != std::string::npos);
    CHECK(msg.find("test") != std::string::npos);
  }
  SUBCASE("caption count mismatch") {
    const auto p = edit([](auto& j) { j["caption_owner"] = {0, 1}; });
    CHECK(code_of([&] { load_dataset(p); }) == ErrorCode::kValidation);
  }
  SUBCASE("video without captions") {
    const auto p = edit([](auto& j) { j["caption_owner"] = {0, 0, 0}; });
    CHECK(message_of([&] { load_dataset(p); }).find("video 1") != std::string::npos);
  }
  SUBCASE("unknown key") {
    const auto p = edit([](auto& j) { j["extra"] = 1; });
    CHECK(code_of([&] { load_dataset(p); }) == ErrorCode::kValidation);
  }
  SUBCASE("split index out of range") {
    const auto p = edit([](auto& j) { j["splits"]["val"] = {5}; });
    CHECK(code_of([&] { load_dataset(p); }) == ErrorCode::kValidation);
  }
}
