#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "meel/error.hpp"
#include "meel/objective.hpp"
#include "support.hpp"

using namespace meel;
using meel::testing::numeric_gradient;
using meel::testing::random_matrix;
using meel::testing::random_unit;
using meel::testing::random_unit_rows;
using meel::testing::relative_error;

namespace {

Matrix basis_rows(std::initializer_list<std::size_t> ks, std::size_t n) {
  Matrix m(ks.size(), n);
  std::size_t i = 0;
  for (std::size_t k : ks) m(i++, k) = 1.0;
  return m;
}

// Exhaustive oracle: every in-batch negative is tried and the worst hinge
// kept, which is the hardest-negative hinge by monotonicity.
double triplet_oracle(const Matrix& v, const Matrix& t, double margin) {
  const std::size_t b = v.rows();
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const double pos = dot(v.row(i), t.row(i));
    double worst_v = 0.0, worst_t = 0.0;
    for (std::size_t j = 0; j < b; ++j) {
      if (j == i) continue;
      worst_v = std::max(worst_v, margin - pos + dot(v.row(i), t.row(j)));
      worst_t = std::max(worst_t, margin - pos + dot(v.row(j), t.row(i)));
    }
    total += worst_v + worst_t;
  }
  return total / static_cast<double>(b);
}

// Direct quotient: -log(exp(q.k+/tau) / (exp(q.k+/tau) + sum_unmasked exp(q.k_i/tau))).
double infonce_oracle(std::span<const double> q, std::span<const double> pos,
                      const CrossModalQueue& queue, VideoId owner, double tau) {
  const double num = std::exp(dot(q, pos) / tau);
  double den = num;
  for (std::size_t s = 0; s < queue.capacity(); ++s) {
    if (queue.owner(s) == owner) continue;
    den += std::exp(dot(q, queue.embedding(s)) / tau);
  }
  return -std::log(num / den);
}

CrossModalQueue toy_queue(Prng& prng, std::vector<VideoId> owners, std::size_t dim) {
  Matrix rows = random_unit_rows(prng, owners.size(), dim);
  return CrossModalQueue(std::move(rows), std::move(owners), 0);
}

}  // namespace

TEST_CASE("triplet loss analytic examples") {
  const Matrix v = basis_rows({0, 1}, 2);
  CHECK(triplet_ranking_loss(v, v, 0.2).loss == 0.0);
  const Matrix swapped = basis_rows({1, 0}, 2);
  CHECK(triplet_ranking_loss(v, swapped, 0.2).loss == doctest::Approx(2.4).epsilon(1e-15));
  CHECK_THROWS_AS(triplet_ranking_loss(basis_rows({0}, 2), basis_rows({0}, 2), 0.2), Error);
  CHECK_THROWS_AS(triplet_ranking_loss(v, basis_rows({0, 1, 0}, 2), 0.2), Error);
}

TEST_CASE("triplet loss matches exhaustive enumeration and finite differences") {
  Prng prng(101);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix v = random_unit_rows(prng, 8, 5);
    Matrix t = random_unit_rows(prng, 8, 5);
    const double margin = 0.2;
    const TripletLoss r = triplet_ranking_loss(v, t, margin);
    CHECK(r.loss == doctest::Approx(triplet_oracle(v, t, margin)).epsilon(1e-13));
    for (std::size_t i = 0; i < 8; ++i) {
      double best = -2.0;
      std::size_t arg = 0;
      for (std::size_t j = 0; j < 8; ++j) {
        if (j != i && dot(v.row(i), t.row(j)) > best) {
          best = dot(v.row(i), t.row(j));
          arg = j;
        }
      }
      CHECK(r.hardest_text[i] == arg);
    }
    const Vector gv = numeric_gradient([&] { return triplet_ranking_loss(v, t, margin).loss; },
                                       v.values());
    const Vector gt = numeric_gradient([&] { return triplet_ranking_loss(v, t, margin).loss; },
                                       t.values());
    CHECK(relative_error(r.grad_videos.values(), gv) <= 1e-5);
    CHECK(relative_error(r.grad_texts.values(), gt) <= 1e-5);
  }
}

TEST_CASE("triplet loss breaks ties toward the lowest index") {
  // Texts 1 and 2 are identical, so both are equally hard for video 0.
  Matrix v = basis_rows({0, 1, 2}, 3);
  Matrix t(3, 3, {1, 0, 0, 0, 1, 0, 0, 1, 0});
  const TripletLoss r = triplet_ranking_loss(v, t, 0.2);
  CHECK(r.hardest_text[0] == 1);
}

TEST_CASE("triplet loss vanishes once every margin is satisfied") {
  Prng prng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix v = random_unit_rows(prng, 6, 16);
    const TripletLoss r = triplet_ranking_loss(v, v, 0.0);
    // With identical modalities the positive similarity is 1, the maximum.
    CHECK(r.loss == 0.0);
    CHECK(std::all_of(r.grad_videos.values().begin(), r.grad_videos.values().end(),
                      [](double g) { return g == 0.0; }));
  }
}

TEST_CASE("infonce uniform and degenerate cases") {
  SUBCASE("all logits equal gives ln(K+1)") {
    const std::size_t k = 6;
    Matrix same(k, 3);
    for (std::size_t s = 0; s < k; ++s) same(s, 0) = 1.0;
    CrossModalQueue q(same, std::vector<VideoId>(k, 9), 0);
    const Vector e0{1.0, 0.0, 0.0};
    CHECK(infonce_loss(e0, e0, q, 1, 0.07).loss == doctest::Approx(std::log(7.0)).epsilon(1e-12));
  }
  SUBCASE("all queue entries masked gives zero") {
    Prng prng(1);
    const auto q = toy_queue(prng, {4, 4, 4, 4}, 3);
    const InfoNce r = infonce_loss(random_unit(prng, 3), random_unit(prng, 3), q, 4, 0.07);
    CHECK(r.loss == 0.0);
    for (double g : r.grad_query) CHECK(g == 0.0);
  }
  SUBCASE("invalid temperature") {
    Prng prng(1);
    const auto q = toy_queue(prng, {1, 2}, 3);
    CHECK_THROWS_AS(infonce_loss(random_unit(prng, 3), random_unit(prng, 3), q, 4, 0.0), Error);
  }
}

TEST_CASE("infonce matches the direct quotient and finite differences") {
  Prng prng(202);
  for (int trial = 0; trial < 20; ++trial) {
    // 6 entries, 2 owned by the query's video.
    const auto q = toy_queue(prng, {3, 7, 8, 3, 9, kNoOwner}, 4);
    Vector query = random_unit(prng, 4);
    const Vector pos = random_unit(prng, 4);
    const double tau = 0.07;
    const InfoNce r = infonce_loss(query, pos, q, 3, tau);
    CHECK(std::abs(r.loss - infonce_oracle(query, pos, q, 3, tau)) <= 1e-9);
    const Vector numeric =
        numeric_gradient([&] { return infonce_loss(query, pos, q, 3, tau).loss; }, query);
    CHECK(relative_error(r.grad_query, numeric) <= 1e-6);
  }
}

TEST_CASE("infonce decreases as the positive logit grows") {
  Prng prng(3);
  const auto q = toy_queue(prng, {1, 2, 3, 4, 5}, 3);
  const Vector query{1.0, 0.0, 0.0};
  double previous = std::numeric_limits<double>::infinity();
  for (double angle = 3.0; angle >= 0.0; angle -= 0.25) {
    const Vector pos{std::cos(angle), std::sin(angle), 0.0};
    const double loss = infonce_loss(query, pos, q, 9, 0.07).loss;
    CHECK(loss < previous);
    previous = loss;
  }
}

TEST_CASE("infonce is invariant to queue order") {
  Prng prng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix rows = random_unit_rows(prng, 10, 5);
    std::vector<VideoId> owners{1, 2, 3, 4, 5, 6, 7, 8, 1, 2};
    const CrossModalQueue q(rows, owners, 0);
    std::vector<std::size_t> perm(10);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[prng.uniform_index(i)]);
    Matrix shuffled(10, 5);
    std::vector<VideoId> shuffled_owners(10);
    for (std::size_t i = 0; i < 10; ++i) {
      const auto r = rows.row(perm[i]);
      std::copy(r.begin(), r.end(), shuffled.row(i).begin());
      shuffled_owners[i] = owners[perm[i]];
    }
    const CrossModalQueue p(shuffled, shuffled_owners, 3);
    const Vector query = random_unit(prng, 5);
    const Vector pos = random_unit(prng, 5);
    const InfoNce a = infonce_loss(query, pos, q, 2, 0.1);
    const InfoNce b = infonce_loss(query, pos, p, 2, 0.1);
    CHECK(a.loss == doctest::Approx(b.loss).epsilon(1e-12));
    CHECK(relative_error(a.grad_query, b.grad_query) <= 1e-12);
  }
}

TEST_CASE("infonce batch is the mean of per-sample losses") {
  Prng prng(5);
  const auto q = toy_queue(prng, {0, 1, 2, 3, 4, 5, 6, 7}, 4);
  const Matrix queries = random_unit_rows(prng, 3, 4);
  const Matrix keys = random_unit_rows(prng, 3, 4);
  const std::vector<VideoId> owners{1, 5, 9};
  const BatchInfoNce batch = infonce_batch(queries, keys, q, owners, 0.07);
  double mean = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    const InfoNce one = infonce_loss(queries.row(i), keys.row(i), q, owners[i], 0.07);
    mean += one.loss / 3.0;
    for (std::size_t k = 0; k < 4; ++k) {
      CHECK(batch.grad_queries(i, k) == doctest::Approx(one.grad_query[k] / 3.0).epsilon(1e-14));
    }
  }
  CHECK(batch.loss == doctest::Approx(mean).epsilon(1e-14));
}

TEST_CASE("center loss") {
  CenterBank bank{Matrix(2, 2, 0.0)};
  const std::vector<std::size_t> zero{0};
  CHECK(center_loss(Matrix(1, 2, {1.0, 0.0}), zero, bank).loss == 0.5);

  Prng prng(6);
  CenterBank random_bank{random_matrix(prng, 4, 3)};
  const std::vector<std::size_t> labels{2, 0};
  Matrix at_centers(2, 3);
  for (std::size_t i = 0; i < 2; ++i) {
    const auto c = random_bank.centers.row(labels[i]);
    std::copy(c.begin(), c.end(), at_centers.row(i).begin());
  }
  CHECK(center_loss(at_centers, labels, random_bank).loss == 0.0);

  const std::vector<std::size_t> bad{4};
  try {
    center_loss(Matrix(1, 3, 1.0), bad, random_bank);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kOutOfRange);
  }
}

TEST_CASE("center loss gradient matches finite differences") {
  Prng prng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const CenterBank bank{random_matrix(prng, 5, 6)};
    Matrix t = random_unit_rows(prng, 8, 6);
    std::vector<std::size_t> labels(8);
    for (auto& y : labels) y = prng.uniform_index(5);
    const CenterLoss r = center_loss(t, labels, bank);
    const Vector numeric =
        numeric_gradient([&] { return center_loss(t, labels, bank).loss; }, t.values());
    CHECK(relative_error(r.grad_texts.values(), numeric) <= 1e-7);
  }
}

TEST_CASE("total loss combination") {
  LossParts parts;
  parts.triplet.loss = 1.0;
  parts.v2t.loss = 2.0;
  parts.t2v.loss = 3.0;
  parts.center.loss = 4.0;
  CHECK(total_loss(parts, 0.005).total == doctest::Approx(6.02).epsilon(1e-15));
  CHECK(total_loss(parts, 0.0).total == 6.0);
  parts.center.loss = 1e6;
  CHECK(total_loss(parts, 0.0).total == 6.0);
  parts.center.loss = std::nan("");
  CHECK_THROWS_AS(total_loss(parts, 0.005), Error);
}

TEST_CASE("total loss gradient matches finite differences on the composite") {
  Prng prng(8);
  const double tau = 0.07, margin = 0.2, alpha = 0.005;
  for (int trial = 0; trial < 20; ++trial) {
    Matrix v = random_unit_rows(prng, 4, 5);
    Matrix t = random_unit_rows(prng, 4, 5);
    const Matrix v_keys = random_unit_rows(prng, 4, 5);
    const Matrix t_keys = random_unit_rows(prng, 4, 5);
    const auto video_queue = toy_queue(prng, {0, 1, 2, 3, 4, 5, 6, 7}, 5);
    const auto text_queue = toy_queue(prng, {3, 3, 2, 9, 8, 1, 0, 6}, 5);
    const CenterBank bank{random_matrix(prng, 4, 5, 0.3)};
    const std::vector<VideoId> owners{0, 1, 2, 3};
    const std::vector<std::size_t> labels{0, 1, 2, 3};
    auto compute = [&] {
      LossParts p;
      p.triplet = triplet_ranking_loss(v, t, margin);
      p.v2t = infonce_batch(v, t_keys, text_queue, owners, tau);
      p.t2v = infonce_batch(t, v_keys, video_queue, owners, tau);
      p.center = center_loss(t, labels, bank);
      return total_loss(p, alpha);
    };
    const LossReport r = compute();
    CHECK(r.total == doctest::Approx(r.l_tri + r.l_v2t + r.l_t2v + alpha * r.l_c).epsilon(1e-15));
    const Vector gv = numeric_gradient([&] { return compute().total; }, v.values());
    const Vector gt = numeric_gradient([&] { return compute().total; }, t.values());
    CHECK(relative_error(r.grad_videos.values(), gv) <= 1e-5);
    CHECK(relative_error(r.grad_texts.values(), gt) <= 1e-5);
  }
}
