#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "pixar/rng.hpp"
#include "pixar/shortlist.hpp"
#include "support/gradcheck.hpp"

using namespace pixar;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double scale = 1.0) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

std::size_t brute_argmax(const Matrix& centroids, const RowVector& x) {
  std::size_t best = 0;
  double best_score = -INFINITY;
  for (Eigen::Index j = 0; j < centroids.rows(); ++j) {
    double s = 0;
    for (Eigen::Index k = 0; k < x.size(); ++k) s += centroids(j, k) * x(k);
    if (s > best_score) {
      best_score = s;
      best = static_cast<std::size_t>(j);
    }
  }
  return best;
}

}  // namespace

TEST_CASE("centroid_distribution") {
  Rng rng(1);
  const Matrix w = random_matrix(5, 3, rng);
  const auto uniform = centroid_distribution(RowVector::Zero(3), w);
  for (int i = 0; i < 5; ++i) CHECK(uniform(i) == doctest::Approx(0.2));

  Matrix w3(3, 2);
  w3 << 1, 0, 0, 1, -1, -1;
  RowVector c(2);
  c << 2, 1;
  // logits 2, 1, -3
  const double z = std::exp(2.0) + std::exp(1.0) + std::exp(-3.0);
  const auto p = centroid_distribution(c, w3);
  CHECK(p(0) == doctest::Approx(std::exp(2.0) / z).epsilon(1e-12));
  CHECK(p(1) == doctest::Approx(std::exp(1.0) / z).epsilon(1e-12));
  CHECK(p(2) == doctest::Approx(std::exp(-3.0) / z).epsilon(1e-12));
  CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-12));

  for (int trial = 0; trial < 20; ++trial) {
    const Matrix wv = random_matrix(40, 4, rng);
    const RowVector cv = random_matrix(1, 4, rng);
    const auto top = top_tokens(cv, wv, 7);
    const auto probs = centroid_distribution(cv, wv);
    std::vector<TokenId> by_prob(40);
    for (TokenId i = 0; i < 40; ++i) by_prob[i] = i;
    std::stable_sort(by_prob.begin(), by_prob.end(), [&](TokenId a, TokenId b) { return probs(a) > probs(b); });
    by_prob.resize(7);
    CHECK(top == by_prob);
  }
}

TEST_CASE("top_tokens breaks ties by token id") {
  Matrix w = Matrix::Zero(6, 2);
  w.row(4) << 1, 0;
  const auto top = top_tokens(RowVector::Ones(2), w, 3);
  CHECK(top == std::vector<TokenId>{4, 0, 1});
}

TEST_CASE("assign") {
  Rng rng(2);
  const Matrix w = random_matrix(10, 3, rng);
  const auto single = ShortlistIndex::build(random_matrix(1, 3, rng), w, 4, 1, 0);
  CHECK(single.assign(random_matrix(1, 3, rng)) == 0);

  const Matrix eye = Matrix::Identity(3, 3);
  const auto geo = ShortlistIndex::build(eye, w, 2, 1, 0);
  for (Eigen::Index j = 0; j < 3; ++j) CHECK(geo.assign(eye.row(j)) == static_cast<std::size_t>(j));

  // Ties go to the smallest index.
  const auto tied = ShortlistIndex::build(Matrix::Ones(4, 3), w, 2, 2, 0);
  CHECK(tied.assign(RowVector::Ones(3)) == 0);
  CHECK(tied.top_centroids(RowVector::Ones(3), 2) == std::vector<std::size_t>{0, 1});

  const auto idx = ShortlistIndex::build(random_matrix(64, 3, rng), w, 3, 4, 0);
  for (int trial = 0; trial < 1000; ++trial) {
    const RowVector x = random_matrix(1, 3, rng);
    CHECK(idx.assign(x) == brute_argmax(idx.centroids(), x));
  }
}

TEST_CASE("shortlist union") {
  // m=3, r=2, k=2 hand instance.
  Matrix w(5, 2);
  w << 1, 0,   //
      0, 1,    //
      -1, 0,   //
      0, -1,   //
      1, 1;
  Matrix c(3, 2);
  c << 1, 0,   // W = {0, 4}
      0, 1,    // W = {1, 4}, a tie at score 1
      -1, -1;  // W = {2, 3}
  const auto idx = ShortlistIndex::build(c, w, 2, 2, 0);
  CHECK(std::vector<TokenId>(idx.set(0).begin(), idx.set(0).end()) == std::vector<TokenId>{0, 4});
  CHECK(std::vector<TokenId>(idx.set(1).begin(), idx.set(1).end()) == std::vector<TokenId>{1, 4});
  CHECK(std::vector<TokenId>(idx.set(2).begin(), idx.set(2).end()) == std::vector<TokenId>{2, 3});
  RowVector x(2);
  x << 2, 1;  // scores 2, 1, -3 -> centroids 0 and 1
  CHECK(idx.shortlist(x) == std::vector<TokenId>{0, 1, 4});

  const auto all = idx.with_probe(3);
  CHECK(all.shortlist(x) == std::vector<TokenId>{0, 1, 2, 3, 4});
  CHECK_THROWS_AS(idx.with_probe(4), InvalidArgument);
  CHECK_THROWS_AS(ShortlistIndex::build(c, w, 6, 1, 0), InvalidArgument);

  const ShortlistConfig defaults;
  CHECK(defaults.clusters == 4096);
  CHECK(defaults.set_size == 20000);
  CHECK(defaults.probe == 5);
  CHECK(defaults.set_size * defaults.probe <= 100000);
}

TEST_CASE("shortlist properties on random indexes") {
  Rng rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const Matrix w = random_matrix(60, 4, rng);
    const auto idx = ShortlistIndex::build(random_matrix(8, 4, rng), w, 5, 3, 0);
    // Every W_i is the exhaustive top-r.
    for (std::size_t j = 0; j < idx.clusters(); ++j) {
      const auto set = idx.set(j);
      const RowVector c = idx.centroids().row(static_cast<Eigen::Index>(j));
      double min_in = INFINITY;
      for (TokenId t : set) min_in = std::min(min_in, c.dot(w.row(t)));
      for (TokenId t = 0; t < 60; ++t) {
        if (std::find(set.begin(), set.end(), t) == set.end()) CHECK(c.dot(w.row(t)) <= min_in);
      }
    }
    const RowVector x = random_matrix(1, 4, rng);
    CHECK(idx.shortlist(x).size() <= idx.set_size() * idx.probe());

    // Appending a shared bias dimension shifts all inner products equally.
    Matrix cb(8, 5);
    cb << idx.centroids(), Matrix::Constant(8, 1, 3.7);
    RowVector xb(5);
    xb << x, 1.0;
    Matrix wb(60, 5);
    wb << w, Matrix::Zero(60, 1);
    const auto shifted = ShortlistIndex::build(cb, wb, 5, 3, 0);
    CHECK(shifted.top_centroids(xb, 3) == idx.top_centroids(x, 3));

    // Larger k never loses tokens.
    std::size_t prev = 0;
    for (std::size_t k = 1; k <= idx.clusters(); ++k) {
      const auto s = idx.with_probe(k).shortlist(x);
      CHECK(s.size() >= prev);
      prev = s.size();
    }
  }
}

TEST_CASE("centroid loss gradient matches finite differences") {
  Rng rng(4);
  for (int inst = 0; inst < 20; ++inst) {
    const std::size_t m = inst < 5 ? 1 : 1 + rng.below(4);
    const std::size_t vocab = 10 + rng.below(41);
    const Eigen::Index d = 2 + static_cast<Eigen::Index>(rng.below(7));
    const Matrix w = random_matrix(static_cast<Eigen::Index>(vocab), d, rng, 0.7);
    Matrix c = random_matrix(static_cast<Eigen::Index>(m), d, rng);
    const Matrix x0 = random_matrix(6, d, rng);
    std::vector<TargetSequence> targets(6);
    for (auto& t : targets) {
      for (int k = 0; k < 3; ++k) t.ids.push_back(static_cast<TokenId>(rng.below(vocab)));
    }
    Matrix grad;
    centroid_loss(c, w, x0, targets, false, &grad);
    auto loss = [&] { return centroid_loss(c, w, x0, targets, false); };
    for (Eigen::Index i = 0; i < c.size(); ++i) {
      CHECK(testing::relative_error(grad.data()[i], testing::central_difference(c, i, loss)) <
            testing::kFdRelTol);
    }
  }
}

TEST_CASE("train_centroids separates two query groups") {
  Rng rng(5);
  const Eigen::Index d = 4;
  const std::size_t vocab = 40;
  Matrix w = random_matrix(static_cast<Eigen::Index>(vocab), d, rng, 0.3);
  // Group A tokens 1..5 lean towards +e0, group B tokens 6..10 towards -e0.
  for (TokenId t = 1; t <= 5; ++t) w(t, 0) += 2.0;
  for (TokenId t = 6; t <= 10; ++t) w(t, 0) -= 2.0;
  Matrix x0(40, d);
  std::vector<TargetSequence> targets(40);
  for (Eigen::Index i = 0; i < 40; ++i) {
    const bool a = i < 20;
    x0.row(i) = 0.1 * random_matrix(1, d, rng);
    x0(i, 0) += a ? 3.0 : -3.0;
    const TokenId base = a ? 1 : 6;
    for (int k = 0; k < 3; ++k) targets[static_cast<std::size_t>(i)].ids.push_back(base + static_cast<TokenId>(rng.below(5)));
  }
  ShortlistConfig cfg;
  cfg.clusters = 2;
  cfg.set_size = 5;
  cfg.probe = 1;
  cfg.epochs = 30;
  cfg.learning_rate = 0.05;
  cfg.seed = 7;
  const auto idx = train_centroids(x0, targets, w, cfg, 0);
  const std::size_t ea = idx.assign(x0.row(0));
  const std::size_t eb = idx.assign(x0.row(39));
  REQUIRE(ea != eb);
  auto covers = [&](std::size_t j, TokenId lo) {
    const auto s = idx.set(j);
    for (TokenId t = lo; t < lo + 5; ++t) {
      if (std::find(s.begin(), s.end(), t) == s.end()) return false;
    }
    return true;
  };
  CHECK(covers(ea, 1));
  CHECK(covers(eb, 6));

  // Determinism, and zero epochs keeps the k-means++ seeds (rows of x0).
  CHECK(train_centroids(x0, targets, w, cfg, 0) == idx);
  cfg.epochs = 0;
  const auto seeded = train_centroids(x0, targets, w, cfg, 0);
  for (Eigen::Index j = 0; j < 2; ++j) {
    bool found = false;
    for (Eigen::Index i = 0; i < 40; ++i) found |= seeded.centroids().row(j) == x0.row(i);
    CHECK(found);
  }
}

TEST_CASE("empty clusters are reseeded and logged") {
  Rng rng(6);
  const Matrix w = random_matrix(20, 3, rng);
  Matrix x0 = Matrix::Zero(4, 3);
  x0.col(0).setOnes();
  std::vector<TargetSequence> targets(4, TargetSequence{{1, 2}});
  ShortlistConfig cfg;
  cfg.clusters = 3;
  cfg.set_size = 4;
  cfg.probe = 2;
  cfg.epochs = 2;
  std::vector<std::string> lines;
  train_centroids(x0, targets, w, cfg, 0, [&](std::string_view l) { lines.emplace_back(l); });
  CHECK(std::any_of(lines.begin(), lines.end(),
                    [](const std::string& l) { return l.find("reseeded") != std::string::npos; }));
}

TEST_CASE("index file roundtrip and corruption") {
  Rng rng(9);
  const auto idx = ShortlistIndex::build(random_matrix(5, 3, rng), random_matrix(30, 3, rng), 4, 2, 77);
  const auto bytes = idx.serialize();
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "PIXC");
  const auto back = ShortlistIndex::deserialize(bytes, "mem");
  CHECK(back == idx);
  CHECK(back.vocab_hash() == 77);
  auto cut = bytes;
  cut.resize(cut.size() - 3);
  CHECK_THROWS_AS(ShortlistIndex::deserialize(cut, "mem"), CorruptArtifact);
}
