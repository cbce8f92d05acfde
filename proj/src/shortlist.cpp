#include "pixar/shortlist.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pixar/binary_io.hpp"
#include "pixar/rng.hpp"

namespace pixar {

namespace {

constexpr std::array<char, 4> kMagic = {'P', 'I', 'X', 'C'};
constexpr std::uint32_t kVersion = 1;

std::vector<std::size_t> assignments(const Matrix& centroids, const Matrix& x0) {
  const Matrix scores = x0 * centroids.transpose();
  std::vector<std::size_t> out(static_cast<std::size_t>(x0.rows()));
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < scores.cols(); ++j) {
      if (scores(i, j) > scores(i, best)) best = j;
    }
    out[static_cast<std::size_t>(i)] = static_cast<std::size_t>(best);
  }
  return out;
}

Matrix kmeans_pp_seed(const Matrix& x0, std::size_t m, Rng& rng) {
  const auto n = static_cast<std::size_t>(x0.rows());
  Matrix centroids(static_cast<Eigen::Index>(m), x0.cols());
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  std::size_t pick = rng.below(n);
  for (std::size_t j = 0; j < m; ++j) {
    centroids.row(static_cast<Eigen::Index>(j)) = x0.row(static_cast<Eigen::Index>(pick));
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d2 = (x0.row(static_cast<Eigen::Index>(i)) -
                         centroids.row(static_cast<Eigen::Index>(j))).squaredNorm();
      dist[i] = std::min(dist[i], d2);
      total += dist[i];
    }
    if (total <= 0.0) {
      pick = rng.below(n);
      continue;
    }
    double target = rng.uniform() * total;
    pick = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      target -= dist[i];
      if (target < 0.0) {
        pick = i;
        break;
      }
    }
  }
  return centroids;
}

}  // namespace

void ShortlistConfig::validate(std::size_t vocab_size) const {
  if (clusters < 1 || set_size < 1 || probe < 1) throw InvalidArgument("m, r, k must be >= 1");
  if (probe > clusters) throw InvalidArgument("k must be <= m");
  if (set_size > vocab_size) {
    throw InvalidArgument("r=" + std::to_string(set_size) + " exceeds vocabulary size " +
                          std::to_string(vocab_size));
  }
}

Eigen::VectorXd centroid_distribution(const Eigen::Ref<const RowVector>& centroid,
                                      const Matrix& token_vectors) {
  return position_distribution(centroid, token_vectors);
}

std::vector<TokenId> top_tokens(const Eigen::Ref<const RowVector>& centroid,
                                const Matrix& token_vectors, std::size_t r) {
  const Eigen::VectorXd scores = token_vectors * centroid.transpose();
  std::vector<TokenId> ids(static_cast<std::size_t>(scores.size()));
  std::iota(ids.begin(), ids.end(), TokenId{0});
  r = std::min(r, ids.size());
  auto better = [&](TokenId a, TokenId b) {
    return scores(a) != scores(b) ? scores(a) > scores(b) : a < b;
  };
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(r), ids.end(), better);
  ids.resize(r);
  return ids;
}

ShortlistIndex ShortlistIndex::build(Matrix centroids, const Matrix& token_vectors,
                                     std::size_t set_size, std::size_t probe,
                                     std::uint64_t vocab_hash) {
  ShortlistConfig check;
  check.clusters = static_cast<std::size_t>(centroids.rows());
  check.set_size = set_size;
  check.probe = probe;
  check.validate(static_cast<std::size_t>(token_vectors.rows()));
  if (centroids.cols() != token_vectors.cols()) throw InvalidArgument("centroid dimension mismatch");
  ShortlistIndex idx;
  idx.set_size_ = set_size;
  idx.probe_ = probe;
  idx.vocab_hash_ = vocab_hash;
  idx.sets_.reserve(check.clusters * set_size);
  for (Eigen::Index j = 0; j < centroids.rows(); ++j) {
    const auto top = top_tokens(centroids.row(j), token_vectors, set_size);
    idx.sets_.insert(idx.sets_.end(), top.begin(), top.end());
  }
  idx.centroids_ = std::move(centroids);
  return idx;
}

std::span<const TokenId> ShortlistIndex::set(std::size_t i) const {
  if (i >= clusters()) throw InvalidArgument("centroid index out of range");
  return std::span(sets_).subspan(i * set_size_, set_size_);
}

ShortlistIndex ShortlistIndex::with_probe(std::size_t probe) const {
  if (probe < 1 || probe > clusters()) throw InvalidArgument("k must be in [1, m]");
  ShortlistIndex copy = *this;
  copy.probe_ = probe;
  return copy;
}

std::size_t ShortlistIndex::assign(const Eigen::Ref<const RowVector>& x0) const {
  return top_centroids(x0, 1).front();
}

std::vector<std::size_t> ShortlistIndex::top_centroids(const Eigen::Ref<const RowVector>& x0,
                                                       std::size_t count) const {
  const Eigen::VectorXd scores = centroids_ * x0.transpose();
  std::vector<std::size_t> ids(clusters());
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  count = std::min(count, ids.size());
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(count), ids.end(),
                    [&](std::size_t a, std::size_t b) {
                      const auto ia = static_cast<Eigen::Index>(a);
                      const auto ib = static_cast<Eigen::Index>(b);
                      return scores(ia) != scores(ib) ? scores(ia) > scores(ib) : a < b;
                    });
  ids.resize(count);
  return ids;
}

std::vector<TokenId> ShortlistIndex::shortlist(const Eigen::Ref<const RowVector>& x0) const {
  std::vector<TokenId> out;
  out.reserve(probe_ * set_size_);
  for (std::size_t j : top_centroids(x0, probe_)) {
    const auto s = set(j);
    out.insert(out.end(), s.begin(), s.end());
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

// Layout: "PIXC", u32 version, u64 vocab_hash, u64 m, r, k, hidden_dim,
// m*hidden_dim f64 centroids (row-major), m*r u32 token ids, u64 checksum.
std::vector<std::uint8_t> ShortlistIndex::serialize() const {
  io::ByteWriter w(kMagic, kVersion);
  w.u64(vocab_hash_);
  w.u64(clusters());
  w.u64(set_size_);
  w.u64(probe_);
  w.u64(hidden_dim());
  w.f64_array(std::span(centroids_.data(), static_cast<std::size_t>(centroids_.size())));
  w.u32_array(sets_);
  return std::move(w).finish();
}

ShortlistIndex ShortlistIndex::deserialize(std::vector<std::uint8_t> image,
                                           const std::string& source) {
  io::ByteReader r(std::move(image), kMagic, kVersion, source);
  ShortlistIndex idx;
  idx.vocab_hash_ = r.u64();
  const std::uint64_t m = r.u64();
  idx.set_size_ = static_cast<std::size_t>(r.u64());
  idx.probe_ = static_cast<std::size_t>(r.u64());
  const std::uint64_t d = r.u64();
  if (m < 1 || idx.set_size_ < 1 || idx.probe_ < 1 || idx.probe_ > m || d < 1 ||
      m > (1u << 24) || d > (1u << 16) || idx.set_size_ > (1ull << 32)) {
    r.fail("invalid index header");
  }
  idx.centroids_.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(d));
  r.f64_array(std::span(idx.centroids_.data(), static_cast<std::size_t>(idx.centroids_.size())));
  const auto total = static_cast<std::size_t>(m) * idx.set_size_;
  idx.sets_.resize(total);
  r.u32_array(idx.sets_);
  r.expect_end();
  return idx;
}

void ShortlistIndex::save(const std::filesystem::path& path) const {
  io::write_file(path, serialize());
}

ShortlistIndex ShortlistIndex::load(const std::filesystem::path& path) {
  return deserialize(io::read_file(path), path.string());
}

namespace {

double assigned_centroid_loss(const Matrix& centroids, const Matrix& token_vectors,
                              std::span<const std::size_t> assigned,
                              std::span<const TargetSequence> targets, bool mask_pad, Matrix* grad) {
  const auto m = static_cast<std::size_t>(centroids.rows());
  // Per cluster: number of contributing target positions and the sum of
  // their token vectors.
  std::vector<double> active(m, 0.0);
  Matrix target_sum = Matrix::Zero(centroids.rows(), centroids.cols());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const std::size_t j = assigned[i];
    for (TokenId t : targets[i].ids) {
      if (mask_pad && t == Vocabulary::kPad) continue;
      active[j] += 1.0;
      target_sum.row(static_cast<Eigen::Index>(j)) += token_vectors.row(t);
    }
  }
  if (grad != nullptr) *grad = Matrix::Zero(centroids.rows(), centroids.cols());
  double loss = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    if (active[j] == 0.0) continue;
    const auto row = static_cast<Eigen::Index>(j);
    const Eigen::VectorXd logits = token_vectors * centroids.row(row).transpose();
    const double mx = logits.maxCoeff();
    const Eigen::VectorXd e = (logits.array() - mx).exp();
    const double z = e.sum();
    const double log_z = mx + std::log(z);
    loss += active[j] * log_z - centroids.row(row).dot(target_sum.row(row));
    if (grad != nullptr) {
      grad->row(row) = active[j] * (e.transpose() * token_vectors) / z - target_sum.row(row);
    }
  }
  return loss;
}

}  // namespace

double centroid_loss(const Matrix& centroids, const Matrix& token_vectors,
                     const Matrix& shortlist_embeddings, std::span<const TargetSequence> targets,
                     bool mask_pad, Matrix* grad) {
  if (static_cast<std::size_t>(shortlist_embeddings.rows()) != targets.size()) {
    throw InvalidArgument("embeddings/targets size mismatch");
  }
  const auto assigned = assignments(centroids, shortlist_embeddings);
  return assigned_centroid_loss(centroids, token_vectors, assigned, targets, mask_pad, grad);
}

ShortlistIndex train_centroids(const Matrix& shortlist_embeddings,
                               std::span<const TargetSequence> targets,
                               const Matrix& token_vectors, const ShortlistConfig& config,
                               std::uint64_t vocab_hash, const LogFn& log) {
  config.validate(static_cast<std::size_t>(token_vectors.rows()));
  if (static_cast<std::size_t>(shortlist_embeddings.rows()) != targets.size()) {
    throw InvalidArgument("embeddings/targets size mismatch");
  }
  if (shortlist_embeddings.rows() == 0) throw InvalidArgument("no training embeddings");
  const std::size_t m = config.clusters;
  Rng rng = Rng::stream(config.seed, "centroid-init");
  Matrix centroids = kmeans_pp_seed(shortlist_embeddings, m, rng);

  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;
  Matrix m1 = Matrix::Zero(centroids.rows(), centroids.cols());
  Matrix m2 = m1;
  std::size_t step = 0;
  const auto n = static_cast<std::size_t>(shortlist_embeddings.rows());
  Matrix grad;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto assigned = assignments(centroids, shortlist_embeddings);
    std::vector<std::size_t> members(m, 0);
    for (std::size_t e : assigned) ++members[e];
    for (std::size_t j = 0; j < m; ++j) {
      if (members[j] != 0) continue;
      const std::size_t src = rng.below(n);
      centroids.row(static_cast<Eigen::Index>(j)) =
          shortlist_embeddings.row(static_cast<Eigen::Index>(src));
      m1.row(static_cast<Eigen::Index>(j)).setZero();
      m2.row(static_cast<Eigen::Index>(j)).setZero();
      if (log) {
        log("epoch " + std::to_string(epoch + 1) + ": reseeded empty centroid " +
            std::to_string(j) + " from query " + std::to_string(src));
      }
    }
    double loss = 0.0;
    for (std::size_t s = 0; s < config.steps_per_epoch; ++s, ++step) {
      loss = assigned_centroid_loss(centroids, token_vectors, assigned, targets, config.mask_pad,
                                    &grad);
      const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(step + 1));
      const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(step + 1));
      const double scale = 1.0 / static_cast<double>(n);
      m1.array() = kBeta1 * m1.array() + (1.0 - kBeta1) * grad.array() * scale;
      m2.array() = kBeta2 * m2.array() + (1.0 - kBeta2) * (grad.array() * scale).square();
      centroids.array() -= config.learning_rate * (m1.array() / c1) / ((m2.array() / c2).sqrt() + kEps);
    }
    if (log) {
      log("epoch " + std::to_string(epoch + 1) + ": l'=" + std::to_string(loss / static_cast<double>(n)) +
          " per query");
    }
  }
  return ShortlistIndex::build(std::move(centroids), token_vectors, config.set_size, config.probe,
                               vocab_hash);
}

ShortlistIndex train_centroids(const ModelParams& params,
                               std::span<const TrainingExample> examples,
                               const ShortlistConfig& config, const LogFn& log) {
  Matrix x0(static_cast<Eigen::Index>(examples.size()),
            static_cast<Eigen::Index>(params.config.hidden_dim));
  std::vector<TargetSequence> targets;
  targets.reserve(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i) {
    x0.row(static_cast<Eigen::Index>(i)) = encode_tokens(params, examples[i].input).shortlist_embedding();
    targets.push_back(examples[i].target);
  }
  return train_centroids(x0, targets, params.token_vectors, config, params.vocab_hash, log);
}

}  // namespace pixar
