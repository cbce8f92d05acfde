#include "pixar/model.hpp"

#include <cmath>
#include <numbers>

#include "pixar/binary_io.hpp"
#include "pixar/rng.hpp"
#include "pixar/text.hpp"

namespace pixar {

namespace {

constexpr std::array<char, 4> kMagic = {'P', 'I', 'X', 'M'};
constexpr std::uint32_t kVersion = 1;
constexpr double kLayerNormEps = 1e-5;
const double kGeluScale = std::sqrt(2.0 / std::numbers::pi);

Matrix row_zeros(std::size_t n) { return Matrix::Zero(1, static_cast<Eigen::Index>(n)); }
Matrix zeros(std::size_t r, std::size_t c) {
  return Matrix::Zero(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

void fill_normal(Matrix& m, Rng& rng, double stddev) {
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = stddev * rng.normal();
}

Matrix layer_norm(const Matrix& x, const Matrix& gain, const Matrix& bias,
                  EncoderCache::LayerNormState* state) {
  const auto d = static_cast<double>(x.cols());
  Matrix normalized(x.rows(), x.cols());
  Eigen::VectorXd inv_std(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double mean = x.row(i).sum() / d;
    const double var = (x.row(i).array() - mean).square().sum() / d;
    inv_std(i) = 1.0 / std::sqrt(var + kLayerNormEps);
    normalized.row(i) = (x.row(i).array() - mean) * inv_std(i);
  }
  Matrix y = (normalized.array().rowwise() * gain.row(0).array()).rowwise() + bias.row(0).array();
  if (state != nullptr) {
    state->normalized = std::move(normalized);
    state->inv_std = std::move(inv_std);
  }
  return y;
}

Matrix layer_norm_backward(const Matrix& dy, const Matrix& gain,
                           const EncoderCache::LayerNormState& state, Matrix& d_gain,
                           Matrix& d_bias) {
  d_gain.row(0) += (dy.array() * state.normalized.array()).colwise().sum().matrix();
  d_bias.row(0) += dy.colwise().sum();
  const Matrix d_norm = dy.array().rowwise() * gain.row(0).array();
  const auto d = static_cast<double>(dy.cols());
  Matrix dx(dy.rows(), dy.cols());
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    const double mean_dn = d_norm.row(i).sum() / d;
    const double mean_dn_n = d_norm.row(i).dot(state.normalized.row(i)) / d;
    dx.row(i) = state.inv_std(i) *
                (d_norm.row(i).array() - mean_dn - state.normalized.row(i).array() * mean_dn_n);
  }
  return dx;
}

Matrix affine(const Matrix& x, const Matrix& w, const Matrix& b) {
  Matrix y = x * w;
  y.rowwise() += b.row(0);
  return y;
}

double gelu(double u) {
  return 0.5 * u * (1.0 + std::tanh(kGeluScale * (u + 0.044715 * u * u * u)));
}

double gelu_grad(double u) {
  const double th = std::tanh(kGeluScale * (u + 0.044715 * u * u * u));
  return 0.5 * (1.0 + th) +
         0.5 * u * (1.0 - th * th) * kGeluScale * (1.0 + 3.0 * 0.044715 * u * u);
}

void softmax_rows(Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double mx = m.row(i).maxCoeff();
    m.row(i) = (m.row(i).array() - mx).exp();
    m.row(i) /= m.row(i).sum();
  }
}

}  // namespace

void ModelConfig::validate() const {
  auto need = [](bool ok, const char* what) {
    if (!ok) throw InvalidArgument(std::string("model config: ") + what);
  };
  need(vocab_size >= 1, "vocab_size must be >= 1");
  need(hidden_dim >= 1, "hidden_dim must be >= 1");
  need(heads >= 1 && hidden_dim % heads == 0, "heads must divide hidden_dim");
  need(ffn_dim >= 1, "ffn_dim must be >= 1");
  need(output_len >= 1, "output_len (s) must be >= 1");
  need(input_buckets >= 1, "input_buckets must be >= 1");
}

ModelParams ModelParams::zeros(const ModelConfig& config) {
  config.validate();
  const std::size_t d = config.hidden_dim;
  ModelParams p;
  p.config = config;
  p.input_embedding = pixar::zeros(1 + config.input_buckets, d);
  p.slot_embedding = pixar::zeros(config.output_len, d);
  p.position_embedding = pixar::zeros(1 + config.max_query_tokens + config.output_len, d);
  p.blocks.resize(config.layers);
  for (auto& b : p.blocks) {
    b.ln1_gain = row_zeros(d);
    b.ln1_bias = row_zeros(d);
    b.wq = pixar::zeros(d, d);
    b.bq = row_zeros(d);
    b.wk = pixar::zeros(d, d);
    b.bk = row_zeros(d);
    b.wv = pixar::zeros(d, d);
    b.bv = row_zeros(d);
    b.wo = pixar::zeros(d, d);
    b.bo = row_zeros(d);
    b.ln2_gain = row_zeros(d);
    b.ln2_bias = row_zeros(d);
    b.w1 = pixar::zeros(d, config.ffn_dim);
    b.b1 = row_zeros(config.ffn_dim);
    b.w2 = pixar::zeros(config.ffn_dim, d);
    b.b2 = row_zeros(d);
  }
  p.final_ln_gain = row_zeros(d);
  p.final_ln_bias = row_zeros(d);
  p.output_weight = pixar::zeros(d, d);
  p.output_bias = row_zeros(d);
  p.token_vectors = pixar::zeros(config.vocab_size, d);
  return p;
}

ModelParams ModelParams::initialize(const ModelConfig& config, std::uint64_t seed) {
  ModelParams p = zeros(config);
  Rng rng = Rng::stream(seed, "model-init");
  const double d = static_cast<double>(config.hidden_dim);
  const double embed_std = 0.02;
  fill_normal(p.input_embedding, rng, embed_std);
  fill_normal(p.slot_embedding, rng, embed_std);
  fill_normal(p.position_embedding, rng, embed_std);
  for (auto& b : p.blocks) {
    b.ln1_gain.setOnes();
    b.ln2_gain.setOnes();
    for (Matrix* w : {&b.wq, &b.wk, &b.wv, &b.wo, &b.w1}) fill_normal(*w, rng, 1.0 / std::sqrt(d));
    fill_normal(b.w2, rng, 1.0 / std::sqrt(static_cast<double>(config.ffn_dim)));
  }
  p.final_ln_gain.setOnes();
  fill_normal(p.output_weight, rng, 1.0 / std::sqrt(d));
  fill_normal(p.token_vectors, rng, embed_std);
  return p;
}

std::vector<Matrix*> ModelParams::tensors() {
  std::vector<Matrix*> out = {&input_embedding, &slot_embedding, &position_embedding};
  for (auto& b : blocks) {
    for (Matrix* m : {&b.ln1_gain, &b.ln1_bias, &b.wq, &b.bq, &b.wk, &b.bk, &b.wv, &b.bv, &b.wo,
                      &b.bo, &b.ln2_gain, &b.ln2_bias, &b.w1, &b.b1, &b.w2, &b.b2}) {
      out.push_back(m);
    }
  }
  for (Matrix* m : {&final_ln_gain, &final_ln_bias, &output_weight, &output_bias, &token_vectors}) {
    out.push_back(m);
  }
  return out;
}

std::vector<const Matrix*> ModelParams::tensors() const {
  auto mutable_list = const_cast<ModelParams*>(this)->tensors();
  return {mutable_list.begin(), mutable_list.end()};
}

std::vector<std::string> ModelParams::tensor_names(const ModelConfig& config) {
  std::vector<std::string> names = {"input_embedding", "slot_embedding", "position_embedding"};
  for (std::size_t l = 0; l < config.layers; ++l) {
    for (const char* n : {"ln1_gain", "ln1_bias", "wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo",
                          "ln2_gain", "ln2_bias", "w1", "b1", "w2", "b2"}) {
      names.push_back("block" + std::to_string(l) + "." + n);
    }
  }
  for (const char* n : {"final_ln_gain", "final_ln_bias", "output_weight", "output_bias",
                        "token_vectors"}) {
    names.emplace_back(n);
  }
  return names;
}

bool ModelParams::all_finite() const {
  for (const Matrix* m : tensors()) {
    if (!m->allFinite()) return false;
  }
  return true;
}

bool operator==(const ModelParams& a, const ModelParams& b) {
  if (!(a.config == b.config) || a.vocab_hash != b.vocab_hash) return false;
  const auto ta = a.tensors();
  const auto tb = b.tensors();
  for (std::size_t i = 0; i < ta.size(); ++i) {
    if (*ta[i] != *tb[i]) return false;
  }
  return true;
}

// Layout: magic "PIXM", u32 version, u64 vocab_hash, eight u64 config fields
// (vocab_size, hidden_dim, layers, heads, ffn_dim, output_len, input_buckets,
// max_query_tokens), then each tensor of tensors() as row-major f64, then a
// u64 FNV-1a checksum of everything before it.
std::vector<std::uint8_t> ModelParams::serialize() const {
  io::ByteWriter w(kMagic, kVersion);
  w.u64(vocab_hash);
  for (std::size_t v : {config.vocab_size, config.hidden_dim, config.layers, config.heads,
                        config.ffn_dim, config.output_len, config.input_buckets,
                        config.max_query_tokens}) {
    w.u64(v);
  }
  for (const Matrix* m : tensors()) {
    w.f64_array(std::span(m->data(), static_cast<std::size_t>(m->size())));
  }
  return std::move(w).finish();
}

ModelParams ModelParams::deserialize(std::vector<std::uint8_t> image, const std::string& source) {
  io::ByteReader r(std::move(image), kMagic, kVersion, source);
  const std::uint64_t hash = r.u64();
  ModelConfig c;
  for (std::size_t* field : {&c.vocab_size, &c.hidden_dim, &c.layers, &c.heads, &c.ffn_dim,
                             &c.output_len, &c.input_buckets, &c.max_query_tokens}) {
    *field = static_cast<std::size_t>(r.u64());
  }
  try {
    c.validate();
  } catch (const InvalidArgument& e) {
    r.fail(e.what());
  }
  if (c.hidden_dim > (1u << 16) || c.layers > 1024 || c.vocab_size > (1ull << 32)) {
    r.fail("implausible model dimensions");
  }
  ModelParams p = zeros(c);
  p.vocab_hash = hash;
  for (Matrix* m : p.tensors()) {
    r.f64_array(std::span(m->data(), static_cast<std::size_t>(m->size())));
  }
  r.expect_end();
  return p;
}

void ModelParams::save(const std::filesystem::path& path) const {
  io::write_file(path, serialize());
}

ModelParams ModelParams::load(const std::filesystem::path& path) {
  return deserialize(io::read_file(path), path.string());
}

InputTokens tokenize_query(std::string_view query, const ModelConfig& config) {
  InputTokens out;
  std::string word;
  auto flush = [&] {
    if (word.empty()) return;
    if (out.buckets.size() < config.max_query_tokens) {
      out.buckets.push_back(1 + static_cast<std::uint32_t>(io::fnv1a(word) % config.input_buckets));
    } else {
      out.truncated = true;
    }
    word.clear();
  };
  for (const auto& cp : text::decode_utf8(query)) {
    const auto cls = text::classify(cp.value);
    if (cls == text::CharClass::kSpace) {
      flush();
    } else if (cls == text::CharClass::kPunct) {
      flush();
      word.assign(query.substr(cp.offset, cp.length));
      flush();
    } else {
      for (std::size_t i = 0; i < cp.length; ++i) {
        const char ch = query[cp.offset + i];
        word.push_back(ch >= 'A' && ch <= 'Z' ? static_cast<char>(ch - 'A' + 'a') : ch);
      }
    }
  }
  flush();
  return out;
}

QueryEncoding encode(const ModelParams& params, std::string_view query) {
  return encode_tokens(params, tokenize_query(query, params.config));
}

QueryEncoding encode_tokens(const ModelParams& params, const InputTokens& input,
                            EncoderCache* cache) {
  const ModelConfig& c = params.config;
  const std::size_t q = std::min(input.buckets.size(), c.max_query_tokens);
  const auto n = static_cast<Eigen::Index>(1 + q + c.output_len);
  const auto d = static_cast<Eigen::Index>(c.hidden_dim);
  const auto dh = static_cast<Eigen::Index>(c.hidden_dim / c.heads);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  EncoderCache local;
  EncoderCache& st = cache != nullptr ? *cache : local;
  const bool keep = cache != nullptr;
  st.rows.assign(1, 0);
  for (std::size_t i = 0; i < q; ++i) st.rows.push_back(input.buckets[i]);

  Matrix h(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (i <= static_cast<Eigen::Index>(q)) {
      h.row(i) = params.input_embedding.row(st.rows[static_cast<std::size_t>(i)]);
    } else {
      h.row(i) = params.slot_embedding.row(i - 1 - static_cast<Eigen::Index>(q));
    }
    h.row(i) += params.position_embedding.row(i);
  }

  st.blocks.resize(keep ? params.blocks.size() : 0);
  for (std::size_t l = 0; l < params.blocks.size(); ++l) {
    const EncoderBlock& b = params.blocks[l];
    EncoderCache::Block tmp;
    EncoderCache::Block& bc = keep ? st.blocks[l] : tmp;
    bc.input = h;
    bc.attn_in = layer_norm(h, b.ln1_gain, b.ln1_bias, &bc.ln1);
    bc.q = affine(bc.attn_in, b.wq, b.bq);
    bc.k = affine(bc.attn_in, b.wk, b.bk);
    bc.v = affine(bc.attn_in, b.wv, b.bv);
    bc.attn_out.resize(n, d);
    bc.probs.resize(c.heads);
    for (std::size_t hd = 0; hd < c.heads; ++hd) {
      const Eigen::Index off = static_cast<Eigen::Index>(hd) * dh;
      Matrix scores = bc.q.middleCols(off, dh) * bc.k.middleCols(off, dh).transpose() * scale;
      softmax_rows(scores);
      bc.attn_out.middleCols(off, dh) = scores * bc.v.middleCols(off, dh);
      bc.probs[hd] = std::move(scores);
    }
    bc.mid = h + affine(bc.attn_out, b.wo, b.bo);
    bc.ffn_in = layer_norm(bc.mid, b.ln2_gain, b.ln2_bias, &bc.ln2);
    bc.pre_act = affine(bc.ffn_in, b.w1, b.b1);
    bc.act = bc.pre_act.unaryExpr([](double u) { return gelu(u); });
    h = bc.mid + affine(bc.act, b.w2, b.b2);
  }

  st.final_in = h;
  st.final_out = layer_norm(h, params.final_ln_gain, params.final_ln_bias, &st.final_ln);
  st.output_rows.assign(1, 0);
  for (std::size_t t = 0; t < c.output_len; ++t) {
    st.output_rows.push_back(static_cast<Eigen::Index>(1 + q + t));
  }
  Matrix selected(static_cast<Eigen::Index>(st.output_rows.size()), d);
  for (std::size_t r = 0; r < st.output_rows.size(); ++r) {
    selected.row(static_cast<Eigen::Index>(r)) = st.final_out.row(st.output_rows[r]);
  }
  QueryEncoding enc;
  enc.vectors = affine(selected, params.output_weight, params.output_bias);
  enc.truncated = input.truncated || input.buckets.size() > c.max_query_tokens;
  return enc;
}

void encode_backward(const ModelParams& params, const EncoderCache& cache,
                     const Matrix& d_encoding, ModelParams& grads) {
  const ModelConfig& c = params.config;
  const Eigen::Index n = cache.final_out.rows();
  const auto d = static_cast<Eigen::Index>(c.hidden_dim);
  const auto dh = static_cast<Eigen::Index>(c.hidden_dim / c.heads);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  if (cache.blocks.size() != params.blocks.size()) {
    throw InvalidArgument("encode_backward needs a cache filled by encode_tokens");
  }

  Matrix selected(static_cast<Eigen::Index>(cache.output_rows.size()), d);
  for (std::size_t r = 0; r < cache.output_rows.size(); ++r) {
    selected.row(static_cast<Eigen::Index>(r)) = cache.final_out.row(cache.output_rows[r]);
  }
  grads.output_weight.noalias() += selected.transpose() * d_encoding;
  grads.output_bias.row(0) += d_encoding.colwise().sum();
  const Matrix d_selected = d_encoding * params.output_weight.transpose();
  Matrix d_final = Matrix::Zero(n, d);
  for (std::size_t r = 0; r < cache.output_rows.size(); ++r) {
    d_final.row(cache.output_rows[r]) += d_selected.row(static_cast<Eigen::Index>(r));
  }
  Matrix dh_stream = layer_norm_backward(d_final, params.final_ln_gain, cache.final_ln,
                                         grads.final_ln_gain, grads.final_ln_bias);

  for (std::size_t l = params.blocks.size(); l-- > 0;) {
    const EncoderBlock& b = params.blocks[l];
    EncoderBlock& g = grads.blocks[l];
    const EncoderCache::Block& bc = cache.blocks[l];

    // Feed-forward sublayer.
    g.w2.noalias() += bc.act.transpose() * dh_stream;
    g.b2.row(0) += dh_stream.colwise().sum();
    const Matrix d_act = dh_stream * b.w2.transpose();
    const Matrix d_pre =
        d_act.array() * bc.pre_act.unaryExpr([](double u) { return gelu_grad(u); }).array();
    g.w1.noalias() += bc.ffn_in.transpose() * d_pre;
    g.b1.row(0) += d_pre.colwise().sum();
    const Matrix d_ffn_in = d_pre * b.w1.transpose();
    Matrix d_mid = dh_stream + layer_norm_backward(d_ffn_in, b.ln2_gain, bc.ln2, g.ln2_gain, g.ln2_bias);

    // Attention sublayer.
    g.wo.noalias() += bc.attn_out.transpose() * d_mid;
    g.bo.row(0) += d_mid.colwise().sum();
    const Matrix d_attn_out = d_mid * b.wo.transpose();
    Matrix dq(n, d), dk(n, d), dv(n, d);
    for (std::size_t hd = 0; hd < c.heads; ++hd) {
      const Eigen::Index off = static_cast<Eigen::Index>(hd) * dh;
      const Matrix& p = bc.probs[hd];
      const Matrix d_out = d_attn_out.middleCols(off, dh);
      const Matrix d_p = d_out * bc.v.middleCols(off, dh).transpose();
      dv.middleCols(off, dh) = p.transpose() * d_out;
      Matrix d_scores = p.array() * (d_p.array().colwise() - (d_p.array() * p.array()).rowwise().sum());
      d_scores *= scale;
      dq.middleCols(off, dh) = d_scores * bc.k.middleCols(off, dh);
      dk.middleCols(off, dh) = d_scores.transpose() * bc.q.middleCols(off, dh);
    }
    g.wq.noalias() += bc.attn_in.transpose() * dq;
    g.bq.row(0) += dq.colwise().sum();
    g.wk.noalias() += bc.attn_in.transpose() * dk;
    g.bk.row(0) += dk.colwise().sum();
    g.wv.noalias() += bc.attn_in.transpose() * dv;
    g.bv.row(0) += dv.colwise().sum();
    const Matrix d_attn_in =
        dq * b.wq.transpose() + dk * b.wk.transpose() + dv * b.wv.transpose();
    dh_stream = d_mid + layer_norm_backward(d_attn_in, b.ln1_gain, bc.ln1, g.ln1_gain, g.ln1_bias);
  }

  const auto q = static_cast<Eigen::Index>(cache.rows.size()) - 1;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (i <= q) {
      grads.input_embedding.row(cache.rows[static_cast<std::size_t>(i)]) += dh_stream.row(i);
    } else {
      grads.slot_embedding.row(i - 1 - q) += dh_stream.row(i);
    }
    grads.position_embedding.row(i) += dh_stream.row(i);
  }
}

}  // namespace pixar
