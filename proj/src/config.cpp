#include "pixar/config.hpp"

#include <charconv>
#include <cmath>
#include <sstream>
#include <variant>

#include "pixar/binary_io.hpp"
#include "pixar/error.hpp"
#include "pixar/text.hpp"

namespace pixar {

namespace {

using Member = std::variant<std::string RunConfig::*, std::size_t RunConfig::*,
                            double RunConfig::*, bool RunConfig::*>;

struct Field {
  const char* name;
  Member member;
  const char* help;
};

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {"corpus", &RunConfig::corpus, "docid file, one per line"},
      {"pairs", &RunConfig::pairs, "training pairs, query<TAB>docid"},
      {"vocab", &RunConfig::vocab, "vocabulary file"},
      {"model", &RunConfig::model, "model file"},
      {"index", &RunConfig::index, "shortlist index file"},
      {"trie", &RunConfig::trie, "docid trie file"},
      {"evalset", &RunConfig::evalset, "evaluation set, query<TAB>docid|docid..."},
      {"queries", &RunConfig::queries, "query file, one per line"},
      {"output", &RunConfig::output, "output path"},
      {"vocab_size", &RunConfig::vocab_size, "target vocabulary size, reserved tokens included"},
      {"max_len", &RunConfig::max_len, "longest candidate token in characters"},
      {"min_occur", &RunConfig::min_occur, "minimum candidate occurrences"},
      {"hidden_dim", &RunConfig::hidden_dim, "encoder width"},
      {"layers", &RunConfig::layers, "encoder blocks"},
      {"heads", &RunConfig::heads, "attention heads"},
      {"ffn_dim", &RunConfig::ffn_dim, "feed-forward width"},
      {"output_len", &RunConfig::output_len, "output positions; 0 uses the longest docid"},
      {"input_buckets", &RunConfig::input_buckets, "hashed query word buckets"},
      {"max_query_tokens", &RunConfig::max_query_tokens, "query words kept"},
      {"lambda2", &RunConfig::lambda2, "weight of the shortlist cross-entropy"},
      {"lambda3", &RunConfig::lambda3, "weight of the self-normalization term"},
      {"mask_pad", &RunConfig::mask_pad, "drop PAD positions from the losses"},
      {"learning_rate", &RunConfig::learning_rate, "peak Adam learning rate"},
      {"epochs", &RunConfig::epochs, "training epochs"},
      {"batch_size", &RunConfig::batch_size, "training batch size"},
      {"warmup_steps", &RunConfig::warmup_steps, "linear warmup steps"},
      {"clusters", &RunConfig::clusters, "number of centroids"},
      {"set_size", &RunConfig::set_size, "tokens kept per centroid"},
      {"probe", &RunConfig::probe, "centroids probed per query"},
      {"cluster_epochs", &RunConfig::cluster_epochs, "centroid assignment rounds"},
      {"cluster_steps", &RunConfig::cluster_steps, "Adam steps per assignment round"},
      {"cluster_learning_rate", &RunConfig::cluster_learning_rate, "centroid learning rate"},
      {"beam", &RunConfig::beam, "beam width"},
      {"top_n", &RunConfig::top_n, "results per query"},
      {"rerank_cap", &RunConfig::rerank_cap, "candidate tokens per position"},
      {"metrics_k", &RunConfig::metrics_k, "comma separated metric cutoffs"},
      {"bench_warmup", &RunConfig::bench_warmup, "untimed queries before benchmarking"},
  };
  return table;
}

const Field* find_field(std::string_view key) {
  for (const auto& f : fields()) {
    if (key == f.name) return &f;
  }
  return nullptr;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::uint64_t parse_uint(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || p != v.data() + v.size()) {
    throw InvalidArgument("'" + std::string(key) + "' expects a non-negative integer, got '" +
                          std::string(v) + "'");
  }
  return out;
}

double parse_double(std::string_view key, std::string_view v) {
  const std::string s(v);
  std::size_t used = 0;
  double out = 0;
  try {
    out = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (s.empty() || used != s.size() || !std::isfinite(out)) {
    throw InvalidArgument("'" + std::string(key) + "' expects a number, got '" + s + "'");
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  throw InvalidArgument("'" + std::string(key) + "' expects true or false, got '" +
                        std::string(v) + "'");
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

const std::vector<RunConfig::Key>& RunConfig::keys() {
  static const std::vector<Key> out = [] {
    std::vector<Key> k;
    for (const auto& f : fields()) k.push_back({f.name, f.help});
    k.push_back({"seed", "random seed, required by train and train-clusters"});
    return k;
  }();
  return out;
}

void RunConfig::set(std::string_view key, std::string_view value) {
  if (key == "seed") {
    seed = parse_uint(key, value);
    return;
  }
  const Field* f = find_field(key);
  if (f == nullptr) throw InvalidArgument("unknown config key '" + std::string(key) + "'");
  std::visit(
      [&](auto member) {
        using T = std::remove_reference_t<decltype(this->*member)>;
        if constexpr (std::is_same_v<T, std::string>) {
          this->*member = std::string(value);
        } else if constexpr (std::is_same_v<T, std::size_t>) {
          this->*member = static_cast<std::size_t>(parse_uint(key, value));
        } else if constexpr (std::is_same_v<T, double>) {
          this->*member = parse_double(key, value);
        } else {
          this->*member = parse_bool(key, value);
        }
      },
      f->member);
}

std::string RunConfig::get(std::string_view key) const {
  if (key == "seed") return seed ? std::to_string(*seed) : std::string();
  const Field* f = find_field(key);
  if (f == nullptr) throw InvalidArgument("unknown config key '" + std::string(key) + "'");
  return std::visit(
      [&](auto member) -> std::string {
        const auto& v = this->*member;
        using T = std::remove_cvref_t<decltype(v)>;
        if constexpr (std::is_same_v<T, std::string>) {
          return v;
        } else if constexpr (std::is_same_v<T, std::size_t>) {
          return std::to_string(v);
        } else if constexpr (std::is_same_v<T, double>) {
          return format_double(v);
        } else {
          return v ? "true" : "false";
        }
      },
      f->member);
}

RunConfig RunConfig::parse(std::string_view text, const std::string& source) {
  RunConfig cfg;
  std::size_t line_no = 0;
  for (auto line : text::split(text, '\n')) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string_view::npos) line = line.substr(0, hash);
    const std::string l = trim(line);
    if (l.empty()) continue;
    const auto eq = l.find('=');
    if (eq == std::string::npos) {
      throw InvalidArgument(source + ":" + std::to_string(line_no) + ": expected key=value");
    }
    try {
      cfg.set(trim(std::string_view(l).substr(0, eq)), trim(std::string_view(l).substr(eq + 1)));
    } catch (const InvalidArgument& e) {
      throw InvalidArgument(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  return parse(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()),
               path.string());
}

std::string RunConfig::dump() const {
  std::string out;
  for (const auto& k : keys()) {
    const auto v = get(k.name);
    if (k.name == "seed" && v.empty()) {
      out += "# seed=\n";
      continue;
    }
    out += k.name + "=" + v + "\n";
  }
  return out;
}

void RunConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw InvalidArgument(std::string(name) + " must be positive");
  };
  positive(max_len, "max_len");
  positive(min_occur, "min_occur");
  positive(hidden_dim, "hidden_dim");
  positive(layers, "layers");
  positive(heads, "heads");
  positive(ffn_dim, "ffn_dim");
  positive(input_buckets, "input_buckets");
  positive(max_query_tokens, "max_query_tokens");
  positive(batch_size, "batch_size");
  positive(clusters, "clusters");
  positive(set_size, "set_size");
  positive(probe, "probe");
  if (hidden_dim % heads != 0) throw InvalidArgument("hidden_dim must be divisible by heads");
  if (probe > clusters) throw InvalidArgument("probe must not exceed clusters");
  if (lambda2 < 0 || lambda3 < 0) throw InvalidArgument("loss weights must be non-negative");
  if (!(learning_rate > 0)) throw InvalidArgument("learning_rate must be positive");
  if (!(cluster_learning_rate > 0)) throw InvalidArgument("cluster_learning_rate must be positive");
  decode_options().validate();
  metric_cutoffs();
}

const std::string& RunConfig::require_path(std::string_view path_key) const {
  const Field* f = find_field(path_key);
  if (f == nullptr || !std::holds_alternative<std::string RunConfig::*>(f->member)) {
    throw InvalidArgument("not a path key: " + std::string(path_key));
  }
  const auto& v = this->*std::get<std::string RunConfig::*>(f->member);
  if (v.empty()) throw InvalidArgument("missing required path '" + std::string(path_key) + "'");
  return v;
}

std::uint64_t RunConfig::require_seed(std::string_view command) const {
  if (!seed) throw InvalidArgument(std::string(command) + " requires an explicit seed");
  return *seed;
}

std::vector<int> RunConfig::metric_cutoffs() const {
  std::vector<int> ks;
  for (const auto& part : text::split(metrics_k, ',')) {
    const auto t = trim(part);
    const auto v = parse_uint("metrics_k", t);
    if (v == 0 || v > 1000000) throw InvalidArgument("metric cutoffs must be in [1, 1000000]");
    ks.push_back(static_cast<int>(v));
  }
  if (ks.empty()) throw InvalidArgument("metrics_k is empty");
  return ks;
}

ModelConfig RunConfig::model_config(std::size_t vocab_size_, std::size_t output_len_) const {
  ModelConfig c;
  c.vocab_size = vocab_size_;
  c.hidden_dim = hidden_dim;
  c.layers = layers;
  c.heads = heads;
  c.ffn_dim = ffn_dim;
  c.output_len = output_len_;
  c.input_buckets = input_buckets;
  c.max_query_tokens = max_query_tokens;
  c.validate();
  return c;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.epochs = epochs;
  t.batch_size = batch_size;
  t.learning_rate = learning_rate;
  t.warmup_steps = warmup_steps;
  t.seed = seed.value_or(0);
  t.weights.position = 1.0;
  t.weights.shortlist = lambda2;
  t.weights.selfnorm = lambda3;
  t.weights.mask_pad = mask_pad;
  return t;
}

ShortlistConfig RunConfig::shortlist_config() const {
  ShortlistConfig s;
  s.clusters = clusters;
  s.set_size = set_size;
  s.probe = probe;
  s.epochs = cluster_epochs;
  s.steps_per_epoch = cluster_steps;
  s.learning_rate = cluster_learning_rate;
  s.seed = seed.value_or(0);
  s.mask_pad = mask_pad;
  return s;
}

DecodeOptions RunConfig::decode_options() const {
  DecodeOptions d;
  d.beam = beam;
  d.top_n = top_n;
  d.rerank_cap = rerank_cap;
  return d;
}

}  // namespace pixar
