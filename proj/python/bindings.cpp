#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "pixar/corpus.hpp"
#include "pixar/decoder.hpp"
#include "pixar/evaluation.hpp"
#include "pixar/shortlist.hpp"
#include "pixar/trainer.hpp"
#include "pixar/trie.hpp"
#include "pixar/vocabulary.hpp"

namespace py = pybind11;
using namespace pixar;

namespace {

std::vector<QueryDocPair> to_pairs(const std::vector<std::pair<std::string, std::string>>& pairs) {
  std::vector<QueryDocPair> out;
  out.reserve(pairs.size());
  for (const auto& [q, d] : pairs) out.push_back({q, d});
  return out;
}

py::list hits_to_list(const RankedResult& r) {
  py::list out;
  for (const auto& h : r.hits) out.append(py::make_tuple(h.docid, h.score));
  return out;
}

DecodeOptions options(std::size_t beam, std::size_t top_n, std::size_t cap) {
  DecodeOptions o;
  o.beam = beam;
  o.top_n = top_n;
  o.rerank_cap = cap;
  return o;
}

}  // namespace

PYBIND11_MODULE(_pixar, m) {
  m.doc() = "Non-autoregressive generative retrieval: vocabulary, encoder, shortlist and trie decoding.";

  auto error = py::register_exception<Error>(m, "Error");
  py::register_exception<InvalidArgument>(m, "InvalidArgument", error.ptr());
  py::register_exception<CorruptArtifact>(m, "CorruptArtifact", error.ptr());
  py::register_exception<IncompatibleArtifacts>(m, "IncompatibleArtifacts", error.ptr());
  py::register_exception<TrainingDiverged>(m, "TrainingDiverged", error.ptr());

  m.def(
      "generate_candidates",
      [](const std::vector<std::string>& docids, std::size_t max_len, std::uint64_t min_occur) {
        std::vector<std::pair<std::string, std::uint64_t>> out;
        for (const auto& c : generate_candidates(docids, max_len, min_occur)) {
          out.emplace_back(c.text, c.occurrences);
        }
        return out;
      },
      py::arg("docids"), py::arg("max_len") = 32, py::arg("min_occur") = 20,
      "Candidate tokens with their occurrence counts, sorted by text.");

  py::class_<Vocabulary>(m, "Vocabulary")
      .def(py::init<>(), "Reserved tokens only (character level).")
      .def_static(
          "from_tokens",
          [](const std::vector<std::string>& learned, const std::vector<std::uint64_t>& scores) {
            return Vocabulary::from_tokens(learned, scores);
          },
          py::arg("learned"), py::arg("scores") = std::vector<std::uint64_t>{})
      .def_static(
          "build",
          [](const std::vector<std::string>& docids, std::size_t size, std::size_t max_len,
             std::uint64_t min_occur) {
            return build_vocabulary(generate_candidates(docids, max_len, min_occur), docids, size);
          },
          py::arg("docids"), py::arg("size"), py::arg("max_len") = 32, py::arg("min_occur") = 20)
      .def_static("load", &Vocabulary::load)
      .def("save", &Vocabulary::save)
      .def("tokenize", &Vocabulary::tokenize)
      .def("detokenize",
           [](const Vocabulary& v, const std::vector<TokenId>& ids) { return v.detokenize(ids); })
      .def("token", &Vocabulary::token)
      .def("find", &Vocabulary::find)
      .def_property_readonly("content_hash", &Vocabulary::content_hash)
      .def("__len__", &Vocabulary::size)
      .def("__eq__", [](const Vocabulary& a, const Vocabulary& b) { return a == b; });

  py::class_<ModelConfig>(m, "ModelConfig")
      .def(py::init<>())
      .def_readwrite("vocab_size", &ModelConfig::vocab_size)
      .def_readwrite("hidden_dim", &ModelConfig::hidden_dim)
      .def_readwrite("layers", &ModelConfig::layers)
      .def_readwrite("heads", &ModelConfig::heads)
      .def_readwrite("ffn_dim", &ModelConfig::ffn_dim)
      .def_readwrite("output_len", &ModelConfig::output_len)
      .def_readwrite("input_buckets", &ModelConfig::input_buckets)
      .def_readwrite("max_query_tokens", &ModelConfig::max_query_tokens);

  py::class_<ModelParams>(m, "Model")
      .def_static(
          "initialize",
          [](const ModelConfig& c, const Vocabulary& vocab, std::uint64_t seed) {
            auto p = ModelParams::initialize(c, seed);
            p.vocab_hash = vocab.content_hash();
            return p;
          },
          py::arg("config"), py::arg("vocab"), py::arg("seed"))
      .def_static("load", &ModelParams::load)
      .def("save", &ModelParams::save)
      .def_readonly("config", &ModelParams::config)
      .def_readonly("vocab_hash", &ModelParams::vocab_hash)
      .def_property_readonly("token_vectors", [](const ModelParams& p) { return p.token_vectors; })
      .def(
          "encode", [](const ModelParams& p, const std::string& q) { return encode(p, q).vectors; },
          "Rows: shortlist embedding, then one vector per output position.")
      .def("__eq__", [](const ModelParams& a, const ModelParams& b) { return a == b; });

  m.def(
      "output_len_for",
      [](const Vocabulary& vocab, const std::vector<std::string>& docids) {
        return output_len_for(vocab, docids);
      },
      py::arg("vocab"), py::arg("docids"), "Token count of the longest docid.");

  m.def(
      "train",
      [](const ModelParams& params, const Vocabulary& vocab,
         const std::vector<std::pair<std::string, std::string>>& pairs, std::size_t epochs,
         std::size_t batch_size, double learning_rate, std::size_t warmup_steps,
         std::uint64_t seed, double lambda2, double lambda3,
         const std::function<void(std::size_t, double, double)>& on_epoch) {
        if (params.vocab_hash != vocab.content_hash()) {
          throw IncompatibleArtifacts("model and vocabulary hashes differ");
        }
        const auto examples = make_examples(vocab, params.config, to_pairs(pairs));
        TrainConfig tc;
        tc.epochs = epochs;
        tc.batch_size = batch_size;
        tc.learning_rate = learning_rate;
        tc.warmup_steps = warmup_steps;
        tc.seed = seed;
        tc.weights.shortlist = lambda2;
        tc.weights.selfnorm = lambda3;
        EpochCallback cb;
        if (on_epoch) {
          cb = [&](const EpochStats& e) {
            py::gil_scoped_acquire gil;
            on_epoch(e.epoch, e.mean_loss, e.mean_log2_partition);
          };
        }
        py::gil_scoped_release release;
        return train(params, examples, tc, cb);
      },
      py::arg("model"), py::arg("vocab"), py::arg("pairs"), py::arg("epochs") = 10,
      py::arg("batch_size") = 32, py::arg("learning_rate") = 1e-3, py::arg("warmup_steps") = 50,
      py::arg("seed") = 0, py::arg("lambda2") = 0.25, py::arg("lambda3") = 1.0,
      py::arg("on_epoch") = nullptr,
      "Returns the trained model; on_epoch(epoch, mean_loss, mean_log2_z) is called per epoch.");

  py::class_<DocidTrie>(m, "DocidTrie")
      .def_static(
          "build",
          [](const std::vector<std::string>& docids, const Vocabulary& vocab) {
            return DocidTrie::build(docids, vocab);
          },
          py::arg("docids"), py::arg("vocab"))
      .def_static("load", &DocidTrie::load)
      .def("save", &DocidTrie::save)
      .def_property_readonly("docids",
                             [](const DocidTrie& t) {
                               return std::vector<std::string>(t.docids().begin(), t.docids().end());
                             })
      .def_property_readonly("node_count", &DocidTrie::node_count)
      .def_property_readonly("max_depth", &DocidTrie::max_depth)
      .def_property_readonly("vocab_hash", &DocidTrie::vocab_hash)
      .def("__eq__", [](const DocidTrie& a, const DocidTrie& b) { return a == b; });

  py::class_<ShortlistIndex>(m, "ShortlistIndex")
      .def_static(
          "train",
          [](const ModelParams& params, const Vocabulary& vocab,
             const std::vector<std::pair<std::string, std::string>>& pairs, std::size_t clusters,
             std::size_t set_size, std::size_t probe, std::size_t epochs, std::uint64_t seed) {
            const auto examples = make_examples(vocab, params.config, to_pairs(pairs));
            ShortlistConfig sc;
            sc.clusters = clusters;
            sc.set_size = set_size;
            sc.probe = probe;
            sc.epochs = epochs;
            sc.seed = seed;
            py::gil_scoped_release release;
            return train_centroids(params, examples, sc);
          },
          py::arg("model"), py::arg("vocab"), py::arg("pairs"), py::arg("clusters") = 4096,
          py::arg("set_size") = 20000, py::arg("probe") = 5, py::arg("epochs") = 20,
          py::arg("seed") = 0)
      .def_static("load", &ShortlistIndex::load)
      .def("save", &ShortlistIndex::save)
      .def_property_readonly("clusters", &ShortlistIndex::clusters)
      .def_property_readonly("set_size", &ShortlistIndex::set_size)
      .def_property_readonly("probe", &ShortlistIndex::probe)
      .def_property_readonly("centroids", [](const ShortlistIndex& i) { return i.centroids(); })
      .def("shortlist",
           [](const ShortlistIndex& i, const ModelParams& p, const std::string& q) {
             return i.shortlist(encode(p, q).shortlist_embedding());
           },
           py::arg("model"), py::arg("query"), "Candidate token ids for a query.")
      .def("__eq__", [](const ShortlistIndex& a, const ShortlistIndex& b) { return a == b; });

  m.def(
      "decode",
      [](const std::string& query, const ModelParams& params, const ShortlistIndex& index,
         const DocidTrie& trie, std::size_t beam, std::size_t top_n, std::size_t cap) {
        check_compatible(params, &index, trie);
        return hits_to_list(decode(query, params, index, trie, options(beam, top_n, cap)));
      },
      py::arg("query"), py::arg("model"), py::arg("index"), py::arg("trie"), py::arg("beam") = 100,
      py::arg("top_n") = 100, py::arg("cap") = 512, "Ranked (docid, score) pairs.");
  m.def(
      "decode_full_softmax",
      [](const std::string& query, const ModelParams& params, const DocidTrie& trie,
         std::size_t beam, std::size_t top_n) {
        check_compatible(params, nullptr, trie);
        return hits_to_list(decode_full_softmax(query, params, trie, options(beam, top_n, 512)));
      },
      py::arg("query"), py::arg("model"), py::arg("trie"), py::arg("beam") = 100,
      py::arg("top_n") = 100);

  using Rankings = std::vector<std::vector<std::string>>;
  m.def("mrr_at_k", [](const Rankings& r, const Rankings& g, int k) { return mrr_at_k(r, g, k); });
  m.def("recall_at_k", [](const Rankings& r, const Rankings& g, int k) { return recall_at_k(r, g, k); });
  m.def("hits_at_k", [](const Rankings& r, const Rankings& g, int k) { return hits_at_k(r, g, k); });
  m.def("precision_at_k",
        [](const Rankings& r, const Rankings& g, int k) { return precision_at_k(r, g, k); });

  m.def("load_docids", &load_docids);
  m.def("load_pairs", [](const std::filesystem::path& p) {
    std::vector<std::pair<std::string, std::string>> out;
    for (auto& q : load_pairs(p)) out.emplace_back(std::move(q.query), std::move(q.docid));
    return out;
  });
}
