#pragma once

// File formats: UCI bag-of-words corpora, vocabularies, tree specs, model
// JSON and trace CSV.

#include "common.hpp"
#include "dtree.hpp"
#include "model.hpp"
#include "tree.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ldta {

class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string location(const std::string& path, std::size_t line) {
  return path + ":" + std::to_string(line) + ": ";
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  return in;
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path + "'");
  return out;
}

// Parses a non-negative integer occupying the whole token.
inline std::optional<std::uint64_t> parse_count(const std::string& tok) {
  if (tok.empty() || tok.find_first_not_of("0123456789") != std::string::npos) return std::nullopt;
  try {
    return std::stoull(tok);
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

}  // namespace detail

/// UCI bag-of-words: M, V, NNZ on the first three lines, then
/// "docID wordID count" triples with 1-based ids and ascending docID.
inline Corpus read_corpus(std::istream& in, const std::string& name = "<corpus>") {
  std::string line;
  std::size_t lineno = 0;
  std::uint64_t header[3];
  for (int i = 0; i < 3; ++i) {
    std::optional<std::uint64_t> v;
    while (std::getline(in, line)) {
      ++lineno;
      std::istringstream ss(line);
      std::string tok, extra;
      if (!(ss >> tok)) continue;
      if (ss >> extra) throw InputError(detail::location(name, lineno) + "malformed header line");
      v = detail::parse_count(tok);
      if (!v) throw InputError(detail::location(name, lineno) + "malformed header value '" + tok + "'");
      break;
    }
    if (!v) throw InputError(name + ": truncated header");
    header[i] = *v;
  }
  const std::uint64_t M = header[0], V = header[1], NNZ = header[2];
  if (V == 0) throw InputError(name + ": vocabulary size must be positive");
  std::vector<std::map<std::size_t, double>> docs(M);
  std::uint64_t seen = 0;
  std::uint64_t last_doc = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ss(line);
    std::string a, b, c, extra;
    if (!(ss >> a)) continue;
    if (!(ss >> b >> c) || (ss >> extra)) {
      throw InputError(detail::location(name, lineno) + "expected 'docID wordID count'");
    }
    const auto d = detail::parse_count(a), w = detail::parse_count(b), n = detail::parse_count(c);
    if (!d || !w || !n) throw InputError(detail::location(name, lineno) + "non-integer field");
    if (*d < 1 || *d > M) throw InputError(detail::location(name, lineno) + "document id out of range");
    if (*w < 1 || *w > V) throw InputError(detail::location(name, lineno) + "word id out of range");
    if (*n < 1) throw InputError(detail::location(name, lineno) + "count must be positive");
    if (*d < last_doc) throw InputError(detail::location(name, lineno) + "document ids must ascend");
    last_doc = *d;
    docs[*d - 1][*w - 1] += double(*n);
    ++seen;
  }
  if (seen != NNZ) {
    throw InputError(name + ": header announces " + std::to_string(NNZ) + " entries, found " +
                     std::to_string(seen));
  }
  Corpus corpus;
  corpus.V = V;
  corpus.docs.reserve(M);
  for (std::size_t m = 0; m < M; ++m) {
    if (docs[m].empty()) throw InputError(name + ": document " + std::to_string(m + 1) + " is empty");
    Document doc;
    doc.counts.resize(ix(docs[m].size()));
    for (const auto& [w, n] : docs[m]) {
      doc.counts(ix(doc.words.size())) = n;
      doc.words.push_back(w);
    }
    corpus.docs.push_back(std::move(doc));
  }
  return corpus;
}

inline std::vector<std::string> read_vocab(std::istream& in) {
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.push_back(line);
  }
  return out;
}

inline Corpus load_corpus(const std::string& path, const std::string& vocab_path = {}) {
  auto in = detail::open_input(path);
  Corpus corpus = read_corpus(in, path);
  if (!vocab_path.empty()) {
    auto vin = detail::open_input(vocab_path);
    corpus.vocab = read_vocab(vin);
    if (corpus.vocab.size() != corpus.V) {
      throw InputError(vocab_path + ": " + std::to_string(corpus.vocab.size()) +
                       " tokens but the corpus has V = " + std::to_string(corpus.V));
    }
  }
  return corpus;
}

inline void write_corpus(std::ostream& out, const Corpus& corpus) {
  std::size_t nnz = 0;
  for (const auto& d : corpus.docs) nnz += d.size();
  out << corpus.size() << '\n' << corpus.V << '\n' << nnz << '\n';
  for (std::size_t m = 0; m < corpus.size(); ++m) {
    const Document& d = corpus.docs[m];
    for (std::size_t j = 0; j < d.size(); ++j) {
      out << m + 1 << ' ' << d.words[j] + 1 << ' ' << static_cast<std::uint64_t>(d.counts(ix(j)))
          << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// Tree specs: "child parent [xi=<float>]" per line, '#' comments.

struct TreeSpec {
  std::shared_ptr<const TreeTopology> topology;
  Vector xi;  // initial branch parameters, default 1.0
};

inline TreeSpec read_tree_spec(std::istream& in, const std::string& name = "<tree>") {
  std::vector<Edge> edges;
  std::map<std::string, double> initial;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ss(line);
    std::string child, parent, opt, extra;
    if (!(ss >> child)) continue;
    if (!(ss >> parent)) throw InputError(detail::location(name, lineno) + "expected 'child parent'");
    if (ss >> opt) {
      if (opt.rfind("xi=", 0) != 0 || (ss >> extra)) {
        throw InputError(detail::location(name, lineno) + "unexpected token '" + opt + "'");
      }
      double value = 0.0;
      try {
        std::size_t used = 0;
        value = std::stod(opt.substr(3), &used);
        if (used != opt.size() - 3) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw InputError(detail::location(name, lineno) + "bad xi value '" + opt + "'");
      }
      if (!(value > 0.0) || !std::isfinite(value)) {
        throw InputError(detail::location(name, lineno) + "xi must be positive");
      }
      initial[child] = value;
    }
    edges.push_back({child, parent});
  }
  TreeSpec spec;
  try {
    spec.topology = std::make_shared<const TreeTopology>(TreeTopology::from_edges(edges));
  } catch (const TopologyError& e) {
    throw InputError(name + ": " + e.what());
  }
  spec.xi = Vector::Ones(ix(spec.topology->branch_count()));
  for (const auto& [label, value] : initial) {
    spec.xi(ix(*spec.topology->find(label) - 1)) = value;
  }
  return spec;
}

inline TreeSpec load_tree_spec(const std::string& path) {
  auto in = detail::open_input(path);
  return read_tree_spec(in, path);
}

// ---------------------------------------------------------------------------
// Model files.

inline constexpr int kModelFormatVersion = 1;

struct TrainingInfo {
  std::string backend;
  int iterations = 0;
  double objective = 0.0;
  bool converged = false;
  std::uint64_t seed = 0;
};

struct ModelFile {
  ModelParams params;
  std::optional<std::string> vocab_checksum;
  TrainingInfo training;
};

/// FNV-1a (64 bit) over the tokens, each terminated by '\n'.
inline std::string vocab_checksum(const std::vector<std::string>& vocab) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](unsigned char c) {
    h ^= c;
    h *= 0x100000001b3ULL;
  };
  for (const auto& tok : vocab) {
    for (unsigned char c : tok) mix(c);
    mix('\n');
  }
  std::ostringstream ss;
  ss << std::hex << std::setw(16) << std::setfill('0') << h;
  return ss.str();
}

inline nlohmann::json model_to_json(const ModelFile& file) {
  using nlohmann::json;
  const ModelParams& p = file.params;
  json j;
  j["format_version"] = kModelFormatVersion;
  j["K"] = p.K();
  j["V"] = p.V();
  json edges = json::array();
  for (const Edge& e : p.prior.topology().edges()) edges.push_back({e.child, e.parent});
  j["topology"] = edges;
  j["xi"] = std::vector<double>(p.prior.xi().data(), p.prior.xi().data() + p.prior.xi().size());
  json rows = json::array();
  for (Eigen::Index v = 0; v < p.word_topic.rows(); ++v) {
    json row = json::array();
    for (Eigen::Index k = 0; k < p.word_topic.cols(); ++k) row.push_back(p.word_topic(v, k));
    rows.push_back(std::move(row));
  }
  j["word_topic"] = rows;
  j["vocab_checksum"] = file.vocab_checksum ? json(*file.vocab_checksum) : json(nullptr);
  j["training"] = {{"backend", file.training.backend},
                   {"iterations", file.training.iterations},
                   {"objective", file.training.objective},
                   {"converged", file.training.converged},
                   {"seed", file.training.seed}};
  return j;
}

inline ModelFile model_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format_version").get<int>() != kModelFormatVersion) {
      throw InputError("model: unsupported format_version");
    }
    const auto K = j.at("K").get<std::size_t>();
    const auto V = j.at("V").get<std::size_t>();
    std::vector<Edge> edges;
    for (const auto& e : j.at("topology")) {
      edges.push_back({e.at(0).get<std::string>(), e.at(1).get<std::string>()});
    }
    auto topo = std::make_shared<const TreeTopology>(TreeTopology::from_edges(edges));
    const auto xi_raw = j.at("xi").get<std::vector<double>>();
    Vector xi = Eigen::Map<const Vector>(xi_raw.data(), ix(xi_raw.size()));
    DirichletTree prior(topo, std::move(xi));
    if (prior.leaf_count() != K) throw InputError("model: K does not match the topology");
    const auto& rows = j.at("word_topic");
    if (rows.size() != V) throw InputError("model: word_topic must have V rows");
    Matrix phi(ix(V), ix(K));
    for (std::size_t v = 0; v < V; ++v) {
      if (rows[v].size() != K) throw InputError("model: word_topic rows must have K entries");
      for (std::size_t k = 0; k < K; ++k) phi(ix(v), ix(k)) = rows[v][k].get<double>();
    }
    ModelFile file{ModelParams{std::move(prior), std::move(phi)}, std::nullopt, {}};
    file.params.validate();
    if (!j.at("vocab_checksum").is_null()) file.vocab_checksum = j["vocab_checksum"].get<std::string>();
    const auto& t = j.at("training");
    file.training.backend = t.at("backend").get<std::string>();
    file.training.iterations = t.at("iterations").get<int>();
    file.training.objective = t.at("objective").get<double>();
    file.training.converged = t.at("converged").get<bool>();
    file.training.seed = t.at("seed").get<std::uint64_t>();
    return file;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("model: ") + e.what());
  } catch (const TopologyError& e) {
    throw InputError(std::string("model: ") + e.what());
  } catch (const ParameterError& e) {
    throw InputError(std::string("model: ") + e.what());
  }
}

inline std::string model_to_string(const ModelFile& file) { return model_to_json(file).dump(1) + "\n"; }

inline void save_model(const std::string& path, const ModelFile& file) {
  auto out = detail::open_output(path);
  out << model_to_string(file);
}

inline ModelFile load_model(const std::string& path) {
  auto in = detail::open_input(path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path + ": " + e.what());
  }
  return model_from_json(j);
}

/// CSV "iter,objective,seconds".
inline void write_trace(std::ostream& out, const std::vector<double>& trace,
                        const std::vector<double>& seconds) {
  out << "iter,objective,seconds\n";
  out << std::setprecision(17);
  for (std::size_t i = 0; i < trace.size(); ++i) {
    out << i + 1 << ',' << trace[i] << ',' << (i < seconds.size() ? seconds[i] : 0.0) << '\n';
  }
}

}  // namespace ldta
