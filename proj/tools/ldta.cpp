// ldta: train, infer, evaluate and sample Latent Dirichlet-Tree Allocation
// models from the command line.
//
// Exit codes: 0 ok, 1 usage, 2 input or file error, 3 numerical failure,
// 4 training finished without converging (the model is still written).

#include "ldta/ep.hpp"
#include "ldta/eval.hpp"
#include "ldta/io.hpp"
#include "ldta/mfvi.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

namespace {

using namespace ldta;

enum Exit { kOk = 0, kUsage = 1, kInput = 2, kNumerical = 3, kNotConverged = 4 };

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string corpus, vocab, prior = "dirichlet", tree, inference = "vi";
  std::string out, model, trace, metrics = "perplexity,coherence,diversity", topics_table;
  std::string save_model;
  std::size_t topics = 0, top_n = 10, threads = 1, docs = 100, vocab_size = 0;
  int max_iters = 100;
  double tol = 1e-4, damping = 1.0, mean_length = 100.0, concentration = 1.0;
  std::uint64_t seed = 1;
  bool normalize_columns = false;
};

DirichletTree build_prior(const Options& o) {
  if (!o.tree.empty()) {
    const TreeSpec spec = load_tree_spec(o.tree);
    if (o.topics && o.topics != spec.topology->leaf_count()) {
      throw UsageError("--topics disagrees with the number of leaves in --tree");
    }
    return DirichletTree(spec.topology, spec.xi);
  }
  if (o.topics < 2) throw UsageError("--topics must be at least 2 (or give --tree)");
  const std::size_t K = o.topics;
  if (o.prior == "dirichlet") return make_dirichlet_prior(Vector::Ones(ix(K)));
  if (o.prior == "bl") {
    if (K < 3) throw UsageError("--prior bl needs --topics >= 3");
    return make_beta_liouville_prior(1.0, 1.0, Vector::Ones(ix(K - 1)));
  }
  if (o.prior == "gd") return make_generalized_dirichlet_prior(Vector::Ones(ix(K - 1)), Vector::Ones(ix(K - 1)));
  throw UsageError("unknown prior '" + o.prior + "' (expected dirichlet, bl or gd)");
}

Corpus read_input_corpus(const Options& o) {
  if (o.corpus.empty()) throw UsageError("--corpus is required");
  return load_corpus(o.corpus, o.vocab);
}

void check_compatible(const ModelFile& m, const Corpus& c) {
  if (m.params.V() != c.V) {
    throw InputError("model has V = " + std::to_string(m.params.V()) + " but the corpus has V = " +
                     std::to_string(c.V));
  }
  if (m.vocab_checksum && !c.vocab.empty() && *m.vocab_checksum != vocab_checksum(c.vocab)) {
    throw InputError("vocabulary does not match the one the model was trained with");
  }
}

EPOptions ep_options(const Options& o) {
  EPOptions e;
  e.damping = o.damping;
  e.normalize_columns = o.normalize_columns;
  return e;
}

// Opens --out or falls back to stdout.
class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty()) {
      file_.open(path, std::ios::binary);
      if (!file_) throw InputError("cannot write '" + path + "'");
    }
  }
  std::ostream& stream() { return file_.is_open() ? file_ : std::cout; }

 private:
  std::ofstream file_;
};

int cmd_train(const Options& o) {
  const Corpus corpus = read_input_corpus(o);
  if (o.out.empty()) throw UsageError("train needs --out");
  const DirichletTree prior = build_prior(o);
  ModelFile file{ModelParams{prior, Matrix::Constant(ix(corpus.V), ix(prior.leaf_count()), 1.0 / double(corpus.V))},
                 std::nullopt, {}};
  if (!corpus.vocab.empty()) file.vocab_checksum = vocab_checksum(corpus.vocab);
  FitReport report;
  if (o.inference == "vi") {
    VIConfig cfg;
    cfg.max_iters = o.max_iters;
    cfg.tolerance = o.tol;
    cfg.seed = o.seed;
    cfg.threads = o.threads;
    cfg.init_concentration = o.concentration;
    VIFit fit = fit_vi(corpus, prior, cfg);
    file.params = std::move(fit.params);
    report = std::move(fit.report);
  } else {
    EPConfig cfg;
    cfg.max_iters = o.max_iters;
    cfg.tolerance = o.tol;
    cfg.doc = ep_options(o);
    cfg.seed = o.seed;
    cfg.threads = o.threads;
    cfg.init_concentration = o.concentration;
    EPFit fit = fit_ep(corpus, prior, cfg);
    file.params = std::move(fit.params);
    report = std::move(fit.report);
  }
  file.training = {o.inference, report.iterations, report.trace.empty() ? 0.0 : report.trace.back(),
                   report.converged, o.seed};
  save_model(o.out, file);
  if (!o.trace.empty()) {
    std::ofstream t(o.trace, std::ios::binary);
    if (!t) throw InputError("cannot write '" + o.trace + "'");
    write_trace(t, report.trace, report.seconds);
  }
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
  std::cerr << o.inference << ": " << report.iterations << " iterations, objective "
            << file.training.objective << (report.converged ? "" : " (not converged)") << '\n';
  return report.converged ? kOk : kNotConverged;
}

// Per-document posteriors under a frozen model.
struct Posteriors {
  std::vector<DirichletTree> zeta;
  std::vector<double> score;  // ELBO for VI, log evidence for EP
};

Posteriors run_inference(const ModelParams& params, const Corpus& corpus, const Options& o) {
  Posteriors p;
  if (o.inference == "vi") {
    for (auto& s : infer_vi(params, corpus, {}, o.threads)) {
      p.zeta.push_back(s.zeta);
      p.score.push_back(s.elbo);
    }
  } else {
    for (auto& s : infer_ep(params, corpus, ep_options(o), o.threads)) {
      p.zeta.push_back(s.zeta);
      p.score.push_back(s.log_evidence);
    }
  }
  return p;
}

ModelFile read_model(const Options& o) {
  if (o.model.empty()) throw UsageError("--model is required");
  return load_model(o.model);
}

int cmd_infer(const Options& o) {
  const ModelFile model = read_model(o);
  const Corpus corpus = read_input_corpus(o);
  check_compatible(model, corpus);
  const Posteriors post = run_inference(model.params, corpus, o);
  Output out(o.out);
  std::ostream& os = out.stream();
  os << std::setprecision(17) << "doc";
  const TreeTopology& topo = model.params.prior.topology();
  for (std::size_t d = 0; d < topo.branch_count(); ++d) os << ",zeta_" << topo.label(topo.branch_child(d));
  for (std::size_t k = 0; k < topo.leaf_count(); ++k) os << ",theta_" << k + 1;
  os << (o.inference == "vi" ? ",elbo" : ",log_evidence") << '\n';
  for (std::size_t m = 0; m < corpus.size(); ++m) {
    os << m + 1;
    for (double z : post.zeta[m].xi()) os << ',' << z;
    for (double t : post.zeta[m].expected_theta()) os << ',' << t;
    os << ',' << post.score[m] << '\n';
  }
  return kOk;
}

std::set<std::string> parse_metrics(const std::string& list) {
  static const std::set<std::string> known{"perplexity", "coherence", "diversity"};
  std::set<std::string> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!known.count(item)) throw UsageError("unknown metric '" + item + "'");
    out.insert(item);
  }
  if (out.empty()) throw UsageError("--metrics is empty");
  return out;
}

int cmd_eval(const Options& o) {
  const auto metrics = parse_metrics(o.metrics);
  const ModelFile model = read_model(o);
  const Corpus corpus = read_input_corpus(o);
  check_compatible(model, corpus);
  const Matrix& phi = model.params.word_topic;
  if (o.top_n == 0 || o.top_n > model.params.V()) throw UsageError("--top-n must be in [1, V]");
  std::cout << std::setprecision(10);
  if (metrics.count("perplexity")) {
    const Posteriors post = run_inference(model.params, corpus, o);
    std::cout << "perplexity=" << perplexity(phi, post.zeta, corpus) << '\n';
  }
  Coherence coh;
  if (metrics.count("coherence")) {
    coh = coherence_umass(phi, corpus, o.top_n);
    std::cout << "coherence=" << coh.mean << '\n';
    if (coh.skipped_pairs) std::cerr << "warning: " << coh.skipped_pairs << " coherence pairs skipped\n";
  }
  if (metrics.count("diversity")) std::cout << "diversity=" << diversity(phi, o.top_n) << '\n';
  if (!o.topics_table.empty()) {
    std::ofstream t(o.topics_table, std::ios::binary);
    if (!t) throw InputError("cannot write '" + o.topics_table + "'");
    t << std::setprecision(17) << "topic,coherence,top_words\n";
    for (std::size_t k = 0; k < model.params.K(); ++k) {
      t << k + 1 << ',';
      if (!coh.per_topic.empty()) t << coh.per_topic[k];
      t << ',';
      const auto top = top_words(phi, k, o.top_n);
      for (std::size_t i = 0; i < top.size(); ++i) {
        if (i) t << ' ';
        if (corpus.vocab.empty()) t << top[i] + 1; else t << corpus.vocab[top[i]];
      }
      t << '\n';
    }
  }
  return kOk;
}

int cmd_generate(const Options& o) {
  if (o.out.empty()) throw UsageError("generate needs --out");
  ModelParams params{make_dirichlet_prior(Vector::Ones(2)), Matrix::Constant(1, 2, 1.0)};
  if (!o.model.empty()) {
    params = load_model(o.model).params;
  } else {
    if (o.vocab_size == 0) throw UsageError("generate needs --model or --vocab-size with a prior");
    Rng rng(o.seed ^ 0x9e3779b97f4a7c15ULL);
    DirichletTree prior = build_prior(o);
    params = ModelParams{prior, random_word_topic(o.vocab_size, prior.leaf_count(), o.concentration, rng)};
  }
  if (o.docs == 0) throw UsageError("--docs must be positive");
  if (!(o.mean_length > 0)) throw UsageError("--mean-length must be positive");
  const GeneratedCorpus g = generate_corpus(params, {o.docs, o.mean_length, o.seed});
  {
    std::ofstream c(o.out, std::ios::binary);
    if (!c) throw InputError("cannot write '" + o.out + "'");
    write_corpus(c, g.corpus);
  }
  const std::string latent = o.out + ".latent.csv";
  std::ofstream l(latent, std::ios::binary);
  if (!l) throw InputError("cannot write '" + latent + "'");
  const std::size_t K = params.K();
  l << std::setprecision(17) << "doc";
  for (std::size_t k = 0; k < K; ++k) l << ",theta_" << k + 1;
  for (std::size_t k = 0; k < K; ++k) l << ",count_" << k + 1;
  l << '\n';
  for (Eigen::Index m = 0; m < g.theta.rows(); ++m) {
    l << m + 1;
    for (Eigen::Index k = 0; k < g.theta.cols(); ++k) l << ',' << g.theta(m, k);
    for (Eigen::Index k = 0; k < g.topic_counts.cols(); ++k) l << ',' << g.topic_counts(m, k);
    l << '\n';
  }
  if (!o.save_model.empty()) {
    save_model(o.save_model, ModelFile{params, std::nullopt, {"truth", 0, 0.0, true, o.seed}});
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent Dirichlet-Tree Allocation"};
  app.require_subcommand(1);
  Options o;

  auto add_model_flags = [&](CLI::App* c) {
    c->add_option("--prior", o.prior, "dirichlet, bl or gd (symmetric parameters 1.0)");
    c->add_option("--tree", o.tree, "tree spec file; overrides --prior");
    c->add_option("--topics", o.topics, "number of topics K");
  };
  auto add_inference_flags = [&](CLI::App* c) {
    c->add_option("--inference", o.inference, "vi or ep")->check(CLI::IsMember({"vi", "ep"}));
    c->add_option("--damping", o.damping, "EP damping in (0, 1]")->check(CLI::Range(1e-12, 1.0));
    c->add_flag("--normalize-columns", o.normalize_columns, "EP: rescale each transition column to sum 1");
    c->add_option("--threads", o.threads, "worker threads")->check(CLI::PositiveNumber);
  };

  CLI::App* train = app.add_subcommand("train", "fit a model with EM");
  train->add_option("--corpus", o.corpus, "UCI bag-of-words corpus")->required();
  train->add_option("--vocab", o.vocab, "vocabulary, one token per line");
  add_model_flags(train);
  add_inference_flags(train);
  train->add_option("--max-iters", o.max_iters, "outer EM iterations")->check(CLI::PositiveNumber);
  train->add_option("--tol", o.tol, "relative change that stops EM")->check(CLI::PositiveNumber);
  train->add_option("--seed", o.seed, "seed for the word-topic initialisation");
  train->add_option("--concentration", o.concentration, "Dirichlet concentration of the initial word-topic columns")
      ->check(CLI::PositiveNumber);
  train->add_option("--out", o.out, "model file to write")->required();
  train->add_option("--trace", o.trace, "per-iteration CSV trace");

  CLI::App* infer = app.add_subcommand("infer", "per-document posteriors under a frozen model");
  infer->add_option("--model", o.model)->required();
  infer->add_option("--corpus", o.corpus)->required();
  infer->add_option("--vocab", o.vocab);
  add_inference_flags(infer);
  infer->add_option("--seed", o.seed, "accepted for symmetry; inference is deterministic");
  infer->add_option("--out", o.out, "CSV output (default stdout)");

  CLI::App* eval = app.add_subcommand("eval", "perplexity, coherence and diversity");
  eval->add_option("--model", o.model)->required();
  eval->add_option("--corpus", o.corpus)->required();
  eval->add_option("--vocab", o.vocab);
  add_inference_flags(eval);
  eval->add_option("--seed", o.seed, "accepted for symmetry; evaluation is deterministic");
  eval->add_option("--metrics", o.metrics, "comma-separated subset of perplexity,coherence,diversity");
  eval->add_option("--top-n", o.top_n, "top words per topic");
  eval->add_option("--out", o.topics_table, "per-topic CSV table");

  CLI::App* gen = app.add_subcommand("generate", "sample a synthetic corpus");
  gen->add_option("--model", o.model, "model to sample from");
  add_model_flags(gen);
  gen->add_option("--vocab-size", o.vocab_size, "V for a random word-topic matrix when no --model is given");
  gen->add_option("--concentration", o.concentration, "Dirichlet concentration of random word-topic columns")
      ->check(CLI::PositiveNumber);
  gen->add_option("--docs", o.docs, "number of documents");
  gen->add_option("--mean-length", o.mean_length, "Poisson mean document length");
  gen->add_option("--seed", o.seed);
  gen->add_option("--out", o.out, "corpus file; the latent record goes to <out>.latent.csv")->required();
  gen->add_option("--save-model", o.save_model, "write the generating model here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (train->parsed()) return cmd_train(o);
    if (infer->parsed()) return cmd_infer(o);
    if (eval->parsed()) return cmd_eval(o);
    if (gen->parsed()) return cmd_generate(o);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInput;
  } catch (const TopologyError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInput;
  } catch (const ParameterError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInput;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kNumerical;
  } catch (const ConvergenceError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kNumerical;
  } catch (const DomainError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kNumerical;
  }
  return kUsage;
}
