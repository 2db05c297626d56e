#include "ldta/io.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

using namespace ldta;

namespace {

Corpus parse(const std::string& text) {
  std::istringstream in(text);
  return read_corpus(in);
}

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "ldta_test_io";
  std::filesystem::create_directories(dir);
  return dir / name;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Corpus, UciExample) {
  const Corpus c = parse("2\n3\n3\n1 1 2\n1 3 1\n2 2 5\n");
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c.V, 3u);
  EXPECT_EQ(c.docs[0].words, (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(c.docs[0].counts, (Vector{{2.0, 1.0}}));
  EXPECT_EQ(c.docs[1].words, (std::vector<std::size_t>{1}));
  EXPECT_EQ(c.docs[1].counts, (Vector{{5.0}}));
}

TEST(Corpus, RejectsMalformedInput) {
  EXPECT_THROW(parse("1\n3\n1\n1 0 2\n"), InputError);      // word ids are 1-based
  EXPECT_THROW(parse("1\n3\n1\n1 4 2\n"), InputError);      // word id > V
  EXPECT_THROW(parse("1\n3\n1\n2 1 2\n"), InputError);      // doc id > M
  EXPECT_THROW(parse("1\n3\n2\n1 1 2\n"), InputError);      // NNZ mismatch
  EXPECT_THROW(parse("2\n3\n2\n2 1 1\n1 1 1\n"), InputError);  // descending doc ids
  EXPECT_THROW(parse("2\n3\n1\n1 1 1\n"), InputError);      // document 2 empty
  EXPECT_THROW(parse("1\n3\n1\n1 1\n"), InputError);        // missing field
  EXPECT_THROW(parse("1\n3\n1\n1 1 x\n"), InputError);
  EXPECT_THROW(parse("1\n3\n1\n1 1 0\n"), InputError);
  EXPECT_THROW(parse("1\n3\n"), InputError);                // truncated header
  EXPECT_THROW(parse("1\n0\n0\n"), InputError);
}

TEST(Corpus, RepeatedPairsAccumulateAndBlankLinesAreIgnored) {
  const Corpus c = parse("1\n4\n3\n\n1 2 1\n1 2 3\n\n1 4 1\n");
  EXPECT_EQ(c.docs[0].words, (std::vector<std::size_t>{1, 3}));
  EXPECT_EQ(c.docs[0].counts, (Vector{{4.0, 1.0}}));
}

TEST(Corpus, WriteReadRoundtrip) {
  Rng rng(1);
  Corpus c;
  c.V = 12;
  for (int m = 0; m < 6; ++m) c.docs.push_back(oracle::random_document(rng, 12, 20));
  std::ostringstream out;
  write_corpus(out, c);
  const Corpus back = parse(out.str());
  ASSERT_EQ(back.size(), c.size());
  EXPECT_EQ(back.V, c.V);
  for (std::size_t m = 0; m < c.size(); ++m) {
    EXPECT_EQ(back.docs[m].words, c.docs[m].words);
    EXPECT_EQ(back.docs[m].counts, c.docs[m].counts);
  }
  std::ostringstream again;
  write_corpus(again, back);
  EXPECT_EQ(again.str(), out.str());
}

TEST(Corpus, VocabularyMustMatch) {
  const auto corpus = scratch("c.txt"), vocab = scratch("v.txt");
  std::ofstream(corpus) << "1\n3\n1\n1 2 1\n";
  std::ofstream(vocab) << "alpha\nbeta\ngamma\n";
  const Corpus c = load_corpus(corpus.string(), vocab.string());
  EXPECT_EQ(c.vocab, (std::vector<std::string>{"alpha", "beta", "gamma"}));
  std::ofstream(vocab) << "alpha\nbeta\n";
  EXPECT_THROW(load_corpus(corpus.string(), vocab.string()), InputError);
  EXPECT_THROW(load_corpus(scratch("missing.txt").string()), InputError);
}

TEST(TreeSpecFile, ParsesCommentsAndInitialValues) {
  std::istringstream in(
      "# a two-level tree\n"
      "a root\n"
      "\n"
      "b root xi=2.5   # leaf\n"
      "c a xi=0.5\n"
      "d a\n");
  const TreeSpec spec = read_tree_spec(in);
  const TreeTopology& t = *spec.topology;
  EXPECT_EQ(t.leaf_count(), 3u);
  EXPECT_EQ(spec.xi.size(), 4);
  EXPECT_EQ(spec.xi(ix(*t.find("b") - 1)), 2.5);
  EXPECT_EQ(spec.xi(ix(*t.find("c") - 1)), 0.5);
  EXPECT_EQ(spec.xi(ix(*t.find("d") - 1)), 1.0);
  EXPECT_EQ(spec.xi(ix(*t.find("a") - 1)), 1.0);
}

TEST(TreeSpecFile, RejectsBadLines) {
  auto bad = [](const std::string& text) {
    std::istringstream in(text);
    return read_tree_spec(in);
  };
  EXPECT_THROW(bad("a\n"), InputError);
  EXPECT_THROW(bad("a root\nb root xi=-1\n"), InputError);
  EXPECT_THROW(bad("a root\nb root xi=abc\n"), InputError);
  EXPECT_THROW(bad("a root\nb root foo\n"), InputError);
  EXPECT_THROW(bad("a root\n"), InputError);       // single leaf under the root
  EXPECT_THROW(bad("a b\nb a\n"), InputError);     // cycle
}

TEST(ModelFileFormat, SaveLoadSaveIsByteIdentical) {
  Rng rng(2);
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t K = oracle::uniform_int(rng, 2, 6);
    ModelFile f{ModelParams{oracle::random_dtree(rng, K, 0.05, 40.0), oracle::random_word_topic(rng, 9, K)},
                vocab_checksum({"x", "y"}), {"ep", 7, -123.456789012345678, true, 42}};
    const auto path = scratch("model.json");
    save_model(path.string(), f);
    const ModelFile g = load_model(path.string());
    EXPECT_EQ(g.params.prior, f.params.prior);
    EXPECT_EQ(g.params.word_topic, f.params.word_topic);
    EXPECT_EQ(g.vocab_checksum, f.vocab_checksum);
    EXPECT_EQ(g.training.backend, "ep");
    EXPECT_EQ(g.training.objective, f.training.objective);
    EXPECT_EQ(g.training.seed, 42u);
    const auto path2 = scratch("model2.json");
    save_model(path2.string(), g);
    EXPECT_EQ(slurp(path), slurp(path2));
  }
}

TEST(ModelFileFormat, RejectsInconsistentFiles) {
  Rng rng(3);
  const ModelFile f{ModelParams{make_dirichlet_prior(Vector::Ones(3)), oracle::random_word_topic(rng, 4, 3)},
                    std::nullopt, {"vi", 1, 0.0, false, 1}};
  const nlohmann::json good = model_to_json(f);
  EXPECT_NO_THROW(model_from_json(good));
  auto j = good;
  j["format_version"] = 99;
  EXPECT_THROW(model_from_json(j), InputError);
  j = good;
  j["K"] = 4;
  EXPECT_THROW(model_from_json(j), InputError);
  j = good;
  j["word_topic"].erase(0);
  EXPECT_THROW(model_from_json(j), InputError);
  j = good;
  j["xi"][0] = -1.0;
  EXPECT_THROW(model_from_json(j), InputError);
  j = good;
  j["word_topic"][0][0] = 5.0;  // column no longer sums to 1
  EXPECT_THROW(model_from_json(j), InputError);
  j = good;
  j.erase("training");
  EXPECT_THROW(model_from_json(j), InputError);
}

TEST(ModelFileFormat, VocabChecksum) {
  EXPECT_EQ(vocab_checksum({}), "cbf29ce484222325");
  EXPECT_EQ(vocab_checksum({"a", "b"}), vocab_checksum({"a", "b"}));
  EXPECT_NE(vocab_checksum({"a", "b"}), vocab_checksum({"b", "a"}));
  EXPECT_NE(vocab_checksum({"ab"}), vocab_checksum({"a", "b"}));
  EXPECT_EQ(vocab_checksum({"x"}).size(), 16u);
}

TEST(Trace, CsvLayout) {
  std::ostringstream out;
  write_trace(out, {-10.5, -9.25}, {0.5, 1.0});
  EXPECT_EQ(out.str(), "iter,objective,seconds\n1,-10.5,0.5\n2,-9.25,1\n");
}
