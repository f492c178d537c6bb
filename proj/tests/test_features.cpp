#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "valence/features.hpp"

using namespace valence;

namespace {

TokenStream stream_of(const std::vector<std::string>& tokens) {
  TokenStream s;
  size_t offset = 0;
  for (const std::string& t : tokens) {
    s.tokens.push_back(t);
    s.spans.push_back(Span{offset, offset + t.size()});
    offset += t.size() + 1;
  }
  return s;
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_SUITE("tfidf") {
  TEST_CASE("single-document corpus: every idf is exactly 1") {
    const auto model = fit_tfidf({stream_of({"a", "b", "a"})}, 1, 2, {});
    for (double idf : model.idf) CHECK(idf == doctest::Approx(1.0).epsilon(1e-12));
  }

  TEST_CASE("hand-evaluated smoothed idf on three documents") {
    const auto model =
        fit_tfidf({stream_of({"a", "b"}), stream_of({"a"}), stream_of({"c"})}, 1, 1, {});
    REQUIRE(model.terms == std::vector<std::string>{"a", "b", "c"});
    CHECK(model.idf[0] == doctest::Approx(std::log(4.0 / 3.0) + 1.0).epsilon(1e-12));  // ~1.28768
    CHECK(model.idf[1] == doctest::Approx(std::log(4.0 / 2.0) + 1.0).epsilon(1e-12));
    CHECK(model.idf[2] == doctest::Approx(std::log(4.0 / 2.0) + 1.0).epsilon(1e-12));  // ~1.69315
    CHECK(model.n_documents_fit == 3);
  }

  TEST_CASE("vocabulary over (1,2) grams") {
    const auto model = fit_tfidf({stream_of({"a", "b"}), stream_of({"a"})}, 1, 2, {});
    CHECK(model.terms == std::vector<std::string>{"a", "a b", "b"});
  }

  TEST_CASE("empty document list is rejected") {
    CHECK_THROWS_AS(fit_tfidf({}, 1, 2, {}), ValidationError);
  }

  TEST_CASE("transform of an empty or unknown document is the zero vector") {
    const auto model = fit_tfidf({stream_of({"a", "b"})}, 1, 2, {});
    CHECK(transform_tfidf(model, stream_of({})).entries.empty());
    CHECK(transform_tfidf(model, stream_of({"zzz"})).entries.empty());
  }

  TEST_CASE("nonempty in-vocabulary documents have unit norm") {
    const auto model = fit_tfidf({stream_of({"a", "b", "c"}), stream_of({"b", "c"})}, 1, 2, {});
    const SparseVector v = transform_tfidf(model, stream_of({"a", "c", "c"}));
    CHECK(v.norm() == doctest::Approx(1.0).epsilon(1e-9));
  }

  TEST_CASE("hand-computed transform on the three-document model") {
    const auto model =
        fit_tfidf({stream_of({"a", "b"}), stream_of({"a"}), stream_of({"c"})}, 1, 1, {});
    const SparseVector v = transform_tfidf(model, stream_of({"a", "a", "b"}));
    const double wa = 2.0 * (std::log(4.0 / 3.0) + 1.0);
    const double wb = 1.0 * (std::log(4.0 / 2.0) + 1.0);
    const double norm = std::sqrt(wa * wa + wb * wb);
    REQUIRE(v.entries.size() == 2);
    CHECK(v.entries[0].first == 0);
    CHECK(v.entries[0].second == doctest::Approx(wa / norm).epsilon(1e-12));
    CHECK(v.entries[1].first == 1);
    CHECK(v.entries[1].second == doctest::Approx(wb / norm).epsilon(1e-12));
  }

  TEST_CASE("stopwords are dropped before n-gram extraction in fit and transform") {
    // With "der" removed, "a der b" contributes the bigram "a b".
    const auto model = fit_tfidf({stream_of({"a", "b"})}, 1, 2, {"der"});
    const SparseVector direct = transform_tfidf(model, stream_of({"a", "b"}));
    const SparseVector with_stop = transform_tfidf(model, stream_of({"a", "der", "b"}));
    REQUIRE(direct.entries.size() == with_stop.entries.size());
    for (size_t i = 0; i < direct.entries.size(); ++i) {
      CHECK(direct.entries[i].first == with_stop.entries[i].first);
      CHECK(direct.entries[i].second == doctest::Approx(with_stop.entries[i].second).epsilon(1e-12));
    }
  }

  TEST_CASE("matches the brute-force oracle on randomized corpora") {
    const std::vector<std::string> alphabet = {"a", "b", "c", "d", "e", "f", "g", "h", "i", "j"};
    Rng rng(404);
    for (int corpus_round = 0; corpus_round < 5; ++corpus_round) {
      const int n_docs = 3 + static_cast<int>(rng.next_index(23));  // <= 25
      std::vector<std::vector<std::string>> docs;
      for (int d = 0; d < n_docs; ++d) {
        std::vector<std::string> doc;
        const int len = static_cast<int>(rng.next_index(9));
        for (int i = 0; i < len; ++i) doc.push_back(alphabet[rng.next_index(alphabet.size())]);
        docs.push_back(doc);
      }
      const std::unordered_set<std::string> stoplist = corpus_round % 2 == 0
                                                           ? std::unordered_set<std::string>{}
                                                           : std::unordered_set<std::string>{"a"};
      std::vector<TokenStream> streams;
      for (const auto& doc : docs) streams.push_back(stream_of(doc));
      const auto model = fit_tfidf(streams, 1, 2, stoplist);
      const auto [oracle_terms, oracle_rows] = oracles::brute_force_tfidf(docs, stoplist, 1, 2);
      REQUIRE(model.terms == oracle_terms);
      for (size_t d = 0; d < docs.size(); ++d) {
        const std::vector<double> dense = transform_tfidf(model, streams[d]).to_dense();
        REQUIRE(dense.size() == oracle_rows[d].size());
        for (size_t j = 0; j < dense.size(); ++j)
          CHECK(std::fabs(dense[j] - oracle_rows[d][j]) <= 1e-9);
      }
    }
  }

  TEST_CASE("unseen terms never appear in transform output") {
    const auto model = fit_tfidf({stream_of({"a", "b"})}, 1, 2, {});
    const SparseVector v = transform_tfidf(model, stream_of({"a", "x", "y", "b"}));
    for (const auto& [idx, value] : v.entries) CHECK(idx < model.dimension());
    CHECK(v.dimension == model.dimension());
  }
}

TEST_SUITE("embeddings") {
  TEST_CASE("average of one covered token is its vector") {
    EmbeddingTable table;
    table.dimension = 3;
    table.vectors["w"] = {1.0, -2.0, 0.5};
    const auto mean = average_embeddings(table, stream_of({"w"}));
    CHECK(mean == std::vector<double>{1.0, -2.0, 0.5});
  }

  TEST_CASE("opposite vectors cancel") {
    EmbeddingTable table;
    table.dimension = 2;
    table.vectors["p"] = {0.5, -1.0};
    table.vectors["q"] = {-0.5, 1.0};
    const auto mean = average_embeddings(table, stream_of({"p", "q"}));
    CHECK(mean[0] == doctest::Approx(0.0));
    CHECK(mean[1] == doctest::Approx(0.0));
  }

  TEST_CASE("multiplicity counts in the mean; uncovered tokens are skipped") {
    EmbeddingTable table;
    table.dimension = 1;
    table.vectors["w1"] = {3.0};
    table.vectors["w2"] = {0.0};
    const auto mean = average_embeddings(table, stream_of({"w1", "w1", "w2", "oov"}));
    CHECK(mean[0] == doctest::Approx(2.0));
  }

  TEST_CASE("no covered token gives the zero vector") {
    EmbeddingTable table;
    table.dimension = 4;
    table.vectors["w"] = {1, 1, 1, 1};
    const auto mean = average_embeddings(table, stream_of({"x", "y"}));
    CHECK(mean == std::vector<double>(4, 0.0));
  }

  TEST_CASE("permutation invariant") {
    EmbeddingTable table;
    table.dimension = 2;
    table.vectors["a"] = {1.0, 2.0};
    table.vectors["b"] = {-3.0, 0.25};
    table.vectors["c"] = {0.125, 4.0};
    const auto m1 = average_embeddings(table, stream_of({"a", "b", "c"}));
    const auto m2 = average_embeddings(table, stream_of({"c", "a", "b"}));
    CHECK(m1 == m2);
  }

  TEST_CASE("file loader enforces a consistent component count") {
    const auto path = temp_file("valence_embeddings_test.txt");
    {
      std::ofstream out(path);
      out << "haus 0.1 0.2 0.3\n";
      out << "baum 0.4 0.5 0.6\n";
    }
    const EmbeddingTable table = load_embeddings(path.string());
    CHECK(table.dimension == 3);
    CHECK(table.vectors.size() == 2);
    CHECK(table.vectors.at("baum")[2] == doctest::Approx(0.6));

    {
      std::ofstream out(path);
      out << "haus 0.1 0.2 0.3\n";
      out << "baum 0.4 0.5\n";
    }
    CHECK_THROWS_WITH_AS(load_embeddings(path.string()), doctest::Contains(":2"), ParseError);
    std::filesystem::remove(path);
  }

  TEST_CASE("restriction keeps only requested tokens") {
    const auto path = temp_file("valence_embeddings_restrict.txt");
    {
      std::ofstream out(path);
      out << "haus 1 2\nbaum 3 4\nweg 5 6\n";
    }
    const std::unordered_set<std::string> keep = {"baum"};
    const EmbeddingTable table = load_embeddings(path.string(), &keep);
    CHECK(table.vectors.size() == 1);
    CHECK(table.vectors.count("baum") == 1);
    CHECK(table.dimension == 2);
    std::filesystem::remove(path);
  }
}

TEST_SUITE("polarity") {
  TEST_CASE("no lexicon hit gives 0") {
    PolarityLexicon lexicon;
    lexicon.scores["gut"] = 0.8;
    CHECK(polarity(lexicon, stream_of({"haus", "baum"})) == doctest::Approx(0.0));
  }

  TEST_CASE("arithmetic mean of matched scores") {
    PolarityLexicon lexicon;
    lexicon.scores["gut"] = 1.0;
    lexicon.scores["naja"] = -0.5;
    CHECK(polarity(lexicon, stream_of({"gut", "naja"})) == doctest::Approx(0.25));
  }

  TEST_CASE("single match returns its score") {
    PolarityLexicon lexicon;
    lexicon.scores["schlecht"] = -0.7;
    CHECK(polarity(lexicon, stream_of({"schlecht", "zzz"})) == doctest::Approx(-0.7));
  }

  TEST_CASE("always within [-1, 1]") {
    PolarityLexicon lexicon;
    lexicon.scores["a"] = 1.0;
    lexicon.scores["b"] = -1.0;
    lexicon.scores["c"] = 0.3;
    Rng rng(8);
    const std::vector<std::string> words = {"a", "b", "c", "d"};
    for (int round = 0; round < 50; ++round) {
      std::vector<std::string> tokens;
      for (int i = 0; i < 10; ++i) tokens.push_back(words[rng.next_index(words.size())]);
      const double p = polarity(lexicon, stream_of(tokens));
      CHECK(p >= -1.0);
      CHECK(p <= 1.0);
    }
  }

  TEST_CASE("lexicon file loads and validates its range") {
    const auto path = temp_file("valence_lexicon_test.tsv");
    {
      std::ofstream out(path);
      out << "gut\t0.7\nschlecht\t-0.7\n";
    }
    const PolarityLexicon lexicon = load_polarity_lexicon(path.string());
    CHECK(lexicon.scores.at("gut") == doctest::Approx(0.7));
    {
      std::ofstream out(path);
      out << "gut\t1.7\n";
    }
    CHECK_THROWS_AS(load_polarity_lexicon(path.string()), ValidationError);
    std::filesystem::remove(path);
  }
}

TEST_CASE("prev_valence_feature is a one-hot in class order") {
  CHECK(prev_valence_feature(ValenceClass::Low) == std::vector<double>{1, 0, 0});
  CHECK(prev_valence_feature(ValenceClass::Medium) == std::vector<double>{0, 1, 0});
  CHECK(prev_valence_feature(ValenceClass::High) == std::vector<double>{0, 0, 1});
}

TEST_SUITE("assemble") {
  TEST_CASE("concatenation arithmetic") {
    const FeatureVector v = assemble({{"x", {1, 2, 3, 4, 5}, {}}, {"y", {6, 7, 8}, {}}});
    CHECK(v.values.size() == 8);
    CHECK(v.names.size() == 8);
    CHECK(v.names[0] == "x:0");
    CHECK(v.names[5] == "y:0");
  }

  TEST_CASE("current and previous copies of a term stay distinct") {
    const FeatureVector v =
        assemble({{"tfidf_prev", {0.5, 0.1}, {"abi", "opa"}}, {"tfidf", {0.2, 0.0}, {"abi", "opa"}}});
    CHECK(v.names == std::vector<std::string>{"tfidf_prev:abi", "tfidf_prev:opa", "tfidf:abi",
                                              "tfidf:opa"});
  }

  TEST_CASE("empty part list gives a zero-length vector") {
    const FeatureVector v = assemble({});
    CHECK(v.values.empty());
    CHECK(v.names.empty());
  }

  TEST_CASE("single unlabeled value is named by its prefix") {
    const FeatureVector v = assemble({{"pol", {0.25}, {}}});
    CHECK(v.names == std::vector<std::string>{"pol"});
  }

  TEST_CASE("non-finite values are rejected with the component name") {
    CHECK_THROWS_WITH_AS(assemble({{"pol", {std::nan("")}, {}}}), doctest::Contains("pol"),
                         ValidationError);
    CHECK_THROWS_WITH_AS(
        assemble({{"tfidf", {1.0, INFINITY}, {"good", "bad"}}}),
        doctest::Contains("tfidf:bad"), ValidationError);
  }

  TEST_CASE("label count must match value count") {
    CHECK_THROWS_AS(assemble({{"x", {1.0, 2.0}, {"only_one"}}}), ValidationError);
  }
}
