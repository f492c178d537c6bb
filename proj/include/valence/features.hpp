#pragma once

#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "valence/common.hpp"
#include "valence/corpus.hpp"
#include "valence/preprocess.hpp"

namespace valence {

struct SparseVector {
  int dimension = 0;
  std::vector<std::pair<int, double>> entries;  // sorted by index, no explicit zeros

  double norm() const;
  std::vector<double> to_dense() const;
};

// Fitted tf-idf vectorizer. Stopword removal and the n-gram range are part
// of the fitted state so transform applies the identical pipeline.
struct TfidfModel {
  std::vector<std::string> terms;  // sorted lexicographically; position = column
  std::unordered_map<std::string, int> term_index;
  std::vector<double> idf;         // idf = ln((1+N)/(1+df)) + 1
  int n_documents_fit = 0;
  int ngram_min = 1;
  int ngram_max = 2;
  std::unordered_set<std::string> stoplist;

  int dimension() const { return static_cast<int>(terms.size()); }
};

TfidfModel fit_tfidf(const std::vector<TokenStream>& documents, int n_min, int n_max,
                     const std::unordered_set<std::string>& stoplist);

/// Raw term counts times idf, then l2-normalized. Unknown terms are ignored;
/// a document with no known terms maps to the zero vector.
SparseVector transform_tfidf(const TfidfModel& model, const TokenStream& document);

struct EmbeddingTable {
  int dimension = 0;
  std::unordered_map<std::string, std::vector<double>> vectors;
};

/// Text format: token followed by `dimension` decimal reals per line. The
/// first line fixes the dimension. When `restrict_to` is given, only those
/// tokens are kept (bounds memory on large pretrained files).
EmbeddingTable load_embeddings(const std::string& path,
                               const std::unordered_set<std::string>* restrict_to = nullptr);

/// Mean of the vectors of covered tokens (with multiplicity); tokens missing
/// from the table are skipped; zero vector if nothing is covered.
std::vector<double> average_embeddings(const EmbeddingTable& table, const TokenStream& stream);

struct PolarityLexicon {
  std::unordered_map<std::string, double> scores;  // token -> [-1, 1]
};

/// One `token<TAB>score` per line, score a decimal in [-1, 1].
PolarityLexicon load_polarity_lexicon(const std::string& path);

/// Mean lexicon score over matched tokens; 0.0 when nothing matches.
double polarity(const PolarityLexicon& lexicon, const TokenStream& stream);

/// One-hot over (Low, Medium, High).
std::vector<double> prev_valence_feature(ValenceClass v);

// One named block of a classifier input. When labels are given they name the
// components ("tfidf" + "abi" -> "tfidf:abi"); a single unlabeled value is
// named by the prefix alone; otherwise components are numbered.
struct FeaturePart {
  std::string prefix;
  std::vector<double> values;
  std::vector<std::string> labels;  // empty, or one label per value
};

struct FeatureVector {
  std::vector<double> values;
  std::vector<std::string> names;

  int dimension() const { return static_cast<int>(values.size()); }
};

/// Concatenates parts in order; every component gets a provenance-carrying
/// name so current- and previous-narrative copies of a term stay distinct.
FeatureVector assemble(const std::vector<FeaturePart>& parts);

}  // namespace valence
