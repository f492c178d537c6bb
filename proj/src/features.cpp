#include "valence/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace valence {

double SparseVector::norm() const {
  double acc = 0.0;
  for (const auto& [idx, value] : entries) acc += value * value;
  return std::sqrt(acc);
}

std::vector<double> SparseVector::to_dense() const {
  std::vector<double> out(dimension, 0.0);
  for (const auto& [idx, value] : entries) out[idx] = value;
  return out;
}

TfidfModel fit_tfidf(const std::vector<TokenStream>& documents, int n_min, int n_max,
                     const std::unordered_set<std::string>& stoplist) {
  if (documents.empty()) throw ValidationError("fit_tfidf requires at least one document");
  TfidfModel model;
  model.ngram_min = n_min;
  model.ngram_max = n_max;
  model.stoplist = stoplist;
  model.n_documents_fit = static_cast<int>(documents.size());

  std::map<std::string, int> df;  // ordered so index assignment is lexicographic
  for (const TokenStream& doc : documents) {
    const TokenStream kept = remove_stopwords(doc, stoplist);
    std::unordered_set<std::string> seen;
    for (std::string& gram : ngrams(kept, n_min, n_max)) seen.insert(std::move(gram));
    for (const std::string& gram : seen) df[gram] += 1;
  }

  model.terms.reserve(df.size());
  model.idf.reserve(df.size());
  const double n = static_cast<double>(documents.size());
  for (const auto& [term, count] : df) {
    model.term_index.emplace(term, static_cast<int>(model.terms.size()));
    model.terms.push_back(term);
    model.idf.push_back(std::log((1.0 + n) / (1.0 + count)) + 1.0);
  }
  return model;
}

SparseVector transform_tfidf(const TfidfModel& model, const TokenStream& document) {
  const TokenStream kept = remove_stopwords(document, model.stoplist);
  std::map<int, double> counts;
  for (const std::string& gram : ngrams(kept, model.ngram_min, model.ngram_max)) {
    auto it = model.term_index.find(gram);
    if (it != model.term_index.end()) counts[it->second] += 1.0;
  }
  SparseVector out;
  out.dimension = model.dimension();
  double norm_sq = 0.0;
  for (const auto& [idx, count] : counts) {
    const double weighted = count * model.idf[idx];
    out.entries.emplace_back(idx, weighted);
    norm_sq += weighted * weighted;
  }
  if (norm_sq > 0.0) {
    const double inv = 1.0 / std::sqrt(norm_sq);
    for (auto& [idx, value] : out.entries) value *= inv;
  }
  return out;
}

EmbeddingTable load_embeddings(const std::string& path,
                               const std::unordered_set<std::string>* restrict_to) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open embedding file: " + path);
  EmbeddingTable table;
  std::string line;
  size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string token;
    fields >> token;
    std::vector<double> components;
    double value;
    while (fields >> value) components.push_back(value);
    if (!fields.eof())
      throw ParseError(path + ":" + std::to_string(line_number) + ": malformed component");
    if (table.dimension == 0) {
      if (components.empty())
        throw ParseError(path + ":" + std::to_string(line_number) + ": no components on first entry");
      table.dimension = static_cast<int>(components.size());
    }
    if (static_cast<int>(components.size()) != table.dimension)
      throw ParseError(path + ":" + std::to_string(line_number) + ": expected " +
                       std::to_string(table.dimension) + " components, got " +
                       std::to_string(components.size()));
    if (restrict_to && !restrict_to->count(token)) continue;
    table.vectors[token] = std::move(components);
  }
  if (table.dimension == 0) throw ParseError("embedding file is empty: " + path);
  return table;
}

std::vector<double> average_embeddings(const EmbeddingTable& table, const TokenStream& stream) {
  if (table.dimension <= 0) throw ValidationError("embedding table has no dimension");
  std::vector<double> sum(table.dimension, 0.0);
  int covered = 0;
  for (const std::string& token : stream.tokens) {
    auto it = table.vectors.find(token);
    if (it == table.vectors.end()) continue;
    for (int i = 0; i < table.dimension; ++i) sum[i] += it->second[i];
    ++covered;
  }
  if (covered > 0)
    for (double& v : sum) v /= covered;
  return sum;
}

PolarityLexicon load_polarity_lexicon(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open polarity lexicon: " + path);
  PolarityLexicon lexicon;
  std::string line;
  size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const size_t tab = line.find('\t');
    if (tab == std::string::npos)
      throw ParseError(path + ":" + std::to_string(line_number) + ": expected token<TAB>score");
    const std::string token = line.substr(0, tab);
    double score;
    try {
      score = std::stod(line.substr(tab + 1));
    } catch (const std::exception&) {
      throw ParseError(path + ":" + std::to_string(line_number) + ": score is not a number");
    }
    if (score < -1.0 || score > 1.0)
      throw ValidationError(path + ":" + std::to_string(line_number) +
                            ": polarity score outside [-1,1]: " + std::to_string(score));
    lexicon.scores[token] = score;
  }
  return lexicon;
}

double polarity(const PolarityLexicon& lexicon, const TokenStream& stream) {
  double sum = 0.0;
  int matched = 0;
  for (const std::string& token : stream.tokens) {
    auto it = lexicon.scores.find(token);
    if (it == lexicon.scores.end()) continue;
    sum += it->second;
    ++matched;
  }
  return matched == 0 ? 0.0 : sum / matched;
}

std::vector<double> prev_valence_feature(ValenceClass v) {
  std::vector<double> out(kNumValenceClasses, 0.0);
  out[static_cast<int>(v)] = 1.0;
  return out;
}

FeatureVector assemble(const std::vector<FeaturePart>& parts) {
  FeatureVector out;
  for (const FeaturePart& part : parts) {
    if (!part.labels.empty() && part.labels.size() != part.values.size())
      throw ValidationError("feature part '" + part.prefix + "' has " +
                            std::to_string(part.labels.size()) + " labels for " +
                            std::to_string(part.values.size()) + " values");
    for (size_t i = 0; i < part.values.size(); ++i) {
      std::string name;
      if (!part.labels.empty())
        name = part.prefix + ":" + part.labels[i];
      else if (part.values.size() == 1)
        name = part.prefix;
      else
        name = part.prefix + ":" + std::to_string(i);
      if (!std::isfinite(part.values[i]))
        throw ValidationError("non-finite feature component: " + name);
      out.values.push_back(part.values[i]);
      out.names.push_back(std::move(name));
    }
  }
  return out;
}

}  // namespace valence
