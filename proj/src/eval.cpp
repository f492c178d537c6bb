#include "valence/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <future>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include "model_json.hpp"

namespace valence {

using nlohmann::json;

int FoldPlan::fold_of(const std::string& subject_id) const {
  for (size_t i = 0; i < subject_ids.size(); ++i)
    if (subject_ids[i] == subject_id) return folds[i];
  throw ValidationError("subject not covered by the fold plan: " + subject_id);
}

FoldPlan make_folds(const std::vector<std::string>& subject_ids, int k, uint64_t seed) {
  if (k < 2) throw ValidationError("fold count must be >= 2, got " + std::to_string(k));
  if (static_cast<int>(subject_ids.size()) < k)
    throw ValidationError("need at least " + std::to_string(k) + " subjects for " +
                          std::to_string(k) + " folds, got " + std::to_string(subject_ids.size()));
  std::set<std::string> unique(subject_ids.begin(), subject_ids.end());
  if (unique.size() != subject_ids.size()) throw ValidationError("duplicate subject ids in fold input");

  std::vector<std::string> shuffled = subject_ids;
  Rng rng(derive_seed(seed, 2));
  rng.shuffle(shuffled);

  std::unordered_map<std::string, int> assignment;
  for (size_t i = 0; i < shuffled.size(); ++i)
    assignment.emplace(shuffled[i], static_cast<int>(i % k));

  FoldPlan plan;
  plan.k = k;
  plan.subject_ids = subject_ids;
  plan.folds.reserve(subject_ids.size());
  for (const std::string& id : subject_ids) plan.folds.push_back(assignment.at(id));
  return plan;
}

void ExperimentConfig::validate() const {
  if (model_kind != "svm" && model_kind != "neural")
    throw ValidationError("model kind must be 'svm' or 'neural', got '" + model_kind + "'");
  if (model_kind == "svm" && !features.tfidf && !features.word_emb)
    throw ValidationError("SVM configuration needs at least one document feature (tfidf or word_emb)");
  if (model_kind == "neural" && !features.word_emb)
    throw ValidationError("neural configuration requires word embeddings");
  if (model_kind == "neural" && features.tfidf)
    throw ValidationError("the neural path does not consume tf-idf features");
  if (ngram_min < 1 || ngram_min > ngram_max)
    throw ValidationError("invalid ngram range");
  if (svm.c <= 0.0) throw ValidationError("C must be > 0");
  if (svm.epochs < 1 || neural.epochs < 1) throw ValidationError("epochs must be >= 1");
}

std::string ExperimentConfig::narratives_used() const {
  switch (mode) {
    case ContextMode::Isolation: return "N_t";
    case ContextMode::Pair: return "N_{t-1}, N_t";
    case ContextMode::Sequence: return "N_1,...,N_t";
  }
  return "?";
}

std::string ExperimentConfig::features_used() const {
  std::vector<std::string> parts;
  if (features.word_emb) parts.push_back(model_kind == "svm" ? "mean word emb" : "word emb");
  if (features.tfidf) parts.push_back("tf-idf");
  if (features.polarity) parts.push_back("pol");
  if (features.prev_val) parts.push_back("prev_val");
  std::string out;
  for (const std::string& p : parts) {
    if (!out.empty()) out += ", ";
    out += p;
  }
  return out;
}

namespace {

std::string slot_suffix(int distance) {
  if (distance == 0) return "";
  if (distance == 1) return "_prev";
  return "_prev" + std::to_string(distance);
}

std::vector<int> slot_distances(ContextMode mode) {
  switch (mode) {
    case ContextMode::Isolation: return {0};
    case ContextMode::Pair: return {1, 0};
    case ContextMode::Sequence: return {3, 2, 1, 0};
  }
  return {0};
}

}  // namespace

FeatureVector assemble_example_features(const Example& example, const ExperimentConfig& config,
                                        const TfidfModel* tfidf, const Resources& resources) {
  if (config.features.tfidf && tfidf == nullptr)
    throw ValidationError("tfidf feature enabled but no fitted vectorizer given");
  if (config.features.word_emb && !resources.embeddings)
    throw ValidationError("word_emb feature enabled but no embedding table loaded");

  std::vector<FeaturePart> parts;
  for (int distance : slot_distances(config.mode)) {
    const std::string suffix = slot_suffix(distance);
    const int position = static_cast<int>(example.context.size()) - 1 - distance;
    TokenStream tokens;
    if (position >= 0) tokens = tokenize(example.context[position].text);

    if (config.features.tfidf) {
      FeaturePart part;
      part.prefix = "tfidf" + suffix;
      part.labels = tfidf->terms;
      part.values = position >= 0 ? transform_tfidf(*tfidf, tokens).to_dense()
                                  : std::vector<double>(tfidf->dimension(), 0.0);
      parts.push_back(std::move(part));
    }
    if (config.features.word_emb) {
      FeaturePart part;
      part.prefix = "emb" + suffix;
      part.values = position >= 0 ? average_embeddings(*resources.embeddings, tokens)
                                  : std::vector<double>(resources.embeddings->dimension, 0.0);
      parts.push_back(std::move(part));
    }
    if (config.features.polarity) {
      FeaturePart part;
      part.prefix = "pol" + suffix;
      part.values = {position >= 0 ? polarity(resources.lexicon, tokens) : 0.0};
      parts.push_back(std::move(part));
    }
  }
  if (config.features.prev_val) {
    FeaturePart part;
    part.prefix = "prev_val";
    part.labels = {"Low", "Medium", "High"};
    part.values = prev_valence_feature(example.prev_valence);
    parts.push_back(std::move(part));
  }
  return assemble(parts);
}

namespace {

NarrativeInput make_narrative_input(const Subject& subject, int narrative_index,
                                    const Resources& resources, bool supervised) {
  const Narrative* narrative = subject.narrative(narrative_index);
  if (!narrative)
    throw ValidationError("subject " + subject.subject_id + " is missing narrative " +
                          std::to_string(narrative_index));
  NarrativeInput input;
  input.tokens = tokenize(narrative->text);
  if (input.tokens.empty())
    throw ValidationError("subject " + subject.subject_id + " narrative " +
                          std::to_string(narrative_index) + " has no tokens");
  input.polarity = polarity(resources.lexicon, input.tokens);
  input.prev_valence = bin_valence(subject.affect_reports[narrative_index - 1]);
  if (supervised) input.gold = bin_valence(subject.affect_reports[narrative_index]);
  return input;
}

}  // namespace

NeuralExample build_neural_example(const Subject& subject, int target_index, ContextMode mode,
                                   const Resources& resources) {
  if (target_index < 2 || target_index > 4)
    throw ValidationError("target index must be in [2,4], got " + std::to_string(target_index));
  NeuralExample example;
  example.subject_id = subject.subject_id;
  example.target_index = target_index;
  int first = target_index;
  if (mode == ContextMode::Pair) first = target_index - 1;
  if (mode == ContextMode::Sequence) first = 1;
  for (int i = first; i <= target_index; ++i)
    example.narratives.push_back(make_narrative_input(subject, i, resources,
                                                      mode == ContextMode::Sequence || i == target_index));
  return example;
}

std::vector<NeuralExample> build_neural_training_set(const Corpus& corpus,
                                                     const ExperimentConfig& config,
                                                     const Resources& resources) {
  std::vector<NeuralExample> out;
  for (const Subject& subject : corpus.subjects) {
    if (!subject.is_complete())
      throw ValidationError("neural training set requires a filtered corpus; subject " +
                            subject.subject_id + " is incomplete");
    if (config.mode == ContextMode::Sequence) {
      // One fully supervised sequence per subject. The first position enters
      // the training loss (its gold report exists) but is never evaluated.
      NeuralExample example;
      example.subject_id = subject.subject_id;
      example.target_index = 4;
      for (int i = 1; i <= 4; ++i)
        example.narratives.push_back(make_narrative_input(subject, i, resources, true));
      out.push_back(std::move(example));
    } else {
      for (int t = 2; t <= 4; ++t)
        out.push_back(build_neural_example(subject, t, config.mode, resources));
    }
  }
  return out;
}

TrainedPipeline fit_pipeline(const Corpus& training_corpus, const ExperimentConfig& config,
                             const Resources& resources) {
  config.validate();
  if (training_corpus.subjects.empty()) throw ValidationError("training corpus is empty");

  TrainedPipeline pipeline;
  pipeline.config = config;

  if (config.model_kind == "svm") {
    if (config.features.tfidf) {
      std::vector<TokenStream> documents;
      for (const Subject& subject : training_corpus.subjects)
        for (const Narrative& narrative : subject.narratives)
          documents.push_back(tokenize(narrative.text));
      pipeline.tfidf = fit_tfidf(documents, config.ngram_min, config.ngram_max, resources.stoplist);
    }
    std::vector<LabeledFeatures> training;
    for (const Example& ex : make_examples(training_corpus, config.mode))
      training.emplace_back(
          assemble_example_features(ex, config, pipeline.tfidf ? &*pipeline.tfidf : nullptr, resources),
          ex.gold);
    pipeline.svm = train_svm(training, config.svm.c, config.svm.epochs, config.svm.seed);
  } else {
    ExperimentConfig effective = config;
    effective.neural.use_polarity = config.features.polarity;
    effective.neural.use_prev_valence = config.features.prev_val;
    const std::vector<NeuralExample> training =
        build_neural_training_set(training_corpus, effective, resources);
    const std::vector<std::string> vocabulary = build_vocabulary(training);
    const EmbeddingTable* pretrained = resources.embeddings ? &*resources.embeddings : nullptr;
    NeuralModel model = init_neural_model(config.mode, vocabulary, effective.neural, pretrained);
    TrainOptions options;
    options.learning_rate = effective.neural.learning_rate;
    options.epochs = effective.neural.epochs;
    options.seed = effective.neural.seed;
    options.clip_norm = effective.neural.clip_norm;
    pipeline.neural = train_neural(model, training, options);
    pipeline.config = effective;
  }
  return pipeline;
}

namespace {

int argmax3(const std::array<double, kNumValenceClasses>& probs) {
  int best = 0;
  for (int k = 1; k < kNumValenceClasses; ++k)
    if (probs[k] > probs[best]) best = k;
  return best;
}

}  // namespace

FoldEvaluation evaluate_pipeline(const TrainedPipeline& pipeline, const Corpus& eval_corpus,
                                 const Resources& resources) {
  FoldEvaluation result;
  long correct = 0;

  if (pipeline.config.model_kind == "svm") {
    if (!pipeline.svm) throw ValidationError("pipeline has no trained SVM model");
    for (const Example& ex : make_examples(eval_corpus, pipeline.config.mode)) {
      if (ex.target_index < 2) throw ValidationError("evaluation example with target index 1");
      const FeatureVector x = assemble_example_features(
          ex, pipeline.config, pipeline.tfidf ? &*pipeline.tfidf : nullptr, resources);
      const ValenceClass predicted = predict(*pipeline.svm, x);
      result.confusion[static_cast<int>(ex.gold)][static_cast<int>(predicted)] += 1;
      if (predicted == ex.gold) ++correct;
      ++result.n_examples;
    }
  } else {
    if (!pipeline.neural) throw ValidationError("pipeline has no trained neural model");
    const NeuralModel& model = *pipeline.neural;
    for (const Subject& subject : eval_corpus.subjects) {
      if (model.mode == ContextMode::Sequence) {
        // One forward pass per subject; the unidirectional head makes the
        // output at position t independent of later narratives, so reading
        // positions 2..4 equals evaluating each prefix separately.
        NeuralExample example = build_neural_example(subject, 4, ContextMode::Sequence, resources);
        const ForwardResult forward_result = forward(model, example);
        for (int t = 2; t <= 4; ++t) {
          const int position = t - 1;
          const ValenceClass gold = bin_valence(subject.affect_reports[t]);
          const int predicted = argmax3(forward_result.probabilities[position]);
          result.confusion[static_cast<int>(gold)][predicted] += 1;
          if (predicted == static_cast<int>(gold)) ++correct;
          ++result.n_examples;
        }
      } else {
        for (int t = 2; t <= 4; ++t) {
          NeuralExample example = build_neural_example(subject, t, model.mode, resources);
          const ForwardResult forward_result = forward(model, example);
          const ValenceClass gold = bin_valence(subject.affect_reports[t]);
          const int predicted = argmax3(forward_result.probabilities.back());
          result.confusion[static_cast<int>(gold)][predicted] += 1;
          if (predicted == static_cast<int>(gold)) ++correct;
          ++result.n_examples;
        }
      }
    }
  }
  result.accuracy = result.n_examples == 0
                        ? 0.0
                        : static_cast<double>(correct) / static_cast<double>(result.n_examples);
  return result;
}

EvalReport run_experiment(const Corpus& corpus, const ExperimentConfig& config,
                          const FoldPlan& folds, const Resources& resources, bool parallel_folds) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();

  std::set<std::string> corpus_ids;
  for (const Subject& subject : corpus.subjects) {
    if (!subject.is_complete())
      throw ValidationError("run_experiment requires a filtered corpus; subject " +
                            subject.subject_id + " is incomplete");
    corpus_ids.insert(subject.subject_id);
  }
  std::set<std::string> plan_ids(folds.subject_ids.begin(), folds.subject_ids.end());
  if (corpus_ids != plan_ids)
    throw ValidationError("fold plan does not cover exactly the corpus subjects");

  auto run_fold = [&](int fold) -> FoldEvaluation {
    Corpus training, validation;
    std::set<std::string> train_ids, val_ids;
    for (const Subject& subject : corpus.subjects) {
      if (folds.fold_of(subject.subject_id) == fold) {
        validation.subjects.push_back(subject);
        val_ids.insert(subject.subject_id);
      } else {
        training.subjects.push_back(subject);
        train_ids.insert(subject.subject_id);
      }
    }
    for (const std::string& id : val_ids)
      if (train_ids.count(id))
        throw ValidationError("subject leakage across folds: " + id);
    if (training.subjects.empty() || validation.subjects.empty())
      throw ValidationError("fold " + std::to_string(fold) + " produced an empty split");
    const TrainedPipeline pipeline = fit_pipeline(training, config, resources);
    return evaluate_pipeline(pipeline, validation, resources);
  };

  std::vector<FoldEvaluation> evaluations(folds.k);
  if (parallel_folds) {
    std::vector<std::future<FoldEvaluation>> futures;
    futures.reserve(folds.k);
    for (int fold = 0; fold < folds.k; ++fold)
      futures.push_back(std::async(std::launch::async, run_fold, fold));
    for (int fold = 0; fold < folds.k; ++fold) evaluations[fold] = futures[fold].get();
  } else {
    for (int fold = 0; fold < folds.k; ++fold) evaluations[fold] = run_fold(fold);
  }

  EvalReport report;
  report.config = config;
  report.n_subjects = static_cast<int>(corpus.subjects.size());
  for (const FoldEvaluation& fold : evaluations) {
    report.fold_accuracies.push_back(fold.accuracy);
    report.n_examples += fold.n_examples;
    for (int g = 0; g < kNumValenceClasses; ++g)
      for (int p = 0; p < kNumValenceClasses; ++p) report.confusion[g][p] += fold.confusion[g][p];
  }
  const double k = static_cast<double>(folds.k);
  double mean = 0.0;
  for (double a : report.fold_accuracies) mean += a;
  mean /= k;
  double var = 0.0;
  for (double a : report.fold_accuracies) var += (a - mean) * (a - mean);
  report.mean_accuracy = mean;
  report.std_accuracy = std::sqrt(var / k);  // population std over folds
  report.duration_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

std::string report_table(const EvalReport& report) {
  std::ostringstream out;
  const std::string model =
      report.config.model_kind == "svm"
          ? "linear SVM"
          : (report.config.mode == ContextMode::Isolation
                 ? "biRNN + attn"
                 : (report.config.mode == ContextMode::Pair ? "encoder (biRNN + attn) + RNN (context pair)"
                                                            : "encoder (biRNN + attn) + RNN (sequence tagging)"));
  out << "Model: " << model << '\n';
  out << "Narratives used: " << report.config.narratives_used() << '\n';
  out << "Features: " << report.config.features_used() << '\n';
  out.setf(std::ios::fixed);
  out.precision(1);
  for (size_t i = 0; i < report.fold_accuracies.size(); ++i)
    out << "fold " << i << ": " << 100.0 * report.fold_accuracies[i] << '\n';
  out << "accuracy: " << 100.0 * report.mean_accuracy << " +-" << 100.0 * report.std_accuracy << '\n';
  out << "examples: " << report.n_examples << " over " << report.n_subjects << " subjects\n";
  out << "confusion (rows gold Low/Medium/High, columns predicted):\n";
  for (int g = 0; g < kNumValenceClasses; ++g) {
    for (int p = 0; p < kNumValenceClasses; ++p) out << report.confusion[g][p] << (p + 1 < 3 ? ' ' : '\n');
  }
  return out.str();
}

namespace detail {

json experiment_config_to_json(const ExperimentConfig& config) {
  json doc;
  doc["model"] = config.model_kind;
  doc["mode"] = to_string(config.mode);
  doc["features"] = {{"tfidf", config.features.tfidf},
                     {"word_emb", config.features.word_emb},
                     {"polarity", config.features.polarity},
                     {"prev_val", config.features.prev_val}};
  doc["svm"] = {{"C", config.svm.c}, {"epochs", config.svm.epochs}, {"seed", config.svm.seed}};
  doc["neural"] = {{"learning_rate", config.neural.learning_rate},
                   {"epochs", config.neural.epochs},
                   {"clip_norm", config.neural.clip_norm},
                   {"seed", config.neural.seed},
                   {"embedding_dim", config.neural.embedding_dim},
                   {"hidden_dim", config.neural.hidden_dim},
                   {"attention_dim", config.neural.attention_dim}};
  doc["ngram_min"] = config.ngram_min;
  doc["ngram_max"] = config.ngram_max;
  return doc;
}

ExperimentConfig experiment_config_from_json(const json& doc) {
  ExperimentConfig config;
  config.model_kind = doc.at("model").get<std::string>();
  config.mode = context_mode_from_string(doc.at("mode").get<std::string>());
  if (doc.contains("features")) {
    const json& f = doc.at("features");
    config.features.tfidf = f.value("tfidf", false);
    config.features.word_emb = f.value("word_emb", false);
    config.features.polarity = f.value("polarity", false);
    config.features.prev_val = f.value("prev_val", false);
  }
  if (doc.contains("svm")) {
    const json& s = doc.at("svm");
    config.svm.c = s.value("C", 1.0);
    config.svm.epochs = s.value("epochs", 50);
    config.svm.seed = s.value("seed", static_cast<uint64_t>(13));
  }
  if (doc.contains("neural")) {
    const json& n = doc.at("neural");
    config.neural.learning_rate = n.value("learning_rate", 0.05);
    config.neural.epochs = n.value("epochs", 100);
    config.neural.clip_norm = n.value("clip_norm", 5.0);
    config.neural.seed = n.value("seed", static_cast<uint64_t>(13));
    config.neural.embedding_dim = n.value("embedding_dim", 50);
    config.neural.hidden_dim = n.value("hidden_dim", 32);
    config.neural.attention_dim = n.value("attention_dim", 32);
  }
  config.ngram_min = doc.value("ngram_min", 1);
  config.ngram_max = doc.value("ngram_max", 2);
  config.neural.use_polarity = config.features.polarity;
  config.neural.use_prev_valence = config.features.prev_val;
  return config;
}

}  // namespace detail

void save_pipeline(const TrainedPipeline& pipeline, const std::string& path) {
  json doc;
  doc["kind"] = "pipeline";
  doc["config"] = detail::experiment_config_to_json(pipeline.config);
  if (pipeline.tfidf) {
    json t;
    t["terms"] = pipeline.tfidf->terms;
    t["idf"] = pipeline.tfidf->idf;
    t["n_documents"] = pipeline.tfidf->n_documents_fit;
    t["ngram_min"] = pipeline.tfidf->ngram_min;
    t["ngram_max"] = pipeline.tfidf->ngram_max;
    t["stoplist"] = std::vector<std::string>();
    std::vector<std::string> stop(pipeline.tfidf->stoplist.begin(), pipeline.tfidf->stoplist.end());
    std::sort(stop.begin(), stop.end());
    t["stoplist"] = stop;
    doc["tfidf"] = t;
  }
  if (pipeline.svm) doc["svm"] = detail::svm_to_json(*pipeline.svm);
  if (pipeline.neural) doc["neural"] = detail::neural_to_json(*pipeline.neural);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write pipeline file: " + path);
  out << doc.dump() << '\n';
}

TrainedPipeline load_pipeline(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open pipeline file: " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  if (doc.value("kind", "") != "pipeline") throw ParseError(path + ": not a pipeline file");
  TrainedPipeline pipeline;
  pipeline.config = detail::experiment_config_from_json(doc.at("config"));
  if (doc.contains("tfidf")) {
    const json& t = doc.at("tfidf");
    TfidfModel model;
    model.terms = t.at("terms").get<std::vector<std::string>>();
    model.idf = t.at("idf").get<std::vector<double>>();
    model.n_documents_fit = t.at("n_documents").get<int>();
    model.ngram_min = t.at("ngram_min").get<int>();
    model.ngram_max = t.at("ngram_max").get<int>();
    for (const std::string& s : t.at("stoplist").get<std::vector<std::string>>())
      model.stoplist.insert(s);
    for (size_t i = 0; i < model.terms.size(); ++i)
      model.term_index.emplace(model.terms[i], static_cast<int>(i));
    if (model.idf.size() != model.terms.size())
      throw ValidationError(path + ": tfidf idf/terms size mismatch");
    pipeline.tfidf = std::move(model);
  }
  if (doc.contains("svm")) pipeline.svm = detail::svm_from_json(doc.at("svm"), path);
  if (doc.contains("neural")) pipeline.neural = detail::neural_from_json(doc.at("neural"), path);
  return pipeline;
}

void save_report(const EvalReport& report, const std::string& path) {
  json doc;
  doc["config"] = detail::experiment_config_to_json(report.config);
  doc["fold_accuracies"] = report.fold_accuracies;
  doc["mean_accuracy"] = report.mean_accuracy;
  doc["std_accuracy"] = report.std_accuracy;
  json confusion = json::array();
  for (int g = 0; g < kNumValenceClasses; ++g) {
    json row = json::array();
    for (int p = 0; p < kNumValenceClasses; ++p) row.push_back(report.confusion[g][p]);
    confusion.push_back(row);
  }
  doc["confusion"] = confusion;
  doc["n_subjects"] = report.n_subjects;
  doc["n_examples"] = report.n_examples;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write report file: " + path);
  out << doc.dump(2) << '\n';
}

EvalReport load_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open report file: " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  EvalReport report;
  report.config = detail::experiment_config_from_json(doc.at("config"));
  report.fold_accuracies = doc.at("fold_accuracies").get<std::vector<double>>();
  report.mean_accuracy = doc.at("mean_accuracy").get<double>();
  report.std_accuracy = doc.at("std_accuracy").get<double>();
  for (int g = 0; g < kNumValenceClasses; ++g)
    for (int p = 0; p < kNumValenceClasses; ++p)
      report.confusion[g][p] = doc.at("confusion")[g][p].get<long>();
  report.n_subjects = doc.at("n_subjects").get<int>();
  report.n_examples = doc.at("n_examples").get<int>();
  return report;
}

std::vector<AttentionRecord> explain_neural(const NeuralModel& model, const NeuralExample& example) {
  return forward(model, example).attention;
}

std::array<std::vector<std::pair<std::string, double>>, kNumValenceClasses> explain_svm(
    const LinearSvmModel& model, int k) {
  std::array<std::vector<std::pair<std::string, double>>, kNumValenceClasses> out;
  for (int cls = 0; cls < kNumValenceClasses; ++cls)
    out[cls] = top_features(model, static_cast<ValenceClass>(cls), k);
  return out;
}

}  // namespace valence
