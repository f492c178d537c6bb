// Command line front end: corpus generation, preprocessing inspection,
// training, cross-validated evaluation, and explanation dumps. Every command
// is deterministic given its flags; all randomness flows from explicit seeds.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>

#include <CLI11.hpp>
#include <json.hpp>

#include "model_json.hpp"
#include "valence/corpus.hpp"
#include "valence/eval.hpp"
#include "valence/features.hpp"
#include "valence/neural.hpp"
#include "valence/preprocess.hpp"
#include "valence/svm.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace valence;

namespace {

uint64_t fnv1a(const std::string& s) {
  uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

void require_exists(const std::string& path, const std::string& what) {
  if (!fs::exists(path)) throw ValidationError(what + " does not exist: " + path);
}

struct RunConfig {
  std::string corpus_path;
  std::string stoplist_path;
  std::string lexicon_path;
  std::string embeddings_path;  // optional
  ExperimentConfig experiment;
  int folds = 5;
  uint64_t seed = 13;
  std::string out_dir = "out";
};

RunConfig load_run_config(const std::string& path, const std::optional<uint64_t>& seed_override,
                          const std::string& out_override) {
  require_exists(path, "config file");
  std::ifstream in(path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  RunConfig run;
  run.corpus_path = doc.at("corpus").get<std::string>();
  if (doc.contains("resources")) {
    const json& r = doc.at("resources");
    run.stoplist_path = r.value("stoplist", "");
    run.lexicon_path = r.value("polarity_lexicon", "");
    run.embeddings_path = r.value("embeddings", "");
  }
  run.folds = doc.value("folds", 5);
  run.seed = doc.value("seed", static_cast<uint64_t>(13));
  run.out_dir = doc.value("out_dir", "out");
  if (seed_override) run.seed = *seed_override;
  if (!out_override.empty()) run.out_dir = out_override;

  const json& exp = doc.at("experiment");
  run.experiment = detail::experiment_config_from_json(exp);
  // Model seeds default to the run seed unless set explicitly.
  if (!exp.contains("svm") || !exp.at("svm").contains("seed")) run.experiment.svm.seed = run.seed;
  if (!exp.contains("neural") || !exp.at("neural").contains("seed"))
    run.experiment.neural.seed = run.seed;
  run.experiment.validate();

  require_exists(run.corpus_path, "corpus file");
  if (!run.stoplist_path.empty()) require_exists(run.stoplist_path, "stoplist file");
  if (!run.lexicon_path.empty()) require_exists(run.lexicon_path, "polarity lexicon");
  if (!run.embeddings_path.empty()) require_exists(run.embeddings_path, "embedding file");
  if (run.experiment.features.word_emb && run.experiment.model_kind == "svm" &&
      run.embeddings_path.empty())
    throw ValidationError("SVM word_emb feature needs resources.embeddings in the config");
  return run;
}

std::unordered_set<std::string> corpus_token_set(const Corpus& corpus) {
  std::unordered_set<std::string> tokens;
  for (const Subject& subject : corpus.subjects)
    for (const Narrative& narrative : subject.narratives)
      for (const std::string& token : tokenize(narrative.text).tokens) tokens.insert(token);
  return tokens;
}

Resources load_resources(const RunConfig& run, const Corpus& corpus) {
  Resources resources;
  if (!run.stoplist_path.empty()) resources.stoplist = load_stoplist(run.stoplist_path);
  if (!run.lexicon_path.empty()) resources.lexicon = load_polarity_lexicon(run.lexicon_path);
  if (!run.embeddings_path.empty()) {
    const auto restrict_to = corpus_token_set(corpus);
    resources.embeddings = load_embeddings(run.embeddings_path, &restrict_to);
  }
  return resources;
}

std::string format_accuracy_row(const EvalReport& report) {
  char buffer[256];
  const std::string model = report.config.model_kind == "svm" ? "linear SVM" : "neural";
  std::snprintf(buffer, sizeof(buffer), "%s | %s | %s | %.1f +-%.1f", model.c_str(),
                report.config.narratives_used().c_str(), report.config.features_used().c_str(),
                100.0 * report.mean_accuracy, 100.0 * report.std_accuracy);
  return buffer;
}

// --- gen-synthetic ---------------------------------------------------------

int cmd_gen_synthetic(const SyntheticParams& params, const std::string& out_path,
                      std::string meta_path, const std::string& embeddings_path,
                      int embedding_dim) {
  if (meta_path.empty()) meta_path = out_path + ".meta.json";
  const SyntheticCorpus generated = generate_synthetic(params);
  if (const fs::path parent = fs::path(out_path).parent_path(); !parent.empty())
    fs::create_directories(parent);
  save_corpus(generated.corpus, out_path);
  save_synthetic_meta(generated.meta, meta_path);

  if (!embeddings_path.empty()) {
    // Demo table so averaged-embedding configurations run without external
    // downloads: one deterministic vector per corpus token.
    std::set<std::string> tokens;
    for (const std::string& t : corpus_token_set(generated.corpus)) tokens.insert(t);
    std::ofstream out(embeddings_path, std::ios::binary);
    if (!out) throw ParseError("cannot write embedding file: " + embeddings_path);
    out.setf(std::ios::fixed);
    out.precision(6);
    for (const std::string& token : tokens) {
      Rng rng(derive_seed(params.seed, fnv1a(token)));
      out << token;
      for (int i = 0; i < embedding_dim; ++i) out << ' ' << rng.next_range(-0.5, 0.5);
      out << '\n';
    }
  }

  std::cout << "wrote " << generated.corpus.subjects.size() << " subjects ("
            << 4 * generated.corpus.subjects.size() << " narratives) to " << out_path << '\n'
            << "metadata: " << meta_path << '\n';
  if (!embeddings_path.empty()) std::cout << "demo embeddings: " << embeddings_path << '\n';
  return 0;
}

// --- preprocess ------------------------------------------------------------

int cmd_preprocess(const std::string& text, const std::string& corpus_path,
                   const std::string& subject_id, int narrative_index,
                   const std::string& stoplist_path, int n_min, int n_max,
                   const std::string& out_path) {
  std::string source = text;
  if (source.empty()) {
    if (corpus_path.empty())
      throw ValidationError("pass --text or --corpus with --subject");
    require_exists(corpus_path, "corpus file");
    const Corpus corpus = load_corpus(corpus_path);
    const Subject* subject = nullptr;
    for (const Subject& s : corpus.subjects)
      if (s.subject_id == subject_id) subject = &s;
    if (!subject) throw ValidationError("unknown subject: " + subject_id);
    const Narrative* narrative = subject->narrative(narrative_index);
    if (!narrative)
      throw ValidationError("subject " + subject_id + " has no narrative " +
                            std::to_string(narrative_index));
    source = narrative->text;
  }

  TokenStream stream = tokenize(source);
  if (!stoplist_path.empty()) {
    require_exists(stoplist_path, "stoplist file");
    stream = remove_stopwords(stream, load_stoplist(stoplist_path));
  }
  const std::vector<std::string> grams = ngrams(stream, n_min, n_max);

  json doc;
  doc["text"] = source;
  doc["normalized"] = normalize(source);
  json tokens = json::array();
  for (size_t i = 0; i < stream.size(); ++i)
    tokens.push_back(json{{"token", stream.tokens[i]},
                          {"begin", stream.spans[i].begin},
                          {"end", stream.spans[i].end}});
  doc["tokens"] = tokens;
  doc["ngrams"] = grams;

  if (!out_path.empty()) {
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw ParseError("cannot write output file: " + out_path);
    out << doc.dump(2) << '\n';
  }
  std::cout << "tokens (" << stream.size() << "):";
  for (const std::string& t : stream.tokens) std::cout << ' ' << t;
  std::cout << "\nngrams (" << grams.size() << "):";
  for (const std::string& g : grams) std::cout << " [" << g << ']';
  std::cout << '\n';
  return 0;
}

// --- train -----------------------------------------------------------------

int cmd_train(const std::string& config_path, const std::optional<uint64_t>& seed_override,
              const std::string& out_override) {
  const RunConfig run = load_run_config(config_path, seed_override, out_override);
  const Corpus corpus = filter_complete_subjects(load_corpus(run.corpus_path));
  if (corpus.subjects.empty()) throw ValidationError("no complete subjects in corpus");
  const Resources resources = load_resources(run, corpus);

  const TrainedPipeline pipeline = fit_pipeline(corpus, run.experiment, resources);
  fs::create_directories(run.out_dir);
  const std::string model_path = (fs::path(run.out_dir) / "model.json").string();
  save_pipeline(pipeline, model_path);

  std::cout << "trained " << run.experiment.model_kind << " (" << to_string(run.experiment.mode)
            << ") on " << corpus.subjects.size() << " subjects\n";
  if (pipeline.neural && !pipeline.neural->loss_history.empty())
    std::cout << "final training loss: " << pipeline.neural->loss_history.back() << '\n';
  if (pipeline.svm && !pipeline.svm->objective_history.empty())
    std::cout << "final training objective: " << pipeline.svm->objective_history.back() << '\n';
  std::cout << "model: " << model_path << '\n';
  return 0;
}

// --- cross-validate --------------------------------------------------------

int cmd_cross_validate(const std::string& config_path, const std::optional<uint64_t>& seed_override,
                       const std::string& out_override, bool sequential) {
  const RunConfig run = load_run_config(config_path, seed_override, out_override);
  const Corpus corpus = filter_complete_subjects(load_corpus(run.corpus_path));
  if (corpus.subjects.empty()) throw ValidationError("no complete subjects in corpus");
  const Resources resources = load_resources(run, corpus);

  std::vector<std::string> ids;
  for (const Subject& s : corpus.subjects) ids.push_back(s.subject_id);
  const FoldPlan folds = make_folds(ids, run.folds, run.seed);

  const EvalReport report = run_experiment(corpus, run.experiment, folds, resources, !sequential);

  fs::create_directories(run.out_dir);
  const std::string report_path = (fs::path(run.out_dir) / "report.json").string();
  const std::string table_path = (fs::path(run.out_dir) / "report.txt").string();
  save_report(report, report_path);
  {
    std::ofstream out(table_path, std::ios::binary);
    if (!out) throw ParseError("cannot write report table: " + table_path);
    out << report_table(report);
  }
  std::cout << format_accuracy_row(report) << '\n';
  std::cout << "report: " << report_path << " (took " << report.duration_seconds << " s)\n";
  return 0;
}

// --- explain ---------------------------------------------------------------

int cmd_explain(const std::string& model_path, const std::string& corpus_path,
                const std::string& subject_id, int top_k, const std::string& lexicon_path,
                const std::string& out_path) {
  require_exists(model_path, "model file");
  require_exists(corpus_path, "corpus file");
  const TrainedPipeline pipeline = load_pipeline(model_path);
  const Corpus corpus = load_corpus(corpus_path);
  const Subject* subject = nullptr;
  for (const Subject& s : corpus.subjects)
    if (s.subject_id == subject_id) subject = &s;
  if (!subject) throw ValidationError("unknown subject: " + subject_id);

  json doc;
  doc["subject"] = subject_id;

  if (pipeline.neural) {
    const NeuralModel& model = *pipeline.neural;
    Resources resources;
    if (!lexicon_path.empty()) {
      require_exists(lexicon_path, "polarity lexicon");
      resources.lexicon = load_polarity_lexicon(lexicon_path);
    } else if (model.hyper.use_polarity) {
      std::cerr << "note: model uses the polarity feature but no --lexicon was given; "
                   "polarity inputs default to 0\n";
    }
    if (!subject->is_complete())
      throw ValidationError("subject " + subject_id + " is incomplete; cannot explain");

    doc["kind"] = "attention";
    doc["mode"] = to_string(model.mode);
    json groups = json::array();
    const std::vector<int> targets =
        model.mode == ContextMode::Sequence ? std::vector<int>{4} : std::vector<int>{2, 3, 4};
    for (int t : targets) {
      const NeuralExample example = build_neural_example(*subject, t, model.mode, resources);
      const ForwardResult result = forward(model, example);
      json group;
      group["target_index"] = t;
      json records = json::array();
      const int first_index = t - static_cast<int>(example.narratives.size()) + 1;
      for (size_t i = 0; i < result.attention.size(); ++i) {
        json record;
        record["narrative_index"] = first_index + static_cast<int>(i);
        json items = json::array();
        for (const AttentionItem& item : result.attention[i])
          items.push_back(json{{"token", item.token},
                               {"begin", item.span.begin},
                               {"end", item.span.end},
                               {"weight", item.weight}});
        record["items"] = items;
        records.push_back(record);
      }
      group["records"] = records;
      json probs = json::array();
      for (double p : result.probabilities.back()) probs.push_back(p);
      group["probabilities"] = probs;
      groups.push_back(group);
    }
    doc["groups"] = groups;
    std::cout << "attention records written for subject " << subject_id << " ("
              << to_string(model.mode) << " mode)\n";
  } else if (pipeline.svm) {
    const LinearSvmModel& model = *pipeline.svm;
    const int k = std::min(top_k, model.dimension());
    const auto tables = explain_svm(model, k);
    doc["kind"] = "top_features";
    json per_class = json::array();
    for (int cls = 0; cls < kNumValenceClasses; ++cls) {
      json entry;
      entry["class"] = to_string(static_cast<ValenceClass>(cls));
      json features = json::array();
      for (const auto& [name, weight] : tables[cls])
        features.push_back(json{{"name", name}, {"weight", weight}});
      entry["features"] = features;
      per_class.push_back(entry);
    }
    doc["classes"] = per_class;
    for (int cls = 0; cls < kNumValenceClasses; ++cls) {
      std::cout << to_string(static_cast<ValenceClass>(cls)) << ":\n";
      for (const auto& [name, weight] : tables[cls]) std::cout << "  " << name << "  " << weight << '\n';
    }
  } else {
    throw ValidationError("pipeline file contains no model");
  }

  if (!out_path.empty()) {
    if (const fs::path parent = fs::path(out_path).parent_path(); !parent.empty())
      fs::create_directories(parent);
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw ParseError("cannot write output file: " + out_path);
    out << doc.dump(2) << '\n';
    std::cout << "output: " << out_path << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"contextual valence prediction from personal narratives"};
  app.require_subcommand(1);

  // gen-synthetic
  auto* gen = app.add_subcommand("gen-synthetic", "generate a synthetic corpus with a planted signal");
  SyntheticParams params;
  std::string gen_out, gen_meta, gen_embeddings;
  int gen_embedding_dim = 50;
  gen->add_option("--seed", params.seed, "generator seed");
  gen->add_option("--subjects", params.n_subjects, "number of subjects (>= 5)");
  gen->add_option("--context-strength", params.context_strength,
                  "probability the class marker lands in the previous narrative");
  gen->add_option("--vocab-size", params.vocabulary_size, "filler vocabulary size (>= 50)");
  gen->add_option("--class-persistence", params.class_persistence,
                  "probability the class repeats the previous one");
  gen->add_option("--trigger-rate", params.trigger_rate, "probability any marker is planted");
  gen->add_option("--min-tokens", params.min_tokens, "minimum narrative length");
  gen->add_option("--max-tokens", params.max_tokens, "maximum narrative length");
  gen->add_option("--out", gen_out, "corpus output path")->required();
  gen->add_option("--meta", gen_meta, "metadata output path (default <out>.meta.json)");
  gen->add_option("--emit-embeddings", gen_embeddings, "also write a demo embedding table");
  gen->add_option("--embedding-dim", gen_embedding_dim, "dimension of the demo embeddings");

  // preprocess
  auto* pre = app.add_subcommand("preprocess", "inspect tokenization and n-grams");
  std::string pre_text, pre_corpus, pre_subject, pre_stoplist, pre_out;
  int pre_narrative = 1, pre_nmin = 1, pre_nmax = 2;
  pre->add_option("--text", pre_text, "raw text to preprocess");
  pre->add_option("--corpus", pre_corpus, "corpus file to read from");
  pre->add_option("--subject", pre_subject, "subject id within the corpus");
  pre->add_option("--narrative", pre_narrative, "narrative index (1..4)");
  pre->add_option("--stoplist", pre_stoplist, "stoplist file to apply");
  pre->add_option("--ngram-min", pre_nmin, "smallest n-gram size");
  pre->add_option("--ngram-max", pre_nmax, "largest n-gram size");
  pre->add_option("--out", pre_out, "structured output path");

  // train
  auto* train = app.add_subcommand("train", "train one configuration on the full corpus");
  std::string train_config, train_out;
  std::optional<uint64_t> train_seed;
  train->add_option("--config", train_config, "run configuration file")->required();
  train->add_option("--seed", train_seed, "override the config seed");
  train->add_option("--out", train_out, "override the output directory");

  // cross-validate
  auto* cv = app.add_subcommand("cross-validate", "subject-grouped k-fold evaluation");
  std::string cv_config, cv_out;
  std::optional<uint64_t> cv_seed;
  bool cv_sequential = false;
  cv->add_option("--config", cv_config, "run configuration file")->required();
  cv->add_option("--seed", cv_seed, "override the config seed");
  cv->add_option("--out", cv_out, "override the output directory");
  cv->add_flag("--sequential", cv_sequential, "run folds one after another");

  // explain
  auto* explain = app.add_subcommand("explain", "dump attention weights or top features");
  std::string ex_model, ex_corpus, ex_subject, ex_lexicon, ex_out;
  int ex_top = 15;
  explain->add_option("--model", ex_model, "trained pipeline file")->required();
  explain->add_option("--corpus", ex_corpus, "corpus file")->required();
  explain->add_option("--subject", ex_subject, "subject id")->required();
  explain->add_option("--top", ex_top, "features per class for SVM models");
  explain->add_option("--lexicon", ex_lexicon, "polarity lexicon for neural inputs");
  explain->add_option("--out", ex_out, "structured output path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed())
      return cmd_gen_synthetic(params, gen_out, gen_meta, gen_embeddings, gen_embedding_dim);
    if (pre->parsed())
      return cmd_preprocess(pre_text, pre_corpus, pre_subject, pre_narrative, pre_stoplist,
                            pre_nmin, pre_nmax, pre_out);
    if (train->parsed()) return cmd_train(train_config, train_seed, train_out);
    if (cv->parsed()) return cmd_cross_validate(cv_config, cv_seed, cv_out, cv_sequential);
    if (explain->parsed())
      return cmd_explain(ex_model, ex_corpus, ex_subject, ex_top, ex_lexicon, ex_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
