#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "valence/common.hpp"
#include "valence/corpus.hpp"
#include "valence/features.hpp"
#include "valence/neural.hpp"
#include "valence/svm.hpp"

namespace valence {

// Subject-grouped fold assignment: all examples of a subject land in one
// fold, so no individual appears on both sides of a split.
struct FoldPlan {
  int k = 0;
  std::vector<std::string> subject_ids;  // original order
  std::vector<int> folds;                // parallel to subject_ids

  int fold_of(const std::string& subject_id) const;
};

/// Seeded shuffle then round-robin assignment; fold sizes differ by at most 1.
FoldPlan make_folds(const std::vector<std::string>& subject_ids, int k, uint64_t seed);

struct FeatureToggles {
  bool tfidf = false;
  bool word_emb = false;  // averaged table for the SVM; embedding layer for the neural path
  bool polarity = false;
  bool prev_val = false;
};

struct ExperimentConfig {
  std::string model_kind = "svm";  // "svm" | "neural"
  ContextMode mode = ContextMode::Isolation;
  FeatureToggles features;
  SvmHyper svm;
  NeuralHyper neural;
  int ngram_min = 1;
  int ngram_max = 2;

  void validate() const;
  /// Table-style description of the context column ("N_t", "N_{t-1}, N_t", ...).
  std::string narratives_used() const;
  std::string features_used() const;
};

struct Resources {
  std::unordered_set<std::string> stoplist;       // tf-idf path only
  PolarityLexicon lexicon;
  std::optional<EmbeddingTable> embeddings;
};

// Everything fitted on one training split, bundled so a model file can be
// applied to fresh narratives later.
struct TrainedPipeline {
  ExperimentConfig config;
  std::optional<TfidfModel> tfidf;
  std::optional<LinearSvmModel> svm;
  std::optional<NeuralModel> neural;
};

TrainedPipeline fit_pipeline(const Corpus& training_corpus, const ExperimentConfig& config,
                             const Resources& resources);

struct FoldEvaluation {
  double accuracy = 0.0;
  std::array<std::array<long, kNumValenceClasses>, kNumValenceClasses> confusion{};  // [gold][pred]
  int n_examples = 0;
};

/// Scores every example (targets 2..4) of the evaluation corpus.
FoldEvaluation evaluate_pipeline(const TrainedPipeline& pipeline, const Corpus& eval_corpus,
                                 const Resources& resources);

void save_pipeline(const TrainedPipeline& pipeline, const std::string& path);
TrainedPipeline load_pipeline(const std::string& path);

struct EvalReport {
  ExperimentConfig config;
  std::vector<double> fold_accuracies;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;  // population std over folds
  std::array<std::array<long, kNumValenceClasses>, kNumValenceClasses> confusion{};
  int n_subjects = 0;
  int n_examples = 0;
  double duration_seconds = 0.0;  // reported on stdout; kept out of the file so reruns are byte-identical
};

/// Cross-validated evaluation. Each fold refits every trainable component on
/// its training subjects only. Folds may run concurrently; results do not
/// depend on scheduling.
EvalReport run_experiment(const Corpus& corpus, const ExperimentConfig& config,
                          const FoldPlan& folds, const Resources& resources,
                          bool parallel_folds = true);

/// One line per fold plus the aggregate row, formatted like a results table.
std::string report_table(const EvalReport& report);

void save_report(const EvalReport& report, const std::string& path);
EvalReport load_report(const std::string& path);

// ---------------------------------------------------------------------------
// Explanation outputs
// ---------------------------------------------------------------------------

/// Attention records for each narrative in the example's context.
std::vector<AttentionRecord> explain_neural(const NeuralModel& model, const NeuralExample& example);

/// Per-class top-k feature tables; "_prev"-suffixed prefixes identify
/// previous-narrative features.
std::array<std::vector<std::pair<std::string, double>>, kNumValenceClasses> explain_svm(
    const LinearSvmModel& model, int k);

// ---------------------------------------------------------------------------
// Plumbing shared by folds, the CLI and the test suites
// ---------------------------------------------------------------------------

/// Classifier input for one example under the configured features. Slots for
/// absent context narratives (short sequence prefixes) are zero blocks so
/// every example shares one dimension and name list.
FeatureVector assemble_example_features(const Example& example, const ExperimentConfig& config,
                                        const TfidfModel* tfidf, const Resources& resources);

/// Neural training set for a corpus: per-target examples in isolation/pair
/// mode, one fully supervised sequence per subject in sequence mode.
std::vector<NeuralExample> build_neural_training_set(const Corpus& corpus,
                                                     const ExperimentConfig& config,
                                                     const Resources& resources);

/// Neural example for one evaluation target.
NeuralExample build_neural_example(const Subject& subject, int target_index, ContextMode mode,
                                   const Resources& resources);

}  // namespace valence
