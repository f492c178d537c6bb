#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "valence/common.hpp"
#include "valence/corpus.hpp"
#include "valence/features.hpp"

namespace valence {

struct SvmHyper {
  double c = 1.0;   // regularization strength, > 0
  int epochs = 50;
  uint64_t seed = 13;
};

// One-vs-rest linear SVM over assembled feature vectors. Trained with
// epoch-shuffled subgradient descent, step size 1/(lambda*t) with
// lambda = 1/(C*n), and tail averaging over the last quarter of updates.
struct LinearSvmModel {
  std::vector<std::string> feature_names;
  std::array<std::vector<double>, kNumValenceClasses> weights;
  std::array<double, kNumValenceClasses> biases = {0.0, 0.0, 0.0};
  SvmHyper hyper;
  std::vector<double> objective_history;  // per-epoch mean over the three binary problems

  int dimension() const { return static_cast<int>(feature_names.size()); }
};

using LabeledFeatures = std::pair<FeatureVector, ValenceClass>;

LinearSvmModel train_svm(const std::vector<LabeledFeatures>& examples, double c, int epochs,
                         uint64_t seed);

/// argmax over per-class scores w_c.x + b_c; ties go to the lowest class code.
ValenceClass predict(const LinearSvmModel& model, const FeatureVector& x);

std::array<double, kNumValenceClasses> decision_scores(const LinearSvmModel& model,
                                                       const std::vector<double>& x);

/// The k largest-weight features for one class, weight descending, ties by name.
std::vector<std::pair<std::string, double>> top_features(const LinearSvmModel& model,
                                                         ValenceClass cls, int k);

/// Mean over classes of (1/n) sum hinge + (lambda/2)||w_c||^2, with one-vs-rest
/// labels. lambda is explicit so the objective can be evaluated independently
/// of how many times examples are repeated.
double svm_objective(const LinearSvmModel& model, const std::vector<LabeledFeatures>& examples,
                     double lambda);

void save_svm(const LinearSvmModel& model, const std::string& path);
LinearSvmModel load_svm(const std::string& path);

}  // namespace valence
