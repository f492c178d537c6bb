#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "valence/eval.hpp"
#include "valence/svm.hpp"

using namespace valence;

namespace {

FeatureVector fv(const std::vector<double>& values) {
  FeatureVector v;
  v.values = values;
  for (size_t i = 0; i < values.size(); ++i) v.names.push_back("f" + std::to_string(i));
  return v;
}

// Two tight clusters on the x axis, separable by the plane x = 0.
std::vector<LabeledFeatures> separable_toy_set() {
  std::vector<LabeledFeatures> out;
  for (int i = 0; i < 10; ++i) {
    const double jitter = 0.02 * i - 0.1;
    out.emplace_back(fv({2.0 + jitter, 0.1 * i - 0.5}), ValenceClass::Low);
    out.emplace_back(fv({-2.0 - jitter, 0.5 - 0.1 * i}), ValenceClass::Medium);
  }
  return out;
}

double brute_force_objective(const LinearSvmModel& model,
                             const std::vector<LabeledFeatures>& examples, double lambda) {
  double total = 0.0;
  for (int cls = 0; cls < kNumValenceClasses; ++cls) {
    double hinge = 0.0;
    for (const auto& [x, gold] : examples) {
      const double y = static_cast<int>(gold) == cls ? 1.0 : -1.0;
      double score = model.biases[cls];
      for (size_t i = 0; i < x.values.size(); ++i) score += model.weights[cls][i] * x.values[i];
      hinge += std::max(0.0, 1.0 - y * score);
    }
    hinge /= static_cast<double>(examples.size());
    double reg = 0.0;
    for (double w : model.weights[cls]) reg += w * w;
    total += hinge + 0.5 * lambda * reg;
  }
  return total / kNumValenceClasses;
}

}  // namespace

TEST_SUITE("train_svm") {
  TEST_CASE("perfect fit on the separable toy set") {
    const auto data = separable_toy_set();
    const LinearSvmModel model = train_svm(data, 1.0, 50, 13);
    int correct = 0;
    for (const auto& [x, gold] : data)
      if (predict(model, x) == gold) ++correct;
    CHECK(correct == static_cast<int>(data.size()));
  }

  TEST_CASE("duplicating the training set leaves predictions unchanged and the objective invariant") {
    const auto data = separable_toy_set();
    std::vector<LabeledFeatures> doubled = data;
    doubled.insert(doubled.end(), data.begin(), data.end());

    const LinearSvmModel model = train_svm(data, 1.0, 50, 13);
    const LinearSvmModel model_doubled = train_svm(doubled, 1.0, 50, 13);
    for (const auto& [x, gold] : data) CHECK(predict(model, x) == predict(model_doubled, x));

    // The averaged objective at any fixed parameters does not change when
    // every example appears twice.
    const double lambda = 1.0 / (1.0 * static_cast<double>(data.size()));
    const double single = svm_objective(model, data, lambda);
    const double twice = svm_objective(model, doubled, lambda);
    CHECK(std::fabs(single - twice) <= 1e-9);
  }

  TEST_CASE("identical inputs give bitwise-identical models") {
    const auto data = separable_toy_set();
    const LinearSvmModel a = train_svm(data, 0.7, 30, 99);
    const LinearSvmModel b = train_svm(data, 0.7, 30, 99);
    for (int cls = 0; cls < kNumValenceClasses; ++cls) {
      CHECK(a.biases[cls] == b.biases[cls]);
      for (size_t i = 0; i < a.weights[cls].size(); ++i)
        CHECK(a.weights[cls][i] == b.weights[cls][i]);
    }
    CHECK(a.objective_history == b.objective_history);
  }

  TEST_CASE("different seeds shuffle differently but still separate") {
    const auto data = separable_toy_set();
    const LinearSvmModel model = train_svm(data, 1.0, 50, 7);
    int correct = 0;
    for (const auto& [x, gold] : data)
      if (predict(model, x) == gold) ++correct;
    CHECK(correct == static_cast<int>(data.size()));
  }

  TEST_CASE("objective history is non-increasing over the final half within 1%") {
    const auto data = separable_toy_set();
    const LinearSvmModel model = train_svm(data, 1.0, 60, 13);
    REQUIRE(model.objective_history.size() == 60);
    for (size_t e = 30; e + 1 < model.objective_history.size(); ++e)
      CHECK(model.objective_history[e + 1] <= model.objective_history[e] * 1.01);
  }

  TEST_CASE("recorded objective matches a brute-force evaluation") {
    const auto data = separable_toy_set();
    const LinearSvmModel model = train_svm(data, 2.0, 25, 3);
    const double lambda = 1.0 / (2.0 * static_cast<double>(data.size()));
    CHECK(std::fabs(svm_objective(model, data, lambda) -
                    brute_force_objective(model, data, lambda)) <= 1e-9);
  }

  TEST_CASE("single-class input is rejected") {
    std::vector<LabeledFeatures> data;
    for (int i = 0; i < 5; ++i) data.emplace_back(fv({1.0 * i}), ValenceClass::High);
    CHECK_THROWS_AS(train_svm(data, 1.0, 10, 1), ValidationError);
  }

  TEST_CASE("mismatched dimensions are rejected") {
    std::vector<LabeledFeatures> data;
    data.emplace_back(fv({1.0, 2.0}), ValenceClass::Low);
    data.emplace_back(fv({1.0}), ValenceClass::High);
    CHECK_THROWS_AS(train_svm(data, 1.0, 10, 1), ValidationError);
  }

  TEST_CASE("bad hyperparameters are rejected") {
    const auto data = separable_toy_set();
    CHECK_THROWS_AS(train_svm(data, 0.0, 10, 1), ValidationError);
    CHECK_THROWS_AS(train_svm(data, 1.0, 0, 1), ValidationError);
  }
}

TEST_SUITE("predict") {
  TEST_CASE("all-zero model breaks the tie toward Low") {
    LinearSvmModel model;
    model.feature_names = {"f0", "f1"};
    for (auto& w : model.weights) w.assign(2, 0.0);
    CHECK(predict(model, fv({3.0, -2.0})) == ValenceClass::Low);
  }

  TEST_CASE("bias-only decision") {
    LinearSvmModel model;
    model.feature_names = {"f0"};
    for (auto& w : model.weights) w.assign(1, 0.0);
    model.biases = {0.0, 5.0, 0.0};
    CHECK(predict(model, fv({0.0})) == ValenceClass::Medium);
  }

  TEST_CASE("positive input scaling never changes the argmax when biases are zero") {
    LinearSvmModel model;
    model.feature_names = {"f0", "f1", "f2"};
    Rng rng(21);
    for (auto& w : model.weights) {
      w.resize(3);
      for (double& v : w) v = rng.next_range(-1, 1);
    }
    for (int round = 0; round < 50; ++round) {
      std::vector<double> x = {rng.next_range(-2, 2), rng.next_range(-2, 2), rng.next_range(-2, 2)};
      FeatureVector a = fv(x);
      for (double& v : x) v *= 7.25;
      FeatureVector b = fv(x);
      CHECK(predict(model, a) == predict(model, b));
    }
  }

  TEST_CASE("common positive rescaling of weights and biases preserves predictions") {
    const auto data = separable_toy_set();
    LinearSvmModel model = train_svm(data, 1.0, 30, 13);
    LinearSvmModel scaled = model;
    for (auto& w : scaled.weights)
      for (double& v : w) v *= 11.5;
    for (double& b : scaled.biases) b *= 11.5;
    for (const auto& [x, gold] : data) CHECK(predict(model, x) == predict(scaled, x));
  }

  TEST_CASE("dimension mismatch is rejected") {
    LinearSvmModel model;
    model.feature_names = {"f0", "f1"};
    for (auto& w : model.weights) w.assign(2, 0.0);
    CHECK_THROWS_AS(predict(model, fv({1.0})), ValidationError);
  }
}

TEST_SUITE("top_features") {
  TEST_CASE("sorted by weight descending") {
    LinearSvmModel model;
    model.feature_names = {"a", "b", "c"};
    model.weights = {std::vector<double>{3.0, 1.0, 2.0}, std::vector<double>(3, 0.0),
                     std::vector<double>(3, 0.0)};
    const auto top = top_features(model, ValenceClass::Low, 2);
    REQUIRE(top.size() == 2);
    CHECK(top[0] == std::pair<std::string, double>{"a", 3.0});
    CHECK(top[1] == std::pair<std::string, double>{"c", 2.0});
  }

  TEST_CASE("k equal to the dimension returns a full permutation") {
    LinearSvmModel model;
    model.feature_names = {"a", "b", "c"};
    model.weights = {std::vector<double>{-1.0, 4.0, 0.5}, std::vector<double>(3, 0.0),
                     std::vector<double>(3, 0.0)};
    const auto top = top_features(model, ValenceClass::Low, 3);
    CHECK(top.size() == 3);
    CHECK(top[0].first == "b");
    CHECK(top[2].first == "a");
  }

  TEST_CASE("ties break by feature name; zero model is all ties") {
    LinearSvmModel model;
    model.feature_names = {"c", "a", "b"};
    for (auto& w : model.weights) w.assign(3, 0.0);
    const auto top = top_features(model, ValenceClass::High, 3);
    CHECK(top[0].first == "a");
    CHECK(top[1].first == "b");
    CHECK(top[2].first == "c");
  }

  TEST_CASE("k out of range is rejected") {
    LinearSvmModel model;
    model.feature_names = {"a"};
    for (auto& w : model.weights) w.assign(1, 0.0);
    CHECK_THROWS_AS(top_features(model, ValenceClass::Low, 0), ValidationError);
    CHECK_THROWS_AS(top_features(model, ValenceClass::Low, 2), ValidationError);
  }
}

TEST_CASE("serialization round-trips the decision function bit-exactly") {
  const auto data = separable_toy_set();
  const LinearSvmModel model = train_svm(data, 1.0, 40, 17);
  const auto path = std::filesystem::temp_directory_path() / "valence_svm_model.json";
  save_svm(model, path.string());
  const LinearSvmModel loaded = load_svm(path.string());
  for (int cls = 0; cls < kNumValenceClasses; ++cls) {
    CHECK(loaded.biases[cls] == model.biases[cls]);
    for (size_t i = 0; i < model.weights[cls].size(); ++i)
      CHECK(loaded.weights[cls][i] == model.weights[cls][i]);
  }
  CHECK(loaded.feature_names == model.feature_names);
  std::filesystem::remove(path);
}

TEST_CASE("isolation-mode tf-idf separates a current-trigger synthetic corpus") {
  SyntheticParams params;
  params.seed = 31;
  params.n_subjects = 20;
  params.context_strength = 0.0;  // trigger sits in the narrative itself
  params.vocabulary_size = 50;
  const SyntheticCorpus synth = generate_synthetic(params);

  ExperimentConfig config;
  config.model_kind = "svm";
  config.mode = ContextMode::Isolation;
  config.features.tfidf = true;
  Resources resources;

  const TrainedPipeline pipeline = fit_pipeline(synth.corpus, config, resources);
  const FoldEvaluation eval = evaluate_pipeline(pipeline, synth.corpus, resources);
  CHECK(eval.n_examples == 60);
  CHECK(eval.accuracy > 0.90);  // training accuracy: triggers are fully informative
}
