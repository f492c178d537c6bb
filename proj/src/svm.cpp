#include "valence/svm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include <json.hpp>

namespace valence {

using nlohmann::json;

namespace {

double binary_objective(const std::vector<double>& w, double b,
                        const std::vector<LabeledFeatures>& examples, int positive_class,
                        double lambda) {
  double hinge = 0.0;
  for (const auto& [x, gold] : examples) {
    const double y = static_cast<int>(gold) == positive_class ? 1.0 : -1.0;
    const double margin = y * (dot(w, x.values) + b);
    hinge += std::max(0.0, 1.0 - margin);
  }
  hinge /= static_cast<double>(examples.size());
  double w_sq = 0.0;
  for (double v : w) w_sq += v * v;
  return hinge + 0.5 * lambda * w_sq;
}

}  // namespace

LinearSvmModel train_svm(const std::vector<LabeledFeatures>& examples, double c, int epochs,
                         uint64_t seed) {
  if (examples.empty()) throw ValidationError("train_svm requires at least one example");
  if (c <= 0.0) throw ValidationError("C must be > 0");
  if (epochs < 1) throw ValidationError("epochs must be >= 1");

  const FeatureVector& first = examples.front().first;
  std::set<int> distinct;
  for (const auto& [x, gold] : examples) {
    if (x.values.size() != first.values.size() || x.names != first.names)
      throw ValidationError("feature vectors disagree in dimension or names");
    distinct.insert(static_cast<int>(gold));
  }
  if (distinct.size() < 2) throw ValidationError("training data contains a single class");

  const size_t n = examples.size();
  const int d = first.dimension();
  const double lambda = 1.0 / (c * static_cast<double>(n));

  LinearSvmModel model;
  model.feature_names = first.names;
  model.hyper = SvmHyper{c, epochs, seed};
  for (auto& w : model.weights) w.assign(d, 0.0);

  std::array<std::vector<double>, kNumValenceClasses> w_sum;
  std::array<double, kNumValenceClasses> b_sum = {0.0, 0.0, 0.0};
  for (auto& w : w_sum) w.assign(d, 0.0);

  const uint64_t total_updates = static_cast<uint64_t>(epochs) * n;
  const uint64_t tail = std::max<uint64_t>(1, total_updates / 4);  // last 25% of steps
  const uint64_t average_from = total_updates - tail + 1;
  uint64_t averaged_steps = 0;

  Rng rng(derive_seed(seed, 1));
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  uint64_t t = 0;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    rng.shuffle(order);
    for (size_t idx : order) {
      ++t;
      const double eta = 1.0 / (lambda * static_cast<double>(t));
      const auto& [x, gold] = examples[idx];
      for (int cls = 0; cls < kNumValenceClasses; ++cls) {
        std::vector<double>& w = model.weights[cls];
        double& b = model.biases[cls];
        const double y = static_cast<int>(gold) == cls ? 1.0 : -1.0;
        const double margin = y * (dot(w, x.values) + b);
        const double shrink = 1.0 - eta * lambda;
        if (margin < 1.0) {
          const double step = eta * y;
          for (int i = 0; i < d; ++i) w[i] = shrink * w[i] + step * x.values[i];
          b += step;
        } else {
          for (double& v : w) v *= shrink;
        }
      }
      if (t >= average_from) {
        ++averaged_steps;
        for (int cls = 0; cls < kNumValenceClasses; ++cls) {
          for (int i = 0; i < d; ++i) w_sum[cls][i] += model.weights[cls][i];
          b_sum[cls] += model.biases[cls];
        }
      }
    }
    double epoch_objective = 0.0;
    for (int cls = 0; cls < kNumValenceClasses; ++cls)
      epoch_objective += binary_objective(model.weights[cls], model.biases[cls], examples, cls, lambda);
    model.objective_history.push_back(epoch_objective / kNumValenceClasses);
  }

  for (int cls = 0; cls < kNumValenceClasses; ++cls) {
    for (int i = 0; i < d; ++i) model.weights[cls][i] = w_sum[cls][i] / static_cast<double>(averaged_steps);
    model.biases[cls] = b_sum[cls] / static_cast<double>(averaged_steps);
    for (double v : model.weights[cls]) ensure_finite(v, "trained SVM weights");
    ensure_finite(model.biases[cls], "trained SVM biases");
  }
  return model;
}

std::array<double, kNumValenceClasses> decision_scores(const LinearSvmModel& model,
                                                       const std::vector<double>& x) {
  if (static_cast<int>(x.size()) != model.dimension())
    throw ValidationError("feature dimension " + std::to_string(x.size()) +
                          " does not match model dimension " + std::to_string(model.dimension()));
  std::array<double, kNumValenceClasses> scores;
  for (int cls = 0; cls < kNumValenceClasses; ++cls)
    scores[cls] = dot(model.weights[cls], x) + model.biases[cls];
  return scores;
}

ValenceClass predict(const LinearSvmModel& model, const FeatureVector& x) {
  const auto scores = decision_scores(model, x.values);
  int best = 0;
  for (int cls = 1; cls < kNumValenceClasses; ++cls)
    if (scores[cls] > scores[best]) best = cls;  // strict: ties keep the lowest code
  return static_cast<ValenceClass>(best);
}

std::vector<std::pair<std::string, double>> top_features(const LinearSvmModel& model,
                                                         ValenceClass cls, int k) {
  const int d = model.dimension();
  if (k < 1 || k > d)
    throw ValidationError("top_features k must be in [1, " + std::to_string(d) + "], got " +
                          std::to_string(k));
  std::vector<std::pair<std::string, double>> ranked;
  ranked.reserve(d);
  const std::vector<double>& w = model.weights[static_cast<int>(cls)];
  for (int i = 0; i < d; ++i) ranked.emplace_back(model.feature_names[i], w[i]);
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  ranked.resize(k);
  return ranked;
}

double svm_objective(const LinearSvmModel& model, const std::vector<LabeledFeatures>& examples,
                     double lambda) {
  if (examples.empty()) throw ValidationError("svm_objective requires examples");
  double total = 0.0;
  for (int cls = 0; cls < kNumValenceClasses; ++cls)
    total += binary_objective(model.weights[cls], model.biases[cls], examples, cls, lambda);
  return total / kNumValenceClasses;
}

namespace detail {

json svm_to_json(const LinearSvmModel& model) {
  json doc;
  doc["kind"] = "linear_svm";
  doc["feature_names"] = model.feature_names;
  doc["weights"] = {model.weights[0], model.weights[1], model.weights[2]};
  doc["biases"] = {model.biases[0], model.biases[1], model.biases[2]};
  doc["hyper"] = {{"C", model.hyper.c}, {"epochs", model.hyper.epochs}, {"seed", model.hyper.seed}};
  doc["objective_history"] = model.objective_history;
  return doc;
}

LinearSvmModel svm_from_json(const json& doc, const std::string& context) {
  if (doc.value("kind", "") != "linear_svm")
    throw ParseError(context + ": not a linear SVM model document");
  LinearSvmModel model;
  model.feature_names = doc.at("feature_names").get<std::vector<std::string>>();
  for (int cls = 0; cls < kNumValenceClasses; ++cls) {
    model.weights[cls] = doc.at("weights")[cls].get<std::vector<double>>();
    model.biases[cls] = doc.at("biases")[cls].get<double>();
    if (model.weights[cls].size() != model.feature_names.size())
      throw ValidationError(context + ": weight vector size does not match feature names");
  }
  model.hyper.c = doc.at("hyper").at("C").get<double>();
  model.hyper.epochs = doc.at("hyper").at("epochs").get<int>();
  model.hyper.seed = doc.at("hyper").at("seed").get<uint64_t>();
  model.objective_history = doc.value("objective_history", std::vector<double>{});
  return model;
}

}  // namespace detail

void save_svm(const LinearSvmModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write model file: " + path);
  out << detail::svm_to_json(model).dump(2) << '\n';
}

LinearSvmModel load_svm(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open model file: " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  return detail::svm_from_json(doc, path);
}

}  // namespace valence
