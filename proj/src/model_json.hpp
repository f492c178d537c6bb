#pragma once

// Internal JSON conversions shared by the model files and the pipeline
// bundle. Not part of the public headers.

#include <json.hpp>

#include "valence/eval.hpp"
#include "valence/neural.hpp"
#include "valence/svm.hpp"

namespace valence::detail {

nlohmann::json svm_to_json(const LinearSvmModel& model);
LinearSvmModel svm_from_json(const nlohmann::json& doc, const std::string& context);

nlohmann::json neural_to_json(const NeuralModel& model);
NeuralModel neural_from_json(const nlohmann::json& doc, const std::string& context);

nlohmann::json experiment_config_to_json(const ExperimentConfig& config);
ExperimentConfig experiment_config_from_json(const nlohmann::json& doc);

}  // namespace valence::detail
