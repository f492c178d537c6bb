#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "valence/common.hpp"
#include "valence/corpus.hpp"
#include "valence/features.hpp"
#include "valence/preprocess.hpp"

namespace valence {

// Gate parameters of one GRU cell:
//   z = sigmoid(Wz x + Uz h + bz)
//   r = sigmoid(Wr x + Ur h + br)
//   hcand = tanh(Wh x + Uh (r . h) + bh)
//   h' = (1 - z) . h + z . hcand
struct GruParams {
  Matrix wz, uz, wr, ur, wh, uh;
  std::vector<double> bz, br, bh;

  int input_dim() const { return wz.cols; }
  int hidden_dim() const { return wz.rows; }
};

GruParams make_gru_params(int input_dim, int hidden_dim);

/// One cell update; shapes must match (x: input_dim, h: hidden_dim).
std::vector<double> gru_step(const std::vector<double>& x, const std::vector<double>& h,
                             const GruParams& p);

// Additive scoring over concatenated bidirectional states:
// e_i = context . tanh(proj h_i), alpha = softmax(e).
struct AttentionParams {
  Matrix proj;                  // d_a x 2*d_h
  std::vector<double> context;  // d_a
};

struct EncoderParams {
  std::vector<std::string> vocabulary;  // index 0 is the <unk> token
  std::unordered_map<std::string, int> vocab_index;
  Matrix embeddings;  // |vocabulary| x d_e, trainable
  GruParams fwd, bwd;
  AttentionParams attention;

  int token_id(const std::string& token) const;
};

struct HeadParams {
  GruParams gru;       // input = 2*d_h + n_extra
  Matrix out_weight;   // 3 x d_h
  std::vector<double> out_bias;  // 3
};

struct NeuralHyper {
  double learning_rate = 0.05;
  int epochs = 100;
  double clip_norm = 5.0;
  uint64_t seed = 13;
  int embedding_dim = 50;
  int hidden_dim = 32;
  int attention_dim = 32;
  bool use_polarity = true;
  bool use_prev_valence = false;
};

struct NeuralModel {
  ContextMode mode = ContextMode::Isolation;
  NeuralHyper hyper;
  EncoderParams encoder;
  HeadParams head;
  std::vector<double> loss_history;

  int extra_dim() const {
    return (hyper.use_polarity ? 1 : 0) + (hyper.use_prev_valence ? kNumValenceClasses : 0);
  }
};

// One narrative prepared for the neural path: its tokens plus the scalar
// features appended to the encoding, and the supervision target when the
// position is trained/evaluated.
struct NarrativeInput {
  TokenStream tokens;
  double polarity = 0.0;
  std::optional<ValenceClass> prev_valence;
  std::optional<ValenceClass> gold;
};

struct NeuralExample {
  std::string subject_id;
  int target_index = 0;
  std::vector<NarrativeInput> narratives;  // ends with the target narrative
};

// Attention weights aligned back to the source text of one narrative.
struct AttentionItem {
  std::string token;
  Span span;
  double weight = 0.0;
};
using AttentionRecord = std::vector<AttentionItem>;

struct ForwardResult {
  // Output positions depend on mode: every position (sequence) or just the
  // final one (pair, isolation). `positions` holds the narrative index
  // (0-based within the example) each probability triple belongs to.
  std::vector<int> positions;
  std::vector<std::array<double, kNumValenceClasses>> probabilities;
  std::vector<AttentionRecord> attention;  // one record per context narrative
};

/// Sorted unique tokens across all narratives, with <unk> at index 0.
std::vector<std::string> build_vocabulary(const std::vector<NeuralExample>& examples);

/// Seeded initialization; embedding rows found in `pretrained` are copied.
NeuralModel init_neural_model(ContextMode mode, const std::vector<std::string>& vocabulary,
                              const NeuralHyper& hyper, const EmbeddingTable* pretrained = nullptr);

/// Encodes one narrative: bidirectional GRU then attention pooling.
std::pair<std::vector<double>, AttentionRecord> encode_narrative(const TokenStream& tokens,
                                                                 const EncoderParams& enc);

ForwardResult forward(const NeuralModel& model, const NeuralExample& example);

/// Mean negative log-probability of gold classes over supervised positions.
double loss(const NeuralModel& model, const std::vector<NeuralExample>& batch);

/// Clipped cross-entropy of one probability triple (probabilities floored at 1e-7).
double cross_entropy(const std::array<double, kNumValenceClasses>& probs, ValenceClass gold);

struct TrainOptions {
  double learning_rate = 0.05;
  int epochs = 100;
  uint64_t seed = 13;
  double clip_norm = 5.0;
};

/// Full-batch gradient descent with global gradient-norm clipping.
/// Deterministic for a fixed seed; throws TrainingError on non-finite loss.
NeuralModel train_neural(const NeuralModel& init, const std::vector<NeuralExample>& examples,
                         const TrainOptions& options);

struct GradCheckOptions {
  int min_samples = 200;
  std::string corrupt_tensor;    // empty = no corruption
  double corrupt_factor = 1.0;
  uint64_t seed = 99;
};

/// Max relative error between backprop and central finite differences over
/// sampled parameters from every tensor. epsilon must lie in [1e-6, 1e-3].
double grad_check(const NeuralModel& model, const NeuralExample& example, double epsilon,
                  const GradCheckOptions& options = {});

/// Visits every trainable tensor as (name, flat data). Non-const overload
/// powers the optimizer, gradient checker, and serialization.
void for_each_tensor(NeuralModel& model,
                     const std::function<void(const std::string&, std::vector<double>&)>& fn);
void for_each_tensor(const NeuralModel& model,
                     const std::function<void(const std::string&, const std::vector<double>&)>& fn);

void save_neural(const NeuralModel& model, const std::string& path);
NeuralModel load_neural(const std::string& path);

}  // namespace valence
