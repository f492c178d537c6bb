#include "valence/neural.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

namespace valence {

using nlohmann::json;

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void softmax_inplace(std::vector<double>& v) {
  double max_v = v[0];
  for (double x : v) max_v = std::max(max_v, x);
  double sum = 0.0;
  for (double& x : v) {
    x = std::exp(x - max_v);
    sum += x;
  }
  for (double& x : v) x /= sum;
}

void init_matrix(Matrix& m, Rng& rng) {
  const double limit = std::sqrt(6.0 / (m.rows + m.cols));
  for (double& v : m.data) v = rng.next_range(-limit, limit);
}

void init_vector(std::vector<double>& v, int fan_in, Rng& rng) {
  const double limit = std::sqrt(6.0 / (fan_in + 1));
  for (double& x : v) x = rng.next_range(-limit, limit);
}

}  // namespace

GruParams make_gru_params(int input_dim, int hidden_dim) {
  GruParams p;
  p.wz = Matrix(hidden_dim, input_dim);
  p.uz = Matrix(hidden_dim, hidden_dim);
  p.wr = Matrix(hidden_dim, input_dim);
  p.ur = Matrix(hidden_dim, hidden_dim);
  p.wh = Matrix(hidden_dim, input_dim);
  p.uh = Matrix(hidden_dim, hidden_dim);
  p.bz.assign(hidden_dim, 0.0);
  p.br.assign(hidden_dim, 0.0);
  p.bh.assign(hidden_dim, 0.0);
  return p;
}

namespace {

struct GruStepCache {
  std::vector<double> z, r, hcand, h;
};

// Inputs are stored by value; narrative lengths are tiny compared to the
// parameter tensors, and owning them keeps the backward pass simple.
struct GruRunCache {
  std::vector<std::vector<double>> xs;
  std::vector<GruStepCache> steps;
};

void gru_step_cached(const GruParams& p, const std::vector<double>& x,
                     const std::vector<double>& h_prev, GruStepCache& cache) {
  const int d = p.hidden_dim();
  std::vector<double> az, ar, ah, tmp(d);
  matvec(p.wz, x, az);
  matvec(p.uz, h_prev, tmp);
  for (int i = 0; i < d; ++i) az[i] += tmp[i] + p.bz[i];
  matvec(p.wr, x, ar);
  matvec(p.ur, h_prev, tmp);
  for (int i = 0; i < d; ++i) ar[i] += tmp[i] + p.br[i];

  cache.z.resize(d);
  cache.r.resize(d);
  for (int i = 0; i < d; ++i) {
    cache.z[i] = sigmoid(az[i]);
    cache.r[i] = sigmoid(ar[i]);
  }

  std::vector<double> rh(d);
  for (int i = 0; i < d; ++i) rh[i] = cache.r[i] * h_prev[i];
  matvec(p.wh, x, ah);
  matvec(p.uh, rh, tmp);
  cache.hcand.resize(d);
  cache.h.resize(d);
  for (int i = 0; i < d; ++i) {
    cache.hcand[i] = std::tanh(ah[i] + tmp[i] + p.bh[i]);
    cache.h[i] = (1.0 - cache.z[i]) * h_prev[i] + cache.z[i] * cache.hcand[i];
  }
}

void run_gru(const GruParams& p, GruRunCache& cache) {
  const int d = p.hidden_dim();
  cache.steps.resize(cache.xs.size());
  std::vector<double> h(d, 0.0);
  for (size_t t = 0; t < cache.xs.size(); ++t) {
    gru_step_cached(p, cache.xs[t], h, cache.steps[t]);
    h = cache.steps[t].h;
  }
}

// Backward through one full GRU run. dh_external[t] is the gradient arriving
// at h_t from outside the recurrence; dx[t] receives the input gradient.
void gru_backward(const GruParams& p, const GruRunCache& cache,
                  const std::vector<std::vector<double>>& dh_external, GruParams& grad,
                  std::vector<std::vector<double>>& dx) {
  const int d = p.hidden_dim();
  const int T = static_cast<int>(cache.xs.size());
  dx.assign(T, std::vector<double>(p.input_dim(), 0.0));
  std::vector<double> carried(d, 0.0);
  const std::vector<double> zeros(d, 0.0);
  std::vector<double> dh(d), dz(d), dr(d), dhc(d), dpre(d), drh(d);
  for (int t = T - 1; t >= 0; --t) {
    const GruStepCache& step = cache.steps[t];
    const std::vector<double>& h_prev = t == 0 ? zeros : cache.steps[t - 1].h;
    for (int i = 0; i < d; ++i) dh[i] = dh_external[t][i] + carried[i];

    for (int i = 0; i < d; ++i) {
      dhc[i] = dh[i] * step.z[i];
      dz[i] = dh[i] * (step.hcand[i] - h_prev[i]);
      carried[i] = dh[i] * (1.0 - step.z[i]);  // restart the carry for t-1
    }

    // candidate state
    for (int i = 0; i < d; ++i) dpre[i] = dhc[i] * (1.0 - step.hcand[i] * step.hcand[i]);
    outer_add(grad.wh, dpre, cache.xs[t]);
    {
      std::vector<double> rh(d);
      for (int i = 0; i < d; ++i) rh[i] = step.r[i] * h_prev[i];
      outer_add(grad.uh, dpre, rh);
    }
    for (int i = 0; i < d; ++i) grad.bh[i] += dpre[i];
    matvec_transpose_add(p.wh, dpre, dx[t]);
    drh.assign(d, 0.0);
    matvec_transpose_add(p.uh, dpre, drh);
    for (int i = 0; i < d; ++i) {
      dr[i] = drh[i] * h_prev[i];
      carried[i] += drh[i] * step.r[i];
    }

    // update gate
    for (int i = 0; i < d; ++i) dpre[i] = dz[i] * step.z[i] * (1.0 - step.z[i]);
    outer_add(grad.wz, dpre, cache.xs[t]);
    outer_add(grad.uz, dpre, h_prev);
    for (int i = 0; i < d; ++i) grad.bz[i] += dpre[i];
    matvec_transpose_add(p.wz, dpre, dx[t]);
    matvec_transpose_add(p.uz, dpre, carried);

    // reset gate
    for (int i = 0; i < d; ++i) dpre[i] = dr[i] * step.r[i] * (1.0 - step.r[i]);
    outer_add(grad.wr, dpre, cache.xs[t]);
    outer_add(grad.ur, dpre, h_prev);
    for (int i = 0; i < d; ++i) grad.br[i] += dpre[i];
    matvec_transpose_add(p.wr, dpre, dx[t]);
    matvec_transpose_add(p.ur, dpre, carried);
  }
}

struct NarrativeCache {
  std::vector<int> token_ids;
  GruRunCache fwd, bwd;  // bwd runs over the reversed token sequence
  std::vector<std::vector<double>> concat;     // per position, 2*d_h
  std::vector<std::vector<double>> attn_tanh;  // a_i = tanh(proj h_i)
  std::vector<double> alpha;
  std::vector<double> encoding;
};

struct ForwardCache {
  std::vector<NarrativeCache> narratives;
  GruRunCache head;
  std::vector<int> out_positions;
  std::vector<std::vector<double>> logits;
  std::vector<std::vector<double>> probs;
};

void encode_narrative_cached(const TokenStream& tokens, const EncoderParams& enc,
                             NarrativeCache& cache) {
  if (tokens.empty()) throw ValidationError("cannot encode an empty narrative");
  const int T = static_cast<int>(tokens.size());
  const int d_e = enc.embeddings.cols;
  const int d_h = enc.fwd.hidden_dim();

  cache.token_ids.resize(T);
  for (int t = 0; t < T; ++t) cache.token_ids[t] = enc.token_id(tokens.tokens[t]);

  cache.fwd.xs.resize(T);
  cache.bwd.xs.resize(T);
  for (int t = 0; t < T; ++t) {
    const double* row = enc.embeddings.data.data() + static_cast<size_t>(cache.token_ids[t]) * d_e;
    cache.fwd.xs[t].assign(row, row + d_e);
    cache.bwd.xs[T - 1 - t] = cache.fwd.xs[t];
  }
  run_gru(enc.fwd, cache.fwd);
  run_gru(enc.bwd, cache.bwd);

  cache.concat.assign(T, std::vector<double>(2 * d_h));
  for (int t = 0; t < T; ++t) {
    for (int i = 0; i < d_h; ++i) {
      cache.concat[t][i] = cache.fwd.steps[t].h[i];
      cache.concat[t][d_h + i] = cache.bwd.steps[T - 1 - t].h[i];
    }
  }

  cache.attn_tanh.resize(T);
  std::vector<double> scores(T);
  for (int t = 0; t < T; ++t) {
    matvec(enc.attention.proj, cache.concat[t], cache.attn_tanh[t]);
    for (double& v : cache.attn_tanh[t]) v = std::tanh(v);
    scores[t] = dot(enc.attention.context, cache.attn_tanh[t]);
  }
  softmax_inplace(scores);
  cache.alpha = std::move(scores);

  cache.encoding.assign(2 * d_h, 0.0);
  for (int t = 0; t < T; ++t)
    for (int i = 0; i < 2 * d_h; ++i) cache.encoding[i] += cache.alpha[t] * cache.concat[t][i];
}

// Gradient of the attention pooling given d(encoding); adds into the
// per-position concat gradients and the attention parameter gradients.
void attention_backward(const EncoderParams& enc, const NarrativeCache& cache,
                        const std::vector<double>& d_encoding, AttentionParams& grad,
                        std::vector<std::vector<double>>& d_concat) {
  const int T = static_cast<int>(cache.alpha.size());
  std::vector<double> d_alpha(T);
  for (int t = 0; t < T; ++t) {
    d_alpha[t] = dot(d_encoding, cache.concat[t]);
    for (size_t i = 0; i < d_encoding.size(); ++i)
      d_concat[t][i] += cache.alpha[t] * d_encoding[i];
  }
  double mix = 0.0;
  for (int t = 0; t < T; ++t) mix += cache.alpha[t] * d_alpha[t];
  for (int t = 0; t < T; ++t) {
    const double d_score = cache.alpha[t] * (d_alpha[t] - mix);
    std::vector<double> d_tanh(cache.attn_tanh[t].size());
    for (size_t i = 0; i < d_tanh.size(); ++i) {
      grad.context[i] += d_score * cache.attn_tanh[t][i];
      d_tanh[i] = d_score * enc.attention.context[i] *
                  (1.0 - cache.attn_tanh[t][i] * cache.attn_tanh[t][i]);
    }
    outer_add(grad.proj, d_tanh, cache.concat[t]);
    matvec_transpose_add(enc.attention.proj, d_tanh, d_concat[t]);
  }
}

std::vector<double> extras_for(const NeuralModel& model, const NarrativeInput& narrative) {
  std::vector<double> extras;
  if (model.hyper.use_polarity) extras.push_back(narrative.polarity);
  if (model.hyper.use_prev_valence) {
    if (!narrative.prev_valence)
      throw ValidationError("model expects a previous-valence feature but the narrative has none");
    const std::vector<double> onehot = prev_valence_feature(*narrative.prev_valence);
    extras.insert(extras.end(), onehot.begin(), onehot.end());
  }
  return extras;
}

void check_example_shape(const NeuralModel& model, const NeuralExample& example) {
  const size_t n = example.narratives.size();
  switch (model.mode) {
    case ContextMode::Isolation:
      if (n != 1)
        throw ValidationError("isolation-mode model expects 1 narrative, got " + std::to_string(n));
      break;
    case ContextMode::Pair:
      if (n != 2)
        throw ValidationError("pair-mode model expects 2 narratives, got " + std::to_string(n));
      break;
    case ContextMode::Sequence:
      if (n < 1 || n > 4)
        throw ValidationError("sequence-mode model expects 1..4 narratives, got " + std::to_string(n));
      break;
  }
}

void forward_cached(const NeuralModel& model, const NeuralExample& example, ForwardCache& cache) {
  check_example_shape(model, example);
  const int n = static_cast<int>(example.narratives.size());
  cache.narratives.resize(n);
  cache.head.xs.resize(n);
  for (int i = 0; i < n; ++i) {
    encode_narrative_cached(example.narratives[i].tokens, model.encoder, cache.narratives[i]);
    cache.head.xs[i] = cache.narratives[i].encoding;
    const std::vector<double> extras = extras_for(model, example.narratives[i]);
    cache.head.xs[i].insert(cache.head.xs[i].end(), extras.begin(), extras.end());
  }
  run_gru(model.head.gru, cache.head);

  cache.out_positions.clear();
  if (model.mode == ContextMode::Sequence) {
    for (int i = 0; i < n; ++i) cache.out_positions.push_back(i);
  } else {
    cache.out_positions.push_back(n - 1);
  }

  cache.logits.clear();
  cache.probs.clear();
  for (int pos : cache.out_positions) {
    std::vector<double> logits;
    matvec(model.head.out_weight, cache.head.steps[pos].h, logits);
    for (int k = 0; k < kNumValenceClasses; ++k) logits[k] += model.head.out_bias[k];
    std::vector<double> probs = logits;
    softmax_inplace(probs);
    cache.logits.push_back(std::move(logits));
    cache.probs.push_back(std::move(probs));
  }
}

struct Gradients {
  Matrix embeddings;
  GruParams fwd, bwd, head;
  AttentionParams attention;
  Matrix out_weight;
  std::vector<double> out_bias;
};

Gradients make_zero_gradients(const NeuralModel& m) {
  Gradients g;
  g.embeddings = Matrix(m.encoder.embeddings.rows, m.encoder.embeddings.cols);
  g.fwd = make_gru_params(m.encoder.fwd.input_dim(), m.encoder.fwd.hidden_dim());
  g.bwd = make_gru_params(m.encoder.bwd.input_dim(), m.encoder.bwd.hidden_dim());
  g.head = make_gru_params(m.head.gru.input_dim(), m.head.gru.hidden_dim());
  g.attention.proj = Matrix(m.encoder.attention.proj.rows, m.encoder.attention.proj.cols);
  g.attention.context.assign(m.encoder.attention.context.size(), 0.0);
  g.out_weight = Matrix(m.head.out_weight.rows, m.head.out_weight.cols);
  g.out_bias.assign(m.head.out_bias.size(), 0.0);
  return g;
}

// d_logits holds one gradient triple per output position (zeros where a
// position is unsupervised).
void backward(const NeuralModel& model, const ForwardCache& cache,
              const std::vector<std::vector<double>>& d_logits, Gradients& grad) {
  const int n = static_cast<int>(cache.narratives.size());
  const int d_h = model.head.gru.hidden_dim();
  const int enc_dim = 2 * model.encoder.fwd.hidden_dim();

  std::vector<std::vector<double>> dh_head(n, std::vector<double>(d_h, 0.0));
  for (size_t s = 0; s < cache.out_positions.size(); ++s) {
    const int pos = cache.out_positions[s];
    outer_add(grad.out_weight, d_logits[s], cache.head.steps[pos].h);
    for (int k = 0; k < kNumValenceClasses; ++k) grad.out_bias[k] += d_logits[s][k];
    matvec_transpose_add(model.head.out_weight, d_logits[s], dh_head[pos]);
  }

  std::vector<std::vector<double>> d_head_inputs;
  gru_backward(model.head.gru, cache.head, dh_head, grad.head, d_head_inputs);

  for (int i = 0; i < n; ++i) {
    const NarrativeCache& nc = cache.narratives[i];
    const int T = static_cast<int>(nc.token_ids.size());
    std::vector<double> d_encoding(d_head_inputs[i].begin(), d_head_inputs[i].begin() + enc_dim);

    std::vector<std::vector<double>> d_concat(T, std::vector<double>(enc_dim, 0.0));
    attention_backward(model.encoder, nc, d_encoding, grad.attention, d_concat);

    const int d_enc_h = enc_dim / 2;
    std::vector<std::vector<double>> d_fwd(T, std::vector<double>(d_enc_h, 0.0));
    std::vector<std::vector<double>> d_bwd(T, std::vector<double>(d_enc_h, 0.0));
    for (int t = 0; t < T; ++t)
      for (int k = 0; k < d_enc_h; ++k) {
        d_fwd[t][k] = d_concat[t][k];
        d_bwd[T - 1 - t][k] = d_concat[t][d_enc_h + k];
      }

    std::vector<std::vector<double>> dx_fwd, dx_bwd;
    gru_backward(model.encoder.fwd, nc.fwd, d_fwd, grad.fwd, dx_fwd);
    gru_backward(model.encoder.bwd, nc.bwd, d_bwd, grad.bwd, dx_bwd);

    const int d_e = model.encoder.embeddings.cols;
    for (int t = 0; t < T; ++t) {
      double* row = grad.embeddings.data.data() + static_cast<size_t>(nc.token_ids[t]) * d_e;
      for (int k = 0; k < d_e; ++k) row[k] += dx_fwd[t][k] + dx_bwd[T - 1 - t][k];
    }
  }
}

std::vector<std::pair<std::string, std::vector<double>*>> collect_gru(const std::string& prefix,
                                                                      GruParams& p) {
  return {{prefix + ".wz", &p.wz.data}, {prefix + ".uz", &p.uz.data}, {prefix + ".bz", &p.bz},
          {prefix + ".wr", &p.wr.data}, {prefix + ".ur", &p.ur.data}, {prefix + ".br", &p.br},
          {prefix + ".wh", &p.wh.data}, {prefix + ".uh", &p.uh.data}, {prefix + ".bh", &p.bh}};
}

std::vector<std::pair<std::string, std::vector<double>*>> collect_model_tensors(NeuralModel& m) {
  std::vector<std::pair<std::string, std::vector<double>*>> out;
  out.emplace_back("embeddings", &m.encoder.embeddings.data);
  for (auto& e : collect_gru("encoder.fwd", m.encoder.fwd)) out.push_back(e);
  for (auto& e : collect_gru("encoder.bwd", m.encoder.bwd)) out.push_back(e);
  out.emplace_back("attention.proj", &m.encoder.attention.proj.data);
  out.emplace_back("attention.context", &m.encoder.attention.context);
  for (auto& e : collect_gru("head.gru", m.head.gru)) out.push_back(e);
  out.emplace_back("output.weight", &m.head.out_weight.data);
  out.emplace_back("output.bias", &m.head.out_bias);
  return out;
}

std::vector<std::pair<std::string, std::vector<double>*>> collect_gradient_tensors(Gradients& g) {
  std::vector<std::pair<std::string, std::vector<double>*>> out;
  out.emplace_back("embeddings", &g.embeddings.data);
  for (auto& e : collect_gru("encoder.fwd", g.fwd)) out.push_back(e);
  for (auto& e : collect_gru("encoder.bwd", g.bwd)) out.push_back(e);
  out.emplace_back("attention.proj", &g.attention.proj.data);
  out.emplace_back("attention.context", &g.attention.context);
  for (auto& e : collect_gru("head.gru", g.head)) out.push_back(e);
  out.emplace_back("output.weight", &g.out_weight.data);
  out.emplace_back("output.bias", &g.out_bias);
  return out;
}

size_t count_supervised(const NeuralModel& model, const NeuralExample& example) {
  check_example_shape(model, example);
  const int n = static_cast<int>(example.narratives.size());
  size_t count = 0;
  if (model.mode == ContextMode::Sequence) {
    for (const NarrativeInput& narr : example.narratives)
      if (narr.gold) ++count;
  } else {
    if (example.narratives[n - 1].gold) ++count;
  }
  return count;
}

// Forward + backward for one example; adds nll of supervised positions and
// scales logit gradients by inv_count (1 / total supervised positions).
double accumulate_example(const NeuralModel& model, const NeuralExample& example,
                          double inv_count, Gradients& grad) {
  ForwardCache cache;
  forward_cached(model, example, cache);
  double nll = 0.0;
  std::vector<std::vector<double>> d_logits(cache.out_positions.size(),
                                            std::vector<double>(kNumValenceClasses, 0.0));
  for (size_t s = 0; s < cache.out_positions.size(); ++s) {
    const int pos = cache.out_positions[s];
    const std::optional<ValenceClass>& gold = example.narratives[pos].gold;
    if (!gold) continue;
    const int g = static_cast<int>(*gold);
    nll += -std::log(std::max(cache.probs[s][g], 1e-7));
    for (int k = 0; k < kNumValenceClasses; ++k)
      d_logits[s][k] = (cache.probs[s][k] - (k == g ? 1.0 : 0.0)) * inv_count;
  }
  backward(model, cache, d_logits, grad);
  return nll;
}

}  // namespace

int EncoderParams::token_id(const std::string& token) const {
  auto it = vocab_index.find(token);
  return it == vocab_index.end() ? 0 : it->second;
}

std::vector<double> gru_step(const std::vector<double>& x, const std::vector<double>& h,
                             const GruParams& p) {
  if (static_cast<int>(x.size()) != p.input_dim() || static_cast<int>(h.size()) != p.hidden_dim())
    throw ValidationError("gru_step shape mismatch: x has " + std::to_string(x.size()) +
                          ", h has " + std::to_string(h.size()) + ", cell is (" +
                          std::to_string(p.input_dim()) + ", " + std::to_string(p.hidden_dim()) + ")");
  GruStepCache cache;
  gru_step_cached(p, x, h, cache);
  return cache.h;
}

std::vector<std::string> build_vocabulary(const std::vector<NeuralExample>& examples) {
  std::set<std::string> tokens;
  for (const NeuralExample& ex : examples)
    for (const NarrativeInput& narr : ex.narratives)
      for (const std::string& token : narr.tokens.tokens) tokens.insert(token);
  std::vector<std::string> vocab;
  vocab.reserve(tokens.size() + 1);
  vocab.push_back("<unk>");
  for (const std::string& t : tokens)
    if (t != "<unk>") vocab.push_back(t);
  return vocab;
}

NeuralModel init_neural_model(ContextMode mode, const std::vector<std::string>& vocabulary,
                              const NeuralHyper& hyper, const EmbeddingTable* pretrained) {
  if (vocabulary.empty()) throw ValidationError("vocabulary must not be empty");
  if (hyper.embedding_dim < 1 || hyper.hidden_dim < 1 || hyper.attention_dim < 1)
    throw ValidationError("model dimensions must be positive");
  if (pretrained && pretrained->dimension != hyper.embedding_dim)
    throw ValidationError("pretrained embedding dimension " + std::to_string(pretrained->dimension) +
                          " does not match configured dimension " + std::to_string(hyper.embedding_dim));

  NeuralModel m;
  m.mode = mode;
  m.hyper = hyper;
  m.encoder.vocabulary = vocabulary;
  for (size_t i = 0; i < vocabulary.size(); ++i)
    m.encoder.vocab_index.emplace(vocabulary[i], static_cast<int>(i));

  Rng rng(derive_seed(hyper.seed, 7));
  const int v = static_cast<int>(vocabulary.size());
  const int d_e = hyper.embedding_dim;
  const int d_h = hyper.hidden_dim;
  const int d_a = hyper.attention_dim;

  m.encoder.embeddings = Matrix(v, d_e);
  init_matrix(m.encoder.embeddings, rng);
  if (pretrained) {
    for (int i = 0; i < v; ++i) {
      auto it = pretrained->vectors.find(vocabulary[i]);
      if (it == pretrained->vectors.end()) continue;
      for (int k = 0; k < d_e; ++k) m.encoder.embeddings.at(i, k) = it->second[k];
    }
  }

  m.encoder.fwd = make_gru_params(d_e, d_h);
  m.encoder.bwd = make_gru_params(d_e, d_h);
  for (GruParams* gru : {&m.encoder.fwd, &m.encoder.bwd}) {
    init_matrix(gru->wz, rng);
    init_matrix(gru->uz, rng);
    init_matrix(gru->wr, rng);
    init_matrix(gru->ur, rng);
    init_matrix(gru->wh, rng);
    init_matrix(gru->uh, rng);
  }

  m.encoder.attention.proj = Matrix(d_a, 2 * d_h);
  init_matrix(m.encoder.attention.proj, rng);
  m.encoder.attention.context.assign(d_a, 0.0);
  init_vector(m.encoder.attention.context, d_a, rng);

  const int head_input = 2 * d_h + m.extra_dim();
  m.head.gru = make_gru_params(head_input, d_h);
  init_matrix(m.head.gru.wz, rng);
  init_matrix(m.head.gru.uz, rng);
  init_matrix(m.head.gru.wr, rng);
  init_matrix(m.head.gru.ur, rng);
  init_matrix(m.head.gru.wh, rng);
  init_matrix(m.head.gru.uh, rng);

  m.head.out_weight = Matrix(kNumValenceClasses, d_h);
  init_matrix(m.head.out_weight, rng);
  m.head.out_bias.assign(kNumValenceClasses, 0.0);
  return m;
}

std::pair<std::vector<double>, AttentionRecord> encode_narrative(const TokenStream& tokens,
                                                                 const EncoderParams& enc) {
  NarrativeCache cache;
  encode_narrative_cached(tokens, enc, cache);
  AttentionRecord record;
  record.reserve(tokens.size());
  for (size_t t = 0; t < tokens.size(); ++t)
    record.push_back(AttentionItem{tokens.tokens[t], tokens.spans[t], cache.alpha[t]});
  return {cache.encoding, std::move(record)};
}

ForwardResult forward(const NeuralModel& model, const NeuralExample& example) {
  ForwardCache cache;
  forward_cached(model, example, cache);
  ForwardResult result;
  result.positions = cache.out_positions;
  for (const std::vector<double>& p : cache.probs)
    result.probabilities.push_back({p[0], p[1], p[2]});
  for (size_t i = 0; i < cache.narratives.size(); ++i) {
    const TokenStream& tokens = example.narratives[i].tokens;
    AttentionRecord record;
    for (size_t t = 0; t < tokens.size(); ++t)
      record.push_back(AttentionItem{tokens.tokens[t], tokens.spans[t], cache.narratives[i].alpha[t]});
    result.attention.push_back(std::move(record));
  }
  return result;
}

double cross_entropy(const std::array<double, kNumValenceClasses>& probs, ValenceClass gold) {
  return -std::log(std::max(probs[static_cast<int>(gold)], 1e-7));
}

double loss(const NeuralModel& model, const std::vector<NeuralExample>& batch) {
  if (batch.empty()) throw ValidationError("loss requires a non-empty batch");
  double nll = 0.0;
  size_t count = 0;
  for (const NeuralExample& example : batch) {
    ForwardCache cache;
    forward_cached(model, example, cache);
    for (size_t s = 0; s < cache.out_positions.size(); ++s) {
      const std::optional<ValenceClass>& gold = example.narratives[cache.out_positions[s]].gold;
      if (!gold) continue;
      nll += -std::log(std::max(cache.probs[s][static_cast<int>(*gold)], 1e-7));
      ++count;
    }
  }
  if (count == 0) throw ValidationError("batch has no supervised positions");
  return nll / static_cast<double>(count);
}

NeuralModel train_neural(const NeuralModel& init, const std::vector<NeuralExample>& examples,
                         const TrainOptions& options) {
  if (examples.empty()) throw ValidationError("train_neural requires at least one example");
  if (options.learning_rate < 0.0) throw ValidationError("learning rate must be >= 0");
  if (options.epochs < 1) throw ValidationError("epochs must be >= 1");
  if (options.clip_norm <= 0.0) throw ValidationError("clip threshold must be > 0");

  NeuralModel model = init;
  model.loss_history.clear();

  size_t supervised = 0;
  for (const NeuralExample& ex : examples) supervised += count_supervised(model, ex);
  if (supervised == 0) throw ValidationError("training batch has no supervised positions");
  const double inv_count = 1.0 / static_cast<double>(supervised);

  auto model_tensors = collect_model_tensors(model);
  for (int epoch = 1; epoch <= options.epochs; ++epoch) {
    Gradients grad = make_zero_gradients(model);
    double nll = 0.0;
    for (const NeuralExample& ex : examples) nll += accumulate_example(model, ex, inv_count, grad);
    const double epoch_loss = nll * inv_count;
    if (!std::isfinite(epoch_loss))
      throw TrainingError("non-finite training loss at epoch " + std::to_string(epoch));
    model.loss_history.push_back(epoch_loss);

    auto grad_tensors = collect_gradient_tensors(grad);
    double norm_sq = 0.0;
    for (auto& [name, data] : grad_tensors)
      for (double v : *data) norm_sq += v * v;
    const double norm = std::sqrt(norm_sq);
    const double scale =
        (norm > options.clip_norm && norm > 0.0) ? options.clip_norm / norm : 1.0;
    const double step = options.learning_rate * scale;
    for (size_t i = 0; i < model_tensors.size(); ++i) {
      std::vector<double>& theta = *model_tensors[i].second;
      const std::vector<double>& g = *grad_tensors[i].second;
      for (size_t k = 0; k < theta.size(); ++k) theta[k] -= step * g[k];
    }
  }
  return model;
}

double grad_check(const NeuralModel& model, const NeuralExample& example, double epsilon,
                  const GradCheckOptions& options) {
  if (epsilon < 1e-6 || epsilon > 1e-3)
    throw ValidationError("grad_check epsilon must lie in [1e-6, 1e-3]");

  NeuralModel work = model;
  const size_t supervised = count_supervised(work, example);
  if (supervised == 0) throw ValidationError("grad_check example has no supervised positions");

  Gradients grad = make_zero_gradients(work);
  accumulate_example(work, example, 1.0 / static_cast<double>(supervised), grad);

  auto model_tensors = collect_model_tensors(work);
  auto grad_tensors = collect_gradient_tensors(grad);

  if (!options.corrupt_tensor.empty()) {
    bool found = false;
    for (auto& [name, data] : grad_tensors) {
      if (name != options.corrupt_tensor) continue;
      for (double& v : *data) v *= options.corrupt_factor;
      found = true;
    }
    if (!found) throw ValidationError("unknown tensor to corrupt: " + options.corrupt_tensor);
  }

  // Embedding rows never touched by the example have exactly zero gradient;
  // restrict sampling there to rows the example actually uses.
  std::set<int> used_rows;
  for (const NarrativeInput& narr : example.narratives)
    for (const std::string& token : narr.tokens.tokens) used_rows.insert(work.encoder.token_id(token));
  std::vector<int> used_row_list(used_rows.begin(), used_rows.end());
  const int d_e = work.encoder.embeddings.cols;

  Rng rng(options.seed);
  const size_t per_tensor =
      (static_cast<size_t>(options.min_samples) + model_tensors.size() - 1) / model_tensors.size();

  const std::vector<NeuralExample> batch = {example};
  double max_rel = 0.0;
  for (size_t ti = 0; ti < model_tensors.size(); ++ti) {
    std::vector<double>& theta = *model_tensors[ti].second;
    const std::vector<double>& g = *grad_tensors[ti].second;
    std::set<size_t> picked;
    const bool is_embeddings = model_tensors[ti].first == "embeddings";
    const size_t capacity = is_embeddings ? used_row_list.size() * d_e : theta.size();
    const size_t want = std::min(per_tensor, capacity);
    while (picked.size() < want) {
      size_t idx;
      if (is_embeddings) {
        const int row = used_row_list[rng.next_index(used_row_list.size())];
        idx = static_cast<size_t>(row) * d_e + rng.next_index(d_e);
      } else {
        idx = rng.next_index(theta.size());
      }
      picked.insert(idx);
    }
    for (size_t idx : picked) {
      const double original = theta[idx];
      theta[idx] = original + epsilon;
      const double loss_plus = loss(work, batch);
      theta[idx] = original - epsilon;
      const double loss_minus = loss(work, batch);
      theta[idx] = original;
      const double numeric = (loss_plus - loss_minus) / (2.0 * epsilon);
      const double analytic = g[idx];
      const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
      max_rel = std::max(max_rel, std::fabs(analytic - numeric) / denom);
    }
  }
  return max_rel;
}

void for_each_tensor(NeuralModel& model,
                     const std::function<void(const std::string&, std::vector<double>&)>& fn) {
  for (auto& [name, data] : collect_model_tensors(model)) fn(name, *data);
}

void for_each_tensor(const NeuralModel& model,
                     const std::function<void(const std::string&, const std::vector<double>&)>& fn) {
  auto& mutable_model = const_cast<NeuralModel&>(model);
  for (auto& [name, data] : collect_model_tensors(mutable_model)) fn(name, *data);
}

namespace detail {

json neural_to_json(const NeuralModel& model) {
  json doc;
  doc["kind"] = "neural";
  doc["mode"] = to_string(model.mode);
  doc["hyper"] = {{"learning_rate", model.hyper.learning_rate},
                  {"epochs", model.hyper.epochs},
                  {"clip_norm", model.hyper.clip_norm},
                  {"seed", model.hyper.seed},
                  {"embedding_dim", model.hyper.embedding_dim},
                  {"hidden_dim", model.hyper.hidden_dim},
                  {"attention_dim", model.hyper.attention_dim},
                  {"use_polarity", model.hyper.use_polarity},
                  {"use_prev_valence", model.hyper.use_prev_valence}};
  doc["vocabulary"] = model.encoder.vocabulary;
  doc["loss_history"] = model.loss_history;
  json tensors;
  for_each_tensor(model, [&tensors](const std::string& name, const std::vector<double>& data) {
    tensors[name] = data;
  });
  doc["tensors"] = tensors;
  return doc;
}

NeuralModel neural_from_json(const json& doc, const std::string& context) {
  if (doc.value("kind", "") != "neural") throw ParseError(context + ": not a neural model document");
  NeuralHyper hyper;
  const json& h = doc.at("hyper");
  hyper.learning_rate = h.at("learning_rate").get<double>();
  hyper.epochs = h.at("epochs").get<int>();
  hyper.clip_norm = h.at("clip_norm").get<double>();
  hyper.seed = h.at("seed").get<uint64_t>();
  hyper.embedding_dim = h.at("embedding_dim").get<int>();
  hyper.hidden_dim = h.at("hidden_dim").get<int>();
  hyper.attention_dim = h.at("attention_dim").get<int>();
  hyper.use_polarity = h.at("use_polarity").get<bool>();
  hyper.use_prev_valence = h.at("use_prev_valence").get<bool>();

  NeuralModel model = init_neural_model(context_mode_from_string(doc.at("mode").get<std::string>()),
                                        doc.at("vocabulary").get<std::vector<std::string>>(), hyper);
  model.loss_history = doc.value("loss_history", std::vector<double>{});
  const json& tensors = doc.at("tensors");
  for_each_tensor(model, [&tensors, &context](const std::string& name, std::vector<double>& data) {
    const std::vector<double> loaded = tensors.at(name).get<std::vector<double>>();
    if (loaded.size() != data.size())
      throw ValidationError(context + ": tensor '" + name + "' has size " +
                            std::to_string(loaded.size()) + ", expected " +
                            std::to_string(data.size()));
    data = loaded;
  });
  return model;
}

}  // namespace detail

void save_neural(const NeuralModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write model file: " + path);
  out << detail::neural_to_json(model).dump() << '\n';
}

NeuralModel load_neural(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open model file: " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  return detail::neural_from_json(doc, path);
}

}  // namespace valence
