#include "valence/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

namespace valence {

using nlohmann::json;

const char* to_string(ValenceClass v) {
  switch (v) {
    case ValenceClass::Low: return "Low";
    case ValenceClass::Medium: return "Medium";
    case ValenceClass::High: return "High";
  }
  return "?";
}

ValenceClass valence_class_from_string(const std::string& s) {
  if (s == "Low") return ValenceClass::Low;
  if (s == "Medium") return ValenceClass::Medium;
  if (s == "High") return ValenceClass::High;
  throw ValidationError("unknown valence class: '" + s + "'");
}

ValenceClass bin_valence(int score) {
  if (score < 0 || score > 10)
    throw ValidationError("affect score out of range [0,10]: " + std::to_string(score));
  if (score <= 4) return ValenceClass::Low;
  if (score <= 7) return ValenceClass::Medium;
  return ValenceClass::High;
}

const char* to_string(NarrativePolarity p) {
  return p == NarrativePolarity::Negative ? "neg" : "pos";
}

NarrativePolarity polarity_from_string(const std::string& s) {
  if (s == "neg") return NarrativePolarity::Negative;
  if (s == "pos") return NarrativePolarity::Positive;
  throw ValidationError("unknown polarity tag: '" + s + "' (expected 'neg' or 'pos')");
}

bool Subject::is_complete() const {
  if (affect_reports.size() != 5 || narratives.size() != 4) return false;
  for (int i = 0; i < 4; ++i)
    if (narratives[i].index != i + 1) return false;
  return true;
}

const Narrative* Subject::narrative(int index) const {
  for (const Narrative& n : narratives)
    if (n.index == index) return &n;
  return nullptr;
}

const char* to_string(ContextMode m) {
  switch (m) {
    case ContextMode::Isolation: return "isolation";
    case ContextMode::Pair: return "pair";
    case ContextMode::Sequence: return "sequence";
  }
  return "?";
}

ContextMode context_mode_from_string(const std::string& s) {
  if (s == "isolation") return ContextMode::Isolation;
  if (s == "pair") return ContextMode::Pair;
  if (s == "sequence") return ContextMode::Sequence;
  throw ValidationError("unknown context mode: '" + s + "'");
}

namespace {

// Expected polarity for a narrative position: 1,2 negative; 3,4 positive.
NarrativePolarity expected_polarity(int index) {
  return index <= 2 ? NarrativePolarity::Negative : NarrativePolarity::Positive;
}

Subject subject_from_json(const json& record) {
  Subject subject;
  if (!record.is_object()) throw ValidationError("record is not an object");
  subject.subject_id = record.at("subject_id").get<std::string>();
  if (subject.subject_id.empty()) throw ValidationError("empty subject_id");

  const json& affect = record.at("affect");
  if (!affect.is_array() || affect.size() > 5)
    throw ValidationError("subject " + subject.subject_id + ": affect must be an array of at most 5 integers");
  for (const json& a : affect) {
    int score = a.get<int>();
    if (score < 0 || score > 10)
      throw ValidationError("subject " + subject.subject_id +
                            ": affect score out of range [0,10]: " + std::to_string(score));
    subject.affect_reports.push_back(score);
  }

  const json& narratives = record.value("narratives", json::array());
  if (!narratives.is_array() || narratives.size() > 4)
    throw ValidationError("subject " + subject.subject_id + ": narratives must be an array of at most 4 objects");
  for (const json& n : narratives) {
    Narrative narrative;
    narrative.subject_id = subject.subject_id;
    narrative.index = n.at("index").get<int>();
    if (narrative.index < 1 || narrative.index > 4)
      throw ValidationError("subject " + subject.subject_id +
                            ": narrative index out of range [1,4]: " + std::to_string(narrative.index));
    narrative.polarity = polarity_from_string(n.at("polarity_tag").get<std::string>());
    if (narrative.polarity != expected_polarity(narrative.index))
      throw ValidationError("subject " + subject.subject_id + ": narrative " +
                            std::to_string(narrative.index) + " carries polarity '" +
                            to_string(narrative.polarity) + "' but positions 1,2 are neg and 3,4 are pos");
    narrative.text = n.at("text").get<std::string>();
    subject.narratives.push_back(std::move(narrative));
  }
  std::sort(subject.narratives.begin(), subject.narratives.end(),
            [](const Narrative& a, const Narrative& b) { return a.index < b.index; });
  for (size_t i = 1; i < subject.narratives.size(); ++i)
    if (subject.narratives[i].index == subject.narratives[i - 1].index)
      throw ValidationError("subject " + subject.subject_id + ": duplicate narrative index " +
                            std::to_string(subject.narratives[i].index));
  return subject;
}

json subject_to_json(const Subject& subject) {
  json narratives = json::array();
  for (const Narrative& n : subject.narratives) {
    narratives.push_back(json{{"index", n.index},
                              {"polarity_tag", to_string(n.polarity)},
                              {"text", n.text}});
  }
  return json{{"subject_id", subject.subject_id},
              {"affect", subject.affect_reports},
              {"narratives", narratives}};
}

}  // namespace

Corpus load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open corpus file: " + path);
  Corpus corpus;
  corpus.provenance = path;
  std::unordered_set<std::string> seen_ids;
  std::string line;
  size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(path + ":" + std::to_string(line_number) + ": " + e.what());
    }
    Subject subject;
    try {
      subject = subject_from_json(record);
    } catch (const json::exception& e) {
      throw ParseError(path + ":" + std::to_string(line_number) + ": " + e.what());
    }
    if (!seen_ids.insert(subject.subject_id).second)
      throw ValidationError("duplicate subject_id: " + subject.subject_id);
    corpus.subjects.push_back(std::move(subject));
  }
  return corpus;
}

void save_corpus(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write corpus file: " + path);
  for (const Subject& subject : corpus.subjects) out << subject_to_json(subject).dump() << '\n';
  if (!out) throw ParseError("write failed: " + path);
}

Corpus filter_complete_subjects(const Corpus& corpus) {
  Corpus out;
  out.provenance = corpus.provenance;
  for (const Subject& s : corpus.subjects)
    if (s.is_complete()) out.subjects.push_back(s);
  return out;
}

std::vector<Example> make_examples(const Corpus& corpus, ContextMode mode) {
  std::vector<Example> out;
  for (const Subject& subject : corpus.subjects) {
    if (!subject.is_complete())
      throw ValidationError("make_examples requires a filtered corpus; subject " +
                            subject.subject_id + " is incomplete");
    for (int t = 2; t <= 4; ++t) {
      Example ex;
      ex.subject_id = subject.subject_id;
      ex.target_index = t;
      int first = t;  // isolation
      if (mode == ContextMode::Pair) first = t - 1;
      if (mode == ContextMode::Sequence) first = 1;
      for (int i = first; i <= t; ++i) ex.context.push_back(subject.narratives[i - 1]);
      ex.gold = bin_valence(subject.affect_reports[t]);
      ex.prev_valence = bin_valence(subject.affect_reports[t - 1]);
      out.push_back(std::move(ex));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic generator
// ---------------------------------------------------------------------------

namespace {

const char* kSyllables[20] = {"ba", "de", "fi", "go", "hu", "ka", "le", "mi", "no", "pu",
                              "ra", "se", "ti", "wo", "lu", "na", "re", "so", "tu", "mo"};

// Filler words are three-syllable pseudo-words; they can never collide with
// the trigger nouns or sentiment words below.
std::string filler_word(int i) {
  return std::string(kSyllables[i % 20]) + kSyllables[(i / 20) % 20] + kSyllables[(i / 400) % 20];
}

const std::array<std::string, kNumValenceClasses> kContextTriggers = {"bergsee", "windrad", "leuchtturm"};
const std::array<std::string, kNumValenceClasses> kCurrentTriggers = {"steinbruch", "segelboot", "sonnenhof"};

const std::vector<std::string> kNegativeWords = {"schlecht", "traurig", "furchtbar", "anstrengend", "einsam"};
const std::vector<std::string> kPositiveWords = {"schön", "gut", "glücklich", "zufrieden", "froh"};
const std::vector<std::string> kDisfluencies = {"ähm", "äh"};

int sample_score_in_bin(ValenceClass c, Rng& rng) {
  switch (c) {
    case ValenceClass::Low: return static_cast<int>(rng.next_index(5));        // 0..4
    case ValenceClass::Medium: return 5 + static_cast<int>(rng.next_index(3)); // 5..7
    case ValenceClass::High: return 8 + static_cast<int>(rng.next_index(3));   // 8..10
  }
  return 0;
}

}  // namespace

bool SyntheticMeta::is_trigger_token(const std::string& token) const {
  for (const auto& t : context_triggers)
    if (t == token) return true;
  for (const auto& t : current_triggers)
    if (t == token) return true;
  return false;
}

std::vector<std::string> SyntheticMeta::triggers_in(const std::string& subject_id, int narrative_index) const {
  std::vector<std::string> out;
  for (const PlantRecord& p : plants)
    if (p.subject_id == subject_id && p.narrative_index == narrative_index && !p.trigger.empty())
      out.push_back(p.trigger);
  return out;
}

SyntheticCorpus generate_synthetic(const SyntheticParams& params) {
  if (params.n_subjects < 5)
    throw ValidationError("n_subjects must be >= 5 (needed for 5 folds), got " +
                          std::to_string(params.n_subjects));
  if (params.vocabulary_size < 50)
    throw ValidationError("vocabulary_size must be >= 50, got " + std::to_string(params.vocabulary_size));
  if (params.context_strength < 0.0 || params.context_strength > 1.0)
    throw ValidationError("context_strength must be in [0,1]");
  if (params.class_persistence < 0.0 || params.class_persistence > 1.0)
    throw ValidationError("class_persistence must be in [0,1]");
  if (params.trigger_rate < 0.0 || params.trigger_rate > 1.0)
    throw ValidationError("trigger_rate must be in [0,1]");
  if (params.min_tokens < 5 || params.max_tokens < params.min_tokens)
    throw ValidationError("token length range invalid");

  Rng rng(params.seed);
  SyntheticCorpus result;
  result.meta.params = params;
  result.meta.context_triggers = kContextTriggers;
  result.meta.current_triggers = kCurrentTriggers;

  std::ostringstream prov;
  prov << "synthetic seed=" << params.seed << " subjects=" << params.n_subjects
       << " context_strength=" << params.context_strength
       << " vocabulary_size=" << params.vocabulary_size
       << " class_persistence=" << params.class_persistence
       << " trigger_rate=" << params.trigger_rate;
  result.corpus.provenance = prov.str();

  for (int s = 0; s < params.n_subjects; ++s) {
    Subject subject;
    {
      std::ostringstream id;
      id << "synth-" << (s < 10 ? "000" : s < 100 ? "00" : s < 1000 ? "0" : "") << s;
      subject.subject_id = id.str();
    }

    // Class of each affect report; classes[t] follows narrative t.
    std::array<ValenceClass, 5> classes;
    classes[0] = static_cast<ValenceClass>(rng.next_index(3));
    for (int t = 1; t <= 4; ++t) {
      if (rng.next_double() < params.class_persistence)
        classes[t] = classes[t - 1];
      else
        classes[t] = static_cast<ValenceClass>(rng.next_index(3));
    }
    for (int t = 0; t <= 4; ++t) subject.affect_reports.push_back(sample_score_in_bin(classes[t], rng));

    // Filler text first; triggers are spliced in afterwards.
    std::array<std::vector<std::string>, 5> words;  // index 1..4 used
    for (int i = 1; i <= 4; ++i) {
      const int len = params.min_tokens +
                      static_cast<int>(rng.next_index(static_cast<uint64_t>(params.max_tokens - params.min_tokens + 1)));
      const auto& sentiment = (i <= 2) ? kNegativeWords : kPositiveWords;
      for (int w = 0; w < len; ++w) {
        double r = rng.next_double();
        if (r < 0.08)
          words[i].push_back(sentiment[rng.next_index(sentiment.size())]);
        else if (r < 0.13)
          words[i].push_back(kDisfluencies[rng.next_index(kDisfluencies.size())]);
        else
          words[i].push_back(filler_word(static_cast<int>(rng.next_index(params.vocabulary_size))));
      }
    }

    for (int t = 1; t <= 4; ++t) {
      PlantRecord plant;
      plant.subject_id = subject.subject_id;
      plant.target_index = t;
      plant.label = classes[t];
      if (rng.next_double() < params.trigger_rate) {
        // The first narrative has no predecessor, so its marker always sits
        // in the narrative itself.
        const bool in_previous = t > 1 && rng.next_double() < params.context_strength;
        const int holder = in_previous ? t - 1 : t;
        const std::string& token =
            in_previous ? kContextTriggers[static_cast<int>(classes[t])]
                        : kCurrentTriggers[static_cast<int>(classes[t])];
        auto& target_words = words[holder];
        const size_t pos = rng.next_index(target_words.size() + 1);
        target_words.insert(target_words.begin() + static_cast<long>(pos), token);
        plant.placement = in_previous ? "previous" : "current";
        plant.trigger = token;
        plant.narrative_index = holder;
      } else {
        plant.placement = "none";
      }
      result.meta.plants.push_back(std::move(plant));
    }

    // Light transcription noise: occasional trailing punctuation and an
    // occasional capitalized opening word, so preprocessing has real work.
    for (int i = 1; i <= 4; ++i) {
      std::string text;
      for (size_t w = 0; w < words[i].size(); ++w) {
        std::string token = words[i][w];
        if (w == 0 && rng.next_double() < 0.25 && token[0] >= 'a' && token[0] <= 'z')
          token[0] = static_cast<char>(token[0] - 0x20);
        if (!text.empty()) text += ' ';
        text += token;
        double r = rng.next_double();
        if (r < 0.04)
          text += ',';
        else if (r < 0.07)
          text += '.';
      }
      Narrative narrative;
      narrative.subject_id = subject.subject_id;
      narrative.index = i;
      narrative.polarity = expected_polarity(i);
      narrative.text = std::move(text);
      subject.narratives.push_back(std::move(narrative));
    }
    result.corpus.subjects.push_back(std::move(subject));
  }
  return result;
}

namespace {

json plant_to_json(const PlantRecord& p) {
  return json{{"subject_id", p.subject_id}, {"target_index", p.target_index},
              {"label", to_string(p.label)}, {"placement", p.placement},
              {"trigger", p.trigger},        {"narrative_index", p.narrative_index}};
}

}  // namespace

void save_synthetic_meta(const SyntheticMeta& meta, const std::string& path) {
  json doc;
  doc["seed"] = meta.params.seed;
  doc["n_subjects"] = meta.params.n_subjects;
  doc["context_strength"] = meta.params.context_strength;
  doc["vocabulary_size"] = meta.params.vocabulary_size;
  doc["class_persistence"] = meta.params.class_persistence;
  doc["trigger_rate"] = meta.params.trigger_rate;
  doc["min_tokens"] = meta.params.min_tokens;
  doc["max_tokens"] = meta.params.max_tokens;
  for (int c = 0; c < kNumValenceClasses; ++c) {
    doc["context_triggers"][to_string(static_cast<ValenceClass>(c))] = meta.context_triggers[c];
    doc["current_triggers"][to_string(static_cast<ValenceClass>(c))] = meta.current_triggers[c];
  }
  json plants = json::array();
  for (const PlantRecord& p : meta.plants) plants.push_back(plant_to_json(p));
  doc["plants"] = plants;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write metadata file: " + path);
  out << doc.dump(2) << '\n';
}

SyntheticMeta load_synthetic_meta(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open metadata file: " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  SyntheticMeta meta;
  meta.params.seed = doc.at("seed").get<uint64_t>();
  meta.params.n_subjects = doc.at("n_subjects").get<int>();
  meta.params.context_strength = doc.at("context_strength").get<double>();
  meta.params.vocabulary_size = doc.at("vocabulary_size").get<int>();
  meta.params.class_persistence = doc.value("class_persistence", 0.0);
  meta.params.trigger_rate = doc.value("trigger_rate", 1.0);
  meta.params.min_tokens = doc.value("min_tokens", 18);
  meta.params.max_tokens = doc.value("max_tokens", 36);
  for (int c = 0; c < kNumValenceClasses; ++c) {
    const char* name = to_string(static_cast<ValenceClass>(c));
    meta.context_triggers[c] = doc.at("context_triggers").at(name).get<std::string>();
    meta.current_triggers[c] = doc.at("current_triggers").at(name).get<std::string>();
  }
  for (const json& p : doc.at("plants")) {
    PlantRecord plant;
    plant.subject_id = p.at("subject_id").get<std::string>();
    plant.target_index = p.at("target_index").get<int>();
    plant.label = valence_class_from_string(p.at("label").get<std::string>());
    plant.placement = p.at("placement").get<std::string>();
    plant.trigger = p.at("trigger").get<std::string>();
    plant.narrative_index = p.at("narrative_index").get<int>();
    meta.plants.push_back(std::move(plant));
  }
  return meta;
}

}  // namespace valence
