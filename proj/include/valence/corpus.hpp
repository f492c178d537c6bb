#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "valence/common.hpp"

namespace valence {

// The valence target: a 0-10 self-report binned into three classes.
// Codes are fixed (Low=0, Medium=1, High=2) and stable across runs.
enum class ValenceClass : int { Low = 0, Medium = 1, High = 2 };

constexpr int kNumValenceClasses = 3;

const char* to_string(ValenceClass v);
ValenceClass valence_class_from_string(const std::string& s);

/// Bins a 0-10 affect score: 0-4 Low, 5-7 Medium, 8-10 High.
ValenceClass bin_valence(int score);

enum class NarrativePolarity { Negative, Positive };

const char* to_string(NarrativePolarity p);
NarrativePolarity polarity_from_string(const std::string& s);

// One ~5 minute personal story. Positions 1 and 2 are elicited as negative
// stories, 3 and 4 as positive ones.
struct Narrative {
  std::string subject_id;
  int index = 0;  // 1..4
  NarrativePolarity polarity = NarrativePolarity::Negative;
  std::string text;
};

// One participant: up to 4 narratives (sorted by index, possibly with gaps
// before filtering) and up to 5 affect reports. affect_reports[0] precedes
// the first narrative; affect_reports[t] follows narrative t.
struct Subject {
  std::string subject_id;
  std::vector<Narrative> narratives;
  std::vector<int> affect_reports;

  bool is_complete() const;
  /// Narrative at position `index` (1..4), or nullptr if missing.
  const Narrative* narrative(int index) const;
};

struct Corpus {
  std::vector<Subject> subjects;
  std::string provenance;
};

/// Reads line-delimited JSON, one subject per line. Parse failures carry the
/// line number; invariant violations carry the subject id. Subjects with
/// missing narratives are kept (pre-filter state).
Corpus load_corpus(const std::string& path);

/// Writes the same line-delimited format, deterministically.
void save_corpus(const Corpus& corpus, const std::string& path);

/// Keeps only subjects with all 4 narratives and all 5 affect reports.
Corpus filter_complete_subjects(const Corpus& corpus);

// How much history a model sees for a given target narrative.
enum class ContextMode { Isolation, Pair, Sequence };

const char* to_string(ContextMode m);
ContextMode context_mode_from_string(const std::string& s);

// One classification instance: predict the valence reported after the target
// narrative. First narratives are never targets (no previous narrative), but
// they do appear as context.
struct Example {
  std::string subject_id;
  int target_index = 0;  // 2..4
  std::vector<Narrative> context;  // always ends with the target narrative
  ValenceClass prev_valence = ValenceClass::Low;  // gold class before the target
  ValenceClass gold = ValenceClass::Low;          // gold class after the target
};

/// One Example per (subject, t) for t in {2,3,4}. Context depends on mode:
/// isolation [N_t], pair [N_{t-1}, N_t], sequence [N_1..N_t].
/// Requires a corpus already filtered to complete subjects.
std::vector<Example> make_examples(const Corpus& corpus, ContextMode mode);

// ---------------------------------------------------------------------------
// Synthetic corpora. The real transcripts cannot be redistributed, so desk
// verification runs on generated data with a planted, decodable signal:
// with probability context_strength the class of narrative t is marked by a
// trigger token placed only in narrative t-1, otherwise by one in t itself.
// ---------------------------------------------------------------------------

struct SyntheticParams {
  uint64_t seed = 1;
  int n_subjects = 50;
  double context_strength = 1.0;  // P(trigger goes into the previous narrative)
  int vocabulary_size = 200;      // filler word inventory
  double class_persistence = 0.0; // P(class_t = class_{t-1}); 0 = iid classes
  double trigger_rate = 1.0;      // P(any trigger is planted for a target)
  int min_tokens = 18;
  int max_tokens = 36;
};

// Where the class-determining token for one target ended up.
struct PlantRecord {
  std::string subject_id;
  int target_index = 0;            // 1..4
  ValenceClass label = ValenceClass::Low;
  std::string placement;           // "previous" | "current" | "none"
  std::string trigger;             // empty when placement == "none"
  int narrative_index = 0;         // narrative holding the trigger; 0 when none
};

struct SyntheticMeta {
  SyntheticParams params;
  std::array<std::string, kNumValenceClasses> context_triggers;  // planted in t-1
  std::array<std::string, kNumValenceClasses> current_triggers;  // planted in t
  std::vector<PlantRecord> plants;

  bool is_trigger_token(const std::string& token) const;
  /// Planted trigger tokens for one narrative of one subject.
  std::vector<std::string> triggers_in(const std::string& subject_id, int narrative_index) const;
};

struct SyntheticCorpus {
  Corpus corpus;
  SyntheticMeta meta;
};

/// Deterministic in all parameters: equal inputs give byte-identical corpora.
SyntheticCorpus generate_synthetic(const SyntheticParams& params);

void save_synthetic_meta(const SyntheticMeta& meta, const std::string& path);
SyntheticMeta load_synthetic_meta(const std::string& path);

}  // namespace valence
