#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "ig/dataset.hpp"
#include "ig/llm.hpp"
#include "ig/text_analysis.hpp"

namespace ig::datagen {

/// The three object-selection criteria plus the mechanized ambiguity rule.
struct SelectionConfig {
  int min_scene_occurrences = 4;       // class must appear in >= this many scenes
  int max_instances_per_scene = 6;     // exclusive: keep classes with fewer instances
  std::vector<std::set<std::string>> ambiguity_groups;  // classes that may not co-occur as targets
  std::set<std::string> excluded_structural_classes = {"wall", "ceiling", "floor", "door", "window"};
};

struct LLMClientConfig {
  std::string endpoint;  // empty -> $IG_LLM_ENDPOINT
  std::string model_name = "gpt-4";
  double temperature = 1.2;
  int texts_per_object = 6;
};

struct DatasetStats {
  std::int64_t total_texts = 0;
  int num_fine_classes = 0;
  int num_scenes = 0;
  std::map<int, std::int64_t> text_length_histogram;  // whitespace-token length -> count
  std::map<std::string, int> verbs_per_class;         // distinct verbs per fine class
  std::map<std::string, int> nouns_per_class;
  int distinct_verbs = 0;
  int distinct_nouns = 0;

  std::string to_json() const;
};

/// Builds a SceneGraph from raw object annotations; orders objects by
/// instance_id and fills class_counts. Throws on duplicate instance ids.
data::SceneGraph build_scene_graph(std::vector<data::ObjectRecord> annotations,
                                   const std::string& scene_id, const std::string& scene_type);

/// Applies the selection criteria to one scene against the whole corpus.
/// Returns (fine_class, all instances of it in the scene), sorted by class.
/// When two surviving classes share an ambiguity group, the
/// lexicographically later one is dropped.
std::vector<std::pair<std::string, std::vector<data::ObjectRecord>>> select_objects(
    const data::SceneGraph& scene, const std::vector<data::SceneGraph>& all_scenes,
    const SelectionConfig& cfg);

struct TextSource {
  enum class Kind { Template, Llm };
  Kind kind = Kind::Template;
  std::uint64_t rng_seed = 0;   // template mode
  LLMClientConfig llm;          // llm mode
  llm::Transport transport;     // optional transport override (tests)
};

/// Produces texts_per_object intention texts for the target class.
/// Template mode draws deterministically from the built-in phrase bank;
/// llm mode sends the two-part prompt for the scene and splits the
/// completion into lines.
std::vector<std::string> generate_intention_texts(const std::string& target_class,
                                                  const data::SceneGraph& scene,
                                                  const TextSource& source,
                                                  int texts_per_object = 6);

/// The constraint prompt sent as the system message in llm mode.
const std::string& constraint_prompt();

/// The scene-context prompt: "In a <scene> with <objects>, what can you do
/// with each object?"
std::string scene_context_prompt(const data::SceneGraph& scene);

struct RejectedText {
  std::string text;
  std::string reason;  // too_short | gibberish | duplicate | mentions_target
};

struct CleanResult {
  std::vector<std::string> kept;
  std::vector<RejectedText> rejected;
};

/// Filters generation failures: fragments (< 4 words), gibberish
/// (non-printable bytes or escaped-unicode sequences), verbatim duplicates,
/// and texts that leak the target class name or a banned synonym.
CleanResult clean_texts(const std::vector<std::string>& texts, const std::string& target_class,
                        const std::set<std::string>& banned_terms);

struct SynthConfig {
  int num_scenes = 32;
  std::array<double, 3> room_extent{6.0, 6.0, 3.0};
  std::vector<std::string> class_catalog;  // empty -> full built-in catalog
  std::pair<int, int> instances_range{1, 3};
  int classes_per_scene_min = 2;
  int classes_per_scene_max = 4;
  int points_per_object = 64;
  int texts_per_object = 6;
  SelectionConfig selection;
  std::uint64_t rng_seed = 0;
};

struct SynthResult {
  std::vector<data::SceneGraph> scenes;
  std::vector<data::IntentionSample> samples;
};

/// Fully offline scene + intention synthesis: packs non-overlapping boxes
/// into the room, then runs select_objects -> template texts -> clean_texts
/// and records gold verb-object pairs from the lexicon tagger.
/// Deterministic per seed.
SynthResult synthesize_scenes(const SynthConfig& cfg);

/// Classes covered by the built-in phrase bank.
std::vector<std::string> builtin_class_catalog();

/// Every sentence in the phrase bank (vocabulary source for the text encoder).
const std::vector<std::string>& bank_sentences();

/// Canonical size range for a catalog class (min/max per axis).
std::pair<geom::Vec3, geom::Vec3> class_size_range(const std::string& fine_class);

std::string coarse_class_of(const std::string& fine_class);

DatasetStats compute_statistics(const std::vector<data::DatasetSplit>& splits,
                                const text::Tagger& tagger);

}  // namespace ig::datagen
