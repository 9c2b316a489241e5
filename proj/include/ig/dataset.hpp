#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ig/geometry.hpp"

namespace ig::data {

struct ObjectRecord {
  std::string instance_id;
  std::string fine_class;
  std::string coarse_class;
  geom::Box3D box;

  bool operator==(const ObjectRecord&) const = default;
};

/// Per-scene object inventory. class_counts is always derivable from
/// objects; it is kept in sync by build time and re-derived on load.
struct SceneGraph {
  std::string scene_id;
  std::string scene_type;
  std::vector<ObjectRecord> objects;
  std::map<std::string, int> class_counts;

  void recount();
  bool operator==(const SceneGraph&) const = default;
};

/// One intention text with all boxes of the target class in its scene.
struct IntentionSample {
  std::string sample_id;
  std::string scene_id;
  std::string text;
  std::string target_fine_class;
  std::vector<geom::Box3D> target_boxes;  // non-empty; multi-instance allowed
  std::optional<std::vector<std::pair<int, int>>> gold_verb_object_pairs;

  bool operator==(const IntentionSample&) const = default;
};

struct DatasetSplit {
  std::string name;  // train | val | test
  std::vector<IntentionSample> samples;

  bool operator==(const DatasetSplit&) const = default;
};

struct Dataset {
  std::vector<DatasetSplit> splits;
  std::vector<SceneGraph> scenes;

  const SceneGraph* find_scene(const std::string& scene_id) const;
};

/// Validates all invariants (unique instance ids, positive box sizes,
/// non-empty target sets, target boxes present in the referenced scene,
/// scene-disjoint splits). Throws ValidationError naming the offender.
void validate_dataset(const Dataset& ds);

/// Writes scenes/<scene_id>.json plus one <split>.jsonl per split.
void write_dataset(const Dataset& ds, const std::string& dir);

/// Inverse of write_dataset; runs validate_dataset on the result.
Dataset read_dataset(const std::string& dir);

/// Scene-level split: no scene straddles two splits. Ratios must sum to 1.
/// Remainder scenes go to train. Deterministic per seed.
std::vector<DatasetSplit> split_by_scene(const std::vector<IntentionSample>& samples,
                                         const std::array<double, 3>& ratios,
                                         std::uint64_t rng_seed);

}  // namespace ig::data
