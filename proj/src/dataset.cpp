#include "ig/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ig/errors.hpp"
#include "ig/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace ig::data {

namespace {

json box_to_json(const geom::Box3D& b) {
  return json{{"center", {b.center[0], b.center[1], b.center[2]}},
              {"size", {b.size[0], b.size[1], b.size[2]}}};
}

geom::Box3D box_from_json(const json& j) {
  geom::Box3D b;
  const auto& c = j.at("center");
  const auto& s = j.at("size");
  for (int i = 0; i < 3; ++i) {
    b.center[i] = c.at(i).get<double>();
    b.size[i] = s.at(i).get<double>();
  }
  return b;
}

bool boxes_close(const geom::Box3D& a, const geom::Box3D& b, double tol = 1e-9) {
  for (int i = 0; i < 3; ++i) {
    if (std::abs(a.center[i] - b.center[i]) > tol) return false;
    if (std::abs(a.size[i] - b.size[i]) > tol) return false;
  }
  return true;
}

}  // namespace

void SceneGraph::recount() {
  class_counts.clear();
  for (const auto& o : objects) ++class_counts[o.fine_class];
}

const SceneGraph* Dataset::find_scene(const std::string& scene_id) const {
  for (const auto& s : scenes) {
    if (s.scene_id == scene_id) return &s;
  }
  return nullptr;
}

void validate_dataset(const Dataset& ds) {
  for (const auto& scene : ds.scenes) {
    std::set<std::string> ids;
    for (const auto& o : scene.objects) {
      if (!ids.insert(o.instance_id).second) {
        throw ValidationError("scene " + scene.scene_id + ": duplicate instance_id " + o.instance_id);
      }
      if (o.fine_class.empty()) {
        throw ValidationError("scene " + scene.scene_id + ": empty fine_class on " + o.instance_id);
      }
      geom::validate_box(o.box);
    }
    std::map<std::string, int> recount;
    for (const auto& o : scene.objects) ++recount[o.fine_class];
    if (recount != scene.class_counts) {
      throw ValidationError("scene " + scene.scene_id + ": class_counts inconsistent with objects");
    }
  }

  // splits must not share scenes
  std::map<std::string, std::string> scene_owner;
  for (const auto& split : ds.splits) {
    for (const auto& s : split.samples) {
      auto [it, inserted] = scene_owner.insert({s.scene_id, split.name});
      if (!inserted && it->second != split.name) {
        throw ValidationError("scene " + s.scene_id + " appears in splits '" + it->second +
                              "' and '" + split.name + "'");
      }
    }
  }

  for (const auto& split : ds.splits) {
    for (const auto& s : split.samples) {
      if (s.target_boxes.empty()) {
        throw ValidationError("sample " + s.sample_id + ": target_boxes is empty");
      }
      const SceneGraph* scene = ds.find_scene(s.scene_id);
      if (!scene) {
        throw ValidationError("sample " + s.sample_id + ": references missing scene " + s.scene_id);
      }
      for (const auto& tb : s.target_boxes) {
        geom::validate_box(tb);
        bool found = false;
        for (const auto& o : scene->objects) {
          if (o.fine_class == s.target_fine_class && boxes_close(o.box, tb)) {
            found = true;
            break;
          }
        }
        if (!found) {
          throw ValidationError("sample " + s.sample_id + ": target box does not match any '" +
                                s.target_fine_class + "' object in scene " + s.scene_id);
        }
      }
    }
  }
}

void write_dataset(const Dataset& ds, const std::string& dir) {
  validate_dataset(ds);

  std::error_code ec;
  fs::create_directories(fs::path(dir) / "scenes", ec);
  if (ec) throw IoError("cannot create " + dir + ": " + ec.message());

  for (const auto& scene : ds.scenes) {
    json j;
    j["scene_id"] = scene.scene_id;
    j["scene_type"] = scene.scene_type;
    j["objects"] = json::array();
    for (const auto& o : scene.objects) {
      j["objects"].push_back(json{{"instance_id", o.instance_id},
                                  {"fine_class", o.fine_class},
                                  {"coarse_class", o.coarse_class},
                                  {"box", box_to_json(o.box)}});
    }
    const fs::path p = fs::path(dir) / "scenes" / (scene.scene_id + ".json");
    std::ofstream out(p);
    if (!out) throw IoError("cannot open " + p.string() + " for writing");
    out << j.dump(2) << "\n";
  }

  for (const auto& split : ds.splits) {
    const fs::path p = fs::path(dir) / (split.name + ".jsonl");
    std::ofstream out(p);
    if (!out) throw IoError("cannot open " + p.string() + " for writing");
    for (const auto& s : split.samples) {
      json j;
      j["sample_id"] = s.sample_id;
      j["scene_id"] = s.scene_id;
      j["text"] = s.text;
      j["target_fine_class"] = s.target_fine_class;
      j["target_boxes"] = json::array();
      for (const auto& b : s.target_boxes) j["target_boxes"].push_back(box_to_json(b));
      if (s.gold_verb_object_pairs) {
        j["gold_verb_object_pairs"] = json::array();
        for (const auto& [v, o] : *s.gold_verb_object_pairs)
          j["gold_verb_object_pairs"].push_back(json::array({v, o}));
      }
      out << j.dump() << "\n";
    }
  }
}

Dataset read_dataset(const std::string& dir) {
  Dataset ds;
  const fs::path scenes_dir = fs::path(dir) / "scenes";
  if (!fs::is_directory(scenes_dir)) {
    throw IoError("dataset directory " + dir + " has no scenes/ subdirectory");
  }

  std::vector<fs::path> scene_files;
  for (const auto& e : fs::directory_iterator(scenes_dir)) {
    if (e.path().extension() == ".json") scene_files.push_back(e.path());
  }
  std::sort(scene_files.begin(), scene_files.end());

  for (const auto& p : scene_files) {
    std::ifstream in(p);
    if (!in) throw IoError("cannot read " + p.string());
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw ParseError(p.string() + ": " + e.what());
    }
    SceneGraph scene;
    try {
      scene.scene_id = j.at("scene_id").get<std::string>();
      scene.scene_type = j.at("scene_type").get<std::string>();
      for (const auto& jo : j.at("objects")) {
        ObjectRecord o;
        o.instance_id = jo.at("instance_id").get<std::string>();
        o.fine_class = jo.at("fine_class").get<std::string>();
        o.coarse_class = jo.at("coarse_class").get<std::string>();
        o.box = box_from_json(jo.at("box"));
        scene.objects.push_back(std::move(o));
      }
    } catch (const json::exception& e) {
      throw ParseError(p.string() + ": " + e.what());
    }
    scene.recount();
    ds.scenes.push_back(std::move(scene));
  }

  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() != ".jsonl") continue;
    DatasetSplit split;
    split.name = e.path().stem().string();
    std::ifstream in(e.path());
    if (!in) throw IoError("cannot read " + e.path().string());
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      json j;
      try {
        j = json::parse(line);
      } catch (const json::exception& ex) {
        throw ParseError(e.path().filename().string() + ":" + std::to_string(line_no) + ": " + ex.what());
      }
      IntentionSample s;
      try {
        s.sample_id = j.at("sample_id").get<std::string>();
        s.scene_id = j.at("scene_id").get<std::string>();
        s.text = j.at("text").get<std::string>();
        s.target_fine_class = j.at("target_fine_class").get<std::string>();
        for (const auto& jb : j.at("target_boxes")) s.target_boxes.push_back(box_from_json(jb));
        if (j.contains("gold_verb_object_pairs")) {
          std::vector<std::pair<int, int>> pairs;
          for (const auto& jp : j.at("gold_verb_object_pairs"))
            pairs.emplace_back(jp.at(0).get<int>(), jp.at(1).get<int>());
          s.gold_verb_object_pairs = std::move(pairs);
        }
      } catch (const json::exception& ex) {
        throw ParseError(e.path().filename().string() + ":" + std::to_string(line_no) + ": " + ex.what());
      }
      split.samples.push_back(std::move(s));
    }
    ds.splits.push_back(std::move(split));
  }
  std::sort(ds.splits.begin(), ds.splits.end(),
            [](const DatasetSplit& a, const DatasetSplit& b) { return a.name < b.name; });

  validate_dataset(ds);
  return ds;
}

std::vector<DatasetSplit> split_by_scene(const std::vector<IntentionSample>& samples,
                                         const std::array<double, 3>& ratios,
                                         std::uint64_t rng_seed) {
  const double rs = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(rs - 1.0) > 1e-9) {
    throw ValidationError("split_by_scene: ratios must sum to 1, got " + std::to_string(rs));
  }

  std::vector<std::string> scene_ids;
  for (const auto& s : samples) {
    if (std::find(scene_ids.begin(), scene_ids.end(), s.scene_id) == scene_ids.end()) {
      scene_ids.push_back(s.scene_id);
    }
  }
  std::sort(scene_ids.begin(), scene_ids.end());

  int nonzero = 0;
  for (double r : ratios)
    if (r > 0) ++nonzero;
  if (static_cast<int>(scene_ids.size()) < nonzero) {
    throw ValidationError("split_by_scene: fewer scenes than non-zero splits");
  }

  Rng rng(rng_seed);
  rng.shuffle(scene_ids);

  const int n = static_cast<int>(scene_ids.size());
  int n_val = static_cast<int>(std::floor(ratios[1] * n));
  int n_test = static_cast<int>(std::floor(ratios[2] * n));
  if (ratios[1] > 0 && n_val == 0) n_val = 1;
  if (ratios[2] > 0 && n_test == 0) n_test = 1;
  const int n_train = n - n_val - n_test;  // remainder goes to train

  std::map<std::string, int> owner;  // 0 train, 1 val, 2 test
  for (int i = 0; i < n; ++i) {
    owner[scene_ids[static_cast<std::size_t>(i)]] = i < n_train ? 0 : (i < n_train + n_val ? 1 : 2);
  }

  std::vector<DatasetSplit> out(3);
  out[0].name = "train";
  out[1].name = "val";
  out[2].name = "test";
  for (const auto& s : samples) out[static_cast<std::size_t>(owner[s.scene_id])].samples.push_back(s);
  return out;
}

}  // namespace ig::data
