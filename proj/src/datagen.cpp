#include "ig/datagen.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "ig/errors.hpp"
#include "ig/rng.hpp"

using nlohmann::json;

namespace ig::datagen {

namespace {

struct ClassSpec {
  const char* name;
  const char* coarse;
  geom::Vec3 size_min;
  geom::Vec3 size_max;
  std::vector<const char*> phrases;
};

// Phrase texts never mention the class they describe; every content word is
// covered by the lexicon tagger so gold verb-object pairs are recoverable.
const std::vector<ClassSpec>& class_table() {
  static const std::vector<ClassSpec> t = {
      {"bed", "furniture", {1.6, 1.4, 0.5}, {2.0, 1.8, 0.7},
       {"I want to sleep through the cold night",
        "I need to nap before my evening session",
        "I intend to rest my body for the day",
        "I aim to sleep for eight hours tonight",
        "I want to stretch out under a warm blanket",
        "I need to settle in for the night",
        "I intend to sleep late on the weekend",
        "I aim to rest before the busy morning"}},
      {"bookshelf", "storage", {0.8, 0.3, 1.6}, {1.2, 0.45, 2.2},
       {"I want to store my books neatly",
        "I need to organize my novels by author",
        "I intend to keep my reading collection together",
        "I aim to display my favorite magazines",
        "I want to stash my papers in order",
        "I need to tuck away my old books",
        "I intend to organize my office supplies",
        "I aim to keep the clutter off my floor"}},
      {"cabinet", "storage", {0.6, 0.4, 0.8}, {1.2, 0.6, 1.8},
       {"I want to store my dishes safely",
        "I need to keep my documents locked away",
        "I intend to organize my kitchen supplies",
        "I aim to stash the fresh clothes inside",
        "I want to tuck my belongings out of sight",
        "I need to store my extra supplies somewhere",
        "I intend to keep my essentials in one spot",
        "I aim to organize the items behind closed doors"}},
      {"chair", "seating", {0.45, 0.45, 0.8}, {0.6, 0.6, 1.0},
       {"I want to sit through the long meeting",
        "I need to rest my legs for a while",
        "I intend to sit down and read my notes",
        "I aim to work through my documents in comfort",
        "I want to settle in for a quick study session",
        "I need to sit comfortably during the conference",
        "I intend to rest briefly between my hours of work",
        "I aim to lean back and stretch my legs"}},
      {"couch", "seating", {1.6, 0.8, 0.7}, {2.2, 1.0, 0.9},
       {"I want to stretch out and watch a movie",
        "I need to relax after a busy day",
        "I intend to nap for a short while",
        "I aim to lie down with a warm drink",
        "I want to recline and enjoy the quiet evening",
        "I need to rest my back after the long drive",
        "I intend to watch videos with my friends here",
        "I aim to unwind during the late evening hours"}},
      {"fan", "appliance", {0.35, 0.35, 1.0}, {0.5, 0.5, 1.3},
       {"I want to cool down on hot days",
        "I need to feel a fresh breeze indoors",
        "I intend to cool the room during summer",
        "I aim to chill the air in here",
        "I want to dry my clothes faster",
        "I need to keep the air moving tonight",
        "I intend to chill out on warm afternoons",
        "I aim to cool my face after the run"}},
      {"heater", "appliance", {0.5, 0.2, 0.5}, {0.8, 0.35, 0.8},
       {"I want to warm the room in winter",
        "I need to heat the place on cold nights",
        "I intend to warm my hands after coming inside",
        "I aim to keep the warmth through the evening",
        "I want to warm my feet during the night",
        "I need to heat the air in this corner",
        "I intend to keep warm during my reading",
        "I aim to warm up before my work"}},
      {"lamp", "lighting", {0.3, 0.3, 1.2}, {0.45, 0.45, 1.7},
       {"I want to read my book in the evening",
        "I need to brighten this corner at night",
        "I intend to read a novel before sleeping",
        "I aim to work late without straining my eyes",
        "I want to sketch quietly at my desk",
        "I need to write my notes after dark",
        "I intend to study during the quiet night",
        "I aim to finish my reading before midnight"}},
      {"monitor", "electronics", {0.5, 0.15, 0.35}, {0.7, 0.25, 0.5},
       {"I want to present slides to my coworkers",
        "I need to view my charts in detail",
        "I intend to watch the video for class",
        "I aim to display the chart during the meeting",
        "I want to browse the news while I eat",
        "I need to review my report before lunch",
        "I intend to play a quick game after work",
        "I aim to glance at my notes while typing"}},
      {"refrigerator", "appliance", {0.6, 0.6, 1.5}, {0.9, 0.8, 1.9},
       {"I want to keep my food fresh",
        "I need to store the leftovers overnight",
        "I intend to chill my drinks for the party",
        "I aim to preserve the groceries this week",
        "I want to freeze the meal for later",
        "I need to keep the milk cold",
        "I intend to store my snack for the afternoon",
        "I aim to keep my water cold in summer"}},
      {"table", "furniture", {1.0, 0.6, 0.7}, {1.8, 1.0, 0.8},
       {"I want to eat my dinner in the kitchen",
        "I need to place my laptop somewhere stable",
        "I intend to organize my papers for the report",
        "I aim to serve the meal to my guests",
        "I want to write my notes on a flat surface",
        "I need to study with my books spread around",
        "I intend to draw some diagrams for the project",
        "I aim to prepare lunch for the whole family"}},
      {"whiteboard", "office", {1.2, 0.08, 0.9}, {1.8, 0.15, 1.2},
       {"I want to brainstorm ideas with my team",
        "I need to sketch the plan for everyone",
        "I intend to draw diagrams during the lesson",
        "I aim to write the schedule where all can see",
        "I want to present my ideas to the class",
        "I need to show the steps of the solution",
        "I intend to draw a chart for the meeting",
        "I aim to review the notes with my group"}},
  };
  return t;
}

const ClassSpec* find_class(const std::string& name) {
  for (const auto& c : class_table()) {
    if (name == c.name) return &c;
  }
  return nullptr;
}

const std::vector<const char*>& scene_types() {
  static const std::vector<const char*> t = {"living room", "office",     "bedroom",
                                             "kitchen",     "conference room", "study"};
  return t;
}

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

// Word-boundary, case-insensitive containment.
bool mentions_term(const std::string& text, const std::string& term) {
  const std::string lt = lower(text);
  const std::string lterm = lower(term);
  std::size_t pos = 0;
  while ((pos = lt.find(lterm, pos)) != std::string::npos) {
    const bool left_ok = pos == 0 || !std::isalnum(static_cast<unsigned char>(lt[pos - 1]));
    const std::size_t end = pos + lterm.size();
    const bool right_ok = end >= lt.size() || !std::isalnum(static_cast<unsigned char>(lt[end]));
    if (left_ok && right_ok) return true;
    ++pos;
  }
  return false;
}

int word_count(const std::string& text) {
  std::istringstream iss(text);
  int n = 0;
  std::string w;
  while (iss >> w) ++n;
  return n;
}

bool looks_gibberish(const std::string& text) {
  for (std::size_t i = 0; i < text.size(); ++i) {
    const unsigned char c = static_cast<unsigned char>(text[i]);
    if (c < 0x20 || c >= 0x7f) return true;  // control or non-ASCII byte
    if (text[i] == '\\' && i + 1 < text.size() && (text[i + 1] == 'u' || text[i + 1] == 'U')) {
      return true;  // escaped-unicode artifact from a raw completion
    }
  }
  return false;
}

}  // namespace

std::string DatasetStats::to_json() const {
  json j;
  j["total_texts"] = total_texts;
  j["num_fine_classes"] = num_fine_classes;
  j["num_scenes"] = num_scenes;
  j["text_length_histogram"] = json::object();
  for (const auto& [len, cnt] : text_length_histogram)
    j["text_length_histogram"][std::to_string(len)] = cnt;
  j["verbs_per_class"] = verbs_per_class;
  j["nouns_per_class"] = nouns_per_class;
  j["distinct_verbs"] = distinct_verbs;
  j["distinct_nouns"] = distinct_nouns;
  return j.dump(2);
}

data::SceneGraph build_scene_graph(std::vector<data::ObjectRecord> annotations,
                                   const std::string& scene_id, const std::string& scene_type) {
  data::SceneGraph scene;
  scene.scene_id = scene_id;
  scene.scene_type = scene_type;
  std::sort(annotations.begin(), annotations.end(),
            [](const data::ObjectRecord& a, const data::ObjectRecord& b) {
              return a.instance_id < b.instance_id;
            });
  std::set<std::string> seen;
  for (auto& o : annotations) {
    if (o.fine_class.empty()) {
      throw ValidationError("build_scene_graph: empty fine_class on " + o.instance_id);
    }
    geom::validate_box(o.box);
    if (!seen.insert(o.instance_id).second) {
      throw ValidationError("build_scene_graph: duplicate instance_id " + o.instance_id);
    }
    scene.objects.push_back(std::move(o));
  }
  scene.recount();
  return scene;
}

std::vector<std::pair<std::string, std::vector<data::ObjectRecord>>> select_objects(
    const data::SceneGraph& scene, const std::vector<data::SceneGraph>& all_scenes,
    const SelectionConfig& cfg) {
  if (cfg.min_scene_occurrences < 1) {
    throw ValidationError("select_objects: min_scene_occurrences must be >= 1");
  }
  if (cfg.max_instances_per_scene < 2) {
    throw ValidationError("select_objects: max_instances_per_scene must be >= 2");
  }
  bool member = false;
  for (const auto& s : all_scenes) member = member || s.scene_id == scene.scene_id;
  if (!member) throw ValidationError("select_objects: scene not part of the corpus");

  // scenes in which each class occurs at least once
  std::map<std::string, int> occurrence;
  for (const auto& s : all_scenes) {
    for (const auto& [cls, cnt] : s.class_counts) {
      if (cnt > 0) ++occurrence[cls];
    }
  }

  std::vector<std::string> classes;
  for (const auto& [cls, cnt] : scene.class_counts) classes.push_back(cls);
  std::sort(classes.begin(), classes.end());

  std::vector<std::pair<std::string, std::vector<data::ObjectRecord>>> out;
  std::vector<std::string> kept;
  for (const auto& cls : classes) {
    if (occurrence[cls] < cfg.min_scene_occurrences) continue;            // common objects
    if (scene.class_counts.at(cls) >= cfg.max_instances_per_scene) continue;  // non-trivial
    if (cfg.excluded_structural_classes.count(cls)) continue;
    bool ambiguous = false;
    for (const auto& group : cfg.ambiguity_groups) {
      if (!group.count(cls)) continue;
      for (const auto& prev : kept) {
        if (group.count(prev)) {
          ambiguous = true;  // later class in lexicographic order loses
          break;
        }
      }
      if (ambiguous) break;
    }
    if (ambiguous) continue;
    kept.push_back(cls);
    std::vector<data::ObjectRecord> instances;
    for (const auto& o : scene.objects) {
      if (o.fine_class == cls) instances.push_back(o);
    }
    out.emplace_back(cls, std::move(instances));
  }
  return out;
}

const std::string& constraint_prompt() {
  static const std::string p =
      "You are a helpful assistant in providing human intention towards each object. "
      "The intention is from a first-person perspective, in the format of "
      "'I want / need / intend / ... to ...'. The intention must avoid mentioning "
      "synonyms, categories, locations, or attributes of the object.";
  return p;
}

std::string scene_context_prompt(const data::SceneGraph& scene) {
  std::vector<std::string> classes;
  for (const auto& [cls, cnt] : scene.class_counts) classes.push_back(cls);
  std::sort(classes.begin(), classes.end());
  std::string list;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (i) list += ", ";
    list += classes[i];
  }
  return "In a " + scene.scene_type + " with " + list + ", what can you do with each object?";
}

std::vector<std::string> generate_intention_texts(const std::string& target_class,
                                                  const data::SceneGraph& scene,
                                                  const TextSource& source,
                                                  int texts_per_object) {
  if (!scene.class_counts.count(target_class)) {
    throw ValidationError("generate_intention_texts: class '" + target_class +
                          "' not present in scene " + scene.scene_id);
  }

  if (source.kind == TextSource::Kind::Llm) {
    if (source.llm.temperature <= 0) {
      throw ValidationError("generate_intention_texts: temperature must be > 0");
    }
    const int count = source.llm.texts_per_object;
    llm::ChatClientConfig cc;
    cc.endpoint = source.llm.endpoint;
    cc.model_name = source.llm.model_name;
    cc.temperature = source.llm.temperature;
    const std::string completion =
        llm::chat_completion(cc, constraint_prompt(), scene_context_prompt(scene), source.transport);
    std::vector<std::string> lines;
    std::istringstream iss(completion);
    std::string line;
    while (std::getline(iss, line)) {
      // strip list bullets / numbering
      std::size_t start = line.find_first_not_of(" \t-*0123456789.)");
      if (start == std::string::npos) continue;
      std::string t = line.substr(start);
      while (!t.empty() && (t.back() == ' ' || t.back() == '\r')) t.pop_back();
      if (!t.empty()) lines.push_back(t);
    }
    if (static_cast<int>(lines.size()) < count) {
      throw GenerationError("completion produced " + std::to_string(lines.size()) + " texts, need " +
                            std::to_string(count) + "; raw completion: " + completion);
    }
    lines.resize(static_cast<std::size_t>(count));
    return lines;
  }

  const ClassSpec* spec = find_class(target_class);
  if (!spec) {
    throw GenerationError("template mode has no phrase bank for class '" + target_class + "'");
  }
  std::vector<std::string> bank(spec->phrases.begin(), spec->phrases.end());
  Rng rng(mix_seed(source.rng_seed, hash_string(target_class)));
  rng.shuffle(bank);
  std::vector<std::string> out;
  for (int i = 0; i < texts_per_object; ++i) {
    out.push_back(bank[static_cast<std::size_t>(i) % bank.size()]);
  }
  return out;
}

CleanResult clean_texts(const std::vector<std::string>& texts, const std::string& target_class,
                        const std::set<std::string>& banned_terms) {
  CleanResult result;
  std::set<std::string> kept_set;
  for (const auto& text : texts) {
    if (word_count(text) < 4) {
      result.rejected.push_back({text, "too_short"});
      continue;
    }
    if (looks_gibberish(text)) {
      result.rejected.push_back({text, "gibberish"});
      continue;
    }
    if (kept_set.count(text)) {
      result.rejected.push_back({text, "duplicate"});
      continue;
    }
    bool mentions = mentions_term(text, target_class);
    for (const auto& term : banned_terms) {
      if (mentions) break;
      mentions = mentions_term(text, term);
    }
    if (mentions) {
      result.rejected.push_back({text, "mentions_target"});
      continue;
    }
    kept_set.insert(text);
    result.kept.push_back(text);
  }
  return result;
}

std::vector<std::string> builtin_class_catalog() {
  std::vector<std::string> out;
  for (const auto& c : class_table()) out.push_back(c.name);
  return out;
}

const std::vector<std::string>& bank_sentences() {
  static const std::vector<std::string> all = [] {
    std::vector<std::string> v;
    for (const auto& c : class_table()) {
      v.push_back(c.name);
      for (const char* p : c.phrases) v.push_back(p);
    }
    return v;
  }();
  return all;
}

std::pair<geom::Vec3, geom::Vec3> class_size_range(const std::string& fine_class) {
  const ClassSpec* spec = find_class(fine_class);
  if (!spec) throw ValidationError("unknown catalog class '" + fine_class + "'");
  return {spec->size_min, spec->size_max};
}

std::string coarse_class_of(const std::string& fine_class) {
  const ClassSpec* spec = find_class(fine_class);
  return spec ? spec->coarse : "object";
}

SynthResult synthesize_scenes(const SynthConfig& cfg) {
  std::vector<std::string> catalog =
      cfg.class_catalog.empty() ? builtin_class_catalog() : cfg.class_catalog;
  if (catalog.empty()) throw ValidationError("synthesize_scenes: empty class catalog");
  if (cfg.instances_range.second < 1 || cfg.instances_range.first > cfg.instances_range.second) {
    throw ValidationError("synthesize_scenes: bad instances_range");
  }
  for (const auto& cls : catalog) {
    if (!find_class(cls)) throw ValidationError("synthesize_scenes: class '" + cls + "' not in phrase bank");
  }
  std::sort(catalog.begin(), catalog.end());

  SynthResult result;
  Rng rng(mix_seed(cfg.rng_seed, 0xD47A));

  for (int si = 0; si < cfg.num_scenes; ++si) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "scene_%04d", si);
    const std::string scene_id = buf;
    const std::string scene_type =
        scene_types()[static_cast<std::size_t>(rng.uniform_index(scene_types().size()))];

    std::vector<std::string> pick = catalog;
    rng.shuffle(pick);
    const int max_classes = std::min<int>(cfg.classes_per_scene_max, static_cast<int>(pick.size()));
    const int min_classes = std::min<int>(cfg.classes_per_scene_min, max_classes);
    const int n_classes = rng.uniform_int(min_classes, max_classes);
    pick.resize(static_cast<std::size_t>(n_classes));

    std::vector<data::ObjectRecord> objects;
    std::vector<geom::Box3D> placed;
    for (const auto& cls : pick) {
      const auto [smin, smax] = class_size_range(cls);
      const int count = rng.uniform_int(cfg.instances_range.first, cfg.instances_range.second);
      for (int k = 0; k < count; ++k) {
        bool placed_ok = false;
        for (int attempt = 0; attempt < 1000; ++attempt) {
          geom::Box3D box;
          for (int a = 0; a < 3; ++a) box.size[a] = rng.uniform(smin[a], smax[a]);
          const double mx = cfg.room_extent[0] - box.size[0];
          const double my = cfg.room_extent[1] - box.size[1];
          if (mx <= 0 || my <= 0 || box.size[2] > cfg.room_extent[2]) continue;
          box.center[0] = box.size[0] / 2 + rng.uniform() * mx;
          box.center[1] = box.size[1] / 2 + rng.uniform() * my;
          box.center[2] = box.size[2] / 2;  // objects rest on the floor
          bool overlaps = false;
          for (const auto& other : placed) {
            if (geom::intersection_volume(box, other) > 0.0) {
              overlaps = true;
              break;
            }
          }
          if (overlaps) continue;
          placed.push_back(box);
          data::ObjectRecord o;
          o.instance_id = cls + "_" + std::to_string(k);
          o.fine_class = cls;
          o.coarse_class = coarse_class_of(cls);
          o.box = box;
          objects.push_back(std::move(o));
          placed_ok = true;
          break;
        }
        if (!placed_ok) {
          throw GenerationError("synthesize_scenes: could not pack '" + cls + "' instance " +
                                std::to_string(k) + " in " + scene_id + " after 1000 attempts");
        }
      }
    }
    result.scenes.push_back(build_scene_graph(std::move(objects), scene_id, scene_type));
  }

  // Intention samples for every class that survives selection.
  const text::LexiconTagger tagger;
  for (const auto& scene : result.scenes) {
    const auto selected = select_objects(scene, result.scenes, cfg.selection);
    for (const auto& [cls, instances] : selected) {
      TextSource src;
      src.kind = TextSource::Kind::Template;
      src.rng_seed = mix_seed(cfg.rng_seed, hash_string(scene.scene_id + "|" + cls));
      const auto texts = generate_intention_texts(cls, scene, src, cfg.texts_per_object);
      const auto cleaned = clean_texts(texts, cls, {});
      int j = 0;
      for (const auto& text : cleaned.kept) {
        data::IntentionSample s;
        s.sample_id = scene.scene_id + "_" + cls + "_" + std::to_string(j++);
        s.scene_id = scene.scene_id;
        s.text = text;
        s.target_fine_class = cls;
        for (const auto& o : instances) s.target_boxes.push_back(o.box);
        const auto tok = text::tokenize_and_tag(text, tagger);
        s.gold_verb_object_pairs = tok.pairs;
        result.samples.push_back(std::move(s));
      }
    }
  }
  return result;
}

DatasetStats compute_statistics(const std::vector<data::DatasetSplit>& splits,
                                const text::Tagger& tagger) {
  DatasetStats stats;
  std::set<std::string> fine_classes, scenes, global_verbs, global_nouns;
  std::map<std::string, std::set<std::string>> class_verbs, class_nouns;
  static const std::set<std::string> stem_verbs = {"want", "need", "aim", "intend"};

  for (const auto& split : splits) {
    for (const auto& s : split.samples) {
      ++stats.total_texts;
      fine_classes.insert(s.target_fine_class);
      scenes.insert(s.scene_id);
      ++stats.text_length_histogram[word_count(s.text)];

      const auto tok = text::tokenize_and_tag(s.text, tagger);
      const auto tags = tagger.tag(std::vector<std::string>(tok.tokens.begin(), tok.tokens.end() - 1));
      for (std::size_t i = 0; i + 1 < tok.tokens.size(); ++i) {  // skip sentinel
        const std::string& w = tok.tokens[i];
        if (tok.verb_positions[i]) {
          if (!stem_verbs.count(w)) {
            class_verbs[s.target_fine_class].insert(w);
            global_verbs.insert(w);
          }
        } else if (tags.tags[i] == text::Pos::Noun && w != "i") {
          class_nouns[s.target_fine_class].insert(w);
          global_nouns.insert(w);
        }
      }
    }
  }

  stats.num_fine_classes = static_cast<int>(fine_classes.size());
  stats.num_scenes = static_cast<int>(scenes.size());
  for (const auto& [cls, verbs] : class_verbs) stats.verbs_per_class[cls] = static_cast<int>(verbs.size());
  for (const auto& [cls, nouns] : class_nouns) stats.nouns_per_class[cls] = static_cast<int>(nouns.size());
  stats.distinct_verbs = static_cast<int>(global_verbs.size());
  stats.distinct_nouns = static_cast<int>(global_nouns.size());
  return stats;
}

}  // namespace ig::datagen
