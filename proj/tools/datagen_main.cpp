// Standalone data-generation CLI: `datagen synth` and `datagen stats`.

#include <CLI11.hpp>
#include <fstream>
#include <iostream>

#include "ig/datagen.hpp"
#include "ig/dataset.hpp"
#include "ig/errors.hpp"
#include "ig/harness.hpp"
#include "ig/text_analysis.hpp"

using namespace ig;

int main(int argc, char** argv) {
  CLI::App app{"synthetic scene and intention-text generation"};
  app.require_subcommand(1);

  std::string config_path, out_dir, data_dir, out_path = "stats.json";

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  synth->add_option("--config", config_path, "config file (JSON)");
  synth->add_option("--out", out_dir, "output dataset directory")->required();

  auto* stats = app.add_subcommand("stats", "dataset statistics report");
  stats->add_option("--data", data_dir, "dataset directory")->required();
  stats->add_option("--out", out_path, "output JSON path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      datagen::SynthConfig cfg;
      if (!config_path.empty()) cfg = harness::load_config_file(config_path).synth;
      const auto result = datagen::synthesize_scenes(cfg);
      data::Dataset ds;
      ds.scenes = result.scenes;
      ds.splits = data::split_by_scene(result.samples, {0.8, 0.1, 0.1}, cfg.rng_seed);
      data::write_dataset(ds, out_dir);
      std::size_t n = 0;
      for (const auto& s : ds.splits) n += s.samples.size();
      std::cout << "wrote " << ds.scenes.size() << " scenes, " << n << " samples to " << out_dir << "\n";
    }
    if (stats->parsed()) {
      const auto ds = data::read_dataset(data_dir);
      const text::LexiconTagger tagger;
      const auto st = datagen::compute_statistics(ds.splits, tagger);
      std::ofstream out(out_path);
      if (!out) throw IoError("cannot open " + out_path);
      out << st.to_json() << "\n";
      std::cout << "stats written to " << out_path << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
