#pragma once

#include <string>
#include <vector>

#include "ficots/data.hpp"
#include "ficots/model.hpp"
#include "ficots/training.hpp"

namespace ficots {

// Flat key=value experiment description. One key per line, '#' comments,
// unknown keys are errors. Later assignments override earlier ones so
// ablation fragments can be appended or passed as extra --config files.
struct ExperimentConfig {
  std::string dataset_path;
  std::string dataset_key = "custom";
  bool has_date_column = true;

  SplitSpec split;
  ModelConfig model;  // channels stays 0 until data is loaded
  TrainConfig train;

  std::string text_mode = "stub";  // "stub" or "import"
  std::string text_import_path;
  bool static_prompt = false;
  std::uint64_t text_seed = 1;
  std::string descriptions_dir = "data/descriptions";

  std::string output_dir = "runs/out";
  bool raw_space_metrics = false;

  // Structural checks that do not need the dataset loaded.
  void validate_static() const;
};

ExperimentConfig parse_config_text(const std::string& text);
// Overlays files in order; later files override earlier keys.
ExperimentConfig parse_config_files(const std::vector<std::string>& paths);

// Canonical, lossless rendering. The output directory is a runtime
// location, not part of the experiment identity, so checkpoints omit it.
std::string serialize_config(const ExperimentConfig& cfg,
                             bool include_output_dir);

}  // namespace ficots
