#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "ficots/config.hpp"
#include "ficots/data.hpp"
#include "ficots/gradcheck.hpp"
#include "ficots/model.hpp"
#include "ficots/textgen.hpp"
#include "ficots/training.hpp"

namespace ficots {

// Everything derived from a config plus its dataset: frames, splits, scaler,
// and the text provider. Window assembly pairs the scaled window (model
// input) with prompts built from the raw values.
struct Pipeline {
  ExperimentConfig cfg;  // resolved; model.channels filled in
  TimeSeriesFrame raw;
  TimeSeriesFrame scaled;
  SplitRanges ranges;
  ScalerStats stats;
  DescriptionStore descriptions;
  std::shared_ptr<TextProvider> text;
};

Pipeline build_pipeline(ExperimentConfig cfg);

enum class Split { train, val, test };

std::vector<PreparedWindow> prepared_windows(Pipeline& pipe, Split which);

// Prompt texts for a split, one per (window, variable), variables inner.
std::vector<std::string> render_prompts(Pipeline& pipe, Split which);

struct TrainOutputs {
  TrainResult result;
  std::filesystem::path checkpoint_path;
  std::filesystem::path history_path;
  std::filesystem::path manifest_path;
};

TrainOutputs run_train(ExperimentConfig cfg);

struct EvalOutputs {
  Metrics metrics;
  bool raw_space = false;
  std::filesystem::path predictions_path;
};

// `dataset_override` empty: evaluate on the dataset named in the checkpoint.
EvalOutputs run_eval(const std::string& checkpoint_path,
                     const std::string& dataset_override,
                     const std::string& out_dir, bool raw_space);

// Finite-difference check of the full training loss on the first training
// window. `corrupt` adds a loss term invisible to the tape, as a negative
// control that the oracle really rejects wrong gradients.
GradCheckReport run_gradcheck(ExperimentConfig cfg, bool corrupt = false);

// what: "prompts" or "embeddings"
std::filesystem::path run_dump(const std::string& checkpoint_path,
                               const std::string& what,
                               const std::string& out_dir);

}  // namespace ficots
