#pragma once

#include <cstdint>
#include <vector>

#include "ficots/data.hpp"
#include "ficots/model.hpp"
#include "ficots/tensor.hpp"
#include "ficots/textgen.hpp"

namespace ficots {

struct TrainConfig {
  double learning_rate = 0.001;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 20;
  std::size_t patience = 3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 1;
  double few_shot_fraction = 1.0;

  void validate() const;
};

struct Metrics {
  double mse = 0.0;
  double mae = 0.0;
  std::size_t n_windows = 0;
};

// One window with its per-variable text embeddings resolved, ready for the
// model.
struct PreparedWindow {
  WindowSample window;
  std::vector<TextEmbedding> text;
};

// Differentiable mean over all horizon x channels elements of the squared
// error.
Tensor mse_loss(const Tensor& pred, const Tensor& truth);

double mse_value(const std::vector<double>& pred,
                 const std::vector<double>& truth);
double mae_value(const std::vector<double>& pred,
                 const std::vector<double>& truth);

// Standard Adam with bias correction; t is the 1-based step count.
void adam_step(const std::vector<Parameter*>& params, const TrainConfig& cfg,
               std::size_t t);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_mse = 0.0;
  double val_mae = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;  // 1-based
  double best_val_mse = 0.0;
};

// Epoch loop with seeded shuffling, Adam updates, and early stopping on
// validation MSE (strict improvement, `patience` consecutive misses). The
// model is left at the best validation epoch's parameters.
TrainResult train(FiCoTSModel& model,
                  const std::vector<PreparedWindow>& train_windows,
                  const std::vector<PreparedWindow>& val_windows,
                  const TrainConfig& cfg);

struct PredictionRow {
  std::size_t window_start = 0;
  std::size_t step = 0;
  std::size_t variable = 0;
  double pred = 0.0;
  double truth = 0.0;
};

// Metrics in the model's (normalized) space by default; with `raw_stats`
// the per-element errors are computed after inverse-transforming both
// prediction and truth. Optionally collects every prediction element.
Metrics evaluate(const FiCoTSModel& model,
                 const std::vector<PreparedWindow>& windows,
                 const ScalerStats* raw_stats = nullptr,
                 std::vector<PredictionRow>* rows = nullptr);

}  // namespace ficots
