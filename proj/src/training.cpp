#include "ficots/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ficots/errors.hpp"
#include "ficots/rng.hpp"

namespace ficots {

void TrainConfig::validate() const {
  // 0 is allowed so a frozen model can exercise the early-stopping path
  if (learning_rate < 0.0)
    throw ConfigError("train: learning_rate must be >= 0");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (max_epochs < 1) throw ConfigError("train: max_epochs must be >= 1");
  if (patience < 1) throw ConfigError("train: patience must be >= 1");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
    throw ConfigError("train: betas must be in [0, 1)");
  if (eps <= 0.0) throw ConfigError("train: eps must be > 0");
  if (few_shot_fraction <= 0.0 || few_shot_fraction > 1.0)
    throw ConfigError("train: few_shot_fraction must be in (0, 1]");
}

Tensor mse_loss(const Tensor& pred, const Tensor& truth) {
  if (pred.shape() != truth.shape())
    throw ShapeError("mse_loss: shape mismatch " + shape_str(pred.shape()) +
                     " vs " + shape_str(truth.shape()));
  Tensor diff = subtract(pred, truth);
  return mean_all(multiply(diff, diff));
}

double mse_value(const std::vector<double>& pred,
                 const std::vector<double>& truth) {
  if (pred.size() != truth.size())
    throw ShapeError("mse_value: size mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - truth[i];
    sum += d * d;
  }
  return sum / static_cast<double>(pred.size());
}

double mae_value(const std::vector<double>& pred,
                 const std::vector<double>& truth) {
  if (pred.size() != truth.size())
    throw ShapeError("mae_value: size mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    sum += std::fabs(pred[i] - truth[i]);
  return sum / static_cast<double>(pred.size());
}

void adam_step(const std::vector<Parameter*>& params, const TrainConfig& cfg,
               std::size_t t) {
  if (t < 1) throw ConfigError("adam_step: t must be >= 1");
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (Parameter* p : params) {
    const auto& g = p->tensor.grad();
    auto& theta = p->tensor.mutable_values();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      p->adam_m[i] = cfg.beta1 * p->adam_m[i] + (1.0 - cfg.beta1) * g[i];
      p->adam_v[i] =
          cfg.beta2 * p->adam_v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double m_hat = p->adam_m[i] / bc1;
      const double v_hat = p->adam_v[i] / bc2;
      theta[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
}

namespace {

Tensor target_tensor(const WindowSample& w) {
  return Tensor::from_values({w.horizon, w.channels},
                             std::vector<double>(w.y.begin(), w.y.end()));
}

Tensor batch_loss(const FiCoTSModel& model,
                  const std::vector<const PreparedWindow*>& batch) {
  std::vector<const WindowSample*> windows;
  std::vector<std::vector<TextEmbedding>> text;
  windows.reserve(batch.size());
  text.reserve(batch.size());
  for (const PreparedWindow* pw : batch) {
    windows.push_back(&pw->window);
    text.push_back(pw->text);
  }
  auto preds = model.forward(windows, text);
  Tensor total = mse_loss(preds[0], target_tensor(batch[0]->window));
  for (std::size_t i = 1; i < preds.size(); ++i)
    total = add(total, mse_loss(preds[i], target_tensor(batch[i]->window)));
  return scale(total, 1.0 / static_cast<double>(batch.size()));
}

}  // namespace

TrainResult train(FiCoTSModel& model,
                  const std::vector<PreparedWindow>& train_windows,
                  const std::vector<PreparedWindow>& val_windows,
                  const TrainConfig& cfg) {
  cfg.validate();
  if (train_windows.empty())
    throw ConfigError("train: no training windows");
  if (val_windows.empty()) throw ConfigError("train: no validation windows");

  Rng rng(cfg.seed);
  auto params = model.parameters();

  TrainResult result;
  result.best_val_mse = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> best_snapshot;
  std::size_t misses = 0;
  std::size_t step = 0;

  std::vector<std::size_t> order(train_windows.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t off = 0; off < order.size(); off += cfg.batch_size) {
      const std::size_t count =
          std::min(cfg.batch_size, order.size() - off);
      std::vector<const PreparedWindow*> batch;
      batch.reserve(count);
      for (std::size_t i = 0; i < count; ++i)
        batch.push_back(&train_windows[order[off + i]]);

      model.zero_grad();
      Tensor loss = batch_loss(model, batch);
      backward(loss);
      adam_step(params, cfg, ++step);
      loss_sum += loss.scalar_value() * static_cast<double>(count);
    }

    const Metrics val = evaluate(model, val_windows);
    if (!std::isfinite(val.mse))
      throw NumericError("train: validation MSE is not finite at epoch " +
                         std::to_string(epoch));
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    rec.val_mse = val.mse;
    rec.val_mae = val.mae;
    result.history.push_back(rec);

    if (val.mse < result.best_val_mse) {
      result.best_val_mse = val.mse;
      result.best_epoch = epoch;
      best_snapshot.clear();
      for (Parameter* p : params) best_snapshot.push_back(p->tensor.values());
      misses = 0;
    } else if (++misses >= cfg.patience) {
      break;
    }
  }

  for (std::size_t i = 0; i < params.size(); ++i)
    params[i]->tensor.mutable_values() = best_snapshot[i];
  return result;
}

Metrics evaluate(const FiCoTSModel& model,
                 const std::vector<PreparedWindow>& windows,
                 const ScalerStats* raw_stats,
                 std::vector<PredictionRow>* rows) {
  if (windows.empty()) throw ConfigError("evaluate: no windows");
  double sq_sum = 0.0, abs_sum = 0.0;
  std::size_t count = 0;
  for (const PreparedWindow& pw : windows) {
    auto preds = model.forward({&pw.window}, {pw.text});
    const auto& p = preds[0].values();
    const auto& w = pw.window;
    for (std::size_t t = 0; t < w.horizon; ++t)
      for (std::size_t c = 0; c < w.channels; ++c) {
        double pred = p[t * w.channels + c];
        double truth = w.y_at(t, c);
        if (raw_stats) {
          pred = raw_stats->inverse_value(c, pred);
          truth = raw_stats->inverse_value(c, truth);
        }
        const double d = pred - truth;
        sq_sum += d * d;
        abs_sum += std::fabs(d);
        ++count;
        if (rows) rows->push_back({w.window_start, t, c, pred, truth});
      }
  }
  Metrics m;
  m.mse = sq_sum / static_cast<double>(count);
  m.mae = abs_sum / static_cast<double>(count);
  m.n_windows = windows.size();
  return m;
}

}  // namespace ficots
