#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace ficots {

// Raw multivariate series in file order (assumed chronological).
struct TimeSeriesFrame {
  std::vector<std::string> timestamps;  // empty when the file has no date column
  std::vector<std::string> channel_names;
  std::vector<double> values;  // length x channels, row-major
  std::size_t length = 0;
  std::size_t channels = 0;

  double at(std::size_t row, std::size_t ch) const {
    return values[row * channels + ch];
  }
};

struct IndexRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
};

struct SplitSpec {
  double train_fraction = 0.6;
  double val_fraction = 0.2;
  double test_fraction = 0.2;
  double few_shot_fraction = 1.0;
};

struct SplitRanges {
  IndexRange train;
  IndexRange val;
  IndexRange test;
};

// Per-channel z-score statistics fitted on the training slice.
struct ScalerStats {
  std::vector<double> mean;
  std::vector<double> std_dev;

  // Channels with near-zero spread pass through unscaled.
  double effective_std(std::size_t ch) const {
    return std_dev[ch] < 1e-8 ? 1.0 : std_dev[ch];
  }
  double transform_value(std::size_t ch, double v) const {
    return (v - mean[ch]) / effective_std(ch);
  }
  double inverse_value(std::size_t ch, double v) const {
    return v * effective_std(ch) + mean[ch];
  }
};

// One training example. y starts at window_start + t_in.
struct WindowSample {
  std::size_t window_start = 0;
  std::size_t t_in = 0;
  std::size_t horizon = 0;
  std::size_t channels = 0;
  std::vector<double> x;  // t_in x channels
  std::vector<double> y;  // horizon x channels
  std::vector<double> instance_mean;  // per channel, over x
  std::vector<double> instance_std;   // population, per channel, over x

  double x_at(std::size_t t, std::size_t ch) const {
    return x[t * channels + ch];
  }
  double y_at(std::size_t t, std::size_t ch) const {
    return y[t * channels + ch];
  }
};

TimeSeriesFrame load_csv(const std::string& path, bool has_date_column);

SplitRanges split(const TimeSeriesFrame& frame, const SplitSpec& spec);

// Extends a split range backwards by t_in rows (clamped at zero) so windows
// may use input context from before the split while targets stay inside it.
IndexRange with_input_context(IndexRange range, std::size_t t_in);

std::vector<WindowSample> make_windows(const TimeSeriesFrame& frame,
                                       std::size_t t_in, std::size_t horizon,
                                       IndexRange slice);

// Chronologically-first floor(count * fraction) windows, at least one.
std::vector<WindowSample> few_shot_subset(std::vector<WindowSample> windows,
                                          double fraction);

ScalerStats fit_scaler(const TimeSeriesFrame& frame, IndexRange train_range);
TimeSeriesFrame transform(const TimeSeriesFrame& frame,
                          const ScalerStats& stats);
TimeSeriesFrame inverse_transform(const TimeSeriesFrame& frame,
                                  const ScalerStats& stats);

}  // namespace ficots
