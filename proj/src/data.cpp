#include "ficots/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "ficots/errors.hpp"

namespace ficots {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_cell(const std::string& raw, std::size_t data_row,
                  std::size_t col, const std::string& col_name) {
  const std::string cell = trim(raw);
  double v = 0.0;
  const char* first = cell.data();
  const char* last = first + cell.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || cell.empty())
    throw DataError("load_csv: unparseable cell '" + cell + "' at row " +
                    std::to_string(data_row) + ", column " +
                    std::to_string(col + 1) + " ('" + col_name + "')");
  if (!std::isfinite(v))
    throw DataError("load_csv: non-finite value at row " +
                    std::to_string(data_row) + ", column " +
                    std::to_string(col + 1) + " ('" + col_name + "')");
  return v;
}

}  // namespace

TimeSeriesFrame load_csv(const std::string& path, bool has_date_column) {
  std::ifstream in(path);
  if (!in) throw DataError("load_csv: cannot open '" + path + "'");

  std::string line;
  if (!std::getline(in, line))
    throw DataError("load_csv: empty file '" + path + "'");
  if (!line.empty() && line.back() == '\r') line.pop_back();

  auto header = split_line(line);
  if (header.empty()) throw DataError("load_csv: empty header in '" + path + "'");
  for (auto& h : header) h = trim(h);

  TimeSeriesFrame frame;
  const std::size_t first_value_col = has_date_column ? 1 : 0;
  if (header.size() <= first_value_col)
    throw DataError("load_csv: no value columns in '" + path + "'");
  frame.channel_names.assign(header.begin() + first_value_col, header.end());
  frame.channels = frame.channel_names.size();

  std::size_t data_row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++data_row;
    auto cells = split_line(line);
    if (cells.size() != header.size())
      throw DataError("load_csv: row " + std::to_string(data_row) + " has " +
                      std::to_string(cells.size()) + " cells, expected " +
                      std::to_string(header.size()));
    if (has_date_column) frame.timestamps.push_back(trim(cells[0]));
    for (std::size_t c = 0; c < frame.channels; ++c)
      frame.values.push_back(parse_cell(cells[first_value_col + c], data_row,
                                        first_value_col + c,
                                        frame.channel_names[c]));
  }
  frame.length = data_row;
  if (frame.length == 0)
    throw DataError("load_csv: no data rows in '" + path + "'");
  return frame;
}

SplitRanges split(const TimeSeriesFrame& frame, const SplitSpec& spec) {
  if (spec.train_fraction <= 0.0 || spec.val_fraction <= 0.0 ||
      spec.test_fraction <= 0.0)
    throw ConfigError("split: fractions must be positive");
  const double sum =
      spec.train_fraction + spec.val_fraction + spec.test_fraction;
  if (sum > 1.0 + 1e-9)
    throw ConfigError("split: fractions sum to " + std::to_string(sum) +
                      ", must be <= 1.0");
  const double L = static_cast<double>(frame.length);
  // The 1e-9 nudge keeps exact products (e.g. 0.6 * 14400) from flooring
  // one row short.
  auto boundary = [L](double cumulative) {
    return static_cast<std::size_t>(std::floor(L * cumulative + 1e-9));
  };
  SplitRanges r;
  r.train = {0, boundary(spec.train_fraction)};
  r.val = {r.train.end, boundary(spec.train_fraction + spec.val_fraction)};
  r.test = {r.val.end, boundary(sum)};
  return r;
}

IndexRange with_input_context(IndexRange range, std::size_t t_in) {
  return {range.begin > t_in ? range.begin - t_in : 0, range.end};
}

std::vector<WindowSample> make_windows(const TimeSeriesFrame& frame,
                                       std::size_t t_in, std::size_t horizon,
                                       IndexRange slice) {
  if (t_in < 1 || horizon < 1)
    throw ConfigError("make_windows: t_in and horizon must be >= 1");
  if (slice.begin > slice.end || slice.end > frame.length)
    throw ConfigError("make_windows: slice [" + std::to_string(slice.begin) +
                      ", " + std::to_string(slice.end) + ") out of frame of length " +
                      std::to_string(frame.length));
  std::vector<WindowSample> windows;
  const std::size_t N = frame.channels;
  for (std::size_t s = slice.begin; s + t_in + horizon <= slice.end; ++s) {
    WindowSample w;
    w.window_start = s;
    w.t_in = t_in;
    w.horizon = horizon;
    w.channels = N;
    w.x.assign(frame.values.begin() + s * N,
               frame.values.begin() + (s + t_in) * N);
    w.y.assign(frame.values.begin() + (s + t_in) * N,
               frame.values.begin() + (s + t_in + horizon) * N);
    w.instance_mean.assign(N, 0.0);
    w.instance_std.assign(N, 0.0);
    for (std::size_t c = 0; c < N; ++c) {
      double m = 0.0;
      for (std::size_t t = 0; t < t_in; ++t) m += w.x_at(t, c);
      m /= static_cast<double>(t_in);
      double v = 0.0;
      for (std::size_t t = 0; t < t_in; ++t) {
        const double d = w.x_at(t, c) - m;
        v += d * d;
      }
      w.instance_mean[c] = m;
      w.instance_std[c] = std::sqrt(v / static_cast<double>(t_in));
    }
    windows.push_back(std::move(w));
  }
  return windows;
}

std::vector<WindowSample> few_shot_subset(std::vector<WindowSample> windows,
                                          double fraction) {
  if (fraction <= 0.0 || fraction > 1.0)
    throw ConfigError("few_shot_subset: fraction must be in (0, 1]");
  if (windows.empty()) return windows;
  const double scaled =
      static_cast<double>(windows.size()) * fraction + 1e-9;
  std::size_t keep = static_cast<std::size_t>(std::floor(scaled));
  keep = std::max<std::size_t>(1, std::min(keep, windows.size()));
  windows.resize(keep);
  return windows;
}

ScalerStats fit_scaler(const TimeSeriesFrame& frame, IndexRange train_range) {
  if (train_range.size() == 0 || train_range.end > frame.length)
    throw ConfigError("fit_scaler: empty or out-of-range training slice");
  const std::size_t N = frame.channels;
  const double count = static_cast<double>(train_range.size());
  ScalerStats stats;
  stats.mean.assign(N, 0.0);
  stats.std_dev.assign(N, 0.0);
  for (std::size_t c = 0; c < N; ++c) {
    double m = 0.0;
    for (std::size_t r = train_range.begin; r < train_range.end; ++r)
      m += frame.at(r, c);
    m /= count;
    double v = 0.0;
    for (std::size_t r = train_range.begin; r < train_range.end; ++r) {
      const double d = frame.at(r, c) - m;
      v += d * d;
    }
    stats.mean[c] = m;
    stats.std_dev[c] = std::sqrt(v / count);
  }
  return stats;
}

TimeSeriesFrame transform(const TimeSeriesFrame& frame,
                          const ScalerStats& stats) {
  TimeSeriesFrame out = frame;
  for (std::size_t r = 0; r < frame.length; ++r)
    for (std::size_t c = 0; c < frame.channels; ++c)
      out.values[r * frame.channels + c] =
          stats.transform_value(c, frame.at(r, c));
  return out;
}

TimeSeriesFrame inverse_transform(const TimeSeriesFrame& frame,
                                  const ScalerStats& stats) {
  TimeSeriesFrame out = frame;
  for (std::size_t r = 0; r < frame.length; ++r)
    for (std::size_t c = 0; c < frame.channels; ++c)
      out.values[r * frame.channels + c] =
          stats.inverse_value(c, frame.at(r, c));
  return out;
}

}  // namespace ficots
