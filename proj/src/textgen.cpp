#include "ficots/textgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ficots/errors.hpp"
#include "ficots/rng.hpp"
#include "ficots/serialize.hpp"

namespace ficots {

namespace {

std::string format_sig4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::istringstream ss(text);
  std::string tok;
  while (ss >> tok) tokens.push_back(tok);
  return tokens;
}

}  // namespace

ChannelStats compute_stats(const std::vector<double>& window) {
  if (window.size() < 2)
    throw ConfigError("compute_stats: window must have at least 2 points");
  ChannelStats s;
  std::vector<double> sorted = window;
  std::sort(sorted.begin(), sorted.end());
  s.min_value = sorted.front();
  s.max_value = sorted.back();
  const std::size_t n = sorted.size();
  s.median = n % 2 == 1 ? sorted[n / 2]
                        : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);

  // Least-squares slope sign over (t, x_t); only the sign matters.
  const double t_mean = static_cast<double>(n - 1) / 2.0;
  double x_mean = 0.0;
  for (double v : window) x_mean += v;
  x_mean /= static_cast<double>(n);
  double cov = 0.0;
  for (std::size_t t = 0; t < n; ++t)
    cov += (static_cast<double>(t) - t_mean) * (window[t] - x_mean);
  s.trend = cov > 0.0 ? "upward" : cov < 0.0 ? "downward" : "flat";
  return s;
}

DescriptionStore DescriptionStore::from_directory(const std::string& dir) {
  DescriptionStore store;
  std::error_code ec;
  std::filesystem::directory_iterator it(dir, ec);
  if (ec)
    throw ConfigError("description directory '" + dir + "': " + ec.message());
  for (const auto& entry : it) {
    if (!entry.is_regular_file() || entry.path().extension() != ".txt")
      continue;
    std::ifstream in(entry.path());
    std::stringstream text;
    text << in.rdbuf();
    std::string body = text.str();
    // single logical line: newlines collapse to spaces
    std::string flat;
    for (char c : body) flat += (c == '\n' || c == '\r') ? ' ' : c;
    while (!flat.empty() && flat.back() == ' ') flat.pop_back();
    store.add(entry.path().stem().string(), std::move(flat));
  }
  return store;
}

void DescriptionStore::add(std::string key, std::string text) {
  texts_[std::move(key)] = std::move(text);
}

const std::string& DescriptionStore::get(const std::string& key) const {
  auto it = texts_.find(key);
  if (it == texts_.end())
    throw ConfigError("unknown dataset key '" + key + "'");
  return it->second;
}

bool DescriptionStore::has(const std::string& key) const {
  return texts_.count(key) > 0;
}

Prompt build_prompt(const DescriptionStore& store, const std::string& key,
                    std::size_t t_in, std::size_t horizon,
                    const std::optional<ChannelStats>& stats) {
  Prompt p;
  p.dataset_description = store.get(key);
  p.task_instruction = "Forecast the next " + std::to_string(horizon) +
                       " steps using the past " + std::to_string(t_in) +
                       " steps.";
  if (stats) {
    p.input_statistics = "Input statistics: min value = " +
                         format_sig4(stats->min_value) + ", max value = " +
                         format_sig4(stats->max_value) + ", median value = " +
                         format_sig4(stats->median) +
                         ", the overall trend is " + stats->trend + ".";
    p.full_text = p.dataset_description + " " + p.task_instruction + " " +
                  p.input_statistics;
  } else {
    p.full_text = p.dataset_description + " " + p.task_instruction;
  }
  return p;
}

TextEmbedding stub_encode(const std::string& text, std::size_t d_m,
                          std::uint64_t seed) {
  if (d_m < 1) throw ConfigError("stub_encode: d_m must be >= 1");
  const auto tokens = tokenize(text);
  if (tokens.empty())
    throw DataError("stub_encode: no tokens after whitespace split");

  TextEmbedding e;
  e.token_count = tokens.size();
  e.dim = d_m;
  e.source = EmbeddingSource::stub;
  e.tokens.assign(tokens.size() * d_m, 0.0);

  std::vector<double> sum(d_m, 0.0);
  std::vector<double> lo(d_m, 0.0), hi(d_m, 0.0);
  std::vector<double> base(d_m);
  for (std::size_t j = 0; j < tokens.size(); ++j) {
    std::uint64_t stream = hash_combine(seed, fnv1a64(tokens[j]));
    double norm_sq = 0.0;
    for (std::size_t d = 0; d < d_m; ++d) {
      base[d] = 2.0 * (static_cast<double>(splitmix64(stream) >> 11) *
                       0x1.0p-53) -
                1.0;
      norm_sq += base[d] * base[d];
    }
    if (norm_sq < 1e-24) {
      base[0] = 1.0;
      norm_sq = 1.0;
    }
    const double inv_norm = 1.0 / std::sqrt(norm_sq);
    for (std::size_t d = 0; d < d_m; ++d) {
      base[d] *= inv_norm;
      sum[d] += base[d];
      if (j == 0) {
        lo[d] = hi[d] = base[d];
      } else {
        lo[d] = std::min(lo[d], base[d]);
        hi[d] = std::max(hi[d], base[d]);
      }
      // Prefix mean, clamped into the prefix's range so that a run of
      // identical tokens reproduces the base vector exactly.
      e.tokens[j * d_m + d] = std::clamp(
          sum[d] / static_cast<double>(j + 1), lo[d], hi[d]);
    }
  }
  return e;
}

std::uint64_t prompt_hash(const std::string& full_text) {
  return fnv1a64(full_text);
}

EmbeddingMap import_embeddings(const std::string& path,
                               std::size_t expected_dim) {
  ByteReader reader = ByteReader::from_file(path);
  reader.expect_magic("FCTE", "embedding file '" + path + "'");
  const std::uint16_t version = reader.u16();
  if (version != 1)
    throw DataError("embedding file '" + path + "': unsupported version " +
                    std::to_string(version));
  const std::uint32_t count = reader.u32();
  EmbeddingMap map;
  for (std::uint32_t r = 0; r < count; ++r) {
    const std::uint64_t hash = reader.u64();
    const std::uint32_t n_p = reader.u32();
    const std::uint32_t dim = reader.u32();
    if (n_p < 1)
      throw DataError("embedding file '" + path + "': record " +
                      std::to_string(r) + " has zero tokens");
    if (dim != expected_dim)
      throw DataError("embedding file '" + path + "': record " +
                      std::to_string(r) + " has d_m " + std::to_string(dim) +
                      ", model expects " + std::to_string(expected_dim));
    TextEmbedding e;
    e.token_count = n_p;
    e.dim = dim;
    e.source = EmbeddingSource::imported;
    e.tokens.resize(static_cast<std::size_t>(n_p) * dim);
    for (auto& v : e.tokens) v = static_cast<double>(reader.f32());
    map[hash] = std::move(e);
  }
  return map;
}

void export_embeddings(const std::string& path, const EmbeddingMap& map) {
  ByteWriter w;
  w.magic("FCTE");
  w.u16(1);
  w.u32(static_cast<std::uint32_t>(map.size()));
  for (const auto& [hash, e] : map) {
    w.u64(hash);
    w.u32(static_cast<std::uint32_t>(e.token_count));
    w.u32(static_cast<std::uint32_t>(e.dim));
    for (double v : e.tokens) w.f32(static_cast<float>(v));
  }
  w.write_file(path);
}

const TextEmbedding& TextProvider::get(const std::string& full_text) {
  const std::uint64_t hash = prompt_hash(full_text);
  if (auto it = imported_.find(hash); it != imported_.end())
    return it->second;
  if (auto it = cache_.find(hash); it != cache_.end()) return it->second;
  return cache_.emplace(hash, encoder_->encode(full_text)).first->second;
}

}  // namespace ficots
