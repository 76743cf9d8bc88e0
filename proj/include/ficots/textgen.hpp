#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace ficots {

// Per-channel window statistics rendered into the prompt.
struct ChannelStats {
  double min_value = 0.0;
  double max_value = 0.0;
  double median = 0.0;
  std::string trend;  // "upward", "downward" or "flat"
};

ChannelStats compute_stats(const std::vector<double>& window);

struct Prompt {
  std::string dataset_description;
  std::string task_instruction;
  std::string input_statistics;  // empty in static-prompt mode
  std::string full_text;
};

// Dataset descriptions are data, loaded from a directory of <key>.txt files.
class DescriptionStore {
 public:
  static DescriptionStore from_directory(const std::string& dir);
  void add(std::string key, std::string text);
  const std::string& get(const std::string& key) const;
  bool has(const std::string& key) const;

 private:
  std::map<std::string, std::string> texts_;
};

// Statistics are omitted when `stats` is empty (static-prompt mode, so
// embeddings can be precomputed once per variable).
Prompt build_prompt(const DescriptionStore& store, const std::string& key,
                    std::size_t t_in, std::size_t horizon,
                    const std::optional<ChannelStats>& stats);

enum class EmbeddingSource { stub, imported };

struct TextEmbedding {
  std::size_t token_count = 0;  // N_p
  std::size_t dim = 0;          // d_m
  std::vector<double> tokens;   // token_count x dim, row-major
  EmbeddingSource source = EmbeddingSource::stub;

  double at(std::size_t token, std::size_t d) const {
    return tokens[token * dim + d];
  }
};

class TextEncoder {
 public:
  virtual ~TextEncoder() = default;
  virtual TextEmbedding encode(const std::string& text) const = 0;
  virtual std::size_t dim() const = 0;
};

// Deterministic stand-in for an LLM encoder. Token base vectors are unit
// norm and hash-seeded; output token j is the running mean of base vectors
// 1..j, so each row depends only on its prefix and the last row summarizes
// the whole prompt.
TextEmbedding stub_encode(const std::string& text, std::size_t d_m,
                          std::uint64_t seed);

class StubEncoder final : public TextEncoder {
 public:
  StubEncoder(std::size_t d_m, std::uint64_t seed) : d_m_(d_m), seed_(seed) {}
  TextEmbedding encode(const std::string& text) const override {
    return stub_encode(text, d_m_, seed_);
  }
  std::size_t dim() const override { return d_m_; }

 private:
  std::size_t d_m_;
  std::uint64_t seed_;
};

std::uint64_t prompt_hash(const std::string& full_text);

// Keyed by prompt_hash of the full prompt text. Ordered so exports are
// deterministic.
using EmbeddingMap = std::map<std::uint64_t, TextEmbedding>;

// Container format "FCTE" v1: magic, u16 version, u32 record count, then per
// record u64 prompt hash, u32 N_p, u32 d_m, N_p*d_m little-endian f32.
EmbeddingMap import_embeddings(const std::string& path,
                               std::size_t expected_dim);
void export_embeddings(const std::string& path, const EmbeddingMap& map);

// Serves embeddings to the model: imported when available for the prompt,
// otherwise encoded on the fly. Caches by prompt hash.
class TextProvider {
 public:
  TextProvider(std::shared_ptr<const TextEncoder> encoder,
               EmbeddingMap imported = {})
      : encoder_(std::move(encoder)), imported_(std::move(imported)) {}

  const TextEmbedding& get(const std::string& full_text);
  std::size_t dim() const { return encoder_->dim(); }

 private:
  std::shared_ptr<const TextEncoder> encoder_;
  EmbeddingMap imported_;
  std::unordered_map<std::uint64_t, TextEmbedding> cache_;
};

}  // namespace ficots
