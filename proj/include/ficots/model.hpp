#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "ficots/data.hpp"
#include "ficots/parameter.hpp"
#include "ficots/tensor.hpp"
#include "ficots/textgen.hpp"

namespace ficots {

enum class GraphKind { sage, gcn };

struct ModelConfig {
  std::size_t t_in = 512;
  std::size_t horizon = 96;   // M
  std::size_t channels = 0;   // N, taken from the dataset
  std::size_t patch_len = 16; // L_p
  std::size_t stride = 8;     // S
  std::size_t d_model = 64;   // d_m
  std::size_t heads = 4;
  double alpha = 0.5;  // filtering sensitivity

  // ablation switches
  bool token_level = true;
  bool feature_level = true;
  bool decision_level = true;
  bool branch1 = true;
  bool branch2 = true;
  GraphKind graph_kind = GraphKind::sage;
  bool intra_modality_edges = false;
  bool single_node_type = false;  // homogeneous graph: one shared update weight
  bool use_text = true;           // false: text embeddings replaced by zeros

  bool instance_norm = false;

  std::size_t patch_count() const;  // ceil((t_in - patch_len) / stride) + 1
  void validate() const;
};

// Plain (non-differentiable) dense matrix for similarity/mask work.
struct ValueMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> v;

  ValueMatrix() = default;
  ValueMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0.0) {}
  double at(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
  double& at(std::size_t r, std::size_t c) { return v[r * cols + c]; }
};

struct BinaryMask {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> v;

  BinaryMask() = default;
  BinaryMask(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0) {}
  std::uint8_t at(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
  std::uint8_t& at(std::size_t r, std::size_t c) { return v[r * cols + c]; }
};

// Bipartite time-patch / text-token graph. Edges are undirected; messages
// pass both ways. Intra-modality edge lists stay empty unless the ablation
// flag adds them.
struct HeteroGraph {
  std::size_t time_count = 0;
  std::size_t text_count = 0;
  std::vector<std::pair<std::size_t, std::size_t>> edges;  // (time i, text j)
  std::vector<std::pair<std::size_t, std::size_t>> time_time_edges;
  std::vector<std::pair<std::size_t, std::size_t>> text_text_edges;
};

// Raw patches (constant) and their learned embedding for one variable.
struct PatchSet {
  Tensor raw;       // P x L_p
  Tensor embedded;  // P x d_m
};

// S(i,j) = cos(time_i, text_j); zero-norm rows give similarity 0.
ValueMatrix cosine_similarity_matrix(const std::vector<double>& time_rows,
                                     std::size_t time_count,
                                     const std::vector<double>& text_rows,
                                     std::size_t text_count, std::size_t dim);

// mask(i,j) = 1 iff S(i,j) >= mu_i + alpha * sigma_i with row statistics of
// S (population sigma). Comparison is >=.
BinaryMask dynamic_filter(const ValueMatrix& similarity, double alpha);

HeteroGraph build_hetero_graph(const BinaryMask& mask);

// Adds same-modality edges filtered by the same rule, self-edges excluded.
void add_intra_modality_edges(HeteroGraph& graph, const Tensor& time_nodes,
                              const Tensor& text_nodes, double alpha);

// One synchronous update round: both directions read the pre-update
// embeddings. For SAGE, x' = relu(W . concat[x, mean of neighbors]); for
// GCN, x' = relu(W . symmetric-normalized neighbor sum) with no self term.
std::pair<Tensor, Tensor> sage_update(const HeteroGraph& graph,
                                      const Tensor& time_nodes,
                                      const Tensor& text_nodes,
                                      const Tensor& w_time,
                                      const Tensor& w_text, GraphKind kind);

// Plain-value captures from a forward pass, for invariant checks and the
// embedding dump.
struct ForwardTrace {
  struct GateSample {
    double branch_a;
    double branch_b;
    double fused;
  };
  std::vector<std::vector<double>> attention_rows;  // softmax rows per head
  std::vector<GateSample> fusion_gate;              // feature/text gate
  std::vector<GateSample> decision_gate;            // branch1/branch2 gate
  std::vector<std::vector<double>> pre_align;       // per variable, P*d_m
  std::vector<std::vector<double>> post_align;      // per variable, P*d_m
};

class FiCoTSModel {
 public:
  FiCoTSModel(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }

  // Stable ordering; names are unique.
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  Parameter& param(const std::string& name);

  void zero_grad();

  // Splits a single variable's input values into right-padded patches and
  // projects them with the shared linear embedding.
  PatchSet patchify_and_embed(const std::vector<double>& series) const;

  // Full pipeline for a batch of windows. Predictions are one tensor of
  // shape horizon x channels per window, on the live tape.
  std::vector<Tensor> forward(
      const std::vector<const WindowSample*>& batch,
      const std::vector<std::vector<TextEmbedding>>& text_per_window,
      ForwardTrace* trace = nullptr) const;

 private:
  Tensor forward_window(const WindowSample& window,
                        const std::vector<TextEmbedding>& text,
                        ForwardTrace* trace) const;

  ModelConfig config_;
  std::vector<Parameter> params_;
};

}  // namespace ficots
