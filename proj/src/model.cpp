#include "ficots/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "ficots/errors.hpp"

namespace ficots {

std::size_t ModelConfig::patch_count() const {
  // ceil((t_in - patch_len) / stride) + 1, in integer arithmetic
  return (t_in - patch_len + stride - 1) / stride + 1;
}

void ModelConfig::validate() const {
  if (t_in < 1) throw ConfigError("model: t_in must be >= 1");
  if (horizon < 1) throw ConfigError("model: horizon must be >= 1");
  if (channels < 1) throw ConfigError("model: channels must be >= 1");
  if (patch_len < 1) throw ConfigError("model: patch_len must be >= 1");
  if (patch_len > t_in)
    throw ConfigError("model: patch_len (" + std::to_string(patch_len) +
                      ") must be <= t_in (" + std::to_string(t_in) + ")");
  if (stride < 1) throw ConfigError("model: stride must be >= 1");
  if (d_model < 1) throw ConfigError("model: d_model must be >= 1");
  if (heads < 1) throw ConfigError("model: heads must be >= 1");
  if (d_model % heads != 0)
    throw ConfigError("model: d_model (" + std::to_string(d_model) +
                      ") must be divisible by heads (" +
                      std::to_string(heads) + ")");
  if (!std::isfinite(alpha)) throw ConfigError("model: alpha must be finite");
  if (decision_level && !branch1 && !branch2)
    throw ConfigError("model: decision level needs at least one branch");
}

ValueMatrix cosine_similarity_matrix(const std::vector<double>& time_rows,
                                     std::size_t time_count,
                                     const std::vector<double>& text_rows,
                                     std::size_t text_count,
                                     std::size_t dim) {
  ValueMatrix s(time_count, text_count);
  std::vector<double> time_norm(time_count), text_norm(text_count);
  for (std::size_t i = 0; i < time_count; ++i) {
    double n = 0.0;
    for (std::size_t d = 0; d < dim; ++d)
      n += time_rows[i * dim + d] * time_rows[i * dim + d];
    time_norm[i] = std::sqrt(n);
  }
  for (std::size_t j = 0; j < text_count; ++j) {
    double n = 0.0;
    for (std::size_t d = 0; d < dim; ++d)
      n += text_rows[j * dim + d] * text_rows[j * dim + d];
    text_norm[j] = std::sqrt(n);
  }
  for (std::size_t i = 0; i < time_count; ++i)
    for (std::size_t j = 0; j < text_count; ++j) {
      if (time_norm[i] == 0.0 || text_norm[j] == 0.0) continue;  // stays 0
      double dot = 0.0;
      for (std::size_t d = 0; d < dim; ++d)
        dot += time_rows[i * dim + d] * text_rows[j * dim + d];
      s.at(i, j) = dot / (time_norm[i] * text_norm[j]);
    }
  return s;
}

BinaryMask dynamic_filter(const ValueMatrix& similarity, double alpha) {
  BinaryMask mask(similarity.rows, similarity.cols);
  const std::size_t n = similarity.cols;
  for (std::size_t i = 0; i < similarity.rows; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += similarity.at(i, j);
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = similarity.at(i, j) - mu;
      var += d * d;
    }
    const double threshold = mu + alpha * std::sqrt(var / static_cast<double>(n));
    for (std::size_t j = 0; j < n; ++j)
      mask.at(i, j) = similarity.at(i, j) >= threshold ? 1 : 0;
  }
  return mask;
}

HeteroGraph build_hetero_graph(const BinaryMask& mask) {
  HeteroGraph g;
  g.time_count = mask.rows;
  g.text_count = mask.cols;
  for (std::size_t i = 0; i < mask.rows; ++i)
    for (std::size_t j = 0; j < mask.cols; ++j)
      if (mask.at(i, j)) g.edges.emplace_back(i, j);
  return g;
}

namespace {

// Undirected same-modality pairs passing the filter in either direction,
// self-pairs excluded.
std::vector<std::pair<std::size_t, std::size_t>> intra_pairs(
    const std::vector<double>& rows, std::size_t count, std::size_t dim,
    double alpha) {
  const ValueMatrix sim =
      cosine_similarity_matrix(rows, count, rows, count, dim);
  const BinaryMask mask = dynamic_filter(sim, alpha);
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < count; ++i)
    for (std::size_t k = i + 1; k < count; ++k)
      if (mask.at(i, k) || mask.at(k, i)) pairs.emplace_back(i, k);
  return pairs;
}

}  // namespace

void add_intra_modality_edges(HeteroGraph& graph, const Tensor& time_nodes,
                              const Tensor& text_nodes, double alpha) {
  graph.time_time_edges = intra_pairs(time_nodes.values(), time_nodes.rows(),
                                      time_nodes.cols(), alpha);
  graph.text_text_edges = intra_pairs(text_nodes.values(), text_nodes.rows(),
                                      text_nodes.cols(), alpha);
}

std::pair<Tensor, Tensor> sage_update(const HeteroGraph& graph,
                                      const Tensor& time_nodes,
                                      const Tensor& text_nodes,
                                      const Tensor& w_time,
                                      const Tensor& w_text, GraphKind kind) {
  const std::size_t P = graph.time_count;
  const std::size_t Np = graph.text_count;
  const std::size_t d = time_nodes.cols();
  if (time_nodes.rows() != P || text_nodes.rows() != Np ||
      text_nodes.cols() != d)
    throw ShapeError("sage_update: node matrices do not match graph");
  const std::size_t expected_in = kind == GraphKind::sage ? 2 * d : d;
  if (w_time.rows() != d || w_time.cols() != expected_in ||
      w_text.rows() != d || w_text.cols() != expected_in)
    throw ShapeError("sage_update: update weights must be " +
                     std::to_string(d) + "x" + std::to_string(expected_in) +
                     ", got " + shape_str(w_time.shape()) + " and " +
                     shape_str(w_text.shape()));

  // Neighbor lists index into concat([time; text], axis 0).
  std::vector<std::vector<std::size_t>> time_nb(P), text_nb(Np);
  for (const auto& [i, j] : graph.edges) {
    time_nb[i].push_back(P + j);
    text_nb[j].push_back(i);
  }
  for (const auto& [i, k] : graph.time_time_edges) {
    time_nb[i].push_back(k);
    time_nb[k].push_back(i);
  }
  for (const auto& [j, l] : graph.text_text_edges) {
    text_nb[j].push_back(P + l);
    text_nb[l].push_back(P + j);
  }

  const Tensor stacked = concat(time_nodes, text_nodes, 0);

  auto update = [&](const Tensor& own,
                    const std::vector<std::vector<std::size_t>>& lists,
                    const Tensor& w) {
    if (kind == GraphKind::sage) {
      Tensor agg = scatter_mean(stacked, lists);
      return relu(matmul(concat(own, agg, 1), transpose(w)));
    }
    // GCN: symmetric normalization 1/sqrt(deg_u * deg_v), no self term.
    std::vector<double> degree(P + Np, 0.0);
    for (std::size_t i = 0; i < P; ++i)
      degree[i] = static_cast<double>(time_nb[i].size());
    for (std::size_t j = 0; j < Np; ++j)
      degree[P + j] = static_cast<double>(text_nb[j].size());
    const bool is_time = &lists == &time_nb;
    std::vector<std::vector<double>> weights(lists.size());
    for (std::size_t u = 0; u < lists.size(); ++u) {
      const double du = is_time ? degree[u] : degree[P + u];
      weights[u].reserve(lists[u].size());
      for (std::size_t s : lists[u])
        weights[u].push_back(1.0 / std::sqrt(du * degree[s]));
    }
    Tensor agg = scatter_weighted_sum(stacked, lists, std::move(weights));
    return relu(matmul(agg, transpose(w)));
  };

  return {update(time_nodes, time_nb, w_time),
          update(text_nodes, text_nb, w_text)};
}

// --- model --------------------------------------------------------------

FiCoTSModel::FiCoTSModel(ModelConfig config, std::uint64_t seed)
    : config_(std::move(config)) {
  config_.validate();
  Rng rng(seed);
  const std::size_t d = config_.d_model;
  const std::size_t M = config_.horizon;
  const std::size_t Lp = config_.patch_len;
  const std::size_t flat = config_.patch_count() * Lp;
  const std::size_t graph_in =
      config_.graph_kind == GraphKind::sage ? 2 * d : d;

  params_.push_back(make_weight("patch_proj", {Lp, d}, Lp, rng));
  params_.push_back(make_weight("w_time", {d, graph_in}, graph_in, rng));
  params_.push_back(make_weight("w_text", {d, graph_in}, graph_in, rng));
  params_.push_back(make_weight("w_q", {d, d}, d, rng));
  params_.push_back(make_weight("w_k", {d, d}, d, rng));
  params_.push_back(make_weight("w_v", {d, d}, d, rng));
  params_.push_back(make_weight("w_feature", {d, d}, d, rng));
  params_.push_back(
      Parameter("ln_gamma", Tensor::full({1, d}, 1.0, true)));
  params_.push_back(make_zero_param("ln_beta", {1, d}));
  params_.push_back(make_weight("proj_time", {d, M}, d, rng));
  params_.push_back(make_weight("proj_text", {d, M}, d, rng));
  params_.push_back(make_weight("proj_original", {flat, M}, flat, rng));
  params_.push_back(make_weight("w_gate", {M, 2 * M}, 2 * M, rng));
  params_.push_back(make_zero_param("b_gate", {1, M}));
  params_.push_back(make_weight("w_fuse1", {M, M}, M, rng));
  params_.push_back(make_weight("w_fuse2", {M, M}, M, rng));
  params_.push_back(make_weight("w_decision", {M, 2 * M}, 2 * M, rng));
  params_.push_back(make_zero_param("b_decision", {1, M}));

  std::set<std::string> names;
  for (const auto& p : params_)
    if (!names.insert(p.name).second)
      throw ConfigError("model: duplicate parameter name " + p.name);
}

std::vector<Parameter*> FiCoTSModel::parameters() {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(&p);
  return out;
}

std::vector<const Parameter*> FiCoTSModel::parameters() const {
  std::vector<const Parameter*> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(&p);
  return out;
}

Parameter& FiCoTSModel::param(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return p;
  throw ConfigError("model: no parameter named " + name);
}

void FiCoTSModel::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

PatchSet FiCoTSModel::patchify_and_embed(
    const std::vector<double>& series) const {
  if (series.size() != config_.t_in)
    throw ConfigError("patchify: series length " +
                      std::to_string(series.size()) + " != t_in " +
                      std::to_string(config_.t_in));
  const std::size_t P = config_.patch_count();
  const std::size_t Lp = config_.patch_len;
  const std::size_t S = config_.stride;
  std::vector<double> raw(P * Lp);
  for (std::size_t i = 0; i < P; ++i)
    for (std::size_t k = 0; k < Lp; ++k) {
      const std::size_t idx = i * S + k;
      // right-pad overruns with the last observed value
      raw[i * Lp + k] = idx < series.size() ? series[idx] : series.back();
    }
  PatchSet ps;
  ps.raw = Tensor::from_values({P, Lp}, std::move(raw));
  ps.embedded = matmul(ps.raw, params_[0].tensor);
  return ps;
}

namespace {

// Record every (a, b, fused) triple of a convex gate output.
void record_gate(std::vector<ForwardTrace::GateSample>& out, const Tensor& a,
                 const Tensor& b, const Tensor& fused) {
  for (std::size_t i = 0; i < fused.size(); ++i)
    out.push_back({a.values()[i], b.values()[i], fused.values()[i]});
}

}  // namespace

std::vector<Tensor> FiCoTSModel::forward(
    const std::vector<const WindowSample*>& batch,
    const std::vector<std::vector<TextEmbedding>>& text_per_window,
    ForwardTrace* trace) const {
  // All shape validation happens before any arithmetic.
  if (batch.size() != text_per_window.size())
    throw ConfigError("forward: batch and text list sizes differ");
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const WindowSample& w = *batch[b];
    if (w.t_in != config_.t_in || w.horizon != config_.horizon ||
        w.channels != config_.channels)
      throw ConfigError(
          "forward: window geometry (t_in=" + std::to_string(w.t_in) +
          ", horizon=" + std::to_string(w.horizon) +
          ", channels=" + std::to_string(w.channels) +
          ") does not match the model config");
    if (text_per_window[b].size() != config_.channels)
      throw ConfigError("forward: expected one text embedding per variable");
    for (const auto& e : text_per_window[b]) {
      if (e.dim != config_.d_model)
        throw ConfigError("forward: text embedding dim " +
                          std::to_string(e.dim) + " != d_model " +
                          std::to_string(config_.d_model));
      if (e.token_count < 1)
        throw ConfigError("forward: empty text embedding");
    }
  }

  std::vector<Tensor> predictions;
  predictions.reserve(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b)
    predictions.push_back(
        forward_window(*batch[b], text_per_window[b], trace));
  return predictions;
}

Tensor FiCoTSModel::forward_window(const WindowSample& window,
                                   const std::vector<TextEmbedding>& text,
                                   ForwardTrace* trace) const {
  const std::size_t N = config_.channels;
  const std::size_t d = config_.d_model;
  const std::size_t M = config_.horizon;
  const Tensor& w_time = params_[1].tensor;
  const Tensor& w_text =
      config_.single_node_type ? params_[1].tensor : params_[2].tensor;

  std::vector<Tensor> pooled_time, pooled_text, flat_patches;
  pooled_time.reserve(N);
  pooled_text.reserve(N);
  flat_patches.reserve(N);

  for (std::size_t n = 0; n < N; ++n) {
    std::vector<double> series(config_.t_in);
    for (std::size_t t = 0; t < config_.t_in; ++t)
      series[t] = window.x_at(t, n);
    if (config_.instance_norm) {
      const double m = window.instance_mean[n];
      const double s =
          window.instance_std[n] < 1e-8 ? 1.0 : window.instance_std[n];
      for (auto& v : series) v = (v - m) / s;
    }

    PatchSet ps = patchify_and_embed(series);

    const std::size_t n_p = text[n].token_count;
    std::vector<double> text_values =
        config_.use_text ? text[n].tokens
                         : std::vector<double>(n_p * d, 0.0);
    Tensor text_nodes = Tensor::from_values({n_p, d}, std::move(text_values));

    Tensor time_tok = ps.embedded;
    Tensor text_tok = text_nodes;
    if (config_.token_level) {
      const ValueMatrix sim = cosine_similarity_matrix(
          ps.embedded.values(), ps.embedded.rows(), text_nodes.values(), n_p,
          d);
      HeteroGraph graph = build_hetero_graph(dynamic_filter(sim, config_.alpha));
      if (config_.intra_modality_edges)
        add_intra_modality_edges(graph, ps.embedded, text_nodes,
                                 config_.alpha);
      auto updated = sage_update(graph, ps.embedded, text_nodes, w_time,
                                 w_text, config_.graph_kind);
      time_tok = std::move(updated.first);
      text_tok = std::move(updated.second);
    }
    if (trace) {
      trace->pre_align.push_back(ps.embedded.values());
      trace->post_align.push_back(time_tok.values());
    }

    pooled_time.push_back(mean_axis(time_tok, 0));
    pooled_text.push_back(index_select_rows(text_tok, {n_p - 1}));
    flat_patches.push_back(
        reshape(ps.raw, {1, ps.raw.rows() * ps.raw.cols()}));
  }

  Tensor x_global = concat_rows(pooled_time);   // N x d
  Tensor p_global = concat_rows(pooled_text);   // N x d
  Tensor flat_all = concat_rows(flat_patches);  // N x P*L_p

  Tensor x_feature = x_global;
  if (config_.feature_level) {
    const std::size_t d_k = d / config_.heads;
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(d_k));
    Tensor q = matmul(x_global, params_[3].tensor);
    Tensor k = matmul(p_global, params_[4].tensor);
    Tensor v = matmul(p_global, params_[5].tensor);
    std::vector<Tensor> heads;
    heads.reserve(config_.heads);
    for (std::size_t h = 0; h < config_.heads; ++h) {
      Tensor qh = slice_cols(q, h * d_k, (h + 1) * d_k);
      Tensor kh = slice_cols(k, h * d_k, (h + 1) * d_k);
      Tensor vh = slice_cols(v, h * d_k, (h + 1) * d_k);
      Tensor weights =
          softmax_rows(scale(matmul(qh, transpose(kh)), inv_sqrt_dk));
      if (trace) {
        for (std::size_t r = 0; r < weights.rows(); ++r) {
          const auto& vals = weights.values();
          trace->attention_rows.emplace_back(vals.begin() + r * N,
                                             vals.begin() + (r + 1) * N);
        }
      }
      heads.push_back(matmul(weights, vh));
    }
    Tensor cat = heads[0];
    for (std::size_t h = 1; h < heads.size(); ++h)
      cat = concat(cat, heads[h], 1);
    x_feature = matmul(cat, params_[6].tensor);
  }
  Tensor p_feature =
      layer_norm(p_global, params_[7].tensor, params_[8].tensor, 1e-5);

  Tensor xf_hat = matmul(x_feature, params_[9].tensor);   // N x M
  Tensor pf_hat = matmul(p_feature, params_[10].tensor);  // N x M
  Tensor xo_hat = matmul(flat_all, params_[11].tensor);   // N x M

  Tensor out;
  if (config_.decision_level) {
    const Tensor ones = Tensor::full({N, M}, 1.0);
    Tensor gate_in = concat(xf_hat, pf_hat, 1);
    Tensor g = sigmoid(add_row_bias(
        matmul(gate_in, transpose(params_[12].tensor)), params_[13].tensor));
    Tensor fused = add(multiply(g, xf_hat),
                       multiply(subtract(ones, g), pf_hat));
    if (trace) record_gate(trace->fusion_gate, xf_hat, pf_hat, fused);

    Tensor branch1, branch2;
    if (config_.branch1)
      branch1 = add(matmul(fused, params_[14].tensor), xf_hat);
    if (config_.branch2)
      branch2 = add(matmul(fused, params_[15].tensor), xo_hat);

    if (config_.branch1 && config_.branch2) {
      Tensor dec_in = concat(branch1, branch2, 1);
      Tensor gd = sigmoid(
          add_row_bias(matmul(dec_in, transpose(params_[16].tensor)),
                       params_[17].tensor));
      out = add(multiply(gd, branch1),
                multiply(subtract(ones, gd), branch2));
      if (trace) record_gate(trace->decision_gate, branch1, branch2, out);
    } else {
      out = config_.branch1 ? branch1 : branch2;
    }
  } else {
    out = xf_hat;
  }

  if (config_.instance_norm) {
    std::vector<double> stds(N * M), means(N * M);
    for (std::size_t n = 0; n < N; ++n) {
      const double s =
          window.instance_std[n] < 1e-8 ? 1.0 : window.instance_std[n];
      for (std::size_t m = 0; m < M; ++m) {
        stds[n * M + m] = s;
        means[n * M + m] = window.instance_mean[n];
      }
    }
    out = add(multiply(out, Tensor::from_values({N, M}, std::move(stds))),
              Tensor::from_values({N, M}, std::move(means)));
  }

  return transpose(out);  // M x N
}

}  // namespace ficots
