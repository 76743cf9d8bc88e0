#include "ficots/experiment.hpp"

#include <cstdio>
#include <fstream>

#include "ficots/checkpoint.hpp"
#include "ficots/errors.hpp"

namespace ficots {

namespace {

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

IndexRange split_range(const Pipeline& pipe, Split which) {
  switch (which) {
    case Split::train:
      return pipe.ranges.train;
    case Split::val:
      return with_input_context(pipe.ranges.val, pipe.cfg.model.t_in);
    case Split::test:
      return with_input_context(pipe.ranges.test, pipe.cfg.model.t_in);
  }
  throw ConfigError("unknown split");
}

void open_out_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec)
    throw ConfigError("cannot create output directory '" + dir.string() +
                      "': " + ec.message());
}

void write_text_file(const std::filesystem::path& path,
                     const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << content;
}

}  // namespace

Pipeline build_pipeline(ExperimentConfig cfg) {
  cfg.validate_static();
  Pipeline pipe;
  pipe.raw = load_csv(cfg.dataset_path, cfg.has_date_column);
  cfg.model.channels = pipe.raw.channels;
  cfg.model.validate();

  pipe.ranges = split(pipe.raw, cfg.split);
  const std::size_t need = cfg.model.t_in + cfg.model.horizon;
  for (auto [name, range] :
       {std::pair<const char*, IndexRange>{"train", pipe.ranges.train},
        {"val", with_input_context(pipe.ranges.val, cfg.model.t_in)},
        {"test", with_input_context(pipe.ranges.test, cfg.model.t_in)}}) {
    if (range.size() < need)
      throw ConfigError(std::string("split '") + name + "' has " +
                        std::to_string(range.size()) +
                        " usable rows, needs at least " +
                        std::to_string(need));
  }

  pipe.stats = fit_scaler(pipe.raw, pipe.ranges.train);
  pipe.scaled = transform(pipe.raw, pipe.stats);

  pipe.descriptions = DescriptionStore::from_directory(cfg.descriptions_dir);
  pipe.descriptions.get(cfg.dataset_key);  // fail fast on unknown keys

  EmbeddingMap imported;
  if (cfg.text_mode == "import")
    imported = import_embeddings(cfg.text_import_path, cfg.model.d_model);
  pipe.text = std::make_shared<TextProvider>(
      std::make_shared<StubEncoder>(cfg.model.d_model, cfg.text_seed),
      std::move(imported));

  pipe.cfg = std::move(cfg);
  return pipe;
}

std::vector<PreparedWindow> prepared_windows(Pipeline& pipe, Split which) {
  const ExperimentConfig& cfg = pipe.cfg;
  const IndexRange range = split_range(pipe, which);
  auto scaled =
      make_windows(pipe.scaled, cfg.model.t_in, cfg.model.horizon, range);
  auto raw = make_windows(pipe.raw, cfg.model.t_in, cfg.model.horizon, range);
  if (which == Split::train && cfg.train.few_shot_fraction < 1.0) {
    scaled = few_shot_subset(std::move(scaled), cfg.train.few_shot_fraction);
    raw = few_shot_subset(std::move(raw), cfg.train.few_shot_fraction);
  }

  std::vector<PreparedWindow> out;
  out.reserve(scaled.size());
  for (std::size_t i = 0; i < scaled.size(); ++i) {
    PreparedWindow pw;
    pw.window = std::move(scaled[i]);
    pw.text.reserve(cfg.model.channels);
    for (std::size_t n = 0; n < cfg.model.channels; ++n) {
      std::optional<ChannelStats> stats;
      if (!cfg.static_prompt) {
        std::vector<double> column(cfg.model.t_in);
        for (std::size_t t = 0; t < cfg.model.t_in; ++t)
          column[t] = raw[i].x_at(t, n);
        stats = compute_stats(column);
      }
      const Prompt prompt =
          build_prompt(pipe.descriptions, cfg.dataset_key, cfg.model.t_in,
                       cfg.model.horizon, stats);
      pw.text.push_back(pipe.text->get(prompt.full_text));
    }
    out.push_back(std::move(pw));
  }
  return out;
}

std::vector<std::string> render_prompts(Pipeline& pipe, Split which) {
  const ExperimentConfig& cfg = pipe.cfg;
  const IndexRange range = split_range(pipe, which);
  auto raw = make_windows(pipe.raw, cfg.model.t_in, cfg.model.horizon, range);
  std::vector<std::string> prompts;
  prompts.reserve(raw.size() * cfg.model.channels);
  for (const auto& w : raw) {
    for (std::size_t n = 0; n < cfg.model.channels; ++n) {
      std::optional<ChannelStats> stats;
      if (!cfg.static_prompt) {
        std::vector<double> column(cfg.model.t_in);
        for (std::size_t t = 0; t < cfg.model.t_in; ++t)
          column[t] = w.x_at(t, n);
        stats = compute_stats(column);
      }
      prompts.push_back(build_prompt(pipe.descriptions, cfg.dataset_key,
                                     cfg.model.t_in, cfg.model.horizon, stats)
                            .full_text);
    }
  }
  return prompts;
}

TrainOutputs run_train(ExperimentConfig cfg) {
  Pipeline pipe = build_pipeline(std::move(cfg));
  auto train_set = prepared_windows(pipe, Split::train);
  auto val_set = prepared_windows(pipe, Split::val);

  FiCoTSModel model(pipe.cfg.model, pipe.cfg.train.seed);
  TrainResult result = train(model, train_set, val_set, pipe.cfg.train);

  const std::filesystem::path out_dir = pipe.cfg.output_dir;
  open_out_dir(out_dir);

  TrainOutputs outputs;
  outputs.result = result;
  outputs.history_path = out_dir / "history.txt";
  outputs.manifest_path = out_dir / "manifest.cfg";
  outputs.checkpoint_path = out_dir / "checkpoint.fcck";

  std::string history;
  for (const auto& rec : result.history)
    history += std::to_string(rec.epoch) + " " + fmt17(rec.train_loss) + " " +
               fmt17(rec.val_mse) + " " + fmt17(rec.val_mae) + "\n";
  write_text_file(outputs.history_path, history);
  write_text_file(outputs.manifest_path, serialize_config(pipe.cfg, true));
  save_checkpoint(outputs.checkpoint_path.string(),
                  snapshot_model(model, serialize_config(pipe.cfg, false),
                                 pipe.cfg.train.seed,
                                 static_cast<std::uint32_t>(result.best_epoch)));
  return outputs;
}

namespace {

// Rebuild the model and pipeline a checkpoint was trained with.
struct Restored {
  Pipeline pipe;
  std::unique_ptr<FiCoTSModel> model;
};

Restored restore(const std::string& checkpoint_path,
                 const std::string& dataset_override) {
  Checkpoint ck = load_checkpoint(checkpoint_path);
  ExperimentConfig cfg = parse_config_text(ck.config_text);
  if (!dataset_override.empty()) cfg.dataset_path = dataset_override;

  Restored r{build_pipeline(std::move(cfg)), nullptr};
  if (r.pipe.cfg.model.channels != ck.channels)
    throw DataError("eval: dataset has " +
                    std::to_string(r.pipe.cfg.model.channels) +
                    " variables, checkpoint was trained on " +
                    std::to_string(ck.channels));
  r.model = std::make_unique<FiCoTSModel>(r.pipe.cfg.model, ck.seed);
  restore_model(*r.model, ck);
  return r;
}

}  // namespace

EvalOutputs run_eval(const std::string& checkpoint_path,
                     const std::string& dataset_override,
                     const std::string& out_dir, bool raw_space) {
  Restored r = restore(checkpoint_path, dataset_override);
  auto test_set = prepared_windows(r.pipe, Split::test);

  std::vector<PredictionRow> rows;
  const ScalerStats* stats = raw_space ? &r.pipe.stats : nullptr;
  EvalOutputs out;
  out.metrics = evaluate(*r.model, test_set, stats, &rows);
  out.raw_space = raw_space;

  const std::filesystem::path dir = out_dir;
  open_out_dir(dir);
  out.predictions_path = dir / "predictions.csv";
  std::string csv = "window_start,step,variable,pred,truth\n";
  for (const auto& row : rows)
    csv += std::to_string(row.window_start) + "," + std::to_string(row.step) +
           "," + std::to_string(row.variable) + "," + fmt17(row.pred) + "," +
           fmt17(row.truth) + "\n";
  write_text_file(out.predictions_path, csv);
  return out;
}

GradCheckReport run_gradcheck(ExperimentConfig cfg, bool corrupt) {
  Pipeline pipe = build_pipeline(std::move(cfg));
  auto train_set = prepared_windows(pipe, Split::train);
  if (train_set.empty()) throw ConfigError("gradcheck: no training windows");
  const PreparedWindow& pw = train_set.front();

  FiCoTSModel model(pipe.cfg.model, pipe.cfg.train.seed);
  Tensor target = Tensor::from_values(
      {pw.window.horizon, pw.window.channels},
      std::vector<double>(pw.window.y.begin(), pw.window.y.end()));

  auto make_loss = [&]() {
    auto preds = model.forward({&pw.window}, {pw.text});
    Tensor loss = mse_loss(preds[0], target);
    if (corrupt) {
      // Copies the first parameter's values as constants: finite
      // differences see this term move, the tape does not.
      const Tensor& w = model.parameters().front()->tensor;
      Tensor detached = Tensor::from_values(w.shape(), w.values());
      loss = add(loss, scale(mean_all(multiply(detached, detached)), 0.01));
    }
    return loss;
  };
  return finite_diff_check(make_loss, model.parameters(), 1e-5, 1e-4);
}

std::filesystem::path run_dump(const std::string& checkpoint_path,
                               const std::string& what,
                               const std::string& out_dir) {
  if (what != "prompts" && what != "embeddings")
    throw ConfigError("dump: unknown target '" + what +
                      "', expected prompts or embeddings");
  Restored r = restore(checkpoint_path, "");
  const std::filesystem::path dir = out_dir;
  open_out_dir(dir);

  if (what == "prompts") {
    const auto prompts = render_prompts(r.pipe, Split::test);
    std::string text;
    for (const auto& p : prompts) text += p + "\n";
    const auto path = dir / "prompts.txt";
    write_text_file(path, text);
    return path;
  }

  auto test_set = prepared_windows(r.pipe, Split::test);
  if (test_set.empty()) throw ConfigError("dump: no test windows");
  ForwardTrace trace;
  r.model->forward({&test_set.front().window}, {test_set.front().text},
                   &trace);

  const std::size_t d = r.pipe.cfg.model.d_model;
  std::string csv = "variable,patch,stage";
  for (std::size_t c = 0; c < d; ++c) csv += ",dim_" + std::to_string(c);
  csv += "\n";
  auto emit = [&](std::size_t variable, const char* stage,
                  const std::vector<double>& values) {
    const std::size_t patches = values.size() / d;
    for (std::size_t p = 0; p < patches; ++p) {
      csv += std::to_string(variable) + "," + std::to_string(p) + "," + stage;
      for (std::size_t c = 0; c < d; ++c)
        csv += "," + fmt17(values[p * d + c]);
      csv += "\n";
    }
  };
  for (std::size_t n = 0; n < trace.pre_align.size(); ++n) {
    emit(n, "pre_align", trace.pre_align[n]);
    emit(n, "post_align", trace.post_align[n]);
  }
  const auto path = dir / "embeddings.csv";
  write_text_file(path, csv);
  return path;
}

}  // namespace ficots
