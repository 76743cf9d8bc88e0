#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "ficots/errors.hpp"
#include "ficots/experiment.hpp"

namespace {

using namespace ficots;

struct Args {
  std::vector<std::string> config_paths;
  std::string checkpoint;
  std::string dataset;
  std::string out_dir;
  std::string what;
  std::optional<std::uint64_t> seed;
  std::optional<double> few_shot;
  bool raw_space = false;
};

ExperimentConfig load_config(const Args& args) {
  ExperimentConfig cfg = parse_config_files(args.config_paths);
  if (args.seed) cfg.train.seed = *args.seed;
  if (args.few_shot) cfg.train.few_shot_fraction = *args.few_shot;
  if (!args.out_dir.empty()) cfg.output_dir = args.out_dir;
  if (args.raw_space) cfg.raw_space_metrics = true;
  return cfg;
}

int do_train(const Args& args) {
  TrainOutputs out = run_train(load_config(args));
  std::printf("train: epochs=%zu best_epoch=%zu best_val_mse=%.17g checkpoint=%s\n",
              out.result.history.size(), out.result.best_epoch,
              out.result.best_val_mse, out.checkpoint_path.c_str());
  return 0;
}

int do_eval(const Args& args) {
  EvalOutputs out = run_eval(args.checkpoint, args.dataset, args.out_dir,
                             args.raw_space);
  std::printf("mse=%.17g mae=%.17g n_windows=%zu space=%s\n", out.metrics.mse,
              out.metrics.mae, out.metrics.n_windows,
              out.raw_space ? "raw" : "normalized");
  return 0;
}

int do_gradcheck(const Args& args) {
  GradCheckReport report = run_gradcheck(load_config(args));
  std::printf(
      "gradcheck: max_rel_error=%.6e worst=%s[%zu] elements=%zu pass=%s\n",
      report.max_rel_error, report.worst_parameter.c_str(),
      report.worst_index, report.checked_elements,
      report.pass ? "true" : "false");
  return report.pass ? 0 : 4;
}

int do_dump(const Args& args) {
  auto path = run_dump(args.checkpoint, args.what, args.out_dir);
  std::printf("dump: wrote %s\n", path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fine-to-coarse multimodal time series forecasting"};
  app.require_subcommand(1);
  Args args;

  auto* train_cmd =
      app.add_subcommand("train", "train a model and write a checkpoint");
  train_cmd
      ->add_option("--config", args.config_paths,
                   "config file(s); later files override earlier keys")
      ->required();
  train_cmd->add_option("--out", args.out_dir, "output directory override");
  train_cmd->add_option("--seed", args.seed, "seed override");
  train_cmd->add_option("--few-shot", args.few_shot,
                        "train on this chronological fraction of windows");

  auto* eval_cmd =
      app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  eval_cmd->add_option("--checkpoint", args.checkpoint)->required();
  eval_cmd->add_option("dataset", args.dataset,
                       "dataset CSV (defaults to the checkpoint's)");
  eval_cmd->add_option("--out", args.out_dir)->required();
  eval_cmd->add_flag("--raw-space", args.raw_space,
                     "report metrics in original units");

  auto* grad_cmd = app.add_subcommand(
      "gradcheck", "compare tape gradients with finite differences");
  grad_cmd->add_option("--config", args.config_paths)->required();
  grad_cmd->add_option("--seed", args.seed, "seed override");

  auto* dump_cmd =
      app.add_subcommand("dump", "write prompts or embeddings to files");
  dump_cmd->add_option("what", args.what, "prompts | embeddings")->required();
  dump_cmd->add_option("--checkpoint", args.checkpoint)->required();
  dump_cmd->add_option("--out", args.out_dir)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::cerr << "error: usage: " << e.what() << "\n";
    return 2;
  }

  try {
    if (app.got_subcommand(train_cmd)) return do_train(args);
    if (app.got_subcommand(eval_cmd)) return do_eval(args);
    if (app.got_subcommand(grad_cmd)) return do_gradcheck(args);
    if (app.got_subcommand(dump_cmd)) return do_dump(args);
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "error: config: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "error: data: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "error: numeric: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 70;
  }
}
