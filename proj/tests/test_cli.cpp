#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ficots/checkpoint.hpp"
#include "ficots/config.hpp"
#include "ficots/errors.hpp"
#include "ficots/experiment.hpp"
#include "ficots/serialize.hpp"

using namespace ficots;
namespace fs = std::filesystem;

namespace {

const fs::path kSource = FICOTS_SOURCE_DIR;
const std::string kCli = FICOTS_CLI_PATH;

fs::path fresh_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("ficots_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Minimal toy experiment rooted at the repository's bundled data.
ExperimentConfig toy_config(const fs::path& out_dir) {
  ExperimentConfig cfg;
  cfg.dataset_path = (kSource / "data/toy.csv").string();
  cfg.dataset_key = "toy";
  cfg.descriptions_dir = (kSource / "data/descriptions").string();
  cfg.model.t_in = 32;
  cfg.model.horizon = 4;
  cfg.model.patch_len = 8;
  cfg.model.stride = 4;
  cfg.model.d_model = 8;
  cfg.model.heads = 2;
  cfg.train.max_epochs = 3;
  cfg.train.seed = 7;
  cfg.output_dir = out_dir.string();
  return cfg;
}

int run_cli(const std::string& args) {
  const int status = std::system((kCli + " " + args + " >/dev/null 2>&1").c_str());
  REQUIRE(status != -1);
  return WEXITSTATUS(status);
}

}  // namespace

TEST_SUITE("config grammar") {
  TEST_CASE("defaults and overrides") {
    auto cfg = parse_config_text(
        "dataset.path = a.csv\n"
        "# comment\n"
        "\n"
        "model.t_in = 96\n"
        "train.lr = 0.01\n"
        "model.graph_kind = gcn\n");
    CHECK(cfg.dataset_path == "a.csv");
    CHECK(cfg.model.t_in == 96);
    CHECK(cfg.model.horizon == 96);  // default
    CHECK(cfg.train.learning_rate == 0.01);
    CHECK(cfg.model.graph_kind == GraphKind::gcn);
    CHECK(cfg.split.train_fraction == 0.6);
  }

  TEST_CASE("unknown keys are errors, not warnings") {
    CHECK_THROWS_WITH_AS(parse_config_text("model.tin = 5\n"),
                         doctest::Contains("unknown key"), ConfigError);
  }

  TEST_CASE("malformed lines and values") {
    CHECK_THROWS_AS(parse_config_text("just words\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("model.t_in = twelve\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("model.use_text = yes\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("model.graph_kind = tree\n"),
                    ConfigError);
  }

  TEST_CASE("later keys override earlier ones") {
    auto cfg = parse_config_text("model.d_model = 32\nmodel.d_model = 64\n");
    CHECK(cfg.model.d_model == 64);
  }

  TEST_CASE("fragment files overlay a base config") {
    auto dir = fresh_dir("fragments");
    std::ofstream(dir / "base.cfg") << "dataset.path = x.csv\n"
                                       "model.token_level = true\n";
    std::ofstream(dir / "variant.cfg") << "model.token_level = false\n";
    auto cfg = parse_config_files(
        {(dir / "base.cfg").string(), (dir / "variant.cfg").string()});
    CHECK(cfg.model.token_level == false);
    CHECK(cfg.dataset_path == "x.csv");
  }

  TEST_CASE("shipped ablation fragments parse against a base config") {
    for (const auto& entry :
         fs::directory_iterator(kSource / "configs/ablations")) {
      auto cfg = parse_config_files(
          {(kSource / "configs/train_toy.cfg").string(),
           entry.path().string()});
      CHECK(!cfg.dataset_path.empty());
    }
  }

  TEST_CASE("serialize/parse round trip is lossless") {
    auto cfg = parse_config_text(
        "dataset.path = d.csv\n"
        "model.alpha = 0.12345678901234567\n"
        "train.lr = 1e-3\n"
        "train.seed = 987654321\n"
        "model.use_text = false\n");
    const std::string text = serialize_config(cfg, true);
    auto cfg2 = parse_config_text(text);
    CHECK(serialize_config(cfg2, true) == text);
    CHECK(cfg2.model.alpha == cfg.model.alpha);
    CHECK(cfg2.train.learning_rate == cfg.train.learning_rate);
  }
}

TEST_SUITE("checkpoint container") {
  TEST_CASE("save/load round trip is bit exact") {
    auto dir = fresh_dir("ck_roundtrip");
    ModelConfig m;
    m.t_in = 16;
    m.horizon = 2;
    m.channels = 2;
    m.patch_len = 4;
    m.stride = 4;
    m.d_model = 4;
    m.heads = 2;
    FiCoTSModel model(m, 99);
    auto ck = snapshot_model(model, "config text here", 99, 5);
    const auto path = (dir / "model.fcck").string();
    save_checkpoint(path, ck);
    auto loaded = load_checkpoint(path);
    CHECK(loaded.config_text == ck.config_text);
    CHECK(loaded.seed == 99);
    CHECK(loaded.best_epoch == 5);
    CHECK(loaded.channels == 2);
    REQUIRE(loaded.params.size() == ck.params.size());
    for (std::size_t i = 0; i < ck.params.size(); ++i) {
      CHECK(loaded.params[i].name == ck.params[i].name);
      CHECK(loaded.params[i].shape == ck.params[i].shape);
      CHECK(loaded.params[i].values == ck.params[i].values);
    }

    FiCoTSModel other(model.config(), 1234);  // different init
    restore_model(other, loaded);
    auto a = model.parameters();
    auto b = other.parameters();
    for (std::size_t i = 0; i < a.size(); ++i)
      CHECK(a[i]->tensor.values() == b[i]->tensor.values());
  }

  TEST_CASE("version mismatch is rejected") {
    auto dir = fresh_dir("ck_version");
    ByteWriter w;
    w.magic("FCCK");
    w.u16(99);
    w.str("cfg");
    const auto path = (dir / "bad.fcck").string();
    w.write_file(path);
    CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("version 99"),
                         DataError);
  }

  TEST_CASE("bad magic is rejected") {
    auto dir = fresh_dir("ck_magic");
    std::ofstream(dir / "junk.fcck", std::ios::binary) << "JUNKxxxx";
    CHECK_THROWS_AS(load_checkpoint((dir / "junk.fcck").string()), DataError);
  }
}

TEST_SUITE("run_train / run_eval") {
  TEST_CASE("training writes checkpoint, history, and manifest") {
    auto dir = fresh_dir("train_basic");
    auto outputs = run_train(toy_config(dir));
    CHECK(fs::exists(outputs.checkpoint_path));
    CHECK(fs::exists(outputs.history_path));
    CHECK(fs::exists(outputs.manifest_path));
    CHECK(outputs.result.history.size() >= 1);
    // one history line per epoch, four fields each
    std::istringstream hist(read_file(outputs.history_path));
    std::string line;
    std::size_t lines = 0;
    while (std::getline(hist, line)) {
      ++lines;
      std::istringstream fields(line);
      double a, b, c, d;
      CHECK((fields >> a >> b >> c >> d));
    }
    CHECK(lines == outputs.result.history.size());
  }

  TEST_CASE("identical config and seed reproduce run outputs byte for byte") {
    auto dir1 = fresh_dir("repro1");
    auto dir2 = fresh_dir("repro2");
    auto out1 = run_train(toy_config(dir1));
    auto out2 = run_train(toy_config(dir2));
    CHECK(read_file(out1.history_path) == read_file(out2.history_path));
    CHECK(read_file(out1.checkpoint_path) == read_file(out2.checkpoint_path));
  }

  TEST_CASE("the manifest alone reproduces the run") {
    auto dir = fresh_dir("manifest_rerun");
    auto first = run_train(toy_config(dir / "a"));
    auto manifest_cfg = parse_config_files({first.manifest_path.string()});
    manifest_cfg.output_dir = (dir / "b").string();
    auto second = run_train(manifest_cfg);
    CHECK(read_file(first.history_path) == read_file(second.history_path));
    CHECK(read_file(first.checkpoint_path) ==
          read_file(second.checkpoint_path));
  }

  TEST_CASE("seed changes the run") {
    auto dir = fresh_dir("seeded");
    auto cfg1 = toy_config(dir / "a");
    auto cfg2 = toy_config(dir / "b");
    cfg2.train.seed = 8;
    auto out1 = run_train(cfg1);
    auto out2 = run_train(cfg2);
    CHECK(read_file(out1.history_path) != read_file(out2.history_path));
  }

  TEST_CASE("static prompt mode drops statistics and reuses one embedding") {
    auto dir = fresh_dir("static_prompt");
    auto cfg = toy_config(dir);
    cfg.static_prompt = true;
    Pipeline pipe = build_pipeline(cfg);
    auto prompts = render_prompts(pipe, Split::test);
    REQUIRE(!prompts.empty());
    for (const auto& p : prompts) {
      CHECK(p.find("Input statistics") == std::string::npos);
      CHECK(p.find("Forecast the next") != std::string::npos);
      CHECK(p == prompts.front());  // one prompt per variable, all equal here
    }
    auto windows = prepared_windows(pipe, Split::train);
    REQUIRE(!windows.empty());
    CHECK(windows.front().text[0].tokens == windows.back().text[0].tokens);
  }

  TEST_CASE("few-shot prefix shrinks the training set deterministically") {
    auto dir = fresh_dir("fewshot");
    auto cfg = toy_config(dir);
    cfg.train.few_shot_fraction = 0.1;
    auto outputs = run_train(cfg);  // should still run end to end
    CHECK(fs::exists(outputs.checkpoint_path));
  }

  TEST_CASE("eval prints metrics and writes predictions") {
    auto dir = fresh_dir("eval");
    auto outputs = run_train(toy_config(dir / "train"));
    auto eval = run_eval(outputs.checkpoint_path.string(), "",
                         (dir / "eval").string(), false);
    CHECK(eval.metrics.n_windows > 0);
    CHECK(std::isfinite(eval.metrics.mse));
    const std::string csv = read_file(eval.predictions_path);
    std::size_t lines = std::count(csv.begin(), csv.end(), '\n');
    // header + n_windows * horizon * channels rows
    CHECK(lines == 1 + eval.metrics.n_windows * 4 * 2);
    CHECK(csv.rfind("window_start,step,variable,pred,truth\n", 0) == 0);

    auto raw_eval = run_eval(outputs.checkpoint_path.string(), "",
                             (dir / "eval_raw").string(), true);
    CHECK(raw_eval.raw_space);
    CHECK(std::isfinite(raw_eval.metrics.mse));
  }

  TEST_CASE("eval rejects a dataset with a different variable count") {
    auto dir = fresh_dir("eval_mismatch");
    auto outputs = run_train(toy_config(dir / "train"));
    const auto other = dir / "three_channels.csv";
    std::ofstream csv(other);
    csv << "date,a,b,c\n";
    for (int t = 0; t < 240; ++t)
      csv << t << "," << 0.1 * t << "," << 0.2 * t << "," << 0.3 * t << "\n";
    csv.close();
    CHECK_THROWS_WITH_AS(run_eval(outputs.checkpoint_path.string(),
                                  other.string(), (dir / "out").string(),
                                  false),
                         doctest::Contains("variables"), DataError);
  }
}

TEST_SUITE("run_gradcheck") {
  TEST_CASE("toy config passes") {
    auto dir = fresh_dir("gradcheck");
    auto cfg = toy_config(dir);
    auto report = run_gradcheck(cfg);
    INFO("worst " << report.worst_parameter << " rel "
                  << report.max_rel_error);
    CHECK(report.pass);
  }

  TEST_CASE("corrupted gradients are caught") {
    auto dir = fresh_dir("gradcheck_corrupt");
    auto report = run_gradcheck(toy_config(dir), /*corrupt=*/true);
    CHECK(!report.pass);
    CHECK(!report.worst_parameter.empty());
  }
}

TEST_SUITE("run_dump") {
  TEST_CASE("prompts contain the instruction template") {
    auto dir = fresh_dir("dump_prompts");
    auto outputs = run_train(toy_config(dir / "train"));
    auto path = run_dump(outputs.checkpoint_path.string(), "prompts",
                         (dir / "dump").string());
    const std::string text = read_file(path);
    CHECK(text.find("Forecast the next") != std::string::npos);
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line))
      CHECK(line.find("Forecast the next") != std::string::npos);
    // deterministic
    auto again = run_dump(outputs.checkpoint_path.string(), "prompts",
                          (dir / "dump2").string());
    CHECK(read_file(again) == text);
  }

  TEST_CASE("embeddings csv has the documented header") {
    auto dir = fresh_dir("dump_emb");
    auto outputs = run_train(toy_config(dir / "train"));
    auto path = run_dump(outputs.checkpoint_path.string(), "embeddings",
                         (dir / "dump").string());
    const std::string csv = read_file(path);
    std::istringstream lines(csv);
    std::string header;
    REQUIRE(std::getline(lines, header));
    CHECK(header.rfind("variable,patch,stage,dim_0", 0) == 0);
    CHECK(std::count(header.begin(), header.end(), ',') == 2 + 8);
    CHECK(csv.find("pre_align") != std::string::npos);
    CHECK(csv.find("post_align") != std::string::npos);
  }

  TEST_CASE("unknown dump target is a usage error") {
    auto dir = fresh_dir("dump_bad");
    auto outputs = run_train(toy_config(dir / "train"));
    CHECK_THROWS_AS(run_dump(outputs.checkpoint_path.string(), "weights",
                             (dir / "out").string()),
                    ConfigError);
  }
}

TEST_SUITE("cli binary") {
  TEST_CASE("exit codes follow the contract") {
    auto dir = fresh_dir("binary");
    // a config file usable from any working directory
    auto cfg = toy_config(dir / "out");
    std::ofstream(dir / "toy.cfg") << serialize_config(cfg, true);

    CHECK(run_cli("train --config " + (dir / "toy.cfg").string()) == 0);
    CHECK(fs::exists(dir / "out/checkpoint.fcck"));

    CHECK(run_cli("eval --checkpoint " + (dir / "out/checkpoint.fcck").string() +
                  " --out " + (dir / "eval").string()) == 0);

    // config error: invalid key
    std::ofstream(dir / "bad.cfg") << "bogus.key = 1\n";
    CHECK(run_cli("train --config " + (dir / "bad.cfg").string()) == 2);

    // config error: model invariant (patch_len > t_in)
    auto bad_model = cfg;
    bad_model.model.patch_len = cfg.model.t_in + 1;
    std::ofstream(dir / "badmodel.cfg") << serialize_config(bad_model, true);
    CHECK(run_cli("train --config " + (dir / "badmodel.cfg").string()) == 2);

    // data error: missing dataset
    auto missing = cfg;
    missing.dataset_path = (dir / "nope.csv").string();
    std::ofstream(dir / "missing.cfg") << serialize_config(missing, true);
    CHECK(run_cli("train --config " + (dir / "missing.cfg").string()) == 3);

    // data error: version-gated checkpoint
    ByteWriter w;
    w.magic("FCCK");
    w.u16(99);
    w.str("x");
    w.write_file((dir / "v99.fcck").string());
    CHECK(run_cli("eval --checkpoint " + (dir / "v99.fcck").string() +
                  " --out " + (dir / "e2").string()) == 3);

    // usage errors
    CHECK(run_cli("") == 2);
    CHECK(run_cli("dump weights --checkpoint " +
                  (dir / "out/checkpoint.fcck").string() + " --out " +
                  (dir / "d").string()) == 2);

    // gradcheck passes on the toy config
    CHECK(run_cli("gradcheck --config " + (dir / "toy.cfg").string()) == 0);
  }

  TEST_CASE("seed flag overrides the config") {
    auto dir = fresh_dir("binary_seed");
    auto cfg = toy_config(dir / "a");
    std::ofstream(dir / "toy.cfg") << serialize_config(cfg, true);
    CHECK(run_cli("train --config " + (dir / "toy.cfg").string()) == 0);
    CHECK(run_cli("train --config " + (dir / "toy.cfg").string() + " --out " +
                  (dir / "b").string() + " --seed 123") == 0);
    CHECK(read_file(dir / "a/history.txt") != read_file(dir / "b/history.txt"));
  }

  TEST_CASE("few-shot flag changes the training set") {
    auto dir = fresh_dir("binary_fewshot");
    auto cfg = toy_config(dir / "a");
    std::ofstream(dir / "toy.cfg") << serialize_config(cfg, true);
    CHECK(run_cli("train --config " + (dir / "toy.cfg").string()) == 0);
    CHECK(run_cli("train --config " + (dir / "toy.cfg").string() + " --out " +
                  (dir / "b").string() + " --few-shot 0.1") == 0);
    CHECK(read_file(dir / "a/history.txt") != read_file(dir / "b/history.txt"));
    // the manifest records the resolved fraction
    const std::string manifest = read_file(dir / "b/manifest.cfg");
    CHECK(manifest.find("train.few_shot = 0.1") != std::string::npos);
  }
}
