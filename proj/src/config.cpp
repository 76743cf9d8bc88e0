#include "ficots/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "ficots/errors.hpp"

namespace ficots {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& value) {
  double v = 0.0;
  const char* first = value.data();
  const char* last = first + value.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last)
    throw ConfigError("config: key '" + key + "' needs a number, got '" +
                      value + "'");
  return v;
}

std::size_t parse_size(const std::string& key, const std::string& value) {
  std::size_t v = 0;
  const char* first = value.data();
  const char* last = first + value.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last)
    throw ConfigError("config: key '" + key +
                      "' needs a non-negative integer, got '" + value + "'");
  return v;
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  std::uint64_t v = 0;
  const char* first = value.data();
  const char* last = first + value.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last)
    throw ConfigError("config: key '" + key +
                      "' needs a non-negative integer, got '" + value + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true") return true;
  if (value == "false") return false;
  throw ConfigError("config: key '" + key + "' needs true or false, got '" +
                    value + "'");
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

using Setter = std::function<void(ExperimentConfig&, const std::string& key,
                                  const std::string& value)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"dataset.path",
       [](ExperimentConfig& c, const std::string&, const std::string& v) {
         c.dataset_path = v;
       }},
      {"dataset.key",
       [](ExperimentConfig& c, const std::string&, const std::string& v) {
         c.dataset_key = v;
       }},
      {"dataset.has_date_column",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.has_date_column = parse_bool(k, v);
       }},
      {"split.train",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.split.train_fraction = parse_double(k, v);
       }},
      {"split.val",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.split.val_fraction = parse_double(k, v);
       }},
      {"split.test",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.split.test_fraction = parse_double(k, v);
       }},
      {"model.t_in",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.model.t_in = parse_size(k, v);
       }},
      {"model.horizon",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.model.horizon = parse_size(k, v);
       }},
      {"model.patch_len",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.model.patch_len = parse_size(k, v);
       }},
      {"model.stride",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.model.stride = parse_size(k, v);
       }},
      {"model.d_model",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.model.d_model = parse_size(k, v);
       }},
      {"model.heads",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.model.heads = parse_size(k, v);
       }},
      {"model.alpha",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.model.alpha = parse_double(k, v);
       }},
      {"model.token_level",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.model.token_level = parse_bool(k, v);
       }},
      {"model.feature_level",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.model.feature_level = parse_bool(k, v);
       }},
      {"model.decision_level",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.model.decision_level = parse_bool(k, v);
       }},
      {"model.branch1",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.model.branch1 = parse_bool(k, v);
       }},
      {"model.branch2",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.model.branch2 = parse_bool(k, v);
       }},
      {"model.graph_kind",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         if (v == "sage")
           c.model.graph_kind = GraphKind::sage;
         else if (v == "gcn")
           c.model.graph_kind = GraphKind::gcn;
         else
           throw ConfigError("config: key '" + k +
                             "' must be sage or gcn, got '" + v + "'");
       }},
      {"model.intra_modality_edges",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.model.intra_modality_edges = parse_bool(k, v);
       }},
      {"model.single_node_type",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.model.single_node_type = parse_bool(k, v);
       }},
      {"model.use_text",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.model.use_text = parse_bool(k, v);
       }},
      {"model.instance_norm",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.model.instance_norm = parse_bool(k, v);
       }},
      {"train.lr",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.train.learning_rate = parse_double(k, v);
       }},
      {"train.batch_size",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.train.batch_size = parse_size(k, v);
       }},
      {"train.max_epochs",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.train.max_epochs = parse_size(k, v);
       }},
      {"train.patience",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.train.patience = parse_size(k, v);
       }},
      {"train.beta1",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.train.beta1 = parse_double(k, v);
       }},
      {"train.beta2",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.train.beta2 = parse_double(k, v);
       }},
      {"train.eps",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.train.eps = parse_double(k, v);
       }},
      {"train.seed",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.train.seed = parse_u64(k, v);
       }},
      {"train.few_shot",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.train.few_shot_fraction = parse_double(k, v);
       }},
      {"text.mode",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         if (v != "stub" && v != "import")
           throw ConfigError("config: key '" + k +
                             "' must be stub or import, got '" + v + "'");
         c.text_mode = v;
       }},
      {"text.import_path",
       [](ExperimentConfig& c, const std::string&, const std::string& v) {
         c.text_import_path = v;
       }},
      {"text.static_prompt",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.static_prompt = parse_bool(k, v);
       }},
      {"text.seed",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.text_seed = parse_u64(k, v);
       }},
      {"text.descriptions_dir",
       [](ExperimentConfig& c, const std::string&, const std::string& v) {
         c.descriptions_dir = v;
       }},
      {"output.dir",
       [](ExperimentConfig& c, const std::string&, const std::string& v) {
         c.output_dir = v;
       }},
      {"metrics.raw_space",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.raw_space_metrics = parse_bool(k, v);
       }},
  };
  return table;
}

void apply_line(ExperimentConfig& cfg, const std::string& line,
                std::size_t line_no, const std::string& origin) {
  const std::string stripped = trim(line);
  if (stripped.empty() || stripped[0] == '#') return;
  const auto eq = stripped.find('=');
  if (eq == std::string::npos)
    throw ConfigError("config: " + origin + " line " +
                      std::to_string(line_no) + " is not 'key = value'");
  const std::string key = trim(stripped.substr(0, eq));
  const std::string value = trim(stripped.substr(eq + 1));
  const auto it = setters().find(key);
  if (it == setters().end())
    throw ConfigError("config: unknown key '" + key + "' (" + origin +
                      " line " + std::to_string(line_no) + ")");
  it->second(cfg, key, value);
}

void apply_text(ExperimentConfig& cfg, const std::string& text,
                const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) apply_line(cfg, line, ++line_no, origin);
}

}  // namespace

void ExperimentConfig::validate_static() const {
  if (dataset_path.empty())
    throw ConfigError("config: dataset.path is required");
  if (text_mode == "import" && text_import_path.empty())
    throw ConfigError("config: text.mode=import needs text.import_path");
  train.validate();
}

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg;
  apply_text(cfg, text, "<text>");
  return cfg;
}

ExperimentConfig parse_config_files(const std::vector<std::string>& paths) {
  if (paths.empty()) throw ConfigError("config: no config file given");
  ExperimentConfig cfg;
  for (const auto& path : paths) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    apply_text(cfg, buf.str(), path);
  }
  return cfg;
}

std::string serialize_config(const ExperimentConfig& cfg,
                             bool include_output_dir) {
  std::ostringstream out;
  out << "dataset.path = " << cfg.dataset_path << "\n";
  out << "dataset.key = " << cfg.dataset_key << "\n";
  out << "dataset.has_date_column = "
      << (cfg.has_date_column ? "true" : "false") << "\n";
  out << "split.train = " << fmt_double(cfg.split.train_fraction) << "\n";
  out << "split.val = " << fmt_double(cfg.split.val_fraction) << "\n";
  out << "split.test = " << fmt_double(cfg.split.test_fraction) << "\n";
  out << "model.t_in = " << cfg.model.t_in << "\n";
  out << "model.horizon = " << cfg.model.horizon << "\n";
  out << "model.patch_len = " << cfg.model.patch_len << "\n";
  out << "model.stride = " << cfg.model.stride << "\n";
  out << "model.d_model = " << cfg.model.d_model << "\n";
  out << "model.heads = " << cfg.model.heads << "\n";
  out << "model.alpha = " << fmt_double(cfg.model.alpha) << "\n";
  auto flag = [&](const char* key, bool v) {
    out << key << " = " << (v ? "true" : "false") << "\n";
  };
  flag("model.token_level", cfg.model.token_level);
  flag("model.feature_level", cfg.model.feature_level);
  flag("model.decision_level", cfg.model.decision_level);
  flag("model.branch1", cfg.model.branch1);
  flag("model.branch2", cfg.model.branch2);
  out << "model.graph_kind = "
      << (cfg.model.graph_kind == GraphKind::sage ? "sage" : "gcn") << "\n";
  flag("model.intra_modality_edges", cfg.model.intra_modality_edges);
  flag("model.single_node_type", cfg.model.single_node_type);
  flag("model.use_text", cfg.model.use_text);
  flag("model.instance_norm", cfg.model.instance_norm);
  out << "train.lr = " << fmt_double(cfg.train.learning_rate) << "\n";
  out << "train.batch_size = " << cfg.train.batch_size << "\n";
  out << "train.max_epochs = " << cfg.train.max_epochs << "\n";
  out << "train.patience = " << cfg.train.patience << "\n";
  out << "train.beta1 = " << fmt_double(cfg.train.beta1) << "\n";
  out << "train.beta2 = " << fmt_double(cfg.train.beta2) << "\n";
  out << "train.eps = " << fmt_double(cfg.train.eps) << "\n";
  out << "train.seed = " << cfg.train.seed << "\n";
  out << "train.few_shot = " << fmt_double(cfg.train.few_shot_fraction)
      << "\n";
  out << "text.mode = " << cfg.text_mode << "\n";
  if (!cfg.text_import_path.empty())
    out << "text.import_path = " << cfg.text_import_path << "\n";
  flag("text.static_prompt", cfg.static_prompt);
  out << "text.seed = " << cfg.text_seed << "\n";
  out << "text.descriptions_dir = " << cfg.descriptions_dir << "\n";
  if (include_output_dir) out << "output.dir = " << cfg.output_dir << "\n";
  out << "metrics.raw_space = " << (cfg.raw_space_metrics ? "true" : "false")
      << "\n";
  return out.str();
}

}  // namespace ficots
