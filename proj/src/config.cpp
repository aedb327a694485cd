#include "iotzsl/config.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "iotzsl/archive.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace iotzsl {

json RunConfig::defaults() {
  return json{
      {"run", {{"seed", 1234}, {"out_root", "runs"}, {"workers", 1}}},
      {"dataset",
       {{"name", "synthetic"},
        {"root", "data"},
        {"modality", "imu"},
        {"sample_rate", 25.0},
        {"window_seconds", 1.28},
        {"overlap_fraction", 0.5},
        {"channels", 6},
        {"class_list", json::array()},  // empty: built-in list for the dataset name
        {"n_unseen", 2},
        {"folds", 2},
        {"subject_wise", false},
        {"synthetic",
         {{"n_subjects", 4},
          {"series_per_subject", 2},
          {"series_seconds", 16.0},
          {"noise_std", 0.35}}}}},
      {"text",
       {{"backend", "toy"},
        {"weights_path", ""},
        {"width", 32},
        {"embed_dim", 32},
        {"depth", 2},
        {"heads", 2},
        {"context_limit", 77},
        {"vocab_size", 512},
        {"encoder_seed", 20240901},
        {"soft_prompt_len", 8},
        {"prompt_file", "prompts/synthetic.json"},
        {"llm",
         {{"host", ""},
          {"port", 80},
          {"path", "/v1/chat/completions"},
          {"model", "gpt-3.5-turbo"},
          {"api_key_env", "IOTZSL_LLM_API_KEY"},
          {"timeout_seconds", 60}}}}},
      {"iot",
       {{"architecture", "transformer"},
        {"patch_len", 8},
        {"width", 32},
        {"depth", 2},
        {"heads", 2},
        {"feature_dim", 32}}},
      {"train",
       {{"temperature", 0.2},
        {"batch_size", 64},
        {"learning_rate", 0.001},
        {"momentum", 0.9},
        {"epochs", 100},
        {"steps_per_epoch", 0}}},
      {"finetune",
       {{"temperature", 0.2},
        {"batch_size", 64},
        {"learning_rate", 0.0005},
        {"momentum", 0.9},
        {"epochs", 20},
        {"steps_per_epoch", 0}}},
      {"gan",
       {{"noise_dim", 16},
        {"gen_hidden", json::array({96, 96})},
        {"critic_hidden", json::array({96, 96})},
        {"penalty_coeff", 10.0},
        {"critic_steps", 5},
        {"n_aug_per_class", 0},
        {"lr", 0.001},
        {"momentum", 0.9},
        {"epochs", 60},
        {"batch_size", 64},
        {"cls_weight", 1.0}}},
      {"detector", {{"k_fraction", 0.08}, {"retention", 0.8}}},
      {"specialist", {{"epochs", 300}, {"learning_rate", 0.1}, {"momentum", 0.9}}},
      {"baselines",
       {{"knn", {{"noise_std", 0.1}, {"epochs", 30}}}, {"mcm", {{"temperature", 1.0}}}}},
  };
}

json deep_merge(json base, const json& over) {
  if (!base.is_object() || !over.is_object()) return over;
  for (auto it = over.begin(); it != over.end(); ++it) {
    if (base.contains(it.key()))
      base[it.key()] = deep_merge(base[it.key()], it.value());
    else
      base[it.key()] = it.value();
  }
  return base;
}

namespace {

void collect_unknown(const json& reference, const json& candidate, const std::string& prefix,
                     std::vector<std::string>& out) {
  if (!candidate.is_object()) return;
  for (auto it = candidate.begin(); it != candidate.end(); ++it) {
    const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!reference.is_object() || !reference.contains(it.key())) {
      out.push_back(path);
      continue;
    }
    collect_unknown(reference.at(it.key()), it.value(), path, out);
  }
}

}  // namespace

std::vector<std::string> unknown_keys(const json& reference, const json& candidate) {
  std::vector<std::string> out;
  collect_unknown(reference, candidate, "", out);
  return out;
}

void apply_dotted_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  IOTZSL_REQUIRE(eq != std::string::npos, ErrKind::config,
                 "override must be key.path=value: " + assignment);
  const std::string path = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);

  std::vector<std::string> parts;
  std::stringstream ss(path);
  std::string part;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  IOTZSL_REQUIRE(!parts.empty(), ErrKind::config, "empty override path");

  json* cur = &j;
  for (size_t i = 0; i + 1 < parts.size(); ++i) cur = &((*cur)[parts[i]]);
  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const json::exception&) {
    parsed = value;  // plain string
  }
  (*cur)[parts.back()] = parsed;
}

RunConfig RunConfig::from_json(json j) {
  const json def = defaults();
  const auto unknown = unknown_keys(def, j);
  if (!unknown.empty()) {
    std::string msg = "unknown config keys:";
    for (const auto& k : unknown) msg += " " + k;
    throw Error(ErrKind::config, msg);
  }
  RunConfig cfg;
  cfg.raw_ = deep_merge(def, j);
  return cfg;
}

RunConfig RunConfig::load(const std::string& path, const std::vector<std::string>& overrides) {
  json file_json = json::object();
  if (!path.empty()) {
    std::ifstream f(path);
    IOTZSL_REQUIRE(f.good(), ErrKind::io, "cannot open config: " + path);
    try {
      f >> file_json;
    } catch (const json::exception& e) {
      throw Error(ErrKind::config, "config is not valid JSON: " + path + " (" + e.what() + ")");
    }
  }
  for (const auto& o : overrides) apply_dotted_override(file_json, o);
  return from_json(std::move(file_json));
}

uint64_t RunConfig::seed() const { return raw_.at("run").at("seed").get<uint64_t>(); }
std::string RunConfig::out_root() const { return raw_.at("run").at("out_root").get<std::string>(); }
int RunConfig::workers() const { return raw_.at("run").at("workers").get<int>(); }

uint64_t RunConfig::config_hash() const {
  const std::string dump = raw_.dump();
  return fnv1a64(dump.data(), dump.size());
}

std::string RunConfig::run_dir() const {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(config_hash()));
  return (fs::path(out_root()) / (std::string(buf) + "_s" + std::to_string(seed()))).string();
}

DatasetSpec RunConfig::dataset_spec() const {
  const json& d = raw_.at("dataset");
  DatasetSpec spec;
  spec.name = d.at("name").get<std::string>();
  spec.root_path = d.at("root").get<std::string>();
  spec.modality = modality_from_name(d.at("modality").get<std::string>());
  spec.sample_rate = d.at("sample_rate").get<double>();
  spec.window_seconds = d.at("window_seconds").get<double>();
  spec.overlap_fraction = d.at("overlap_fraction").get<double>();
  spec.channels = d.at("channels").get<int>();
  spec.class_list = d.at("class_list").get<std::vector<std::string>>();
  if (spec.class_list.empty()) spec.class_list = default_class_list(spec.name);
  IOTZSL_REQUIRE(!spec.class_list.empty(), ErrKind::config,
                 "no class list configured and no built-in list for dataset '" + spec.name + "'");
  return spec;
}

SyntheticConfig RunConfig::synthetic_config() const {
  const json& s = raw_.at("dataset").at("synthetic");
  SyntheticConfig cfg;
  cfg.n_subjects = s.at("n_subjects").get<int>();
  cfg.series_per_subject = s.at("series_per_subject").get<int>();
  cfg.series_seconds = s.at("series_seconds").get<double>();
  cfg.noise_std = s.at("noise_std").get<double>();
  cfg.seed = seed();
  return cfg;
}

int RunConfig::n_unseen() const { return raw_.at("dataset").at("n_unseen").get<int>(); }
int RunConfig::n_folds() const { return raw_.at("dataset").at("folds").get<int>(); }
bool RunConfig::subject_wise() const { return raw_.at("dataset").at("subject_wise").get<bool>(); }

std::shared_ptr<TextEncoder> RunConfig::make_text_encoder() const {
  const json& t = raw_.at("text");
  const std::string backend = t.at("backend").get<std::string>();
  if (backend == "toy") {
    ToyTextEncoder::Config cfg;
    cfg.width = t.at("width").get<int>();
    cfg.embed_dim = t.at("embed_dim").get<int>();
    cfg.depth = t.at("depth").get<int>();
    cfg.heads = t.at("heads").get<int>();
    cfg.context_limit = t.at("context_limit").get<int>();
    cfg.vocab_size = t.at("vocab_size").get<int>();
    cfg.seed = t.at("encoder_seed").get<uint64_t>();
    return std::make_shared<ToyTextEncoder>(cfg);
  }
  if (backend == "file") {
    const std::string path = t.at("weights_path").get<std::string>();
    IOTZSL_REQUIRE(!path.empty(), ErrKind::config,
                   "text.backend=file requires text.weights_path");
    return std::make_shared<FileTextEncoder>(path);
  }
  throw Error(ErrKind::config, "unknown text backend: " + backend + " (use toy|file)");
}

std::string RunConfig::prompt_file() const {
  return raw_.at("text").at("prompt_file").get<std::string>();
}
int RunConfig::soft_prompt_len() const {
  return raw_.at("text").at("soft_prompt_len").get<int>();
}

LlmConfig RunConfig::llm_config() const {
  const json& l = raw_.at("text").at("llm");
  LlmConfig cfg;
  cfg.host = l.at("host").get<std::string>();
  cfg.port = l.at("port").get<int>();
  cfg.path = l.at("path").get<std::string>();
  cfg.model = l.at("model").get<std::string>();
  cfg.api_key_env = l.at("api_key_env").get<std::string>();
  cfg.timeout_seconds = l.at("timeout_seconds").get<int>();
  return cfg;
}

IotEncoderConfig RunConfig::iot_encoder_config() const {
  const json& i = raw_.at("iot");
  const DatasetSpec spec = dataset_spec();
  IotEncoderConfig cfg;
  cfg.architecture = iot_arch_from_name(i.at("architecture").get<std::string>());
  cfg.channels = spec.channels;
  cfg.timesteps = spec.window_len();
  cfg.patch_len = i.at("patch_len").get<int>();
  cfg.width = i.at("width").get<int>();
  cfg.depth = i.at("depth").get<int>();
  cfg.heads = i.at("heads").get<int>();
  cfg.feature_dim = i.at("feature_dim").get<int>();
  return cfg;
}

namespace {
TrainConfig train_config_from(const json& t, uint64_t seed) {
  TrainConfig cfg;
  cfg.temperature = t.at("temperature").get<double>();
  cfg.batch_size = t.at("batch_size").get<int>();
  cfg.learning_rate = t.at("learning_rate").get<double>();
  cfg.momentum = t.at("momentum").get<double>();
  cfg.epochs = t.at("epochs").get<int>();
  cfg.steps_per_epoch = t.at("steps_per_epoch").get<int>();
  cfg.seed = seed;
  return cfg;
}
}  // namespace

TrainConfig RunConfig::train_config() const { return train_config_from(raw_.at("train"), seed()); }
TrainConfig RunConfig::finetune_config() const {
  return train_config_from(raw_.at("finetune"), seed() ^ 0xf17eULL);
}

GanConfig RunConfig::gan_config() const {
  const json& g = raw_.at("gan");
  GanConfig cfg;
  cfg.noise_dim = g.at("noise_dim").get<int>();
  cfg.gen_hidden = g.at("gen_hidden").get<std::vector<int>>();
  cfg.critic_hidden = g.at("critic_hidden").get<std::vector<int>>();
  cfg.penalty_coeff = g.at("penalty_coeff").get<double>();
  cfg.critic_steps = g.at("critic_steps").get<int>();
  cfg.n_aug_per_class = g.at("n_aug_per_class").get<int>();
  cfg.lr = g.at("lr").get<double>();
  cfg.momentum = g.at("momentum").get<double>();
  cfg.epochs = g.at("epochs").get<int>();
  cfg.batch_size = g.at("batch_size").get<int>();
  cfg.cls_weight = g.at("cls_weight").get<double>();
  cfg.seed = seed() ^ 0x9a4ULL;
  return cfg;
}

double RunConfig::detector_k_fraction() const {
  return raw_.at("detector").at("k_fraction").get<double>();
}
double RunConfig::detector_retention() const {
  return raw_.at("detector").at("retention").get<double>();
}

int RunConfig::specialist_epochs() const {
  return raw_.at("specialist").at("epochs").get<int>();
}
double RunConfig::specialist_lr() const {
  return raw_.at("specialist").at("learning_rate").get<double>();
}

double RunConfig::knn_noise_std() const {
  return raw_.at("baselines").at("knn").at("noise_std").get<double>();
}
int RunConfig::knn_epochs() const { return raw_.at("baselines").at("knn").at("epochs").get<int>(); }
double RunConfig::mcm_temperature() const {
  return raw_.at("baselines").at("mcm").at("temperature").get<double>();
}

void RunConfig::write_snapshot() const {
  fs::create_directories(run_dir());
  std::ofstream f(fs::path(run_dir()) / "config.json", std::ios::trunc);
  IOTZSL_REQUIRE(f.good(), ErrKind::io, "cannot write config snapshot");
  f << raw_.dump(2) << '\n';
}

}  // namespace iotzsl
