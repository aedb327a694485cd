#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "iotzsl/experiment.hpp"
#include "iotzsl/llm_client.hpp"

namespace fs = std::filesystem;
using namespace iotzsl;

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  int fold = -1;  // -1: all folds
};

void add_common(CLI::App* cmd, CommonArgs& args, bool with_fold = true) {
  cmd->add_option("-c,--config", args.config_path, "Run configuration (JSON)");
  cmd->add_option("-s,--set", args.overrides,
                  "Override a config value by dotted path, e.g. train.epochs=50");
  if (with_fold) cmd->add_option("-f,--fold", args.fold, "Restrict to one fold index");
}

RunConfig load_config(const CommonArgs& args) {
  return RunConfig::load(args.config_path, args.overrides);
}

std::vector<const FoldSplit*> selected_folds(const PreparedData& data, int fold) {
  std::vector<const FoldSplit*> out;
  for (const auto& f : data.folds)
    if (fold < 0 || f.fold_index == fold) out.push_back(&f);
  IOTZSL_REQUIRE(!out.empty(), ErrKind::validation, "no such fold: " + std::to_string(fold));
  return out;
}

ModelState load_fold_model(const RunConfig& cfg, int fold_index) {
  const std::string path =
      (fs::path(fold_dir(cfg, fold_index)) / "model.ckpt").string();
  return ModelState::load(path, cfg);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generalized zero-shot IoT sensing: training, augmentation, open-set "
               "detection and evaluation"};
  app.require_subcommand(1);

  CommonArgs prepare_args, train_args, augment_args, calibrate_args, eval_args, ablate_args,
      baseline_args, prompts_args, dump_args;
  bool prepare_force = false;
  bool prompts_refresh = false;
  std::string dump_out;

  auto* cmd_prepare = app.add_subcommand("prepare", "Ingest raw data, window it, build folds");
  add_common(cmd_prepare, prepare_args, false);
  cmd_prepare->add_flag("--force", prepare_force, "Rebuild the window cache");

  auto* cmd_train = app.add_subcommand("train", "Contrastive training per fold");
  add_common(cmd_train, train_args);

  auto* cmd_augment =
      app.add_subcommand("augment", "Train the conditional generator, synthesize, fine-tune");
  add_common(cmd_augment, augment_args);

  auto* cmd_calibrate = app.add_subcommand("calibrate", "Build + calibrate the open-set detector");
  add_common(cmd_calibrate, calibrate_args);

  auto* cmd_eval = app.add_subcommand("eval", "Full pipeline evaluation over folds");
  add_common(cmd_eval, eval_args);

  auto* cmd_ablate = app.add_subcommand("ablate", "Component ablation matrix");
  add_common(cmd_ablate, ablate_args, false);

  auto* cmd_baseline = app.add_subcommand("baseline", "Detection baselines (MSP, KNN, MCM)");
  add_common(cmd_baseline, baseline_args, false);

  auto* cmd_prompts = app.add_subcommand("prompts", "Generate or refresh hard prompts");
  add_common(cmd_prompts, prompts_args, false);
  cmd_prompts->add_flag("--refresh", prompts_refresh, "Query the provider even if a file exists");

  auto* cmd_dump = app.add_subcommand("dump-embeddings", "Write test embeddings + prototypes");
  add_common(cmd_dump, dump_args);
  cmd_dump->add_option("-o,--out", dump_out, "Output CSV path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (cmd_prepare->parsed()) {
      RunConfig cfg = load_config(prepare_args);
      PreparedData data = run_prepare(cfg, prepare_force);
      std::printf("prepared %zu windows, %zu folds -> %s\n", data.store.windows.size(),
                  data.folds.size(), cfg.run_dir().c_str());
    } else if (cmd_train->parsed()) {
      RunConfig cfg = load_config(train_args);
      PreparedData data = load_prepared(cfg);
      for (const auto* fold : selected_folds(data, train_args.fold)) {
        run_train(cfg, data, *fold);
        std::printf("fold %d: trained -> %s/model.ckpt\n", fold->fold_index,
                    fold_dir(cfg, fold->fold_index).c_str());
      }
    } else if (cmd_augment->parsed()) {
      RunConfig cfg = load_config(augment_args);
      PreparedData data = load_prepared(cfg);
      for (const auto* fold : selected_folds(data, augment_args.fold)) {
        ModelState model = load_fold_model(cfg, fold->fold_index);
        auto aug = run_augment(cfg, data, *fold, model);
        std::printf("fold %d: synthesized %zu windows, fine-tuned\n", fold->fold_index,
                    aug.size());
      }
    } else if (cmd_calibrate->parsed()) {
      RunConfig cfg = load_config(calibrate_args);
      PreparedData data = load_prepared(cfg);
      for (const auto* fold : selected_folds(data, calibrate_args.fold)) {
        ModelState model = load_fold_model(cfg, fold->fold_index);
        ClusterStore store = run_calibrate(cfg, data, *fold, model);
        std::printf("fold %d: calibrated %zu clusters (retention %.2f)\n", fold->fold_index,
                    store.clusters.size(), store.retention_target);
      }
    } else if (cmd_eval->parsed()) {
      RunConfig cfg = load_config(eval_args);
      PreparedData data = load_prepared(cfg);
      std::vector<FoldReport> reports;
      for (const auto* fold : selected_folds(data, eval_args.fold)) {
        ModelState model = load_fold_model(cfg, fold->fold_index);
        const std::string det_path =
            (fs::path(fold_dir(cfg, fold->fold_index)) / "detector.bin").string();
        IOTZSL_REQUIRE(fs::exists(det_path), ErrKind::state,
                       "missing detector " + det_path + "; run `calibrate` first");
        ClusterStore detector = ClusterStore::load(det_path, model.fingerprint());
        reports.push_back(run_eval(cfg, data, *fold, model, detector, AblationFlags{}));
      }
      MetricsReport report = kfold_aggregate(reports);
      write_metrics_files(report, (fs::path(cfg.run_dir()) / "metrics.json").string(),
                          (fs::path(cfg.run_dir()) / "metrics.txt").string(),
                          data.store.spec.name);
      std::printf("F1 %.4f  ACC_S %.4f  ACC_U %.4f  ACC_H %.4f -> %s/metrics.json\n",
                  report.aggregate.at("detection_f1").mean,
                  report.aggregate.at("acc_seen").mean,
                  report.aggregate.at("acc_unseen").mean,
                  report.aggregate.at("acc_harmonic").mean, cfg.run_dir().c_str());
    } else if (cmd_ablate->parsed()) {
      RunConfig cfg = load_config(ablate_args);
      PreparedData data = load_prepared(cfg);
      auto rows = run_ablation_matrix(cfg, data);
      const char* names[4] = {"-PE", "-OS", "-DA", "full"};
      for (size_t i = 0; i < rows.size(); ++i)
        std::printf("%-5s ACC_S %.4f  ACC_U %.4f  ACC_H %.4f\n", names[i],
                    rows[i].aggregate.at("acc_seen").mean,
                    rows[i].aggregate.at("acc_unseen").mean,
                    rows[i].aggregate.at("acc_harmonic").mean);
    } else if (cmd_baseline->parsed()) {
      RunConfig cfg = load_config(baseline_args);
      PreparedData data = load_prepared(cfg);
      BaselineReport report = run_baselines(cfg, data);
      for (const auto& [method, stat] : report.f1_aggregate)
        std::printf("%-6s weighted F1 %.4f (var %.6f)\n", method.c_str(), stat.mean,
                    stat.variance);
    } else if (cmd_prompts->parsed()) {
      RunConfig cfg = load_config(prompts_args);
      const DatasetSpec spec = cfg.dataset_spec();
      LlmConfig llm_cfg = cfg.llm_config();
      LlmClient client(llm_cfg);
      HardPromptSet set = generate_hard_prompts(
          spec.class_list, llm_cfg.configured() ? &client : nullptr, cfg.prompt_file(),
          prompts_refresh);
      std::printf("%zu hard prompts (%s) -> %s\n", set.descriptions.size(),
                  set.provenance == HardPromptSet::Provenance::llm_generated ? "generated"
                                                                             : "from file",
                  cfg.prompt_file().c_str());
    } else if (cmd_dump->parsed()) {
      RunConfig cfg = load_config(dump_args);
      PreparedData data = load_prepared(cfg);
      for (const auto* fold : selected_folds(data, dump_args.fold)) {
        ModelState model = load_fold_model(cfg, fold->fold_index);
        const std::string out =
            dump_out.empty()
                ? (fs::path(fold_dir(cfg, fold->fold_index)) / "embeddings.csv").string()
                : dump_out;
        run_dump_embeddings(cfg, data, *fold, model, out);
        std::printf("fold %d: embeddings -> %s\n", fold->fold_index, out.c_str());
      }
    }
  } catch (const Error& e) {
    nlohmann::json err;
    err["error"] = e.what();
    err["kind"] = err_kind_name(e.kind());
    std::fprintf(stderr, "%s\n", err.dump().c_str());
    return 1;
  } catch (const std::exception& e) {
    nlohmann::json err;
    err["error"] = e.what();
    err["kind"] = "internal";
    std::fprintf(stderr, "%s\n", err.dump().c_str());
    return 2;
  }
  return 0;
}
