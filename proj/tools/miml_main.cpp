#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "miml/errors.hpp"
#include "miml/eval.hpp"
#include "miml/run_config.hpp"
#include "miml/training.hpp"

namespace fs = std::filesystem;
using namespace miml;

namespace {

// timestamps are confined to the log so primary outputs stay byte-stable
class RunLog {
 public:
  explicit RunLog(const fs::path& path) : out_(path, std::ios::app) {}
  void line(const std::string& msg) {
    if (!out_) return;
    const std::time_t now = std::time(nullptr);
    char stamp[32];
    std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%S", std::localtime(&now));
    out_ << stamp << " " << msg << "\n";
    out_.flush();
  }

 private:
  std::ofstream out_;
};

fs::path resolve_out_dir(const RunConfig& rc, const std::string& command) {
  std::string dir = rc.get("out_dir");
  if (dir.empty()) {
    const char* root = std::getenv("MIML_OUT_ROOT");
    dir = (root ? fs::path(root) / command : fs::path("miml_out") / command).string();
  }
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

Dataset load_required_dataset(const RunConfig& rc) {
  const std::string path = rc.get("dataset");
  if (path.empty()) throw ConfigError("no dataset configured (key 'dataset' or --dataset)");
  return load_dataset(path);
}

int cmd_gen(const RunConfig& rc) {
  const fs::path out = resolve_out_dir(rc, "gen");
  SyntheticData synth = generate_synthetic(rc.synth_config(), rc.get_u64("seed"));
  write_text(out / "config.resolved", rc.snapshot());
  save_dataset(synth.dataset, (out / "dataset.jsonl").string());
  save_latents(synth, (out / "latent.jsonl").string());
  RunLog log(out / "run.log");
  log.line("generated " + std::to_string(synth.dataset.bags.size()) + " bags");
  std::cout << (out / "dataset.jsonl").string() << "\n";
  return 0;
}

int cmd_train(const RunConfig& rc, const std::string& resume_path) {
  const fs::path out = resolve_out_dir(rc, "train");
  RunLog log(out / "run.log");
  Dataset ds = load_required_dataset(rc);
  log.line("loaded " + std::to_string(ds.bags.size()) + " training bags from " +
           rc.get("dataset"));
  write_text(out / "config.resolved", rc.snapshot());

  TrainConfig tc = rc.train_config();
  const auto started = std::chrono::steady_clock::now();
  Trainer trainer = [&]() {
    if (resume_path.empty()) return Trainer(ds, tc);
    TrainState state = load_checkpoint(resume_path);
    // the checkpoint's hyperparameters win; only the round budget extends
    state.config.outer_rounds = tc.outer_rounds;
    log.line("resuming from " + resume_path + " at round " +
             std::to_string(state.rounds_done));
    return Trainer(ds, std::move(state));
  }();
  trainer.run();
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

  write_history_csv(trainer.state().model.history, (out / "history.csv").string());
  save_checkpoint(trainer.state(), (out / "checkpoint.json").string());
  save_checkpoint(trainer.best_state(), (out / "checkpoint_best.json").string());
  log.line("trained " + std::to_string(trainer.state().model.history.size()) + " epochs in " +
           std::to_string(seconds) + "s");
  std::cout << (out / "checkpoint.json").string() << "\n";
  return 0;
}

int cmd_eval(const RunConfig& rc, const std::string& checkpoint_path, bool with_scores) {
  const fs::path out = resolve_out_dir(rc, "eval");
  TrainState state = load_checkpoint(checkpoint_path);
  Dataset ds = load_required_dataset(rc);
  MetricsReport report = evaluate(state.model, ds, rc.get_size("workers"));
  write_text(out / "config.resolved", rc.snapshot());
  write_metrics_json(report, (out / "metrics.json").string());
  if (with_scores) write_scores_csv(report, ds, (out / "scores.csv").string());
  RunLog log(out / "run.log");
  log.line("evaluated " + std::to_string(ds.bags.size()) + " bags");
  char buf[64];
  std::snprintf(buf, sizeof(buf), "mean_ap %.6f\n", report.mean_ap);
  std::cout << buf;
  return 0;
}

int cmd_predict(const RunConfig& rc, const std::string& checkpoint_path) {
  const fs::path out = resolve_out_dir(rc, "predict");
  TrainState state = load_checkpoint(checkpoint_path);
  Dataset ds = load_required_dataset(rc);
  MetricsReport report;
  report.num_bags = ds.bags.size();
  report.num_classes = ds.num_labels;
  report.scores = Matrix(ds.bags.size(), ds.num_labels);
  for (std::size_t i = 0; i < ds.bags.size(); ++i) {
    Vector s = predict(state.model, ds.bags[i]);
    std::copy(s.begin(), s.end(), report.scores.row(i));
  }
  write_text(out / "config.resolved", rc.snapshot());
  write_scores_csv(report, ds, (out / "scores.csv").string());
  std::cout << (out / "scores.csv").string() << "\n";
  return 0;
}

int cmd_gradcheck(const RunConfig& rc) {
  GradcheckReport report = gradcheck(rc.get_u64("seed"));
  const std::string text = format_report(report);
  std::cout << text;
  const std::string dir = rc.get("out_dir");
  if (!dir.empty()) {
    fs::create_directories(dir);
    write_text(fs::path(dir) / "gradcheck.txt", text);
  }
  return report.all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"miml: multi-instance multi-label learning with privileged bags"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::pair<std::string, std::string>> overrides;
  std::string resume_path, checkpoint_path;
  bool with_scores = false;

  auto configure = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "key = value configuration file");
    // every config key doubles as a --key flag; flags win over the file
    for (const char* key :
         {"dataset", "out_dir", "seed", "loss", "lambda", "lr", "momentum", "epochs_per_phase",
          "outer_rounds", "phase_tol", "lr_decay", "grad_clip", "dropout", "slack_mode", "warp",
          "width", "layer_pairs", "graph_k", "graph_exclude_self", "workers", "gen_labels",
          "gen_dim", "gen_bags", "gen_min_instances", "gen_max_instances", "gen_separation",
          "gen_noise", "gen_background", "gen_pi", "gen_pi_noise", "gen_pi_dim"}) {
      cmd->add_option_function<std::string>(
          "--" + std::string(key),
          [&overrides, key](const std::string& v) { overrides.emplace_back(key, v); });
    }
  };

  CLI::App* gen = app.add_subcommand("gen", "generate a synthetic dataset with latent sidecar");
  configure(gen);
  CLI::App* train = app.add_subcommand("train", "train the two-stream model");
  configure(train);
  train->add_option("--resume", resume_path, "checkpoint to continue from");
  CLI::App* eval_cmd = app.add_subcommand("eval", "compute AP / mAP for a checkpoint");
  configure(eval_cmd);
  eval_cmd->add_option("--checkpoint", checkpoint_path, "trained checkpoint")->required();
  eval_cmd->add_flag("--scores", with_scores, "also write per-bag scores.csv");
  CLI::App* predict_cmd = app.add_subcommand("predict", "write per-bag score table");
  configure(predict_cmd);
  predict_cmd->add_option("--checkpoint", checkpoint_path, "trained checkpoint")->required();
  CLI::App* gradcheck_cmd =
      app.add_subcommand("gradcheck", "verify analytic gradients against finite differences");
  configure(gradcheck_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    RunConfig rc;
    if (!config_path.empty()) rc.load_file(config_path);
    for (const auto& [key, value] : overrides) rc.set(key, value);

    if (gen->parsed()) return cmd_gen(rc);
    if (train->parsed()) return cmd_train(rc, resume_path);
    if (eval_cmd->parsed()) return cmd_eval(rc, checkpoint_path, with_scores);
    if (predict_cmd->parsed()) return cmd_predict(rc, checkpoint_path);
    if (gradcheck_cmd->parsed()) return cmd_gradcheck(rc);
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numerical abort: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
