// swarm-alloc: train, evaluate and replay task-allocation policies for
// a swarm of robots chasing moving, capacity-limited tasks.
//
// Subcommands:
//   train          centralized training, writes a checkpoint + curve CSV
//   eval           batch evaluation of policies over a scenario manifest
//   replay         re-run one scenario and dump a JSON-lines trace
//   gen-scenarios  write a pinned scenario manifest
//   plot-data      split a training curve CSV into per-series files

#include <chrono>
#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "swarm/harness.hpp"

namespace {

namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitOther = 1;
constexpr int kExitUsage = 2;
constexpr int kExitMissingFile = 3;
constexpr int kExitConfig = 4;
constexpr int kExitData = 5;
constexpr int kExitNumeric = 6;

void require_file(const std::string& path, const char* what) {
  if (!fs::exists(path))
    throw swarm::DataError(std::string(what) + " not found: " + path);
}

bool is_missing_file_error(const std::string& message) {
  return message.find("not found:") != std::string::npos;
}

swarm::Config load_config_or_default(const std::string& path) {
  if (path.empty()) return swarm::Config{};
  require_file(path, "config file");
  return swarm::load_config(path);
}

std::vector<swarm::PolicyKind> parse_policies(const std::string& list) {
  std::vector<swarm::PolicyKind> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(swarm::parse_policy(item));
  if (out.empty()) throw swarm::ConfigError("empty policy list");
  return out;
}

struct TrainArgs {
  std::string config_path;
  std::string out_dir = ".";
  std::string checkpoint;
  std::int64_t seed = -1;
  int episodes = -1;
};

int cmd_train(const TrainArgs& args) {
  swarm::Config cfg = load_config_or_default(args.config_path);
  if (args.episodes >= 0) cfg.train.episodes = args.episodes;
  const std::uint64_t seed =
      args.seed >= 0 ? static_cast<std::uint64_t>(args.seed) : cfg.world.seed;
  fs::create_directories(args.out_dir);
  const std::string checkpoint =
      args.checkpoint.empty() ? args.out_dir + "/checkpoint.ckpt" : args.checkpoint;

  const auto started = std::chrono::steady_clock::now();
  const swarm::TrainResult result =
      swarm::train(cfg, seed, checkpoint, [&](const swarm::TrainLogRow& row) {
        if (row.episode % 100 == 0) {
          std::cerr << "episode " << row.episode << " natu "
                    << row.normalized_utility << " eps " << row.epsilon << "\n";
        }
      });
  const auto elapsed = std::chrono::duration_cast<std::chrono::seconds>(
      std::chrono::steady_clock::now() - started);
  swarm::write_training_csv(args.out_dir + "/training_curve.csv", result.log);
  std::cerr << "trained " << cfg.train.episodes << " episodes in "
            << elapsed.count() << "s, checkpoint: " << checkpoint << "\n";
  return kExitOk;
}

struct EvalArgs {
  std::string config_path;
  std::string scenarios_path;
  std::string checkpoint;
  std::string policies = "greedy,lia_maddpg";
  std::string out_dir = ".";
  double dist_scale = -1.0;  // <0: keep the configured value
};

int cmd_eval(const EvalArgs& args) {
  swarm::Config cfg = load_config_or_default(args.config_path);
  if (args.dist_scale >= 0) cfg.exec.dist_scale = args.dist_scale;
  require_file(args.scenarios_path, "scenario manifest");
  const swarm::ScenarioSet set = swarm::load_scenarios(args.scenarios_path);
  const std::vector<swarm::PolicyKind> policies = parse_policies(args.policies);

  swarm::NetworkParams actor;
  const swarm::NetworkParams* actor_ptr = nullptr;
  bool needs_checkpoint = false;
  for (swarm::PolicyKind k : policies)
    if (swarm::is_learned(k)) needs_checkpoint = true;
  if (needs_checkpoint) {
    if (args.checkpoint.empty())
      throw swarm::ConfigError("selected policies need --checkpoint");
    require_file(args.checkpoint, "checkpoint");
    actor = swarm::load_params(args.checkpoint);
    actor_ptr = &actor;
  }

  const swarm::MetricsReport report =
      swarm::evaluate(set, policies, actor_ptr, cfg.exec);
  fs::create_directories(args.out_dir);
  swarm::write_metrics_csv(args.out_dir + "/metrics.csv", report);
  swarm::write_summary(args.out_dir + "/summary.txt", report, set);
  for (const auto& [name, ps] : report.summary)
    std::cout << name << " natu " << ps.natu_mean << " natc " << ps.natc_mean
              << " dr " << ps.dr << "\n";
  return kExitOk;
}

struct ReplayArgs {
  std::string config_path;
  std::string scenarios_path;
  std::string checkpoint;
  std::string policy = "greedy";
  std::string out_dir = ".";
  int index = 0;
  std::int64_t seed = -1;
  double dist_scale = -1.0;
};

int cmd_replay(const ReplayArgs& args) {
  swarm::Config cfg = load_config_or_default(args.config_path);
  if (args.dist_scale >= 0) cfg.exec.dist_scale = args.dist_scale;
  swarm::WorldConfig world_cfg = cfg.world;
  std::uint64_t seed = 0;
  if (!args.scenarios_path.empty()) {
    require_file(args.scenarios_path, "scenario manifest");
    const swarm::ScenarioSet set = swarm::load_scenarios(args.scenarios_path);
    if (args.index < 0 || args.index >= static_cast<int>(set.scenarios.size()))
      throw swarm::ConfigError("scenario index out of range");
    world_cfg = set.config;
    seed = set.scenarios[args.index].seed;
  } else if (args.seed >= 0) {
    seed = static_cast<std::uint64_t>(args.seed);
  } else {
    throw swarm::ConfigError("replay needs --scenarios or --seed");
  }

  const swarm::PolicyKind kind = swarm::parse_policy(args.policy);
  swarm::NetworkParams actor;
  const swarm::NetworkParams* actor_ptr = nullptr;
  if (swarm::is_learned(kind)) {
    if (args.checkpoint.empty())
      throw swarm::ConfigError("policy '" + args.policy + "' needs --checkpoint");
    require_file(args.checkpoint, "checkpoint");
    actor = swarm::load_params(args.checkpoint);
    actor_ptr = &actor;
  }

  fs::create_directories(args.out_dir);
  std::ofstream trace_out(args.out_dir + "/trace.jsonl");
  if (!trace_out) throw swarm::DataError("cannot write trace in " + args.out_dir);
  swarm::ExecOptions opts;
  opts.dist_scale = cfg.exec.dist_scale;
  const swarm::EpisodeResult episode =
      swarm::run_execution(swarm::init_world(world_cfg, seed), kind, actor_ptr,
                           opts, swarm::jsonl_trace_sink(trace_out));
  std::cout << "steps " << episode.steps << " total_utility "
            << episode.total_utility() << "\n";
  return kExitOk;
}

struct GenArgs {
  std::string config_path;
  std::string out_path = "scenarios.json";
  std::string scale = "small";
  int count = 100;
  std::int64_t seed = 7;
};

int cmd_gen_scenarios(const GenArgs& args) {
  const swarm::Config cfg = load_config_or_default(args.config_path);
  const swarm::ScenarioSet set = swarm::make_scenarios(
      cfg.world, args.count, static_cast<std::uint64_t>(args.seed), args.scale);
  swarm::save_scenarios(args.out_path, set);
  std::cout << "wrote " << set.scenarios.size() << " scenarios to "
            << args.out_path << "\n";
  return kExitOk;
}

struct PlotArgs {
  std::string curve_path;
  std::string out_dir = ".";
};

int cmd_plot_data(const PlotArgs& args) {
  require_file(args.curve_path, "training curve csv");
  std::filesystem::create_directories(args.out_dir);
  swarm::write_plot_series(args.curve_path, args.out_dir);
  std::cout << "wrote per-series files to " << args.out_dir << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"swarm task-allocation laboratory"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "run centralized training");
  train->add_option("--config", train_args.config_path, "configuration file");
  train->add_option("--seed", train_args.seed, "master seed (overrides config)");
  train->add_option("--episodes", train_args.episodes, "episode count (overrides config)");
  train->add_option("--checkpoint", train_args.checkpoint, "checkpoint output path");
  train->add_option("--out", train_args.out_dir, "output directory");

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "evaluate policies over scenarios");
  eval->add_option("--config", eval_args.config_path, "configuration file");
  eval->add_option("--scenarios", eval_args.scenarios_path, "scenario manifest")
      ->required();
  eval->add_option("--checkpoint", eval_args.checkpoint, "trained actor checkpoint");
  eval->add_option("--policies", eval_args.policies, "comma-separated policy list");
  eval->add_option("--dist-scale", eval_args.dist_scale,
                   "distance weight in greedy/fallback scores");
  eval->add_option("--out", eval_args.out_dir, "output directory");

  ReplayArgs replay_args;
  auto* replay = app.add_subcommand("replay", "trace one scenario");
  replay->add_option("--config", replay_args.config_path, "configuration file");
  replay->add_option("--scenarios", replay_args.scenarios_path, "scenario manifest");
  replay->add_option("--index", replay_args.index, "scenario index in the manifest");
  replay->add_option("--seed", replay_args.seed, "world seed (without a manifest)");
  replay->add_option("--policy", replay_args.policy, "policy to replay");
  replay->add_option("--checkpoint", replay_args.checkpoint, "trained actor checkpoint");
  replay->add_option("--dist-scale", replay_args.dist_scale,
                     "distance weight in greedy/fallback scores");
  replay->add_option("--out", replay_args.out_dir, "output directory");

  GenArgs gen_args;
  auto* gen = app.add_subcommand("gen-scenarios", "write a scenario manifest");
  gen->add_option("--config", gen_args.config_path, "configuration file");
  gen->add_option("--count", gen_args.count, "number of scenarios");
  gen->add_option("--seed", gen_args.seed, "manifest base seed");
  gen->add_option("--scale", gen_args.scale, "scale tag (small/medium/large)");
  gen->add_option("--out", gen_args.out_path, "manifest output path");

  PlotArgs plot_args;
  auto* plot = app.add_subcommand("plot-data", "split a curve CSV into series");
  plot->add_option("--curve", plot_args.curve_path, "training curve CSV")->required();
  plot->add_option("--out", plot_args.out_dir, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train) return cmd_train(train_args);
    if (*eval) return cmd_eval(eval_args);
    if (*replay) return cmd_replay(replay_args);
    if (*gen) return cmd_gen_scenarios(gen_args);
    if (*plot) return cmd_plot_data(plot_args);
    std::cerr << "no subcommand selected\n";
    return kExitUsage;
  } catch (const swarm::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const swarm::NumericalFault& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const swarm::DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return is_missing_file_error(e.what()) ? kExitMissingFile : kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitOther;
  }
}
