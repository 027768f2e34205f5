#include "melstorm/cli.hpp"

#include <cstdlib>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "melstorm/corpus.hpp"
#include "melstorm/error.hpp"
#include "melstorm/experiment.hpp"
#include "melstorm/report.hpp"
#include "melstorm/weights.hpp"

namespace melstorm {

namespace {

struct CommonOptions {
  std::string config;
  std::vector<std::string> overrides;
  std::string data;
  std::string output_dir;
  std::size_t jobs = 0;
  bool jobs_set = false;
};

void add_config_options(CLI::App& cmd, CommonOptions& o) {
  cmd.add_option("--config", o.config, "Experiment configuration (JSON)")->check(CLI::ExistingFile);
  cmd.add_option("--set", o.overrides, "Override a config value, e.g. train.epochs=1")->take_all();
  cmd.add_option("--output-dir", o.output_dir, "Directory for every file this command writes");
  cmd.add_option_function<std::size_t>(
      "--jobs", [&o](std::size_t n) { o.jobs = n, o.jobs_set = true; }, "Worker threads (default: all processors)");
}

void add_data_option(CLI::App& cmd, CommonOptions& o) {
  cmd.add_option("--data", o.data, "'synth' or a corpus directory (default: $MELSTORM_DATA_DIR, then the config)");
}

// Config with command-line settings folded in.
ExperimentConfig resolve(const CommonOptions& o) {
  ExperimentConfig c = load_config(o.config, o.overrides);
  std::string data = o.data;
  if (data.empty()) {
    if (const char* env = std::getenv("MELSTORM_DATA_DIR"); env && *env) data = env;
  }
  if (data == "synth") {
    c.data.source = DataSource::synth;
  } else if (!data.empty()) {
    c.data.source = DataSource::directory;
    c.data.path = data;
  }
  if (!o.output_dir.empty()) c.output_dir = o.output_dir;
  if (o.jobs_set) c.jobs = o.jobs;
  return c;
}

std::filesystem::path prepare_output(const ExperimentConfig& c) {
  const std::filesystem::path out = c.output_dir;
  std::filesystem::create_directories(out);
  std::ofstream(out / "resolved_config.json") << to_json(c).dump(2) << '\n';
  return out;
}

// Clean test split only; attacks and evaluation never need training features.
Dataset test_split(const ExperimentConfig& c) {
  const auto clips = load_clips(c.data);
  std::vector<int> labels;
  for (const auto& clip : clips) labels.push_back(clip.label);
  const auto split = split_dataset(labels, c.data.split);
  const FeatureExtractor extractor(c.features);
  return build_dataset(clips, split.test, extractor, false, 0.0, 0, c.jobs);
}

struct AttackOptions {
  std::string kind = "fgsm";
  double eps = 0.2;
  double eps_iter = 0.1;
  std::size_t nb_iter = 5;
  double cw_lr = 0.01;
  std::size_t cw_iterations = 200;
  double cw_c = 1.0;
  double cw_kappa = 0.0;
  std::size_t sample_cap = 200;
  std::uint64_t seed = 11;
};

void add_attack_options(CLI::App& cmd, AttackOptions& a, bool single_eps) {
  cmd.add_option("--attack", a.kind, "fgsm, pgd or cw")->check(CLI::IsMember({"fgsm", "pgd", "cw"}));
  if (single_eps) cmd.add_option("--eps", a.eps, "L-inf budget in feature units");
  cmd.add_option("--eps-iter", a.eps_iter, "PGD step size");
  cmd.add_option("--nb-iter", a.nb_iter, "PGD iterations");
  cmd.add_option("--cw-lr", a.cw_lr, "CW Adam learning rate");
  cmd.add_option("--cw-iterations", a.cw_iterations, "CW iterations");
  cmd.add_option("--cw-c", a.cw_c, "CW margin weight");
  cmd.add_option("--cw-kappa", a.cw_kappa, "CW confidence margin");
  cmd.add_option("--sample-cap", a.sample_cap, "Maximum number of test samples");
  cmd.add_option("--seed", a.seed, "Sample selection seed");
}

SweepSpec make_spec(const AttackOptions& a) {
  SweepSpec s;
  s.attack.kind = parse_attack_kind(a.kind);
  s.attack.eps_iter = a.eps_iter;
  s.attack.nb_iter = a.nb_iter;
  s.attack.cw_lr = a.cw_lr;
  s.attack.cw_max_iterations = a.cw_iterations;
  s.attack.cw_c = a.cw_c;
  s.attack.cw_kappa = a.cw_kappa;
  s.sample_cap = a.sample_cap;
  s.seed = a.seed;
  return s;
}

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> grid;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      grid.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw ConfigError("--grid: '" + item + "' is not a number");
    }
  }
  return grid;
}

}  // namespace

int run_cli(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Adversarial robustness workbench for a spoken-digit mel-spectrogram classifier", "melstorm"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  CommonOptions common;
  AttackOptions attack;
  std::string model_path;
  std::string grid_text;
  std::string report_path;
  std::string long_path;
  std::size_t n_per_class = 100;
  std::uint64_t seed = 1234;
  double amplitude = 0.05;
  double fraction = 1.0;

  auto* synth = app.add_subcommand("synth-data", "Write the synthetic corpus as WAV files plus manifest.tsv");
  synth->add_option("--n-per-class", n_per_class, "Clips per digit")->check(CLI::PositiveNumber);
  synth->add_option("--seed", seed, "Corpus seed");
  synth->add_option("--output-dir", common.output_dir, "Corpus root")->required();

  auto* train_cmd = app.add_subcommand("train", "Train the classifier; writes model.amnw and train_log.jsonl");
  add_config_options(*train_cmd, common);
  add_data_option(*train_cmd, common);

  auto* eval_cmd = app.add_subcommand("eval", "Accuracy of a saved model on the test split");
  add_config_options(*eval_cmd, common);
  add_data_option(*eval_cmd, common);
  eval_cmd->add_option("--model", model_path, "Weights file")->required()->check(CLI::ExistingFile);

  auto* attack_cmd = app.add_subcommand("attack", "One attack at one budget; writes attack_<kind>.csv");
  add_config_options(*attack_cmd, common);
  add_data_option(*attack_cmd, common);
  attack_cmd->add_option("--model", model_path, "Weights file")->required()->check(CLI::ExistingFile);
  add_attack_options(*attack_cmd, attack, true);

  auto* sweep_cmd = app.add_subcommand("sweep", "Epsilon sweep; writes <kind>.csv and <kind>.json");
  add_config_options(*sweep_cmd, common);
  add_data_option(*sweep_cmd, common);
  sweep_cmd->add_option("--model", model_path, "Weights file")->required()->check(CLI::ExistingFile);
  add_attack_options(*sweep_cmd, attack, false);
  sweep_cmd->add_option("--grid", grid_text, "Comma-separated eps values (default 0.05..1.00 step 0.05)");

  auto* poison_cmd = app.add_subcommand("poison", "Export a uniformly poisoned copy of a corpus");
  add_config_options(*poison_cmd, common);
  add_data_option(*poison_cmd, common);
  poison_cmd->add_option("--amplitude", amplitude, "Noise amplitude in waveform units");
  poison_cmd->add_option("--fraction", fraction, "Fraction of clips poisoned");
  poison_cmd->add_option("--seed", seed, "Poison seed");

  auto* run_cmd = app.add_subcommand("run", "Full experiment from a configuration file");
  add_config_options(*run_cmd, common);
  add_data_option(*run_cmd, common);

  auto* show_cmd = app.add_subcommand("show-report", "Print a report CSV as a table");
  show_cmd->add_option("report", report_path, "Report CSV")->required()->check(CLI::ExistingFile);
  show_cmd->add_option("--long", long_path, "Also write attack,eps,metric,value rows to this file");

  std::vector<std::string> args(argv.rbegin(), argv.rend());
  if (!args.empty()) args.pop_back();
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, err, err);
    return kExitUsage;
  }

  try {
    if (*synth) {
      write_corpus(synth_corpus(n_per_class, seed), common.output_dir);
      out << "wrote " << 10 * n_per_class << " clips to " << common.output_dir << '\n';
    } else if (*train_cmd) {
      const auto c = resolve(common);
      const auto dir = prepare_output(c);
      const auto data = prepare_data(c, load_clips(c.data));
      const auto t = train_model(c, data, &out);
      save_weights(t.model, dir / "model.amnw");
      write_train_log(t.log, dir / "train_log.jsonl");
      out << "val_accuracy " << t.val_accuracy << "\ntest_accuracy " << t.test_accuracy << '\n';
    } else if (*eval_cmd) {
      const auto c = resolve(common);
      const Model model = load_weights(model_path, c.model);
      out << "test_accuracy " << evaluate(model, test_split(c)) << '\n';
    } else if (*attack_cmd || *sweep_cmd) {
      const auto c = resolve(common);
      const Model model = load_weights(model_path, c.model);
      SweepSpec spec = make_spec(attack);
      std::string name = attack.kind + ".csv";
      if (*attack_cmd) {
        spec.eps_grid = {attack.eps};
        name = "attack_" + name;
      } else if (!grid_text.empty()) {
        spec.eps_grid = parse_grid(grid_text);
      }
      const auto dir = prepare_output(c);
      const auto report = run_sweep(model, test_split(c), spec, c.jobs, c.model.fingerprint());
      write_report(report, dir / name);
      print_report_table(read_report_csv(dir / name), out);
    } else if (*poison_cmd) {
      auto c = resolve(common);
      PoisonConfig pc;
      pc.amplitude = amplitude;
      pc.fraction = fraction;
      pc.seed = seed;
      const auto dir = prepare_output(c);
      const auto set = poison_dataset(load_clips(c.data), pc);
      export_poisoned(set, pc, dir);
      out << "poisoned " << set.records.size() << " of " << set.clips.size() << " clips into " << (dir / "poisoned").string()
          << '\n';
    } else if (*run_cmd) {
      run_experiment(resolve(common), &out);
    } else if (*show_cmd) {
      const auto lines = read_report_csv(report_path);
      print_report_table(lines, out);
      if (!long_path.empty()) write_long_format(lines, long_path);
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace melstorm
