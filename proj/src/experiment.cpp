#include "melstorm/experiment.hpp"

#include <algorithm>
#include <fstream>
#include <ostream>

#include "melstorm/corpus.hpp"
#include "melstorm/error.hpp"
#include "melstorm/report.hpp"
#include "melstorm/weights.hpp"

namespace melstorm {

namespace {

void write_json(const nlohmann::json& j, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::vector<AudioClip> pick(const std::vector<AudioClip>& clips, std::span<const std::size_t> indices) {
  std::vector<AudioClip> out;
  out.reserve(indices.size());
  for (const auto i : indices) out.push_back(clips[i]);
  return out;
}

}  // namespace

std::vector<AudioClip> load_clips(const DataConfig& data) {
  if (data.source == DataSource::synth) return synth_corpus(data.n_per_class, data.seed);
  auto clips = load_corpus(data.path);
  if (clips.empty()) throw Error("no clips found under " + data.path);
  return clips;
}

Dataset build_dataset(const std::vector<AudioClip>& clips, std::span<const std::size_t> indices,
                      const FeatureExtractor& extractor, bool augment, double max_shift_fraction,
                      std::uint64_t augment_seed, std::size_t jobs) {
  std::vector<FeatureMap> maps(indices.size());
  parallel_for(indices.size(), jobs, [&](std::size_t k) {
    const AudioClip& clip = clips[indices[k]];
    if (augment) {
      Rng rng(derive_seed(augment_seed, 0, indices[k]));
      maps[k] = extractor(shift_augment(clip, max_shift_fraction, extractor.config().clip_samples, rng));
    } else {
      maps[k] = extractor(clip);
    }
  });
  Dataset out;
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const int label = clips[indices[k]].label;
    if (label < 0) throw Error("clip '" + clips[indices[k]].id + "' has a negative label");
    out.add(std::move(maps[k]), static_cast<std::size_t>(label));
  }
  return out;
}

PreparedData prepare_data(const ExperimentConfig& config, std::vector<AudioClip> clips,
                          const std::optional<PoisonConfig>& poison) {
  PreparedData d;
  std::vector<int> labels;
  labels.reserve(clips.size());
  for (const auto& c : clips) labels.push_back(c.label);
  d.split = split_dataset(labels, config.data.split);

  if (poison) {
    // Stream ids keep the noise of each split independent.
    const std::pair<const std::vector<std::size_t>*, bool> parts[] = {
        {&d.split.train, poison->targets_train()},
        {&d.split.val, poison->targets_train()},
        {&d.split.test, poison->targets_test()}};
    std::uint64_t stream = 0;
    for (const auto& [indices, targeted] : parts) {
      if (targeted) {
        auto set = poison_dataset(pick(clips, *indices), *poison, stream);
        for (std::size_t k = 0; k < indices->size(); ++k) clips[(*indices)[k]] = std::move(set.clips[k]);
        for (auto r : set.records) {
          r.index = (*indices)[r.index];
          d.poison_records.push_back(r);
        }
      }
      ++stream;
    }
  }

  const FeatureExtractor extractor(config.features);
  const double shift = config.features.max_shift_fraction;
  d.train = build_dataset(clips, d.split.train, extractor, config.augment, shift, config.augment_seed, config.jobs);
  d.val = build_dataset(clips, d.split.val, extractor, false, shift, config.augment_seed, config.jobs);
  d.test = build_dataset(clips, d.split.test, extractor, false, shift, config.augment_seed, config.jobs);
  d.clips = std::move(clips);
  return d;
}

TrainedModel train_model(const ExperimentConfig& config, const PreparedData& data, std::ostream* progress) {
  TrainedModel t{Model::build(config.model, config.model_seed), {}, 0.0, 0.0};
  t.log = train(t.model, data.train, data.val, config.train, [&](const EpochRecord& r) {
    if (progress) *progress << "  epoch " << r.epoch << "  loss " << r.train_loss << "  val_acc " << r.val_acc << '\n';
  });
  t.val_accuracy = evaluate(t.model, data.val);
  t.test_accuracy = evaluate(t.model, data.test);
  return t;
}

std::string report_name(const std::vector<SweepSpec>& attacks, std::size_t i) {
  const std::string kind = to_string(attacks.at(i).attack.kind);
  std::size_t same = 0;
  for (const auto& a : attacks) same += to_string(a.attack.kind) == kind;
  return same > 1 ? kind + "_" + std::to_string(i) + ".csv" : kind + ".csv";
}

ExperimentResult run_experiment(const ExperimentConfig& config, std::ostream* progress) {
  const std::filesystem::path out = config.output_dir;
  std::filesystem::create_directories(out / "reports");
  write_json(to_json(config), out / "resolved_config.json");

  auto log = [&](const std::string& line) {
    if (progress) *progress << line << '\n' << std::flush;
  };

  ExperimentResult result;
  log("loading data");
  const auto clips = load_clips(config.data);
  const PreparedData clean = prepare_data(config, clips);
  log("train " + std::to_string(clean.train.size()) + " / val " + std::to_string(clean.val.size()) + " / test " +
      std::to_string(clean.test.size()));

  log("training");
  result.clean = train_model(config, clean, progress);
  save_weights(result.clean.model, out / "model.amnw");
  write_train_log(result.clean.log, out / "train_log.jsonl");
  log("clean test accuracy " + std::to_string(result.clean.test_accuracy));

  const std::string fingerprint = config.model.fingerprint();
  for (std::size_t i = 0; i < config.attacks.size(); ++i) {
    const auto name = report_name(config.attacks, i);
    log("sweep " + name);
    result.reports.push_back(run_sweep(result.clean.model, clean.test, config.attacks[i], config.jobs, fingerprint));
    write_report(result.reports.back(), out / "reports" / name);
  }

  std::ofstream acc(out / "accuracy.csv");
  acc << "model,val_accuracy,test_accuracy\n" << std::fixed;
  acc.precision(6);
  acc << "clean," << result.clean.val_accuracy << ',' << result.clean.test_accuracy << '\n';

  if (config.poison) {
    log("poisoning (" + to_string(config.poison->apply_to) + ")");
    const PreparedData poisoned = prepare_data(config, clips, config.poison);
    if (config.export_poisoned) {
      PoisonedSet set{poisoned.clips, poisoned.poison_records};
      std::sort(set.records.begin(), set.records.end(),
                [](const PoisonRecord& a, const PoisonRecord& b) { return a.index < b.index; });
      export_poisoned(set, *config.poison, out);
    }
    result.poisoned = train_model(config, poisoned, progress);
    save_weights(result.poisoned->model, out / "poisoned_model.amnw");
    write_train_log(result.poisoned->log, out / "poisoned_train_log.jsonl");
    acc << "poisoned," << result.poisoned->val_accuracy << ',' << result.poisoned->test_accuracy << '\n';
    log("poisoned test accuracy " + std::to_string(result.poisoned->test_accuracy));
  }
  acc.close();

  nlohmann::json seeds{{"data", config.data.seed},
                       {"split", config.data.split.seed},
                       {"augment", config.augment_seed},
                       {"model", config.model_seed},
                       {"train", config.train.seed}};
  if (config.poison) seeds["poison"] = config.poison->seed;
  nlohmann::json sweeps = nlohmann::json::array();
  for (std::size_t i = 0; i < config.attacks.size(); ++i) {
    sweeps.push_back({{"report", "reports/" + report_name(config.attacks, i)}, {"seed", config.attacks[i].seed}});
  }
  write_json({{"config_hash", config_hash(config)},
              {"seeds", seeds},
              {"sweeps", sweeps},
              {"model_fingerprint", fingerprint},
              {"clean_test_accuracy", result.clean.test_accuracy},
              {"poisoned_test_accuracy",
               result.poisoned ? nlohmann::json(result.poisoned->test_accuracy) : nlohmann::json(nullptr)}},
             out / "manifest.json");
  return result;
}

}  // namespace melstorm
