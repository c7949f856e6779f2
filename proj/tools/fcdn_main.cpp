#include <filesystem>
#include <fstream>
#include <iostream>

#include <json.hpp>

#include "fcdn/dataset_io.hpp"
#include "fcdn/pipeline.hpp"

using namespace fcdn;

namespace {

struct CliArgs {
  std::string command;
  RunConfig config;
  std::string out;
  std::string data;   // dataset path (comma separated for loso)
  std::string model;  // checkpoint path
  std::string band;
  std::string channel;
  std::string mode;
  double threshold{0.9};
  bool quiet{false};
};

void print_usage() {
  std::cout
      << "fcdn - functional-connectivity-guided EEG decoding\n\n"
      << "Usage: fcdn <command> [options]\n\n"
      << "Commands:\n"
      << "  synth            generate a synthetic phase-coupled dataset\n"
      << "  connectivity     PLV channel weights and strong-edge exports for one band\n"
      << "  analyze          PSD and baseline-relative time-frequency CSVs for one channel\n"
      << "  train            split, augment, PLV-weight and train a model\n"
      << "  evaluate         score a trained model (--mode holdout|cv5|loso|pseudo-online)\n"
      << "  pseudo-online    alias for evaluate --mode pseudo-online\n"
      << "  export-features  per-stage activation dump for external t-SNE/plotting\n\n"
      << "Global options:\n"
      << "  --config PATH    flat key = value config file\n"
      << "  --set K=V        override one config key (repeatable; wins over the file)\n"
      << "  --seed N         override the 'seed' config key\n"
      << "  --out PATH       output path or prefix\n"
      << "  --quiet          suppress progress output\n"
      << "  --help-config    list every config key with its default and meaning\n\n"
      << "Command options:\n"
      << "  --data PATH      dataset prefix (comma separated subject list for loso)\n"
      << "  --model PATH     checkpoint prefix (evaluate / export-features)\n"
      << "  --band NAME      band name for connectivity (from bands.spec)\n"
      << "  --channel NAME   channel name for analyze (overrides analyze.channel)\n"
      << "  --threshold X    strong-edge threshold for connectivity (default 0.9)\n"
      << "  --mode NAME      evaluate mode: holdout, cv5, loso, pseudo-online\n";
}

void print_config_help() {
  for (const auto& spec : RunConfig::known_keys()) {
    std::cout << spec.key << " = " << spec.default_value << "\n    " << spec.help << "\n";
  }
}

CliArgs parse_cli(int argc, char** argv) {
  CliArgs args;
  if (argc < 2) throw ConfigError("missing command (try --help)");
  args.command = argv[1];
  if (args.command == "--help" || args.command == "-h") {
    print_usage();
    std::exit(0);
  }
  if (args.command == "--help-config") {
    print_config_help();
    std::exit(0);
  }

  std::string config_path;
  std::vector<std::pair<std::string, std::string>> overrides;
  for (int i = 2; i < argc; ++i) {
    const std::string arg = argv[i];
    auto need_value = [&](const char* flag) -> std::string {
      if (i + 1 >= argc) throw ConfigError(std::string(flag) + " needs a value");
      return argv[++i];
    };
    if (arg == "--config") {
      config_path = need_value("--config");
    } else if (arg == "--set") {
      const std::string kv = need_value("--set");
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value");
      overrides.push_back({trim(kv.substr(0, eq)), trim(kv.substr(eq + 1))});
    } else if (arg == "--seed") {
      overrides.push_back({"seed", need_value("--seed")});
    } else if (arg == "--out") {
      args.out = need_value("--out");
    } else if (arg == "--data") {
      args.data = need_value("--data");
    } else if (arg == "--model") {
      args.model = need_value("--model");
    } else if (arg == "--band") {
      args.band = need_value("--band");
    } else if (arg == "--channel") {
      args.channel = need_value("--channel");
    } else if (arg == "--threshold") {
      args.threshold = std::stod(need_value("--threshold"));
    } else if (arg == "--mode") {
      args.mode = need_value("--mode");
    } else if (arg == "--quiet") {
      args.quiet = true;
    } else if (arg == "--help" || arg == "-h") {
      print_usage();
      std::exit(0);
    } else {
      throw ConfigError("unknown argument: " + arg);
    }
  }
  if (!config_path.empty()) args.config.load_file(config_path);
  for (const auto& [k, v] : overrides) args.config.set(k, v);  // flags win over the file
  return args;
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

void write_text(const std::string& path, const std::string& text) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataFormatError("cannot write " + path);
  out << text;
  if (!out) throw DataFormatError("failed to write " + path);
}

nlohmann::ordered_json report_header(const CliArgs& args, const std::string& mode) {
  nlohmann::ordered_json j;
  j["tool"] = "fcdn";
  j["mode"] = mode;
  j["seed"] = args.config.get_u64("seed");
  j["config_hash"] = args.config.hash();
  nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
  for (const auto& spec : RunConfig::known_keys()) {
    cfg[spec.key] = args.config.get_str(spec.key);
  }
  j["config"] = cfg;
  return j;
}

EpochSet load_data(const CliArgs& args, const std::string& path) {
  EpochSet set = load_epochset(path);
  const long factor = args.config.get_int("train.downsample");
  if (factor < 1) throw ConfigError("train.downsample must be >= 1");
  if (factor > 1) set = downsample(set, static_cast<size_t>(factor));
  return set;
}

// Split -> augment -> PLV(train) -> train; shared by train/cv5/loso paths.
struct TrainedRun {
  FcdnModel model;
  TrainHistory history;
};

TrainedRun run_training(const CliArgs& args, const EpochSet& train_set, const EpochSet& val_set,
                        const std::function<void(const EpochRecord&)>& on_epoch) {
  const auto& cfg = args.config;
  const auto bands = bands_from_config(cfg);

  const size_t factor = static_cast<size_t>(cfg.get_int("augment.factor"));
  const double sigma = cfg.get_real("augment.sigma_rel");
  const uint64_t seed = cfg.get_u64("seed");
  const EpochSet augmented =
      augment_gaussian(train_set, factor, sigma, derive_seed(seed, 11));

  const auto weights = compute_band_weights(augmented, bands);
  auto bands_train = band_triplet(augmented, bands);
  auto bands_val = band_triplet(val_set, bands);

  auto model_cfg =
      model_from_config(cfg, train_set.n_channels, train_set.n_samples, train_set.n_classes());

  FcdnModel teacher;
  FcdnModel* teacher_ptr = nullptr;
  if (model_cfg.beta > 0.0) {
    const std::string teacher_path = cfg.get_str("teacher.checkpoint");
    require(!teacher_path.empty(), "model.beta > 0 requires teacher.checkpoint");
    teacher = from_checkpoint<float>(load_checkpoint(teacher_path));
    teacher_ptr = &teacher;
  }

  TrainedRun run;
  run.model = build<float>(model_cfg, weights, model_cfg.seed);
  run.history = train(run.model, teacher_ptr, bands_train, bands_val, on_epoch);
  return run;
}

int cmd_synth(const CliArgs& args) {
  require(!args.out.empty(), "synth needs --out");
  const SynthSpec spec = synth_from_config(args.config);
  const EpochSet set = synth_generate(spec);
  save_epochset(set, args.out);
  if (!args.quiet) {
    std::cout << "wrote " << dataset_prefix(args.out) << ".{json,f32}: " << set.n_trials
              << " trials x " << set.n_channels << " channels x " << set.n_samples
              << " samples @ " << set.fs_hz << " Hz, " << set.n_classes() << " classes\n";
  }
  return 0;
}

int cmd_connectivity(const CliArgs& args) {
  require(!args.data.empty(), "connectivity needs --data");
  require(!args.out.empty(), "connectivity needs --out");
  require(!args.band.empty(), "connectivity needs --band");
  if (!(args.threshold >= 0.0) || !(args.threshold < 1.0)) {
    throw ConfigError("--threshold must lie in [0, 1)");
  }
  const auto bands = bands_from_config(args.config);
  const BandSpec* band = nullptr;
  for (const auto& b : bands) {
    if (b.name == args.band) band = &b;
  }
  require(band != nullptr, "unknown band '" + args.band + "' (not in bands.spec)");

  const EpochSet set = load_data(args, args.data);
  const auto filtered = filt_zero_phase(
      set, fir_bandpass(set.fs_hz, *band, band_filter_order(set.fs_hz, *band)));
  const auto mat = plv_matrix(instantaneous_phase(filtered), *band);
  const auto weights = channel_weights(mat);
  const auto edges = strong_edges(mat, args.threshold);

  write_text(args.out + ".weights.json", weights_to_json(weights, set.montage));
  write_text(args.out + ".edges.csv", edges_to_csv(edges, set.montage));
  write_text(args.out + ".edges.json", edges_to_json(edges, set.montage));
  if (!args.quiet) {
    std::cout << "band " << band->name << ": " << edges.edges.size() << " edges above "
              << args.threshold << ", weights written to " << args.out << ".weights.json\n";
  }
  return 0;
}

int cmd_analyze(const CliArgs& args) {
  require(!args.data.empty(), "analyze needs --data");
  require(!args.out.empty(), "analyze needs --out");
  const std::string channel =
      args.channel.empty() ? args.config.get_str("analyze.channel") : args.channel;
  require(!channel.empty(), "analyze needs --channel (or analyze.channel)");

  const EpochSet set = load_data(args, args.data);
  size_t channel_index = set.n_channels;
  for (size_t k = 0; k < set.n_channels; ++k) {
    if (set.montage.channel_names[k] == channel) channel_index = k;
  }
  require(channel_index < set.n_channels, "channel '" + channel + "' not in the montage");

  const auto spectrum = psd(set, channel_index, args.config.get_real("analyze.f_lo"),
                            args.config.get_real("analyze.f_hi"));
  write_text(args.out + ".psd.csv", psd_to_csv(spectrum));

  if (args.config.get_bool("analyze.ersp")) {
    const auto baseline_parts = split(args.config.get_str("analyze.baseline_ms"), ',');
    require(baseline_parts.size() == 2, "analyze.baseline_ms needs two comma-separated values");
    const std::array<double, 2> baseline = {std::stod(trim(baseline_parts[0])),
                                            std::stod(trim(baseline_parts[1]))};
    const auto map = ersp(set, channel_index, args.config.get_real("analyze.onset_s"), baseline,
                          {args.config.get_real("analyze.ersp_f_lo"),
                           args.config.get_real("analyze.ersp_f_hi")},
                          static_cast<size_t>(args.config.get_int("analyze.n_times")));
    write_text(args.out + ".ersp.csv", timefreq_to_csv(map));
  }
  if (!args.quiet) {
    std::cout << "analysis for channel " << channel << " written to " << args.out
              << ".psd.csv" << (args.config.get_bool("analyze.ersp") ? " and .ersp.csv" : "")
              << "\n";
  }
  return 0;
}

int cmd_train(const CliArgs& args) {
  require(!args.data.empty(), "train needs --data");
  require(!args.out.empty(), "train needs --out");
  const EpochSet set = load_data(args, args.data);
  const uint64_t seed = args.config.get_u64("seed");

  const SplitPlan plan = split_62_2(set, seed);
  const EpochSet train_set = set.select_trials(plan.train);
  const EpochSet val_set = set.select_trials(plan.val);

  const std::string log_path = checkpoint_prefix(args.out) + ".log.jsonl";
  {
    std::filesystem::path p(log_path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  }
  std::ofstream log(log_path, std::ios::binary | std::ios::trunc);
  if (!log) throw DataFormatError("cannot write " + log_path);
  auto on_epoch = [&](const EpochRecord& rec) {
    nlohmann::ordered_json j;
    j["epoch"] = rec.epoch;
    j["train_loss"] = rec.train_loss;
    j["val_loss"] = rec.val_loss;
    j["val_acc"] = rec.val_acc;
    log << j.dump() << "\n";
    log.flush();
    if (!args.quiet) {
      std::cout << "epoch " << rec.epoch << ": train " << rec.train_loss << ", val "
                << rec.val_loss << ", acc " << rec.val_acc << "\n";
    }
  };

  TrainedRun run = run_training(args, train_set, val_set, on_epoch);
  save_checkpoint(to_checkpoint(run.model), args.out);
  if (!args.quiet) {
    std::cout << "best epoch " << run.history.best_epoch << ", checkpoint written to "
              << checkpoint_prefix(args.out) << ".{json,f32}\n";
  }
  return 0;
}

int cmd_evaluate(const CliArgs& args) {
  require(!args.data.empty(), "evaluate needs --data");
  require(!args.out.empty(), "evaluate needs --out");
  const std::string mode = args.mode.empty() ? "holdout" : args.mode;
  const uint64_t seed = args.config.get_u64("seed");
  nlohmann::ordered_json report = report_header(args, mode);

  if (mode == "holdout") {
    require(!args.model.empty(), "evaluate --mode holdout needs --model");
    FcdnModel model = from_checkpoint<float>(load_checkpoint(args.model));
    const EpochSet set = load_data(args, args.data);
    const SplitPlan plan = split_62_2(set, seed);
    const EpochSet test = set.select_trials(plan.test);
    auto bands = band_triplet(test, model.config.bands);
    const auto pred = predict(model, bands);
    report["accuracy"] = accuracy(pred.labels, test.labels);
    report["n_test"] = test.n_trials;
  } else if (mode == "cv5") {
    const EpochSet set = load_data(args, args.data);
    const size_t k = static_cast<size_t>(args.config.get_int("evaluate.folds"));
    const auto folds = kfold(set, k, seed);
    std::vector<double> fold_accs;
    for (size_t f = 0; f < folds.size(); ++f) {
      const EpochSet fold_train_all = set.select_trials(folds[f].train);
      const EpochSet fold_test = set.select_trials(folds[f].test);
      const auto inner = kfold(fold_train_all, 5, derive_seed(seed, 100 + f));
      const EpochSet fold_train = fold_train_all.select_trials(inner[0].train);
      const EpochSet fold_val = fold_train_all.select_trials(inner[0].test);
      TrainedRun run = run_training(args, fold_train, fold_val, nullptr);
      auto bands = band_triplet(fold_test, run.model.config.bands);
      const double acc = accuracy(predict(run.model, bands).labels, fold_test.labels);
      fold_accs.push_back(acc);
      if (!args.quiet) std::cout << "fold " << (f + 1) << ": accuracy " << acc << "\n";
    }
    double mean_acc = 0.0;
    for (double a : fold_accs) mean_acc += a;
    mean_acc /= static_cast<double>(fold_accs.size());
    const double chance = 1.0 / static_cast<double>(set.n_classes());
    std::vector<double> chance_vec(fold_accs.size(), chance);
    report["fold_accuracies"] = fold_accs;
    report["mean_accuracy"] = mean_acc;
    report["p_value_vs_chance"] = permutation_test_paired(fold_accs, chance_vec, 10000, seed);
  } else if (mode == "loso") {
    const auto paths = split(args.data, ',');
    require(paths.size() >= 2, "loso needs at least 2 comma-separated subject datasets");
    std::vector<EpochSet> subjects;
    for (const auto& p : paths) subjects.push_back(load_data(args, trim(p)));
    std::vector<double> target_accs;
    for (size_t target = 0; target < subjects.size(); ++target) {
      auto [train_set, test_set] = loso(subjects, target);
      const auto inner = kfold(train_set, 5, derive_seed(seed, 200 + target));
      const EpochSet tr = train_set.select_trials(inner[0].train);
      const EpochSet va = train_set.select_trials(inner[0].test);
      TrainedRun run = run_training(args, tr, va, nullptr);
      auto bands = band_triplet(test_set, run.model.config.bands);
      const double acc = accuracy(predict(run.model, bands).labels, test_set.labels);
      target_accs.push_back(acc);
      if (!args.quiet) std::cout << "target " << (target + 1) << ": accuracy " << acc << "\n";
    }
    double mean_acc = 0.0;
    for (double a : target_accs) mean_acc += a;
    mean_acc /= static_cast<double>(target_accs.size());
    report["target_accuracies"] = target_accs;
    report["mean_accuracy"] = mean_acc;
  } else if (mode == "pseudo-online") {
    require(!args.model.empty(), "evaluate --mode pseudo-online needs --model");
    FcdnModel model = from_checkpoint<float>(load_checkpoint(args.model));
    const EpochSet set = load_data(args, args.data);
    const double window_samples = args.config.get_real("pseudo.window_s") * set.fs_hz;
    require(window_samples <= static_cast<double>(model.config.n_samples),
            "pseudo.window_s exceeds the model's input length");
    FcdnWindowClassifier<float> classifier(model);
    const auto result =
        pseudo_online(classifier, set, args.config.get_real("pseudo.window_s"),
                      args.config.get_real("pseudo.overlap"),
                      args.config.get_real("pseudo.threshold"), args.config.get_bool("pseudo.strict"));
    write_text(args.out + ".pseudo.csv", pseudo_online_to_csv(result));
    report["n_windows"] = result.n_windows;
    report["success_rate"] = result.success_rate;
    nlohmann::ordered_json table = nlohmann::json::array();
    for (size_t n = 0; n < result.trials.size(); ++n) {
      const auto& tr = result.trials[n];
      table.push_back({{"trial", n},
                       {"windows", tr.window_labels},
                       {"fused", tr.fused_label},
                       {"correct_windows", tr.correct_windows},
                       {"success", tr.success}});
    }
    report["trials"] = table;
  } else {
    throw ConfigError("unknown evaluate mode '" + mode + "'");
  }

  write_text(args.out + ".report.json", report.dump(2) + "\n");
  if (!args.quiet) std::cout << "report written to " << args.out << ".report.json\n";
  return 0;
}

int cmd_export_features(const CliArgs& args) {
  require(!args.data.empty(), "export-features needs --data");
  require(!args.model.empty(), "export-features needs --model");
  require(!args.out.empty(), "export-features needs --out");
  FcdnModel model = from_checkpoint<float>(load_checkpoint(args.model));
  const EpochSet set = load_data(args, args.data);
  auto bands = band_triplet(set, model.config.bands);

  std::array<std::ostringstream, 3> conv_csv;
  std::ostringstream token_csv;
  bool header_done = false;

  NoGradGuard off;
  const size_t chunk = std::max<size_t>(1, model.config.batch_size);
  for (size_t start = 0; start < set.n_trials; start += chunk) {
    std::vector<size_t> idx;
    for (size_t i = start; i < std::min(set.n_trials, start + chunk); ++i) idx.push_back(i);
    auto res = forward(model, bands, idx, false, nullptr);

    if (!header_done) {
      header_done = true;
      for (size_t s = 0; s < 3; ++s) {
        conv_csv[s] << "label";
        const size_t per_band = res.conv_stage[0][s].size() / idx.size();
        for (size_t b = 0; b < 3; ++b) {
          for (size_t j = 0; j < per_band; ++j) conv_csv[s] << ",b" << b << "_f" << j;
        }
        conv_csv[s] << "\n";
      }
      token_csv << "label";
      for (size_t j = 0; j < model.config.embed_dim; ++j) token_csv << ",d" << j;
      token_csv << "\n";
    }

    for (size_t r = 0; r < idx.size(); ++r) {
      const int label = set.labels[idx[r]];
      for (size_t s = 0; s < 3; ++s) {
        conv_csv[s] << label;
        for (size_t b = 0; b < 3; ++b) {
          const auto& t = res.conv_stage[b][s];
          const size_t per = t.size() / idx.size();
          for (size_t j = 0; j < per; ++j) conv_csv[s] << "," << t.data()[r * per + j];
        }
        conv_csv[s] << "\n";
      }
      // Class token after the final layer norm: the vector the head sees.
      const auto& tokens = res.final_tokens;
      const size_t dim = model.config.embed_dim;
      token_csv << label;
      const float* row = tokens.data() + (r * tokens.extent(1) + 0) * dim;
      for (size_t j = 0; j < dim; ++j) token_csv << "," << row[j];
      token_csv << "\n";
    }
  }
  for (size_t s = 0; s < 3; ++s) {
    write_text(args.out + ".conv" + std::to_string(s + 1) + ".csv", conv_csv[s].str());
  }
  write_text(args.out + ".token.csv", token_csv.str());
  if (!args.quiet) {
    std::cout << "feature dumps written to " << args.out << ".{conv1,conv2,conv3,token}.csv\n";
  }
  return 0;
}

int run(int argc, char** argv) {
  CliArgs args = parse_cli(argc, argv);
  if (args.command == "synth") return cmd_synth(args);
  if (args.command == "connectivity") return cmd_connectivity(args);
  if (args.command == "analyze") return cmd_analyze(args);
  if (args.command == "train") return cmd_train(args);
  if (args.command == "evaluate") return cmd_evaluate(args);
  if (args.command == "pseudo-online") {
    args.mode = "pseudo-online";
    return cmd_evaluate(args);
  }
  if (args.command == "export-features") return cmd_export_features(args);
  throw ConfigError("unknown command '" + args.command + "' (try --help)");
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 64;
  } catch (const DataFormatError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 65;
  } catch (const NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
