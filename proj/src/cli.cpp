#include "tsum/cli.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>

#include <CLI11.hpp>
#include <json.hpp>

#include "tsum/checkpoint.hpp"
#include "tsum/config.hpp"
#include "tsum/errors.hpp"
#include "tsum/evaluator.hpp"
#include "tsum/experiment.hpp"
#include "tsum/synth.hpp"

namespace tsum {

namespace {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

struct Streams {
  std::ostream& out;
  std::ostream& err;
};

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError(DataError::Kind::missing, "cannot write " + path.string());
  return f;
}

std::string format_mean_se(double mean, double se) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f \xC2\xB1 %.4f", mean, se);
  return buf;
}

Json mean_se_json(const std::vector<double>& values) {
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double se = values.size() > 1 ? std::sqrt(ss / (n - 1.0)) / std::sqrt(n) : 0.0;
  return {{"mean", mean}, {"se", se}, {"formatted", format_mean_se(mean, se)}, {"values", values}};
}

void write_history(const fs::path& path, const std::vector<HistoryRecord>& history) {
  auto f = open_output(path);
  for (const auto& h : history) {
    const Json line = {{"epoch", h.epoch},
                       {"train_loss", h.train_loss},
                       {"val_loss", h.val_loss},
                       {"val_auc", h.val_auc}};
    f << line.dump() << '\n';
  }
}

std::vector<std::string> categorical_columns(const RunConfig& config) {
  if (config.csv) return config.csv->options.categorical;
  if (config.synth && config.synth->num_static >= 2) return {"sex"};
  return {};
}

int cmd_synth(const RunConfig& config, Streams io) {
  if (config.csv) throw UsageError("synth takes a synthetic spec, not CSV paths");
  const SynthSpec spec = config.synth.value_or(SynthSpec{});
  const SynthCohort result = generate(spec);
  write_cohort_csv(result.cohort, config.out);
  open_output(config.out / "truth.json") << truth_to_json(result.truth);
  char buf[96];
  std::snprintf(buf, sizeof buf, "realized prevalence: %.4f (target %.4f, N = %zu)\n",
                result.truth.prevalence_realized, spec.prevalence, spec.num_examples);
  io.out << buf;
  return kExitOk;
}

int cmd_train(const RunConfig& config, Streams io) {
  const RawCohort raw = load_cohort(config);
  const auto categorical = categorical_columns(config);
  std::vector<double> train_aucs, test_aucs;
  Json per_seed = Json::array();
  for (const auto seed : config.seeds) {
    TrainConfig tc = config.train;
    tc.seed = seed;
    const fs::path dir = config.out / ("seed_" + std::to_string(seed));
    ExperimentResult result;
    try {
      result = run_experiment(raw, tc, config.test_fraction);
    } catch (const TrainingAborted& e) {
      ExperimentResult partial;
      partial.fit = e.partial();
      partial.stats = prepare_split(raw, config.test_fraction, tc.val_fraction, seed).stats;
      save_checkpoint(make_checkpoint(partial, raw, tc, config.test_fraction, categorical),
                      dir / "model.ckpt");
      write_history(dir / "history.jsonl", partial.fit.history);
      throw;
    }
    save_checkpoint(make_checkpoint(result, raw, tc, config.test_fraction, categorical),
                    dir / "model.ckpt");
    write_history(dir / "history.jsonl", result.fit.history);
    const Json metrics = {{"seed", seed},
                          {"mode", std::string(mode_name(tc.mode))},
                          {"num_features", result.fit.model_params.coeffs.size()},
                          {"train_auc", result.train_auc},
                          {"test_auc", result.test_auc},
                          {"best_val_auc", result.fit.best_val_auc},
                          {"best_epoch", result.fit.best_epoch},
                          {"stopped_epoch", result.fit.stopped_epoch}};
    open_output(dir / "metrics.json") << metrics.dump(2) << '\n';
    per_seed.push_back(metrics);
    train_aucs.push_back(result.train_auc);
    test_aucs.push_back(result.test_auc);
    char buf[128];
    std::snprintf(buf, sizeof buf, "seed %llu: train AUC %.4f, test AUC %.4f (best epoch %zu)\n",
                  static_cast<unsigned long long>(seed), result.train_auc, result.test_auc,
                  result.fit.best_epoch);
    io.out << buf;
  }
  const Json summary = {{"mode", std::string(mode_name(config.train.mode))},
                        {"seeds", config.seeds},
                        {"train_auc", mean_se_json(train_aucs)},
                        {"test_auc", mean_se_json(test_aucs)},
                        {"runs", per_seed}};
  open_output(config.out / "summary.json") << summary.dump(2) << '\n';
  io.out << "test AUC " << summary["test_auc"]["formatted"].get<std::string>() << '\n';
  return kExitOk;
}

/// Cohort for a checkpoint, checked against its schema; optionally restricted
/// to the checkpoint's own test split.
ClinicalBatch cohort_for_checkpoint(const RunConfig& config, const Checkpoint& ck,
                                    bool on_split) {
  config.check_source(true);
  RawCohort raw;
  if (config.csv) {
    IngestOptions options = config.csv->options;
    options.hours = ck.summary_params.num_hours;
    options.variables = ck.variable_names;
    options.static_names = ck.static_names;
    if (options.categorical.empty()) options.categorical = ck.categorical;
    raw = ingest_csv(config.csv->timeseries, config.csv->statics, config.csv->labels, options);
  } else {
    raw = generate(*config.synth).cohort;
    if (raw.variable_names != ck.variable_names || raw.static_names != ck.static_names ||
        raw.num_hours != ck.summary_params.num_hours) {
      throw DataError(DataError::Kind::schema, "cohort schema does not match the checkpoint");
    }
  }
  if (on_split) {
    const auto split = split_by_patient(raw.y, ck.test_fraction, ck.seed);
    raw = subset(raw, split.test);
  }
  return prepare_for_eval(raw, ck.stats);
}

int cmd_eval(const RunConfig& config, bool on_split, Streams io) {
  const Checkpoint ck = load_checkpoint(config.checkpoint);
  const ClinicalBatch batch = cohort_for_checkpoint(config, ck, on_split);
  const double value =
      auc(predict_batch(ck.summary_params, ck.model_params, batch, ck.mode), batch.y);
  const Json metrics = {{"checkpoint", config.checkpoint.string()},
                        {"num_examples", batch.num_examples},
                        {"test_auc", value}};
  open_output(config.out / "eval.json") << metrics.dump(2) << '\n';
  char buf[64];
  std::snprintf(buf, sizeof buf, "AUC %.6f on %zu examples\n", value, batch.num_examples);
  io.out << buf;
  return kExitOk;
}

int cmd_ablate(const RunConfig& config, bool on_split, Streams io) {
  const Checkpoint ck = load_checkpoint(config.checkpoint);
  const ClinicalBatch batch = cohort_for_checkpoint(config, ck, on_split);
  FitResult fit;
  fit.mode = ck.mode;
  fit.summary_params = ck.summary_params;
  fit.model_params = ck.model_params;
  const auto points = ablation_curve(fit, batch, config.n_list);
  write_ablation_tsv(io.out, points);
  auto f = open_output(config.out / "ablation.tsv");
  write_ablation_tsv(f, points);
  return kExitOk;
}

int cmd_report(const RunConfig& config, Streams io) {
  const Checkpoint ck = load_checkpoint(config.checkpoint);
  const auto rows = key_feature_report(ck.summary_params, ck.model_params, ck.stats, config.top_k);
  write_report_tsv(io.out, rows);
  auto f = open_output(config.out / "report.tsv");
  write_report_tsv(f, rows);
  return kExitOk;
}

int cmd_gradcheck(const RunConfig& config, const CliHooks& hooks, Streams io) {
  const auto& g = config.gradcheck;
  const auto fixture =
      random_gradcheck_fixture(g.num_examples, g.num_vars, g.num_hours, config.train);
  FdOptions options;
  options.epsilon = g.epsilon;
  options.num_coeffs = g.num_coeffs;
  options.seed = config.train.seed;
  options.tamper = hooks.tamper;
  const FdReport report = finite_difference_check(fixture.summary_params, fixture.model_params,
                                                  fixture.batch, config.train, options);
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "checked %zu parameters, max relative error %.3e at %s (tolerance %.1e, "
                "epsilon %.1e)\n",
                report.entries.size(), report.max_rel_error, report.worst_parameter.c_str(),
                g.tolerance, g.epsilon);
  io.out << buf;
  if (!report.passed(g.tolerance)) {
    io.err << "gradient check failed\n";
    return kExitNumerical;
  }
  io.out << "gradient check passed\n";
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, const CliHooks& hooks) {
  Streams io{hooks.out ? *hooks.out : std::cout, hooks.err ? *hooks.err : std::cerr};

  CLI::App app{"Learned interpretable summaries of masked clinical time series", "tsum"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  KeyValues flags;
  auto flag = [&](CLI::App* cmd, const std::string& name, const std::string& key,
                  const std::string& help) {
    cmd->add_option_function<std::string>(
        name, [&flags, key](const std::string& v) { flags.emplace_back(key, v); }, help);
  };
  auto common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "flat key = value config file");
    cmd->add_option("--set", overrides, "extra key=value override (repeatable)");
    flag(cmd, "--out", "out", "output directory");
    flag(cmd, "--seed", "seed", "seed (replaces the seed list)");
    flag(cmd, "--mode", "mode", "relaxed, hard, time_of_prediction_only or flat_series");
  };
  auto data = [&](CLI::App* cmd) {
    flag(cmd, "--timeseries", "timeseries", "series CSV");
    flag(cmd, "--static", "static", "static CSV");
    flag(cmd, "--labels", "labels", "labels CSV");
    flag(cmd, "--categorical", "categorical", "comma-separated categorical static columns");
    flag(cmd, "--hours", "hours", "hours per series");
  };
  bool on_split = false;
  auto model_input = [&](CLI::App* cmd) {
    flag(cmd, "--checkpoint", "checkpoint", "model checkpoint");
    cmd->add_flag("--on-split", on_split, "score only the checkpoint's own test split");
  };

  auto* synth = app.add_subcommand("synth", "write a synthetic cohort and its truth.json");
  common(synth);
  auto* train = app.add_subcommand("train", "train one model per seed");
  common(train);
  data(train);
  flag(train, "--seeds", "seeds", "comma-separated seeds");
  flag(train, "--epochs", "max_epochs", "epoch limit");
  flag(train, "--lr", "learning_rate", "learning rate");
  auto* eval = app.add_subcommand("eval", "AUC of a checkpoint on a cohort");
  common(eval);
  data(eval);
  model_input(eval);
  auto* ablate = app.add_subcommand("ablate", "test AUC keeping the n largest coefficients");
  common(ablate);
  data(ablate);
  model_input(ablate);
  flag(ablate, "--n-list", "n_list", "comma-separated coefficient counts");
  auto* report = app.add_subcommand("report", "key-feature table of a checkpoint");
  common(report);
  flag(report, "--checkpoint", "checkpoint", "model checkpoint");
  flag(report, "--top-k", "top_k", "rows to emit");
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient check");
  common(gradcheck);
  flag(gradcheck, "--epsilon", "gradcheck.epsilon", "central-difference step");
  flag(gradcheck, "--tolerance", "gradcheck.tolerance", "largest accepted relative error");

  std::vector<std::string> argv_storage;
  argv_storage.emplace_back("tsum");
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_storage) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    io.out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    io.out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    io.err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    KeyValues values;
    if (!config_path.empty()) values = read_config_file(config_path);
    for (const auto& o : overrides) {
      const auto parsed = parse_config(o, "--set");
      values.insert(values.end(), parsed.begin(), parsed.end());
    }
    values.insert(values.end(), flags.begin(), flags.end());
    const RunConfig config = build_run_config(values);

    if (synth->parsed()) return cmd_synth(config, io);
    if (train->parsed()) return cmd_train(config, io);
    if (gradcheck->parsed()) return cmd_gradcheck(config, hooks, io);
    if (config.checkpoint.empty()) throw UsageError("--checkpoint is required");
    if (eval->parsed()) return cmd_eval(config, on_split, io);
    if (ablate->parsed()) return cmd_ablate(config, on_split, io);
    if (report->parsed()) return cmd_report(config, io);
    return kExitUsage;
  } catch (const UsageError& e) {
    io.err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericalError& e) {
    io.err << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const DataError& e) {
    io.err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const FormatError& e) {
    io.err << "format error: " << e.what() << '\n';
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    io.err << "data error: " << e.what() << '\n';
    return kExitData;
  }
}

}  // namespace tsum
