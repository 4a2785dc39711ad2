#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "hinet/baseline.hpp"
#include "hinet/checkpoint.hpp"
#include "hinet/cohort_io.hpp"
#include "hinet/experiment.hpp"
#include "hinet/synth.hpp"
#include "run_config.hpp"

namespace fs = std::filesystem;
using namespace hinet;
using namespace hinet::cli;

namespace {

enum ExitCode { kOk = 0, kUsage = 2, kData = 3, kNumeric = 4 };

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string dashed(std::string key) {
  for (auto& c : key)
    if (c == '_') c = '-';
  return key;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

// Key options shared by the model commands.
struct KeyOptions {
  std::string config_file;
  KeyValues values;

  void attach(CLI::App* app, const std::vector<std::string>& required) {
    app->add_option("--config", config_file, "key=value file; command-line keys override it")->check(CLI::ExistingFile);
    auto add = [&](const std::string& key) {
      const std::string names = "--" + dashed(key) + (key.find('_') != std::string::npos ? ",--" + key : "");
      if (key == "alarms_labeled_only" || key == "baseline") {
        app->add_flag_function(names, [this, key](std::int64_t) { values[key] = "true"; });
        return;
      }
      app->add_option_function<std::string>(names, [this, key](const std::string& v) { values[key] = v; });
    };
    for (const auto& k : model_keys()) add(k);
    for (const auto& k : run_keys()) add(k);
    required_keys = required;
  }

  RunConfig resolve_all() const {
    const KeyValues file = config_file.empty() ? KeyValues{} : parse_key_values(read_text(config_file));
    RunConfig rc = resolve(file, values);
    for (const auto& k : required_keys) {
      const bool missing = (k == "cohort" && rc.cohort.empty()) || (k == "out" && rc.out.empty()) ||
                           (k == "checkpoint" && rc.checkpoint.empty()) || (k == "input" && rc.input.empty());
      if (missing) throw UsageError("--" + k + " is required");
    }
    return rc;
  }

  std::vector<std::string> required_keys;
};

void write_resolved(const fs::path& dir, const RunConfig& rc) {
  fs::create_directories(dir);
  atomic_write(dir / "run_config.txt", rc.to_text());
}

// ---- generate

struct GenerateArgs {
  std::size_t n = 2000;
  std::uint64_t seed = 7;
  std::string out;
  double general = 0.24;
  double persistent = 0.019;
  double mean_duration = 89.0;
  double missing_rate = 0.03;
  double decoy_rate = 0.10;
};

int cmd_generate(const GenerateArgs& a) {
  if (a.n == 0) throw UsageError("--n must be positive");
  if (!(a.general >= 0.0 && a.general <= 1.0) || !(a.persistent >= 0.0 && a.persistent <= a.general))
    throw UsageError("infeasible prevalence: need 0 <= persistent (" + fmt(a.persistent) + ") <= general (" +
                     fmt(a.general) + ") <= 1");
  if (!(a.mean_duration >= 30.0)) throw UsageError("--mean-duration must be at least 30 minutes");
  if (!(a.missing_rate >= 0.0 && a.missing_rate < 1.0)) throw UsageError("--missing-rate must be in [0, 1)");

  SynthSpec spec;
  spec.surgeries = a.n;
  spec.seed = a.seed;
  spec.general_incidence = a.general;
  spec.persistent_incidence = a.persistent;
  spec.mean_duration = a.mean_duration;
  spec.missing_rate = a.missing_rate;
  spec.decoy_rate = a.decoy_rate;
  const auto records = synth_generate(spec);
  write_cohort(a.out, records);

  const IncidenceReport r = measure_incidence(records);
  nlohmann::ordered_json j;
  j["surgeries"] = r.surgeries;
  j["minutes"] = r.minutes;
  j["general_incidence"] = r.general_incidence;
  j["persistent_incidence"] = r.persistent_incidence;
  j["low_minute_fraction"] = r.low_minute_fraction;
  j["target_general_incidence"] = a.general;
  j["target_persistent_incidence"] = a.persistent;
  atomic_write(fs::path(a.out) / "prevalence_report.json", j.dump(2) + "\n");

  std::ostringstream cfg;
  cfg << "n=" << a.n << "\nseed=" << a.seed << "\ngeneral_incidence=" << a.general
      << "\npersistent_incidence=" << a.persistent << "\nmean_duration=" << a.mean_duration
      << "\nmissing_rate=" << a.missing_rate << "\ndecoy_rate=" << a.decoy_rate << '\n';
  atomic_write(fs::path(a.out) / "generate_config.txt", cfg.str());

  std::cout << "wrote " << r.surgeries << " surgeries (" << r.minutes << " minutes) to " << a.out << '\n'
            << "general incidence " << fmt(r.general_incidence) << ", persistent incidence "
            << fmt(r.persistent_incidence) << '\n';
  return kOk;
}

// ---- train

void print_epoch(const EpochRecord& e) {
  std::cerr << "epoch " << e.epoch << "  train " << fmt(e.train_total) << "  val_P " << fmt(e.validation_predictor)
            << "  val_F " << fmt(e.validation_forecaster) << "  " << fmt(e.seconds) << "s\n";
}

void save_run(const fs::path& dir, const TrainResult& result, const Normalizer& normalizer) {
  fs::create_directories(dir);
  save_checkpoint(dir / "checkpoint.bin", result.best, &normalizer);
  atomic_write(dir / "history.csv", history_to_csv(result.history));
}

int cmd_train(const RunConfig& rc) {
  write_resolved(rc.out, rc);
  const PreparedCohort cohort = prepare_cohort(load_cohort(rc.cohort), rc.model, rc.split_seed);
  std::cerr << "cohort: " << cohort.train.size() << " train, " << cohort.validation.size() << " validation, "
            << cohort.test.size() << " test surgeries\n";
  TrainOptions options = rc.train_options();
  options.on_epoch = print_epoch;

  nlohmann::ordered_json summary;
  if (rc.lambda_grid.empty()) {
    const TrainResult result = train(HiNetParams::create(rc.model), cohort.train, cohort.validation, options);
    save_run(rc.out, result, cohort.normalizer);
    summary["lambda"] = rc.model.lambda;
    summary["best_epoch"] = result.best_epoch;
    summary["best_validation_loss"] = result.best_validation;
    summary["epochs_run"] = result.history.size();
  } else {
    const auto trials = lambda_search(rc.model, cohort, rc.lambda_grid, options);
    std::ostringstream table;
    table << "lambda,validation_pr_auc,best_epoch,best_validation_loss\n";
    for (const auto& t : trials) {
      table << fmt(t.lambda) << ',' << t.validation_pr_auc << ',' << t.result.best_epoch << ','
            << t.result.best_validation << '\n';
      save_run(rc.out / ("lambda_" + fmt(t.lambda)), t.result, cohort.normalizer);
    }
    atomic_write(rc.out / "lambda_grid.csv", table.str());
    save_run(rc.out, trials.front().result, cohort.normalizer);
    RunConfig chosen = rc;
    chosen.model.lambda = trials.front().lambda;
    write_resolved(rc.out, chosen);
    summary["lambda"] = trials.front().lambda;
    summary["validation_pr_auc"] = trials.front().validation_pr_auc;
    summary["best_epoch"] = trials.front().result.best_epoch;
    summary["best_validation_loss"] = trials.front().result.best_validation;
    std::cout << "selected lambda " << fmt(trials.front().lambda) << " (validation PR-AUC "
              << fmt(trials.front().validation_pr_auc) << ")\n";
  }
  atomic_write(rc.out / "train_summary.json", summary.dump(2) + "\n");
  std::cout << "checkpoint written to " << (rc.out / "checkpoint.bin").string() << '\n';
  return kOk;
}

// ---- eval / export-latent

struct LoadedModel {
  HiNetParams params;
  Normalizer normalizer;
};

LoadedModel load_model(const fs::path& path) {
  LoadedModel m{HiNetParams{}, {}};
  m.params = load_checkpoint(path, &m.normalizer);
  return m;
}

// Surgeries of the requested split, prepared with the checkpoint's normalizer.
std::vector<PreparedSurgery> load_split(const RunConfig& rc, const LoadedModel& m, std::vector<PreparedSurgery>* train_part) {
  const auto records = load_cohort(rc.cohort);
  std::vector<std::string> ids;
  std::map<std::string, const SurgeryRecord*> by_id;
  for (const auto& r : records) {
    ids.push_back(r.id);
    by_id[r.id] = &r;
  }
  const CohortSplit split = split_cohort(ids, rc.split_seed);
  auto pick = [&](const std::vector<std::string>& part) {
    std::vector<SurgeryRecord> out;
    for (const auto& id : part) out.push_back(*by_id.at(id));
    return out;
  };
  Normalizer normalizer = m.normalizer;
  if (normalizer.mean.empty()) {
    std::vector<SurgeryRecord> imputed;
    for (const auto& id : split.train) imputed.push_back(impute(*by_id.at(id), m.params.config.spo2_channel));
    normalizer = fit_normalizer(imputed);
  }
  if (train_part) *train_part = prepare_all(pick(split.train), normalizer, m.params.config);
  if (rc.split == "all") return prepare_all(records, normalizer, m.params.config);
  const auto& ids_part = rc.split == "train" ? split.train : rc.split == "validation" ? split.validation : split.test;
  return prepare_all(pick(ids_part), normalizer, m.params.config);
}

int cmd_eval(RunConfig rc) {
  const LoadedModel m = load_model(rc.checkpoint);
  rc.model = m.params.config;
  write_resolved(rc.out, rc);
  std::vector<PreparedSurgery> train_part;
  const auto surgeries = load_split(rc, m, rc.baseline ? &train_part : nullptr);

  const PredictionSet ps = collect_predictions(m.params, surgeries);
  const std::string outcome = to_string(m.params.config.outcome);
  const MetricsReport report = m.params.config.has_predictor()
                                   ? evaluate_predictions(ps, outcome, 0.8, rc.alarms_labeled_only)
                                   : evaluate_alarms(ps, outcome, rc.alarms_labeled_only);
  atomic_write(rc.out / "metrics.json", report_to_json(report));
  atomic_write(rc.out / "alarms.csv", alarm_table(ps, surgeries, report.threshold));

  std::ostringstream scores;
  scores << "surgery_id,minute,score,y,m\n";
  char buf[40];
  for (std::size_t i = 0; i < ps.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", ps.scores[i]);
    scores << ps.surgery_ids[i] << ',' << ps.minutes[i] << ',' << buf << ',' << int(ps.labels[i]) << ','
           << int(ps.mask[i]) << '\n';
  }
  atomic_write(rc.out / "scores.csv", scores.str());

  std::cout << report_to_json(report);
  if (rc.baseline) {
    const LogisticBaseline lr = fit_logistic_baseline(train_part, m.params.config.observation_window);
    PredictionSet bps;
    for (const auto& s : surgeries) {
      const auto b = baseline_stream(lr, s);
      for (std::size_t t = 0; t < s.minutes; ++t) bps.append(b[t], s.labels.y[t], s.labels.m[t], s.id, t);
    }
    const MetricsReport br = evaluate_predictions(bps, outcome, 0.8, rc.alarms_labeled_only);
    atomic_write(rc.out / "baseline_metrics.json", report_to_json(br));
    std::cout << "logistic baseline: roc_auc " << fmt(br.roc_auc) << ", pr_auc " << fmt(br.pr_auc) << '\n';
  }
  return kOk;
}

int cmd_predict(const RunConfig& rc) {
  const LoadedModel m = load_model(rc.checkpoint);
  if (m.normalizer.mean.empty()) throw DataError("checkpoint " + rc.checkpoint.string() + " carries no normalizer");
  const auto record = read_surgery_csv(rc.input, rc.input.stem().string());
  const auto prepared = prepare_all({record}, m.normalizer, m.params.config);
  const PredictionSet ps = collect_predictions(m.params, prepared);
  std::ostringstream os;
  os << "minute,score\n";
  char buf[40];
  for (std::size_t i = 0; i < ps.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", ps.scores[i]);
    os << ps.minutes[i] << ',' << buf << '\n';
  }
  if (rc.out.has_parent_path()) fs::create_directories(rc.out.parent_path());
  atomic_write(rc.out, os.str());
  std::cout << "wrote " << ps.size() << " scores to " << rc.out.string() << '\n';
  return kOk;
}

int cmd_export_latent(const RunConfig& rc) {
  const LoadedModel m = load_model(rc.checkpoint);
  const auto surgeries = load_split(rc, m, nullptr);
  const std::size_t width = m.params.config.filters;
  std::ostringstream os;
  os << "surgery_id,minute";
  for (std::size_t i = 0; i < width; ++i) os << ",z" << i;
  for (std::size_t i = 0; i < width; ++i) os << ",p" << i;
  os << ",y,m\n";
  char buf[40];
  std::size_t rows = 0;
  for (const auto& s : surgeries) {
    const LatentTrace trace = infer_latents(m.params, s);
    for (std::size_t t = 0; t < s.minutes; ++t, ++rows) {
      os << s.id << ',' << t;
      for (const auto* v : {&trace.z, &trace.p})
        for (std::size_t i = 0; i < width; ++i) {
          std::snprintf(buf, sizeof buf, ",%.9g", (*v)[t * width + i]);
          os << buf;
        }
      os << ',' << int(s.labels.y[t]) << ',' << int(s.labels.m[t]) << '\n';
    }
  }
  if (rc.out.has_parent_path()) fs::create_directories(rc.out.parent_path());
  atomic_write(rc.out, os.str());
  std::cout << "wrote " << rows << " latent rows (z and p of width " << width << ") to " << rc.out.string() << '\n';
  return kOk;
}

// ---- ablate

struct Summary {
  std::vector<double> roc, pr, alarms, sens, prec;
};

std::string mean_sd(const std::vector<double>& v) {
  double mean = 0.0, var = 0.0;
  for (double x : v) mean += x / static_cast<double>(v.size());
  for (double x : v) var += (x - mean) * (x - mean);
  const double sd = v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0;
  return fmt(mean) + "," + fmt(sd);
}

int cmd_ablate(const RunConfig& rc) {
  write_resolved(rc.out, rc);
  const auto records = load_cohort(rc.cohort);
  std::ostringstream rows;
  rows << "variant,seed,roc_auc,pr_auc,threshold,alarms_per_10h,sensitivity,precision,best_epoch\n";
  std::map<Variant, Summary> summary;
  for (Variant v : rc.variants) {
    HiNetConfig c = rc.model;
    c.variant = v;
    // The cohort preparation depends only on the outcome and windows, not the variant.
    const PreparedCohort cohort = prepare_cohort(records, c, rc.split_seed);
    for (std::uint64_t seed : rc.seeds) {
      c.seed = seed;
      std::cerr << "== " << to_string(v) << " seed " << seed << '\n';
      TrainOptions options = rc.train_options();
      options.on_epoch = print_epoch;
      const TrainResult result = train(HiNetParams::create(c), cohort.train, cohort.validation, options);
      const fs::path dir = rc.out / (to_string(v) + "_seed" + std::to_string(seed));
      save_run(dir, result, cohort.normalizer);
      const MetricsReport r = evaluate_model(result.best, cohort.test, rc.alarms_labeled_only);
      atomic_write(dir / "metrics.json", report_to_json(r));
      rows << to_string(v) << ',' << seed << ',' << r.roc_auc << ',' << r.pr_auc << ',' << r.threshold << ','
           << r.alarms_per_10h << ',' << r.sensitivity << ',' << r.precision << ',' << result.best_epoch << '\n';
      auto& s = summary[v];
      s.roc.push_back(r.roc_auc);
      s.pr.push_back(r.pr_auc);
      s.alarms.push_back(r.alarms_per_10h);
      s.sens.push_back(r.sensitivity);
      s.prec.push_back(r.precision);
    }
  }
  atomic_write(rc.out / "ablation_runs.csv", rows.str());

  std::ostringstream table;
  table << "variant,runs,roc_auc_mean,roc_auc_sd,pr_auc_mean,pr_auc_sd,alarms_per_10h_mean,alarms_per_10h_sd,"
           "sensitivity_mean,sensitivity_sd,precision_mean,precision_sd\n";
  for (Variant v : rc.variants) {
    const auto& s = summary[v];
    table << to_string(v) << ',' << s.roc.size() << ',' << mean_sd(s.roc) << ',' << mean_sd(s.pr) << ','
          << mean_sd(s.alarms) << ',' << mean_sd(s.sens) << ',' << mean_sd(s.prec) << '\n';
  }
  atomic_write(rc.out / "ablation_summary.csv", table.str());
  std::cout << table.str();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hinet: intraoperative hypoxemia early warning"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "Write a synthetic surgical cohort");
  generate->add_option("--n", gen.n, "Number of surgeries")->capture_default_str();
  generate->add_option("--seed", gen.seed, "Generator seed")->capture_default_str();
  generate->add_option("--out", gen.out, "Output directory")->required();
  generate->add_option("--general-incidence", gen.general)->capture_default_str();
  generate->add_option("--persistent-incidence", gen.persistent)->capture_default_str();
  generate->add_option("--mean-duration", gen.mean_duration, "Mean surgery length in minutes")->capture_default_str();
  generate->add_option("--missing-rate", gen.missing_rate)->capture_default_str();
  generate->add_option("--decoy-rate", gen.decoy_rate, "Share of surgeries with event-free precursor drift")
      ->capture_default_str();

  KeyOptions train_keys, eval_keys, predict_keys, export_keys, ablate_keys;
  auto* train_cmd = app.add_subcommand("train", "Train a model on a cohort");
  train_keys.attach(train_cmd, {"cohort", "out"});
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a cohort split");
  eval_keys.attach(eval_cmd, {"checkpoint", "cohort", "out"});
  auto* predict_cmd = app.add_subcommand("predict", "Score every minute of one surgery CSV");
  predict_keys.attach(predict_cmd, {"checkpoint", "input", "out"});
  auto* export_cmd = app.add_subcommand("export-latent", "Write z and p for every minute of a cohort split");
  export_keys.attach(export_cmd, {"checkpoint", "cohort", "out"});
  auto* ablate_cmd = app.add_subcommand("ablate", "Train and compare model variants over several seeds");
  ablate_keys.attach(ablate_cmd, {"cohort", "out"});

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*generate) return cmd_generate(gen);
    if (*train_cmd) return cmd_train(train_keys.resolve_all());
    if (*eval_cmd) return cmd_eval(eval_keys.resolve_all());
    if (*predict_cmd) return cmd_predict(predict_keys.resolve_all());
    if (*export_cmd) return cmd_export_latent(export_keys.resolve_all());
    if (*ablate_cmd) return cmd_ablate(ablate_keys.resolve_all());
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericError& e) {
    std::cerr << "numeric abort: " << e.what() << '\n';
    return kNumeric;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const MetricError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}
