#include "hinet/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>

namespace hinet {

const std::vector<PreparedSurgery>& PreparedCohort::part(const std::string& name) const {
  if (name == "train") return train;
  if (name == "validation") return validation;
  if (name == "test") return test;
  throw std::invalid_argument("unknown split '" + name + "' (expected train, validation or test)");
}

namespace {

void check_channels(const SurgeryRecord& r, const HiNetConfig& config) {
  if (r.channels != config.channels)
    throw DataError("surgery " + r.id + " has " + std::to_string(r.channels) + " channels but the model expects " +
                    std::to_string(config.channels));
}

}  // namespace

PreparedCohort prepare_cohort(const std::vector<SurgeryRecord>& records, const HiNetConfig& config,
                              std::uint64_t split_seed) {
  std::map<std::string, const SurgeryRecord*> by_id;
  std::vector<std::string> ids;
  for (const auto& r : records) {
    check_channels(r, config);
    if (!by_id.emplace(r.id, &r).second) throw DataError("duplicate surgery id " + r.id);
    ids.push_back(r.id);
  }
  const CohortSplit split = split_cohort(ids, split_seed);

  std::vector<SurgeryRecord> imputed_train;
  imputed_train.reserve(split.train.size());
  for (const auto& id : split.train) imputed_train.push_back(impute(*by_id.at(id), config.spo2_channel));

  PreparedCohort cohort;
  cohort.normalizer = fit_normalizer(imputed_train);
  const PipelineConfig pc = config.pipeline();
  auto prepare = [&](const std::vector<std::string>& part) {
    std::vector<PreparedSurgery> out;
    out.reserve(part.size());
    for (const auto& id : part) out.push_back(prepare_surgery(*by_id.at(id), cohort.normalizer, pc));
    return out;
  };
  cohort.train = prepare(split.train);
  cohort.validation = prepare(split.validation);
  cohort.test = prepare(split.test);
  return cohort;
}

std::vector<PreparedSurgery> prepare_all(const std::vector<SurgeryRecord>& records, const Normalizer& normalizer,
                                         const HiNetConfig& config) {
  if (normalizer.mean.size() != config.channels)
    throw DataError("normalizer has " + std::to_string(normalizer.mean.size()) + " channels but the model expects " +
                    std::to_string(config.channels));
  std::vector<PreparedSurgery> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    check_channels(r, config);
    out.push_back(prepare_surgery(r, normalizer, config.pipeline()));
  }
  return out;
}

PredictionSet collect_predictions(const HiNetParams& params, const std::vector<PreparedSurgery>& surgeries) {
  PredictionSet ps;
  const bool hard = !params.config.has_predictor();
  for (const auto& s : surgeries) {
    std::vector<double> scores;
    if (hard) {
      const auto alarms = detect_from_forecast(params, s);
      scores.assign(alarms.begin(), alarms.end());
    } else {
      scores = infer_stream(params, s);
    }
    for (std::size_t t = 0; t < s.minutes; ++t) ps.append(scores[t], s.labels.y[t], s.labels.m[t], s.id, t);
  }
  return ps;
}

MetricsReport evaluate_model(const HiNetParams& params, const std::vector<PreparedSurgery>& surgeries,
                             bool alarms_labeled_only) {
  const PredictionSet ps = collect_predictions(params, surgeries);
  const std::string outcome = to_string(params.config.outcome);
  return params.config.has_predictor() ? evaluate_predictions(ps, outcome, 0.8, alarms_labeled_only)
                                       : evaluate_alarms(ps, outcome, alarms_labeled_only);
}

std::string alarm_table(const PredictionSet& ps, const std::vector<PreparedSurgery>& surgeries, double threshold) {
  std::ostringstream os;
  os << "surgery_id,minutes,events,positive_minutes,alarm_minutes,alarms_per_10h\n";
  std::size_t i = 0;
  char buf[64];
  for (const auto& s : surgeries) {
    std::size_t positives = 0, alarms = 0;
    for (std::size_t t = 0; t < s.minutes; ++t, ++i) {
      if (i >= ps.size() || ps.surgery_ids[i] != s.id) throw std::invalid_argument("alarm_table: predictions out of order");
      positives += ps.mask[i] && ps.labels[i];
      alarms += ps.scores[i] >= threshold;
    }
    std::snprintf(buf, sizeof buf, "%.6g", s.minutes ? 600.0 * static_cast<double>(alarms) / s.minutes : 0.0);
    os << s.id << ',' << s.minutes << ',' << s.events.size() << ',' << positives << ',' << alarms << ',' << buf << '\n';
  }
  return os.str();
}

std::vector<double> default_lambda_grid() { return {1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0}; }

std::vector<LambdaTrial> lambda_search(const HiNetConfig& config, const PreparedCohort& cohort,
                                       const std::vector<double>& grid, const TrainOptions& options) {
  if (grid.empty()) throw std::invalid_argument("lambda grid is empty");
  std::vector<LambdaTrial> trials;
  for (double lambda : grid) {
    HiNetConfig c = config;
    c.lambda = lambda;
    c.validate();
    LambdaTrial trial;
    trial.lambda = lambda;
    trial.result = train(HiNetParams::create(c), cohort.train, cohort.validation, options);
    trial.validation_pr_auc = evaluate_model(trial.result.best, cohort.validation).pr_auc;
    trials.push_back(std::move(trial));
  }
  std::stable_sort(trials.begin(), trials.end(), [](const LambdaTrial& a, const LambdaTrial& b) {
    return a.validation_pr_auc > b.validation_pr_auc;
  });
  return trials;
}

}  // namespace hinet
