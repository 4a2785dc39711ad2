#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hinet/metrics.hpp"
#include "hinet/model.hpp"
#include "hinet/train.hpp"

namespace hinet {

/// A cohort split, imputed, labelled and normalised with statistics from
/// its training part.
struct PreparedCohort {
  Normalizer normalizer;
  std::vector<PreparedSurgery> train;
  std::vector<PreparedSurgery> validation;
  std::vector<PreparedSurgery> test;

  const std::vector<PreparedSurgery>& part(const std::string& name) const;
};

/// Throws DataError when a record's channel count differs from the config.
PreparedCohort prepare_cohort(const std::vector<SurgeryRecord>& records, const HiNetConfig& config,
                              std::uint64_t split_seed);

/// Prepares surgeries with a fixed normalizer (no split).
std::vector<PreparedSurgery> prepare_all(const std::vector<SurgeryRecord>& records, const Normalizer& normalizer,
                                         const HiNetConfig& config);

/// One score per minute of every surgery. Predictor variants give
/// probabilities; r_plus_f gives its 0/1 forecast alarms.
PredictionSet collect_predictions(const HiNetParams& params, const std::vector<PreparedSurgery>& surgeries);

/// evaluate_predictions, or evaluate_alarms for r_plus_f.
MetricsReport evaluate_model(const HiNetParams& params, const std::vector<PreparedSurgery>& surgeries,
                             bool alarms_labeled_only = false);

/// CSV: surgery_id,minutes,events,positive_minutes,alarm_minutes,alarms_per_10h
std::string alarm_table(const PredictionSet& ps, const std::vector<PreparedSurgery>& surgeries, double threshold);

/// 1e-4, 1e-3, ..., 1e1
std::vector<double> default_lambda_grid();

struct LambdaTrial {
  double lambda = 0.0;
  double validation_pr_auc = 0.0;
  TrainResult result;
};

/// Trains one model per lambda and orders the trials by validation
/// PR-AUC, best first. Ties keep grid order.
std::vector<LambdaTrial> lambda_search(const HiNetConfig& config, const PreparedCohort& cohort,
                                       const std::vector<double>& grid, const TrainOptions& options);

}  // namespace hinet
