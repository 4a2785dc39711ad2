#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hinet {

/// Raised when a metric is undefined for the input (e.g. a single class).
struct MetricError : std::domain_error {
  using std::domain_error::domain_error;
};

/// Aligned per-minute predictions. Entries with mask 0 are ignored by the
/// label-based metrics but still count as monitored time.
struct PredictionSet {
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
  std::vector<std::uint8_t> mask;
  std::vector<std::string> surgery_ids;
  std::vector<std::size_t> minutes;
  std::size_t total_minutes = 0;  // 0 means scores.size()

  void append(double score, std::uint8_t label, std::uint8_t m, const std::string& surgery_id, std::size_t minute);
  std::size_t size() const { return scores.size(); }
  std::size_t monitored_minutes() const { return total_minutes ? total_minutes : scores.size(); }
  void validate() const;
};

/// Mann-Whitney statistic with midranks for ties.
double roc_auc(const PredictionSet& ps);

/// Step-wise average precision: sum over distinct thresholds of
/// (recall increment) x (precision at that threshold).
double pr_auc(const PredictionSet& ps);

/// Largest threshold whose sensitivity (score >= threshold) is >= target.
double threshold_for_sensitivity(const PredictionSet& ps, double target = 0.8);

/// Minutes with score >= threshold per 600 monitored minutes. Every minute
/// counts unless labeled_only, which skips mask-0 minutes.
double alarms_per_10h(const PredictionSet& ps, double threshold, bool labeled_only = false);

struct OperatingPoint {
  double threshold = 0.0;
  double sensitivity = 0.0;
  double precision = 0.0;
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
};

/// Sensitivity and precision over mask-1 entries at the threshold.
OperatingPoint operating_point(const PredictionSet& ps, double threshold);
/// Same for hard alarms (1 = alarm).
OperatingPoint operating_point(std::span<const std::uint8_t> alarms, std::span<const std::uint8_t> labels,
                               std::span<const std::uint8_t> mask);

double rmse(std::span<const double> estimate, std::span<const double> truth);

struct MetricsReport {
  std::string outcome;
  double roc_auc = 0.0;
  double pr_auc = 0.0;
  double threshold = 0.0;  // at 0.8 sensitivity
  double alarms_per_10h = 0.0;
  double sensitivity = 0.0;
  double precision = 0.0;
  std::size_t n_surgeries = 0;
  std::size_t n_samples = 0;
  std::size_t n_labeled = 0;
  double prevalence = 0.0;
};

MetricsReport evaluate_predictions(const PredictionSet& ps, const std::string& outcome, double target_sensitivity = 0.8,
                                   bool alarms_labeled_only = false);

/// Report for hard 0/1 alarms (scores must be 0 or 1). The operating point
/// is the alarms themselves; threshold is reported as 1.
MetricsReport evaluate_alarms(const PredictionSet& alarms, const std::string& outcome,
                              bool alarms_labeled_only = false);

std::string report_to_json(const MetricsReport& report);

}  // namespace hinet
