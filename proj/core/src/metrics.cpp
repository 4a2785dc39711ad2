#include "hinet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

namespace hinet {

void PredictionSet::append(double score, std::uint8_t label, std::uint8_t m, const std::string& surgery_id,
                           std::size_t minute) {
  scores.push_back(score);
  labels.push_back(label);
  mask.push_back(m);
  surgery_ids.push_back(surgery_id);
  minutes.push_back(minute);
}

void PredictionSet::validate() const {
  const std::size_t n = scores.size();
  if (labels.size() != n || mask.size() != n)
    throw std::invalid_argument("prediction set vectors differ in length");
  if (!surgery_ids.empty() && surgery_ids.size() != n) throw std::invalid_argument("surgery id column length differs");
  if (!minutes.empty() && minutes.size() != n) throw std::invalid_argument("minute column length differs");
}

namespace {

struct Labeled {
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
  std::size_t positives = 0;
};

Labeled labeled_entries(const PredictionSet& ps) {
  ps.validate();
  Labeled l;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    if (!ps.mask[i]) continue;
    l.scores.push_back(ps.scores[i]);
    l.labels.push_back(ps.labels[i] ? 1 : 0);
    l.positives += ps.labels[i] ? 1 : 0;
  }
  return l;
}

std::vector<std::size_t> order_descending(const std::vector<double>& scores) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return idx;
}

}  // namespace

double roc_auc(const PredictionSet& ps) {
  const Labeled l = labeled_entries(ps);
  const std::size_t n = l.scores.size();
  const std::size_t negatives = n - l.positives;
  if (l.positives == 0 || negatives == 0) throw MetricError("ROC-AUC needs both classes among labeled minutes");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return l.scores[a] < l.scores[b]; });
  double positive_rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && l.scores[idx[j + 1]] == l.scores[idx[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k)
      if (l.labels[idx[k]]) positive_rank_sum += midrank;
    i = j + 1;
  }
  const double p = static_cast<double>(l.positives), q = static_cast<double>(negatives);
  return (positive_rank_sum - p * (p + 1.0) / 2.0) / (p * q);
}

double pr_auc(const PredictionSet& ps) {
  const Labeled l = labeled_entries(ps);
  if (l.positives == 0) throw MetricError("PR-AUC needs at least one positive labeled minute");
  const auto idx = order_descending(l.scores);
  const double p = static_cast<double>(l.positives);
  double ap = 0.0;
  std::size_t tp = 0, seen = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i, new_tp = 0;
    while (j < idx.size() && l.scores[idx[j]] == l.scores[idx[i]]) new_tp += l.labels[idx[j++]];
    tp += new_tp;
    seen = j;
    if (new_tp > 0) ap += (static_cast<double>(new_tp) / p) * (static_cast<double>(tp) / static_cast<double>(seen));
    i = j;
  }
  return ap;
}

double threshold_for_sensitivity(const PredictionSet& ps, double target) {
  if (!(target > 0.0 && target <= 1.0)) throw std::invalid_argument("target sensitivity must lie in (0, 1]");
  const Labeled l = labeled_entries(ps);
  if (l.positives == 0) throw MetricError("sensitivity is undefined without positive labeled minutes");
  std::vector<double> pos;
  for (std::size_t i = 0; i < l.scores.size(); ++i)
    if (l.labels[i]) pos.push_back(l.scores[i]);
  std::sort(pos.begin(), pos.end(), std::greater<>());
  // Smallest k with k / P >= target; the k-th largest positive score is then
  // the largest threshold admitting k positives.
  const double p = static_cast<double>(pos.size());
  std::size_t k = 1;
  while (static_cast<double>(k) / p < target) ++k;
  return pos[k - 1];
}

double alarms_per_10h(const PredictionSet& ps, double threshold, bool labeled_only) {
  ps.validate();
  const std::size_t monitored = ps.monitored_minutes();
  if (monitored == 0) throw MetricError("alarm rate is undefined without monitored minutes");
  std::size_t alarms = 0;
  for (std::size_t i = 0; i < ps.size(); ++i)
    if (ps.scores[i] >= threshold && (!labeled_only || ps.mask[i])) ++alarms;
  return static_cast<double>(alarms) * 600.0 / static_cast<double>(monitored);
}

OperatingPoint operating_point(std::span<const std::uint8_t> alarms, std::span<const std::uint8_t> labels,
                               std::span<const std::uint8_t> mask) {
  if (alarms.size() != labels.size() || alarms.size() != mask.size())
    throw std::invalid_argument("operating_point: inputs differ in length");
  OperatingPoint op;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < alarms.size(); ++i) {
    if (!mask[i]) continue;
    positives += labels[i] ? 1 : 0;
    if (alarms[i]) (labels[i] ? op.true_positives : op.false_positives)++;
  }
  if (positives > 0) op.sensitivity = static_cast<double>(op.true_positives) / static_cast<double>(positives);
  const std::size_t flagged = op.true_positives + op.false_positives;
  if (flagged > 0) op.precision = static_cast<double>(op.true_positives) / static_cast<double>(flagged);
  return op;
}

OperatingPoint operating_point(const PredictionSet& ps, double threshold) {
  ps.validate();
  std::vector<std::uint8_t> alarms(ps.size());
  for (std::size_t i = 0; i < ps.size(); ++i) alarms[i] = ps.scores[i] >= threshold ? 1 : 0;
  OperatingPoint op = operating_point(alarms, ps.labels, ps.mask);
  op.threshold = threshold;
  return op;
}

double rmse(std::span<const double> estimate, std::span<const double> truth) {
  if (estimate.size() != truth.size()) throw std::invalid_argument("rmse: inputs differ in length");
  if (estimate.empty()) throw MetricError("rmse of an empty input");
  double sq = 0.0;
  for (std::size_t i = 0; i < estimate.size(); ++i) sq += (estimate[i] - truth[i]) * (estimate[i] - truth[i]);
  return std::sqrt(sq / static_cast<double>(estimate.size()));
}

namespace {

void fill_counts(MetricsReport& r, const PredictionSet& ps) {
  r.n_surgeries = std::set<std::string>(ps.surgery_ids.begin(), ps.surgery_ids.end()).size();
  r.n_samples = ps.size();
  std::size_t positives = 0;
  for (std::size_t i = 0; i < ps.size(); ++i)
    if (ps.mask[i]) {
      ++r.n_labeled;
      positives += ps.labels[i] ? 1 : 0;
    }
  r.prevalence = r.n_labeled ? static_cast<double>(positives) / static_cast<double>(r.n_labeled) : 0.0;
}

}  // namespace

MetricsReport evaluate_predictions(const PredictionSet& ps, const std::string& outcome, double target_sensitivity,
                                   bool alarms_labeled_only) {
  MetricsReport r;
  r.outcome = outcome;
  r.roc_auc = roc_auc(ps);
  r.pr_auc = pr_auc(ps);
  r.threshold = threshold_for_sensitivity(ps, target_sensitivity);
  r.alarms_per_10h = alarms_per_10h(ps, r.threshold, alarms_labeled_only);
  const OperatingPoint op = operating_point(ps, r.threshold);
  r.sensitivity = op.sensitivity;
  r.precision = op.precision;
  fill_counts(r, ps);
  return r;
}

MetricsReport evaluate_alarms(const PredictionSet& alarms, const std::string& outcome, bool alarms_labeled_only) {
  for (double s : alarms.scores)
    if (s != 0.0 && s != 1.0) throw MetricError("evaluate_alarms: scores must be 0 or 1");
  MetricsReport r;
  r.outcome = outcome;
  r.roc_auc = roc_auc(alarms);
  r.pr_auc = pr_auc(alarms);
  r.threshold = 1.0;
  r.alarms_per_10h = alarms_per_10h(alarms, 1.0, alarms_labeled_only);
  const OperatingPoint op = operating_point(alarms, 1.0);
  r.sensitivity = op.sensitivity;
  r.precision = op.precision;
  fill_counts(r, alarms);
  return r;
}

std::string report_to_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  j["outcome"] = r.outcome;
  j["roc_auc"] = r.roc_auc;
  j["pr_auc"] = r.pr_auc;
  j["threshold_at_0.8_sens"] = r.threshold;
  j["alarms_per_10h"] = r.alarms_per_10h;
  j["sensitivity"] = r.sensitivity;
  j["precision"] = r.precision;
  j["n_surgeries"] = r.n_surgeries;
  j["n_samples"] = r.n_samples;
  j["n_labeled"] = r.n_labeled;
  j["prevalence"] = r.prevalence;
  return j.dump(2) + "\n";
}

}  // namespace hinet
