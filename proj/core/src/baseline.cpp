#include "hinet/baseline.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

namespace hinet {

std::vector<double> summary_features(const PreparedSurgery& surgery, std::size_t minute,
                                     std::size_t observation_window) {
  const std::size_t first = minute + 1 >= observation_window ? minute + 1 - observation_window : 0;
  const double n = static_cast<double>(minute + 1 - first);
  std::vector<double> f(surgery.channels * kSummaryStatistics);
  for (std::size_t c = 0; c < surgery.channels; ++c) {
    const double* row = surgery.values.data() + c * surgery.minutes;
    double s = 0.0, sq = 0.0, lo = row[first], hi = row[first];
    for (std::size_t t = first; t <= minute; ++t) {
      s += row[t];
      sq += row[t] * row[t];
      lo = std::min(lo, row[t]);
      hi = std::max(hi, row[t]);
    }
    const double mean = s / n;
    double* out = f.data() + c * kSummaryStatistics;
    out[0] = mean;
    out[1] = std::sqrt(std::max(sq / n - mean * mean, 0.0));
    out[2] = lo;
    out[3] = hi;
    out[4] = row[minute];
  }
  return f;
}

LogisticBaseline fit_logistic_baseline(const std::vector<PreparedSurgery>& train_set, std::size_t observation_window,
                                       double l2, std::size_t iterations) {
  if (train_set.empty()) throw std::invalid_argument("baseline training set is empty");
  const std::size_t channels = train_set.front().channels;
  const std::size_t d = channels * kSummaryStatistics;
  std::size_t rows = 0;
  for (const auto& s : train_set)
    for (std::size_t t = 0; t < s.minutes; ++t) rows += s.labels.m[t];
  if (rows == 0) throw std::invalid_argument("baseline training set has no labeled minutes");

  Eigen::MatrixXd X(rows, d + 1);
  Eigen::VectorXd y(rows);
  std::size_t r = 0;
  for (const auto& s : train_set)
    for (std::size_t t = 0; t < s.minutes; ++t) {
      if (!s.labels.m[t]) continue;
      const auto f = summary_features(s, t, observation_window);
      for (std::size_t j = 0; j < d; ++j) X(r, j) = f[j];
      X(r, d) = 1.0;
      y(r) = s.labels.y[t];
      ++r;
    }

  LogisticBaseline model;
  model.observation_window = observation_window;
  model.channels = channels;
  model.feature_mean.resize(d);
  model.feature_scale.resize(d);
  for (std::size_t j = 0; j < d; ++j) {
    const double mean = X.col(j).mean();
    const double sd = std::sqrt((X.col(j).array() - mean).square().mean());
    model.feature_mean[j] = mean;
    model.feature_scale[j] = std::max(sd, kStdFloor);
    X.col(j) = (X.col(j).array() - mean) / model.feature_scale[j];
  }

  Eigen::VectorXd w = Eigen::VectorXd::Zero(d + 1);
  Eigen::MatrixXd ridge = l2 * static_cast<double>(rows) * Eigen::MatrixXd::Identity(d + 1, d + 1);
  ridge(d, d) = 0.0;
  for (std::size_t it = 0; it < iterations; ++it) {
    const Eigen::VectorXd p = ((-(X * w).array()).exp() + 1.0).inverse().matrix();
    const Eigen::VectorXd weight = (p.array() * (1.0 - p.array())).max(1e-10).matrix();
    const Eigen::VectorXd grad = X.transpose() * (p - y) + ridge * w;
    const Eigen::MatrixXd hessian = X.transpose() * weight.asDiagonal() * X + ridge;
    const Eigen::VectorXd step = hessian.ldlt().solve(grad);
    w -= step;
    if (step.norm() < 1e-9) break;
  }
  model.weights.assign(w.data(), w.data() + d);
  model.bias = w(d);
  return model;
}

std::vector<double> baseline_stream(const LogisticBaseline& model, const PreparedSurgery& surgery) {
  if (surgery.channels != model.channels)
    throw std::invalid_argument("surgery " + surgery.id + " does not match the baseline's channel count");
  std::vector<double> scores(surgery.minutes);
  for (std::size_t t = 0; t < surgery.minutes; ++t) {
    const auto f = summary_features(surgery, t, model.observation_window);
    double z = model.bias;
    for (std::size_t j = 0; j < f.size(); ++j) z += model.weights[j] * (f[j] - model.feature_mean[j]) / model.feature_scale[j];
    scores[t] = 1.0 / (1.0 + std::exp(-z));
  }
  return scores;
}

}  // namespace hinet
