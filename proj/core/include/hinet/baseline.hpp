#pragma once

#include <vector>

#include "hinet/data.hpp"

namespace hinet {

/// Logistic regression on per-channel summary statistics (mean, std, min,
/// max, last value) of the trailing observation window.
struct LogisticBaseline {
  std::size_t observation_window = 16;
  std::size_t channels = 0;
  std::vector<double> feature_mean;
  std::vector<double> feature_scale;
  std::vector<double> weights;
  double bias = 0.0;

  std::size_t features() const { return weights.size(); }
};

inline constexpr std::size_t kSummaryStatistics = 5;

/// Summary features of the window ending at `minute`; the zero-padded
/// columns before minute 0 are excluded.
std::vector<double> summary_features(const PreparedSurgery& surgery, std::size_t minute,
                                     std::size_t observation_window);

/// L2-regularised fit by iteratively reweighted least squares over the
/// labeled (mask 1) minutes of the training surgeries.
LogisticBaseline fit_logistic_baseline(const std::vector<PreparedSurgery>& train_set, std::size_t observation_window,
                                       double l2 = 1e-3, std::size_t iterations = 25);

std::vector<double> baseline_stream(const LogisticBaseline& model, const PreparedSurgery& surgery);

}  // namespace hinet
