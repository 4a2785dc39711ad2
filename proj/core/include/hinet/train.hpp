#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "hinet/adam.hpp"
#include "hinet/model.hpp"

namespace hinet {

struct TrainOptions {
  std::size_t max_epochs = 80;
  std::size_t patience = 10;              // epochs without validation improvement
  std::size_t surgeries_per_batch = 32;   // one Adam step per group of surgeries
  std::size_t micro_batch = 256;          // windows per forward pass
  std::size_t max_batches_per_epoch = 0;  // 0 = every batch
  AdamOptions adam;
  std::filesystem::path diagnostics_dir = ".";
  std::function<void(const struct EpochRecord&)> on_epoch;
};

/// Per-window averages.
struct EpochRecord {
  std::size_t epoch = 0;
  double train_total = 0.0;
  double train_predictor = 0.0;
  double train_forecaster = 0.0;
  double train_reconstruction = 0.0;
  double validation_predictor = 0.0;
  double validation_forecaster = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  HiNetParams best;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_validation = 0.0;
};

struct LossSummary {
  double total = 0.0;
  double predictor = 0.0;
  double forecaster = 0.0;
  double reconstruction = 0.0;
  std::size_t windows = 0;
};

/// Eval-mode losses averaged over every window of the surgeries.
LossSummary evaluate_losses(const HiNetParams& params, const std::vector<PreparedSurgery>& surgeries,
                            std::size_t micro_batch = 512);

/// Mini-batch Adam over windows of `surgeries_per_batch` surgeries at a time,
/// early-stopped on the validation predictor loss (forecaster loss for a
/// model without a Predictor). Returns the best validation checkpoint.
TrainResult train(const HiNetParams& initial, const std::vector<PreparedSurgery>& train_set,
                  const std::vector<PreparedSurgery>& validation_set, const TrainOptions& options = {});

std::string history_to_csv(const std::vector<EpochRecord>& history);

}  // namespace hinet
