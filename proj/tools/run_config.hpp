#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "hinet/model.hpp"
#include "hinet/train.hpp"

namespace hinet::cli {

/// Bad flags, unknown keys or infeasible requests; exit code 2.
struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

using KeyValues = std::map<std::string, std::string>;

struct RunConfig {
  HiNetConfig model;
  std::filesystem::path cohort;
  std::filesystem::path out;
  std::filesystem::path checkpoint;
  std::filesystem::path input;
  std::string split = "test";
  std::uint64_t split_seed = 7;
  std::vector<double> lambda_grid;  // empty: train a single model
  std::size_t max_epochs = 80;
  std::size_t patience = 10;
  std::size_t surgeries_per_batch = 32;
  std::size_t micro_batch = 256;
  std::size_t max_batches_per_epoch = 0;
  double learning_rate = 1e-3;
  bool alarms_labeled_only = false;
  bool baseline = false;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::vector<Variant> variants{Variant::full, Variant::mem_minus, Variant::f_minus, Variant::r_plus_f};

  TrainOptions train_options() const;
  /// Every key, one `key=value` line each; parses back through resolve().
  std::string to_text() const;
};

/// Keys understood besides the HiNetConfig ones.
const std::vector<std::string>& run_keys();
/// HiNetConfig keys.
const std::vector<std::string>& model_keys();

/// `key=value` lines; blank lines and lines starting with # are skipped.
KeyValues parse_key_values(const std::string& text);

/// Defaults for the outcome, then the file's keys, then the command line's.
RunConfig resolve(const KeyValues& file, const KeyValues& command_line);

}  // namespace hinet::cli
