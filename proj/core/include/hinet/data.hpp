#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hinet {

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr std::size_t kDefaultChannels = 18;
inline constexpr std::size_t kDefaultSpo2Channel = 7;
inline constexpr double kLowSpo2Percent = 90.0;
inline constexpr double kAberrantSpo2Percent = 60.0;
inline constexpr std::size_t kCarryForwardMinutes = 20;
inline constexpr double kStdFloor = 1e-6;

/// Column names of the 18 intraoperative channels, in file order.
const std::vector<std::string>& default_channel_names();

/// One surgery's minute-resolution vitals, channel-major [V, T].
struct SurgeryRecord {
  std::string id;
  std::size_t channels = 0;
  std::size_t minutes = 0;
  std::vector<double> values;
  std::vector<std::uint8_t> observed;
  /// Filled by impute(): observed or carried forward. Empty before.
  std::vector<std::uint8_t> available;

  SurgeryRecord() = default;
  SurgeryRecord(std::string id, std::size_t channels, std::size_t minutes);

  double& at(std::size_t c, std::size_t t) { return values[c * minutes + t]; }
  double at(std::size_t c, std::size_t t) const { return values[c * minutes + t]; }
  bool is_observed(std::size_t c, std::size_t t) const { return observed[c * minutes + t] != 0; }
  bool is_available(std::size_t c, std::size_t t) const { return available[c * minutes + t] != 0; }
};

/// Carry-forward imputation.
///
/// SpO2 readings below 60% are dropped first. A missing minute takes the
/// last observed value if that observation is at most 20 minutes old;
/// otherwise, or when nothing was observed yet, it becomes 0 and is marked
/// unavailable.
SurgeryRecord impute(const SurgeryRecord& record, std::size_t spo2_channel = kDefaultSpo2Channel);

struct Normalizer {
  std::vector<double> mean;
  std::vector<double> stddev;
};

/// Per-channel mean and population std over available entries of imputed
/// training records. Channels with no available entries get (0, 1).
Normalizer fit_normalizer(std::span<const SurgeryRecord> imputed_train);

/// z-scores available entries; unavailable entries are 0 after scaling.
SurgeryRecord apply_normalizer(const Normalizer& normalizer, const SurgeryRecord& imputed);

enum class Outcome { general, persistent };

Outcome parse_outcome(const std::string& name);
std::string to_string(Outcome outcome);

/// Inclusive minute interval.
struct EventInterval {
  std::size_t start = 0;
  std::size_t end = 0;
  bool operator==(const EventInterval&) const = default;
};

/// Minimum run length that counts as an event for the outcome.
std::size_t min_event_minutes(Outcome outcome, std::size_t persistent_minutes = 5);

/// Maximal runs of SpO2 <= 90 at least min_event_minutes long. NaN marks
/// an unavailable reading and never counts as low.
std::vector<EventInterval> label_events(std::span<const double> spo2_percent, Outcome outcome,
                                        std::size_t persistent_minutes = 5);

struct MinuteLabels {
  std::vector<std::uint8_t> y;
  std::vector<std::uint8_t> m;
};

/// y_t = 1 on the prediction_horizon minutes before each event start;
/// m_t = 0 inside events (where y_t is forced to 0).
MinuteLabels assign_labels_and_mask(std::span<const EventInterval> events, std::size_t minutes,
                                    std::size_t prediction_horizon = 5);

struct PipelineConfig {
  Outcome outcome = Outcome::general;
  std::size_t prediction_horizon = 5;
  std::size_t persistent_minutes = 5;
  std::size_t spo2_channel = kDefaultSpo2Channel;
};

/// Everything the model needs from one surgery.
struct PreparedSurgery {
  std::string id;
  std::size_t channels = 0;
  std::size_t minutes = 0;
  std::vector<double> values;           // normalised [V, T]
  std::vector<double> raw_spo2;         // imputed percent, NaN where unavailable
  std::vector<std::uint8_t> low_spo2;   // raw_spo2 <= 90
  std::vector<EventInterval> events;    // for the configured outcome
  MinuteLabels labels;
};

/// impute -> (label on raw SpO2) -> normalise.
PreparedSurgery prepare_surgery(const SurgeryRecord& raw, const Normalizer& normalizer, const PipelineConfig& config);

struct WindowConfig {
  std::size_t observation_window = 16;
  std::size_t forecast_horizon = 6;
};

struct WindowSample {
  std::vector<double> x;  // [V, W_o], zero columns before minute 0
  std::uint8_t y = 0;
  std::uint8_t m = 1;
  std::vector<int> u;     // low-SpO2 flags for minutes t - W_o + 1 + k + L
  bool future_truncated = false;  // t + L runs past the end of the surgery
  std::string surgery_id;
  std::size_t minute = 0;
};

/// Writes the window ending at minute t into dst as [V, W_o] with the given
/// column stride between channels (W_o for a single window).
void write_window(const PreparedSurgery& surgery, std::size_t minute, std::size_t observation_window, double* dst,
                  std::size_t channel_stride);

/// Forecast target for the window ending at minute t.
std::vector<int> forecast_target(const PreparedSurgery& surgery, std::size_t minute, const WindowConfig& config);

/// One sample per minute of the surgery.
std::vector<WindowSample> extract_windows(const PreparedSurgery& surgery, const WindowConfig& config);

struct CohortSplit {
  std::vector<std::string> train;
  std::vector<std::string> validation;
  std::vector<std::string> test;
};

/// Seeded shuffle then a 70/10/20 cut by surgery count.
CohortSplit split_cohort(std::span<const std::string> surgery_ids, std::uint64_t seed);

}  // namespace hinet
