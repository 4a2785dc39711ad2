#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "hinet/data.hpp"

namespace hinet {

/// Controls for the synthetic surgical cohort.
struct SynthSpec {
  std::size_t surgeries = 2000;
  double mean_duration = 89.0;           // minutes
  double general_incidence = 0.24;       // surgeries with >= 1 low-SpO2 minute
  double persistent_incidence = 0.019;   // surgeries with a >= 5 minute run
  double missing_rate = 0.03;            // per entry, every channel
  std::vector<double> channel_missing_rates;  // optional per-channel override
  double aberrant_rate = 0.002;          // SpO2 artefacts below 60%
  double decoy_rate = 0.10;              // precursor-like drift without an event
  std::uint64_t seed = 7;
};

/// Mean-reverting vitals around per-surgery baselines. Each scheduled event
/// is preceded by a 10-15 minute precursor (rising respiratory rate, falling
/// tidal volume, SpO2 drifting toward 90) before SpO2 crosses the threshold.
/// Surgery i draws only from stream (seed, i), so cohorts are reproducible
/// and independent of generation order.
std::vector<SurgeryRecord> synth_generate(const SynthSpec& spec);

SurgeryRecord synth_surgery(const SynthSpec& spec, std::size_t index);

struct IncidenceReport {
  std::size_t surgeries = 0;
  std::size_t minutes = 0;
  double general_incidence = 0.0;
  double persistent_incidence = 0.0;
  double low_minute_fraction = 0.0;
};

/// Incidence measured through the same imputation and labelling pipeline
/// the model uses.
IncidenceReport measure_incidence(std::span<const SurgeryRecord> records, std::size_t persistent_minutes = 5,
                                  std::size_t spo2_channel = kDefaultSpo2Channel);

}  // namespace hinet
