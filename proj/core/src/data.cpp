#include "hinet/data.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hinet/rng.hpp"

namespace hinet {

const std::vector<std::string>& default_channel_names() {
  static const std::vector<std::string> names = {
      "ibp_diastolic",  "ibp_mean",         "ibp_systolic",          "nibp_diastolic", "nibp_mean",
      "nibp_systolic",  "heart_rate",       "spo2",                  "respiratory_rate", "peep",
      "peak_resp_pressure", "tidal_volume", "pulse",                 "etco2",          "o2_flow",
      "n2o_flow",       "air_flow",         "temperature"};
  return names;
}

SurgeryRecord::SurgeryRecord(std::string id_, std::size_t channels_, std::size_t minutes_)
    : id(std::move(id_)),
      channels(channels_),
      minutes(minutes_),
      values(channels_ * minutes_, 0.0),
      observed(channels_ * minutes_, 0) {}

SurgeryRecord impute(const SurgeryRecord& record, std::size_t spo2_channel) {
  SurgeryRecord out = record;
  out.available.assign(record.values.size(), 0);
  for (std::size_t c = 0; c < record.channels; ++c) {
    bool have_last = false;
    std::size_t last_minute = 0;
    double last_value = 0.0;
    for (std::size_t t = 0; t < record.minutes; ++t) {
      const std::size_t i = c * record.minutes + t;
      bool obs = record.observed[i] != 0;
      if (obs && c == spo2_channel && record.values[i] < kAberrantSpo2Percent) {
        obs = false;
        out.observed[i] = 0;
      }
      if (obs) {
        have_last = true;
        last_minute = t;
        last_value = record.values[i];
        out.available[i] = 1;
      } else if (have_last && t - last_minute <= kCarryForwardMinutes) {
        out.values[i] = last_value;
        out.available[i] = 1;
      } else {
        out.values[i] = 0.0;
      }
    }
  }
  return out;
}

Normalizer fit_normalizer(std::span<const SurgeryRecord> imputed_train) {
  if (imputed_train.empty()) throw DataError("cannot fit a normalizer on an empty training set");
  const std::size_t channels = imputed_train.front().channels;
  std::vector<double> sum(channels, 0.0), count(channels, 0.0);
  for (const auto& r : imputed_train) {
    if (r.channels != channels) throw DataError("surgery " + r.id + " has a different channel count");
    if (r.available.size() != r.values.size()) throw DataError("surgery " + r.id + " has not been imputed");
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t t = 0; t < r.minutes; ++t)
        if (r.is_available(c, t)) {
          sum[c] += r.at(c, t);
          count[c] += 1.0;
        }
  }
  Normalizer n;
  n.mean.assign(channels, 0.0);
  n.stddev.assign(channels, 1.0);
  for (std::size_t c = 0; c < channels; ++c)
    if (count[c] > 0) n.mean[c] = sum[c] / count[c];
  std::vector<double> sq(channels, 0.0);
  for (const auto& r : imputed_train)
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t t = 0; t < r.minutes; ++t)
        if (r.is_available(c, t)) sq[c] += std::pow(r.at(c, t) - n.mean[c], 2);
  for (std::size_t c = 0; c < channels; ++c)
    if (count[c] > 0) n.stddev[c] = std::max(std::sqrt(sq[c] / count[c]), kStdFloor);
  return n;
}

SurgeryRecord apply_normalizer(const Normalizer& normalizer, const SurgeryRecord& imputed) {
  if (normalizer.mean.size() != imputed.channels)
    throw DataError("normalizer has " + std::to_string(normalizer.mean.size()) + " channels, surgery " + imputed.id +
                    " has " + std::to_string(imputed.channels));
  if (imputed.available.size() != imputed.values.size())
    throw DataError("surgery " + imputed.id + " has not been imputed");
  SurgeryRecord out = imputed;
  for (std::size_t c = 0; c < imputed.channels; ++c)
    for (std::size_t t = 0; t < imputed.minutes; ++t)
      out.at(c, t) = imputed.is_available(c, t)
                         ? (imputed.at(c, t) - normalizer.mean[c]) / normalizer.stddev[c]
                         : 0.0;
  return out;
}

Outcome parse_outcome(const std::string& name) {
  if (name == "general") return Outcome::general;
  if (name == "persistent") return Outcome::persistent;
  throw std::invalid_argument("unknown outcome '" + name + "' (expected general or persistent)");
}

std::string to_string(Outcome outcome) { return outcome == Outcome::general ? "general" : "persistent"; }

std::size_t min_event_minutes(Outcome outcome, std::size_t persistent_minutes) {
  return outcome == Outcome::general ? 1 : persistent_minutes;
}

std::vector<EventInterval> label_events(std::span<const double> spo2_percent, Outcome outcome,
                                        std::size_t persistent_minutes) {
  const std::size_t min_len = min_event_minutes(outcome, persistent_minutes);
  std::vector<EventInterval> events;
  std::size_t t = 0;
  const std::size_t n = spo2_percent.size();
  while (t < n) {
    if (!(spo2_percent[t] <= kLowSpo2Percent)) {
      ++t;
      continue;
    }
    std::size_t end = t;
    while (end + 1 < n && spo2_percent[end + 1] <= kLowSpo2Percent) ++end;
    if (end - t + 1 >= min_len) events.push_back({t, end});
    t = end + 1;
  }
  return events;
}

MinuteLabels assign_labels_and_mask(std::span<const EventInterval> events, std::size_t minutes,
                                    std::size_t prediction_horizon) {
  MinuteLabels labels{std::vector<std::uint8_t>(minutes, 0), std::vector<std::uint8_t>(minutes, 1)};
  for (const auto& e : events) {
    const std::size_t from = e.start >= prediction_horizon ? e.start - prediction_horizon : 0;
    for (std::size_t t = from; t < e.start && t < minutes; ++t) labels.y[t] = 1;
  }
  // Unlabelled minutes override any positive window that reaches into them.
  for (const auto& e : events)
    for (std::size_t t = e.start; t <= e.end && t < minutes; ++t) {
      labels.m[t] = 0;
      labels.y[t] = 0;
    }
  return labels;
}

PreparedSurgery prepare_surgery(const SurgeryRecord& raw, const Normalizer& normalizer, const PipelineConfig& config) {
  if (config.spo2_channel >= raw.channels)
    throw DataError("SpO2 channel " + std::to_string(config.spo2_channel) + " out of range for surgery " + raw.id);
  if (raw.minutes == 0) throw DataError("surgery " + raw.id + " has no minutes");
  const SurgeryRecord imputed = impute(raw, config.spo2_channel);
  PreparedSurgery p;
  p.id = raw.id;
  p.channels = raw.channels;
  p.minutes = raw.minutes;
  p.raw_spo2.resize(raw.minutes);
  p.low_spo2.resize(raw.minutes);
  for (std::size_t t = 0; t < raw.minutes; ++t) {
    p.raw_spo2[t] = imputed.is_available(config.spo2_channel, t) ? imputed.at(config.spo2_channel, t)
                                                                 : std::numeric_limits<double>::quiet_NaN();
    p.low_spo2[t] = p.raw_spo2[t] <= kLowSpo2Percent ? 1 : 0;
  }
  p.events = label_events(p.raw_spo2, config.outcome, config.persistent_minutes);
  p.labels = assign_labels_and_mask(p.events, raw.minutes, config.prediction_horizon);
  p.values = apply_normalizer(normalizer, imputed).values;
  return p;
}

void write_window(const PreparedSurgery& surgery, std::size_t minute, std::size_t observation_window, double* dst,
                  std::size_t channel_stride) {
  // Column k holds minute t - W_o + 1 + k.
  const std::size_t first_valid = minute + 1 >= observation_window ? 0 : observation_window - minute - 1;
  for (std::size_t c = 0; c < surgery.channels; ++c) {
    double* row = dst + c * channel_stride;
    std::fill(row, row + first_valid, 0.0);
    const double* src = surgery.values.data() + c * surgery.minutes;
    for (std::size_t k = first_valid; k < observation_window; ++k) row[k] = src[minute + 1 + k - observation_window];
  }
}

std::vector<int> forecast_target(const PreparedSurgery& surgery, std::size_t minute, const WindowConfig& config) {
  std::vector<int> u(config.observation_window, 0);
  for (std::size_t k = 0; k < config.observation_window; ++k) {
    // tau = t - W_o + 1 + k + L, computed without going negative.
    const std::size_t plus = minute + 1 + k + config.forecast_horizon;
    if (plus < config.observation_window) continue;
    const std::size_t tau = plus - config.observation_window;
    if (tau < surgery.minutes) u[k] = surgery.low_spo2[tau];
  }
  return u;
}

std::vector<WindowSample> extract_windows(const PreparedSurgery& surgery, const WindowConfig& config) {
  if (config.observation_window == 0) throw std::invalid_argument("observation window must be positive");
  std::vector<WindowSample> samples(surgery.minutes);
  for (std::size_t t = 0; t < surgery.minutes; ++t) {
    auto& s = samples[t];
    s.x.resize(surgery.channels * config.observation_window);
    write_window(surgery, t, config.observation_window, s.x.data(), config.observation_window);
    s.y = surgery.labels.y[t];
    s.m = surgery.labels.m[t];
    s.u = forecast_target(surgery, t, config);
    s.future_truncated = t + config.forecast_horizon >= surgery.minutes;
    s.surgery_id = surgery.id;
    s.minute = t;
  }
  return samples;
}

CohortSplit split_cohort(std::span<const std::string> surgery_ids, std::uint64_t seed) {
  const std::size_t n = surgery_ids.size();
  if (n < 10) throw DataError("a cohort split needs at least 10 surgeries, got " + std::to_string(n));
  std::vector<std::string> ids(surgery_ids.begin(), surgery_ids.end());
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) throw DataError("duplicate surgery ids in cohort");
  Rng rng(seed, 0x5b117);
  rng.shuffle(std::span<std::string>(ids));
  const std::size_t n_train = n * 7 / 10;
  const std::size_t n_val = n / 10;
  CohortSplit split;
  split.train.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
  split.validation.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train),
                          ids.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  split.test.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), ids.end());
  return split;
}

}  // namespace hinet
