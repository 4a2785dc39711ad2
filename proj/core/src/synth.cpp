#include "hinet/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>

#include "hinet/rng.hpp"

namespace hinet {

namespace {

struct ChannelModel {
  double mean;
  double noise_sd;     // stationary sd of the within-surgery fluctuation
  double offset_sd;    // between-surgery spread of the baseline
  double resolution;   // rounding step of the recorded value
  double lo, hi;
};

// Order matches default_channel_names().
constexpr std::array<ChannelModel, kDefaultChannels> kChannels = {{
    {45, 3, 8, 1, 15, 110},        // ibp_diastolic
    {65, 3, 9, 1, 25, 140},        // ibp_mean
    {100, 4, 12, 1, 40, 200},      // ibp_systolic
    {45, 3, 8, 1, 15, 110},        // nibp_diastolic
    {65, 3, 9, 1, 25, 140},        // nibp_mean
    {100, 4, 12, 1, 40, 200},      // nibp_systolic
    {105, 3, 15, 1, 40, 220},      // heart_rate
    {98.2, 0.6, 0.8, 1, 30, 100},  // spo2
    {20, 1, 4, 1, 4, 60},          // respiratory_rate
    {5, 0.3, 1, 0.1, 0, 20},       // peep
    {18, 1, 3, 0.1, 5, 50},        // peak_resp_pressure
    {250, 10, 80, 1, 20, 900},     // tidal_volume
    {105, 3, 15, 1, 40, 220},      // pulse
    {38, 1, 3, 0.1, 15, 80},       // etco2
    {1.5, 0.1, 0.5, 0.1, 0, 10},   // o2_flow
    {0.5, 0.1, 0.4, 0.1, 0, 10},   // n2o_flow
    {1.5, 0.1, 0.5, 0.1, 0, 10},   // air_flow
    {36.5, 0.05, 0.4, 0.01, 33, 40},  // temperature
}};

constexpr std::size_t kHeartRate = 6, kSpo2 = 7, kResp = 8, kPeak = 10, kTidal = 11, kPulse = 12, kEtco2 = 13;
constexpr double kRevert = 0.3;

enum class Phase { baseline, precursor, event, recovery };

struct Schedule {
  std::vector<Phase> phase;
  std::vector<double> progress;  // precursor 0 -> 1, recovery 1 -> 0
  std::vector<double> depth;     // 1 for scheduled events, < 1 for decoys
};

void place_episode(Schedule& s, std::size_t start, std::size_t precursor, std::size_t duration, double depth) {
  const std::size_t T = s.phase.size();
  for (std::size_t k = 0; k < precursor; ++k) {
    const std::size_t t = start - precursor + k;
    s.phase[t] = Phase::precursor;
    s.progress[t] = static_cast<double>(k + 1) / static_cast<double>(precursor);
    s.depth[t] = depth;
  }
  for (std::size_t t = start; t < start + duration && t < T; ++t) {
    s.phase[t] = depth >= 1.0 ? Phase::event : Phase::precursor;
    s.progress[t] = 1.0;
    s.depth[t] = depth;
  }
  constexpr std::size_t kRecovery = 4;
  for (std::size_t k = 0; k < kRecovery; ++k) {
    const std::size_t t = start + duration + k;
    if (t >= T) break;
    s.phase[t] = Phase::recovery;
    s.progress[t] = 1.0 - static_cast<double>(k + 1) / static_cast<double>(kRecovery + 1);
    s.depth[t] = depth;
  }
}

double quantize(double v, const ChannelModel& m) {
  v = std::clamp(v, m.lo, m.hi);
  return std::round(v / m.resolution) * m.resolution;
}

}  // namespace

SurgeryRecord synth_surgery(const SynthSpec& spec, std::size_t index) {
  Rng rng(spec.seed, 1000 + index);

  // Outcome for this surgery: persistent, general-only, or event-free.
  const double general_only =
      (spec.general_incidence - spec.persistent_incidence) / (1.0 - spec.persistent_incidence);
  const double draw = rng.uniform();
  const bool persistent = draw < spec.persistent_incidence;
  const bool general = !persistent && rng.uniform() < general_only;
  const bool decoy = !persistent && !general && rng.uniform() < spec.decoy_rate;

  std::size_t T = 30 + static_cast<std::size_t>(std::round(-std::log(1.0 - rng.uniform()) * (spec.mean_duration - 30.0)));
  T = std::min<std::size_t>(T, 480);

  const std::size_t precursor = 10 + rng.below(6);
  const std::size_t duration = persistent ? 5 + rng.below(11) : 1 + rng.below(4);
  const std::size_t lead = 12;  // earliest precursor start
  if ((persistent || general || decoy) && T < lead + precursor + duration + 8) T = lead + precursor + duration + 8;

  Schedule sched{std::vector<Phase>(T, Phase::baseline), std::vector<double>(T, 0.0), std::vector<double>(T, 0.0)};
  if (persistent || general || decoy) {
    const std::size_t earliest = lead + precursor;
    const std::size_t latest = T - duration - 6;
    const std::size_t start = earliest + rng.below(latest - earliest + 1);
    place_episode(sched, start, precursor, duration, decoy ? rng.uniform(0.35, 0.6) : 1.0);
    // Occasionally a second short dip later in the case.
    if (!decoy && rng.uniform() < 0.2) {
      const std::size_t p2 = 10 + rng.below(6);
      const std::size_t d2 = 1 + rng.below(4);
      const std::size_t earliest2 = start + duration + 6 + p2;
      if (earliest2 + d2 + 6 < T) {
        const std::size_t s2 = earliest2 + rng.below(T - d2 - 6 - earliest2);
        place_episode(sched, s2, p2, d2, 1.0);
      }
    }
  }

  SurgeryRecord rec("s" + std::to_string(index), kDefaultChannels, T);
  std::array<double, kDefaultChannels> baseline{};
  for (std::size_t c = 0; c < kDefaultChannels; ++c) baseline[c] = kChannels[c].mean + rng.normal(0.0, kChannels[c].offset_sd);
  baseline[kSpo2] = std::clamp(baseline[kSpo2], 95.5, 99.8);
  baseline[kPulse] = baseline[kHeartRate];

  std::array<double, kDefaultChannels> noise{};
  const double innovation = std::sqrt(1.0 - (1.0 - kRevert) * (1.0 - kRevert));
  for (std::size_t t = 0; t < T; ++t) {
    const double r = sched.progress[t] * sched.depth[t];
    std::array<double, kDefaultChannels> shift{};
    switch (sched.phase[t]) {
      case Phase::baseline:
        break;
      case Phase::precursor:
      case Phase::recovery:
        shift[kSpo2] = -r * (baseline[kSpo2] - 92.0);
        shift[kResp] = 7.0 * r;
        shift[kTidal] = -0.3 * r * baseline[kTidal];
        shift[kHeartRate] = 9.0 * r;
        shift[kEtco2] = 3.5 * r;
        shift[kPeak] = 3.0 * r;
        break;
      case Phase::event:
        shift[kResp] = 9.0;
        shift[kTidal] = -0.35 * baseline[kTidal];
        shift[kHeartRate] = 12.0;
        shift[kEtco2] = 4.5;
        shift[kPeak] = 4.0;
        break;
    }
    shift[kPulse] = shift[kHeartRate];
    for (std::size_t c = 0; c < kDefaultChannels; ++c) {
      noise[c] = (1.0 - kRevert) * noise[c] + innovation * kChannels[c].noise_sd * rng.normal();
      double v = baseline[c] + shift[c] + noise[c];
      if (c == kPulse) v = rec.at(kHeartRate, t) + rng.normal(0.0, 1.0);
      if (c == kSpo2) {
        if (sched.phase[t] == Phase::event) v = 84.0 + static_cast<double>(rng.below(7));
        else v = std::clamp(v, 91.0, 100.0);
      }
      rec.at(c, t) = quantize(v, kChannels[c]);
      rec.observed[c * T + t] = 1;
    }
  }

  // Missingness and SpO2 artefacts; event minutes keep their SpO2 reading.
  for (std::size_t c = 0; c < kDefaultChannels; ++c) {
    const double rate = c < spec.channel_missing_rates.size() ? spec.channel_missing_rates[c] : spec.missing_rate;
    for (std::size_t t = 0; t < T; ++t) {
      const bool protect = c == kSpo2 && sched.phase[t] == Phase::event;
      if (rate > 0.0 && rng.uniform() < rate && !protect) {
        rec.observed[c * T + t] = 0;
        rec.at(c, t) = 0.0;
      }
    }
  }
  if (spec.aberrant_rate > 0.0)
    for (std::size_t t = 0; t < T; ++t)
      if (sched.phase[t] == Phase::baseline && rec.is_observed(kSpo2, t) && rng.uniform() < spec.aberrant_rate)
        rec.at(kSpo2, t) = 30.0 + static_cast<double>(rng.below(25));
  return rec;
}

std::vector<SurgeryRecord> synth_generate(const SynthSpec& spec) {
  if (spec.surgeries == 0) throw std::invalid_argument("cohort must contain at least one surgery");
  auto in_unit = [](double p) { return p > 0.0 && p < 1.0; };
  if (!in_unit(spec.general_incidence) || !in_unit(spec.persistent_incidence))
    throw std::invalid_argument("incidence targets must lie in (0, 1)");
  if (spec.persistent_incidence > spec.general_incidence)
    throw std::invalid_argument("persistent incidence cannot exceed general incidence");
  if (spec.mean_duration <= 30.0) throw std::invalid_argument("mean duration must exceed 30 minutes");
  std::vector<SurgeryRecord> out;
  out.reserve(spec.surgeries);
  for (std::size_t i = 0; i < spec.surgeries; ++i) out.push_back(synth_surgery(spec, i));
  return out;
}

IncidenceReport measure_incidence(std::span<const SurgeryRecord> records, std::size_t persistent_minutes,
                                  std::size_t spo2_channel) {
  IncidenceReport rep;
  rep.surgeries = records.size();
  std::size_t general = 0, persistent = 0, low = 0;
  for (const auto& r : records) {
    const SurgeryRecord imp = impute(r, spo2_channel);
    std::vector<double> spo2(r.minutes);
    for (std::size_t t = 0; t < r.minutes; ++t)
      spo2[t] = imp.is_available(spo2_channel, t) ? imp.at(spo2_channel, t) : std::nan("");
    for (double v : spo2) low += v <= kLowSpo2Percent ? 1 : 0;
    general += label_events(spo2, Outcome::general).empty() ? 0 : 1;
    persistent += label_events(spo2, Outcome::persistent, persistent_minutes).empty() ? 0 : 1;
    rep.minutes += r.minutes;
  }
  if (rep.surgeries > 0) {
    rep.general_incidence = static_cast<double>(general) / static_cast<double>(rep.surgeries);
    rep.persistent_incidence = static_cast<double>(persistent) / static_cast<double>(rep.surgeries);
  }
  if (rep.minutes > 0) rep.low_minute_fraction = static_cast<double>(low) / static_cast<double>(rep.minutes);
  return rep;
}

}  // namespace hinet
