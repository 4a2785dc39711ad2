#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "hinet/crf.hpp"
#include "hinet/data.hpp"
#include "hinet/layers.hpp"

namespace hinet {

/// Which decoders are present.
///   full      memory encoder + Reconstructor + Forecaster + Predictor
///   mem_minus memory encoding replaced by two stacked per-step linear layers
///   f_minus   Forecaster removed
///   r_plus_f  Predictor removed; alarms come from the decoded forecast
enum class Variant { full, mem_minus, f_minus, r_plus_f };

Variant parse_variant(const std::string& name);
std::string to_string(Variant variant);

struct HiNetConfig {
  Outcome outcome = Outcome::general;
  Variant variant = Variant::full;
  std::size_t observation_window = 16;  // W_o
  std::size_t prediction_horizon = 5;   // W_h
  std::size_t forecast_horizon = 6;     // L
  std::size_t persistent_minutes = 5;
  std::size_t channels = kDefaultChannels;
  std::size_t spo2_channel = kDefaultSpo2Channel;
  std::size_t memory_bases = 128;
  std::size_t filters = 64;
  std::size_t kernel_size = 3;
  std::vector<std::size_t> dilations{2, 4, 8};
  std::size_t fc_hidden = 128;
  double lambda = 0.01;
  double dropout = 0.2;
  std::uint64_t seed = 1;

  /// Window, horizon and lambda defaults for the outcome.
  static HiNetConfig defaults_for(Outcome outcome);

  bool has_memory() const { return variant != Variant::mem_minus; }
  bool has_forecaster() const { return variant != Variant::f_minus; }
  bool has_predictor() const { return variant != Variant::r_plus_f; }
  bool has_reconstructor() const { return true; }

  void validate() const;
  PipelineConfig pipeline() const;
  WindowConfig windows() const { return {observation_window, forecast_horizon}; }

  /// key=value lines; round-trips through from_text.
  std::string to_text() const;
  static HiNetConfig from_text(const std::string& text);
  /// Applies one textual key; unknown keys throw std::invalid_argument.
  void set(const std::string& key, const std::string& value);
};

/// Every learnable array of the model, grouped by component.
struct HiNetParams {
  HiNetConfig config;
  // Encoder
  MemoryBank memory;
  Linear memory_free_in;   // mem_minus: V -> M
  Linear memory_free_out;  // mem_minus: M -> V
  TcnStack encoder;
  // Reconstructor
  TcnStack reconstructor;
  Linear reconstruct_out;
  // State transition
  FcBlock transition;
  // Forecaster
  TcnStack forecaster;
  Linear emission;
  CrfParams crf;
  // Event predictor
  FcBlock predictor;

  static HiNetParams create(const HiNetConfig& config);

  /// Parameters used by the configured variant, each exactly once.
  ParameterList parameters() const;
  std::vector<Tensor> trainable() const;
  /// Independent deep copy.
  HiNetParams clone() const;
};

struct ForwardOutputs {
  Tensor z;               // [F, N]
  Tensor p;               // [F, N]
  Tensor reconstruction;  // [V, N, W_o]
  Tensor emissions;       // [2, N, W_o], undefined without a Forecaster
  Tensor logits;          // [2, N], undefined without a Predictor
  Tensor probability;     // [N] positive-class probability
};

// Each stage accepts a single window ([V, W_o] / [F]) or a batch ([V, N, W_o] / [F, N]).
Tensor encode(const HiNetParams& params, const Tensor& x, Mode mode = Mode::eval, Rng* rng = nullptr);
Tensor reconstruct(const HiNetParams& params, const Tensor& z, Mode mode = Mode::eval, Rng* rng = nullptr);
Tensor transition(const HiNetParams& params, const Tensor& z);
Tensor forecast_emissions(const HiNetParams& params, const Tensor& p, Mode mode = Mode::eval, Rng* rng = nullptr);
/// Softmax over the two predictor logits; returns the positive-class row.
Tensor predict(const HiNetParams& params, const Tensor& p);

ForwardOutputs forward(const HiNetParams& params, const Tensor& x, Mode mode = Mode::eval, Rng* rng = nullptr);

/// sum_i H(m_i y_i, m_i yhat_i); m_i = 0 contributes exactly nothing.
Tensor masked_predictor_loss(const Tensor& probability, std::span<const double> labels, std::span<const double> mask);

/// L_P + lambda (L_F + L_R); undefined tensors stand for absent branches.
Tensor joint_loss(const Tensor& predictor_loss, const Tensor& forecaster_loss, const Tensor& reconstruction_loss,
                  double lambda);

/// A batch of windows in model layout.
struct WindowBatch {
  Tensor x;                    // [V, N, W_o]
  std::vector<double> y;       // [N]
  std::vector<double> m;       // [N]
  std::vector<int> u;          // [N * W_o]
  std::vector<double> forecast_weight;  // 0 for truncated futures
  std::size_t size() const { return y.size(); }
};

struct WindowRef {
  const PreparedSurgery* surgery;
  std::size_t minute;
};

WindowBatch make_batch(std::span<const WindowRef> windows, const HiNetConfig& config);
WindowBatch make_batch(std::span<const WindowSample> samples, const HiNetConfig& config);

struct BatchLosses {
  Tensor total;
  Tensor predictor;
  Tensor forecaster;
  Tensor reconstruction;
};

/// Joint loss of a batch, each term divided by `normaliser` (the full
/// optimisation batch size) so micro-batches accumulate to the batch mean.
BatchLosses batch_losses(const HiNetParams& params, const WindowBatch& batch, Mode mode, Rng* rng, double normaliser);

/// Positive-class probability for every minute of the surgery.
std::vector<double> infer_stream(const HiNetParams& params, const PreparedSurgery& surgery,
                                 std::size_t chunk = 1024);

/// Latent vectors z and p per minute, row-major [T, F].
struct LatentTrace {
  std::vector<double> z;
  std::vector<double> p;
  std::size_t width = 0;
};
LatentTrace infer_latents(const HiNetParams& params, const PreparedSurgery& surgery, std::size_t chunk = 1024);

/// Forecast-then-detect alarms for the r_plus_f variant.
///
/// The Viterbi path over the forecast window is read on the minutes
/// (t, t + W_h]; an alarm fires when a run of low labels at least as long
/// as the outcome's event length overlaps those minutes.
std::vector<std::uint8_t> detect_from_forecast(const HiNetParams& params, const PreparedSurgery& surgery,
                                               std::size_t chunk = 1024);

/// Alarm rule applied to one decoded forecast window.
bool forecast_alarm(std::span<const int> decoded, const HiNetConfig& config);

}  // namespace hinet
