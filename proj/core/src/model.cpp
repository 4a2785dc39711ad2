#include "hinet/model.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace hinet {

Variant parse_variant(const std::string& name) {
  if (name == "full") return Variant::full;
  if (name == "mem_minus") return Variant::mem_minus;
  if (name == "f_minus") return Variant::f_minus;
  if (name == "r_plus_f") return Variant::r_plus_f;
  throw std::invalid_argument("unknown variant '" + name + "' (expected full, mem_minus, f_minus or r_plus_f)");
}

std::string to_string(Variant variant) {
  switch (variant) {
    case Variant::full: return "full";
    case Variant::mem_minus: return "mem_minus";
    case Variant::f_minus: return "f_minus";
    case Variant::r_plus_f: return "r_plus_f";
  }
  return "full";
}

HiNetConfig HiNetConfig::defaults_for(Outcome outcome) {
  HiNetConfig c;
  c.outcome = outcome;
  c.prediction_horizon = 5;
  if (outcome == Outcome::persistent) {
    c.observation_window = 32;
    c.forecast_horizon = c.prediction_horizon + 5;
    c.lambda = 0.1;
  } else {
    c.observation_window = 16;
    c.forecast_horizon = c.prediction_horizon + 1;
    c.lambda = 0.01;
  }
  return c;
}

void HiNetConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ParameterError("invalid config: " + msg); };
  if (observation_window == 0) fail("observation_window must be positive");
  if (prediction_horizon == 0) fail("prediction_horizon must be positive");
  if (persistent_minutes == 0) fail("persistent_minutes must be positive");
  if (channels == 0) fail("channels must be positive");
  if (spo2_channel >= channels) fail("spo2_channel out of range");
  if (memory_bases == 0 || filters == 0 || fc_hidden == 0 || kernel_size == 0) fail("layer sizes must be positive");
  if (dilations.empty()) fail("dilations must not be empty");
  for (std::size_t i = 0; i < dilations.size(); ++i) {
    const std::size_t d = dilations[i];
    if (d == 0 || (d & (d - 1)) != 0) fail("dilations must be powers of two");
    if (i > 0 && d <= dilations[i - 1]) fail("dilations must be strictly increasing");
  }
  if (!(lambda >= 0.0)) fail("lambda must be non-negative");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
}

PipelineConfig HiNetConfig::pipeline() const {
  return PipelineConfig{outcome, prediction_horizon, persistent_minutes, spo2_channel};
}

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::size_t parse_size(const std::string& key, const std::string& value) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    if (!value.empty() && value[0] == '-') throw std::invalid_argument("negative");
    v = std::stoull(value, &pos);
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + key + "': expected a non-negative integer, got '" + value + "'");
  }
  if (pos != value.size())
    throw std::invalid_argument("config key '" + key + "': expected a non-negative integer, got '" + value + "'");
  return static_cast<std::size_t>(v);
}

double parse_double(const std::string& key, const std::string& value) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(value, &pos);
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + key + "': expected a number, got '" + value + "'");
  }
  if (pos != value.size()) throw std::invalid_argument("config key '" + key + "': expected a number, got '" + value + "'");
  return v;
}

}  // namespace

void HiNetConfig::set(const std::string& key, const std::string& value) {
  if (key == "outcome") outcome = parse_outcome(value);
  else if (key == "variant") variant = parse_variant(value);
  else if (key == "observation_window") observation_window = parse_size(key, value);
  else if (key == "prediction_horizon") prediction_horizon = parse_size(key, value);
  else if (key == "forecast_horizon") forecast_horizon = parse_size(key, value);
  else if (key == "persistent_minutes") persistent_minutes = parse_size(key, value);
  else if (key == "channels") channels = parse_size(key, value);
  else if (key == "spo2_channel") spo2_channel = parse_size(key, value);
  else if (key == "memory_bases") memory_bases = parse_size(key, value);
  else if (key == "filters") filters = parse_size(key, value);
  else if (key == "kernel_size") kernel_size = parse_size(key, value);
  else if (key == "fc_hidden") fc_hidden = parse_size(key, value);
  else if (key == "lambda") lambda = parse_double(key, value);
  else if (key == "dropout") dropout = parse_double(key, value);
  else if (key == "seed") seed = parse_size(key, value);
  else if (key == "dilations") {
    dilations.clear();
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) dilations.push_back(parse_size(key, item));
  } else {
    throw std::invalid_argument("unknown config key '" + key + "'");
  }
}

std::string HiNetConfig::to_text() const {
  std::ostringstream os;
  os << "outcome=" << to_string(outcome) << '\n'
     << "variant=" << to_string(variant) << '\n'
     << "observation_window=" << observation_window << '\n'
     << "prediction_horizon=" << prediction_horizon << '\n'
     << "forecast_horizon=" << forecast_horizon << '\n'
     << "persistent_minutes=" << persistent_minutes << '\n'
     << "channels=" << channels << '\n'
     << "spo2_channel=" << spo2_channel << '\n'
     << "memory_bases=" << memory_bases << '\n'
     << "filters=" << filters << '\n'
     << "kernel_size=" << kernel_size << '\n';
  os << "dilations=";
  for (std::size_t i = 0; i < dilations.size(); ++i) os << (i ? "," : "") << dilations[i];
  os << '\n'
     << "fc_hidden=" << fc_hidden << '\n'
     << "lambda=" << format_double(lambda) << '\n'
     << "dropout=" << format_double(dropout) << '\n'
     << "seed=" << seed << '\n';
  return os.str();
}

HiNetConfig HiNetConfig::from_text(const std::string& text) {
  HiNetConfig c;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("config line without '=': " + line);
    c.set(line.substr(0, eq), line.substr(eq + 1));
  }
  return c;
}

HiNetParams HiNetParams::create(const HiNetConfig& config) {
  config.validate();
  const Rng root(config.seed, 0x41e7);
  Rng r_memory = root.split(1), r_free = root.split(2), r_enc = root.split(3), r_rec = root.split(4),
      r_trans = root.split(5), r_fore = root.split(6), r_pred = root.split(7);
  const std::size_t V = config.channels, F = config.filters, M = config.memory_bases, H = config.fc_hidden;
  HiNetParams p;
  p.config = config;
  p.memory = MemoryBank::create(M, V, r_memory);
  p.memory_free_in = Linear::create(V, M, r_free);
  p.memory_free_out = Linear::create(M, V, r_free);
  p.encoder = TcnStack::create(V, F, config.kernel_size, config.dilations, config.dropout, r_enc);
  p.reconstructor = TcnStack::create(F, F, config.kernel_size, config.dilations, config.dropout, r_rec);
  p.reconstruct_out = Linear::create(F, V, r_rec);
  p.transition = FcBlock::create(F, H, F, r_trans);
  p.forecaster = TcnStack::create(F, F, config.kernel_size, config.dilations, config.dropout, r_fore);
  p.emission = Linear::create(F, 2, r_fore);
  p.crf = CrfParams::create(2);
  p.predictor = FcBlock::create(F, H, 2, r_pred);
  return p;
}

ParameterList HiNetParams::parameters() const {
  ParameterList out;
  if (config.has_memory()) {
    memory.collect("encoder.memory", out);
  } else {
    memory_free_in.collect("encoder.linear_in", out);
    memory_free_out.collect("encoder.linear_out", out);
  }
  encoder.collect("encoder.tcn", out);
  reconstructor.collect("reconstructor.tcn", out);
  reconstruct_out.collect("reconstructor.output", out);
  transition.collect("transition", out);
  if (config.has_forecaster()) {
    forecaster.collect("forecaster.tcn", out);
    emission.collect("forecaster.emission", out);
    crf.collect("forecaster.crf", out);
  }
  if (config.has_predictor()) predictor.collect("predictor", out);
  return out;
}

std::vector<Tensor> HiNetParams::trainable() const {
  std::vector<Tensor> out;
  for (auto& np : parameters()) out.push_back(np.tensor);
  return out;
}

HiNetParams HiNetParams::clone() const {
  HiNetParams copy = create(config);
  const auto src = parameters();
  auto dst = copy.parameters();
  for (std::size_t i = 0; i < src.size(); ++i) {
    auto out = dst[i].tensor.mutable_data();
    std::copy(src[i].tensor.data().begin(), src[i].tensor.data().end(), out.begin());
  }
  return copy;
}

Tensor encode(const HiNetParams& params, const Tensor& x, Mode mode, Rng* rng) {
  const auto& c = params.config;
  if (x.rank() < 2 || x.dim(0) != c.channels || x.shape().back() != c.observation_window)
    throw DimensionError("encode: expected [" + std::to_string(c.channels) + ", (N,) " +
                         std::to_string(c.observation_window) + "] input, got " + to_string(x.shape()));
  const Tensor embedded = c.has_memory() ? memory_encode(params.memory, x).output
                                         : params.memory_free_out.forward(params.memory_free_in.forward(x));
  return tcn_encode(params.encoder, embedded, mode, rng).last;
}

Tensor reconstruct(const HiNetParams& params, const Tensor& z, Mode mode, Rng* rng) {
  const Tensor g = params.reconstructor.forward(repeat_steps(z, params.config.observation_window), mode, rng);
  return params.reconstruct_out.forward(g);
}

Tensor transition(const HiNetParams& params, const Tensor& z) { return params.transition.forward(z); }

Tensor forecast_emissions(const HiNetParams& params, const Tensor& p, Mode mode, Rng* rng) {
  if (!params.config.has_forecaster()) throw ContractError("forecast requested from a model without a Forecaster");
  const Tensor r = params.forecaster.forward(repeat_steps(p, params.config.observation_window), mode, rng);
  return params.emission.forward(r);
}

Tensor predict(const HiNetParams& params, const Tensor& p) {
  if (!params.config.has_predictor()) throw ContractError("prediction requested from a model without a Predictor");
  return select_row(softmax(params.predictor.forward(p), 0), 1);
}

ForwardOutputs forward(const HiNetParams& params, const Tensor& x, Mode mode, Rng* rng) {
  ForwardOutputs out;
  out.z = encode(params, x, mode, rng);
  out.reconstruction = reconstruct(params, out.z, mode, rng);
  out.p = transition(params, out.z);
  if (params.config.has_forecaster()) out.emissions = forecast_emissions(params, out.p, mode, rng);
  if (params.config.has_predictor()) {
    out.logits = params.predictor.forward(out.p);
    out.probability = select_row(softmax(out.logits, 0), 1);
  }
  return out;
}

Tensor masked_predictor_loss(const Tensor& probability, std::span<const double> labels, std::span<const double> mask) {
  if (labels.size() != mask.size()) throw DimensionError("masked_predictor_loss: labels and mask differ in length");
  std::vector<double> masked_labels(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) masked_labels[i] = mask[i] * labels[i];
  return binary_cross_entropy(probability, masked_labels, mask);
}

Tensor joint_loss(const Tensor& predictor_loss, const Tensor& forecaster_loss, const Tensor& reconstruction_loss,
                  double lambda) {
  if (!(lambda >= 0.0)) throw ParameterError("joint_loss: lambda must be non-negative");
  Tensor decoders;
  if (forecaster_loss.defined()) decoders = forecaster_loss;
  if (reconstruction_loss.defined()) decoders = decoders.defined() ? decoders + reconstruction_loss : reconstruction_loss;
  if (!predictor_loss.defined()) {
    if (!decoders.defined()) throw ContractError("joint_loss: no loss terms");
    return scale(decoders, lambda);
  }
  if (!decoders.defined()) return predictor_loss;
  return predictor_loss + scale(decoders, lambda);
}

namespace {

WindowBatch allocate_batch(std::size_t n, const HiNetConfig& c) {
  WindowBatch b;
  b.x = Tensor(Shape{c.channels, n, c.observation_window});
  b.y.resize(n);
  b.m.resize(n);
  b.u.resize(n * c.observation_window);
  b.forecast_weight.resize(n);
  return b;
}

}  // namespace

WindowBatch make_batch(std::span<const WindowRef> windows, const HiNetConfig& config) {
  const std::size_t n = windows.size(), W = config.observation_window;
  WindowBatch b = allocate_batch(n, config);
  double* x = b.x.mutable_data().data();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = *windows[i].surgery;
    const std::size_t t = windows[i].minute;
    if (s.channels != config.channels)
      throw DimensionError("surgery " + s.id + " has " + std::to_string(s.channels) + " channels, model expects " +
                           std::to_string(config.channels));
    write_window(s, t, W, x + i * W, n * W);
    b.y[i] = s.labels.y[t];
    b.m[i] = s.labels.m[t];
    const auto u = forecast_target(s, t, config.windows());
    std::copy(u.begin(), u.end(), b.u.begin() + static_cast<std::ptrdiff_t>(i * W));
    b.forecast_weight[i] = t + config.forecast_horizon >= s.minutes ? 0.0 : 1.0;
  }
  return b;
}

WindowBatch make_batch(std::span<const WindowSample> samples, const HiNetConfig& config) {
  const std::size_t n = samples.size(), W = config.observation_window, V = config.channels;
  WindowBatch b = allocate_batch(n, config);
  double* x = b.x.mutable_data().data();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = samples[i];
    if (s.x.size() != V * W || s.u.size() != W) throw DimensionError("window sample does not match the model config");
    for (std::size_t c = 0; c < V; ++c) std::copy_n(s.x.data() + c * W, W, x + c * n * W + i * W);
    b.y[i] = s.y;
    b.m[i] = s.m;
    std::copy(s.u.begin(), s.u.end(), b.u.begin() + static_cast<std::ptrdiff_t>(i * W));
    b.forecast_weight[i] = s.future_truncated ? 0.0 : 1.0;
  }
  return b;
}

BatchLosses batch_losses(const HiNetParams& params, const WindowBatch& batch, Mode mode, Rng* rng, double normaliser) {
  const auto& c = params.config;
  const ForwardOutputs out = forward(params, batch.x, mode, rng);
  const double inv = 1.0 / normaliser;
  BatchLosses l;
  if (c.has_predictor()) l.predictor = scale(masked_predictor_loss(out.probability, batch.y, batch.m), inv);
  if (c.has_forecaster()) l.forecaster = scale(crf_nll(out.emissions, batch.u, params.crf, batch.forecast_weight), inv);
  l.reconstruction = scale(mse_loss(batch.x, out.reconstruction), static_cast<double>(batch.size()) * inv);
  // Without a Predictor the decoder losses are the whole objective.
  l.total = joint_loss(l.predictor, l.forecaster, l.reconstruction, c.has_predictor() ? c.lambda : 1.0);
  return l;
}

namespace {

template <typename Fn>
void for_each_chunk(const PreparedSurgery& surgery, const HiNetConfig& config, std::size_t chunk, Fn&& fn) {
  if (surgery.channels != config.channels)
    throw DimensionError("surgery " + surgery.id + " has " + std::to_string(surgery.channels) +
                         " channels, model expects " + std::to_string(config.channels));
  chunk = std::max<std::size_t>(chunk, 1);
  std::vector<WindowRef> refs;
  for (std::size_t start = 0; start < surgery.minutes; start += chunk) {
    const std::size_t end = std::min(surgery.minutes, start + chunk);
    refs.clear();
    for (std::size_t t = start; t < end; ++t) refs.push_back({&surgery, t});
    fn(start, make_batch(refs, config));
  }
}

}  // namespace

std::vector<double> infer_stream(const HiNetParams& params, const PreparedSurgery& surgery, std::size_t chunk) {
  NoGradGuard no_grad;
  std::vector<double> scores(surgery.minutes);
  for_each_chunk(surgery, params.config, chunk, [&](std::size_t start, const WindowBatch& b) {
    const Tensor prob = predict(params, transition(params, encode(params, b.x)));
    std::copy(prob.data().begin(), prob.data().end(), scores.begin() + static_cast<std::ptrdiff_t>(start));
  });
  return scores;
}

LatentTrace infer_latents(const HiNetParams& params, const PreparedSurgery& surgery, std::size_t chunk) {
  NoGradGuard no_grad;
  const std::size_t F = params.config.filters;
  LatentTrace trace;
  trace.width = F;
  trace.z.resize(surgery.minutes * F);
  trace.p.resize(surgery.minutes * F);
  for_each_chunk(surgery, params.config, chunk, [&](std::size_t start, const WindowBatch& b) {
    const Tensor z = encode(params, b.x);
    const Tensor p = transition(params, z);
    const std::size_t n = b.size();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t f = 0; f < F; ++f) {
        trace.z[(start + i) * F + f] = z[f * n + i];
        trace.p[(start + i) * F + f] = p[f * n + i];
      }
  });
  return trace;
}

bool forecast_alarm(std::span<const int> decoded, const HiNetConfig& config) {
  const std::size_t W = config.observation_window, L = config.forecast_horizon, Wh = config.prediction_horizon;
  if (decoded.size() != W) throw DimensionError("forecast_alarm: decoded path length differs from the window");
  // Index k of the forecast window covers minute t - W + 1 + k + L, so the
  // horizon (t, t + W_h] is k in [W - L, W - L + W_h - 1].
  if (L == 0 || W < L) return false;
  const std::size_t lo = W - L;
  const std::size_t hi = std::min(W - 1, W - L + Wh - 1);
  const std::size_t need = min_event_minutes(config.outcome, config.persistent_minutes);
  std::size_t k = 0;
  while (k < W) {
    if (decoded[k] != 1) {
      ++k;
      continue;
    }
    std::size_t end = k;
    while (end + 1 < W && decoded[end + 1] == 1) ++end;
    if (end - k + 1 >= need && end >= lo && k <= hi) return true;
    k = end + 1;
  }
  return false;
}

std::vector<std::uint8_t> detect_from_forecast(const HiNetParams& params, const PreparedSurgery& surgery,
                                               std::size_t chunk) {
  if (params.config.variant != Variant::r_plus_f)
    throw ContractError("detect_from_forecast needs a model trained as r_plus_f, got " + to_string(params.config.variant));
  NoGradGuard no_grad;
  std::vector<std::uint8_t> alarms(surgery.minutes, 0);
  for_each_chunk(surgery, params.config, chunk, [&](std::size_t start, const WindowBatch& b) {
    const Tensor em = forecast_emissions(params, transition(params, encode(params, b.x)));
    const auto paths = crf_viterbi_batch(em, params.crf);
    for (std::size_t i = 0; i < paths.size(); ++i) alarms[start + i] = forecast_alarm(paths[i], params.config) ? 1 : 0;
  });
  return alarms;
}

}  // namespace hinet
