#include "hinet/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include "hinet/cohort_io.hpp"

namespace hinet {

namespace {

double value_or_zero(const Tensor& t) { return t.defined() ? t.item() : 0.0; }

void dump_batch(const std::filesystem::path& dir, std::size_t epoch, std::size_t batch_index,
                std::span<const WindowRef> refs, const BatchLosses& losses) {
  std::ostringstream os;
  os << "# non-finite loss at epoch " << epoch << " batch " << batch_index << ": total=" << value_or_zero(losses.total)
     << " predictor=" << value_or_zero(losses.predictor) << " forecaster=" << value_or_zero(losses.forecaster)
     << " reconstruction=" << value_or_zero(losses.reconstruction) << '\n';
  os << "surgery_id,minute,y,m\n";
  for (const auto& r : refs)
    os << r.surgery->id << ',' << r.minute << ',' << int(r.surgery->labels.y[r.minute]) << ','
       << int(r.surgery->labels.m[r.minute]) << '\n';
  atomic_write(dir / ("nan_batch_epoch" + std::to_string(epoch) + "_batch" + std::to_string(batch_index) + ".csv"),
               os.str());
}

}  // namespace

LossSummary evaluate_losses(const HiNetParams& params, const std::vector<PreparedSurgery>& surgeries,
                            std::size_t micro_batch) {
  NoGradGuard no_grad;
  LossSummary s;
  std::vector<WindowRef> refs;
  auto flush = [&] {
    if (refs.empty()) return;
    const WindowBatch b = make_batch(refs, params.config);
    const BatchLosses l = batch_losses(params, b, Mode::eval, nullptr, 1.0);
    s.predictor += value_or_zero(l.predictor);
    s.forecaster += value_or_zero(l.forecaster);
    s.reconstruction += value_or_zero(l.reconstruction);
    s.windows += b.size();
    refs.clear();
  };
  for (const auto& surgery : surgeries)
    for (std::size_t t = 0; t < surgery.minutes; ++t) {
      refs.push_back({&surgery, t});
      if (refs.size() >= micro_batch) flush();
    }
  flush();
  if (s.windows > 0) {
    const double n = static_cast<double>(s.windows);
    s.predictor /= n;
    s.forecaster /= n;
    s.reconstruction /= n;
  }
  const auto& c = params.config;
  s.total = c.has_predictor() ? s.predictor + c.lambda * (s.forecaster + s.reconstruction)
                              : s.forecaster + s.reconstruction;
  return s;
}

TrainResult train(const HiNetParams& initial, const std::vector<PreparedSurgery>& train_set,
                  const std::vector<PreparedSurgery>& validation_set, const TrainOptions& options) {
  if (train_set.empty()) throw std::invalid_argument("training set is empty");
  if (validation_set.empty()) throw std::invalid_argument("validation set is empty");
  if (options.surgeries_per_batch == 0 || options.micro_batch == 0)
    throw std::invalid_argument("batch sizes must be positive");

  HiNetParams params = initial.clone();
  std::vector<Tensor> trainable = params.trainable();
  AdamState adam(trainable, options.adam);
  const bool on_predictor = params.config.has_predictor();

  Rng order_rng(params.config.seed, 0x04de5);
  Rng dropout_rng(params.config.seed, 0xd709);

  TrainResult result;
  result.best = params.clone();
  result.best_validation = std::numeric_limits<double>::infinity();

  std::vector<std::size_t> order(train_set.size());
  std::vector<WindowRef> refs;
  for (std::size_t epoch = 1; epoch <= options.max_epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), std::size_t{0});
    order_rng.shuffle(std::span<std::size_t>(order));

    EpochRecord rec;
    rec.epoch = epoch;
    std::size_t windows_seen = 0, batch_index = 0;
    for (std::size_t g = 0; g < order.size(); g += options.surgeries_per_batch, ++batch_index) {
      if (options.max_batches_per_epoch > 0 && batch_index >= options.max_batches_per_epoch) break;
      refs.clear();
      for (std::size_t i = g; i < std::min(order.size(), g + options.surgeries_per_batch); ++i) {
        const auto& s = train_set[order[i]];
        for (std::size_t t = 0; t < s.minutes; ++t) refs.push_back({&s, t});
      }
      if (refs.empty()) continue;
      order_rng.shuffle(std::span<WindowRef>(refs));
      const double n = static_cast<double>(refs.size());
      zero_grads(trainable);
      for (std::size_t k = 0; k < refs.size(); k += options.micro_batch) {
        const std::span<const WindowRef> chunk(refs.data() + k, std::min(options.micro_batch, refs.size() - k));
        const WindowBatch b = make_batch(chunk, params.config);
        const BatchLosses l = batch_losses(params, b, Mode::train, &dropout_rng, n);
        if (!std::isfinite(l.total.item())) {
          dump_batch(options.diagnostics_dir, epoch, batch_index, chunk, l);
          throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(batch_index) + "; offending batch written to " +
                             options.diagnostics_dir.string());
        }
        backward(l.total);
        rec.train_total += l.total.item() * n;
        rec.train_predictor += value_or_zero(l.predictor) * n;
        rec.train_forecaster += value_or_zero(l.forecaster) * n;
        rec.train_reconstruction += value_or_zero(l.reconstruction) * n;
      }
      adam_step(trainable, adam);
      windows_seen += refs.size();
    }
    if (windows_seen > 0) {
      const double w = static_cast<double>(windows_seen);
      rec.train_total /= w;
      rec.train_predictor /= w;
      rec.train_forecaster /= w;
      rec.train_reconstruction /= w;
    }
    const LossSummary val = evaluate_losses(params, validation_set, options.micro_batch);
    rec.validation_predictor = val.predictor;
    rec.validation_forecaster = val.forecaster;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    result.history.push_back(rec);
    if (options.on_epoch) options.on_epoch(rec);

    const double score = on_predictor ? val.predictor : val.forecaster;
    if (!std::isfinite(score)) throw NumericError("non-finite validation loss at epoch " + std::to_string(epoch));
    if (score < result.best_validation) {
      result.best_validation = score;
      result.best_epoch = epoch;
      result.best = params.clone();
    } else if (epoch - result.best_epoch >= options.patience) {
      break;
    }
  }
  return result;
}

std::string history_to_csv(const std::vector<EpochRecord>& history) {
  std::ostringstream os;
  os << "epoch,train_loss,train_predictor,train_forecaster,train_reconstruction,validation_predictor,"
        "validation_forecaster,seconds\n";
  char buf[256];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof buf, "%zu,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.3f\n", r.epoch, r.train_total,
                  r.train_predictor, r.train_forecaster, r.train_reconstruction, r.validation_predictor,
                  r.validation_forecaster, r.seconds);
    os << buf;
  }
  return os.str();
}

}  // namespace hinet
