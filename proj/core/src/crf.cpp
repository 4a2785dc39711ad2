#include "hinet/crf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace hinet {

namespace {

double log_add(std::span<const double> xs) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : xs) mx = std::max(mx, x);
  if (!std::isfinite(mx)) return mx;
  double total = 0.0;
  for (double x : xs) total += std::exp(x - mx);
  return mx + std::log(total);
}

struct BatchDims {
  std::size_t labels, batch, steps;
};

BatchDims batch_dims(const Tensor& emissions, const CrfParams& crf, const char* op) {
  BatchDims d{};
  if (emissions.rank() == 2) d = {emissions.dim(0), 1, emissions.dim(1)};
  else if (emissions.rank() == 3) d = {emissions.dim(0), emissions.dim(1), emissions.dim(2)};
  else throw DimensionError(std::string(op) + ": emissions must be [S, W] or [S, N, W], got " + to_string(emissions.shape()));
  if (d.labels != crf.labels() || crf.transitions.shape() != Shape{d.labels, d.labels})
    throw DimensionError(std::string(op) + ": emissions " + to_string(emissions.shape()) + " do not match CRF with " +
                         std::to_string(crf.labels()) + " labels");
  if (d.steps == 0) throw ContractError(std::string(op) + ": sequence length must be at least 1");
  return d;
}

// Forward/backward lattices of one sequence, all in log space, indexed [k * S + s].
struct Lattice {
  std::vector<double> alpha, beta;
  double log_z = 0.0;
};

// e(s, k) for sequence n lives at emissions[s * N * W + n * W + k].
Lattice run_lattice(const double* em, const BatchDims& d, std::size_t n, const double* trans, const double* start,
                    bool with_beta) {
  const std::size_t S = d.labels, W = d.steps, stride = d.batch * d.steps;
  auto e = [&](std::size_t s, std::size_t k) { return em[s * stride + n * W + k]; };
  Lattice lat;
  lat.alpha.resize(W * S);
  std::vector<double> terms(S);
  for (std::size_t s = 0; s < S; ++s) lat.alpha[s] = start[s] + e(s, 0);
  for (std::size_t k = 1; k < W; ++k)
    for (std::size_t s = 0; s < S; ++s) {
      for (std::size_t p = 0; p < S; ++p) terms[p] = lat.alpha[(k - 1) * S + p] + trans[p * S + s];
      lat.alpha[k * S + s] = e(s, k) + log_add(terms);
    }
  lat.log_z = log_add(std::span<const double>(lat.alpha.data() + (W - 1) * S, S));
  if (with_beta) {
    lat.beta.assign(W * S, 0.0);
    for (std::size_t k = W - 1; k-- > 0;)
      for (std::size_t s = 0; s < S; ++s) {
        for (std::size_t q = 0; q < S; ++q) terms[q] = trans[s * S + q] + e(q, k + 1) + lat.beta[(k + 1) * S + q];
        lat.beta[k * S + s] = log_add(terms);
      }
  }
  return lat;
}

// Adds scale * (expected - observed) feature counts into the gradients.
// observed may be null (pure log-partition gradient).
void accumulate_marginals(const Lattice& lat, const double* em, const BatchDims& d, std::size_t n,
                          const double* trans, const int* observed, double scale, double* g_em, double* g_trans,
                          double* g_start) {
  const std::size_t S = d.labels, W = d.steps, stride = d.batch * d.steps;
  for (std::size_t k = 0; k < W; ++k)
    for (std::size_t s = 0; s < S; ++s) {
      double grad = std::exp(lat.alpha[k * S + s] + lat.beta[k * S + s] - lat.log_z);
      if (observed && observed[k] == static_cast<int>(s)) grad -= 1.0;
      if (g_em) g_em[s * stride + n * W + k] += scale * grad;
      if (k == 0 && g_start) g_start[s] += scale * grad;
    }
  if (g_trans) {
    for (std::size_t k = 1; k < W; ++k)
      for (std::size_t p = 0; p < S; ++p)
        for (std::size_t s = 0; s < S; ++s) {
          double pair = std::exp(lat.alpha[(k - 1) * S + p] + trans[p * S + s] + em[s * stride + n * W + k] +
                                 lat.beta[k * S + s] - lat.log_z);
          if (observed && observed[k - 1] == static_cast<int>(p) && observed[k] == static_cast<int>(s)) pair -= 1.0;
          g_trans[p * S + s] += scale * pair;
        }
  }
}

double* grad_buffer(detail::Node* n) {
  if (!n->requires_grad) return nullptr;
  n->ensure_grad();
  return n->grad.data();
}

Tensor attach(Tensor out, const Tensor& emissions, const CrfParams& crf,
              std::function<void(std::span<const double>)> fn) {
  if (!grad_enabled() || !(emissions.requires_grad() || crf.transitions.requires_grad() || crf.start.requires_grad()))
    return out;
  auto& node = *out.node();
  node.requires_grad = true;
  node.parents = {emissions.node(), crf.transitions.node(), crf.start.node()};
  node.backward = std::move(fn);
  return out;
}

}  // namespace

CrfParams CrfParams::create(std::size_t labels) {
  if (labels < 2) throw ParameterError("a CRF needs at least two labels");
  return CrfParams{zeros_parameter({labels, labels}), zeros_parameter({labels})};
}

void CrfParams::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".transitions", transitions});
  out.push_back({prefix + ".start", start});
}

double crf_sequence_score(std::span<const double> emissions, std::size_t steps, const CrfParams& crf,
                          std::span<const int> labels) {
  const std::size_t S = crf.labels();
  if (emissions.size() != S * steps || labels.size() != steps)
    throw DimensionError("crf_sequence_score: inconsistent sizes");
  double score = 0.0;
  for (std::size_t k = 0; k < steps; ++k) {
    const int u = labels[k];
    if (u < 0 || static_cast<std::size_t>(u) >= S) throw ParameterError("crf label out of range");
    score += emissions[static_cast<std::size_t>(u) * steps + k];
    if (k == 0) score += crf.start[static_cast<std::size_t>(u)];
    else score += crf.transitions[static_cast<std::size_t>(labels[k - 1]) * S + static_cast<std::size_t>(u)];
  }
  return score;
}

Tensor crf_log_partition(const Tensor& emissions, const CrfParams& crf) {
  if (emissions.rank() != 2) throw DimensionError("crf_log_partition: emissions must be [S, W]");
  const BatchDims d = batch_dims(emissions, crf, "crf_log_partition");
  const Lattice lat = run_lattice(emissions.data().data(), d, 0, crf.transitions.data().data(),
                                  crf.start.data().data(), false);
  detail::Node* pe = emissions.node().get();
  detail::Node* pt = crf.transitions.node().get();
  detail::Node* ps = crf.start.node().get();
  return attach(Tensor::scalar(lat.log_z), emissions, crf, [pe, pt, ps, d](std::span<const double> g) {
    const Lattice full = run_lattice(pe->value.data(), d, 0, pt->value.data(), ps->value.data(), true);
    accumulate_marginals(full, pe->value.data(), d, 0, pt->value.data(), nullptr, g[0], grad_buffer(pe),
                         grad_buffer(pt), grad_buffer(ps));
  });
}

Tensor crf_nll(const Tensor& emissions, std::span<const int> labels, const CrfParams& crf,
               std::span<const double> weights) {
  const BatchDims d = batch_dims(emissions, crf, "crf_nll");
  if (labels.size() != d.batch * d.steps)
    throw DimensionError("crf_nll: expected " + std::to_string(d.batch * d.steps) + " labels, got " +
                         std::to_string(labels.size()));
  if (!weights.empty() && weights.size() != d.batch)
    throw DimensionError("crf_nll: expected " + std::to_string(d.batch) + " sequence weights");
  for (int u : labels)
    if (u < 0 || static_cast<std::size_t>(u) >= d.labels) throw ParameterError("crf_nll: label outside the label set");

  const std::size_t W = d.steps, stride = d.batch * d.steps;
  std::vector<double> w(d.batch, 1.0);
  if (!weights.empty()) w.assign(weights.begin(), weights.end());
  const double* em = emissions.data().data();
  const double* trans = crf.transitions.data().data();
  const double* start = crf.start.data().data();
  double total = 0.0;
  for (std::size_t n = 0; n < d.batch; ++n) {
    if (w[n] == 0.0) continue;
    const Lattice lat = run_lattice(em, d, n, trans, start, false);
    const int* u = labels.data() + n * W;
    double gold = start[u[0]];
    for (std::size_t k = 0; k < W; ++k) {
      gold += em[static_cast<std::size_t>(u[k]) * stride + n * W + k];
      if (k > 0) gold += trans[static_cast<std::size_t>(u[k - 1]) * d.labels + static_cast<std::size_t>(u[k])];
    }
    total += w[n] * (lat.log_z - gold);
  }

  std::vector<int> y(labels.begin(), labels.end());
  detail::Node* pe = emissions.node().get();
  detail::Node* pt = crf.transitions.node().get();
  detail::Node* ps = crf.start.node().get();
  return attach(Tensor::scalar(total), emissions, crf,
                [pe, pt, ps, d, y = std::move(y), w = std::move(w)](std::span<const double> g) {
                  double* g_em = grad_buffer(pe);
                  double* g_trans = grad_buffer(pt);
                  double* g_start = grad_buffer(ps);
                  for (std::size_t n = 0; n < d.batch; ++n) {
                    if (w[n] == 0.0) continue;
                    const Lattice lat = run_lattice(pe->value.data(), d, n, pt->value.data(), ps->value.data(), true);
                    accumulate_marginals(lat, pe->value.data(), d, n, pt->value.data(), y.data() + n * d.steps,
                                         g[0] * w[n], g_em, g_trans, g_start);
                  }
                });
}

std::vector<std::vector<int>> crf_viterbi_batch(const Tensor& emissions, const CrfParams& crf) {
  const BatchDims d = batch_dims(emissions, crf, "crf_viterbi");
  const std::size_t S = d.labels, W = d.steps, stride = d.batch * d.steps;
  const double* em = emissions.data().data();
  const double* trans = crf.transitions.data().data();
  const double* start = crf.start.data().data();
  std::vector<std::vector<int>> paths(d.batch);
  std::vector<double> delta(W * S);
  std::vector<std::size_t> back(W * S);
  for (std::size_t n = 0; n < d.batch; ++n) {
    auto e = [&](std::size_t s, std::size_t k) { return em[s * stride + n * W + k]; };
    for (std::size_t s = 0; s < S; ++s) delta[s] = start[s] + e(s, 0);
    for (std::size_t k = 1; k < W; ++k)
      for (std::size_t s = 0; s < S; ++s) {
        std::size_t best = 0;
        double best_score = delta[(k - 1) * S] + trans[s];
        for (std::size_t p = 1; p < S; ++p) {
          const double cand = delta[(k - 1) * S + p] + trans[p * S + s];
          if (cand > best_score) {  // strict: ties keep the lower label
            best_score = cand;
            best = p;
          }
        }
        delta[k * S + s] = best_score + e(s, k);
        back[k * S + s] = best;
      }
    std::size_t cur = 0;
    for (std::size_t s = 1; s < S; ++s)
      if (delta[(W - 1) * S + s] > delta[(W - 1) * S + cur]) cur = s;
    auto& path = paths[n];
    path.assign(W, 0);
    for (std::size_t k = W; k-- > 0;) {
      path[k] = static_cast<int>(cur);
      if (k > 0) cur = back[k * S + cur];
    }
  }
  return paths;
}

std::vector<int> crf_viterbi(const Tensor& emissions, const CrfParams& crf) {
  if (emissions.rank() != 2) throw DimensionError("crf_viterbi: emissions must be [S, W]");
  return crf_viterbi_batch(emissions, crf).front();
}

}  // namespace hinet
