#pragma once

#include <span>
#include <string>
#include <vector>

#include "hinet/layers.hpp"
#include "hinet/tensor.hpp"

namespace hinet {

/// Linear-chain CRF over S labels.
///
/// A label sequence u over W steps scores
///   start[u_0] + sum_k emission[u_k, k] + sum_{k>0} transitions[u_{k-1}, u_k],
/// where emissions are computed upstream per step and label.
struct CrfParams {
  Tensor transitions;  // [S, S], row = previous label
  Tensor start;        // [S]

  static CrfParams create(std::size_t labels = 2);
  std::size_t labels() const { return start.dim(0); }
  void collect(const std::string& prefix, ParameterList& out) const;
};

/// Score of one label sequence; emissions are row-major [S, W].
double crf_sequence_score(std::span<const double> emissions, std::size_t steps, const CrfParams& crf,
                          std::span<const int> labels);

/// log Z by the forward algorithm; emissions [S, W]. Differentiable.
Tensor crf_log_partition(const Tensor& emissions, const CrfParams& crf);

/// Weighted negative log-likelihood summed over sequences.
///
/// emissions is [S, W] (one sequence) or [S, N, W]; labels holds N * W
/// entries in {0, ..., S-1}, sequence-major. An empty weight span means
/// weight 1 for every sequence. Differentiable w.r.t. the emissions and the
/// CRF tables.
Tensor crf_nll(const Tensor& emissions, std::span<const int> labels, const CrfParams& crf,
               std::span<const double> weights = {});

/// Maximum-score label sequence; ties go to the lower label.
std::vector<int> crf_viterbi(const Tensor& emissions, const CrfParams& crf);

/// Viterbi decode for every sequence of [S, N, W] emissions.
std::vector<std::vector<int>> crf_viterbi_batch(const Tensor& emissions, const CrfParams& crf);

}  // namespace hinet
