#pragma once

#include <span>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

// DPO and IRPO losses over externally supplied per-token log-probabilities.
namespace savanna::preference_loss {

/// Per-token log-probabilities of one preference pair under the policy and
/// the frozen reference model. Every entry must be <= 0.
struct PairLogps {
  std::vector<double> policy_chosen;
  std::vector<double> policy_rejected;
  std::vector<double> ref_chosen;
  std::vector<double> ref_rejected;

  std::size_t chosen_len() const noexcept { return policy_chosen.size(); }
  std::size_t rejected_len() const noexcept { return policy_rejected.size(); }

  /// Throws Error("invalid_logps") on empty lists, length mismatch, or
  /// positive entries.
  void validate() const;
};

struct LossParams {
  double beta = 0.1;       // DPO temperature
  double alpha_rpo = 1.0;  // weight of the chosen-response NLL term
};

/// beta * [(sum pc - sum rc) - (sum pr - sum rr)]
double margin(const PairLogps& p, const LossParams& params);

/// Numerically stable -log(sigmoid(x)).
double neg_log_sigmoid(double x);

double dpo_loss(const PairLogps& p, const LossParams& params);

/// Length-normalized negative log-likelihood of the chosen response.
double chosen_nll(const PairLogps& p);

/// dpo_loss + alpha_rpo * chosen_nll
double irpo_loss(const PairLogps& p, const LossParams& params);

/// Analytic gradient with the same shape as the input.
struct PairGradient {
  std::vector<double> policy_chosen;
  std::vector<double> policy_rejected;
  std::vector<double> ref_chosen;
  std::vector<double> ref_rejected;
};

PairGradient dpo_gradient(const PairLogps& p, const LossParams& params);
PairGradient irpo_gradient(const PairLogps& p, const LossParams& params);

struct LossRecord {
  double margin = 0.0;
  double dpo = 0.0;
  double nll_chosen = 0.0;
  double irpo = 0.0;
};

/// Evaluates every pair (OpenMP-parallel); output order follows input.
std::vector<LossRecord> evaluate_batch(std::span<const PairLogps> pairs, const LossParams& params);

PairLogps pair_from_json(const nlohmann::json& j);
nlohmann::json pair_to_json(const PairLogps& p);

}  // namespace savanna::preference_loss
