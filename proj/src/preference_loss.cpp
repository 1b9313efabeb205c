#include "savanna/preference_loss.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include <nlohmann/json.hpp>

#include "savanna/error.hpp"

namespace savanna::preference_loss {

namespace {

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

void check_list(const std::vector<double>& v, const char* name) {
  if (v.empty()) throw Error("invalid_logps", std::string(name) + " is empty");
  for (double x : v) {
    if (!std::isfinite(x) || x > 0.0) {
      throw Error("invalid_logps", std::string(name) + " contains a log-probability > 0 or non-finite");
    }
  }
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

void PairLogps::validate() const {
  check_list(policy_chosen, "policy_chosen");
  check_list(policy_rejected, "policy_rejected");
  check_list(ref_chosen, "ref_chosen");
  check_list(ref_rejected, "ref_rejected");
  if (ref_chosen.size() != policy_chosen.size()) {
    throw Error("invalid_logps", "ref_chosen length differs from policy_chosen");
  }
  if (ref_rejected.size() != policy_rejected.size()) {
    throw Error("invalid_logps", "ref_rejected length differs from policy_rejected");
  }
}

double margin(const PairLogps& p, const LossParams& params) {
  const double chosen = sum(p.policy_chosen) - sum(p.ref_chosen);
  const double rejected = sum(p.policy_rejected) - sum(p.ref_rejected);
  return params.beta * (chosen - rejected);
}

double neg_log_sigmoid(double x) {
  // -log sigma(x) = softplus(-x)
  return std::max(-x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double dpo_loss(const PairLogps& p, const LossParams& params) {
  if (!(params.beta > 0.0)) throw Error("bad_params", "beta must be > 0");
  return neg_log_sigmoid(margin(p, params));
}

double chosen_nll(const PairLogps& p) {
  if (p.policy_chosen.empty()) throw Error("invalid_logps", "policy_chosen is empty");
  return -sum(p.policy_chosen) / static_cast<double>(p.policy_chosen.size());
}

double irpo_loss(const PairLogps& p, const LossParams& params) {
  if (params.alpha_rpo < 0.0) throw Error("bad_params", "alpha_rpo must be >= 0");
  return dpo_loss(p, params) + params.alpha_rpo * chosen_nll(p);
}

PairGradient dpo_gradient(const PairLogps& p, const LossParams& params) {
  // dL/dm = -sigma(-m); dm/d(entry) = +-beta.
  const double dm = -sigmoid(-margin(p, params)) * params.beta;
  PairGradient g;
  g.policy_chosen.assign(p.policy_chosen.size(), dm);
  g.ref_chosen.assign(p.ref_chosen.size(), -dm);
  g.policy_rejected.assign(p.policy_rejected.size(), -dm);
  g.ref_rejected.assign(p.ref_rejected.size(), dm);
  return g;
}

PairGradient irpo_gradient(const PairLogps& p, const LossParams& params) {
  PairGradient g = dpo_gradient(p, params);
  const double nll = -params.alpha_rpo / static_cast<double>(p.policy_chosen.size());
  for (double& v : g.policy_chosen) v += nll;
  return g;
}

std::vector<LossRecord> evaluate_batch(std::span<const PairLogps> pairs, const LossParams& params) {
  for (const auto& p : pairs) p.validate();
  std::vector<LossRecord> out(pairs.size());
  const auto n = static_cast<long>(pairs.size());
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) {
    const auto& p = pairs[static_cast<std::size_t>(i)];
    auto& r = out[static_cast<std::size_t>(i)];
    r.margin = margin(p, params);
    r.dpo = neg_log_sigmoid(r.margin);
    r.nll_chosen = chosen_nll(p);
    r.irpo = r.dpo + params.alpha_rpo * r.nll_chosen;
  }
  return out;
}

PairLogps pair_from_json(const nlohmann::json& j) {
  PairLogps p;
  try {
    p.policy_chosen = j.at("policy_chosen").get<std::vector<double>>();
    p.policy_rejected = j.at("policy_rejected").get<std::vector<double>>();
    p.ref_chosen = j.at("ref_chosen").get<std::vector<double>>();
    p.ref_rejected = j.at("ref_rejected").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error("invalid_logps", std::string("malformed PairLogps record: ") + e.what());
  }
  p.validate();
  return p;
}

nlohmann::json pair_to_json(const PairLogps& p) {
  return {{"policy_chosen", p.policy_chosen},
          {"policy_rejected", p.policy_rejected},
          {"ref_chosen", p.ref_chosen},
          {"ref_rejected", p.ref_rejected}};
}

}  // namespace savanna::preference_loss
