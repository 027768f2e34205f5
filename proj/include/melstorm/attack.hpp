#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "melstorm/model.hpp"
#include "melstorm/tensor.hpp"

namespace melstorm {

enum class AttackKind { fgsm, pgd, cw };

std::string to_string(AttackKind kind);
AttackKind parse_attack_kind(const std::string& name);

/// Attack hyperparameters. Budgets are in normalized feature units.
struct AttackConfig {
  AttackKind kind = AttackKind::fgsm;
  double eps = 0.2;
  double eps_iter = 0.1;
  std::size_t nb_iter = 5;
  double cw_lr = 0.01;
  std::size_t cw_max_iterations = 200;
  double cw_c = 1.0;
  double cw_kappa = 0.0;
  double clip_min = 0.0;
  double clip_max = 1.0;
  bool targeted = false;

  void validate() const;
};

struct AdversarialExample {
  Tensor original;
  Tensor adversarial;
  std::size_t label = 0;
  std::size_t clean_pred = 0;
  std::size_t adv_pred = 0;
  double linf = 0.0;
  double l2 = 0.0;
  bool success = false;
};

/// d(sum of per-row cross-entropy)/dx for a batch `x` of independent samples.
/// Parameters of `model` are never written.
Tensor input_gradient(const Classifier& model, const Tensor& x, std::span<const std::size_t> labels);

/// x' = clip(x + eps * sign(grad)), sign(0) = 0, one gradient evaluation.
AdversarialExample fgsm(const Classifier& model, const Tensor& x, std::size_t label, double eps,
                        double clip_min = 0.0, double clip_max = 1.0);

/// nb_iter signed steps of eps_iter from x, each projected onto the L-inf ball
/// of radius eps around x and then onto the clip box. No random start.
AdversarialExample pgd(const Classifier& model, const Tensor& x, std::size_t label, const AttackConfig& config);

/// Untargeted Carlini-Wagner L2: Adam over w with x' = (tanh(w) + 1) / 2
/// (mapped to the clip box), minimizing |x' - x|^2 + c * max(Z_y - max_j!=y Z_j, -kappa).
/// Returns the smallest-L2 iterate that is misclassified with margin >= kappa,
/// or the final iterate with success = false.
AdversarialExample cw_l2(const Classifier& model, const Tensor& x, std::size_t label, const AttackConfig& config);

/// Dispatches on config.kind (config.eps is the FGSM budget).
AdversarialExample run_attack(const Classifier& model, const Tensor& x, std::size_t label, const AttackConfig& config);

}  // namespace melstorm
