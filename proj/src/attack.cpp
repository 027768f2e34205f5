#include "melstorm/attack.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "melstorm/adam.hpp"
#include "melstorm/error.hpp"
#include "melstorm/ops.hpp"
#include "melstorm/train.hpp"

namespace melstorm {

std::string to_string(AttackKind kind) {
  switch (kind) {
    case AttackKind::fgsm:
      return "fgsm";
    case AttackKind::pgd:
      return "pgd";
    case AttackKind::cw:
      return "cw";
  }
  return "unknown";
}

AttackKind parse_attack_kind(const std::string& name) {
  if (name == "fgsm") return AttackKind::fgsm;
  if (name == "pgd") return AttackKind::pgd;
  if (name == "cw") return AttackKind::cw;
  throw Error("unknown attack kind '" + name + "' (expected fgsm, pgd, or cw)");
}

void AttackConfig::validate() const {
  if (!(eps >= 0.0)) throw Error("attack: eps must be non-negative");
  if (nb_iter < 1) throw Error("attack: nb_iter must be at least 1");
  if (!(eps_iter > 0.0)) throw Error("attack: eps_iter must be positive");
  if (cw_max_iterations < 1) throw Error("attack: cw_max_iterations must be at least 1");
  if (!(cw_lr > 0.0)) throw Error("attack: cw_lr must be positive");
  if (!(cw_c >= 0.0)) throw Error("attack: cw_c must be non-negative");
  if (!(cw_kappa >= 0.0)) throw Error("attack: cw_kappa must be non-negative");
  if (!(clip_min < clip_max)) throw Error("attack: clip_min must be below clip_max");
  if (targeted) throw Error("attack: targeted attacks are not supported");
}

namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

std::size_t predict_one(const Classifier& model, const Tensor& x) {
  const Tensor z = model.logits(x);
  return argmax(z.data().subspan(0, z.dim(1)));
}

void require_single(const Tensor& x, const char* op) {
  if (x.rank() < 2 || x.dim(0) != 1) {
    throw ShapeError(std::string(op) + ": expects a single sample with leading batch extent 1, got " +
                     shape_string(x.shape()));
  }
}

// Fills predictions, norms and the success flag from original/adversarial.
void finish(const Classifier& model, AdversarialExample& ex) {
  ex.adv_pred = predict_one(model, ex.adversarial);
  const auto a = ex.original.data();
  const auto b = ex.adversarial.data();
  double linf = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = b[i] - a[i];
    linf = std::max(linf, std::abs(d));
    sq += d * d;
  }
  ex.linf = linf;
  ex.l2 = std::sqrt(sq);
  ex.success = ex.adv_pred != ex.label;
}

struct GradientAt {
  std::vector<double> grad;
  std::size_t pred = 0;
};

GradientAt loss_gradient(const Classifier& model, const Tensor& x, std::size_t label) {
  Tensor leaf = x.clone();
  leaf.set_requires_grad(true);
  const Tensor z = model.logits(leaf);
  const std::size_t labels[] = {label};
  backprop(cross_entropy_loss(z, labels, Reduction::sum));
  return {std::vector<double>(leaf.grad().begin(), leaf.grad().end()), argmax(z.data().subspan(0, z.dim(1)))};
}

}  // namespace

Tensor input_gradient(const Classifier& model, const Tensor& x, std::span<const std::size_t> labels) {
  Tensor leaf = x.clone();
  leaf.set_requires_grad(true);
  backprop(cross_entropy_loss(model.logits(leaf), labels, Reduction::sum));
  return Tensor::from(x.shape(), std::vector<double>(leaf.grad().begin(), leaf.grad().end()));
}

AdversarialExample fgsm(const Classifier& model, const Tensor& x, std::size_t label, double eps, double clip_min,
                        double clip_max) {
  require_single(x, "fgsm");
  if (!(eps >= 0.0)) throw Error("fgsm: eps must be non-negative");
  const auto at = loss_gradient(model, x, label);
  const auto xs = x.data();
  std::vector<double> adv(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    adv[i] = std::clamp(xs[i] + eps * sign(at.grad[i]), clip_min, clip_max);
  }
  AdversarialExample ex;
  ex.original = x.detach();
  ex.adversarial = Tensor::from(x.shape(), std::move(adv));
  ex.label = label;
  ex.clean_pred = at.pred;
  finish(model, ex);
  return ex;
}

AdversarialExample pgd(const Classifier& model, const Tensor& x, std::size_t label, const AttackConfig& config) {
  require_single(x, "pgd");
  config.validate();
  const auto xs = x.data();
  std::vector<double> cur(xs.begin(), xs.end());
  std::size_t clean_pred = 0;
  for (std::size_t it = 0; it < config.nb_iter; ++it) {
    const auto at = loss_gradient(model, Tensor::from(x.shape(), cur), label);
    if (it == 0) clean_pred = at.pred;
    for (std::size_t i = 0; i < cur.size(); ++i) {
      const double stepped = cur[i] + config.eps_iter * sign(at.grad[i]);
      const double projected = std::clamp(stepped, xs[i] - config.eps, xs[i] + config.eps);
      cur[i] = std::clamp(projected, config.clip_min, config.clip_max);
    }
  }
  AdversarialExample ex;
  ex.original = x.detach();
  ex.adversarial = Tensor::from(x.shape(), std::move(cur));
  ex.label = label;
  ex.clean_pred = clean_pred;
  finish(model, ex);
  return ex;
}

AdversarialExample cw_l2(const Classifier& model, const Tensor& x, std::size_t label, const AttackConfig& config) {
  require_single(x, "cw_l2");
  config.validate();
  const std::size_t k = model.n_classes();
  if (label >= k) throw Error("cw_l2: label outside the classifier's classes");
  const auto xs = x.data();
  const std::size_t n = xs.size();
  const double lo = config.clip_min;
  const double span = config.clip_max - config.clip_min;
  constexpr double kEdge = 1.0 - 1e-6;

  Tensor w = Tensor::zeros(x.shape());
  {
    auto wv = w.mutable_data();
    for (std::size_t i = 0; i < n; ++i) {
      const double unit = std::clamp(2.0 * (xs[i] - lo) / span - 1.0, -kEdge, kEdge);
      wv[i] = std::atanh(unit);
    }
  }
  NamedTensor slot{"cw.w", w};
  AdamState adam(AdamOptions{.lr = config.cw_lr});

  std::vector<double> candidate(n), tanh_w(n);
  std::vector<double> best;
  double best_l2 = std::numeric_limits<double>::infinity();
  std::size_t best_pred = label;
  std::size_t clean_pred = label;
  std::size_t last_pred = label;

  // One evaluation per iterate; the last pass (it == max) only scores the
  // final iterate.
  for (std::size_t it = 0; it <= config.cw_max_iterations; ++it) {
    const auto wv = slot.tensor.data();
    double sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      tanh_w[i] = std::tanh(wv[i]);
      candidate[i] = lo + span * (tanh_w[i] + 1.0) / 2.0;
      sq += (candidate[i] - xs[i]) * (candidate[i] - xs[i]);
    }
    Tensor leaf = Tensor::from(x.shape(), candidate);
    leaf.set_requires_grad(true);
    const Tensor z = model.logits(leaf);
    const auto zr = z.data().subspan(0, k);
    std::size_t runner_up = label == 0 ? 1 : 0;
    for (std::size_t j = 0; j < k; ++j) {
      if (j != label && zr[j] > zr[runner_up]) runner_up = j;
    }
    const double margin = zr[label] - zr[runner_up];
    const std::size_t pred = argmax(zr);
    if (it == 0) clean_pred = pred;
    last_pred = pred;

    const double l2 = std::sqrt(sq);
    if (pred != label && -margin >= config.cw_kappa && l2 < best_l2) {
      best_l2 = l2;
      best = candidate;
      best_pred = pred;
    }
    if (it == config.cw_max_iterations) break;

    std::vector<double> grad_x(n, 0.0);
    if (margin > -config.cw_kappa && config.cw_c > 0.0) {
      std::vector<double> coeff(k, 0.0);
      coeff[label] = 1.0;
      coeff[runner_up] = -1.0;
      backprop(weighted_sum(z, coeff));
      const auto g = leaf.grad();
      for (std::size_t i = 0; i < n; ++i) grad_x[i] = config.cw_c * g[i];
    }
    auto gw = slot.tensor.mutable_grad();
    for (std::size_t i = 0; i < n; ++i) {
      const double dx = grad_x[i] + 2.0 * (candidate[i] - xs[i]);
      gw[i] = dx * span / 2.0 * (1.0 - tanh_w[i] * tanh_w[i]);
    }
    adam_step(std::span<NamedTensor>(&slot, 1), adam);
  }

  AdversarialExample ex;
  ex.original = x.detach();
  ex.label = label;
  ex.clean_pred = clean_pred;
  ex.success = !best.empty();
  if (ex.success) {
    ex.adversarial = Tensor::from(x.shape(), std::move(best));
    ex.adv_pred = best_pred;
  } else {
    ex.adversarial = Tensor::from(x.shape(), candidate);
    ex.adv_pred = last_pred;
  }
  const auto a = ex.original.data();
  const auto b = ex.adversarial.data();
  double linf = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    linf = std::max(linf, std::abs(b[i] - a[i]));
    sq += (b[i] - a[i]) * (b[i] - a[i]);
  }
  ex.linf = linf;
  ex.l2 = std::sqrt(sq);
  return ex;
}

AdversarialExample run_attack(const Classifier& model, const Tensor& x, std::size_t label, const AttackConfig& config) {
  config.validate();
  switch (config.kind) {
    case AttackKind::fgsm:
      return fgsm(model, x, label, config.eps, config.clip_min, config.clip_max);
    case AttackKind::pgd:
      return pgd(model, x, label, config);
    case AttackKind::cw:
      return cw_l2(model, x, label, config);
  }
  throw Error("unknown attack kind");
}

}  // namespace melstorm
