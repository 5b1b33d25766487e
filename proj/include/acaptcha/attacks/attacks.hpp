#pragma once

#include <Eigen/Core>

#include <vector>

#include "acaptcha/image.hpp"
#include "acaptcha/net/classifier.hpp"

namespace acaptcha::attacks {

using net::Vector;

enum class Norm { l0, l2, linf };

std::string_view to_string(Norm n);

struct AttackBudget {
  int max_iterations = 100;
  double step_size = 0.01;  // initial learning rate (L2/L0) or signed step (L-inf)
  double c = 1.0;           // weight of the margin term
  double kappa = 0.0;       // confidence margin
  int max_pixels = 40;      // JSMA: distinct coordinates it may modify
  Norm norm = Norm::l2;
  // L0: number of L2 re-solves and share of remaining coordinates frozen per round.
  int l0_rounds = 6;
  double l0_freeze_fraction = 0.3;

  void validate() const;
};

// Untargeted: any label other than the true one. Targeted: exactly `target`.
struct AttackMode {
  bool targeted = false;
  int target = -1;

  static AttackMode untargeted() { return {}; }
  static AttackMode toward(int label) { return {true, label}; }
};

// True when `predicted` satisfies the mode for an input whose true label is
// `true_label`.
bool goal_met(const AttackMode& mode, int true_label, int predicted);

// Margin whose sign decides success: for untargeted attacks
// Z_true - max_{j != true} Z_j, for targeted max_{j != t} Z_j - Z_t. The goal is
// reached once it is negative (ties resolve by index, checked separately).
struct Margin {
  double value = 0.0;
  int positive = 0;  // logit entering with +1
  int negative = 0;  // logit entering with -1
};
Margin margin(const Vector& logits, const AttackMode& mode, int true_label);

struct AttackResult {
  Image image;
  bool success = false;
  int iterations = 0;
  // JSMA: coordinates modified. CW: coordinates differing from the input.
  int changed = 0;
  std::vector<double> loss_trace;  // CW: objective after each accepted step
};

// Per-coordinate sensitivity of the attack margin; larger magnitude means a
// stronger lever.
Image saliency_map(const net::Classifier& model, const Image& x, int true_label, const AttackMode& mode);

// Greedy one-coordinate-at-a-time attack; each chosen coordinate is pushed to
// 0 or 1, whichever lowers the margin.
AttackResult jsma(const net::Classifier& model, const Image& x, int true_label, const AttackMode& mode,
                  const AttackBudget& budget);

// Real parameterization of a perturbation. The optimizer works on v; the
// classifier sees render(v).
class PerturbationSpace {
 public:
  virtual ~PerturbationSpace() = default;
  virtual Eigen::Index dim() const = 0;
  virtual Image render(const Vector& v) const = 0;
  // Gradient with respect to v of a loss whose gradient at render(v) is `grad`.
  virtual Vector pullback(const Image& grad, const Vector& v) const = 0;
  // Restores feasibility in place.
  virtual void project(Vector& v) const { (void)v; }
  // Squared-norm weights: ||perturbation||^2 = sum_i weight_i * v_i^2.
  virtual const Vector& weights() const = 0;
};

// x0 + v with the [0,1] box enforced by projection.
class PixelSpace final : public PerturbationSpace {
 public:
  explicit PixelSpace(Image x0);
  Eigen::Index dim() const override { return x0_.size(); }
  Image render(const Vector& v) const override;
  Vector pullback(const Image& grad, const Vector& v) const override;
  void project(Vector& v) const override;
  const Vector& weights() const override { return ones_; }
  const Image& origin() const { return x0_; }

 private:
  Image x0_;
  Vector ones_;
};

// Carlini-Wagner style search over an arbitrary perturbation space. The loss
// is ||v||_w^2 + c * max(margin, -kappa) for L2 and L0; L-inf uses signed
// steps inside a shrinking box.
struct CwOutcome {
  AttackResult result;
  Vector v;  // parameters of the returned image
};
CwOutcome cw_search(const net::Classifier& model, const PerturbationSpace& space, int true_label, Norm norm,
                    const AttackMode& mode, const AttackBudget& budget);

AttackResult cw_attack(const net::Classifier& model, const Image& x, int true_label, Norm norm,
                       const AttackMode& mode, const AttackBudget& budget);

// L0 = differing coordinates, L2 = Euclidean, L-inf = max absolute difference.
double lp_norm(const Image& a, const Image& b, Norm p);

}  // namespace acaptcha::attacks
