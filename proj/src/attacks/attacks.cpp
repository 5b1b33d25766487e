#include "acaptcha/attacks/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace acaptcha::attacks {

namespace {

int argmax(const Vector& z) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < z.size(); ++i) {
    if (z[i] > z[best]) best = i;
  }
  return int(best);
}

void require_differentiable(const net::Classifier& model, const Image& x) {
  if (!model.differentiable()) throw UnsupportedModel("gradient attacks need a differentiable model");
  if (x.shape() != model.input_shape()) {
    throw InvalidInput("input shape " + to_string(x.shape()) + " != model input " + to_string(model.input_shape()));
  }
}

Vector margin_weights(const Margin& m, int classes) {
  Vector w = Vector::Zero(classes);
  w[m.positive] += 1.0;
  w[m.negative] -= 1.0;
  return w;
}

int count_nonzero(const Vector& v) { return int((v.array() != 0.0).count()); }

// Restricts another space to an active coordinate subset (frozen entries stay 0).
class MaskedSpace final : public PerturbationSpace {
 public:
  MaskedSpace(const PerturbationSpace& inner, const std::vector<char>& active) : inner_(inner), active_(active) {}
  Eigen::Index dim() const override { return inner_.dim(); }
  Image render(const Vector& v) const override { return inner_.render(v); }
  Vector pullback(const Image& grad, const Vector& v) const override {
    Vector g = inner_.pullback(grad, v);
    for (Eigen::Index i = 0; i < g.size(); ++i) {
      if (!active_[std::size_t(i)]) g[i] = 0.0;
    }
    return g;
  }
  void project(Vector& v) const override {
    inner_.project(v);
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      if (!active_[std::size_t(i)]) v[i] = 0.0;
    }
  }
  const Vector& weights() const override { return inner_.weights(); }

 private:
  const PerturbationSpace& inner_;
  const std::vector<char>& active_;
};

struct Probe {
  Image x;
  Vector z;
  Margin m;
  bool goal = false;
};

Probe probe(const net::Classifier& model, const PerturbationSpace& space, const Vector& v, int label,
            const AttackMode& mode) {
  Probe p;
  p.x = space.render(v);
  p.z = model.logits(p.x);
  p.m = margin(p.z, mode, label);
  p.goal = goal_met(mode, label, argmax(p.z));
  return p;
}

CwOutcome cw_l2(const net::Classifier& model, const PerturbationSpace& space, int label, const AttackMode& mode,
                const AttackBudget& b) {
  const Vector& w = space.weights();
  Vector v = Vector::Zero(space.dim());
  space.project(v);
  auto objective = [&](const Vector& vv, const Probe& p) {
    return (w.array() * vv.array().square()).sum() + b.c * std::max(p.m.value, -b.kappa);
  };
  auto gradient = [&](const Vector& vv, const Probe& p) {
    Vector g = 2.0 * (w.array() * vv.array()).matrix();
    if (p.m.value > -b.kappa) {
      const Image gx = model.input_gradient(p.x, margin_weights(p.m, model.num_classes()));
      g += b.c * space.pullback(gx, vv);
    }
    return g;
  };

  CwOutcome out;
  Probe cur = probe(model, space, v, label, mode);
  if (cur.goal) {
    out.result.image = cur.x;
    out.result.success = true;
    out.v = v;
    return out;
  }
  double loss = objective(v, cur);
  Vector g = gradient(v, cur);
  double lr = b.step_size;
  // Best success with the kappa margin met, then best plain success.
  double best_strong = std::numeric_limits<double>::infinity(), best_weak = best_strong;
  Vector v_strong, v_weak;
  Image x_strong, x_weak;

  int it = 0;
  for (; it < b.max_iterations; ++it) {
    Vector cand = v - lr * g;
    space.project(cand);
    Probe p = probe(model, space, cand, label, mode);
    const double cand_loss = objective(cand, p);
    if (!(cand_loss <= loss)) {
      lr *= 0.5;
      if (lr < 1e-12) break;
      continue;
    }
    v = std::move(cand);
    loss = cand_loss;
    cur = std::move(p);
    out.result.loss_trace.push_back(loss);
    lr *= 1.2;
    if (cur.goal) {
      const double n2 = (w.array() * v.array().square()).sum();
      if (cur.m.value <= -b.kappa && n2 < best_strong) {
        best_strong = n2;
        v_strong = v;
        x_strong = cur.x;
      }
      if (n2 < best_weak) {
        best_weak = n2;
        v_weak = v;
        x_weak = cur.x;
      }
    }
    g = gradient(v, cur);
  }
  out.result.iterations = it;
  if (v_strong.size()) {
    out.v = std::move(v_strong);
    out.result.image = std::move(x_strong);
    out.result.success = true;
  } else if (v_weak.size()) {
    out.v = std::move(v_weak);
    out.result.image = std::move(x_weak);
    out.result.success = true;
  } else {
    out.v = v;
    out.result.image = cur.x;
  }
  out.result.changed = count_nonzero(out.v);
  return out;
}

CwOutcome cw_linf(const net::Classifier& model, const PerturbationSpace& space, int label, const AttackMode& mode,
                  const AttackBudget& b) {
  Vector v = Vector::Zero(space.dim());
  space.project(v);
  CwOutcome out;
  Probe cur = probe(model, space, v, label, mode);
  if (cur.goal) {
    out.result.image = cur.x;
    out.result.success = true;
    out.v = v;
    return out;
  }
  double tau = std::numeric_limits<double>::infinity();
  double best = tau;
  Vector v_best;
  Image x_best;
  int it = 0;
  for (; it < b.max_iterations; ++it) {
    if (cur.goal && cur.m.value <= -b.kappa) {
      const double n = v.size() ? v.cwiseAbs().maxCoeff() : 0.0;
      if (n < best) {
        best = n;
        v_best = v;
        x_best = cur.x;
      }
      tau = 0.9 * n;
      v = v.cwiseMax(-tau).cwiseMin(tau);
    } else {
      const Image gx = model.input_gradient(cur.x, margin_weights(cur.m, model.num_classes()));
      const Vector g = space.pullback(gx, v);
      v -= b.step_size * g.cwiseSign();
      v = v.cwiseMax(-tau).cwiseMin(tau);
    }
    space.project(v);
    cur = probe(model, space, v, label, mode);
    out.result.loss_trace.push_back(std::max(cur.m.value, -b.kappa));
  }
  out.result.iterations = it;
  if (cur.goal && cur.m.value <= -b.kappa && (v.size() == 0 || v.cwiseAbs().maxCoeff() < best)) {
    v_best = v;
    x_best = cur.x;
  }
  if (v_best.size()) {
    out.v = std::move(v_best);
    out.result.image = std::move(x_best);
    out.result.success = true;
  } else if (cur.goal) {
    out.v = v;
    out.result.image = cur.x;
    out.result.success = true;
  } else {
    out.v = v;
    out.result.image = cur.x;
  }
  out.result.changed = count_nonzero(out.v);
  return out;
}

CwOutcome cw_l0(const net::Classifier& model, const PerturbationSpace& space, int label, const AttackMode& mode,
                const AttackBudget& b) {
  CwOutcome best = cw_l2(model, space, label, mode, b);
  if (!best.result.success) return best;
  int total_iterations = best.result.iterations;
  std::vector<char> active(std::size_t(space.dim()));
  for (Eigen::Index i = 0; i < best.v.size(); ++i) active[std::size_t(i)] = best.v[i] != 0.0;

  for (int round = 0; round < b.l0_rounds; ++round) {
    // Usefulness of each active coordinate: |grad_i * v_i| at the current best.
    const Probe p = probe(model, space, best.v, label, mode);
    const Image gx = model.input_gradient(p.x, margin_weights(p.m, model.num_classes()));
    const Vector g = space.pullback(gx, best.v);
    std::vector<Eigen::Index> idx;
    for (Eigen::Index i = 0; i < best.v.size(); ++i) {
      if (active[std::size_t(i)]) idx.push_back(i);
    }
    const std::size_t freeze = std::size_t(std::ceil(b.l0_freeze_fraction * double(idx.size())));
    if (freeze == 0 || freeze >= idx.size()) break;
    std::stable_sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index c) {
      return std::abs(g[a] * best.v[a]) < std::abs(g[c] * best.v[c]);
    });
    std::vector<char> trial = active;
    for (std::size_t k = 0; k < freeze; ++k) trial[std::size_t(idx[k])] = 0;
    MaskedSpace masked(space, trial);
    CwOutcome next = cw_l2(model, masked, label, mode, b);
    total_iterations += next.result.iterations;
    if (!next.result.success) break;
    best = std::move(next);
    for (Eigen::Index i = 0; i < best.v.size(); ++i) active[std::size_t(i)] = trial[std::size_t(i)] && best.v[i] != 0.0;
  }
  best.result.iterations = total_iterations;
  best.result.changed = count_nonzero(best.v);
  return best;
}

}  // namespace

std::string_view to_string(Norm n) {
  switch (n) {
    case Norm::l0: return "l0";
    case Norm::l2: return "l2";
    case Norm::linf: return "linf";
  }
  return "?";
}

void AttackBudget::validate() const {
  if (max_iterations < 1) throw InvalidInput("max_iterations must be >= 1");
  if (!(step_size > 0.0)) throw InvalidInput("step size must be > 0");
  if (!(c > 0.0)) throw InvalidInput("c must be > 0");
  if (!(kappa >= 0.0)) throw InvalidInput("kappa must be >= 0");
  if (max_pixels < 1) throw InvalidInput("pixel budget must be >= 1");
  if (l0_rounds < 0) throw InvalidInput("l0_rounds must be >= 0");
  if (!(l0_freeze_fraction > 0.0 && l0_freeze_fraction < 1.0)) throw InvalidInput("l0 freeze fraction must be in (0,1)");
}

bool goal_met(const AttackMode& mode, int true_label, int predicted) {
  return mode.targeted ? predicted == mode.target : predicted != true_label;
}

Margin margin(const Vector& z, const AttackMode& mode, int true_label) {
  const int fixed = mode.targeted ? mode.target : true_label;
  if (fixed < 0 || fixed >= z.size()) throw InvalidInput("label out of range");
  int other = -1;
  for (Eigen::Index j = 0; j < z.size(); ++j) {
    if (j != fixed && (other < 0 || z[j] > z[other])) other = int(j);
  }
  if (other < 0) throw InvalidInput("margin needs at least two classes");
  if (mode.targeted) return {z[other] - z[fixed], other, fixed};
  return {z[fixed] - z[other], fixed, other};
}

Image saliency_map(const net::Classifier& model, const Image& x, int true_label, const AttackMode& mode) {
  require_differentiable(model, x);
  const Margin m = margin(model.logits(x), mode, true_label);
  return model.input_gradient(x, margin_weights(m, model.num_classes()));
}

AttackResult jsma(const net::Classifier& model, const Image& x, int true_label, const AttackMode& mode,
                  const AttackBudget& budget) {
  budget.validate();
  require_differentiable(model, x);
  AttackResult res;
  res.image = x;
  Vector z = model.logits(res.image);
  if (goal_met(mode, true_label, argmax(z))) {
    res.success = true;
    return res;
  }
  std::vector<char> used(std::size_t(x.size()), 0);
  auto& px = res.image.data();
  while (res.changed < budget.max_pixels) {
    const Margin m = margin(z, mode, true_label);
    const Image g = model.input_gradient(res.image, margin_weights(m, model.num_classes()));
    Eigen::Index pick = -1;
    double best = 0.0;
    for (Eigen::Index i = 0; i < px.size(); ++i) {
      const double gi = g.data()[i];
      if (used[std::size_t(i)] || gi == 0.0) continue;
      if ((gi > 0.0 && px[i] <= 0.0) || (gi < 0.0 && px[i] >= 1.0)) continue;  // already saturated
      if (std::abs(gi) > best) {
        best = std::abs(gi);
        pick = i;
      }
    }
    if (pick < 0) break;
    px[pick] = g.data()[pick] > 0.0 ? 0.0 : 1.0;
    used[std::size_t(pick)] = 1;
    ++res.changed;
    ++res.iterations;
    z = model.logits(res.image);
    if (goal_met(mode, true_label, argmax(z))) {
      res.success = true;
      break;
    }
  }
  return res;
}

PixelSpace::PixelSpace(Image x0) : x0_(std::move(x0)), ones_(Vector::Ones(x0_.size())) {}

Image PixelSpace::render(const Vector& v) const {
  Image out(x0_.shape(), (x0_.data() + v.array()).eval());
  return out.clamp01();
}

Vector PixelSpace::pullback(const Image& grad, const Vector&) const { return grad.data().matrix(); }

void PixelSpace::project(Vector& v) const {
  v = v.array().max(-x0_.data()).min(1.0 - x0_.data()).matrix();
  // Drop offsets too small to change the pixel so that v != 0 iff the image differs.
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (x0_.data()[i] + v[i] == x0_.data()[i]) v[i] = 0.0;
  }
}

CwOutcome cw_search(const net::Classifier& model, const PerturbationSpace& space, int true_label, Norm norm,
                    const AttackMode& mode, const AttackBudget& budget) {
  budget.validate();
  if (!model.differentiable()) throw UnsupportedModel("gradient attacks need a differentiable model");
  switch (norm) {
    case Norm::l2: return cw_l2(model, space, true_label, mode, budget);
    case Norm::l0: return cw_l0(model, space, true_label, mode, budget);
    case Norm::linf: return cw_linf(model, space, true_label, mode, budget);
  }
  throw InvalidInput("unknown norm");
}

AttackResult cw_attack(const net::Classifier& model, const Image& x, int true_label, Norm norm,
                       const AttackMode& mode, const AttackBudget& budget) {
  require_differentiable(model, x);
  PixelSpace space(x);
  AttackResult r = cw_search(model, space, true_label, norm, mode, budget).result;
  r.changed = int(lp_norm(x, r.image, Norm::l0));
  return r;
}

double lp_norm(const Image& a, const Image& b, Norm p) {
  if (a.shape() != b.shape()) throw InvalidInput("lp_norm: shape mismatch");
  if (a.empty()) return 0.0;
  const auto d = (a.data() - b.data()).eval();
  switch (p) {
    case Norm::l0: return double((d != 0.0).count());
    case Norm::l2: return std::sqrt(d.square().sum());
    case Norm::linf: return d.abs().maxCoeff();
  }
  return 0.0;
}

}  // namespace acaptcha::attacks
