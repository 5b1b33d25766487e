#include <doctest.h>

#include <cmath>

#include "acaptcha/attacks/attacks.hpp"
#include "fixtures.hpp"

using namespace acaptcha;
using namespace acaptcha::attacks;
using net::Architecture;
using net::Classifier;
using testing::Gen;

namespace {

// Binary linear model over a 1 x 1 x n image with rows w0, w1 and biases b.
Classifier linear2(const std::vector<double>& w0, const std::vector<double>& w1, double b0 = 0, double b1 = 0) {
  const int n = int(w0.size());
  Classifier m(Architecture::linear_svm, {1, 1, n}, 2);
  std::vector<double> p(std::size_t(2 * n + 2));
  for (int j = 0; j < n; ++j) {
    p[std::size_t(2 * j)] = w0[std::size_t(j)];
    p[std::size_t(2 * j + 1)] = w1[std::size_t(j)];
  }
  p[std::size_t(2 * n)] = b0;
  p[std::size_t(2 * n + 1)] = b1;
  m.set_parameters(p);
  return m;
}

Image row(std::vector<double> v) {
  Image x(1, 1, int(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) x.data()[Eigen::Index(i)] = v[i];
  return x;
}

}  // namespace

TEST_SUITE("attacks") {
  TEST_CASE("lp norms") {
    const Image a = row({0.1, 0.2, 0.3});
    for (auto p : {Norm::l0, Norm::l2, Norm::linf}) CHECK(lp_norm(a, a, p) == 0.0);
    const Image b = row({0.4, 0.2, 0.3});
    CHECK(lp_norm(a, b, Norm::l0) == 1.0);
    CHECK(lp_norm(a, b, Norm::l2) == doctest::Approx(0.3));
    CHECK(lp_norm(a, b, Norm::linf) == doctest::Approx(0.3));
    const Image c = row({0.4, 0.6, 0.3});
    CHECK(lp_norm(a, c, Norm::l2) == doctest::Approx(0.5));
    CHECK_THROWS_AS(lp_norm(a, row({0.1}), Norm::l2), InvalidInput);
  }

  TEST_CASE("margin and goal") {
    const net::Vector z{{3.0, 1.0, 2.0}};
    const Margin u = margin(z, AttackMode::untargeted(), 0);
    CHECK(u.value == doctest::Approx(1.0));
    CHECK(u.positive == 0);
    CHECK(u.negative == 2);
    const Margin t = margin(z, AttackMode::toward(1), 0);
    CHECK(t.value == doctest::Approx(2.0));
    CHECK(goal_met(AttackMode::untargeted(), 0, 2));
    CHECK_FALSE(goal_met(AttackMode::untargeted(), 0, 0));
    CHECK(goal_met(AttackMode::toward(1), 0, 1));
    CHECK_FALSE(goal_met(AttackMode::toward(1), 0, 2));
  }

  TEST_CASE("jsma leaves misclassified inputs alone") {
    const Classifier m = linear2({1, 1}, {2, 2});
    const Image x = row({0.5, 0.5});
    REQUIRE(m.predict(x) == 1);
    const AttackResult r = jsma(m, x, 0, AttackMode::untargeted(), {});
    CHECK(r.image == x);
    CHECK(r.changed == 0);
    CHECK(r.success);
  }

  TEST_CASE("jsma picks the larger weight difference first") {
    // margin = 2 a + 3 b - 0.1: pixel b is the stronger lever.
    const Classifier m = linear2({2, 1}, {0, -2}, 0.0, 0.1);
    const Image x = row({0.5, 0.5});
    AttackBudget one;
    one.max_pixels = 1;
    const AttackResult first = jsma(m, x, 0, AttackMode::untargeted(), one);
    CHECK(first.image.data()[0] == 0.5);
    CHECK(first.image.data()[1] == 0.0);
    CHECK_FALSE(first.success);
    const AttackResult full = jsma(m, x, 0, AttackMode::untargeted(), {});
    CHECK(full.success);
    CHECK(full.changed == 2);
    CHECK(full.image.data()[0] == 0.0);
  }

  TEST_CASE("jsma fools a trained digit model") {
    const auto& m = testing::small_lenet();
    const auto& test = testing::mnist_test();
    int tried = 0, fooled = 0;
    for (std::size_t i = 0; tried < 40; ++i) {
      if (m.predict(test.images[i]) != test.labels[i]) continue;
      ++tried;
      AttackBudget b;
      b.max_pixels = 40;
      const auto r = jsma(m, test.images[i], test.labels[i], AttackMode::untargeted(), b);
      CHECK(r.changed <= 40);
      fooled += r.success && m.predict(r.image) != test.labels[i];
    }
    CHECK(double(fooled) / tried >= 0.95);
  }

  TEST_CASE("cw on a linear model finds the minimal L2 step") {
    Gen g(51);
    for (int trial = 0; trial < 5; ++trial) {
      const int n = 12;
      std::vector<double> w0(n), w1(n);
      for (int j = 0; j < n; ++j) {
        w0[std::size_t(j)] = g.normal();
        w1[std::size_t(j)] = g.normal();
      }
      const Classifier m = linear2(w0, w1);
      const Image x = row(std::vector<double>(n, 0.5));
      Eigen::VectorXd d(n);
      for (int j = 0; j < n; ++j) d[j] = w0[std::size_t(j)] - w1[std::size_t(j)];
      const int label = d.sum() * 0.5 > 0 ? 0 : 1;
      const double gap = std::abs(d.sum() * 0.5);
      const double analytic = gap / d.norm();
      // Keep the minimal step inside the box so the closed form applies.
      if (analytic * d.cwiseAbs().maxCoeff() / d.norm() > 0.45) continue;
      AttackBudget b;
      b.c = 20.0;
      b.max_iterations = 2000;
      b.step_size = 0.005;
      const AttackResult r = cw_attack(m, x, label, Norm::l2, AttackMode::untargeted(), b);
      REQUIRE(r.success);
      Eigen::VectorXd delta = (r.image.data() - x.data()).matrix();
      CHECK(delta.norm() == doctest::Approx(analytic).epsilon(0.10));
      const double cosine = std::abs(delta.dot(d)) / (delta.norm() * d.norm());
      CHECK(cosine > 0.99);
    }
  }

  TEST_CASE("cw leaves adversarial inputs alone") {
    const Classifier m = linear2({1, 1}, {2, 2});
    const Image x = row({0.5, 0.5});
    for (auto p : {Norm::l0, Norm::l2, Norm::linf}) {
      const AttackResult r = cw_attack(m, x, 0, p, AttackMode::untargeted(), {});
      CHECK(r.image == x);
      CHECK(r.success);
    }
  }

  TEST_CASE("l0 touches no more coordinates than l2") {
    const auto& m = testing::small_lenet();
    const auto& test = testing::mnist_test();
    AttackBudget b;
    b.c = 10;
    b.max_iterations = 100;
    b.step_size = 0.05;
    for (std::size_t i = 0; i < 4; ++i) {
      const auto l2 = cw_attack(m, test.images[i], test.labels[i], Norm::l2, AttackMode::untargeted(), b);
      const auto l0 = cw_attack(m, test.images[i], test.labels[i], Norm::l0, AttackMode::untargeted(), b);
      if (!l2.success) continue;
      CHECK(l0.changed <= l2.changed);
      CHECK(lp_norm(l0.image, test.images[i], Norm::l0) <= lp_norm(l2.image, test.images[i], Norm::l0));
    }
  }

  TEST_CASE("targeted attacks reach the target") {
    const auto& m = testing::small_lenet();
    const auto& test = testing::mnist_test();
    AttackBudget b;
    b.c = 10;
    b.max_iterations = 300;
    b.step_size = 0.05;
    b.max_pixels = 120;
    const int target = (test.labels[1] + 3) % 10;
    const auto r = cw_attack(m, test.images[1], test.labels[1], Norm::l2, AttackMode::toward(target), b);
    if (r.success) CHECK(m.predict(r.image) == target);
    const auto j = jsma(m, test.images[1], test.labels[1], AttackMode::toward(target), b);
    if (j.success) CHECK(m.predict(j.image) == target);
    CHECK((r.success || j.success));
  }

  TEST_CASE("attacks stop within their caps") {
    Gen g(52);
    const auto& m = testing::small_lenet();
    const auto& test = testing::mnist_test();
    for (int trial = 0; trial < 12; ++trial) {
      AttackBudget b;
      b.max_iterations = g.integer(1, 20);
      b.max_pixels = g.integer(1, 10);
      b.l0_rounds = g.integer(1, 3);
      b.step_size = g.uniform(0.001, 0.05);
      const auto& x = test.images[std::size_t(trial)];
      const int y = test.labels[std::size_t(trial)];
      const auto j = jsma(m, x, y, AttackMode::untargeted(), b);
      CHECK(j.changed <= b.max_pixels);
      CHECK(j.iterations <= b.max_pixels);
      for (auto p : {Norm::l2, Norm::linf, Norm::l0}) {
        const auto r = cw_attack(m, x, y, p, AttackMode::untargeted(), b);
        const int cap = p == Norm::l0 ? b.max_iterations * (b.l0_rounds + 1) : b.max_iterations;
        CHECK(r.iterations <= cap);
        CHECK(r.image.data().minCoeff() >= 0.0);
        CHECK(r.image.data().maxCoeff() <= 1.0);
      }
    }
  }

  TEST_CASE("pixel space projects onto the box") {
    Gen g(53);
    const Image x0 = g.image({1, 4, 4});
    const PixelSpace s(x0);
    net::Vector v = g.vector(16, 3.0);
    s.project(v);
    const Image y = s.render(v);
    CHECK(y.data().minCoeff() >= 0.0);
    CHECK(y.data().maxCoeff() <= 1.0);
    CHECK(max_abs_diff(s.render(net::Vector::Zero(16)), x0) == 0.0);
  }

  TEST_CASE("budgets and models are validated") {
    AttackBudget b;
    b.max_iterations = 0;
    CHECK_THROWS_AS(b.validate(), InvalidInput);
    b = {};
    b.l0_freeze_fraction = 1.5;
    CHECK_THROWS_AS(b.validate(), InvalidInput);
    const auto refs = testing::mnist_test().slice(0, 10);
    const Classifier knn = Classifier::knn(refs, 10, 1);
    CHECK_THROWS_AS(jsma(knn, refs.images[0], refs.labels[0], AttackMode::untargeted(), {}), UnsupportedModel);
    CHECK_THROWS_AS(cw_attack(testing::small_lenet(), Image::gray(10, 10), 0, Norm::l2, AttackMode::untargeted(), {}),
                    InvalidInput);
  }
}
