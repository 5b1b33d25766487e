#include <doctest.h>

#include <chrono>
#include <cmath>

#include "acaptcha/advgen/advgen.hpp"
#include "fixtures.hpp"

using namespace acaptcha;
using namespace acaptcha::advgen;
using net::Architecture;
using net::Classifier;
using testing::Gen;

namespace {

// Largest change of a protected (mask bit 0) coefficient.
double protected_drift(const CharResult& r, const spectral::FreqMask& mask) {
  double worst = 0.0;
  for (int y = 0; y < mask.height(); ++y)
    for (int x = 0; x < mask.width(); ++x)
      if (!mask(y, x)) worst = std::max(worst, std::abs(r.perturbed(y, x) - r.original(y, x)));
  return worst;
}

const Classifier& color_model() {
  static const Classifier m = [] {
    const auto corpus = captcha::synthetic_color_corpus(30, 3, 32);
    net::TrainConfig cfg;
    cfg.rounds = 150;
    cfg.seed = 2;
    return net::train_classifier(corpus, Architecture::lenet, cfg).model;
  }();
  return m;
}

}  // namespace

TEST_SUITE("advgen") {
  TEST_CASE("generator names") {
    CHECK(all_generators().size() == 12);
    for (Generator g : all_generators()) CHECK(parse_generator(to_string(g)) == g);
    CHECK(is_text_generator(Generator::jsma_f));
    CHECK(is_text_generator(Generator::linf));
    CHECK_FALSE(is_text_generator(Generator::l0_i));
    try {
      parse_generator("fgsm");
      FAIL("expected an error");
    } catch (const InvalidInput& e) {
      CHECK(std::string(e.what()).find("jsma_f") != std::string::npos);
    }
  }

  TEST_CASE("config files roundtrip") {
    Gen g(61);
    for (int trial = 0; trial < 50; ++trial) {
      GeneratorConfig c;
      c.generator = all_generators()[std::size_t(g.integer(0, 11))];
      c.mask_inner = 2 * g.integer(0, 7);
      c.freq = default_freq_config(28, 28, c.mask_inner);
      c.freq.max_iterations = g.integer(1, 500);
      c.freq.step = g.uniform(0.1, 5);
      c.freq.cw.c = g.uniform(0.1, 100);
      c.freq.cw.kappa = g.uniform(0, 60);
      c.space.max_pixels = g.integer(1, 100);
      c.noise.K = g.integer(0, 60);
      c.image.cap = g.integer(c.noise.K + 1, 900);
      c.image.l2_step = g.uniform(0.01, 2);
      const GeneratorConfig back = parse_config(render_config(c));
      CHECK(render_config(back) == render_config(c));
      CHECK(back.generator == c.generator);
      CHECK(back.noise.K == c.noise.K);
      CHECK(back.freq.cw.kappa == c.freq.cw.kappa);
      CHECK(back.freq.mask.ones() == c.freq.mask.ones());
    }
    CHECK_THROWS_AS(parse_config("version 99\n"), FormatError);
    CHECK_THROWS_AS(parse_config(render_config({}) + "bogus_key 1\n"), FormatError);
  }

  TEST_CASE("an all-protected mask is rejected up front") {
    const auto& m = testing::small_lenet();
    const auto& ch = testing::mnist_test().images[0];
    FreqAttackConfig cfg = default_freq_config();
    cfg.mask = spectral::make_mask(28, 28, 14, 14);
    CHECK_THROWS_AS(jsma_f_char(m, ch, 7, cfg), AttackError);
    for (auto p : {Norm::l2, Norm::l0, Norm::linf}) CHECK_THROWS_AS(lp_f_char(p, m, ch, 7, cfg), AttackError);
  }

  TEST_CASE("misclassified characters pass through") {
    const auto& m = testing::small_lenet();
    const auto& ch = testing::mnist_test().images[0];
    const int wrong = (m.predict(ch) + 1) % 10;
    const auto cfg = default_freq_config();
    const CharResult r = jsma_f_char(m, ch, wrong, cfg);
    CHECK(r.iterations == 0);
    CHECK(r.image == ch);
    for (auto p : {Norm::l2, Norm::l0, Norm::linf}) CHECK(lp_f_char(p, m, ch, wrong, cfg).image == ch);
  }

  TEST_CASE("frequency generators leave the protected block untouched") {
    const auto& m = testing::small_lenet();
    const auto& test = testing::mnist_test();
    const auto cfg = default_freq_config();
    for (std::size_t i = 0; i < 3; ++i) {
      const CharResult j = jsma_f_char(m, test.images[i], test.labels[i], cfg);
      CHECK(protected_drift(j, cfg.mask) <= 1e-9);
      CHECK(j.iterations <= cfg.max_iterations);
      int l2_changed = -1;
      for (auto p : {Norm::l2, Norm::l0, Norm::linf}) {
        const CharResult r = lp_f_char(p, m, test.images[i], test.labels[i], cfg);
        CHECK(protected_drift(r, cfg.mask) <= 1e-9);
        if (p == Norm::l2) l2_changed = r.changed;
        if (p == Norm::l0) CHECK(r.changed <= l2_changed);
      }
    }
  }

  TEST_CASE("jsma_f fools the generating model") {
    const auto& m = testing::small_lenet();
    const auto samples = captcha::random_captchas(testing::mnist_test().slice(0, 500), 4, 5, 3);
    GeneratorConfig cfg;
    for (const auto& s : samples) {
      const TextResult t = generate_text(m, s, cfg);
      CHECK(t.sample.label == s.label);
      CHECK(t.sample.image.shape() == s.image.shape());
      CHECK(t.slots.size() == 4);
      for (int i = 0; i < 4; ++i) {
        if (t.slots[std::size_t(i)].success) CHECK(m.predict(t.sample.slot(i)) != s.label[std::size_t(i)] - '0');
      }
    }
  }

  TEST_CASE("frequency space pullback matches finite differences") {
    Gen g(62);
    Image x(Shape{1, 28, 28});
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = g.uniform(0.3, 0.7);
    const FreqSpace space(x, spectral::make_mask(28, 28, 4, 4));
    const Image grad = g.image({1, 28, 28});
    const net::Vector v = space.dim() > 0 ? g.vector(int(space.dim()), 1e-3) : net::Vector();
    const net::Vector back = space.pullback(grad, v);
    CHECK(max_abs_diff(space.render(net::Vector::Zero(space.dim())), x) < 1e-9);
    const double h = 1e-6;
    for (int trial = 0; trial < 20; ++trial) {
      const auto k = Eigen::Index(g.integer(0, int(space.dim()) - 1));
      net::Vector up = v, down = v;
      up[k] += h;
      down[k] -= h;
      const double numeric = ((space.render(up).data() - space.render(down).data()) * grad.data()).sum() / (2 * h);
      CHECK(numeric == doctest::Approx(back[k]).epsilon(1e-5));
    }
  }

  TEST_CASE("noise budget semantics") {
    const auto& m = color_model();
    const auto corpus = captcha::synthetic_color_corpus(2, 77, 32);
    ImageAttackConfig cfg;
    std::size_t wrong_idx = corpus.size();
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      if (m.predict(corpus.images[i]) != corpus.labels[i]) {
        wrong_idx = i;
        break;
      }
    }
    if (wrong_idx < corpus.size()) {
      const auto& x = corpus.images[wrong_idx];
      const int y = corpus.labels[wrong_idx];
      CHECK(jsma_i(m, x, y, {0}, cfg).image == x);
      CHECK(lp_i(Norm::l2, m, x, y, {0}, cfg).image == x);
      CHECK(jsma_i(m, x, y, {50}, cfg).iterations == 50);
    } else {
      // Force the situation with a deliberately wrong label.
      const auto& x = corpus.images[0];
      const int y = (m.predict(x) + 1) % 10;
      CHECK(jsma_i(m, x, y, {0}, cfg).image == x);
      CHECK(jsma_i(m, x, y, {50}, cfg).iterations == 50);
    }

    const auto& x = corpus.images[1];
    const int y = corpus.labels[1];
    for (auto p : {Norm::l2, Norm::linf, Norm::l0}) {
      const double small = attacks::lp_norm(lp_i(p, m, x, y, {20}, cfg).image, x, Norm::l2);
      const double large = attacks::lp_norm(lp_i(p, m, x, y, {50}, cfg).image, x, Norm::l2);
      CHECK(large >= small);
    }
    const double js = attacks::lp_norm(jsma_i(m, x, y, {20}, cfg).image, x, Norm::l2);
    const double jl = attacks::lp_norm(jsma_i(m, x, y, {50}, cfg).image, x, Norm::l2);
    CHECK(jl >= js);
    CHECK_THROWS_AS(jsma_i(m, x, y, {-1}, cfg), InvalidInput);
  }

  TEST_CASE("image generators stop within their caps") {
    Gen g(63);
    const auto& m = color_model();
    const auto corpus = captcha::synthetic_color_corpus(1, 78, 32);
    for (int trial = 0; trial < 8; ++trial) {
      ImageAttackConfig cfg;
      cfg.cap = g.integer(1, 30);
      const NoiseBudget k{g.integer(0, 40)};
      const auto& x = corpus.images[std::size_t(trial)];
      const int y = corpus.labels[std::size_t(trial)];
      const auto j = jsma_i(m, x, y, k, cfg);
      CHECK(j.iterations <= cfg.cap);
      CHECK(j.hit_cap == (j.iterations == cfg.cap && (!j.success || k.K > cfg.cap)));
      for (auto p : {Norm::l2, Norm::linf, Norm::l0}) {
        const auto r = lp_i(p, m, x, y, k, cfg);
        CHECK(r.iterations <= cfg.cap);
        CHECK(r.image.data().minCoeff() >= 0.0);
        CHECK(r.image.data().maxCoeff() <= 1.0);
      }
    }
  }

  TEST_CASE("text generators stop within their caps") {
    Gen g(64);
    const auto& m = testing::small_lenet();
    const auto& test = testing::mnist_test();
    for (int trial = 0; trial < 6; ++trial) {
      GeneratorConfig cfg;
      cfg.freq.max_iterations = g.integer(1, 15);
      cfg.freq.cw.max_iterations = g.integer(1, 15);
      cfg.space.max_iterations = g.integer(1, 15);
      cfg.space.max_pixels = g.integer(1, 15);
      const auto& x = test.images[std::size_t(trial)];
      const int y = test.labels[std::size_t(trial)];
      for (Generator gen : all_generators()) {
        if (!is_text_generator(gen)) continue;
        cfg.generator = gen;
        const CharResult r = generate_char(m, x, y, cfg);
        int cap = cfg.freq.max_iterations;
        if (gen == Generator::l2_f || gen == Generator::linf_f) cap = cfg.freq.cw.max_iterations;
        if (gen == Generator::l0_f) cap = cfg.freq.cw.max_iterations * (cfg.freq.cw.l0_rounds + 1);
        if (gen == Generator::jsma) cap = cfg.space.max_pixels;
        if (gen == Generator::l2 || gen == Generator::linf) cap = cfg.space.max_iterations;
        if (gen == Generator::l0) cap = cfg.space.max_iterations * (cfg.space.l0_rounds + 1);
        CAPTURE(to_string(gen));
        CHECK(r.iterations <= cap);
        CHECK(r.image.shape() == x.shape());
      }
    }
  }

  TEST_CASE("noise-floor l2 is cheaper than a full optimization") {
    const auto& m = color_model();
    const auto corpus = captcha::synthetic_color_corpus(1, 79, 32);
    using clock = std::chrono::steady_clock;
    // Default budget with a margin that is never met, so every iteration runs.
    attacks::AttackBudget full;
    full.kappa = 1e9;
    double t_floor = 0, t_full = 0;
    int timed = 0;
    for (std::size_t i = 0; i < corpus.size() && timed < 4; ++i) {
      if (m.predict(corpus.images[i]) != corpus.labels[i]) continue;
      ++timed;
      auto t0 = clock::now();
      lp_i(Norm::l2, m, corpus.images[i], corpus.labels[i], {50}, {});
      auto t1 = clock::now();
      const auto r =
          attacks::cw_attack(m, corpus.images[i], corpus.labels[i], Norm::l2, attacks::AttackMode::untargeted(), full);
      auto t2 = clock::now();
      CHECK(r.iterations == full.max_iterations);
      t_floor += std::chrono::duration<double>(t1 - t0).count();
      t_full += std::chrono::duration<double>(t2 - t1).count();
    }
    REQUIRE(timed > 0);
    MESSAGE("noise floor ", t_floor, " s, full budget ", t_full, " s");
    CHECK(t_floor <= 0.5 * t_full);
  }
}
