#include <doctest.h>

#include <random>

#include "acaptcha/eval/eval.hpp"
#include "fixtures.hpp"

using namespace acaptcha;
using namespace acaptcha::eval;
using captcha::CaptchaSample;
using filters::PreprocChain;

namespace {

// Characters are flat gray images whose level encodes the digit.
Image glyph(int digit) {
  Image x = Image::gray(28, 28);
  x.data().setConstant(double(digit) / 10.0);
  return x;
}

int read_glyph(const Image& x) { return int(std::lround(x.data()(0) * 10.0)); }

CaptchaSample flat_captcha(const std::string& label) {
  std::vector<Image> chars;
  std::vector<int> digits;
  for (char c : label) {
    chars.push_back(glyph(c - '0'));
    digits.push_back(c - '0');
  }
  return captcha::assemble_captcha(chars, digits);
}

struct Oracle {
  int predict(const Image& x) const { return read_glyph(x); }
};

// Right on every slot except where the encoded digit equals `blind`.
struct BlindSpot {
  int blind;
  int predict(const Image& x) const {
    const int d = read_glyph(x);
    return d == blind ? (d + 1) % 10 : d;
  }
};

struct Coin {
  mutable std::mt19937_64 rng;
  int predict(const Image& x) const {
    const int d = read_glyph(x);
    return std::bernoulli_distribution(0.5)(rng) ? d : (d + 1) % 10;
  }
};

static_assert(SlotModel<Oracle>);
static_assert(SlotModel<net::Classifier>);

SarReport toy_report() {
  SarReport r;
  r.generators = {"normal", "jsma_f"};
  r.gen_models = {"lenet"};
  r.attack_models = {"lenet"};
  r.chains = {"none", "smooth+bin"};
  for (const auto& g : r.generators)
    for (const auto& c : r.chains) r.cells.push_back({g, "lenet", "lenet", c, 100, 0.1234567890123, 7});
  r.cells[1].sar = 1.0 / 3.0;
  r.cells[2].sar = 0.0;
  r.seeds = {7};
  return r;
}

}  // namespace

TEST_SUITE("eval") {
  TEST_CASE("one wrong slot fails the captcha") {
    const PreprocChain none;
    const auto c = flat_captcha("3071");
    CHECK(recognize_captcha(Oracle{}, c, none));
    CHECK_FALSE(recognize_captcha(BlindSpot{7}, c, none));
    CHECK(recognize_captcha(BlindSpot{5}, c, none));
  }

  TEST_CASE("independent slots multiply") {
    // p = 0.5 per slot over four slots.
    const std::vector<CaptchaSample> set(1, flat_captcha("1234"));
    Coin coin{std::mt19937_64(9)};
    const int trials = 100000;
    int ok = 0;
    for (int i = 0; i < trials; ++i) ok += recognize_captcha(coin, set[0], {});
    CHECK(std::abs(double(ok) / trials - 0.0625) <= 0.005);
  }

  TEST_CASE("sar counts full matches") {
    std::vector<CaptchaSample> set;
    for (int i = 0; i < 10; ++i) set.push_back(flat_captcha(i == 2 ? "9999" : "1234"));
    CHECK(sar(Oracle{}, std::span(set), {}) == 1.0);
    CHECK(sar(BlindSpot{9}, std::span(set), {}) == doctest::Approx(0.9));
    std::vector<CaptchaSample> wrong(5, flat_captcha("1111"));
    CHECK(sar(BlindSpot{1}, std::span(wrong), {}) == 0.0);
    CHECK_THROWS_AS(sar(Oracle{}, std::span<const CaptchaSample>{}, {}), InvalidInput);
  }

  TEST_CASE("chain runs before classification") {
    // Binarization maps the 0.4 glyph to 0 and the 0.6 glyph to 1.
    const auto c = flat_captcha("46");
    CHECK(recognize_captcha(Oracle{}, c, {}));
    CHECK_FALSE(recognize_captcha(Oracle{}, c, filters::parse_chain("bin")));
  }

  TEST_CASE("classifier shape is checked") {
    const auto c = flat_captcha("12");
    const auto wide = captcha::CaptchaSample{Image::gray(28, 60), "12"};
    CHECK_NOTHROW(recognize_captcha(testing::small_lenet(), c, {}));
    CHECK_THROWS_AS(recognize_captcha(testing::small_lenet(), wide, {}), InvalidInput);
  }

  TEST_CASE("image sar is top-1 accuracy") {
    const auto& m = testing::small_lenet();
    const auto test = testing::mnist_test().slice(0, 200);
    int ok = 0;
    for (std::size_t i = 0; i < test.size(); ++i) ok += m.predict(test.images[i]) == test.labels[i];
    CHECK(image_sar(m, std::span(test.images), std::span(test.labels), {}) == doctest::Approx(ok / 200.0));
    CHECK_THROWS_AS(image_sar(m, std::span(test.images), std::span(test.labels).first(3), {}), InvalidInput);
    CHECK_THROWS_AS(image_sar(m, std::span<const captcha::ImageChallenge>{}, {}), InvalidInput);
  }

  TEST_CASE("a one-cell matrix equals sar") {
    const ModelZoo zoo{{"lenet", testing::small_lenet()}};
    const auto pool = testing::mnist_test().slice(0, 500);
    MatrixRequest req;
    req.generators = {"normal"};
    req.gen_models = {"lenet"};
    req.attack_models = {"lenet"};
    req.chains = {"none"};
    req.set_size = 40;
    req.seed = 5;
    req.runs = 1;
    const auto r = sar_matrix(req, zoo, pool);
    REQUIRE(r.cells.size() == 1);
    const auto set = captcha::random_captchas(pool, 4, 40, 5);
    CHECK(r.cells[0].sar == sar(testing::small_lenet(), std::span(set), {}));
    CHECK(r.at("normal", "lenet", "lenet", "none").set_size == 40);
  }

  TEST_CASE("matrix is deterministic and averages runs") {
    const ModelZoo zoo{{"lenet", testing::small_lenet()}};
    const auto pool = testing::mnist_test().slice(0, 500);
    MatrixRequest req;
    req.generators = {"normal", "jsma_f"};
    req.gen_models = {"lenet"};
    req.attack_models = {"lenet"};
    req.chains = {"none", "bin"};
    req.set_size = 3;
    req.seed = 11;
    req.runs = 2;
    const auto a = sar_matrix(req, zoo, pool);
    const auto b = sar_matrix(req, zoo, pool);
    CHECK(render_report(a, ReportFormat::csv) == render_report(b, ReportFormat::csv));
    CHECK(a.seeds == std::vector<std::uint64_t>{11, 12});
    double mean = 0;
    for (std::uint64_t s : {11, 12}) {
      const auto set = captcha::random_captchas(pool, 4, 3, s);
      mean += sar(testing::small_lenet(), std::span(set), filters::parse_chain("bin")) / 2;
    }
    CHECK(a.at("normal", "lenet", "lenet", "bin").sar == doctest::Approx(mean));
    CHECK(a.at("jsma_f", "lenet", "lenet", "none").sar <= a.at("normal", "lenet", "lenet", "none").sar);
  }

  TEST_CASE("unresolved matrix ids are reported together") {
    const ModelZoo zoo{{"lenet", testing::small_lenet()}};
    MatrixRequest req;
    req.generators = {"normal", "warp"};
    req.gen_models = {"lenet"};
    req.attack_models = {"resnet"};
    req.chains = {"none", "sharpen+"};
    try {
      sar_matrix(req, zoo, testing::mnist_test().slice(0, 50));
      FAIL("expected InvalidInput");
    } catch (const InvalidInput& e) {
      const std::string msg = e.what();
      CHECK(msg.find("warp") != std::string::npos);
      CHECK(msg.find("resnet") != std::string::npos);
      CHECK(msg.find("sharpen+") != std::string::npos);
    }
    req = {};
    req.generators = {"l2_i"};
    req.gen_models = {"lenet"};
    req.attack_models = {"lenet"};
    req.chains = {"none"};
    CHECK_THROWS_AS(sar_matrix(req, zoo, testing::mnist_test().slice(0, 50)), InvalidInput);
  }

  TEST_CASE("csv rendering") {
    const auto r = toy_report();
    const auto csv = render_report(r, ReportFormat::csv);
    int lines = 0;
    for (char ch : csv) lines += ch == '\n';
    CHECK(lines == 5);
    CHECK(csv.rfind(std::string(kReportHeader) + "\n", 0) == 0);
    const auto back = parse_report_csv(csv);
    CHECK(back.generators == r.generators);
    CHECK(back.chains == r.chains);
    REQUIRE(back.cells.size() == r.cells.size());
    for (std::size_t i = 0; i < r.cells.size(); ++i) {
      CHECK(back.cells[i].sar == r.cells[i].sar);  // bit exact
      CHECK(back.cells[i].chain == r.cells[i].chain);
      CHECK(back.cells[i].run_seed == r.cells[i].run_seed);
    }
    CHECK(render_report(back, ReportFormat::csv) == csv);
  }

  TEST_CASE("markdown rendering") {
    const auto md = render_report(toy_report(), ReportFormat::markdown);
    CHECK(md.find("| − |") != std::string::npos);
    CHECK(md.find("| Preprocessing | normal | jsma_f |") != std::string::npos);
    CHECK(md.find("33.33%") != std::string::npos);
  }

  TEST_CASE("report parse errors") {
    const std::string h = std::string(kReportHeader) + "\n";
    CHECK_THROWS_AS(parse_report_csv(""), FormatError);
    CHECK_THROWS_AS(parse_report_csv("generator,sar\n"), FormatError);
    CHECK_THROWS_AS(parse_report_csv(h + "normal,-,lenet,none,10,0.5\n"), FormatError);
    CHECK_THROWS_AS(parse_report_csv(h + "normal,-,lenet,none,10,abc,1\n"), FormatError);
    CHECK_THROWS_AS(parse_report_csv(h + "normal,-,lenet,none,10,1.5,1\n"), FormatError);
    CHECK_THROWS_AS(parse_report_csv(h + "normal,-,lenet,none,0,0.5,1\n"), FormatError);
    CHECK_THROWS_AS(parse_report_csv(h + "normal,-,lenet,none,10,0.5,1\nnormal,-,lenet,none,10,0.5,1\n"),
                    FormatError);
    // Missing the (adv, bin) cell.
    CHECK_THROWS_AS(parse_report_csv(h + "normal,-,lenet,none,10,0.5,1\nadv,-,lenet,bin,10,0.5,1\n"), FormatError);
  }

  TEST_CASE("report validation") {
    auto r = toy_report();
    CHECK_NOTHROW(r.validate());
    r.cells.pop_back();
    CHECK_THROWS_AS(r.validate(), InvalidInput);
    r = toy_report();
    r.cells[0].sar = -0.1;
    CHECK_THROWS_AS(r.validate(), InvalidInput);
    CHECK_THROWS_AS(toy_report().at("normal", "lenet", "lenet", "blur"), InvalidInput);
  }

  TEST_CASE("pre-generated sets") {
    const ModelZoo zoo{{"lenet", testing::small_lenet()}};
    const auto pool = testing::mnist_test().slice(0, 300);
    std::vector<NamedSet> sets{{"normal", captcha::random_captchas(pool, 4, 10, 1), {}, 1},
                               {"other", captcha::random_captchas(pool, 6, 8, 2), {}, 2}};
    const std::vector<std::string> models{"lenet"}, chains{"none", "bin"};
    const auto r = evaluate_sets(sets, zoo, models, chains);
    CHECK(r.generators == std::vector<std::string>{"normal", "other"});
    CHECK(r.gen_models == std::vector<std::string>{std::string(kNoModel)});
    CHECK(r.cells.size() == 4);
    CHECK(r.at("other", "-", "lenet", "bin").set_size == 8);
    CHECK(r.at("other", "-", "lenet", "bin").sar ==
          sar(testing::small_lenet(), std::span(sets[1].samples), filters::parse_chain("bin")));

    sets.push_back({"empty", {}, {}, 3});
    const std::vector<std::string> bad_models{"lenet", "vgg"};
    try {
      evaluate_sets(sets, zoo, bad_models, chains);
      FAIL("expected InvalidInput");
    } catch (const InvalidInput& e) {
      const std::string msg = e.what();
      CHECK(msg.find("empty") != std::string::npos);
      CHECK(msg.find("vgg") != std::string::npos);
    }
  }
}
