#include <CLI11.hpp>
#include <json.hpp>

#include <pthread.h>
#include <signal.h>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <optional>
#include <filesystem>
#include <iostream>
#include <thread>
#include <unistd.h>

#include "acaptcha/advgen/advgen.hpp"
#include "acaptcha/captcha/captcha.hpp"
#include "acaptcha/captcha/dataset.hpp"
#include "acaptcha/eval/eval.hpp"
#include "acaptcha/filters.hpp"
#include "acaptcha/fsutil.hpp"
#include "acaptcha/net/checkpoint.hpp"
#include "acaptcha/net/ensemble.hpp"
#include "acaptcha/net/train.hpp"
#include "acaptcha/study/study.hpp"

#ifndef ACAPTCHA_VERSION
#define ACAPTCHA_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace acaptcha;

namespace {

// Bad flags or missing inputs: exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct Run {
  fs::path workdir = ".";
  std::vector<std::string> argv;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  fs::path path(const std::string& p) const {
    const fs::path q(p);
    return q.is_absolute() ? q : workdir / q;
  }
  fs::path existing(const std::string& p, const char* what) const {
    const fs::path q = path(p);
    if (!fs::exists(q)) throw UsageError(std::string(what) + " " + q.string() + " does not exist");
    return q;
  }
  json manifest(const std::string& command, json config, json inputs, json outputs) const {
    return {{"command", command},
            {"argv", argv},
            {"config", std::move(config)},
            {"inputs", std::move(inputs)},
            {"outputs", std::move(outputs)},
            {"tool_version", ACAPTCHA_VERSION},
            {"finished_at", utc_now()},
            {"wall_clock_s", std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()}};
  }
};

// Output directory built under a temporary name and renamed into place only
// when complete.
class StagedDir {
 public:
  explicit StagedDir(fs::path target) : target_(std::move(target)) {
    if (target_.filename().empty()) target_ = target_.parent_path();
    tmp_ = target_.parent_path() / ("." + target_.filename().string() + ".partial-" + std::to_string(::getpid()));
    fs::remove_all(tmp_);
    fs::create_directories(tmp_);
  }
  ~StagedDir() {
    if (!committed_) {
      std::error_code ec;
      fs::remove_all(tmp_, ec);
    }
  }
  const fs::path& path() const { return tmp_; }
  void commit() {
    fs::remove_all(target_);
    fs::rename(tmp_, target_);
    committed_ = true;
  }

 private:
  fs::path target_, tmp_;
  bool committed_ = false;
};

void write_manifest(const fs::path& path, const json& j) { write_file_atomic(path, j.dump(2) + "\n"); }

// MNIST directory (IDX files, optionally gzip'd) or labeled PNG corpus.
struct DataSplits {
  LabeledSet train, test;
  std::string kind;
};

fs::path idx_file(const fs::path& dir, const std::string& stem) {
  for (const auto& name : {stem, stem + ".gz"}) {
    if (fs::exists(dir / name)) return dir / name;
  }
  return {};
}

DataSplits load_data(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw UsageError("dataset directory " + dir.string() + " does not exist");
  DataSplits d;
  const auto ti = idx_file(dir, "train-images-idx3-ubyte");
  const auto tl = idx_file(dir, "train-labels-idx1-ubyte");
  if (!ti.empty() && !tl.empty()) {
    d.kind = "mnist";
    d.train = captcha::load_mnist(ti, tl);
    const auto ei = idx_file(dir, "t10k-images-idx3-ubyte");
    const auto el = idx_file(dir, "t10k-labels-idx1-ubyte");
    if (!ei.empty() && !el.empty()) d.test = captcha::load_mnist(ei, el);
    return d;
  }
  if (fs::exists(dir / "labels.csv")) {
    d.kind = "png";
    d.train = captcha::load_png_corpus(dir);
    return d;
  }
  throw UsageError(dir.string() + " holds neither MNIST IDX files nor a labels.csv corpus");
}

net::Classifier load_model(const Run& run, const std::string& name) {
  for (const auto& cand : {name, name + ".ckpt", "models/" + name + ".ckpt"}) {
    const fs::path p = run.path(cand);
    if (fs::is_regular_file(p)) return net::load_checkpoint(p);
  }
  throw UsageError("model '" + name + "' not found (tried " + name + ", " + name + ".ckpt, models/" + name + ".ckpt)");
}

std::string valid_methods() {
  std::string s = "normal";
  for (auto g : advgen::all_generators()) s += ", " + std::string(advgen::to_string(g));
  return s;
}

// ---- train ----

struct TrainOpts {
  std::string arch = "lenet", data = "data/mnist", out = "models/model.ckpt", defense = "none";
  std::string donors, generators, test_data;
  int rounds = 5000, batch = 50, levels = 16, knn_k = 5;
  std::size_t train_size = 10000;
  double lr = 1e-3, temperature = 100.0, fraction = 1.0;
  std::uint64_t seed = 0;
};

int cmd_train(const Run& run, const TrainOpts& o) {
  const auto arch = net::parse_architecture(o.arch);
  DataSplits data = load_data(run.path(o.data));
  if (o.train_size > 0 && o.train_size < data.train.size()) data.train = data.train.slice(0, o.train_size);
  if (!o.test_data.empty()) data.test = load_data(run.existing(o.test_data, "test set")).train;

  net::TrainConfig cfg;
  cfg.rounds = o.rounds;
  cfg.batch_size = o.batch;
  cfg.learning_rate = o.lr;
  cfg.seed = o.seed;
  json defense = {{"kind", o.defense}};
  if (o.defense == "distill") {
    cfg.defense = net::Distillation{o.temperature};
    defense["T"] = o.temperature;
  } else if (o.defense == "thermometer") {
    cfg.defense = net::ThermometerDefense{o.levels};
    defense["levels"] = o.levels;
  } else if (o.defense == "ensemble") {
    cfg.defense = net::EnsembleAdversarial{split_list(o.donors), split_list(o.generators), o.fraction};
    defense["donors"] = split_list(o.donors);
    defense["generators"] = split_list(o.generators);
    defense["fraction"] = o.fraction;
  } else if (o.defense != "none") {
    throw UsageError("unknown defense '" + o.defense + "'; expected none, distill, thermometer or ensemble");
  }
  cfg.validate();
  const LabeledSet* test = data.test.empty() ? nullptr : &data.test;

  std::optional<net::Classifier> model;
  net::TrainReport report;
  if (o.defense == "ensemble") {
    std::vector<net::Classifier> donors;
    for (const auto& d : split_list(o.donors)) donors.push_back(load_model(run, d));
    std::vector<advgen::Generator> gens;
    for (const auto& g : split_list(o.generators)) gens.push_back(advgen::parse_generator(g));
    auto t = net::train_ensemble_adversarial(data.train, arch, donors, gens, cfg, {}, test);
    model = std::move(t.model);
    report = t.report;
    defense["adversarial_copies"] = t.augmentation.adversarial;
  } else if (arch == net::Architecture::knn) {
    model = net::Classifier::knn(data.train, 10, o.knn_k);
    report.train_accuracy = 1.0;
    if (test) report.test_accuracy = net::accuracy(*model, *test, cfg.report_limit);
  } else {
    auto t = net::train_classifier(data.train, arch, cfg, test);
    model = std::move(t.model);
    report = t.report;
  }

  const fs::path out = run.path(o.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  net::save_checkpoint(out, *model);
  json config = {{"arch", o.arch},     {"rounds", o.rounds}, {"batch", o.batch},
                 {"lr", o.lr},         {"seed", o.seed},     {"train_size", data.train.size()},
                 {"defense", defense}, {"knn_k", o.knn_k}};
  json result = {{"train_accuracy", report.train_accuracy}, {"final_loss", report.final_loss}};
  if (report.test_accuracy) result["test_accuracy"] = *report.test_accuracy;
  config["result"] = result;
  write_manifest(fs::path(out.string() + ".run_manifest.json"),
                 run.manifest("train", config, {{"data", o.data}}, {{"checkpoint", o.out}}));
  std::printf("trained %s: train accuracy %.4f", o.arch.c_str(), report.train_accuracy);
  if (report.test_accuracy) std::printf(", test accuracy %.4f", *report.test_accuracy);
  std::printf(" -> %s\n", out.string().c_str());
  return 0;
}

// ---- gen ----

struct GenOpts {
  std::string method, model, data = "data/mnist", corpus, config, out;
  int len = 4, mask_inner = 8, K = 50;
  std::size_t count = 100;
  std::uint64_t seed = 0;
  bool source_only = false;
};

int cmd_gen(const Run& run, const GenOpts& o) {
  const bool normal = o.method == eval::kNormal;
  advgen::GeneratorConfig cfg;
  if (!o.config.empty()) {
    const auto bytes = read_file(run.existing(o.config, "config"));
    cfg = advgen::parse_config(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  }
  bool image = false;
  if (!normal) {
    try {
      cfg.generator = advgen::parse_generator(o.method);
    } catch (const InvalidInput&) {
      throw UsageError("unknown method '" + o.method + "'; valid methods: " + valid_methods());
    }
    image = !advgen::is_text_generator(cfg.generator);
    if (o.model.empty()) throw UsageError("--model is required for method " + o.method);
  } else {
    image = !o.corpus.empty();
  }
  cfg.mask_inner = o.mask_inner;
  cfg.freq = advgen::default_freq_config(28, 28, o.mask_inner);
  cfg.noise.K = o.K;
  cfg.validate();
  if (o.len < 1) throw UsageError("--len must be >= 1");
  if (o.count < 1) throw UsageError("--count must be >= 1");

  std::optional<net::Classifier> model;
  if (!o.model.empty()) model = load_model(run, o.model);
  StagedDir staged(run.path(o.out));
  json config = {{"method", o.method}, {"model", o.model}, {"count", o.count}, {"seed", o.seed},
                 {"generator_config", advgen::render_config(cfg)}};
  std::size_t fooled = 0;

  if (!image) {
    const DataSplits data = load_data(run.path(o.data));
    const LabeledSet& pool = data.test.empty() ? data.train : data.test;
    auto caps = captcha::random_captchas(pool, o.len, o.count, o.seed);
    if (!normal) {
      for (auto& c : caps) {
        auto r = advgen::generate_text(*model, c, cfg);
        fooled += r.all_success();
        c = std::move(r.sample);
      }
    }
    captcha::save_captcha_set(staged.path(), caps, o.method, normal ? "-" : o.model, o.seed);
    config["len"] = o.len;
  } else {
    if (o.corpus.empty()) throw UsageError("image methods need --corpus");
    const LabeledSet corpus = captcha::load_png_corpus(run.existing(o.corpus, "corpus"));
    std::vector<captcha::ImageChallenge> set;
    for (std::size_t i = 0; i < o.count; ++i) {
      auto ch = captcha::build_image_challenge(corpus, o.seed + i);
      if (!normal) {
        auto r = advgen::generate_image(*model, ch.source, ch.source_category, cfg);
        fooled += r.success;
        ch.source = r.image;
        if (!o.source_only) {
          for (std::size_t k = 0; k < ch.candidates.size(); ++k) {
            ch.candidates[k] = advgen::generate_image(*model, ch.candidates[k], ch.candidate_categories[k], cfg).image;
          }
        }
      }
      set.push_back(std::move(ch));
    }
    captcha::save_image_challenges(staged.path(), set);
    config["K"] = o.K;
  }
  config["fooled_generating_model"] = fooled;
  write_manifest(staged.path() / "run_manifest.json",
                 run.manifest("gen", config, {{"data", image ? o.corpus : o.data}, {"model", o.model}},
                              {{"dir", o.out}}));
  staged.commit();
  std::printf("wrote %zu %s challenges to %s", o.count, image ? "image" : "text", run.path(o.out).string().c_str());
  if (!normal) std::printf(" (%zu fooled the generating model)", fooled);
  std::printf("\n");
  return 0;
}

// ---- eval ----

struct EvalOpts {
  std::string sets, models, chains = "none", out = "reports";
  std::string generators, gen_models, data = "data/mnist";
  std::size_t count = 100;
  int runs = 3, len = 4;
  std::uint64_t seed = 0;
};

int cmd_eval(const Run& run, const EvalOpts& o) {
  const auto model_names = split_list(o.models);
  const auto chain_list = split_list(o.chains);
  if (model_names.empty()) throw UsageError("--models is empty");
  if (chain_list.empty()) throw UsageError("--chains is empty");
  for (const auto& c : chain_list) {
    try {
      filters::parse_chain(c);
    } catch (const Error& e) {
      throw UsageError("bad chain '" + c + "': " + e.what());
    }
  }
  eval::ModelZoo zoo;
  for (const auto& m : model_names) zoo.emplace(m, load_model(run, m));

  eval::SarReport report;
  json config = {{"models", model_names}, {"chains", chain_list}};
  if (!o.generators.empty()) {
    eval::MatrixRequest req;
    req.generators = split_list(o.generators);
    req.gen_models = o.gen_models.empty() ? std::vector<std::string>{model_names.front()} : split_list(o.gen_models);
    for (const auto& m : req.gen_models) {
      if (!zoo.contains(m)) zoo.emplace(m, load_model(run, m));
    }
    req.attack_models = model_names;
    req.chains = chain_list;
    req.set_size = o.count;
    req.seed = o.seed;
    req.runs = o.runs;
    req.length = o.len;
    const DataSplits data = load_data(run.path(o.data));
    report = eval::sar_matrix(req, zoo, data.test.empty() ? data.train : data.test);
    config.update({{"generators", req.generators}, {"gen_models", req.gen_models}, {"count", o.count},
                   {"runs", o.runs}, {"seed", o.seed}, {"len", o.len}});
  } else {
    const auto set_names = split_list(o.sets);
    if (set_names.empty()) throw UsageError("give --sets or --generators");
    std::vector<eval::NamedSet> sets;
    for (const auto& s : set_names) {
      const fs::path dir = run.existing(s, "set");
      eval::NamedSet ns;
      ns.name = fs::path(s).filename().string();
      if (fs::exists(dir / "challenges.csv")) {
        ns.challenges = captcha::load_image_challenges(dir);
      } else {
        auto set = captcha::load_captcha_set(dir);
        ns.samples = std::move(set.samples);
        if (!set.rows.empty()) ns.seed = set.rows.front().seed;
      }
      sets.push_back(std::move(ns));
    }
    report = eval::evaluate_sets(sets, zoo, model_names, chain_list);
    config["sets"] = set_names;
  }

  StagedDir staged(run.path(o.out));
  write_file_atomic(staged.path() / "report.csv", eval::render_report(report, eval::ReportFormat::csv));
  write_file_atomic(staged.path() / "report.md", eval::render_report(report, eval::ReportFormat::markdown));
  write_manifest(staged.path() / "run_manifest.json",
                 run.manifest("eval", config, {{"sets", o.sets}, {"models", o.models}}, {{"dir", o.out}}));
  staged.commit();
  std::cout << eval::render_report(report, eval::ReportFormat::markdown);
  std::printf("%zu cells (%zu x %zu x %zu x %zu) -> %s\n", report.cells.size(), report.generators.size(),
              report.gen_models.size(), report.attack_models.size(), report.chains.size(),
              run.path(o.out).string().c_str());
  return 0;
}

// ---- corpus ----

struct CorpusOpts {
  std::string out = "data/color";
  int per_class = 300, size = 32;
  std::uint64_t seed = 11;
};

int cmd_corpus(const Run& run, const CorpusOpts& o) {
  if (o.per_class < 1) throw UsageError("--per-class must be >= 1");
  const auto corpus = captcha::synthetic_color_corpus(o.per_class, o.seed, o.size);
  StagedDir staged(run.path(o.out));
  captcha::save_png_corpus(staged.path(), corpus);
  write_manifest(staged.path() / "run_manifest.json",
                 run.manifest("corpus", {{"per_class", o.per_class}, {"size", o.size}, {"seed", o.seed}}, json::object(),
                              {{"dir", o.out}}));
  staged.commit();
  std::printf("wrote %zu images to %s\n", corpus.size(), run.path(o.out).string().c_str());
  return 0;
}

// ---- prepare-study ----

struct PrepareOpts {
  std::string text_model, image_model, data = "data/mnist", corpus, out = "study/challenges";
  std::size_t count = 10;
  std::uint64_t seed = 0;
};

int cmd_prepare(const Run& run, const PrepareOpts& o) {
  if (o.count < std::size_t(study::kTasksPerGroup)) {
    throw UsageError("--count must be >= " + std::to_string(study::kTasksPerGroup));
  }
  const auto text_model = load_model(run, o.text_model);
  const auto image_model = load_model(run, o.image_model);
  const DataSplits data = load_data(run.path(o.data));
  const LabeledSet& digits = data.test.empty() ? data.train : data.test;
  const LabeledSet corpus = captcha::load_png_corpus(run.existing(o.corpus, "corpus"));

  study::ChallengePool pool;
  advgen::GeneratorConfig text_cfg;
  text_cfg.generator = advgen::Generator::jsma_f;
  for (int len : study::kTextLengths) {
    auto caps = captcha::random_captchas(digits, len, o.count, o.seed + std::uint64_t(len));
    pool.text[{study::TaskKind::text_normal, len}] = caps;
    for (auto& c : caps) c = advgen::generate_text(text_model, c, text_cfg).sample;
    pool.text[{study::TaskKind::text_adv, len}] = std::move(caps);
  }
  std::vector<captcha::ImageChallenge> base;
  for (std::size_t i = 0; i < o.count; ++i) base.push_back(captcha::build_image_challenge(corpus, o.seed + 1000 + i));
  pool.image[{study::TaskKind::image_normal, 0}] = base;
  for (int K : study::kNoiseLevels) {
    advgen::GeneratorConfig cfg;
    cfg.generator = advgen::Generator::jsma_i;
    cfg.noise.K = K;
    auto set = base;
    for (auto& ch : set) {
      ch.source = advgen::generate_image(image_model, ch.source, ch.source_category, cfg).image;
      for (std::size_t k = 0; k < ch.candidates.size(); ++k) {
        ch.candidates[k] = advgen::generate_image(image_model, ch.candidates[k], ch.candidate_categories[k], cfg).image;
      }
    }
    pool.image[{study::TaskKind::image_adv, K}] = std::move(set);
  }
  StagedDir staged(run.path(o.out));
  study::save_challenge_pool(staged.path(), pool);
  write_manifest(staged.path() / "run_manifest.json",
                 run.manifest("prepare-study", {{"count", o.count}, {"seed", o.seed}},
                              {{"text_model", o.text_model}, {"image_model", o.image_model}, {"data", o.data},
                               {"corpus", o.corpus}},
                              {{"dir", o.out}}));
  staged.commit();
  std::printf("wrote study challenges to %s\n", run.path(o.out).string().c_str());
  return 0;
}

// ---- serve ----

struct ServeOpts {
  std::string data = "study", challenges, host = "127.0.0.1";
  int port = 8080;
};

int cmd_serve(const Run& run, const ServeOpts& o) {
  const fs::path data = run.path(o.data);
  const fs::path challenges = o.challenges.empty() ? data / "challenges" : run.path(o.challenges);
  if (!fs::is_directory(challenges)) throw UsageError("challenge directory " + challenges.string() + " does not exist");
  study::StudyService svc(study::load_challenge_pool(challenges), data);

  // Block the stop signals before httplib starts its workers so only the
  // waiter thread receives them.
  sigset_t stop_set;
  sigemptyset(&stop_set);
  sigaddset(&stop_set, SIGINT);
  sigaddset(&stop_set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &stop_set, nullptr);

  study::HttpServer server(svc);
  if (!server.bind(o.host, o.port)) throw UsageError("cannot listen on " + o.host + ":" + std::to_string(o.port));
  std::printf("serving on http://%s:%d (log %s)\n", o.host.c_str(), server.port(), svc.log_path().string().c_str());
  std::fflush(stdout);

  std::thread waiter([&] {
    int sig = 0;
    sigwait(&stop_set, &sig);
    server.stop();
  });
  server.listen();
  svc.flush();
  // listen() can also return on its own; wake the waiter in that case.
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  std::printf("stopped; %zu sessions, log flushed\n", svc.session_count());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial CAPTCHA generation and evaluation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", ACAPTCHA_VERSION);
  Run run;
  std::string workdir = ".";
  app.add_option("--workdir", workdir, "Base directory for relative paths");

  TrainOpts to;
  auto* train = app.add_subcommand("train", "Train a classifier");
  train->add_option("--arch", to.arch, "lenet, maxout, nin, svm or knn")->capture_default_str();
  train->add_option("--data", to.data, "MNIST directory or labeled PNG corpus")->capture_default_str();
  train->add_option("--test-data", to.test_data, "Separate held-out corpus");
  train->add_option("--out", to.out, "Checkpoint path")->capture_default_str();
  train->add_option("--rounds", to.rounds)->capture_default_str();
  train->add_option("--batch", to.batch)->capture_default_str();
  train->add_option("--lr", to.lr)->capture_default_str();
  train->add_option("--seed", to.seed)->capture_default_str();
  train->add_option("--train-size", to.train_size, "Leading samples used (0 = all)")->capture_default_str();
  train->add_option("--defense", to.defense, "none, distill, thermometer or ensemble")->capture_default_str();
  train->add_option("--T", to.temperature, "Distillation temperature")->capture_default_str();
  train->add_option("--levels", to.levels, "Thermometer levels")->capture_default_str();
  train->add_option("--donors", to.donors, "Ensemble donor checkpoints, comma separated");
  train->add_option("--generators", to.generators, "Ensemble generators, comma separated");
  train->add_option("--fraction", to.fraction, "Ensemble augmentation fraction")->capture_default_str();
  train->add_option("--k", to.knn_k, "KNN neighbors")->capture_default_str();

  GenOpts go;
  auto* gen = app.add_subcommand("gen", "Generate a CAPTCHA or image challenge set");
  gen->add_option("--method", go.method, "normal or a generator id")->required();
  gen->add_option("--model", go.model, "Generating model checkpoint");
  gen->add_option("--data", go.data, "MNIST directory")->capture_default_str();
  gen->add_option("--corpus", go.corpus, "Labeled PNG corpus for image challenges");
  gen->add_option("--config", go.config, "Generator config file");
  gen->add_option("--out", go.out, "Output directory")->required();
  gen->add_option("--len", go.len)->capture_default_str();
  gen->add_option("--count", go.count)->capture_default_str();
  gen->add_option("--mask-inner", go.mask_inner, "Side of the protected low-frequency block")->capture_default_str();
  gen->add_option("--K", go.K, "Noise level of image generators")->capture_default_str();
  gen->add_option("--seed", go.seed)->capture_default_str();
  gen->add_flag("--source-only", go.source_only, "Leave image candidates untouched");

  EvalOpts eo;
  auto* ev = app.add_subcommand("eval", "Compute SAR reports");
  ev->add_option("--sets", eo.sets, "Pre-generated set directories, comma separated");
  ev->add_option("--models", eo.models, "Attack models, comma separated")->required();
  ev->add_option("--chains", eo.chains, "Preprocessing chains, comma separated")->capture_default_str();
  ev->add_option("--out", eo.out, "Report directory")->capture_default_str();
  ev->add_option("--generators", eo.generators, "Generate sets on the fly (normal or generator ids)");
  ev->add_option("--gen-models", eo.gen_models, "Generating models for --generators");
  ev->add_option("--data", eo.data, "MNIST directory for --generators")->capture_default_str();
  ev->add_option("--count", eo.count, "Set size per run for --generators")->capture_default_str();
  ev->add_option("--runs", eo.runs)->capture_default_str();
  ev->add_option("--len", eo.len)->capture_default_str();
  ev->add_option("--seed", eo.seed)->capture_default_str();

  CorpusOpts co;
  auto* corpus = app.add_subcommand("corpus", "Write the synthetic 10-category color corpus");
  corpus->add_option("--out", co.out)->capture_default_str();
  corpus->add_option("--per-class", co.per_class)->capture_default_str();
  corpus->add_option("--size", co.size)->capture_default_str();
  corpus->add_option("--seed", co.seed)->capture_default_str();

  PrepareOpts po;
  auto* prep = app.add_subcommand("prepare-study", "Pre-generate the usability study challenges");
  prep->add_option("--text-model", po.text_model)->required();
  prep->add_option("--image-model", po.image_model)->required();
  prep->add_option("--data", po.data)->capture_default_str();
  prep->add_option("--corpus", po.corpus)->required();
  prep->add_option("--out", po.out)->capture_default_str();
  prep->add_option("--count", po.count, "Challenges per group")->capture_default_str();
  prep->add_option("--seed", po.seed)->capture_default_str();

  ServeOpts so;
  auto* serve = app.add_subcommand("serve", "Run the usability study service");
  serve->add_option("--port", so.port)->capture_default_str();
  serve->add_option("--host", so.host)->capture_default_str();
  serve->add_option("--data", so.data, "Directory for the event log")->capture_default_str();
  serve->add_option("--challenges", so.challenges, "Challenge directory (default <data>/challenges)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  run.workdir = workdir;
  run.argv.assign(argv, argv + argc);

  try {
    if (!fs::is_directory(run.workdir)) throw UsageError("workdir " + run.workdir.string() + " does not exist");
    if (*train) return cmd_train(run, to);
    if (*gen) return cmd_gen(run, go);
    if (*ev) return cmd_eval(run, eo);
    if (*corpus) return cmd_corpus(run, co);
    if (*prep) return cmd_prepare(run, po);
    if (*serve) return cmd_serve(run, so);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const InvalidInput& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
