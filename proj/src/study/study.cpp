#include "acaptcha/study/study.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <random>
#include <sstream>

#include <json.hpp>

#include "acaptcha/fsutil.hpp"
#include "acaptcha/image_io.hpp"

namespace acaptcha::study {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

template <typename E, std::size_t N>
E lookup(std::string_view s, const std::pair<E, std::string_view> (&table)[N], const char* what) {
  for (const auto& [e, name] : table) {
    if (name == s) return e;
  }
  std::string msg = std::string("unknown ") + what + " '" + std::string(s) + "'; expected one of:";
  for (const auto& [e, name] : table) msg += " " + std::string(name);
  throw InvalidInput(msg);
}

template <typename E, std::size_t N>
std::string_view name_of(E v, const std::pair<E, std::string_view> (&table)[N]) {
  for (const auto& [e, name] : table) {
    if (e == v) return name;
  }
  return "?";
}

constexpr std::pair<Gender, std::string_view> kGenders[] = {{Gender::female, "female"}, {Gender::male, "male"}};
constexpr std::pair<AgeRange, std::string_view> kAges[] = {{AgeRange::a16_20, "16-20"},
                                                           {AgeRange::a21_30, "21-30"},
                                                           {AgeRange::a31_40, "31-40"},
                                                           {AgeRange::a41_50, "41-50"},
                                                           {AgeRange::a51_60, "51-60"}};
constexpr std::pair<Education, std::string_view> kEducation[] = {{Education::primary_school, "primary_school"},
                                                                 {Education::high_school, "high_school"},
                                                                 {Education::bachelor, "bachelor"},
                                                                 {Education::master, "master"},
                                                                 {Education::phd, "phd"}};
constexpr std::pair<TaskKind, std::string_view> kKinds[] = {{TaskKind::text_normal, "text_normal"},
                                                            {TaskKind::text_adv, "text_adv"},
                                                            {TaskKind::image_normal, "image_normal"},
                                                            {TaskKind::image_adv, "image_adv"}};
constexpr std::pair<FailureReason, std::string_view> kReasons[] = {
    {FailureReason::wrong_source, "wrong_source"},
    {FailureReason::target_not_found, "target_not_found"},
    {FailureReason::multiple_targets, "multiple_targets"},
    {FailureReason::mistake, "mistake"},
    {FailureReason::other, "other"}};
constexpr std::pair<TextDifficulty, std::string_view> kTextDiff[] = {{TextDifficulty::similar, "similar"},
                                                                     {TextDifficulty::normal, "normal"},
                                                                     {TextDifficulty::adversarial, "adversarial"}};
constexpr std::pair<ImageDifficulty, std::string_view> kImageDiff[] = {
    {ImageDifficulty::similar, "similar"}, {ImageDifficulty::normal, "normal"}, {ImageDifficulty::k10, "k10"},
    {ImageDifficulty::k20, "k20"},         {ImageDifficulty::k30, "k30"},       {ImageDifficulty::k40, "k40"},
    {ImageDifficulty::k50, "k50"}};

bool is_text(TaskKind k) { return k == TaskKind::text_normal || k == TaskKind::text_adv; }

std::vector<PoolKey> plan_groups() {
  std::vector<PoolKey> g;
  for (int len : kTextLengths) g.push_back({TaskKind::text_normal, len});
  for (int len : kTextLengths) g.push_back({TaskKind::text_adv, len});
  g.push_back({TaskKind::image_normal, 0});
  for (int k : kNoiseLevels) g.push_back({TaskKind::image_adv, k});
  return g;
}

}  // namespace

std::string_view to_string(Gender g) { return name_of(g, kGenders); }
std::string_view to_string(AgeRange a) { return name_of(a, kAges); }
std::string_view to_string(Education e) { return name_of(e, kEducation); }
Gender parse_gender(std::string_view s) { return lookup(s, kGenders, "gender"); }
AgeRange parse_age(std::string_view s) { return lookup(s, kAges, "age range"); }
Education parse_education(std::string_view s) { return lookup(s, kEducation, "education level"); }
std::string_view to_string(TaskKind k) { return name_of(k, kKinds); }
TaskKind parse_task_kind(std::string_view s) { return lookup(s, kKinds, "task kind"); }
std::string_view to_string(FailureReason r) { return name_of(r, kReasons); }
FailureReason parse_failure_reason(std::string_view s) { return lookup(s, kReasons, "failure reason"); }
std::string_view to_string(TextDifficulty d) { return name_of(d, kTextDiff); }
std::string_view to_string(ImageDifficulty d) { return name_of(d, kImageDiff); }
TextDifficulty parse_text_difficulty(std::string_view s) { return lookup(s, kTextDiff, "text difficulty"); }
ImageDifficulty parse_image_difficulty(std::string_view s) { return lookup(s, kImageDiff, "image difficulty"); }

// ---- challenge pool ----

std::size_t ChallengePool::size(PoolKey key) const {
  if (is_text(key.kind)) {
    const auto it = text.find(key);
    return it == text.end() ? 0 : it->second.size();
  }
  const auto it = image.find(key);
  return it == image.end() ? 0 : it->second.size();
}

void ChallengePool::validate() const {
  std::string missing;
  for (const auto& key : plan_groups()) {
    if (size(key) < std::size_t(kTasksPerGroup)) {
      missing += " " + pool_dir_name(key) + "(" + std::to_string(size(key)) + ")";
    }
  }
  if (!missing.empty()) {
    throw InvalidInput("challenge pool needs at least " + std::to_string(kTasksPerGroup) +
                       " challenges per group; short groups:" + missing);
  }
}

std::string pool_dir_name(PoolKey key) {
  switch (key.kind) {
    case TaskKind::text_normal: return "text_normal_" + std::to_string(key.param);
    case TaskKind::text_adv: return "text_adv_" + std::to_string(key.param);
    case TaskKind::image_normal: return "image_normal";
    case TaskKind::image_adv: return "image_adv_" + std::to_string(key.param);
  }
  return "?";
}

ChallengePool load_challenge_pool(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw InvalidInput("challenge directory " + dir.string() + " does not exist");
  ChallengePool pool;
  for (const auto& key : plan_groups()) {
    const fs::path sub = dir / pool_dir_name(key);
    if (!fs::is_directory(sub)) continue;
    if (is_text(key.kind)) {
      pool.text[key] = captcha::load_captcha_set(sub).samples;
    } else {
      pool.image[key] = captcha::load_image_challenges(sub);
    }
  }
  pool.validate();
  return pool;
}

void save_challenge_pool(const fs::path& dir, const ChallengePool& pool) {
  for (const auto& [key, set] : pool.text) {
    captcha::save_captcha_set(dir / pool_dir_name(key), set, std::string(to_string(key.kind)), "-", 0);
  }
  for (const auto& [key, set] : pool.image) captcha::save_image_challenges(dir / pool_dir_name(key), set);
}

std::vector<PlannedTask> make_plan(const ChallengePool& pool, std::uint64_t seed) {
  pool.validate();
  std::mt19937_64 rng(seed);
  std::vector<PlannedTask> plan;
  for (const auto& key : plan_groups()) {
    const std::size_t n = pool.size(key);
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = 0; i < std::size_t(kTasksPerGroup); ++i) {
      std::swap(idx[i], idx[i + std::size_t(rng() % (n - i))]);
      plan.push_back({int(plan.size()) + 1, key.kind, key.param, idx[i]});
    }
  }
  return plan;
}

// ---- stats ----

const StatsRow* UsabilityStats::find(TaskKind kind, int param) const {
  for (const auto& r : rows) {
    if (r.kind == kind && r.param == param) return &r;
  }
  return nullptr;
}

UsabilityStats compute_stats(std::span<const AnswerRecord> records) {
  std::map<std::pair<TaskKind, int>, std::vector<const AnswerRecord*>> groups;
  for (const auto& r : records) groups[{r.kind, r.param}].push_back(&r);
  UsabilityStats out;
  out.n = records.size();
  for (const auto& [key, rs] : groups) {
    StatsRow row{key.first, key.second, rs.size()};
    std::vector<std::int64_t> times;
    std::size_t ok = 0;
    double total = 0.0;
    for (const auto* r : rs) {
      ok += r->correct;
      total += double(r->elapsed_ms);
      times.push_back(r->elapsed_ms);
    }
    std::sort(times.begin(), times.end());
    row.success_rate = double(ok) / double(rs.size());
    row.average_time_ms = total / double(rs.size());
    row.median_time_ms = double(times[(times.size() - 1) / 2]);
    out.rows.push_back(row);
  }
  return out;
}

std::string render_stats_markdown(const UsabilityStats& stats) {
  std::ostringstream out;
  auto label = [](const StatsRow& r) {
    switch (r.kind) {
      case TaskKind::text_normal: return "text normal ι=" + std::to_string(r.param);
      case TaskKind::text_adv: return "text adversarial ι=" + std::to_string(r.param);
      case TaskKind::image_normal: return std::string("image normal");
      case TaskKind::image_adv: return "image adversarial K=" + std::to_string(r.param);
    }
    return std::string("?");
  };
  out << "| |";
  for (const auto& r : stats.rows) out << ' ' << label(r) << " |";
  out << "\n|---|";
  for (std::size_t i = 0; i < stats.rows.size(); ++i) out << "---:|";
  char buf[32];
  out << "\n| Success rate |";
  for (const auto& r : stats.rows) {
    std::snprintf(buf, sizeof buf, "%.1f%%", 100.0 * r.success_rate);
    out << ' ' << buf << " |";
  }
  out << "\n| Average time |";
  for (const auto& r : stats.rows) {
    std::snprintf(buf, sizeof buf, "%.1fs", r.average_time_ms / 1000.0);
    out << ' ' << buf << " |";
  }
  out << "\n| Median time |";
  for (const auto& r : stats.rows) {
    std::snprintf(buf, sizeof buf, "%.1fs", r.median_time_ms / 1000.0);
    out << ' ' << buf << " |";
  }
  out << "\n| n |";
  for (const auto& r : stats.rows) out << ' ' << r.n << " |";
  out << '\n';
  return out.str();
}

// ---- event log ----

EventLog::EventLog(fs::path path) : path_(std::move(path)) {
  if (path_.has_parent_path()) fs::create_directories(path_.parent_path());
  out_.open(path_, std::ios::app | std::ios::binary);
  if (!out_) throw Error("cannot open log " + path_.string());
}

void EventLog::append(const std::string& json_line) {
  out_ << json_line << '\n';
  out_.flush();
  if (!out_) throw Error("write to " + path_.string() + " failed");
}

void EventLog::flush() { out_.flush(); }

std::vector<std::string> EventLog::read_all() const {
  std::ifstream in(path_, std::ios::binary);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

namespace {

json answer_json(const AnswerRecord& a) {
  return {{"type", "answer"},      {"session_id", a.session_id}, {"task_id", a.task_id},
          {"kind", to_string(a.kind)}, {"param", a.param},       {"answer", a.answer},
          {"correct", a.correct},  {"elapsed_ms", a.elapsed_ms}, {"received_at_ms", a.received_at_ms}};
}

AnswerRecord answer_from_json(const json& j) {
  AnswerRecord a;
  a.session_id = j.at("session_id").get<std::string>();
  a.task_id = j.at("task_id").get<int>();
  a.kind = parse_task_kind(j.at("kind").get<std::string>());
  a.param = j.at("param").get<int>();
  a.answer = j.at("answer").get<std::string>();
  a.correct = j.at("correct").get<bool>();
  a.elapsed_ms = j.at("elapsed_ms").get<std::int64_t>();
  a.received_at_ms = j.at("received_at_ms").get<std::int64_t>();
  return a;
}

}  // namespace

std::vector<AnswerRecord> read_answer_log(const fs::path& log) {
  std::ifstream in(log, std::ios::binary);
  if (!in) throw InvalidInput("cannot read log " + log.string());
  std::vector<AnswerRecord> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      if (j.at("type") == "answer") out.push_back(answer_from_json(j));
    } catch (const json::exception& e) {
      throw FormatError(log.string() + " line " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

// ---- service ----

struct StudyService::Session {
  std::string id;
  Demographics demographics;
  std::int64_t created_at_ms = 0;
  std::vector<PlannedTask> plan;
  std::vector<int> outcome;  // -1 unanswered, 0 wrong, 1 correct
  std::size_t next = 0;
  bool feedback = false;

  bool complete() const { return next == plan.size(); }
};

StudyService::StudyService(ChallengePool pool, const fs::path& data_dir, std::uint64_t seed)
    : pool_(std::move(pool)), seed_(seed) {
  pool_.validate();
  fs::create_directories(data_dir);
  log_ = std::make_unique<EventLog>(data_dir / "events.ndjson");
  replay();
}

StudyService::~StudyService() = default;

const fs::path& StudyService::log_path() const { return log_->path(); }

std::size_t StudyService::session_count() const {
  std::lock_guard lock(mu_);
  return sessions_.size();
}

void StudyService::replay() {
  std::size_t n = 0;
  for (const auto& line : log_->read_all()) {
    ++n;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw FormatError(log_->path().string() + " line " + std::to_string(n) + ": " + e.what());
    }
    const std::string type = j.value("type", "");
    if (type == "session") {
      auto s = std::make_unique<Session>();
      s->id = j.at("session_id").get<std::string>();
      const auto& d = j.at("demographics");
      s->demographics = {parse_gender(d.at("gender").get<std::string>()), parse_age(d.at("age").get<std::string>()),
                         parse_education(d.at("education").get<std::string>())};
      s->created_at_ms = j.at("created_at_ms").get<std::int64_t>();
      for (const auto& t : j.at("plan")) {
        s->plan.push_back({t.at("task_id").get<int>(), parse_task_kind(t.at("kind").get<std::string>()),
                           t.at("param").get<int>(), t.at("challenge").get<std::size_t>()});
      }
      s->outcome.assign(s->plan.size(), -1);
      ++counter_;
      sessions_[s->id] = std::move(s);
    } else if (type == "answer") {
      AnswerRecord a = answer_from_json(j);
      auto it = sessions_.find(a.session_id);
      if (it == sessions_.end()) throw FormatError("log answer for unknown session " + a.session_id);
      Session& s = *it->second;
      s.outcome[s.next++] = a.correct;
      answers_.push_back(std::move(a));
    } else if (type == "feedback") {
      auto it = sessions_.find(j.at("session_id").get<std::string>());
      if (it != sessions_.end()) it->second->feedback = true;
    }
  }
}

std::string StudyService::create_session(const Demographics& d) {
  std::lock_guard lock(mu_);
  static thread_local std::random_device rd;
  std::mt19937_64 rng((std::uint64_t(rd()) << 32) ^ rd() ^ (seed_ * 0x9E3779B97F4A7C15ULL) ^ ++counter_);
  std::string id;
  do {
    char buf[33];
    std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(rng()),
                  static_cast<unsigned long long>(rng()));
    id = buf;
  } while (sessions_.contains(id));

  auto s = std::make_unique<Session>();
  s->id = id;
  s->demographics = d;
  s->created_at_ms = now_ms();
  s->plan = make_plan(pool_, rng());
  s->outcome.assign(s->plan.size(), -1);

  json plan = json::array();
  for (const auto& t : s->plan) {
    plan.push_back({{"task_id", t.task_id}, {"kind", to_string(t.kind)}, {"param", t.param}, {"challenge", t.challenge}});
  }
  log_->append(json{{"type", "session"},
                    {"session_id", id},
                    {"demographics",
                     {{"gender", to_string(d.gender)}, {"age", to_string(d.age)}, {"education", to_string(d.education)}}},
                    {"created_at_ms", s->created_at_ms},
                    {"plan", plan}}
                   .dump());
  sessions_[id] = std::move(s);
  return id;
}

const StudyService::Session& StudyService::get(const std::string& id) const {
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) throw NotFound("unknown session " + id);
  return *it->second;
}

StudyService::Session& StudyService::get(const std::string& id) {
  return const_cast<Session&>(std::as_const(*this).get(id));
}

std::optional<TaskPayload> StudyService::next_task(const std::string& session_id) const {
  std::lock_guard lock(mu_);
  const Session& s = get(session_id);
  if (s.complete()) return std::nullopt;
  const PlannedTask& t = s.plan[s.next];
  TaskPayload p{t.task_id, t.kind, t.param, int(s.next), {}, {}};
  if (is_text(t.kind)) {
    p.image_png = io::encode_png(pool_.text.at({t.kind, t.param})[t.challenge].image);
  } else {
    const auto& ch = pool_.image.at({t.kind, t.param})[t.challenge];
    p.image_png = io::encode_png(ch.source);
    for (const auto& c : ch.candidates) p.candidates_png.push_back(io::encode_png(c));
  }
  return p;
}

bool StudyService::grade(const PlannedTask& t, const std::string& answer) const {
  if (is_text(t.kind)) return answer == pool_.text.at({t.kind, t.param})[t.challenge].label;
  int idx = -1;
  const auto [end, ec] = std::from_chars(answer.data(), answer.data() + answer.size(), idx);
  if (ec != std::errc() || end != answer.data() + answer.size()) {
    throw InvalidInput("image answers are candidate indices, got '" + answer + "'");
  }
  const auto& ch = pool_.image.at({t.kind, t.param})[t.challenge];
  if (idx < 0 || idx >= int(ch.candidates.size())) throw InvalidInput("candidate index out of range");
  return idx == ch.target_index;
}

Grade StudyService::submit_answer(const std::string& session_id, int task_id, const std::string& answer,
                                  std::int64_t elapsed_ms) {
  std::lock_guard lock(mu_);
  Session& s = get(session_id);
  if (elapsed_ms < 0) throw InvalidInput("elapsed_ms must be >= 0");
  const auto pos = std::find_if(s.plan.begin(), s.plan.end(), [&](const PlannedTask& t) { return t.task_id == task_id; });
  if (pos == s.plan.end()) throw InvalidInput("task " + std::to_string(task_id) + " is not in this session");
  const std::size_t k = std::size_t(pos - s.plan.begin());
  if (k < s.next) throw Conflict("task " + std::to_string(task_id) + " was already answered");
  if (k > s.next) {
    throw InvalidInput("task " + std::to_string(task_id) + " answered out of order; current task is " +
                       std::to_string(s.plan[s.next].task_id));
  }
  AnswerRecord a{session_id, task_id, pos->kind, pos->param, answer, grade(*pos, answer), elapsed_ms, now_ms()};
  log_->append(answer_json(a).dump());
  s.outcome[s.next++] = a.correct;
  answers_.push_back(a);
  return {a.correct, s.complete()};
}

std::vector<int> StudyService::failed_tasks(const std::string& session_id) const {
  std::lock_guard lock(mu_);
  const Session& s = get(session_id);
  std::vector<int> out;
  for (std::size_t i = 0; i < s.plan.size(); ++i) {
    if (s.outcome[i] == 0) out.push_back(s.plan[i].task_id);
  }
  return out;
}

void StudyService::record_feedback(const std::string& session_id, const Feedback& f) {
  std::lock_guard lock(mu_);
  Session& s = get(session_id);
  if (!s.complete()) throw InvalidInput("feedback is only accepted after the last task");
  if (s.feedback) throw Conflict("feedback already recorded for session " + session_id);
  std::vector<int> seen;
  json failures = json::array();
  for (const auto& n : f.failures) {
    const auto pos =
        std::find_if(s.plan.begin(), s.plan.end(), [&](const PlannedTask& t) { return t.task_id == n.task_id; });
    if (pos == s.plan.end() || s.outcome[std::size_t(pos - s.plan.begin())] != 0) {
      throw InvalidInput("task " + std::to_string(n.task_id) + " is not a failed task of this session");
    }
    if (std::find(seen.begin(), seen.end(), n.task_id) != seen.end()) {
      throw InvalidInput("task " + std::to_string(n.task_id) + " listed twice");
    }
    if (!n.text.empty() && n.reason != FailureReason::other) {
      throw InvalidInput("free text is only allowed with reason 'other'");
    }
    seen.push_back(n.task_id);
    failures.push_back({{"task_id", n.task_id}, {"reason", to_string(n.reason)}, {"text", n.text}});
  }
  log_->append(json{{"type", "feedback"},
                    {"session_id", session_id},
                    {"text_difficulty", to_string(f.text_difficulty)},
                    {"image_difficulty", to_string(f.image_difficulty)},
                    {"failures", failures},
                    {"received_at_ms", now_ms()}}
                   .dump());
  s.feedback = true;
}

UsabilityStats StudyService::stats() const {
  std::lock_guard lock(mu_);
  return compute_stats(answers_);
}

std::vector<AnswerRecord> StudyService::answers() const {
  std::lock_guard lock(mu_);
  return answers_;
}

void StudyService::flush() {
  std::lock_guard lock(mu_);
  log_->flush();
}

}  // namespace acaptcha::study
