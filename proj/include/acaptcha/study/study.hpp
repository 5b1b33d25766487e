#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "acaptcha/captcha/captcha.hpp"
#include "acaptcha/error.hpp"

namespace acaptcha::study {

// Service-level errors carry the HTTP status they map to.
class NotFound : public Error {
 public:
  using Error::Error;
};
class Conflict : public Error {
 public:
  using Error::Error;
};

enum class Gender { female, male };
enum class AgeRange { a16_20, a21_30, a31_40, a41_50, a51_60 };
enum class Education { primary_school, high_school, bachelor, master, phd };

struct Demographics {
  Gender gender = Gender::female;
  AgeRange age = AgeRange::a16_20;
  Education education = Education::bachelor;
};

std::string_view to_string(Gender g);
std::string_view to_string(AgeRange a);
std::string_view to_string(Education e);
Gender parse_gender(std::string_view s);
AgeRange parse_age(std::string_view s);
Education parse_education(std::string_view s);

enum class TaskKind { text_normal, text_adv, image_normal, image_adv };
std::string_view to_string(TaskKind k);
TaskKind parse_task_kind(std::string_view s);

// One step of the plan. `param` is the CAPTCHA length for text tasks and the
// noise level K for adversarial image tasks (0 for normal images).
struct PlannedTask {
  int task_id = 0;
  TaskKind kind = TaskKind::text_normal;
  int param = 0;
  std::size_t challenge = 0;  // index into the matching pool
};

// Fixed study layout: 5+5 normal text (lengths 4, 6), 5+5 adversarial text,
// 5 normal image tasks, then 5 adversarial image tasks at each K.
inline constexpr int kTasksPerGroup = 5;
inline constexpr int kTextLengths[] = {4, 6};
inline constexpr int kNoiseLevels[] = {10, 20, 30, 40, 50};
inline constexpr int kPlanSize = 50;

struct PoolKey {
  TaskKind kind;
  int param;
  friend auto operator<=>(const PoolKey&, const PoolKey&) = default;
};

// Pre-generated challenges the plan draws from.
struct ChallengePool {
  std::map<PoolKey, std::vector<captcha::CaptchaSample>> text;
  std::map<PoolKey, std::vector<captcha::ImageChallenge>> image;

  std::size_t size(PoolKey key) const;
  // Throws InvalidInput listing every group that is missing or empty.
  void validate() const;
};

// Directory layout: text_normal_4/, text_normal_6/, text_adv_4/, text_adv_6/
// (CAPTCHA sets) and image_normal/, image_adv_10/ ... image_adv_50/
// (image challenge sets).
std::string pool_dir_name(PoolKey key);
ChallengePool load_challenge_pool(const std::filesystem::path& dir);
void save_challenge_pool(const std::filesystem::path& dir, const ChallengePool& pool);

std::vector<PlannedTask> make_plan(const ChallengePool& pool, std::uint64_t seed);

enum class FailureReason { wrong_source, target_not_found, multiple_targets, mistake, other };
std::string_view to_string(FailureReason r);
FailureReason parse_failure_reason(std::string_view s);

// Answer to "which CAPTCHA is the most difficult one?" for each scenario.
enum class TextDifficulty { similar, normal, adversarial };
enum class ImageDifficulty { similar, normal, k10, k20, k30, k40, k50 };
std::string_view to_string(TextDifficulty d);
std::string_view to_string(ImageDifficulty d);
TextDifficulty parse_text_difficulty(std::string_view s);
ImageDifficulty parse_image_difficulty(std::string_view s);

struct FailureNote {
  int task_id = 0;
  FailureReason reason = FailureReason::other;
  std::string text;  // free text, only with `other`
};

struct Feedback {
  TextDifficulty text_difficulty = TextDifficulty::similar;
  ImageDifficulty image_difficulty = ImageDifficulty::similar;
  std::vector<FailureNote> failures;
};

struct AnswerRecord {
  std::string session_id;
  int task_id = 0;
  TaskKind kind = TaskKind::text_normal;
  int param = 0;
  std::string answer;
  bool correct = false;
  std::int64_t elapsed_ms = 0;
  std::int64_t received_at_ms = 0;
};

struct StatsRow {
  TaskKind kind = TaskKind::text_normal;
  int param = 0;
  std::size_t n = 0;
  double success_rate = 0.0;
  double average_time_ms = 0.0;
  double median_time_ms = 0.0;  // lower middle for even n
};

struct UsabilityStats {
  std::vector<StatsRow> rows;  // sorted by (kind, param)
  std::size_t n = 0;
  const StatsRow* find(TaskKind kind, int param) const;
};

UsabilityStats compute_stats(std::span<const AnswerRecord> records);
// Table with one column per (kind, param) group.
std::string render_stats_markdown(const UsabilityStats& stats);

// Challenge as sent to a participant: images and metadata, no ground truth.
struct TaskPayload {
  int task_id = 0;
  TaskKind kind = TaskKind::text_normal;
  int param = 0;
  int index = 0;  // position in the plan
  std::vector<std::uint8_t> image_png;                    // text CAPTCHA or image source
  std::vector<std::vector<std::uint8_t>> candidates_png;  // image tasks
};

struct Grade {
  bool correct = false;
  bool complete = false;  // last task answered
};

// Append-only newline-delimited JSON event log. One writer; readers replay.
class EventLog {
 public:
  explicit EventLog(std::filesystem::path path);
  void append(const std::string& json_line);
  void flush();
  const std::filesystem::path& path() const { return path_; }
  std::vector<std::string> read_all() const;

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

class StudyService {
 public:
  // Replays any existing log so sessions survive restarts.
  StudyService(ChallengePool pool, const std::filesystem::path& data_dir, std::uint64_t seed = 0);
  ~StudyService();

  std::string create_session(const Demographics& d);
  // nullopt once every task is answered.
  std::optional<TaskPayload> next_task(const std::string& session_id) const;
  Grade submit_answer(const std::string& session_id, int task_id, const std::string& answer, std::int64_t elapsed_ms);
  void record_feedback(const std::string& session_id, const Feedback& f);
  // Failed task ids of a completed session, for the feedback step.
  std::vector<int> failed_tasks(const std::string& session_id) const;
  UsabilityStats stats() const;
  std::vector<AnswerRecord> answers() const;
  void flush();

  const std::filesystem::path& log_path() const;
  std::size_t session_count() const;

 private:
  struct Session;
  const Session& get(const std::string& id) const;
  Session& get(const std::string& id);
  void replay();
  bool grade(const PlannedTask& t, const std::string& answer) const;

  ChallengePool pool_;
  std::unique_ptr<EventLog> log_;
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
  std::map<std::string, std::unique_ptr<Session>> sessions_;
  std::vector<AnswerRecord> answers_;
  mutable std::mutex mu_;
};

// Reads answer records back from a log file; stats over them must equal the
// live service's.
std::vector<AnswerRecord> read_answer_log(const std::filesystem::path& log);

// Transport-free request handling: JSON in, status + JSON out.
struct HttpReply {
  int status = 200;
  std::string body;
};
HttpReply handle_request(StudyService& svc, std::string_view method, std::string_view path, std::string_view body);

// HTTP front end over handle_request.
class HttpServer {
 public:
  explicit HttpServer(StudyService& svc);
  ~HttpServer();
  // Binds and returns false if the port is unavailable. Port 0 picks a free one.
  bool bind(const std::string& host, int port);
  int port() const;
  // Blocks until stop().
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace acaptcha::study
