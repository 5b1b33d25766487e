#include <doctest.h>

#include <algorithm>
#include <set>

#include "acaptcha/fsutil.hpp"
#include "fixtures.hpp"
#include "study_pool.hpp"

using namespace acaptcha;
using namespace acaptcha::study;
using testing::Gen;

namespace {

const Demographics kPerson{Gender::male, AgeRange::a21_30, Education::master};

AnswerRecord rec(TaskKind kind, int param, bool correct, std::int64_t ms) {
  AnswerRecord a;
  a.session_id = "s";
  a.kind = kind;
  a.param = param;
  a.correct = correct;
  a.elapsed_ms = ms;
  return a;
}

// Answers every task, getting the listed task ids wrong.
void play(StudyService& svc, const std::string& id, const std::set<int>& miss, std::int64_t ms = 1000) {
  while (const auto t = svc.next_task(id)) {
    const auto answer = miss.count(t->task_id) ? testing::wrong(*t) : testing::solve(*t);
    svc.submit_answer(id, t->task_id, answer, ms);
  }
}

// Independent recomputation: for each group, rate, mean and lower median.
struct Brute {
  std::size_t n = 0, ok = 0;
  std::vector<std::int64_t> times;
};

}  // namespace

TEST_SUITE("study") {
  TEST_CASE("plan layout") {
    const auto pool = testing::flat_pool();
    const auto plan = make_plan(pool, 3);
    REQUIRE(plan.size() == std::size_t(kPlanSize));
    CHECK(plan.front().kind == TaskKind::text_normal);
    CHECK(plan.front().param == 4);
    std::vector<std::pair<TaskKind, int>> expected;
    for (auto kind : {TaskKind::text_normal, TaskKind::text_adv})
      for (int len : kTextLengths)
        for (int i = 0; i < kTasksPerGroup; ++i) expected.emplace_back(kind, len);
    for (int i = 0; i < kTasksPerGroup; ++i) expected.emplace_back(TaskKind::image_normal, 0);
    for (int k : kNoiseLevels)
      for (int i = 0; i < kTasksPerGroup; ++i) expected.emplace_back(TaskKind::image_adv, k);
    for (std::size_t i = 0; i < plan.size(); ++i) {
      CHECK(plan[i].task_id == int(i) + 1);
      CHECK(std::make_pair(plan[i].kind, plan[i].param) == expected[i]);
    }
    // No challenge repeats inside a group.
    for (std::size_t g = 0; g < plan.size(); g += kTasksPerGroup) {
      std::set<std::size_t> used;
      for (int i = 0; i < kTasksPerGroup; ++i) used.insert(plan[g + std::size_t(i)].challenge);
      CHECK(used.size() == std::size_t(kTasksPerGroup));
    }
  }

  TEST_CASE("pool validation names missing groups") {
    auto pool = testing::flat_pool();
    pool.text.erase({TaskKind::text_adv, 6});
    pool.image[{TaskKind::image_adv, 30}].resize(2);
    try {
      pool.validate();
      FAIL("expected InvalidInput");
    } catch (const InvalidInput& e) {
      const std::string msg = e.what();
      CHECK(msg.find(pool_dir_name({TaskKind::text_adv, 6})) != std::string::npos);
      CHECK(msg.find(pool_dir_name({TaskKind::image_adv, 30})) != std::string::npos);
    }
  }

  TEST_CASE("pool survives disk") {
    const auto dir = testing::scratch("pool");
    const auto pool = testing::flat_pool(5);
    save_challenge_pool(dir, pool);
    const auto back = load_challenge_pool(dir);
    CHECK(back.text.size() == pool.text.size());
    CHECK(back.image.size() == pool.image.size());
    const PoolKey k{TaskKind::text_normal, 6};
    CHECK(back.text.at(k)[2].label == pool.text.at(k)[2].label);
    const PoolKey i{TaskKind::image_adv, 40};
    CHECK(back.image.at(i)[1].target_index == pool.image.at(i)[1].target_index);
  }

  TEST_CASE("demographic enums") {
    CHECK(parse_education("phd") == Education::phd);
    CHECK_THROWS_AS(parse_education("kindergarten"), InvalidInput);
    CHECK_THROWS_AS(parse_gender(""), InvalidInput);
    CHECK_THROWS_AS(parse_age("61-70"), InvalidInput);
    CHECK(to_string(parse_age("31-40")) == "31-40");
  }

  TEST_CASE("failure reasons") {
    const std::vector<std::string> names{"wrong_source", "target_not_found", "multiple_targets", "mistake", "other"};
    for (const auto& n : names) CHECK(to_string(parse_failure_reason(n)) == n);
    CHECK_THROWS_AS(parse_failure_reason("bored"), InvalidInput);
  }

  TEST_CASE("sessions") {
    StudyService svc(testing::flat_pool(), testing::scratch("sessions"), 1);
    const auto a = svc.create_session(kPerson);
    const auto b = svc.create_session(kPerson);
    CHECK(a != b);
    CHECK(a.size() == 32);
    CHECK(svc.session_count() == 2);
    const auto t = svc.next_task(a);
    REQUIRE(t);
    CHECK(t->kind == TaskKind::text_normal);
    CHECK(t->param == 4);
    CHECK(t->index == 0);
    CHECK(t->candidates_png.empty());
    CHECK(io::decode_png(t->image_png).width() == 4 * 28);
    CHECK_THROWS_AS(svc.next_task("ffff"), NotFound);
  }

  TEST_CASE("grading is all or nothing") {
    StudyService svc(testing::flat_pool(), testing::scratch("grading"), 2);
    const auto id = svc.create_session(kPerson);
    auto t = svc.next_task(id);
    const auto right = testing::solve(*t);
    CHECK(svc.submit_answer(id, t->task_id, right, 800).correct);
    t = svc.next_task(id);
    std::string off = testing::solve(*t);
    off.back() = off.back() == '9' ? '0' : char(off.back() + 1);
    CHECK_FALSE(svc.submit_answer(id, t->task_id, off, 800).correct);
    t = svc.next_task(id);
    CHECK_FALSE(svc.submit_answer(id, t->task_id, testing::solve(*t) + "1", 800).correct);
  }

  TEST_CASE("exact label match") {
    auto pool = testing::flat_pool();
    for (auto& c : pool.text[{TaskKind::text_normal, 4}]) c = testing::flat_text("3071");
    StudyService svc(pool, testing::scratch("exact"), 3);
    const auto id = svc.create_session(kPerson);
    CHECK(svc.submit_answer(id, 1, "3071", 10).correct);
    CHECK_FALSE(svc.submit_answer(id, 2, "3072", 10).correct);
  }

  TEST_CASE("image tasks grade the target index") {
    const auto pool = testing::flat_pool();
    StudyService svc(pool, testing::scratch("image-grade"), 4);
    const auto id = svc.create_session(kPerson);
    for (int i = 0; i < 20; ++i) {
      const auto t = svc.next_task(id);
      svc.submit_answer(id, t->task_id, testing::solve(*t), 5);
    }
    const auto t = svc.next_task(id);
    REQUIRE(t->kind == TaskKind::image_normal);
    REQUIRE(t->candidates_png.size() == std::size_t(captcha::kCandidateCount));
    CHECK_THROWS_AS(svc.submit_answer(id, t->task_id, "ten", 5), InvalidInput);
    CHECK_THROWS_AS(svc.submit_answer(id, t->task_id, "10", 5), InvalidInput);
    CHECK(svc.submit_answer(id, t->task_id, testing::solve(*t), 5).correct);
    const auto u = svc.next_task(id);
    CHECK_FALSE(svc.submit_answer(id, u->task_id, testing::wrong(*u), 5).correct);
  }

  TEST_CASE("ordering and replays") {
    StudyService svc(testing::flat_pool(), testing::scratch("order"), 5);
    const auto id = svc.create_session(kPerson);
    CHECK_THROWS_AS(svc.submit_answer(id, 2, "0000", 1), InvalidInput);
    CHECK_THROWS_AS(svc.submit_answer(id, 99, "0000", 1), InvalidInput);
    CHECK_THROWS_AS(svc.submit_answer(id, 1, "0000", -1), InvalidInput);
    svc.submit_answer(id, 1, "0000", 1);
    CHECK_THROWS_AS(svc.submit_answer(id, 1, "0000", 1), Conflict);
    CHECK_THROWS_AS(svc.submit_answer("abc", 2, "0000", 1), NotFound);
    CHECK(svc.answers().size() == 1);
  }

  TEST_CASE("completion and feedback") {
    StudyService svc(testing::flat_pool(), testing::scratch("feedback"), 6);
    const auto id = svc.create_session(kPerson);
    Feedback f;
    CHECK_THROWS_AS(svc.record_feedback(id, f), InvalidInput);
    play(svc, id, {3, 30});
    CHECK_FALSE(svc.next_task(id).has_value());
    CHECK(svc.failed_tasks(id) == std::vector<int>{3, 30});

    f.failures = {{4, FailureReason::mistake, ""}};
    CHECK_THROWS_AS(svc.record_feedback(id, f), InvalidInput);
    f.failures = {{3, FailureReason::mistake, "typo"}};
    CHECK_THROWS_AS(svc.record_feedback(id, f), InvalidInput);
    f.failures = {{3, FailureReason::mistake, ""}, {3, FailureReason::other, ""}};
    CHECK_THROWS_AS(svc.record_feedback(id, f), InvalidInput);
    f.failures = {{3, FailureReason::mistake, ""}, {30, FailureReason::other, "too blurry"}};
    f.image_difficulty = ImageDifficulty::k50;
    CHECK_NOTHROW(svc.record_feedback(id, f));
    CHECK_THROWS_AS(svc.record_feedback(id, f), Conflict);

    const auto clean = svc.create_session(kPerson);
    play(svc, clean, {});
    CHECK(svc.failed_tasks(clean).empty());
    CHECK_NOTHROW(svc.record_feedback(clean, Feedback{}));

    const auto lines = EventLog(svc.log_path()).read_all();
    CHECK(std::count_if(lines.begin(), lines.end(),
                        [](const std::string& l) { return l.find("\"feedback\"") != std::string::npos; }) == 2);
  }

  TEST_CASE("stats arithmetic") {
    std::vector<AnswerRecord> rs;
    const int secs[] = {8, 7, 9, 10, 6};
    const bool ok[] = {true, true, false, true, true};
    for (int i = 0; i < 5; ++i) rs.push_back(rec(TaskKind::text_normal, 4, ok[i], secs[i] * 1000));
    const auto s = compute_stats(rs);
    REQUIRE(s.rows.size() == 1);
    CHECK(s.n == 5);
    CHECK(s.rows[0].success_rate == doctest::Approx(0.8));
    CHECK(s.rows[0].average_time_ms == doctest::Approx(8000));
    CHECK(s.rows[0].median_time_ms == 8000);

    const AnswerRecord one[] = {rec(TaskKind::image_adv, 30, false, 4321)};
    const auto single = compute_stats(one);
    CHECK(single.rows[0].average_time_ms == 4321);
    CHECK(single.rows[0].median_time_ms == 4321);
    CHECK(single.rows[0].success_rate == 0.0);

    const AnswerRecord even[] = {rec(TaskKind::text_adv, 6, true, 4), rec(TaskKind::text_adv, 6, true, 1),
                                 rec(TaskKind::text_adv, 6, true, 3), rec(TaskKind::text_adv, 6, true, 2)};
    CHECK(compute_stats(even).rows[0].median_time_ms == 2);

    const auto empty = compute_stats(std::span<const AnswerRecord>{});
    CHECK(empty.n == 0);
    CHECK(empty.rows.empty());
    CHECK(s.find(TaskKind::text_normal, 4) == &s.rows[0]);
    CHECK(s.find(TaskKind::text_normal, 6) == nullptr);
  }

  TEST_CASE("stats match brute force on random logs") {
    Gen g(61);
    const auto pool = testing::flat_pool();
    const auto plan = make_plan(pool, 1);
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<AnswerRecord> rs;
      const int sessions = g.integer(1, 4);
      for (int s = 0; s < sessions; ++s) {
        const int answered = g.integer(0, kPlanSize);
        for (int i = 0; i < answered; ++i) {
          rs.push_back(rec(plan[std::size_t(i)].kind, plan[std::size_t(i)].param, g.coin(0.7),
                           g.integer(0, 60000)));
        }
      }
      std::map<std::pair<TaskKind, int>, Brute> groups;
      for (const auto& r : rs) {
        auto& b = groups[{r.kind, r.param}];
        ++b.n;
        b.ok += r.correct;
        b.times.push_back(r.elapsed_ms);
      }
      const auto st = compute_stats(rs);
      CHECK(st.n == rs.size());
      REQUIRE(st.rows.size() == groups.size());
      for (auto& [key, b] : groups) {
        const StatsRow* row = st.find(key.first, key.second);
        REQUIRE(row);
        CHECK(row->n == b.n);
        CHECK(row->success_rate == double(b.ok) / double(b.n));
        double sum = 0;
        for (auto t : b.times) sum += double(t);
        CHECK(row->average_time_ms == doctest::Approx(sum / double(b.n)).epsilon(1e-12));
        // Lower median: smallest t with at least ceil(n/2) values <= t.
        std::int64_t median = -1;
        for (auto t : b.times) {
          const auto le = std::count_if(b.times.begin(), b.times.end(), [&](auto u) { return u <= t; });
          if (le * 2 >= std::int64_t(b.n) && (median < 0 || t < median)) median = t;
        }
        CHECK(row->median_time_ms == double(median));
      }
    }
  }

  TEST_CASE("log replay restores state") {
    const auto dir = testing::scratch("replay");
    const auto pool = testing::flat_pool();
    std::string id;
    UsabilityStats before;
    std::vector<AnswerRecord> answers;
    {
      StudyService svc(pool, dir, 7);
      id = svc.create_session(kPerson);
      play(svc, id, {1, 2, 44}, 2500);
      const auto half = svc.create_session(kPerson);
      for (int i = 0; i < 7; ++i) {
        const auto t = svc.next_task(half);
        svc.submit_answer(half, t->task_id, testing::solve(*t), 1000 + i);
      }
      before = svc.stats();
      answers = svc.answers();
      svc.flush();
    }
    StudyService again(pool, dir, 7);
    CHECK(again.session_count() == 2);
    CHECK(again.answers().size() == answers.size());
    CHECK_FALSE(again.next_task(id).has_value());
    CHECK(again.failed_tasks(id) == std::vector<int>{1, 2, 44});
    const auto after = again.stats();
    REQUIRE(after.rows.size() == before.rows.size());
    for (std::size_t i = 0; i < after.rows.size(); ++i) {
      CHECK(after.rows[i].success_rate == before.rows[i].success_rate);
      CHECK(after.rows[i].median_time_ms == before.rows[i].median_time_ms);
      CHECK(after.rows[i].average_time_ms == before.rows[i].average_time_ms);
    }
    // A fresh session continues the id space without collisions.
    const auto next = again.create_session(kPerson);
    CHECK(next != id);

    const auto from_log = read_answer_log(again.log_path());
    REQUIRE(from_log.size() == answers.size());
    for (std::size_t i = 0; i < answers.size(); ++i) {
      CHECK(from_log[i].session_id == answers[i].session_id);
      CHECK(from_log[i].task_id == answers[i].task_id);
      CHECK(from_log[i].answer == answers[i].answer);
      CHECK(from_log[i].correct == answers[i].correct);
      CHECK(from_log[i].elapsed_ms == answers[i].elapsed_ms);
    }
    const auto relog = compute_stats(from_log);
    CHECK(relog.n == before.n);
  }

  TEST_CASE("corrupt logs are rejected") {
    const auto dir = testing::scratch("corrupt");
    write_file_atomic(dir / "events.ndjson", std::string_view("{\"type\":\"session\"\n"));
    CHECK_THROWS_AS(StudyService(testing::flat_pool(), dir, 0), FormatError);
  }

  TEST_CASE("stats table columns") {
    const auto pool = testing::flat_pool();
    const auto plan = make_plan(pool, 2);
    std::vector<AnswerRecord> rs;
    for (const auto& t : plan) rs.push_back(rec(t.kind, t.param, true, 3000));
    const auto md = render_stats_markdown(compute_stats(rs));
    for (const char* col : {"text normal ι=4", "text normal ι=6", "text adversarial ι=4", "text adversarial ι=6",
                            "image normal", "image adversarial K=10", "image adversarial K=20",
                            "image adversarial K=30", "image adversarial K=40", "image adversarial K=50"}) {
      CHECK(md.find(std::string("| ") + col + " |") != std::string::npos);
    }
    CHECK(md.find("| Success rate |") != std::string::npos);
    CHECK(md.find("| Median time |") != std::string::npos);
    CHECK(md.find("3.0s") != std::string::npos);
  }
}
