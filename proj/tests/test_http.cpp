#include <doctest.h>

// Eigen before httplib; see src/study/http.cpp.
#include "fixtures.hpp"
#include "study_pool.hpp"

#include <httplib.h>

#include <json.hpp>
#include <thread>

using namespace acaptcha;
using namespace acaptcha::study;
using nlohmann::json;

namespace {

const char* kPerson = R"({"gender":"female","age":"21-30","education":"bachelor"})";

std::vector<std::uint8_t> unb64(const std::string& s) {
  static const std::string alphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::vector<std::uint8_t> out;
  std::uint32_t acc = 0;
  int bits = 0;
  for (char c : s) {
    if (c == '=') break;
    acc = (acc << 6) | std::uint32_t(alphabet.find(c));
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(std::uint8_t(acc >> bits));
    }
  }
  return out;
}

TaskPayload payload_of(const json& task) {
  TaskPayload t;
  t.task_id = task["task_id"];
  t.image_png = unb64(task["image"]);
  if (task.contains("candidates"))
    for (const auto& c : task["candidates"]) t.candidates_png.push_back(unb64(c));
  return t;
}

json answer_body(int task_id, const std::string& answer, int ms) {
  return {{"task_id", task_id}, {"answer", answer}, {"elapsed_ms", ms}};
}

bool leaks_truth(const json& j) {
  if (j.is_object()) {
    for (const auto& [k, v] : j.items()) {
      if (k == "label" || k == "target_index" || k == "source_category" || k == "candidate_categories") return true;
      if (leaks_truth(v)) return true;
    }
  } else if (j.is_array()) {
    for (const auto& v : j)
      if (leaks_truth(v)) return true;
  }
  return false;
}

}  // namespace

TEST_SUITE("http") {
  TEST_CASE("status codes") {
    StudyService svc(testing::flat_pool(), testing::scratch("http-status"), 1);
    CHECK(handle_request(svc, "GET", "/api/stats", "").status == 200);
    CHECK(handle_request(svc, "POST", "/api/stats", "").status == 405);
    CHECK(handle_request(svc, "GET", "/api/session", "").status == 405);
    CHECK(handle_request(svc, "GET", "/api/nothing", "").status == 404);
    CHECK(handle_request(svc, "POST", "/api/session", "{").status == 400);
    CHECK(handle_request(svc, "POST", "/api/session", "[]").status == 400);
    CHECK(handle_request(svc, "POST", "/api/session", R"({"gender":"female","age":"21-30","education":"none"})")
              .status == 400);
    CHECK(handle_request(svc, "GET", "/api/session/abcdef/task", "").status == 404);

    const auto created = handle_request(svc, "POST", "/api/session", kPerson);
    REQUIRE(created.status == 201);
    const std::string id = json::parse(created.body)["session_id"];
    const std::string base = "/api/session/" + id;
    CHECK(handle_request(svc, "POST", base + "/task", "{}").status == 405);
    CHECK(handle_request(svc, "GET", base + "/answer", "").status == 405);
    CHECK(handle_request(svc, "POST", base + "/answer", R"({"task_id":1})").status == 400);
    CHECK(handle_request(svc, "POST", base + "/answer", answer_body(2, "0000", 5).dump()).status == 400);
    CHECK(handle_request(svc, "POST", base + "/answer", answer_body(1, "0000", 5).dump()).status == 200);
    CHECK(handle_request(svc, "POST", base + "/answer", answer_body(1, "0000", 5).dump()).status == 409);
    CHECK(handle_request(svc, "POST", base + "/feedback",
                         R"({"text_difficulty":"normal","image_difficulty":"k10","failures":[]})")
              .status == 400);
    const auto err = json::parse(handle_request(svc, "GET", "/api/nothing", "").body);
    CHECK(err.contains("error"));
  }

  TEST_CASE("task payloads carry no ground truth") {
    StudyService svc(testing::flat_pool(), testing::scratch("http-leak"), 2);
    const std::string id = json::parse(handle_request(svc, "POST", "/api/session", kPerson).body)["session_id"];
    for (int i = 0; i < kPlanSize; ++i) {
      const auto r = handle_request(svc, "GET", "/api/session/" + id + "/task", "");
      REQUIRE(r.status == 200);
      const json j = json::parse(r.body);
      CHECK_FALSE(leaks_truth(j));
      CHECK(j["task"]["index"] == i);
      const auto t = payload_of(j["task"]);
      // Wrong on purpose; grading must not echo the right answer either.
      const auto g = handle_request(svc, "POST", "/api/session/" + id + "/answer",
                                    answer_body(t.task_id, testing::wrong(t), 10).dump());
      REQUIRE(g.status == 200);
      CHECK_FALSE(leaks_truth(json::parse(g.body)));
    }
    const json done = json::parse(handle_request(svc, "GET", "/api/session/" + id + "/task", "").body);
    CHECK(done["complete"] == true);
    CHECK(done["failed_tasks"].size() == std::size_t(kPlanSize));
  }

  TEST_CASE("live server happy path") {
    const auto dir = testing::scratch("http-live");
    StudyService svc(testing::flat_pool(), dir, 3);
    HttpServer server(svc);
    REQUIRE(server.bind("127.0.0.1", 0));
    std::thread loop([&] { server.listen(); });
    httplib::Client cli("127.0.0.1", server.port());

    auto stats = cli.Get("/api/stats");
    REQUIRE(stats);
    CHECK(stats->status == 200);
    CHECK(json::parse(stats->body)["n"] == 0);
    CHECK(json::parse(stats->body)["groups"].empty());

    auto created = cli.Post("/api/session", kPerson, "application/json");
    REQUIRE(created);
    REQUIRE(created->status == 201);
    const std::string id = json::parse(created->body)["session_id"];
    CHECK(json::parse(created->body)["tasks"] == kPlanSize);

    // Miss tasks 5 and 33, answer the rest correctly, 1.5 s each.
    int graded = 0, correct = 0;
    for (;;) {
      auto t = cli.Get("/api/session/" + id + "/task");
      REQUIRE(t);
      const json j = json::parse(t->body);
      if (j["complete"] == true) {
        CHECK(j["failed_tasks"] == json::array({5, 33}));
        break;
      }
      const auto task = payload_of(j["task"]);
      const bool miss = task.task_id == 5 || task.task_id == 33;
      const auto a = cli.Post("/api/session/" + id + "/answer",
                              answer_body(task.task_id, miss ? testing::wrong(task) : testing::solve(task), 1500).dump(),
                              "application/json");
      REQUIRE(a);
      REQUIRE(a->status == 200);
      const json g = json::parse(a->body);
      CHECK(g["correct"] == !miss);
      ++graded;
      correct += g["correct"].get<bool>();
    }
    CHECK(graded == kPlanSize);
    CHECK(correct == kPlanSize - 2);

    const json fb{{"text_difficulty", "adversarial"},
                  {"image_difficulty", "k50"},
                  {"failures", {{{"task_id", 5}, {"reason", "mistake"}},
                                {{"task_id", 33}, {"reason", "other"}, {"text", "could not tell"}}}}};
    auto f = cli.Post("/api/session/" + id + "/feedback", fb.dump(), "application/json");
    REQUIRE(f);
    CHECK(f->status == 200);
    f = cli.Post("/api/session/" + id + "/feedback", fb.dump(), "application/json");
    REQUIRE(f);
    CHECK(f->status == 409);

    stats = cli.Get("/api/stats");
    REQUIRE(stats);
    const json s = json::parse(stats->body);
    CHECK(s["n"] == kPlanSize);
    CHECK(s["groups"].size() == 10);
    for (const auto& g : s["groups"]) {
      CHECK(g["n"] == kTasksPerGroup);
      CHECK(g["median_time_ms"] == 1500);
    }
    // Task 5 is text normal ι=4, task 33 image adversarial K=20.
    CHECK(s["groups"][0]["success_rate"] == doctest::Approx(0.8));

    server.stop();
    loop.join();

    const auto lines = EventLog(svc.log_path()).read_all();
    CHECK(lines.size() == std::size_t(1 + kPlanSize + 1));
    const auto from_log = read_answer_log(svc.log_path());
    CHECK(from_log.size() == std::size_t(kPlanSize));
  }

  TEST_CASE("a taken port is refused") {
    StudyService svc(testing::flat_pool(), testing::scratch("http-port"), 4);
    HttpServer a(svc), b(svc);
    REQUIRE(a.bind("127.0.0.1", 0));
    CHECK_FALSE(b.bind("127.0.0.1", a.port()));
  }
}
