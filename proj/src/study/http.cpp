// Eigen first: httplib pulls in <resolv.h>, whose _res macro clashes with
// Eigen parameter names.
#include "acaptcha/study/study.hpp"

#include <httplib.h>

#include <json.hpp>
#include <regex>

namespace acaptcha::study {

using nlohmann::json;

namespace {

std::string b64(const std::vector<std::uint8_t>& bytes) {
  return httplib::detail::base64_encode(std::string(bytes.begin(), bytes.end()));
}

HttpReply reply(int status, const json& j) { return {status, j.dump()}; }
HttpReply error_reply(int status, const std::string& msg) { return reply(status, json{{"error", msg}}); }

std::string field(const json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_string()) throw InvalidInput(std::string("missing string field '") + key + "'");
  return j[key].get<std::string>();
}

json stats_json(const UsabilityStats& s) {
  json groups = json::array();
  for (const auto& r : s.rows) {
    groups.push_back({{"kind", to_string(r.kind)},
                      {"param", r.param},
                      {"n", r.n},
                      {"success_rate", r.success_rate},
                      {"average_time_ms", r.average_time_ms},
                      {"median_time_ms", r.median_time_ms}});
  }
  return {{"n", s.n}, {"groups", groups}};
}

HttpReply route(StudyService& svc, std::string_view method, const std::string& path, std::string_view body) {
  static const std::regex session_re(R"(^/api/session/([0-9a-f]+)/(task|answer|feedback)$)");
  auto parse_body = [&] {
    json j = json::parse(body.begin(), body.end());
    if (!j.is_object()) throw InvalidInput("request body must be a JSON object");
    return j;
  };

  if (path == "/api/stats") {
    if (method != "GET") return error_reply(405, "use GET");
    return reply(200, stats_json(svc.stats()));
  }
  if (path == "/api/session") {
    if (method != "POST") return error_reply(405, "use POST");
    const json j = parse_body();
    const Demographics d{parse_gender(field(j, "gender")), parse_age(field(j, "age")),
                         parse_education(field(j, "education"))};
    const std::string id = svc.create_session(d);
    return reply(201, json{{"session_id", id}, {"tasks", kPlanSize}});
  }
  std::smatch m;
  if (!std::regex_match(path, m, session_re)) return error_reply(404, "no such endpoint");
  const std::string id = m[1];
  const std::string action = m[2];

  if (action == "task") {
    if (method != "GET") return error_reply(405, "use GET");
    const auto t = svc.next_task(id);
    if (!t) return reply(200, json{{"complete", true}, {"failed_tasks", svc.failed_tasks(id)}});
    json task{{"task_id", t->task_id},
              {"kind", to_string(t->kind)},
              {"param", t->param},
              {"index", t->index},
              {"total", kPlanSize},
              {"image", b64(t->image_png)}};
    if (!t->candidates_png.empty()) {
      json c = json::array();
      for (const auto& png : t->candidates_png) c.push_back(b64(png));
      task["candidates"] = c;
    }
    return reply(200, json{{"complete", false}, {"task", task}});
  }
  if (method != "POST") return error_reply(405, "use POST");
  const json j = parse_body();
  if (action == "answer") {
    if (!j.contains("task_id") || !j["task_id"].is_number_integer()) throw InvalidInput("missing integer task_id");
    if (!j.contains("elapsed_ms") || !j["elapsed_ms"].is_number()) throw InvalidInput("missing elapsed_ms");
    std::string answer;
    if (j.contains("answer") && j["answer"].is_string()) {
      answer = j["answer"].get<std::string>();
    } else if (j.contains("answer") && j["answer"].is_number_integer()) {
      answer = std::to_string(j["answer"].get<std::int64_t>());
    } else {
      throw InvalidInput("missing answer");
    }
    const Grade g = svc.submit_answer(id, j["task_id"].get<int>(), answer,
                                      std::int64_t(j["elapsed_ms"].get<double>()));
    return reply(200, json{{"correct", g.correct}, {"complete", g.complete}});
  }
  Feedback f;
  f.text_difficulty = parse_text_difficulty(field(j, "text_difficulty"));
  f.image_difficulty = parse_image_difficulty(field(j, "image_difficulty"));
  if (j.contains("failures")) {
    if (!j["failures"].is_array()) throw InvalidInput("failures must be an array");
    for (const auto& e : j["failures"]) {
      if (!e.is_object() || !e.contains("task_id") || !e["task_id"].is_number_integer()) {
        throw InvalidInput("each failure needs an integer task_id");
      }
      FailureNote n{e["task_id"].get<int>(), parse_failure_reason(field(e, "reason")), {}};
      if (e.contains("text")) n.text = field(e, "text");
      f.failures.push_back(std::move(n));
    }
  }
  svc.record_feedback(id, f);
  return reply(200, json{{"ok", true}});
}

}  // namespace

HttpReply handle_request(StudyService& svc, std::string_view method, std::string_view path, std::string_view body) {
  try {
    return route(svc, method, std::string(path), body);
  } catch (const NotFound& e) {
    return error_reply(404, e.what());
  } catch (const Conflict& e) {
    return error_reply(409, e.what());
  } catch (const json::exception& e) {
    return error_reply(400, std::string("malformed JSON: ") + e.what());
  } catch (const InvalidInput& e) {
    return error_reply(400, e.what());
  } catch (const FormatError& e) {
    return error_reply(400, e.what());
  } catch (const std::exception& e) {
    return error_reply(500, e.what());
  }
}

struct HttpServer::Impl {
  explicit Impl(StudyService& s) : svc(s) {}
  StudyService& svc;
  httplib::Server server;
  int port = -1;
};

HttpServer::HttpServer(StudyService& svc) : impl_(std::make_unique<Impl>(svc)) {
  auto handler = [this](const httplib::Request& req, httplib::Response& res) {
    const HttpReply r = handle_request(impl_->svc, req.method, req.path, req.body);
    res.status = r.status;
    res.set_content(r.body, "application/json");
  };
  impl_->server.Get(".*", handler);
  impl_->server.Post(".*", handler);
  impl_->server.Put(".*", handler);
  impl_->server.Delete(".*", handler);
  // httplib's default adds SO_REUSEPORT, which lets a second server share a
  // port that is already taken.
  impl_->server.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof yes);
  });
}

HttpServer::~HttpServer() = default;

bool HttpServer::bind(const std::string& host, int port) {
  if (port == 0) {
    impl_->port = impl_->server.bind_to_any_port(host);
    return impl_->port > 0;
  }
  if (!impl_->server.bind_to_port(host, port)) return false;
  impl_->port = port;
  return true;
}

int HttpServer::port() const { return impl_->port; }

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() { impl_->server.stop(); }

}  // namespace acaptcha::study
