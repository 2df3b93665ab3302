#include <httplib.h>

#include "stackvet/review.hpp"

namespace stackvet {
namespace {

void send(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json; charset=utf-8");
}

template <typename Fn>
httplib::Server::Handler guarded(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    try {
      send(res, 200, fn(req));
    } catch (const ServiceError& e) {
      send(res, e.status(), Json{{"error", e.what()}});
    } catch (const std::exception& e) {
      send(res, 500, Json{{"error", e.what()}});
    }
  };
}

std::size_t parse_limit(const httplib::Request& req) {
  if (!req.has_param("limit")) return 50;
  const std::string text = req.get_param_value("limit");
  std::size_t used = 0;
  unsigned long long n = 0;
  try {
    n = std::stoull(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size() || text.front() == '-')
    throw ServiceError(400, "limit must be a non-negative integer");
  return static_cast<std::size_t>(n);
}

}  // namespace

void mount_review_api(httplib::Server& server, ReviewService& service) {
  server.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  server.Get("/api/health", guarded([&](const httplib::Request&) { return service.health(); }));
  server.Get("/api/queue", guarded([&](const httplib::Request& req) { return service.queue(parse_limit(req)); }));
  server.Get(R"(/api/sample/([^/]+))",
             guarded([&](const httplib::Request& req) { return service.sample(req.matches[1].str()); }));
  server.Post("/api/verdict", guarded([&](const httplib::Request& req) {
                Json body;
                try {
                  body = Json::parse(req.body);
                } catch (const Json::exception&) {
                  throw ServiceError(400, "request body is not valid JSON");
                }
                return service.post_verdict(body);
              }));
  server.Get("/api/stats", guarded([&](const httplib::Request&) { return service.stats(); }));
  server.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });
  server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) send(res, res.status, Json{{"error", httplib::status_message(res.status)}});
  });
}

}  // namespace stackvet
