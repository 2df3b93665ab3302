#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <vector>

#include "stackvet/datagen.hpp"
#include "stackvet/triage.hpp"

namespace httplib {
class Server;
}

namespace stackvet {

/// Request-level failure carrying the HTTP status to answer with.
class ServiceError : public Error {
 public:
  ServiceError(int status, const std::string& message) : Error(message), status_(status) {}
  int status() const noexcept { return status_; }

 private:
  int status_;
};

struct Verdict {
  std::string id;
  std::string label;  // "object" | "false_positive"
  std::string reviewer;
  std::string timestamp;
};

Json verdict_to_json(const Verdict& v);

// Review queue over one dataset and its ensemble scores. Verdicts are appended to
// an NDJSON log and fsynced before they are acknowledged; an existing log is
// replayed on construction (a torn final line is truncated away).
class ReviewService {
 public:
  ReviewService(Dataset dataset, std::vector<double> scores, TriagePolicy policy, std::filesystem::path verdict_log);
  ~ReviewService();
  ReviewService(const ReviewService&) = delete;
  ReviewService& operator=(const ReviewService&) = delete;

  Json health() const;
  /// Unreviewed human-bucket items, most ambiguous first.
  Json queue(std::size_t limit) const;
  Json sample(const std::string& id) const;
  Json post_verdict(const Json& body);
  Json stats() const;

  std::size_t log_lines() const;

 private:
  Json item_json(std::size_t index) const;
  void append(const Verdict& v);

  Dataset dataset_;
  std::vector<double> scores_;
  TriagePolicy policy_;
  std::filesystem::path log_path_;
  int log_fd_ = -1;
  std::string started_at_;
  std::vector<Route> routes_;
  std::vector<std::size_t> human_order_;  // human-bucket indices, ascending ambiguity
  std::map<std::string, std::size_t> index_;
  std::map<std::string, Verdict> active_;
  std::size_t log_lines_ = 0;
  mutable std::shared_mutex mutex_;
  std::mutex write_mutex_;
};

/// Registers the /api routes on `server`.
void mount_review_api(httplib::Server& server, ReviewService& service);

std::string utc_timestamp();

}  // namespace stackvet
