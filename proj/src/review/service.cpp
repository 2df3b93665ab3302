#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>

#include "stackvet/review.hpp"
#include "stackvet/version.hpp"

namespace stackvet {
namespace {

namespace fs = std::filesystem;

Verdict parse_verdict(const Json& body) {
  if (!body.is_object()) throw ServiceError(400, "verdict body must be a JSON object");
  if (!body.contains("id") || !body["id"].is_string()) throw ServiceError(400, "verdict needs a string 'id'");
  if (!body.contains("label") || !body["label"].is_string()) throw ServiceError(400, "verdict needs a string 'label'");
  Verdict v;
  v.id = body["id"].get<std::string>();
  v.label = body["label"].get<std::string>();
  if (v.label != "object" && v.label != "false_positive")
    throw ServiceError(400, "label must be 'object' or 'false_positive'");
  if (body.contains("reviewer")) {
    if (!body["reviewer"].is_string()) throw ServiceError(400, "'reviewer' must be a string");
    v.reviewer = body["reviewer"].get<std::string>();
  }
  return v;
}

// Drops a torn final line so the log stays line-parseable.
std::vector<std::string> load_log(const fs::path& path) {
  std::vector<std::string> lines;
  if (!fs::exists(path)) return lines;
  const std::string text = read_text_file(path);
  const auto last_newline = text.rfind('\n');
  const std::size_t keep = last_newline == std::string::npos ? 0 : last_newline + 1;
  if (keep != text.size()) fs::resize_file(path, keep);
  std::size_t start = 0;
  while (start < keep) {
    const auto end = text.find('\n', start);
    if (end > start) lines.push_back(text.substr(start, end - start));
    start = end + 1;
  }
  return lines;
}

}  // namespace

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const auto secs = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[40];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
  return buf;
}

Json verdict_to_json(const Verdict& v) {
  return Json{{"id", v.id}, {"label", v.label}, {"reviewer", v.reviewer}, {"timestamp", v.timestamp}};
}

ReviewService::ReviewService(Dataset dataset, std::vector<double> scores, TriagePolicy policy, fs::path verdict_log)
    : dataset_(std::move(dataset)),
      scores_(std::move(scores)),
      policy_(policy),
      log_path_(std::move(verdict_log)),
      started_at_(utc_timestamp()) {
  validate_policy(policy_);
  if (scores_.size() != dataset_.samples.size())
    throw ArgumentError("review service: " + std::to_string(scores_.size()) + " scores for " +
                        std::to_string(dataset_.samples.size()) + " samples");
  for (std::size_t i = 0; i < scores_.size(); ++i) {
    routes_.push_back(route(scores_[i], policy_));
    index_.emplace(dataset_.samples[i].id, i);
    if (routes_.back() == Route::human_review) human_order_.push_back(i);
  }
  const double mid = 0.5 * (policy_.positive_threshold + policy_.negative_threshold);
  std::stable_sort(human_order_.begin(), human_order_.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(scores_[a] - mid) < std::abs(scores_[b] - mid);
  });

  if (log_path_.has_parent_path()) fs::create_directories(log_path_.parent_path());
  for (const auto& line : load_log(log_path_)) {
    Verdict v;
    try {
      const Json j = Json::parse(line);
      v = parse_verdict(j);
      v.timestamp = j.value("timestamp", "");
    } catch (const std::exception& e) {
      throw FormatError(log_path_.string() + ": corrupt verdict line: " + e.what());
    }
    ++log_lines_;
    const auto it = index_.find(v.id);
    if (it != index_.end() && routes_[it->second] == Route::human_review) active_[v.id] = v;
  }
  log_fd_ = ::open(log_path_.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
  if (log_fd_ < 0) throw Error("cannot open verdict log " + log_path_.string());
}

ReviewService::~ReviewService() {
  if (log_fd_ >= 0) {
    ::fsync(log_fd_);
    ::close(log_fd_);
  }
}

Json ReviewService::health() const { return Json{{"status", "ok"}, {"version", kVersion}}; }

Json ReviewService::item_json(std::size_t i) const {
  const auto& s = dataset_.samples[i];
  const auto depths = channel_depths(dataset_.combo);
  const std::size_t side = dataset_.input_size, plane = side * side;
  Json channels = Json::array();
  std::map<int, std::size_t> group;
  for (std::size_t c = 0; c < depths.size(); ++c) {
    const float* p = s.channels.data() + c * plane;
    const auto [lo, hi] = std::minmax_element(p, p + plane);
    Json pixels = Json::array();
    for (std::size_t k = 0; k < plane; ++k) pixels.push_back(json_number(p[k]));
    channels.push_back({{"index", c},
                        {"depth", depths[c]},
                        {"group", group[depths[c]]++},
                        {"label", "depth " + std::to_string(depths[c])},
                        {"min", json_number(*lo)},
                        {"max", json_number(*hi)},
                        {"pixels", std::move(pixels)}});
  }
  const auto v = active_.find(s.id);
  return Json{{"id", s.id},
              {"score", json_number(scores_[i])},
              {"route", route_name(routes_[i])},
              {"combo", dataset_.combo},
              {"size", side},
              {"enqueued_at", started_at_},
              {"verdict", v == active_.end() ? Json(nullptr) : Json(v->second.label)},
              {"channels", std::move(channels)}};
}

Json ReviewService::queue(std::size_t limit) const {
  std::shared_lock lock(mutex_);
  Json items = Json::array();
  std::size_t pending = 0;
  for (std::size_t i : human_order_) {
    if (active_.count(dataset_.samples[i].id)) continue;
    ++pending;
    if (items.size() < limit) items.push_back(item_json(i));
  }
  return Json{{"pending", pending}, {"items", std::move(items)}};
}

Json ReviewService::sample(const std::string& id) const {
  std::shared_lock lock(mutex_);
  const auto it = index_.find(id);
  if (it == index_.end()) throw ServiceError(404, "unknown sample id '" + id + "'");
  return item_json(it->second);
}

void ReviewService::append(const Verdict& v) {
  const std::string line = verdict_to_json(v).dump() + "\n";
  std::size_t done = 0;
  while (done < line.size()) {
    const auto n = ::write(log_fd_, line.data() + done, line.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error("verdict log write failed");
    }
    done += static_cast<std::size_t>(n);
  }
  if (::fsync(log_fd_) != 0) throw Error("verdict log fsync failed");
}

Json ReviewService::post_verdict(const Json& body) {
  Verdict v = parse_verdict(body);
  const auto it = index_.find(v.id);
  if (it == index_.end()) throw ServiceError(404, "unknown sample id '" + v.id + "'");
  if (routes_[it->second] != Route::human_review)
    throw ServiceError(404, "sample '" + v.id + "' is not in the human review bucket");
  std::lock_guard write(write_mutex_);
  {
    std::shared_lock read(mutex_);
    const auto prev = active_.find(v.id);
    if (prev != active_.end() && prev->second.label == v.label && prev->second.reviewer == v.reviewer)
      return Json{{"status", "duplicate"}, {"verdict", verdict_to_json(prev->second)}};
  }
  v.timestamp = utc_timestamp();
  append(v);
  std::unique_lock lock(mutex_);
  const bool superseded = active_.count(v.id) > 0;
  active_[v.id] = v;
  ++log_lines_;
  return Json{{"status", superseded ? "superseded" : "recorded"}, {"verdict", verdict_to_json(v)}};
}

Json ReviewService::stats() const {
  std::shared_lock lock(mutex_);
  std::size_t auto_pos = 0, auto_neg = 0, human = 0;
  for (Route r : routes_) {
    if (r == Route::auto_positive) ++auto_pos;
    else if (r == Route::auto_negative) ++auto_neg;
    else ++human;
  }
  std::size_t objects = 0;
  for (const auto& [id, v] : active_) objects += v.label == "object" ? 1 : 0;
  const std::size_t reviewed = active_.size(), total = routes_.size();
  const double denom = total ? static_cast<double>(total) : 1.0;
  return Json{{"total", total},
              {"auto_positive", auto_pos},
              {"auto_negative", auto_neg},
              {"pending", human - reviewed},
              {"reviewed", reviewed},
              {"reviewed_object", objects},
              {"reviewed_false_positive", reviewed - objects},
              {"remaining_ratio", json_number(static_cast<double>(human) / denom)},
              {"pending_ratio", json_number(static_cast<double>(human - reviewed) / denom)},
              {"policy", policy_to_json(policy_)},
              {"log_lines", log_lines_}};
}

std::size_t ReviewService::log_lines() const {
  std::shared_lock lock(mutex_);
  return log_lines_;
}

}  // namespace stackvet
