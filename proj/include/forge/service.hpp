#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

namespace httplib {
class Server;
}

namespace forge {

enum class JobKind { kTrain, kSample };
enum class JobState { kQueued, kRunning, kDone, kFailed };

std::string to_string(JobKind kind);
std::string to_string(JobState state);
JobKind parse_job_kind(const std::string& text);
JobState parse_job_state(const std::string& text);

struct JobRecord {
  std::string id;
  JobKind kind = JobKind::kTrain;
  JobState state = JobState::kQueued;
  double progress = 0.0;
  std::string message;
  std::vector<std::string> artifacts;
  nlohmann::json request = nlohmann::json::object();
  /// Latest structured progress payload (iteration, loss, ...).
  nlohmann::json details = nlohmann::json::object();
  double created_at = 0.0;  // seconds since epoch
  std::optional<double> started_at;
  std::optional<double> finished_at;
  std::uint64_t version = 0;  // bumped on every change

  bool terminal() const { return state == JobState::kDone || state == JobState::kFailed; }
};

nlohmann::json to_json(const JobRecord& job);
JobRecord job_from_json(const nlohmann::json& j);

/// Job records kept in memory and mirrored to `<root>/<id>/manifest.json`.
///
/// Updates are atomic under one mutex. State only moves queued -> running ->
/// done | failed and progress never decreases.
class JobStore {
 public:
  explicit JobStore(std::filesystem::path root);

  /// Loads every manifest under the root. Jobs that were running when the
  /// process ended are marked failed; queued ones are returned for re-queueing.
  std::vector<std::string> reindex();

  /// New queued job; a fresh id is generated when `id` is empty.
  JobRecord create(JobKind kind, nlohmann::json request, std::string id = {});
  std::optional<JobRecord> get(const std::string& id) const;
  std::vector<JobRecord> list() const;
  std::filesystem::path job_dir(const std::string& id) const { return root_ / id; }
  /// True when a job of this kind is queued or running.
  bool has_active(JobKind kind) const;

  void mark_running(const std::string& id);
  void update_progress(const std::string& id, double progress, const std::string& message,
                       const nlohmann::json& details = nullptr);
  void finish(const std::string& id, std::vector<std::string> artifacts, const std::string& message = "");
  void fail(const std::string& id, const std::string& message, std::vector<std::string> artifacts = {});

  /// Blocks until the job's version exceeds `seen` or the timeout passes.
  std::optional<JobRecord> wait_for_change(const std::string& id, std::uint64_t seen,
                                           std::chrono::milliseconds timeout) const;
  void wake_all() const { changed_.notify_all(); }

 private:
  JobRecord& require(const std::string& id);
  void persist(const JobRecord& job, bool force);

  std::filesystem::path root_;
  mutable std::mutex mutex_;
  mutable std::condition_variable changed_;
  std::map<std::string, JobRecord> jobs_;
  std::map<std::string, std::chrono::steady_clock::time_point> last_persist_;
};

struct ServiceOptions {
  std::filesystem::path workdir;
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  int sample_workers = 2;
  std::optional<std::filesystem::path> static_dir;
  std::size_t max_upload_bytes = 64u << 20;
};

/// Directory holding service state: INPAINT_FORGE_WORKDIR when set, else ./forge-work.
std::filesystem::path default_workdir();

/// HTTP front end over the training and sampling pipeline.
class Service {
 public:
  explicit Service(ServiceOptions options);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds the socket and starts serving in the background. Returns the bound port.
  int start();
  int port() const { return port_; }
  /// Stops accepting requests, checkpoints a running training job, interrupts
  /// sampling and joins every worker. Safe to call more than once.
  void stop();

  JobStore& jobs() { return *jobs_; }
  const std::filesystem::path& workdir() const { return options_.workdir; }

 private:
  void routes();
  void train_loop(std::stop_token stop);
  void sample_loop(std::stop_token stop);
  void run_train_job(const std::string& id, std::stop_token stop);
  void run_sample_job(const std::string& id);
  void enqueue(const JobRecord& job);

  std::filesystem::path image_path(const std::string& id) const;
  std::filesystem::path checkpoint_path(const std::string& id) const;

  ServiceOptions options_;
  std::unique_ptr<httplib::Server> server_;
  std::unique_ptr<JobStore> jobs_;
  int port_ = 0;
  std::thread listener_;
  std::jthread train_worker_;
  std::vector<std::jthread> sample_workers_;
  std::mutex queue_mutex_;
  std::condition_variable_any queue_cv_;
  std::deque<std::string> train_queue_;
  std::deque<std::string> sample_queue_;
  std::atomic<bool> stopping_{false};
  std::mutex stop_mutex_;
  bool stopped_ = false;
};

}  // namespace forge
