#include "forge/service.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>
#include <sys/socket.h>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <random>

#include "forge/checkpoint.hpp"
#include "forge/errors.hpp"
#include "forge/pipeline.hpp"
#include "forge/png_io.hpp"
#include "forge/trainer.hpp"

namespace forge {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr auto kPersistInterval = std::chrono::milliseconds(500);
constexpr auto kEventPoll = std::chrono::milliseconds(1000);
constexpr const char* kIdPattern = "([A-Za-z0-9_-]+)";

class NotFound : public Error {
 public:
  using Error::Error;
};

class Conflict : public Error {
 public:
  using Error::Error;
};

class Interrupted : public Error {
 public:
  using Error::Error;
};

double now_seconds() {
  return std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch()).count();
}

std::string new_id() {
  static std::mutex mutex;
  static std::random_device device;
  std::lock_guard lock(mutex);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%08x%08x", device(), device());
  return buf;
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, status, {{"error", message}, {"status", status}});
}

// Maps engine errors onto HTTP statuses so every handler reports them the same way.
template <typename F>
httplib::Server::Handler guarded(F&& body) {
  return [body = std::forward<F>(body)](const httplib::Request& req, httplib::Response& res) {
    try {
      body(req, res);
    } catch (const NotFound& e) {
      send_error(res, 404, e.what());
    } catch (const Conflict& e) {
      send_error(res, 409, e.what());
    } catch (const ShapeError& e) {
      send_error(res, 422, e.what());
    } catch (const ConfigError& e) {
      send_error(res, 422, e.what());
    } catch (const FormatError& e) {
      send_error(res, 400, e.what());
    } catch (const json::exception& e) {
      send_error(res, 400, std::string("malformed JSON: ") + e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, e.what());
    }
  };
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  json j = json::parse(req.body);
  if (!j.is_object()) throw ConfigError("request body must be a JSON object");
  return j;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void serve_file(httplib::Response& res, const fs::path& path, const std::string& type) {
  if (!fs::is_regular_file(path)) throw NotFound("no such artifact");
  const auto bytes = read_file_bytes(path);
  res.set_content(std::string(bytes.begin(), bytes.end()), type);
}

}  // namespace

std::string to_string(JobKind kind) { return kind == JobKind::kTrain ? "train" : "sample"; }

std::string to_string(JobState state) {
  switch (state) {
    case JobState::kQueued: return "queued";
    case JobState::kRunning: return "running";
    case JobState::kDone: return "done";
    case JobState::kFailed: return "failed";
  }
  return "unknown";
}

JobKind parse_job_kind(const std::string& text) {
  if (text == "train") return JobKind::kTrain;
  if (text == "sample") return JobKind::kSample;
  throw FormatError("unknown job kind '" + text + "'");
}

JobState parse_job_state(const std::string& text) {
  if (text == "queued") return JobState::kQueued;
  if (text == "running") return JobState::kRunning;
  if (text == "done") return JobState::kDone;
  if (text == "failed") return JobState::kFailed;
  throw FormatError("unknown job state '" + text + "'");
}

json to_json(const JobRecord& job) {
  return {{"id", job.id},
          {"kind", to_string(job.kind)},
          {"state", to_string(job.state)},
          {"progress", job.progress},
          {"message", job.message},
          {"artifacts", job.artifacts},
          {"request", job.request},
          {"details", job.details},
          {"timings",
           {{"created_at", job.created_at},
            {"started_at", optional_number(job.started_at)},
            {"finished_at", optional_number(job.finished_at)},
            {"wall_seconds", job.started_at ? json((job.finished_at ? *job.finished_at : now_seconds()) -
                                                   *job.started_at)
                                            : json(nullptr)}}},
          {"version", job.version}};
}

JobRecord job_from_json(const json& j) {
  JobRecord job;
  job.id = j.at("id").get<std::string>();
  job.kind = parse_job_kind(j.at("kind").get<std::string>());
  job.state = parse_job_state(j.at("state").get<std::string>());
  job.progress = j.value("progress", 0.0);
  job.message = j.value("message", "");
  job.artifacts = j.value("artifacts", std::vector<std::string>{});
  job.request = j.value("request", json::object());
  job.details = j.value("details", json::object());
  const auto& t = j.at("timings");
  job.created_at = t.value("created_at", 0.0);
  if (t.contains("started_at") && !t["started_at"].is_null()) job.started_at = t["started_at"].get<double>();
  if (t.contains("finished_at") && !t["finished_at"].is_null()) job.finished_at = t["finished_at"].get<double>();
  job.version = j.value("version", std::uint64_t{0});
  return job;
}

JobStore::JobStore(fs::path root) : root_(std::move(root)) { fs::create_directories(root_); }

std::vector<std::string> JobStore::reindex() {
  std::lock_guard lock(mutex_);
  jobs_.clear();
  std::vector<JobRecord> queued;
  for (const auto& entry : fs::directory_iterator(root_)) {
    const auto manifest = entry.path() / "manifest.json";
    if (!entry.is_directory() || !fs::exists(manifest)) continue;
    try {
      JobRecord job = job_from_json(json::parse(read_text(manifest)));
      if (job.state == JobState::kRunning) {
        job.state = JobState::kFailed;
        job.message = "interrupted: the service stopped while this job was running";
        job.finished_at = now_seconds();
        ++job.version;
        persist(job, true);
      }
      if (job.state == JobState::kQueued) queued.push_back(job);
      jobs_[job.id] = std::move(job);
    } catch (const std::exception& e) {
      spdlog::warn("skipping unreadable job manifest {}: {}", manifest.string(), e.what());
    }
  }
  std::sort(queued.begin(), queued.end(),
            [](const JobRecord& a, const JobRecord& b) { return a.created_at < b.created_at; });
  std::vector<std::string> ids;
  for (const auto& j : queued) ids.push_back(j.id);
  return ids;
}

JobRecord JobStore::create(JobKind kind, json request, std::string id) {
  JobRecord job;
  job.id = id.empty() ? new_id() : std::move(id);
  job.kind = kind;
  job.request = std::move(request);
  job.created_at = now_seconds();
  job.message = "queued";
  job.version = 1;
  fs::create_directories(job_dir(job.id));
  std::lock_guard lock(mutex_);
  persist(job, true);
  jobs_[job.id] = job;
  changed_.notify_all();
  return job;
}

std::optional<JobRecord> JobStore::get(const std::string& id) const {
  std::lock_guard lock(mutex_);
  auto it = jobs_.find(id);
  if (it == jobs_.end()) return std::nullopt;
  return it->second;
}

std::vector<JobRecord> JobStore::list() const {
  std::lock_guard lock(mutex_);
  std::vector<JobRecord> out;
  for (const auto& [_, job] : jobs_) out.push_back(job);
  std::sort(out.begin(), out.end(), [](const JobRecord& a, const JobRecord& b) { return a.created_at < b.created_at; });
  return out;
}

bool JobStore::has_active(JobKind kind) const {
  std::lock_guard lock(mutex_);
  return std::any_of(jobs_.begin(), jobs_.end(),
                     [&](const auto& kv) { return kv.second.kind == kind && !kv.second.terminal(); });
}

JobRecord& JobStore::require(const std::string& id) {
  auto it = jobs_.find(id);
  if (it == jobs_.end()) throw Error("unknown job " + id);
  return it->second;
}

void JobStore::mark_running(const std::string& id) {
  std::lock_guard lock(mutex_);
  JobRecord& job = require(id);
  if (job.state != JobState::kQueued) throw Error("job " + id + " is not queued");
  job.state = JobState::kRunning;
  job.started_at = now_seconds();
  job.message = "running";
  ++job.version;
  persist(job, true);
  changed_.notify_all();
}

void JobStore::update_progress(const std::string& id, double progress, const std::string& message,
                               const json& details) {
  std::lock_guard lock(mutex_);
  JobRecord& job = require(id);
  if (job.state != JobState::kRunning) return;
  job.progress = std::clamp(std::max(job.progress, progress), 0.0, 1.0);
  job.message = message;
  if (!details.is_null()) job.details = details;
  ++job.version;
  persist(job, false);
  changed_.notify_all();
}

void JobStore::finish(const std::string& id, std::vector<std::string> artifacts, const std::string& message) {
  std::lock_guard lock(mutex_);
  JobRecord& job = require(id);
  if (job.state != JobState::kRunning) throw Error("job " + id + " is not running");
  job.state = JobState::kDone;
  job.progress = 1.0;
  job.artifacts = std::move(artifacts);
  job.message = message.empty() ? "done" : message;
  job.finished_at = now_seconds();
  ++job.version;
  persist(job, true);
  changed_.notify_all();
}

void JobStore::fail(const std::string& id, const std::string& message, std::vector<std::string> artifacts) {
  std::lock_guard lock(mutex_);
  JobRecord& job = require(id);
  if (job.terminal()) return;
  if (job.state == JobState::kQueued) {
    // Failures always pass through running so the state sequence stays linear.
    job.state = JobState::kRunning;
    job.started_at = now_seconds();
  }
  job.state = JobState::kFailed;
  job.message = message;
  job.artifacts = std::move(artifacts);
  job.finished_at = now_seconds();
  ++job.version;
  persist(job, true);
  changed_.notify_all();
}

std::optional<JobRecord> JobStore::wait_for_change(const std::string& id, std::uint64_t seen,
                                                   std::chrono::milliseconds timeout) const {
  std::unique_lock lock(mutex_);
  auto current = [&]() -> const JobRecord* {
    auto it = jobs_.find(id);
    return it == jobs_.end() ? nullptr : &it->second;
  };
  changed_.wait_for(lock, timeout, [&] {
    const JobRecord* job = current();
    return !job || job->version > seen;
  });
  const JobRecord* job = current();
  if (!job) return std::nullopt;
  return *job;
}

void JobStore::persist(const JobRecord& job, bool force) {
  const auto now = std::chrono::steady_clock::now();
  auto& last = last_persist_[job.id];
  if (!force && now - last < kPersistInterval) return;
  last = now;
  try {
    write_text_atomic(job_dir(job.id) / "manifest.json", to_json(job).dump(2) + "\n");
  } catch (const std::exception& e) {
    spdlog::error("cannot persist job {}: {}", job.id, e.what());
  }
}

fs::path default_workdir() {
  if (const char* env = std::getenv("INPAINT_FORGE_WORKDIR"); env && *env) return env;
  return fs::current_path() / "forge-work";
}

Service::Service(ServiceOptions options) : options_(std::move(options)) {
  if (options_.workdir.empty()) options_.workdir = default_workdir();
  if (options_.sample_workers < 1) throw ConfigError("sample_workers must be >= 1");
  std::error_code ec;
  for (const char* sub : {"images", "jobs", "checkpoints"}) fs::create_directories(options_.workdir / sub, ec);
  const auto probe = options_.workdir / ".write-probe";
  {
    std::ofstream out(probe);
    if (ec || !out) throw IoError("workdir is not writable: " + options_.workdir.string());
  }
  fs::remove(probe, ec);
  jobs_ = std::make_unique<JobStore>(options_.workdir / "jobs");
  server_ = std::make_unique<httplib::Server>();
}

Service::~Service() { stop(); }

fs::path Service::image_path(const std::string& id) const { return options_.workdir / "images" / (id + ".png"); }

fs::path Service::checkpoint_path(const std::string& id) const {
  return options_.workdir / "checkpoints" / (id + ".ckpt");
}

int Service::start() {
  routes();
  // httplib also sets SO_REUSEPORT, which would let two services share a port.
  server_->set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const char*>(&yes), sizeof yes);
  });
  const int bound = options_.port == 0 ? server_->bind_to_any_port(options_.host)
                                       : (server_->bind_to_port(options_.host, options_.port) ? options_.port : -1);
  if (bound < 0) {
    throw IoError("cannot listen on " + options_.host + ":" + std::to_string(options_.port) + " (port busy?)");
  }
  port_ = bound;

  const auto queued = jobs_->reindex();
  train_worker_ = std::jthread([this](std::stop_token st) { train_loop(st); });
  for (int i = 0; i < options_.sample_workers; ++i) {
    sample_workers_.emplace_back([this](std::stop_token st) { sample_loop(st); });
  }
  for (const auto& id : queued) {
    if (auto job = jobs_->get(id)) enqueue(*job);
  }
  listener_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  spdlog::info("serving on http://{}:{} (workdir {})", options_.host, port_, options_.workdir.string());
  return port_;
}

void Service::stop() {
  std::lock_guard lock(stop_mutex_);
  if (stopped_) return;
  stopped_ = true;
  stopping_ = true;
  jobs_->wake_all();
  if (server_) server_->stop();
  if (listener_.joinable()) listener_.join();
  train_worker_.request_stop();
  for (auto& w : sample_workers_) w.request_stop();
  queue_cv_.notify_all();
  if (train_worker_.joinable()) train_worker_.join();
  for (auto& w : sample_workers_) {
    if (w.joinable()) w.join();
  }
}

void Service::enqueue(const JobRecord& job) {
  {
    std::lock_guard lock(queue_mutex_);
    (job.kind == JobKind::kTrain ? train_queue_ : sample_queue_).push_back(job.id);
  }
  queue_cv_.notify_all();
}

void Service::train_loop(std::stop_token stop) {
  while (!stop.stop_requested()) {
    std::string id;
    {
      std::unique_lock lock(queue_mutex_);
      if (!queue_cv_.wait(lock, stop, [&] { return !train_queue_.empty(); })) return;
      id = train_queue_.front();
      train_queue_.pop_front();
    }
    run_train_job(id, stop);
  }
}

void Service::sample_loop(std::stop_token stop) {
  while (!stop.stop_requested()) {
    std::string id;
    {
      std::unique_lock lock(queue_mutex_);
      if (!queue_cv_.wait(lock, stop, [&] { return !sample_queue_.empty(); })) return;
      id = sample_queue_.front();
      sample_queue_.pop_front();
    }
    run_sample_job(id);
  }
}

void Service::run_train_job(const std::string& id, std::stop_token stop) {
  const auto job = jobs_->get(id);
  if (!job) return;
  jobs_->mark_running(id);
  const auto ckpt = checkpoint_path(id);
  try {
    const TrainConfig cfg = train_config_from_json(job->request.at("config"));
    auto sink = [&](const TrainProgress& p) {
      char msg[160];
      std::snprintf(msg, sizeof msg, "iteration %d/%d loss %.6f (ema %.6f) lr %.1e", p.iteration, p.iterations,
                    p.loss, p.loss_ema, p.lr);
      jobs_->update_progress(id, static_cast<double>(p.iteration) / p.iterations, msg,
                             {{"iteration", p.iteration},
                              {"iterations", p.iterations},
                              {"loss", p.loss},
                              {"loss_ema", p.loss_ema},
                              {"lr", p.lr},
                              {"elapsed_seconds", p.elapsed_seconds}});
    };
    const TrainResult result = train(cfg, ckpt, sink, stop);
    if (result.stopped_early) {
      jobs_->fail(id,
                  "interrupted by shutdown at iteration " + std::to_string(result.iterations_completed) + " of " +
                      std::to_string(cfg.iterations) + "; partial checkpoint saved",
                  {"checkpoint"});
    } else {
      jobs_->finish(id, {"checkpoint"}, "trained " + std::to_string(result.iterations_completed) + " iterations");
    }
  } catch (const std::exception& e) {
    spdlog::error("train job {} failed: {}", id, e.what());
    jobs_->fail(id, e.what());
  }
}

void Service::run_sample_job(const std::string& id) {
  const auto job = jobs_->get(id);
  if (!job) return;
  jobs_->mark_running(id);
  try {
    const json& r = job->request;
    SampleRequest req;
    req.checkpoint = checkpoint_path(r.at("checkpoint_id").get<std::string>());
    req.image = image_path(r.at("image_id").get<std::string>());
    req.mask = jobs_->job_dir(id) / "mask.png";
    req.num_samples = r.at("n").get<int>();
    req.seed = r.at("seed").get<std::uint64_t>();
    req.clamp = r.value("clamp", true);
    req.composite = r.value("composite", true);
    req.replace_each_step = r.value("replace_each_step", false);
    const int n = req.num_samples;
    auto sink = [&](int sample, int done, int total) {
      if (stopping_) throw Interrupted("interrupted by shutdown");
      if (done % 10 != 0 && done != total) return;
      const double progress = (static_cast<double>(sample) * total + done) / (static_cast<double>(n) * total);
      jobs_->update_progress(id, progress,
                             "sample " + std::to_string(sample + 1) + "/" + std::to_string(n) + " step " +
                                 std::to_string(done) + "/" + std::to_string(total),
                             {{"sample", sample}, {"step", done}, {"steps", total}});
    };
    const SampleOutcome out = run_sampling(req, jobs_->job_dir(id), sink);
    std::vector<std::string> artifacts;
    for (int k = 0; k < n; ++k) artifacts.push_back(std::to_string(k) + ".png");
    jobs_->finish(id, artifacts, "sampled " + std::to_string(n) + " image(s)");
  } catch (const std::exception& e) {
    spdlog::error("sample job {} failed: {}", id, e.what());
    jobs_->fail(id, e.what());
  }
}

void Service::routes() {
  auto& s = *server_;
  s.set_payload_max_length(options_.max_upload_bytes);
  const std::string id = kIdPattern;

  // Resolves a mask given as a vector payload or as an uploaded PNG id.
  auto resolve_mask = [this](const json& spec) -> Mask {
    if (!spec.is_object()) throw ConfigError("mask must be an object");
    if (spec.contains("image_id")) {
      const auto path = image_path(spec["image_id"].get<std::string>());
      if (!fs::exists(path)) throw NotFound("unknown mask image " + spec["image_id"].get<std::string>());
      return load_mask(path);
    }
    return rasterize_payload(mask_payload_from_json(spec));
  };

  s.Get("/api/health", guarded([](const httplib::Request&, httplib::Response& res) {
          send_json(res, 200, {{"status", "ok"}});
        }));

  s.Post("/api/images", guarded([this](const httplib::Request& req, httplib::Response& res) {
           std::string body = req.body;
           if (req.is_multipart_form_data()) {
             if (!req.has_file("file")) throw FormatError("multipart upload needs a 'file' field");
             body = req.get_file_value("file").content;
           }
           if (body.empty()) throw FormatError("empty upload");
           const std::vector<std::uint8_t> bytes(body.begin(), body.end());
           const ImageTensor img = image_from_png(bytes);
           const std::string image_id = new_id();
           write_file_bytes(image_path(image_id), bytes);
           send_json(res, 201,
                     {{"id", image_id}, {"width", img.width()}, {"height", img.height()}, {"channels", img.channels()}});
         }));

  s.Get("/api/images", guarded([this](const httplib::Request&, httplib::Response& res) {
          json list = json::array();
          for (const auto& e : fs::directory_iterator(options_.workdir / "images")) {
            if (e.path().extension() == ".png") list.push_back(e.path().stem().string());
          }
          std::sort(list.begin(), list.end());
          send_json(res, 200, list);
        }));

  s.Get("/api/images/" + id, guarded([this](const httplib::Request& req, httplib::Response& res) {
          const auto path = image_path(req.matches[1]);
          if (!fs::exists(path)) throw NotFound("unknown image " + std::string(req.matches[1]));
          serve_file(res, path, "image/png");
        }));

  s.Post("/api/train", guarded([this, resolve_mask](const httplib::Request& req, httplib::Response& res) {
           const json body = parse_body(req);
           const std::string image_id = body.at("image_id").get<std::string>();
           const auto source = image_path(image_id);
           if (!fs::exists(source)) throw NotFound("unknown image " + image_id);
           TrainConfig cfg = train_config_from_json(body.value("config", json::object()));
           cfg.sources = {source.string()};
           cfg.svbrdf.reset();
           std::optional<Mask> test_mask;
           if (body.contains("test_mask") && !body["test_mask"].is_null()) {
             test_mask = resolve_mask(body["test_mask"]);
           }
           const ImageTensor image = load_image(source);
           if (test_mask) assert_same_shape(image, *test_mask);

           // Validate with a placeholder mask path; the real one lives in the job directory.
           cfg.test_mask = test_mask ? std::optional<std::string>("test_mask.png") : std::nullopt;
           cfg.validate();
           (void)effective_crop(TrainingData({image}, test_mask), cfg);

           std::lock_guard lock(queue_mutex_);
           if (jobs_->has_active(JobKind::kTrain)) throw Conflict("a training job is already queued or running");
           const std::string job_id = new_id();
           fs::create_directories(jobs_->job_dir(job_id));
           if (test_mask) {
             const auto mask_path = jobs_->job_dir(job_id) / "test_mask.png";
             save_mask(*test_mask, mask_path);
             cfg.test_mask = mask_path.string();
           }
           const JobRecord job =
               jobs_->create(JobKind::kTrain, {{"image_id", image_id}, {"config", to_json(cfg)}}, job_id);
           train_queue_.push_back(job.id);
           queue_cv_.notify_all();
           send_json(res, 202, {{"id", job.id}, {"state", "queued"}});
         }));

  s.Post("/api/sample", guarded([this, resolve_mask](const httplib::Request& req, httplib::Response& res) {
           const json body = parse_body(req);
           const std::string ckpt_id = body.at("checkpoint_id").get<std::string>();
           const std::string image_id = body.at("image_id").get<std::string>();
           const int n = body.value("n", 1);
           if (n < 1 || n > 64) throw ConfigError("n must lie in [1, 64]");
           const auto ckpt = checkpoint_path(ckpt_id);
           if (!fs::exists(ckpt)) throw NotFound("unknown checkpoint " + ckpt_id);
           const auto source = image_path(image_id);
           if (!fs::exists(source)) throw NotFound("unknown image " + image_id);
           if (!body.contains("mask")) throw ConfigError("a mask is required");
           const Mask mask = resolve_mask(body["mask"]);
           check_sample_inputs(read_checkpoint_info(ckpt), load_image(source), mask);

           json request = {{"checkpoint_id", ckpt_id},
                           {"image_id", image_id},
                           {"n", n},
                           {"seed", body.value("seed", std::uint64_t{0})},
                           {"clamp", body.value("clamp", true)},
                           {"composite", body.value("composite", true)},
                           {"replace_each_step", body.value("replace_each_step", false)},
                           {"mask_hole_fraction", mask.hole_fraction()}};
           const JobRecord job = jobs_->create(JobKind::kSample, std::move(request));
           save_mask(mask, jobs_->job_dir(job.id) / "mask.png");
           enqueue(job);
           send_json(res, 202, {{"id", job.id}, {"state", "queued"}});
         }));

  s.Get("/api/jobs", guarded([this](const httplib::Request&, httplib::Response& res) {
          json list = json::array();
          for (const auto& job : jobs_->list()) list.push_back(to_json(job));
          send_json(res, 200, list);
        }));

  s.Get("/api/jobs/" + id, guarded([this](const httplib::Request& req, httplib::Response& res) {
          const auto job = jobs_->get(req.matches[1]);
          if (!job) throw NotFound("unknown job " + std::string(req.matches[1]));
          send_json(res, 200, to_json(*job));
        }));

  s.Get("/api/jobs/" + id + "/events", guarded([this](const httplib::Request& req, httplib::Response& res) {
          const std::string job_id = req.matches[1];
          if (!jobs_->get(job_id)) throw NotFound("unknown job " + job_id);
          res.set_header("Cache-Control", "no-cache");
          res.set_chunked_content_provider(
              "text/event-stream", [this, job_id, seen = std::uint64_t{0}](std::size_t, httplib::DataSink& sink) mutable {
                const auto job = jobs_->wait_for_change(job_id, seen, kEventPoll);
                if (!job) {
                  sink.done();
                  return true;
                }
                if (job->version > seen) {
                  seen = job->version;
                  const std::string frame = "event: job\ndata: " + to_json(*job).dump() + "\n\n";
                  if (!sink.write(frame.data(), frame.size())) return false;
                  if (job->terminal()) {
                    sink.done();
                    return true;
                  }
                } else {
                  static const std::string keepalive = ": keepalive\n\n";
                  if (!sink.write(keepalive.data(), keepalive.size())) return false;
                }
                if (stopping_) sink.done();
                return true;
              });
        }));

  s.Get("/api/jobs/" + id + R"(/artifacts/(\d+)\.png)",
        guarded([this](const httplib::Request& req, httplib::Response& res) {
          const auto job = jobs_->get(req.matches[1]);
          if (!job) throw NotFound("unknown job " + std::string(req.matches[1]));
          const int k = std::stoi(req.matches[2]);
          if (job->kind != JobKind::kSample || job->state != JobState::kDone) throw NotFound("artifact not ready");
          serve_file(res, jobs_->job_dir(job->id) / sample_name(k), "image/png");
        }));

  s.Get("/api/jobs/" + id + "/artifacts/checkpoint", guarded([this](const httplib::Request& req, httplib::Response& res) {
          const auto job = jobs_->get(req.matches[1]);
          if (!job || job->kind != JobKind::kTrain) throw NotFound("unknown training job");
          serve_file(res, checkpoint_path(job->id), "application/octet-stream");
        }));

  s.Get("/api/checkpoints", guarded([this](const httplib::Request&, httplib::Response& res) {
          json list = json::array();
          std::vector<fs::path> files;
          for (const auto& e : fs::directory_iterator(options_.workdir / "checkpoints")) {
            if (e.path().extension() == ".ckpt") files.push_back(e.path());
          }
          std::sort(files.begin(), files.end());
          for (const auto& f : files) {
            json entry = {{"id", f.stem().string()}, {"size_bytes", fs::file_size(f)}};
            try {
              const CheckpointInfo info = read_checkpoint_info(f);
              entry["diffusion_steps"] = info.diffusion_steps;
              entry["channels"] = info.model.image_channels;
              entry["parameter_count"] = info.parameter_count;
              entry["base_width"] = info.model.base_width;
              entry["depth"] = info.model.depth;
              entry["iterations_completed"] = info.training.value("iterations_completed", json(nullptr));
            } catch (const std::exception& e) {
              entry["error"] = e.what();
            }
            list.push_back(entry);
          }
          send_json(res, 200, list);
        }));

  s.Get("/api/checkpoints/" + id, guarded([this](const httplib::Request& req, httplib::Response& res) {
          const auto path = checkpoint_path(req.matches[1]);
          if (!fs::exists(path)) throw NotFound("unknown checkpoint " + std::string(req.matches[1]));
          serve_file(res, path, "application/octet-stream");
        }));

  if (options_.static_dir) {
    if (!s.set_mount_point("/", options_.static_dir->string())) {
      spdlog::warn("static directory {} not found; UI assets are not served", options_.static_dir->string());
    }
  }
}

}  // namespace forge
