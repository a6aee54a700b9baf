#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "wizs/calibration.hpp"
#include "wizs/pipeline.hpp"
#include "wizs/providers.hpp"

namespace wizs {

/// Server settings, usually read from a JSON file. Relative paths in the
/// file are resolved against the file's directory.
struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  int queue_cap = 16;  // jobs waiting to start; more are refused with 429
  int workers = 2;
  std::filesystem::path providers;    // provider config; stub providers when empty
  std::filesystem::path calibration;  // calibration model; required
  std::filesystem::path static_dir;   // web UI assets, mounted at / when present
  std::filesystem::path snapshot;     // finished jobs persisted here when set
  int retry_after_seconds = 30;
};

ServiceConfig parse_service_config(std::string_view json_text,
                                   const std::filesystem::path& base_dir = {},
                                   std::string_view source = "service config");
ServiceConfig load_service_config(const std::filesystem::path& path);

struct JobError {
  std::string code;
  std::string message;
};

struct Job {
  std::string job_id;
  JobState state = JobState::kQueued;
  PredictionRequest request;
  std::vector<JobState> history;
  std::optional<PredictionResult> result;
  std::optional<JobError> error;
};

nlohmann::ordered_json request_to_json(const PredictionRequest& request);
nlohmann::ordered_json job_to_json(const Job& job);

/// Thread-safe job table. Transitions are checked against
/// is_valid_transition; a finished job's JSON body is frozen at the moment
/// it finishes and served verbatim afterwards.
class JobStore {
 public:
  explicit JobStore(std::filesystem::path snapshot = {});

  std::string create(PredictionRequest request);
  /// False (and no change) when the move is not a legal transition.
  bool advance(const std::string& job_id, JobState next);
  bool finish(const std::string& job_id, PredictionResult result);
  bool fail(const std::string& job_id, JobError error);

  /// Current JSON body, or nullopt for unknown ids.
  std::optional<std::string> body(const std::string& job_id) const;
  std::optional<JobState> state(const std::string& job_id) const;
  std::optional<PredictionRequest> request(const std::string& job_id) const;
  std::size_t size() const;

 private:
  struct Entry {
    Job job;
    std::string frozen;  // set once the job is done or failed
  };
  void persist_locked() const;

  std::filesystem::path snapshot_;
  mutable std::shared_mutex mu_;
  std::map<std::string, Entry> jobs_;
};

/// The HTTP service: JSON API under /api plus static assets.
class Service {
 public:
  Service(ServiceConfig config, ProviderSet providers, CalibrationModel model);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds host:port (port 0 picks a free one) and returns the bound port.
  int bind();
  /// Serves until stop(); call after bind().
  void run();
  void stop();

  JobStore& jobs();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace wizs
