#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "eddi/acquisition.hpp"
#include "eddi/error.hpp"

namespace eddi {

class ModelRegistry {
 public:
  void add(const std::string& id, PartialVae model);
  // Loads every *.pvae file; the id is the file stem.
  std::size_t load_directory(const std::filesystem::path& dir);
  std::shared_ptr<const PartialVae> find(const std::string& id) const;
  std::vector<std::string> ids() const;
  nlohmann::json describe() const;

 private:
  std::map<std::string, std::shared_ptr<const PartialVae>> models_;
};

enum class SessionStatus { active, exhausted, closed };
const char* to_string(SessionStatus s);

struct NextQuestion {
  int recommended = -1;
  std::vector<RewardEstimate> rewards;
  std::vector<TargetPrediction> prediction;
};

struct HistoryEntry {
  int step = 0;
  int recommended = -1;  // -1 when the answer came before any `next`
  Index variable = 0;
  double value = 0.0;
  std::vector<RewardEstimate> rewards;
};

struct SessionOptions {
  Index reward_samples = kDefaultRewardSamples;
  Index prediction_samples = kDefaultRewardSamples;
  int threads = 1;
};

// Session state. Values live in the model's scaled space ([0, 1] for
// continuous variables, {0, 1} for binary ones).
//   recommendation before answer t+1: Rng(derive_seed(seed, {t + 1}))
//   prediction after t answers:       Rng(derive_seed(seed, {t, kPredictionKey}))
// matching run_episode, so a session replays a CLI episode step for step.
struct Session {
  std::string id;
  std::string model_id;
  std::shared_ptr<const PartialVae> model;
  std::uint64_t seed = 0;
  ObservationSet observations{0};
  std::vector<HistoryEntry> history;
  SessionStatus status = SessionStatus::active;
  std::uint64_t version = 0;
  std::chrono::system_clock::time_point created;
  std::chrono::system_clock::time_point updated;
  std::optional<NextQuestion> cached;  // for the current step
  mutable std::mutex mutex;

  int step() const { return static_cast<int>(history.size()); }
};

struct AnswerResult {
  SessionStatus status = SessionStatus::active;
  int step = 0;
  std::uint64_t version = 0;
};

class SessionStore {
 public:
  explicit SessionStore(std::shared_ptr<const ModelRegistry> registry, SessionOptions options = {});

  std::string create(const std::string& model_id, std::uint64_t seed);
  NextQuestion next(const std::string& id);
  AnswerResult answer(const std::string& id, Index variable, double value, std::uint64_t version);
  void close(const std::string& id);
  nlohmann::json describe(const std::string& id) const;
  std::shared_ptr<const PartialVae> model_of(const std::string& id) const;
  nlohmann::json snapshot() const;

  const ModelRegistry& registry() const { return *registry_; }

 private:
  std::shared_ptr<Session> get(const std::string& id) const;
  NextQuestion compute_next(const Session& s) const;

  std::shared_ptr<const ModelRegistry> registry_;
  SessionOptions options_;
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t counter_ = 0;
};

nlohmann::json to_json(const NextQuestion& q, const VariableSchema& schema);

struct ApiResponse {
  int status = 200;
  nlohmann::json body;
};

// Transport-independent request handling for the v1 API.
ApiResponse handle_request(SessionStore& store, const std::string& method, const std::string& path,
                           const std::string& body);

nlohmann::json error_body(const std::string& code, const std::string& message, const std::string& field = {});
int http_status(ErrorKind kind);

struct ServeOptions {
  std::string bind_addr = "127.0.0.1:8080";
  std::filesystem::path snapshot;  // written on shutdown when non-empty
};

// Splits "host:port"; a bare port binds 127.0.0.1.
std::pair<std::string, int> parse_bind_addr(const std::string& addr);

// Blocks until stop_server() is called or SIGINT/SIGTERM arrives.
void serve(SessionStore& store, const ServeOptions& options, const std::function<void(int port)>& on_ready = {});
void stop_server();

}  // namespace eddi
