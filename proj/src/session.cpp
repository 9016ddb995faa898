#include "eddi/session.hpp"

#include <algorithm>
#include <atomic>
#include <csignal>
#include <cmath>
#include <ctime>
#include <fstream>
#include <regex>

#include <httplib.h>

#include "eddi/checkpoint.hpp"

namespace eddi {

void ModelRegistry::add(const std::string& id, PartialVae model) {
  model.validate();
  models_[id] = std::make_shared<const PartialVae>(std::move(model));
}

std::size_t ModelRegistry::load_directory(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) fail(ErrorKind::config, "model directory " + dir.string() + " does not exist", "EDDI_MODEL_DIR");
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".pvae") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) add(f.stem().string(), load(f));
  return files.size();
}

std::shared_ptr<const PartialVae> ModelRegistry::find(const std::string& id) const {
  auto it = models_.find(id);
  if (it == models_.end()) fail(ErrorKind::not_found, "unknown model '" + id + "'", "model_id");
  return it->second;
}

std::vector<std::string> ModelRegistry::ids() const {
  std::vector<std::string> out;
  for (const auto& [id, m] : models_) out.push_back(id);
  return out;
}

nlohmann::json ModelRegistry::describe() const {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& [id, m] : models_) {
    list.push_back({{"model_id", id},
                    {"schema", to_json(m->schema)},
                    {"config", to_json(m->config)},
                    {"targets", m->schema.targets()}});
  }
  return nlohmann::json{{"models", list}};
}

const char* to_string(SessionStatus s) {
  switch (s) {
    case SessionStatus::active: return "active";
    case SessionStatus::exhausted: return "exhausted";
    case SessionStatus::closed: return "closed";
  }
  return "?";
}

namespace {

std::string iso_time(std::chrono::system_clock::time_point t) {
  const std::time_t tt = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::vector<Candidate> open_candidates(const Session& s) {
  std::vector<Candidate> out;
  for (const auto& c : variable_candidates(s.model->schema)) {
    if (!s.observations.contains(c.variables.front())) out.push_back(c);
  }
  return out;
}

nlohmann::json rewards_json(const std::vector<RewardEstimate>& rewards, const VariableSchema& schema) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& r : rewards) {
    list.push_back({{"variable", r.candidate},
                    {"name", schema.variables[static_cast<std::size_t>(r.candidate)].name},
                    {"value", r.value},
                    {"stderr", r.std_error}});
  }
  return list;
}

}  // namespace

nlohmann::json to_json(const NextQuestion& q, const VariableSchema& schema) {
  nlohmann::json pred = nlohmann::json::array();
  for (const auto& p : q.prediction) {
    pred.push_back({{"target", p.variable},
                    {"name", schema.variables[static_cast<std::size_t>(p.variable)].name},
                    {"mean", p.mean},
                    {"variance", p.variance}});
  }
  return nlohmann::json{{"recommended", q.recommended}, {"rewards", rewards_json(q.rewards, schema)}, {"prediction", pred}};
}

SessionStore::SessionStore(std::shared_ptr<const ModelRegistry> registry, SessionOptions options)
    : registry_(std::move(registry)), options_(options) {}

std::string SessionStore::create(const std::string& model_id, std::uint64_t seed) {
  auto model = registry_->find(model_id);
  auto s = std::make_shared<Session>();
  s->model_id = model_id;
  s->model = model;
  s->seed = seed;
  s->observations = ObservationSet(model->num_variables());
  s->created = s->updated = std::chrono::system_clock::now();
  if (model->schema.selectable().empty()) s->status = SessionStatus::exhausted;
  std::lock_guard lock(mutex_);
  ++counter_;
  char buf[40];
  std::snprintf(buf, sizeof(buf), "s%llu-%08llx", static_cast<unsigned long long>(counter_),
                static_cast<unsigned long long>(mix64(counter_ ^ seed) & 0xffffffffULL));
  s->id = buf;
  sessions_[s->id] = s;
  return s->id;
}

std::shared_ptr<Session> SessionStore::get(const std::string& id) const {
  std::lock_guard lock(mutex_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) fail(ErrorKind::not_found, "unknown session '" + id + "'", "session_id");
  return it->second;
}

NextQuestion SessionStore::compute_next(const Session& s) const {
  const PartialVae& model = *s.model;
  const std::vector<Index> targets = model.schema.targets();
  const auto step = static_cast<std::uint64_t>(s.step());
  NextQuestion q;
  Strategy strategy;
  strategy.samples = options_.reward_samples;
  strategy.threads = options_.threads;
  Rng sel(derive_seed(s.seed, {step + 1}));
  Selection choice = select_next(model, s.observations, open_candidates(s), targets, strategy, sel);
  q.recommended = choice.candidate;
  q.rewards = std::move(choice.rewards);
  Rng pred(derive_seed(s.seed, {step, kPredictionKey}));
  q.prediction = predict_targets(model, s.observations, targets, options_.prediction_samples, pred);
  return q;
}

NextQuestion SessionStore::next(const std::string& id) {
  auto s = get(id);
  std::lock_guard lock(s->mutex);
  if (s->status != SessionStatus::active) {
    fail(ErrorKind::state, "session is " + std::string(to_string(s->status)), "status");
  }
  if (!s->cached) s->cached = compute_next(*s);
  return *s->cached;
}

AnswerResult SessionStore::answer(const std::string& id, Index variable, double value, std::uint64_t version) {
  auto s = get(id);
  std::lock_guard lock(s->mutex);
  if (s->status != SessionStatus::active) {
    fail(ErrorKind::state, "session is " + std::string(to_string(s->status)), "status");
  }
  if (version != s->version) {
    fail(ErrorKind::conflict,
         "version " + std::to_string(version) + " is stale; current version is " + std::to_string(s->version),
         "version");
  }
  const VariableSchema& schema = s->model->schema;
  if (variable < 0 || variable >= schema.size()) {
    fail(ErrorKind::argument, "variable " + std::to_string(variable) + " does not exist", "variable");
  }
  const Variable& var = schema.variables[static_cast<std::size_t>(variable)];
  if (var.target) fail(ErrorKind::argument, "variable '" + var.name + "' is a target and cannot be answered", "variable");
  if (s->observations.contains(variable)) {
    fail(ErrorKind::argument, "variable '" + var.name + "' is already answered", "variable");
  }
  if (!std::isfinite(value)) fail(ErrorKind::argument, "value must be finite", "value");
  if (var.kind == VariableKind::binary && value != 0.0 && value != 1.0) {
    fail(ErrorKind::argument, "binary variable '" + var.name + "' takes 0 or 1", "value");
  }
  if (var.kind == VariableKind::continuous && (value < 0.0 || value > 1.0)) {
    fail(ErrorKind::argument, "value for '" + var.name + "' must lie in [0, 1]", "value");
  }

  HistoryEntry h;
  h.step = s->step() + 1;
  h.variable = variable;
  h.value = value;
  if (s->cached) {
    h.recommended = s->cached->recommended;
    h.rewards = s->cached->rewards;
  }
  s->observations.insert(variable, value);
  s->history.push_back(std::move(h));
  s->cached.reset();
  ++s->version;
  s->updated = std::chrono::system_clock::now();
  if (open_candidates(*s).empty()) s->status = SessionStatus::exhausted;
  return AnswerResult{s->status, s->step(), s->version};
}

void SessionStore::close(const std::string& id) {
  auto s = get(id);
  std::lock_guard lock(s->mutex);
  s->status = SessionStatus::closed;
  s->cached.reset();
  ++s->version;
  s->updated = std::chrono::system_clock::now();
}

nlohmann::json SessionStore::describe(const std::string& id) const {
  auto s = get(id);
  std::lock_guard lock(s->mutex);
  const VariableSchema& schema = s->model->schema;
  nlohmann::json obs = nlohmann::json::array();
  for (const auto& [i, v] : s->observations.entries()) {
    obs.push_back({{"variable", i}, {"name", schema.variables[static_cast<std::size_t>(i)].name}, {"value", v}});
  }
  nlohmann::json hist = nlohmann::json::array();
  for (const auto& h : s->history) {
    hist.push_back({{"step", h.step},
                    {"recommended", h.recommended},
                    {"variable", h.variable},
                    {"value", h.value},
                    {"rewards", rewards_json(h.rewards, schema)}});
  }
  return nlohmann::json{{"session_id", s->id},
                        {"model_id", s->model_id},
                        {"seed", s->seed},
                        {"status", to_string(s->status)},
                        {"step", s->step()},
                        {"version", s->version},
                        {"observations", obs},
                        {"history", hist},
                        {"created", iso_time(s->created)},
                        {"updated", iso_time(s->updated)}};
}

std::shared_ptr<const PartialVae> SessionStore::model_of(const std::string& id) const { return get(id)->model; }

nlohmann::json SessionStore::snapshot() const {
  std::vector<std::string> ids;
  {
    std::lock_guard lock(mutex_);
    for (const auto& [id, s] : sessions_) ids.push_back(id);
  }
  nlohmann::json list = nlohmann::json::array();
  for (const auto& id : ids) list.push_back(describe(id));
  return nlohmann::json{{"sessions", list}};
}

nlohmann::json error_body(const std::string& code, const std::string& message, const std::string& field) {
  nlohmann::json j{{"code", code}, {"message", message}};
  if (!field.empty()) j["field"] = field;
  return j;
}

int http_status(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::not_found: return 404;
    case ErrorKind::conflict:
    case ErrorKind::state: return 409;
    case ErrorKind::numeric:
    case ErrorKind::capability: return 500;
    default: return 400;
  }
}

namespace {

nlohmann::json parse_body(const std::string& body) {
  try {
    nlohmann::json j = nlohmann::json::parse(body.empty() ? "{}" : body);
    if (!j.is_object()) fail(ErrorKind::argument, "request body must be a JSON object", "body");
    return j;
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::argument, std::string("malformed JSON body: ") + e.what(), "body");
  }
}

template <typename T>
T required(const nlohmann::json& j, const char* field) {
  if (!j.contains(field)) fail(ErrorKind::argument, std::string("missing field '") + field + "'", field);
  try {
    return j.at(field).get<T>();
  } catch (const nlohmann::json::exception&) {
    fail(ErrorKind::argument, std::string("field '") + field + "' has the wrong type", field);
  }
}

}  // namespace

ApiResponse handle_request(SessionStore& store, const std::string& method, const std::string& path,
                           const std::string& body) {
  static const std::regex session_re(R"(^/v1/sessions/([A-Za-z0-9_-]+)(/next|/answers|/close)?$)");
  try {
    if (path == "/v1/models") {
      if (method != "GET") return {405, error_body("method_not_allowed", "use GET")};
      return {200, store.registry().describe()};
    }
    if (path == "/v1/sessions") {
      if (method != "POST") return {405, error_body("method_not_allowed", "use POST")};
      const nlohmann::json j = parse_body(body);
      const auto model_id = required<std::string>(j, "model_id");
      std::uint64_t seed = 0;
      if (j.contains("seed")) seed = required<std::uint64_t>(j, "seed");
      return {201, nlohmann::json{{"session_id", store.create(model_id, seed)}}};
    }
    std::smatch m;
    if (std::regex_match(path, m, session_re)) {
      const std::string id = m[1];
      const std::string tail = m[2];
      if (tail.empty()) {
        if (method != "GET") return {405, error_body("method_not_allowed", "use GET")};
        return {200, store.describe(id)};
      }
      if (tail == "/next") {
        if (method != "GET") return {405, error_body("method_not_allowed", "use GET")};
        const NextQuestion q = store.next(id);
        return {200, to_json(q, store.model_of(id)->schema)};
      }
      if (tail == "/answers") {
        if (method != "POST") return {405, error_body("method_not_allowed", "use POST")};
        const nlohmann::json j = parse_body(body);
        const auto variable = required<Index>(j, "variable");
        const auto value = required<double>(j, "value");
        const auto version = required<std::uint64_t>(j, "version");
        const AnswerResult r = store.answer(id, variable, value, version);
        return {200, nlohmann::json{{"status", to_string(r.status)}, {"step", r.step}, {"version", r.version}}};
      }
      if (method != "POST") return {405, error_body("method_not_allowed", "use POST")};
      store.close(id);
      return {200, nlohmann::json{{"status", "closed"}}};
    }
    return {404, error_body("not_found", "no route for " + method + " " + path)};
  } catch (const Error& e) {
    return {http_status(e.kind()), error_body(to_string(e.kind()), e.what(), e.field())};
  } catch (const std::exception& e) {
    return {500, error_body("internal_error", e.what())};
  }
}

std::pair<std::string, int> parse_bind_addr(const std::string& addr) {
  const auto colon = addr.rfind(':');
  std::string host = colon == std::string::npos ? "127.0.0.1" : addr.substr(0, colon);
  const std::string port_text = colon == std::string::npos ? addr : addr.substr(colon + 1);
  if (host.empty()) host = "0.0.0.0";
  int port = -1;
  try {
    std::size_t used = 0;
    port = std::stoi(port_text, &used);
    if (used != port_text.size()) port = -1;
  } catch (const std::exception&) {
  }
  if (port < 0 || port > 65535) fail(ErrorKind::config, "bind address '" + addr + "' needs a port in 0..65535", "EDDI_BIND_ADDR");
  return {host, port};
}

namespace {

std::atomic<httplib::Server*> g_server{nullptr};

extern "C" void on_signal(int) {
  if (auto* s = g_server.load()) s->stop();
}

}  // namespace

void stop_server() {
  if (auto* s = g_server.load()) s->stop();
}

void serve(SessionStore& store, const ServeOptions& options, const std::function<void(int)>& on_ready) {
  const auto [host, port] = parse_bind_addr(options.bind_addr);
  httplib::Server server;
  auto dispatch = [&store](const httplib::Request& req, httplib::Response& res) {
    const ApiResponse r = handle_request(store, req.method, req.path, req.body);
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  server.Get(R"(/.*)", dispatch);
  server.Post(R"(/.*)", dispatch);
  server.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  server.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });

  int bound = port;
  if (port == 0) {
    bound = server.bind_to_any_port(host);
  } else if (!server.bind_to_port(host, port)) {
    fail(ErrorKind::config, "cannot bind " + options.bind_addr, "EDDI_BIND_ADDR");
  }
  if (bound < 0) fail(ErrorKind::config, "cannot bind " + options.bind_addr, "EDDI_BIND_ADDR");
  g_server.store(&server);
  auto prev_int = std::signal(SIGINT, on_signal);
  auto prev_term = std::signal(SIGTERM, on_signal);
  if (on_ready) on_ready(bound);
  server.listen_after_bind();
  std::signal(SIGINT, prev_int);
  std::signal(SIGTERM, prev_term);
  g_server.store(nullptr);
  if (!options.snapshot.empty()) {
    std::ofstream f(options.snapshot, std::ios::trunc);
    f << store.snapshot().dump(2) << '\n';
  }
}

}  // namespace eddi
