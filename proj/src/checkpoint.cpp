#include "eddi/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "eddi/error.hpp"

namespace eddi {

namespace {

constexpr char kMagic[8] = {'E', 'D', 'D', 'I', 'P', 'V', 'A', 'E'};

template <typename T>
void put(std::string& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<char, sizeof(T)>>(v);
    for (std::size_t i = sizeof(T); i-- > 0;) out.push_back(bytes[i]);
  } else {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
  }
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T get(const std::string& what) {
    need(sizeof(T), what);
    char buf[sizeof(T)];
    std::memcpy(buf, bytes_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
    pos_ += sizeof(T);
    T v;
    std::memcpy(&v, buf, sizeof(T));
    return v;
  }

  std::string take(std::size_t n, const std::string& what) {
    need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n, const std::string& what) {
    if (bytes_.size() - pos_ < n) fail(ErrorKind::data, "checkpoint truncated while reading " + what, what);
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

nlohmann::json activations(const MlpParams& p) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& l : p.layers) a.push_back(to_string(l.activation));
  return a;
}

// Skeleton with correctly shaped, zero-filled arrays.
PartialVae skeleton(const VariableSchema& schema, const ModelConfig& config, const nlohmann::json& acts) {
  Rng rng(0);
  PartialVae m = make_model(schema, config, rng);
  auto apply = [&](MlpParams& p, const std::string& name) {
    if (!acts.contains(name)) fail(ErrorKind::data, "checkpoint lacks activations for " + name, name);
    const auto& a = acts.at(name);
    if (a.size() != p.layers.size()) fail(ErrorKind::shape, name + ": activation count mismatch", name);
    for (std::size_t i = 0; i < p.layers.size(); ++i) p.layers[i].activation = activation_from_string(a[i].get<std::string>());
  };
  for (std::size_t t = 0; t < m.encoder.feature_nets.size(); ++t) apply(m.encoder.feature_nets[t], "encoder.feature_net" + std::to_string(t));
  apply(m.encoder.inference_net, "encoder.inference_net");
  apply(m.decoder, "decoder");
  return m;
}

}  // namespace

std::string serialize(const PartialVae& model) {
  model.validate();
  nlohmann::json acts;
  for (std::size_t t = 0; t < model.encoder.feature_nets.size(); ++t) {
    acts["encoder.feature_net" + std::to_string(t)] = activations(model.encoder.feature_nets[t]);
  }
  acts["encoder.inference_net"] = activations(model.encoder.inference_net);
  acts["decoder"] = activations(model.decoder);
  const nlohmann::json header{{"schema", to_json(model.schema)}, {"config", to_json(model.config)}, {"activations", acts}};
  const std::string h = header.dump();

  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, h.size());
  out += h;
  const auto params = parameters(model);
  put<std::uint64_t>(out, params.size());
  for (const auto& [name, m] : params) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put<std::uint64_t>(out, static_cast<std::uint64_t>(m->rows()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(m->cols()));
    for (Index r = 0; r < m->rows(); ++r)
      for (Index c = 0; c < m->cols(); ++c) put<double>(out, (*m)(r, c));
  }
  return out;
}

PartialVae deserialize(const std::string& bytes) {
  Reader in(bytes);
  if (in.take(sizeof(kMagic), "magic") != std::string(kMagic, sizeof(kMagic))) {
    fail(ErrorKind::data, "not a model checkpoint (bad magic)", "magic");
  }
  const auto version = in.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    fail(ErrorKind::data, "unsupported checkpoint version " + std::to_string(version), "version");
  }
  const auto hlen = in.get<std::uint64_t>("header length");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(in.take(hlen, "header"));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::data, std::string("checkpoint header is not valid JSON: ") + e.what(), "header");
  }
  PartialVae m;
  try {
    m = skeleton(schema_from_json(header.at("schema")), model_config_from_json(header.at("config")),
                 header.at("activations"));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::data, std::string("checkpoint header incomplete: ") + e.what(), "header");
  }
  auto params = parameters(m);
  const auto count = in.get<std::uint64_t>("array count");
  if (count != params.size()) {
    fail(ErrorKind::shape, "checkpoint holds " + std::to_string(count) + " arrays, model expects " +
                               std::to_string(params.size()),
         "array count");
  }
  std::size_t loaded = 0;
  for (auto& [expected_name, target] : params) {
    const auto nlen = in.get<std::uint32_t>("array name length");
    const std::string name = in.take(nlen, "array name");
    if (name != expected_name) fail(ErrorKind::shape, "unexpected array '" + name + "', wanted '" + expected_name + "'", name);
    const auto rows = in.get<std::uint64_t>(name + ".rows");
    const auto cols = in.get<std::uint64_t>(name + ".cols");
    if (rows != static_cast<std::uint64_t>(target->rows()) || cols != static_cast<std::uint64_t>(target->cols())) {
      fail(ErrorKind::shape, name + ": dimension header " + std::to_string(rows) + "x" + std::to_string(cols) +
                                 " does not match expected " + std::to_string(target->rows()) + "x" +
                                 std::to_string(target->cols()),
           name);
    }
    for (Index r = 0; r < target->rows(); ++r)
      for (Index c = 0; c < target->cols(); ++c) (*target)(r, c) = in.get<double>(name);
    loaded += static_cast<std::size_t>(target->size());
  }
  if (!in.done()) fail(ErrorKind::data, "trailing bytes after checkpoint payload", "payload");
  const std::size_t expected = encoder_param_count(m.config.encoder, m.num_variables()) + m.decoder.param_count();
  if (loaded != expected) fail(ErrorKind::shape, "parameter count disagrees with the encoder configuration", "params");
  m.validate();
  return m;
}

void save(const PartialVae& model, const std::filesystem::path& path) {
  const std::string bytes = serialize(model);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(ErrorKind::data, "cannot open " + path.string() + " for writing", "path");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) fail(ErrorKind::data, "failed writing " + path.string(), "path");
}

PartialVae load(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::not_found, "cannot open checkpoint " + path.string(), "path");
  std::ostringstream ss;
  ss << f.rdbuf();
  return deserialize(ss.str());
}

}  // namespace eddi
