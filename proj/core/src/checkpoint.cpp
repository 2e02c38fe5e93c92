#include "somoformer/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace somoformer {

namespace {

constexpr char kMagic[4] = {'S', 'M', 'F', '1'};
constexpr std::uint32_t kVersion = 1;

void write_bytes(std::ostream& out, const void* data, std::size_t n) {
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
}

template <typename T>
void write_le(std::ostream& out, T value) {
  static_assert(std::is_unsigned_v<T>);
  unsigned char bytes[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    bytes[i] = static_cast<unsigned char>(value >> (8 * i));
  }
  write_bytes(out, bytes, sizeof(T));
}

void write_f64(std::ostream& out, double value) {
  write_le(out, std::bit_cast<std::uint64_t>(value));
}

template <typename T>
T read_le(std::istream& in, const char* what) {
  unsigned char bytes[sizeof(T)];
  in.read(reinterpret_cast<char*>(bytes), sizeof(T));
  if (!in) throw std::runtime_error("checkpoint: truncated while reading " + std::string(what));
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    value |= static_cast<T>(bytes[i]) << (8 * i);
  }
  return value;
}

double read_f64(std::istream& in, const char* what) {
  return std::bit_cast<double>(read_le<std::uint64_t>(in, what));
}

void write_record(std::ostream& out, const std::string& name, const Shape& shape,
                  const std::vector<double>& data) {
  if (name.size() > 0xffff) throw std::invalid_argument("checkpoint: record name too long");
  write_le(out, static_cast<std::uint16_t>(name.size()));
  write_bytes(out, name.data(), name.size());
  write_le(out, static_cast<std::uint8_t>(shape.size()));
  for (int dim : shape) write_le(out, static_cast<std::uint64_t>(dim));
  for (double v : data) write_f64(out, v);
}

struct RawRecord {
  std::string name;
  Shape shape;
  std::vector<double> data;
};

// Reads one record, or returns false at a clean end of file.
bool read_record(std::istream& in, RawRecord& record) {
  int first = in.peek();
  if (first == std::char_traits<char>::eof()) return false;
  const auto name_len = read_le<std::uint16_t>(in, "record name length");
  record.name.resize(name_len);
  in.read(record.name.data(), name_len);
  if (!in) throw std::runtime_error("checkpoint: truncated while reading record name");
  const auto rank = read_le<std::uint8_t>(in, "record rank");
  record.shape.assign(rank, 0);
  std::size_t count = 1;
  for (int i = 0; i < rank; ++i) {
    const auto dim = read_le<std::uint64_t>(in, "record dimension");
    record.shape[static_cast<std::size_t>(i)] = static_cast<int>(dim);
    count *= static_cast<std::size_t>(dim);
  }
  record.data.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    record.data[i] = read_f64(in, ("data of record '" + record.name + "'").c_str());
  }
  return true;
}

void write_header(std::ostream& out, const std::string& config_json) {
  write_bytes(out, kMagic, sizeof(kMagic));
  write_le(out, kVersion);
  write_le(out, static_cast<std::uint64_t>(config_json.size()));
  write_bytes(out, config_json.data(), config_json.size());
}

nlohmann::json read_header(std::istream& in) {
  char magic[4];
  in.read(magic, sizeof(magic));
  if (!in || std::string(magic, 4) != std::string(kMagic, 4)) {
    throw std::runtime_error("checkpoint: not a checkpoint file (bad magic)");
  }
  const auto version = read_le<std::uint32_t>(in, "format version");
  if (version != kVersion) {
    throw std::runtime_error("checkpoint: unsupported format version " + std::to_string(version) +
                             " (expected " + std::to_string(kVersion) + ")");
  }
  const auto json_len = read_le<std::uint64_t>(in, "config length");
  std::string text(json_len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(json_len));
  if (!in) throw std::runtime_error("checkpoint: truncated while reading config");
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& err) {
    throw std::runtime_error("checkpoint: invalid config JSON: " + std::string(err.what()));
  }
}

void write_params(std::ostream& out, const Parameters& params) {
  for (const auto& [name, tensor] : params.named()) {
    write_record(out, name, tensor.shape(), tensor.data());
  }
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open '" + path + "' for reading");
  return in;
}

// Fills params from raw records; opt/ records are collected separately.
void apply_records(std::istream& in, Parameters& params,
                   std::map<std::string, RawRecord>* opt_records) {
  std::map<std::string, Tensor> by_name;
  for (auto& [name, tensor] : params.named()) by_name.emplace(name, tensor);
  std::map<std::string, bool> seen;
  for (const auto& [name, tensor] : by_name) {
    (void)tensor;
    seen[name] = false;
  }

  RawRecord record;
  while (read_record(in, record)) {
    if (record.name.rfind("opt/", 0) == 0) {
      if (opt_records != nullptr) (*opt_records)[record.name] = record;
      continue;
    }
    auto it = by_name.find(record.name);
    if (it == by_name.end()) {
      throw std::runtime_error("checkpoint: unknown parameter record '" + record.name + "'");
    }
    if (it->second.shape() != record.shape) {
      throw std::runtime_error("checkpoint: shape mismatch for '" + record.name + "'");
    }
    it->second.data() = record.data;
    seen[record.name] = true;
  }
  for (const auto& [name, found] : seen) {
    if (!found) throw std::runtime_error("checkpoint: missing parameter record '" + name + "'");
  }
}

}  // namespace

void save_checkpoint(const Parameters& params, const ModelConfig& config,
                     const std::string& path) {
  config.validate();
  std::ofstream out = open_out(path);
  write_header(out, model_config_to_json(config));
  write_params(out, params);
  out.flush();
  if (!out) throw std::runtime_error("checkpoint: failed writing '" + path + "'");
}

std::pair<Parameters, ModelConfig> load_checkpoint(const std::string& path) {
  std::ifstream in = open_in(path);
  const nlohmann::json header = read_header(in);
  const ModelConfig config = model_config_from_json(header.dump());
  Parameters params = allocate_parameters(config);
  apply_records(in, params, nullptr);
  return {std::move(params), config};
}

void save_train_checkpoint(const Parameters& params, const ModelConfig& config,
                           const TrainState& state, const std::string& path) {
  config.validate();
  nlohmann::json j = nlohmann::json::parse(model_config_to_json(config));
  nlohmann::json train;
  train["step"] = state.step;
  train["epochs_done"] = state.epochs_done;
  train["rng"] = state.rng_state;
  train["adam"] = {{"lr", state.adam.lr},
                   {"beta1", state.adam.beta1},
                   {"beta2", state.adam.beta2},
                   {"epsilon", state.adam.epsilon}};
  nlohmann::json steps = nlohmann::json::object();
  for (const auto& [name, adam_state] : state.adam_states) steps[name] = adam_state.k;
  train["adam_k"] = steps;
  j["train"] = train;

  std::ofstream out = open_out(path);
  write_header(out, j.dump());
  write_params(out, params);
  for (const auto& [name, adam_state] : state.adam_states) {
    const Shape m_shape = {static_cast<int>(adam_state.m.size())};
    const Shape v_shape = {static_cast<int>(adam_state.v.size())};
    write_record(out, "opt/m/" + name, m_shape, adam_state.m);
    write_record(out, "opt/v/" + name, v_shape, adam_state.v);
  }
  out.flush();
  if (!out) throw std::runtime_error("checkpoint: failed writing '" + path + "'");
}

TrainCheckpoint load_train_checkpoint(const std::string& path) {
  std::ifstream in = open_in(path);
  const nlohmann::json header = read_header(in);
  if (!header.contains("train")) {
    throw std::runtime_error("checkpoint: '" + path + "' holds no training state to resume from");
  }

  TrainCheckpoint out;
  out.config = model_config_from_json(header.dump());
  out.params = allocate_parameters(out.config);

  std::map<std::string, RawRecord> opt_records;
  apply_records(in, out.params, &opt_records);

  const nlohmann::json& train = header.at("train");
  try {
    out.state.step = train.at("step").get<std::int64_t>();
    out.state.epochs_done = train.at("epochs_done").get<int>();
    out.state.rng_state = train.at("rng").get<std::string>();
    const nlohmann::json& adam = train.at("adam");
    out.state.adam.lr = adam.at("lr").get<double>();
    out.state.adam.beta1 = adam.at("beta1").get<double>();
    out.state.adam.beta2 = adam.at("beta2").get<double>();
    out.state.adam.epsilon = adam.at("epsilon").get<double>();
    for (const auto& [name, k] : train.at("adam_k").items()) {
      AdamState state;
      state.k = k.get<std::int64_t>();
      auto m_it = opt_records.find("opt/m/" + name);
      auto v_it = opt_records.find("opt/v/" + name);
      if (m_it == opt_records.end() || v_it == opt_records.end()) {
        throw std::runtime_error("checkpoint: missing optimizer moments for '" + name + "'");
      }
      state.m = m_it->second.data;
      state.v = v_it->second.data;
      out.state.adam_states.emplace(name, std::move(state));
    }
  } catch (const nlohmann::json::exception& err) {
    throw std::runtime_error("checkpoint: malformed training state: " + std::string(err.what()));
  }
  return out;
}

}  // namespace somoformer
