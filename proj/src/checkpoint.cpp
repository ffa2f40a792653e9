#include "oplanes/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace oplanes {

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

template <typename V>
void put(std::ostream& out, V v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <typename V>
V get(std::istream& in, const std::filesystem::path& path) {
  V v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(V));
  if (!in) throw ParseError("truncated checkpoint " + path.string());
  return v;
}

void put_record(std::ostream& out, const std::string& name, const nn::Tensor<float>& t) {
  put<std::uint16_t>(out, std::uint16_t(name.size()));
  out.write(name.data(), std::streamsize(name.size()));
  put<std::uint8_t>(out, std::uint8_t(t.ndim()));
  for (int d : t.shape()) put<std::int32_t>(out, d);
  out.write(reinterpret_cast<const char*>(t.data()), std::streamsize(t.size() * sizeof(float)));
}

std::pair<std::string, nn::Tensor<float>> get_record(std::istream& in, const std::filesystem::path& path) {
  const auto len = get<std::uint16_t>(in, path);
  std::string name(len, '\0');
  in.read(name.data(), len);
  const auto ndim = get<std::uint8_t>(in, path);
  std::vector<int> shape(ndim);
  for (int& d : shape) {
    d = get<std::int32_t>(in, path);
    if (d < 0) throw ParseError("negative dimension in checkpoint record " + name);
  }
  nn::Tensor<float> t(shape);
  in.read(reinterpret_cast<char*>(t.data()), std::streamsize(t.size() * sizeof(float)));
  if (!in) throw ParseError("truncated checkpoint record " + name + " in " + path.string());
  return {std::move(name), std::move(t)};
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, OPlanesModel<float>& model, const TrainingState& state) {
  std::map<std::string, std::string> kv = state.extra;
  for (auto& [k, v] : model.config().to_map()) kv["model." + k] = v;
  kv["iteration"] = std::to_string(state.iteration);
  kv["epoch"] = std::to_string(state.epoch);
  kv["adam_step"] = std::to_string(state.adam.step);
  std::string text;
  for (auto& [k, v] : kv) {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos)
      throw ConfigError("checkpoint metadata key/value not representable: " + k);
    text += k + "=" + v + "\n";
  }

  const auto params = model.parameters();
  const bool has_moments = !state.adam.first_moment.empty();
  if (has_moments && (state.adam.first_moment.size() != params.size() ||
                      state.adam.second_moment.size() != params.size()))
    throw ShapeError("optimizer state does not match the model's parameters");

  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write("OPCK", 4);
    put<std::uint32_t>(out, kCheckpointVersion);
    put<std::uint32_t>(out, std::uint32_t(text.size()));
    out.write(text.data(), std::streamsize(text.size()));
    put<std::uint32_t>(out, std::uint32_t(params.size() * (has_moments ? 3 : 1)));
    for (auto* p : params) put_record(out, p->name, p->value);
    if (has_moments) {
      for (std::size_t i = 0; i < params.size(); ++i) put_record(out, "adam.m/" + params[i]->name, state.adam.first_moment[i]);
      for (std::size_t i = 0; i < params.size(); ++i)
        put_record(out, "adam.v/" + params[i]->name, state.adam.second_moment[i]);
    }
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "OPCK", 4) != 0) throw ParseError("not a checkpoint file: " + path.string());
  const auto version = get<std::uint32_t>(in, path);
  if (version != kCheckpointVersion) throw ParseError("unsupported checkpoint version " + std::to_string(version));
  const auto text_len = get<std::uint32_t>(in, path);
  std::string text(text_len, '\0');
  in.read(text.data(), text_len);
  if (!in) throw ParseError("truncated checkpoint header in " + path.string());

  std::map<std::string, std::string> kv, model_kv;
  std::istringstream lines(text);
  std::string line;
  int line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("malformed checkpoint header line", line_no);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  Checkpoint ck;
  for (auto& [k, v] : kv) {
    if (k.rfind("model.", 0) == 0)
      model_kv[k.substr(6)] = v;
    else if (k != "iteration" && k != "epoch" && k != "adam_step")
      ck.state.extra[k] = v;
  }
  try {
    ck.state.iteration = std::stol(kv.at("iteration"));
    ck.state.epoch = std::stoi(kv.at("epoch"));
    ck.state.adam.step = std::stol(kv.at("adam_step"));
  } catch (const std::exception&) {
    throw ParseError("checkpoint header lacks iteration/epoch/adam_step: " + path.string());
  }
  ck.model = std::make_unique<OPlanesModel<float>>(ModelConfig::from_map(model_kv));

  const auto count = get<std::uint32_t>(in, path);
  std::map<std::string, nn::Tensor<float>> records;
  for (std::uint32_t i = 0; i < count; ++i) {
    auto [name, t] = get_record(in, path);
    records[name] = std::move(t);
  }
  const auto params = ck.model->parameters();
  const bool has_moments = count == params.size() * 3;
  if (!has_moments && count != params.size())
    throw ParseError("checkpoint holds " + std::to_string(count) + " records for " + std::to_string(params.size()) +
                     " parameters");
  auto take = [&](const std::string& name, const nn::Tensor<float>& like) {
    auto it = records.find(name);
    if (it == records.end()) throw ParseError("checkpoint is missing " + name);
    if (!it->second.same_shape(like))
      throw ShapeError("checkpoint record " + name + " has shape " + it->second.shape_string() + ", expected " +
                       like.shape_string());
    return it->second;
  };
  for (auto* p : params) {
    p->value = take(p->name, p->value);
    p->zero_grad();
  }
  if (has_moments) {
    for (auto* p : params) ck.state.adam.first_moment.push_back(take("adam.m/" + p->name, p->value));
    for (auto* p : params) ck.state.adam.second_moment.push_back(take("adam.v/" + p->name, p->value));
  }
  return ck;
}

}  // namespace oplanes
