#include "wmlff/cli/container.hpp"

#include <bit>
#include <cctype>
#include <cstring>
#include <fstream>
#include <iterator>

#include "json.hpp"
#include "wmlff/errors.hpp"

namespace wmlff {

namespace {

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

class Reader {
 public:
  Reader(std::string bytes, std::string origin) : bytes_(std::move(bytes)), origin_(std::move(origin)) {}

  template <typename T>
  T get() {
    T v;
    std::memcpy(&v, take(sizeof(T)), sizeof(T));
    return v;
  }
  std::string bytes(std::size_t n) { return {take(n), n}; }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const char* take(std::size_t n) {
    if (n > bytes_.size() - pos_) throw DataError(origin_ + ": truncated model container");
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::string bytes_;
  std::string origin_;
  std::size_t pos_ = 0;
};

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

void save_container(const std::filesystem::path& path, const ModelArtifact& artifact) {
  nlohmann::ordered_json meta;
  meta["format"] = "wmlff-model";
  meta["pipeline"] = nlohmann::ordered_json::parse(artifact.pipeline.to_json());
  meta["model_config"] = nlohmann::ordered_json::parse(artifact.model.config().to_json());
  meta["provenance"] = {{"seed", artifact.provenance.seed},
                        {"config_hash", artifact.provenance.config_hash},
                        {"train_config", artifact.provenance.train_config.empty()
                                             ? nlohmann::ordered_json::object()
                                             : nlohmann::ordered_json::parse(artifact.provenance.train_config)}};
  const std::string text = meta.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out.write(kContainerMagic, sizeof(kContainerMagic));
  put<std::uint32_t>(out, kContainerVersion);
  put<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  const auto& params = artifact.model.parameters();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put<std::uint32_t>(out, 2);
    put<std::uint64_t>(out, p.value.rows());
    put<std::uint64_t>(out, p.value.cols());
    for (const double v : p.value.values()) put<float>(out, static_cast<float>(v));
  }
  if (!out) throw DataError("failed writing '" + path.string() + "'");
}

ModelArtifact load_container(const std::filesystem::path& path) {
  Reader in(slurp(path), path.string());
  if (in.bytes(sizeof(kContainerMagic)) != std::string(kContainerMagic, sizeof(kContainerMagic))) {
    throw DataError(path.string() + ": not a WMLFF model container");
  }
  const auto version = in.get<std::uint32_t>();
  if (version != kContainerVersion) {
    throw DataError(path.string() + ": unsupported container version " + std::to_string(version));
  }
  const auto meta_len = in.get<std::uint64_t>();
  nlohmann::ordered_json meta;
  try {
    meta = nlohmann::ordered_json::parse(in.bytes(meta_len));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": bad metadata: " + e.what());
  }
  ParameterSet params;
  const auto count = in.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = in.bytes(in.get<std::uint32_t>());
    if (const auto ndim = in.get<std::uint32_t>(); ndim != 2) {
      throw DataError(path.string() + ": tensor '" + name + "' has " + std::to_string(ndim) + " dims");
    }
    const auto rows = in.get<std::uint64_t>();
    const auto cols = in.get<std::uint64_t>();
    Matrix m(rows, cols);
    for (auto& v : m.values()) v = static_cast<double>(in.get<float>());
    params.add(std::move(name), std::move(m));
  }
  if (!in.done()) throw DataError(path.string() + ": trailing bytes after tensors");

  try {
    ModelArtifact a{FeaturePipeline::from_json(meta.at("pipeline").dump()),
                    WMLFFModel::from_parameters(ModelConfig::from_json(meta.at("model_config").dump()),
                                                std::move(params)),
                    {}};
    const auto& prov = meta.at("provenance");
    a.provenance.seed = prov.at("seed").get<std::uint64_t>();
    a.provenance.config_hash = prov.at("config_hash").get<std::string>();
    a.provenance.train_config = prov.at("train_config").dump();
    return a;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": bad metadata: " + e.what());
  }
}

void save_ensemble_manifest(const std::filesystem::path& path, const std::vector<std::string>& members,
                            const Provenance& provenance) {
  nlohmann::ordered_json j;
  j["format"] = "wmlff-ensemble";
  j["members"] = members;
  j["seed"] = provenance.seed;
  j["config_hash"] = provenance.config_hash;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << j.dump(2) << "\n";
}

bool is_ensemble_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  char c = 0;
  while (in.get(c) && std::isspace(static_cast<unsigned char>(c))) {
  }
  return in && c == '{';
}

std::vector<std::filesystem::path> read_ensemble_manifest(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(slurp(path));
    if (j.at("format") != "wmlff-ensemble") throw DataError(path.string() + ": not an ensemble manifest");
    std::vector<std::filesystem::path> out;
    for (const auto& m : j.at("members")) out.push_back(path.parent_path() / m.get<std::string>());
    if (out.empty()) throw DataError(path.string() + ": ensemble has no members");
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": bad manifest: " + e.what());
  }
}

LoadedModels load_models(const std::filesystem::path& path) {
  if (!is_ensemble_manifest(path)) {
    auto a = load_container(path);
    LoadedModels out{std::move(a.pipeline), {}};
    out.members.push_back(std::move(a.model));
    return out;
  }
  LoadedModels out;
  bool first = true;
  for (const auto& member : read_ensemble_manifest(path)) {
    auto a = load_container(member);
    if (first) out.pipeline = std::move(a.pipeline);
    first = false;
    out.members.push_back(std::move(a.model));
  }
  return out;
}

}  // namespace wmlff
