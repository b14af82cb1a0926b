#include "transcoder/model/checkpoint.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "transcoder/util/base64.hpp"

namespace transcoder::model {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw DataError("failed writing " + path.string());
}

std::string Checkpoint::fingerprint() const {
  return kind == kKindPrefix ? config.prefix_fingerprint() : config.backbone_fingerprint();
}

std::string Checkpoint::serialize() const {
  nlohmann::ordered_json j;
  j["format_version"] = format_version;
  j["kind"] = kind;
  j["config"] = nlohmann::ordered_json::parse(config.to_json().dump());
  j["fingerprint"] = fingerprint();
  j["seed"] = seed;
  j["provenance"] = provenance;
  auto tensor_list = nlohmann::ordered_json::array();
  for (const auto& t : tensors) {
    nlohmann::ordered_json entry;
    entry["name"] = t.name;
    entry["shape"] = t.shape;
    entry["dtype"] = "f32";
    entry["data"] = util::encode_f32_le(t.data);
    tensor_list.push_back(std::move(entry));
  }
  j["tensors"] = std::move(tensor_list);
  if (!metadata.is_null()) j["metadata"] = nlohmann::ordered_json::parse(metadata.dump());
  return j.dump(1) + "\n";
}

Checkpoint Checkpoint::parse(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  Checkpoint c;
  try {
    c.format_version = j.at("format_version").get<int>();
    if (c.format_version != kCheckpointFormatVersion) {
      throw CompatibilityError("unsupported checkpoint format_version " + std::to_string(c.format_version));
    }
    c.kind = j.at("kind").get<std::string>();
    if (c.kind != kKindBackbone && c.kind != kKindPrefix) throw DataError("unknown checkpoint kind '" + c.kind + "'");
    c.config = ModelConfig::from_json(j.at("config"));
    c.seed = j.at("seed").get<std::uint64_t>();
    c.provenance = j.at("provenance").get<std::string>();
    for (const auto& entry : j.at("tensors")) {
      TensorRecord t;
      t.name = entry.at("name").get<std::string>();
      t.shape = entry.at("shape").get<ad::Shape>();
      if (entry.at("dtype").get<std::string>() != "f32") throw DataError("tensor " + t.name + ": dtype must be f32");
      t.data = util::decode_f32_le(entry.at("data").get<std::string>());
      if (t.data.size() != ad::numel(t.shape)) throw DataError("tensor " + t.name + ": data does not match shape");
      c.tensors.push_back(std::move(t));
    }
    if (j.contains("metadata")) c.metadata = j.at("metadata");
    if (j.at("fingerprint").get<std::string>() != c.fingerprint()) {
      throw DataError("checkpoint fingerprint does not match its config");
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed checkpoint: ") + e.what());
  }
  return c;
}

void Checkpoint::save(const std::filesystem::path& path) const { write_file(path, serialize()); }

Checkpoint Checkpoint::load(const std::filesystem::path& path) { return parse(read_file(path)); }

namespace {

template <typename T>
TensorRecord record_of(const std::string& name, const ad::DiffTensor<T>& t) {
  TensorRecord r{name, t.shape(), {}};
  r.data.reserve(t.numel());
  for (T v : t.data()) r.data.push_back(static_cast<float>(v));
  return r;
}

template <typename T>
void copy_into(const TensorRecord& record, const ad::DiffTensor<T>& dst) {
  if (record.shape != dst.shape()) {
    throw CompatibilityError("tensor " + record.name + " has shape " + ad::to_string(record.shape) + ", expected " +
                             ad::to_string(dst.shape()));
  }
  auto out = dst.mutable_data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<T>(record.data[i]);
}

std::map<std::string, const TensorRecord*> index_by_name(const Checkpoint& c) {
  std::map<std::string, const TensorRecord*> out;
  for (const auto& t : c.tensors) {
    if (!out.emplace(t.name, &t).second) throw DataError("duplicate tensor " + t.name);
  }
  return out;
}

}  // namespace

template <typename T>
Checkpoint snapshot(const Backbone<T>& backbone) {
  Checkpoint c;
  c.kind = kKindBackbone;
  c.config = backbone.config();
  c.seed = backbone.seed();
  c.provenance = backbone.provenance();
  for (const auto& p : backbone.parameters()) c.tensors.push_back(record_of(p.name, p.tensor));
  return c;
}

template <typename T>
Backbone<T> load_backbone(const Checkpoint& checkpoint, const ModelConfig* expected) {
  if (checkpoint.kind != kKindBackbone) throw CompatibilityError("checkpoint holds a " + checkpoint.kind + ", not a backbone");
  if (expected != nullptr && expected->backbone_fingerprint() != checkpoint.config.backbone_fingerprint()) {
    throw CompatibilityError("backbone checkpoint fingerprint " + checkpoint.config.backbone_fingerprint() +
                             " does not match model fingerprint " + expected->backbone_fingerprint());
  }
  auto backbone = Backbone<T>::allocate(expected != nullptr ? *expected : checkpoint.config);
  const auto records = index_by_name(checkpoint);
  if (records.size() != backbone.parameters().size()) throw CompatibilityError("backbone checkpoint has wrong tensor count");
  for (const auto& p : backbone.parameters()) {
    const auto it = records.find(p.name);
    if (it == records.end()) throw CompatibilityError("backbone checkpoint lacks tensor " + p.name);
    copy_into(*it->second, p.tensor);
  }
  backbone.set_seed(checkpoint.seed);
  backbone.set_provenance(checkpoint.provenance);
  return backbone;
}

template <typename T>
Checkpoint snapshot(const PrefixBank<T>& prefix) {
  Checkpoint c;
  c.kind = kKindPrefix;
  c.config = prefix.config();
  c.seed = prefix.seed();
  c.provenance = prefix.provenance();
  for (const auto& p : prefix.parameters()) c.tensors.push_back(record_of(p.name, p.tensor));
  return c;
}

template <typename T>
PrefixBank<T> load_prefix(const Checkpoint& checkpoint, const ModelConfig* expected) {
  if (checkpoint.kind != kKindPrefix) throw CompatibilityError("checkpoint holds a " + checkpoint.kind + ", not a prefix");
  const auto& saved = checkpoint.config;
  if (expected != nullptr) {
    if (expected->prefix_length != saved.prefix_length) {
      throw CompatibilityError("prefix length mismatch: checkpoint has L=" + std::to_string(saved.prefix_length) +
                               ", model expects L=" + std::to_string(expected->prefix_length));
    }
    if (expected->backbone_fingerprint() != saved.backbone_fingerprint()) {
      throw CompatibilityError("prefix was trained for backbone " + saved.backbone_fingerprint() +
                               ", model is " + expected->backbone_fingerprint());
    }
  }
  const ModelConfig& config = expected != nullptr ? *expected : saved;
  const auto records = index_by_name(checkpoint);
  const bool encoded = records.count("prefix.encoder.embedding") > 0;
  auto bank = PrefixBank<T>::init(config, checkpoint.seed, encoded);
  const auto params = bank.parameters();
  if (params.size() != records.size()) throw CompatibilityError("prefix checkpoint has wrong tensor count");
  for (const auto& p : params) {
    const auto it = records.find(p.name);
    if (it == records.end()) throw CompatibilityError("prefix checkpoint lacks tensor " + p.name);
    copy_into(*it->second, p.tensor);
  }
  bank.set_provenance(checkpoint.provenance);
  return bank;
}

template Checkpoint snapshot(const Backbone<float>&);
template Checkpoint snapshot(const Backbone<double>&);
template Backbone<float> load_backbone(const Checkpoint&, const ModelConfig*);
template Backbone<double> load_backbone(const Checkpoint&, const ModelConfig*);
template Checkpoint snapshot(const PrefixBank<float>&);
template Checkpoint snapshot(const PrefixBank<double>&);
template PrefixBank<float> load_prefix(const Checkpoint&, const ModelConfig*);
template PrefixBank<double> load_prefix(const Checkpoint&, const ModelConfig*);

}  // namespace transcoder::model
