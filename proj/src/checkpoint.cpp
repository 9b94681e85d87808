#include "vfield/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include "vfield/errors.hpp"
#include "vfield/hash.hpp"

namespace vfield::agent {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes little-endian");

namespace {

constexpr char kMagic[8] = {'V', 'F', 'C', 'K', 'P', 'T', '\0', '\0'};
constexpr std::uint8_t kFloat64 = 1;

class Writer {
 public:
  template <typename T>
  void pod(T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out_.append(buf, sizeof(T));
  }
  void str(const std::string& s) {
    pod<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    out_.append(s);
  }
  void raw(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  std::string& bytes() { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  Reader(const std::string& bytes, std::size_t end) : bytes_(bytes), end_(end) {}

  template <typename T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint32_t>();
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void raw(void* dst, std::size_t n) {
    need(n);
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }
  bool done() const { return pos_ == end_; }

 private:
  void need(std::size_t n) const {
    if (n > end_ - pos_) throw CorruptFile("checkpoint truncated or malformed");
  }

  const std::string& bytes_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const CheckpointContents& contents) {
  Writer w;
  w.raw(kMagic, sizeof kMagic);
  w.pod<std::uint32_t>(contents.version);
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(contents.metadata.size()));
  for (const auto& [k, v] : contents.metadata) {
    w.str(k);
    w.str(v);
  }
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(contents.tensors.size()));
  for (const auto& t : contents.tensors) {
    w.str(t.name);
    w.pod<std::uint8_t>(kFloat64);
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(t.shape.size()));
    std::uint64_t count = 1;
    for (auto dim : t.shape) {
      w.pod<std::uint64_t>(dim);
      count *= dim;
    }
    if (count != t.data.size()) throw InvalidInput("tensor " + t.name + " data does not match shape");
    w.raw(t.data.data(), t.data.size() * sizeof(double));
  }
  const std::uint64_t checksum = fnv1a64(w.bytes());
  w.pod<std::uint64_t>(checksum);
  return std::move(w.bytes());
}

CheckpointContents decode_checkpoint(const std::string& bytes) {
  constexpr std::size_t kTrailer = sizeof(std::uint64_t);
  if (bytes.size() < sizeof kMagic + sizeof(std::uint32_t) + kTrailer ||
      std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw CorruptFile("not a checkpoint file (bad magic or too short)");
  }
  const std::size_t body = bytes.size() - kTrailer;
  std::uint64_t stored = 0;
  std::memcpy(&stored, bytes.data() + body, kTrailer);
  Reader r(bytes, body);
  char magic[sizeof kMagic];
  r.raw(magic, sizeof magic);
  CheckpointContents out;
  out.version = r.pod<std::uint32_t>();
  if (out.version != kCheckpointVersion) {
    throw VersionMismatch("checkpoint version " + std::to_string(out.version) + ", expected " +
                          std::to_string(kCheckpointVersion));
  }
  if (fnv1a64(std::string_view(bytes).substr(0, body)) != stored) {
    throw CorruptFile("checkpoint checksum mismatch");
  }
  const auto n_meta = r.pod<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    std::string k = r.str();
    out.metadata[std::move(k)] = r.str();
  }
  const auto n_tensors = r.pod<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    CheckpointTensor t;
    t.name = r.str();
    if (r.pod<std::uint8_t>() != kFloat64) throw CorruptFile("unsupported dtype in " + t.name);
    const auto ndim = r.pod<std::uint32_t>();
    if (ndim > 8) throw CorruptFile("implausible rank for " + t.name);
    std::uint64_t count = 1;
    for (std::uint32_t k = 0; k < ndim; ++k) {
      t.shape.push_back(r.pod<std::uint64_t>());
      count *= t.shape.back();
    }
    if (count > bytes.size() / sizeof(double)) throw CorruptFile("tensor " + t.name + " too large");
    t.data.resize(count);
    r.raw(t.data.data(), count * sizeof(double));
    out.tensors.push_back(std::move(t));
  }
  if (!r.done()) throw CorruptFile("trailing bytes after tensor table");
  return out;
}

std::string serialize_bundle(AgentBundle& bundle, const std::string& config_hash) {
  CheckpointContents c;
  const auto& cfg = bundle.config;
  c.metadata["config_hash"] = config_hash;
  c.metadata["obs_dim"] = std::to_string(bundle.shape.obs_dim);
  c.metadata["action_dim"] = std::to_string(bundle.shape.action_dim);
  {
    std::ostringstream limit;
    limit.precision(17);
    limit << bundle.shape.action_limit;
    c.metadata["action_limit"] = limit.str();
  }
  c.metadata["policy"] = to_string(cfg.policy);
  c.metadata["hidden_width"] = std::to_string(cfg.hidden_width);
  c.metadata["hidden_layers"] = std::to_string(cfg.hidden_layers);
  c.metadata["flow_blocks"] = std::to_string(cfg.flow_blocks);
  for (auto& [name, value] : bundle.named_counters()) c.metadata["counter/" + name] = std::to_string(*value);
  for (auto& [name, m] : bundle.named_tensors()) {
    CheckpointTensor t;
    t.name = name;
    t.shape = {static_cast<std::uint64_t>(m->rows()), static_cast<std::uint64_t>(m->cols())};
    t.data.assign(m->data(), m->data() + m->size());
    c.tensors.push_back(std::move(t));
  }
  return encode_checkpoint(c);
}

void save_checkpoint(AgentBundle& bundle, const std::filesystem::path& path,
                     const std::string& config_hash) {
  const std::string bytes = serialize_bundle(bundle, config_hash);
  // write-then-rename so a crash never leaves a half-written checkpoint
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void restore_bundle(AgentBundle& bundle, const CheckpointContents& contents) {
  auto tensors = bundle.named_tensors();
  std::map<std::string, const CheckpointTensor*> by_name;
  for (const auto& t : contents.tensors) by_name[t.name] = &t;
  if (by_name.size() != tensors.size()) {
    throw ShapeMismatch("checkpoint has " + std::to_string(by_name.size()) + " tensors, learner has " +
                        std::to_string(tensors.size()));
  }
  for (const auto& [name, m] : tensors) {
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw ShapeMismatch("checkpoint lacks tensor " + name);
    const auto& shape = it->second->shape;
    if (shape.size() != 2 || shape[0] != static_cast<std::uint64_t>(m->rows()) ||
        shape[1] != static_cast<std::uint64_t>(m->cols())) {
      throw ShapeMismatch("shape mismatch for tensor " + name);
    }
  }
  std::vector<std::pair<std::int64_t*, std::int64_t>> counters;
  for (const auto& [name, ptr] : bundle.named_counters()) {
    const auto it = contents.metadata.find("counter/" + name);
    if (it == contents.metadata.end()) throw CorruptFile("checkpoint lacks counter " + name);
    try {
      counters.emplace_back(ptr, std::stoll(it->second));
    } catch (const std::exception&) {
      throw CorruptFile("bad counter value for " + name);
    }
  }
  for (auto& [name, m] : tensors) {
    const auto& data = by_name[name]->data;
    std::copy(data.begin(), data.end(), m->data());
  }
  for (auto& [ptr, value] : counters) *ptr = value;
}

CheckpointContents read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

std::unique_ptr<AgentBundle> load_checkpoint(const std::filesystem::path& path, int expected_obs_dim,
                                             const TrainConfig& base) {
  const CheckpointContents contents = read_checkpoint(path);
  auto meta = [&contents](const std::string& key) -> const std::string& {
    const auto it = contents.metadata.find(key);
    if (it == contents.metadata.end()) throw CorruptFile("checkpoint lacks metadata " + key);
    return it->second;
  };
  BundleShape shape;
  TrainConfig cfg = base;
  try {
    shape.obs_dim = std::stoi(meta("obs_dim"));
    shape.action_dim = std::stoi(meta("action_dim"));
    shape.action_limit = std::stod(meta("action_limit"));
    cfg.policy = parse_policy_kind(meta("policy"));
    cfg.hidden_width = std::stoi(meta("hidden_width"));
    cfg.hidden_layers = std::stoi(meta("hidden_layers"));
    cfg.flow_blocks = std::stoi(meta("flow_blocks"));
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CorruptFile(std::string("bad checkpoint metadata: ") + e.what());
  }
  if (expected_obs_dim > 0 && expected_obs_dim != shape.obs_dim) {
    throw ShapeMismatch("checkpoint observation width " + std::to_string(shape.obs_dim) +
                        " does not match expected " + std::to_string(expected_obs_dim));
  }
  Rng scratch(0);
  auto bundle = std::make_unique<AgentBundle>(shape, cfg, scratch);
  restore_bundle(*bundle, contents);
  return bundle;
}

}  // namespace vfield::agent
