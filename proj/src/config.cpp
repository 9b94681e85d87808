#include "vfield/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "vfield/errors.hpp"
#include "vfield/hash.hpp"

namespace vfield::config {

namespace {

std::string join(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

const json& member(const json& obj, const std::string& prefix, const char* key) {
  if (!obj.is_object()) throw ConfigError(prefix, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw ConfigError(join(prefix, key), "missing");
  return *it;
}

double number(const json& obj, const std::string& prefix, const char* key) {
  const json& v = member(obj, prefix, key);
  if (!v.is_number()) throw ConfigError(join(prefix, key), "expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw ConfigError(join(prefix, key), "must be finite");
  return x;
}

std::int64_t integer(const json& obj, const std::string& prefix, const char* key) {
  const json& v = member(obj, prefix, key);
  if (v.is_number_integer()) return v.get<std::int64_t>();
  if (v.is_number_float()) {
    const double x = v.get<double>();
    if (std::floor(x) == x && std::abs(x) < 9e15) return static_cast<std::int64_t>(x);
  }
  throw ConfigError(join(prefix, key), "expected an integer");
}

std::string text(const json& obj, const std::string& prefix, const char* key) {
  const json& v = member(obj, prefix, key);
  if (!v.is_string()) throw ConfigError(join(prefix, key), "expected a string");
  return v.get<std::string>();
}

oracle::Vec vector(const json& v, const std::string& path) {
  if (!v.is_array()) throw ConfigError(path, "expected an array of numbers");
  oracle::Vec out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number()) throw ConfigError(path, "expected an array of numbers");
    out[static_cast<Eigen::Index>(i)] = v[i].get<double>();
  }
  return out;
}

json vector_json(const oracle::Vec& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

template <typename Parse>
auto parse_enum(const json& obj, const std::string& prefix, const char* key, Parse parse) {
  const std::string value = text(obj, prefix, key);
  try {
    return parse(value);
  } catch (const std::exception& e) {
    throw ConfigError(join(prefix, key), e.what());
  }
}

void reject_unknown(const json& obj, const std::string& prefix,
                    std::initializer_list<const char*> keys) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* k : keys) known = known || it.key() == k;
    if (!known) throw ConfigError(join(prefix, it.key()), "unknown field");
  }
}

}  // namespace

json default_document() {
  RunConfig cfg;
  cfg.field.bumps.push_back({1.0, oracle::Vec::Constant(2, 0.5), 0.15});
  cfg.seeds = {0, 1, 2, 3, 4};
  return to_json(cfg);
}

json to_json(const RunConfig& cfg) {
  json doc;
  const env::EnvConfig& e = cfg.env;
  doc["env"] = {
      {"goal_center", vector_json(e.goal_center)},
      {"goal_radius", e.goal_radius},
      {"noise_scale", e.noise_scale},
      {"horizon", e.horizon},
      {"start_box", {{"lo", vector_json(e.start_box.lo)}, {"hi", vector_json(e.start_box.hi)}}},
      {"step_penalty", e.step_penalty},
      {"distance_reward_scale", e.distance_reward_scale},
      {"goal_bonus", e.goal_bonus},
      {"action_limit", e.action_limit},
      {"time_embedding", env::to_string(e.time_embedding)},
  };

  json bumps = json::array();
  for (const auto& b : cfg.field.bumps) {
    bumps.push_back({{"amplitude", b.amplitude}, {"center", vector_json(b.center)},
                     {"sigma", b.sigma}});
  }
  doc["field"] = {{"dimension", cfg.field.dimension}, {"bumps", bumps}};

  const ShapingSpec& s = cfg.shaping;
  json w_matrix = nullptr;
  if (s.w_matrix) {
    w_matrix = json::array();
    for (Eigen::Index r = 0; r < s.w_matrix->rows(); ++r) {
      w_matrix.push_back(vector_json(s.w_matrix->row(r).transpose()));
    }
  }
  doc["shaping"] = {
      {"u_mid", s.u_mid},
      {"w", {{"orientation", s.w_orientation}, {"upper", s.w_upper}, {"matrix", w_matrix}}},
      {"c_grad", s.c_grad},
      {"c_rot", s.c_rot},
      {"lambda_unsafe", s.lambda_unsafe},
      {"eps_unsafe", s.eps_unsafe},
  };

  const agent::TrainConfig& t = cfg.train;
  doc["train"] = {
      {"actor_lr", t.actor_lr},
      {"critic_lr", t.critic_lr},
      {"alpha_lr", t.alpha_lr},
      {"gamma", t.gamma},
      {"tau", t.tau},
      {"max_grad_norm", t.max_grad_norm},
      {"batch_size", t.batch_size},
      {"buffer_capacity", t.buffer_capacity},
      {"initial_alpha", t.initial_alpha},
      {"target_entropy", t.target_entropy},
      {"total_env_steps", t.total_env_steps},
      {"updates_per_step", t.updates_per_step},
      {"warmup_steps", t.warmup_steps},
      {"metrics_interval", t.metrics_interval},
      {"eval_episodes", t.eval_episodes},
      {"policy", agent::to_string(t.policy)},
      {"hidden_width", t.hidden_width},
      {"hidden_layers", t.hidden_layers},
      {"flow_blocks", t.flow_blocks},
  };

  doc["reward_mode"] = env::to_string(cfg.reward_mode);

  const DiagnosticsSpec& d = cfg.diagnostics;
  doc["diagnostics"] = {
      {"delta_band", d.delta_band ? json(*d.delta_band) : json(nullptr)},
      {"grid_resolution", d.grid_resolution},
      {"coverage_bins", d.coverage_bins},
      {"trajectory_episodes", d.trajectory_episodes},
      {"interval_eval_episodes", d.interval_eval_episodes},
  };
  doc["seeds"] = cfg.seeds;
  doc["output_dir"] = cfg.output_dir;
  return doc;
}

RunConfig from_json(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config", "top level must be an object");
  reject_unknown(doc, "",
                 {"env", "field", "shaping", "train", "reward_mode", "diagnostics", "seeds",
                  "output_dir"});
  RunConfig cfg;

  {
    const std::string p = "env";
    const json& j = member(doc, "", "env");
    reject_unknown(j, p,
                   {"goal_center", "goal_radius", "noise_scale", "horizon", "start_box",
                    "step_penalty", "distance_reward_scale", "goal_bonus", "action_limit",
                    "time_embedding"});
    env::EnvConfig& e = cfg.env;
    e.goal_center = vector(member(j, p, "goal_center"), "env.goal_center");
    e.goal_radius = number(j, p, "goal_radius");
    e.noise_scale = number(j, p, "noise_scale");
    e.horizon = static_cast<int>(integer(j, p, "horizon"));
    const json& box = member(j, p, "start_box");
    reject_unknown(box, "env.start_box", {"lo", "hi"});
    e.start_box.lo = vector(member(box, "env.start_box", "lo"), "env.start_box.lo");
    e.start_box.hi = vector(member(box, "env.start_box", "hi"), "env.start_box.hi");
    e.step_penalty = number(j, p, "step_penalty");
    e.distance_reward_scale = number(j, p, "distance_reward_scale");
    e.goal_bonus = number(j, p, "goal_bonus");
    e.action_limit = number(j, p, "action_limit");
    e.time_embedding = parse_enum(j, p, "time_embedding", env::parse_time_embedding);
  }

  {
    const std::string p = "field";
    const json& j = member(doc, "", "field");
    reject_unknown(j, p, {"dimension", "bumps"});
    cfg.field.dimension = static_cast<int>(integer(j, p, "dimension"));
    const json& bumps = member(j, p, "bumps");
    if (!bumps.is_array()) throw ConfigError("field.bumps", "expected an array");
    for (std::size_t i = 0; i < bumps.size(); ++i) {
      const std::string bp = "field.bumps[" + std::to_string(i) + "]";
      reject_unknown(bumps[i], bp, {"amplitude", "center", "sigma"});
      oracle::GaussianBump b;
      b.amplitude = number(bumps[i], bp, "amplitude");
      b.center = vector(member(bumps[i], bp, "center"), bp + ".center");
      b.sigma = number(bumps[i], bp, "sigma");
      cfg.field.bumps.push_back(std::move(b));
    }
  }

  {
    const std::string p = "shaping";
    const json& j = member(doc, "", "shaping");
    reject_unknown(j, p, {"u_mid", "w", "c_grad", "c_rot", "lambda_unsafe", "eps_unsafe"});
    ShapingSpec& s = cfg.shaping;
    s.u_mid = number(j, p, "u_mid");
    const json& w = member(j, p, "w");
    reject_unknown(w, "shaping.w", {"orientation", "upper", "matrix"});
    s.w_orientation = static_cast<int>(integer(w, "shaping.w", "orientation"));
    const oracle::Vec upper = vector(member(w, "shaping.w", "upper"), "shaping.w.upper");
    s.w_upper.assign(upper.data(), upper.data() + upper.size());
    const json& m = member(w, "shaping.w", "matrix");
    if (!m.is_null()) {
      if (!m.is_array() || m.empty()) throw ConfigError("shaping.w.matrix", "expected rows");
      oracle::Mat mat(static_cast<Eigen::Index>(m.size()), static_cast<Eigen::Index>(m.size()));
      for (std::size_t r = 0; r < m.size(); ++r) {
        const oracle::Vec row = vector(m[r], "shaping.w.matrix");
        if (row.size() != mat.cols()) throw ConfigError("shaping.w.matrix", "must be square");
        mat.row(static_cast<Eigen::Index>(r)) = row.transpose();
      }
      s.w_matrix = mat;
    }
    s.c_grad = number(j, p, "c_grad");
    s.c_rot = number(j, p, "c_rot");
    s.lambda_unsafe = number(j, p, "lambda_unsafe");
    s.eps_unsafe = number(j, p, "eps_unsafe");
  }

  {
    const std::string p = "train";
    const json& j = member(doc, "", "train");
    reject_unknown(j, p,
                   {"actor_lr", "critic_lr", "alpha_lr", "gamma", "tau", "max_grad_norm",
                    "batch_size", "buffer_capacity", "initial_alpha", "target_entropy",
                    "total_env_steps", "updates_per_step", "warmup_steps", "metrics_interval",
                    "eval_episodes", "policy", "hidden_width", "hidden_layers", "flow_blocks"});
    agent::TrainConfig& t = cfg.train;
    t.actor_lr = number(j, p, "actor_lr");
    t.critic_lr = number(j, p, "critic_lr");
    t.alpha_lr = number(j, p, "alpha_lr");
    t.gamma = number(j, p, "gamma");
    t.tau = number(j, p, "tau");
    t.max_grad_norm = number(j, p, "max_grad_norm");
    t.batch_size = static_cast<int>(integer(j, p, "batch_size"));
    t.buffer_capacity = integer(j, p, "buffer_capacity");
    t.initial_alpha = number(j, p, "initial_alpha");
    t.target_entropy = number(j, p, "target_entropy");
    t.total_env_steps = integer(j, p, "total_env_steps");
    t.updates_per_step = static_cast<int>(integer(j, p, "updates_per_step"));
    t.warmup_steps = integer(j, p, "warmup_steps");
    t.metrics_interval = integer(j, p, "metrics_interval");
    t.eval_episodes = static_cast<int>(integer(j, p, "eval_episodes"));
    t.policy = parse_enum(j, p, "policy", agent::parse_policy_kind);
    t.hidden_width = static_cast<int>(integer(j, p, "hidden_width"));
    t.hidden_layers = static_cast<int>(integer(j, p, "hidden_layers"));
    t.flow_blocks = static_cast<int>(integer(j, p, "flow_blocks"));
  }

  cfg.reward_mode = parse_enum(doc, "", "reward_mode", env::parse_reward_mode);

  {
    const std::string p = "diagnostics";
    const json& j = member(doc, "", "diagnostics");
    reject_unknown(j, p,
                   {"delta_band", "grid_resolution", "coverage_bins", "trajectory_episodes",
                    "interval_eval_episodes"});
    DiagnosticsSpec& d = cfg.diagnostics;
    if (!member(j, p, "delta_band").is_null()) d.delta_band = number(j, p, "delta_band");
    d.grid_resolution = static_cast<int>(integer(j, p, "grid_resolution"));
    d.coverage_bins = static_cast<int>(integer(j, p, "coverage_bins"));
    d.trajectory_episodes = static_cast<int>(integer(j, p, "trajectory_episodes"));
    d.interval_eval_episodes = static_cast<int>(integer(j, p, "interval_eval_episodes"));
  }

  const json& seeds = member(doc, "", "seeds");
  if (!seeds.is_array()) throw ConfigError("seeds", "expected an array of integers");
  for (const json& s : seeds) {
    if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<std::int64_t>() >= 0)) {
      throw ConfigError("seeds", "expected nonnegative integers");
    }
    cfg.seeds.push_back(s.get<std::uint64_t>());
  }
  cfg.output_dir = text(doc, "", "output_dir");
  cfg.validate();
  return cfg;
}

oracle::UncertaintyField RunConfig::build_field() const {
  try {
    return oracle::UncertaintyField(field.dimension, field.bumps);
  } catch (const InvalidInput& e) {
    throw ConfigError("field", e.what());
  }
}

shaping::ShapingConfig RunConfig::build_shaping() const {
  shaping::ShapingConfig s;
  s.u_mid = shaping.u_mid;
  s.c_grad = shaping.c_grad;
  s.c_rot = shaping.c_rot;
  s.lambda_unsafe = shaping.lambda_unsafe;
  s.eps_unsafe = shaping.eps_unsafe;
  if (shaping.w_matrix) {
    s.w = shaping::SkewGenerator::from_matrix(*shaping.w_matrix);
  } else if (!shaping.w_upper.empty()) {
    try {
      s.w = shaping::SkewGenerator::from_upper(field.dimension, shaping.w_upper);
    } catch (const InvalidInput& e) {
      throw ConfigError("shaping.w.upper", e.what());
    }
  } else {
    if (field.dimension != 2) {
      throw ConfigError("shaping.w", "no default generator beyond 2-d; give w.upper");
    }
    s.w = shaping::SkewGenerator::symplectic(shaping.w_orientation);
  }
  return s;
}

double RunConfig::delta_band() const {
  if (diagnostics.delta_band) return *diagnostics.delta_band;
  double a_min = 0.0;
  for (const auto& b : field.bumps) a_min = a_min == 0.0 ? b.amplitude : std::min(a_min, b.amplitude);
  return a_min > 0.0 ? 0.1 * a_min : 0.1;
}

diag::BandSpec RunConfig::band() const {
  return diag::BandSpec{shaping.u_mid, delta_band(), shaping.eps_unsafe};
}

void RunConfig::validate() const {
  env.validate();
  train.validate();
  if (field.dimension < 1) throw ConfigError("field.dimension", "must be >= 1");
  for (std::size_t i = 0; i < field.bumps.size(); ++i) {
    const std::string bp = "field.bumps[" + std::to_string(i) + "]";
    if (!(field.bumps[i].amplitude > 0.0)) throw ConfigError(bp + ".amplitude", "must be > 0");
    if (!(field.bumps[i].sigma > 0.0)) throw ConfigError(bp + ".sigma", "must be > 0");
    if (field.bumps[i].center.size() != field.dimension) {
      throw ConfigError(bp + ".center", "must have field.dimension entries");
    }
  }
  if (field.dimension != env.state_dim()) {
    throw ConfigError("field.dimension", "must match the 2-d environment");
  }
  if (shaping.w_orientation != 1 && shaping.w_orientation != -1) {
    throw ConfigError("shaping.w.orientation", "must be 1 or -1");
  }
  if (shaping.w_matrix && shaping.w_matrix->rows() != field.dimension) {
    throw ConfigError("shaping.w.matrix", "must be field.dimension x field.dimension");
  }
  if (!(shaping.c_grad >= 0.0)) throw ConfigError("shaping.c_grad", "must be >= 0");
  if (!(shaping.c_rot >= 0.0)) throw ConfigError("shaping.c_rot", "must be >= 0");
  if (!(shaping.lambda_unsafe >= 0.0)) throw ConfigError("shaping.lambda_unsafe", "must be >= 0");
  if (!(shaping.eps_unsafe >= 0.0)) throw ConfigError("shaping.eps_unsafe", "must be >= 0");
  if (diagnostics.delta_band && !(*diagnostics.delta_band > 0.0)) {
    throw ConfigError("diagnostics.delta_band", "must be > 0");
  }
  if (diagnostics.grid_resolution < 2) throw ConfigError("diagnostics.grid_resolution", "must be >= 2");
  if (diagnostics.coverage_bins < 2) throw ConfigError("diagnostics.coverage_bins", "must be >= 2");
  if (diagnostics.trajectory_episodes < 0) {
    throw ConfigError("diagnostics.trajectory_episodes", "must be >= 0");
  }
  if (diagnostics.interval_eval_episodes < 0) {
    throw ConfigError("diagnostics.interval_eval_episodes", "must be >= 0");
  }
  if (seeds.empty()) throw ConfigError("seeds", "must not be empty");
  if (output_dir.empty()) throw ConfigError("output_dir", "must not be empty");
  build_shaping();
}

void merge_into(json& base, const json& patch, const std::string& prefix) {
  if (!patch.is_object()) throw ConfigError(prefix.empty() ? "config" : prefix, "expected an object");
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string path = join(prefix, it.key());
    auto target = base.find(it.key());
    if (target == base.end()) throw ConfigError(path, "unknown field");
    if (target->is_object() && it->is_object()) {
      merge_into(*target, *it, path);
    } else {
      *target = *it;
    }
  }
}

void apply_override(json& doc, std::string_view path, std::string_view value) {
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = path.find('.', start);
    const std::string key(path.substr(start, dot == std::string_view::npos ? path.npos : dot - start));
    if (key.empty() || !node->is_object() || !node->contains(key)) {
      throw ConfigError(std::string(path), "unknown field");
    }
    node = &(*node)[key];
    if (dot == std::string_view::npos) break;
    start = dot + 1;
  }
  json parsed = json::parse(value, nullptr, false);
  *node = parsed.is_discarded() ? json(std::string(value)) : parsed;
}

std::vector<std::pair<std::string, std::string>> parse_override_args(
    const std::vector<std::string>& args) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const std::string& arg : args) {
    if (arg.rfind("--", 0) != 0) throw ConfigError(arg, "overrides look like --path=value");
    const std::size_t eq = arg.find('=');
    if (eq == std::string::npos || eq == 2) {
      throw ConfigError(arg, "overrides look like --path=value");
    }
    out.emplace_back(arg.substr(2, eq - 2), arg.substr(eq + 1));
  }
  return out;
}

namespace {

json document_from_text(std::string_view text_in,
                        const std::vector<std::pair<std::string, std::string>>& overrides) {
  json patch = json::parse(text_in, nullptr, false, true);
  if (patch.is_discarded()) throw ConfigError("config", "not valid JSON");
  json doc = default_document();
  // Arrays (bumps, seeds) in the file replace the defaults wholesale.
  merge_into(doc, patch);
  for (const auto& [path, value] : overrides) apply_override(doc, path, value);
  return doc;
}

}  // namespace

json load_document(const std::filesystem::path& path,
                   const std::vector<std::pair<std::string, std::string>>& overrides) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config", "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return document_from_text(buf.str(), overrides);
}

RunConfig parse_text(std::string_view text_in,
                     const std::vector<std::pair<std::string, std::string>>& overrides) {
  return from_json(document_from_text(text_in, overrides));
}

RunConfig load(const std::filesystem::path& path,
               const std::vector<std::pair<std::string, std::string>>& overrides) {
  return from_json(load_document(path, overrides));
}

std::string canonical(const RunConfig& cfg) { return to_json(cfg).dump(2) + "\n"; }

std::string config_hash(const RunConfig& cfg) {
  json doc = to_json(cfg);
  doc.erase("output_dir");
  return hex64(fnv1a64(doc.dump()));
}

}  // namespace vfield::config
