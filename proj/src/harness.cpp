#include "vfield/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "vfield/checkpoint.hpp"
#include "vfield/errors.hpp"
#include "vfield/hash.hpp"

namespace vfield::harness {

using nlohmann::json;

namespace {

// Rng stream tags; the agent module uses small tags for training.
constexpr std::uint64_t kIntervalEval = 16;
constexpr std::uint64_t kFinalEval = 17;
constexpr std::uint64_t kReference = 18;
constexpr std::uint64_t kCurvature = 19;
constexpr std::uint64_t kVerify = 20;

constexpr int kCurvatureSamples = 20000;
constexpr int kBurnInSteps = 15;

void write_file(const fs::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << contents;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string field_hash(const config::RunConfig& cfg) {
  const json doc = config::to_json(cfg);
  return hex64(fnv1a64(json{{"field", doc["field"]}, {"shaping", doc["shaping"]}}.dump()));
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

json metric_json(const agent::MetricRecord& r) {
  return json{{"env_steps", r.env_steps},
              {"updates", r.updates},
              {"episodes", r.episodes},
              {"interval_episodes", r.interval_episodes},
              {"critic_loss", r.critic_loss},
              {"actor_loss", r.actor_loss},
              {"alpha_loss", r.alpha_loss},
              {"alpha", r.alpha},
              {"entropy", r.entropy},
              {"episode_return", r.episode_return}};
}

json brief(const diag::DiagnosticsReport& r) {
  return json{{"tangential_speed", r.tangential_speed.value},
              {"unsafe_rate", r.unsafe_rate.value},
              {"angular_coverage", r.angular_coverage.value},
              {"off_manifold_mass", r.off_manifold_mass.value},
              {"no_sticking_value", r.no_sticking_value.value},
              {"goal_success_rate", r.goal_success_rate},
              {"in_band_episode_fraction", r.in_band_episode_fraction}};
}

agent::BundleShape bundle_shape(const config::RunConfig& cfg) {
  return agent::BundleShape{cfg.env.observation_dim(), cfg.env.action_dim(), cfg.env.action_limit};
}

void write_manifest(const fs::path& dir, const config::RunConfig& cfg, const std::string& hash) {
  write_file(dir / "config.json", config::canonical(cfg));
  write_file(dir / "config.hash", hash + "\n");
  json manifest{{"config_hash", hash},
                {"artifact_version", kArtifactVersion},
                {"created_utc", utc_timestamp()},
                {"seeds", cfg.seeds}};
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

}  // namespace

fs::path resolve_output_dir(const std::string& output_dir) {
  fs::path p(output_dir);
  if (p.is_relative()) {
    if (const char* root = std::getenv(kOutputRootEnv); root != nullptr && *root != '\0') {
      return fs::path(root) / p;
    }
  }
  return p;
}

std::vector<env::Episode> rollout(const config::RunConfig& cfg, const env::PolicyFn& policy,
                                  int n_episodes, Rng& rng) {
  const oracle::UncertaintyField field = cfg.build_field();
  const shaping::ShapingConfig shaping_cfg = cfg.build_shaping();
  std::vector<env::Episode> episodes;
  episodes.reserve(static_cast<std::size_t>(std::max(n_episodes, 0)));
  for (int i = 0; i < n_episodes; ++i) {
    episodes.push_back(
        env::run_episode(cfg.env, field, shaping_cfg, policy, cfg.reward_mode, rng));
  }
  return episodes;
}

SeedOutcome evaluate_bundle(const config::RunConfig& cfg, agent::AgentBundle& bundle,
                            std::uint64_t seed, int n_episodes,
                            std::vector<env::Episode>* episodes_out) {
  const oracle::UncertaintyField field = cfg.build_field();
  const shaping::ShapingConfig shaping_cfg = cfg.build_shaping();
  const diag::BandSpec band = cfg.band();

  Rng eval_rng = Rng::stream(seed, kFinalEval);
  std::vector<env::Episode> episodes =
      rollout(cfg, agent::as_policy_fn(*bundle.policy, false), n_episodes, eval_rng);

  Rng ref_rng = Rng::stream(seed, kReference);
  const std::vector<env::Episode> reference =
      rollout(cfg, diag::reference_controller(field, shaping_cfg, cfg.env), n_episodes, ref_rng);

  Rng curv_rng = Rng::stream(seed, kCurvature);
  const double curvature = oracle::curvature_bound(field, shaping_cfg.u_mid, oracle::Box::unit(2),
                                                   kCurvatureSamples, curv_rng);

  SeedOutcome outcome;
  outcome.seed = seed;
  outcome.report = diag::evaluate(field, shaping_cfg, band, episodes,
                                  cfg.diagnostics.grid_resolution);
  const auto run_trs = diag::flatten(episodes);
  const auto ref_trs = diag::flatten(reference);
  outcome.concentration = diag::concentration_bound_report(field, shaping_cfg, run_trs, ref_trs,
                                                           band.delta_band, curvature);
  if (episodes_out != nullptr) *episodes_out = std::move(episodes);
  return outcome;
}

void write_evaluation(const fs::path& dir, const config::RunConfig& cfg,
                      const std::string& config_hash, const SeedOutcome& outcome,
                      const std::vector<env::Episode>& episodes) {
  fs::create_directories(dir);
  std::string csv = "# config_hash " + config_hash + "\n";
  csv += std::string(env::kTrajectoryCsvHeader) + "\n";
  const std::size_t keep = static_cast<std::size_t>(cfg.diagnostics.trajectory_episodes);
  const std::size_t first = episodes.size() > keep ? episodes.size() - keep : 0;
  for (std::size_t e = first; e < episodes.size(); ++e) {
    for (const env::Transition& tr : episodes[e]) csv += env::trajectory_csv_row(tr) + "\n";
  }
  write_file(dir / "trajectories.csv", csv);

  json doc{{"config_hash", config_hash},
           {"seed", outcome.seed},
           {"band", {{"u_mid", cfg.shaping.u_mid},
                     {"delta_band", cfg.delta_band()},
                     {"eps_unsafe", cfg.shaping.eps_unsafe}}},
           {"report", diag::to_json(outcome.report)},
           {"concentration", diag::to_json(outcome.concentration)}};
  write_file(dir / "diagnostics.json", doc.dump(2) + "\n");
  write_file(dir / "grid.txt", outcome.report.visitation_grid.to_text(config_hash));
}

SeedOutcome run_seed(const config::RunConfig& cfg, std::uint64_t seed, const fs::path& dir,
                     const std::string& config_hash) {
  fs::create_directories(dir);
  const oracle::UncertaintyField field = cfg.build_field();
  const shaping::ShapingConfig shaping_cfg = cfg.build_shaping();
  const diag::BandSpec band = cfg.band();

  agent::TrainConfig tc = cfg.train;
  tc.seed = seed;
  Rng init_rng = Rng::stream(seed, 1);
  agent::AgentBundle bundle(bundle_shape(cfg), tc, init_rng);

  const fs::path checkpoint = dir / "checkpoint.vfck";
  std::ofstream metrics(dir / "metrics.jsonl", std::ios::binary | std::ios::trunc);
  if (!metrics) throw std::runtime_error("cannot write " + (dir / "metrics.jsonl").string());
  metrics << json{{"config_hash", config_hash}, {"seed", seed}}.dump() << "\n";
  agent::save_checkpoint(bundle, checkpoint, config_hash);

  agent::TrainHooks hooks;
  hooks.on_metrics = [&](const agent::MetricRecord& rec, agent::AgentBundle& b) {
    json line = metric_json(rec);
    if (cfg.diagnostics.interval_eval_episodes > 0) {
      Rng rng = Rng::stream(seed, kIntervalEval + (static_cast<std::uint64_t>(rec.env_steps) << 8));
      const auto episodes = rollout(cfg, agent::as_policy_fn(*b.policy, false),
                                    cfg.diagnostics.interval_eval_episodes, rng);
      line["eval"] = brief(diag::evaluate(field, shaping_cfg, band, episodes,
                                          cfg.diagnostics.grid_resolution));
    }
    metrics << line.dump() << "\n";
    metrics.flush();
    agent::save_checkpoint(b, checkpoint, config_hash);
  };

  agent::train(bundle, cfg.env, field, shaping_cfg, cfg.reward_mode, hooks);
  agent::save_checkpoint(bundle, checkpoint, config_hash);

  std::vector<env::Episode> episodes;
  SeedOutcome outcome = evaluate_bundle(cfg, bundle, seed, cfg.train.eval_episodes, &episodes);
  write_evaluation(dir, cfg, config_hash, outcome, episodes);
  return outcome;
}

json summarize(const config::RunConfig& cfg, const std::string& config_hash,
               const std::vector<SeedOutcome>& outcomes) {
  json per_seed = json::array();
  std::vector<double> speed, unsafe, coverage, mass, sticking, success, in_band;
  std::size_t n_bumps = cfg.field.bumps.size();
  std::vector<std::vector<double>> coverage_bump(n_bumps), in_band_bump(n_bumps);
  json statuses = json::array();
  for (const SeedOutcome& o : outcomes) {
    per_seed.push_back({{"seed", o.seed},
                        {"report", diag::to_json(o.report)},
                        {"concentration", diag::to_json(o.concentration)}});
    speed.push_back(o.report.tangential_speed.value);
    unsafe.push_back(o.report.unsafe_rate.value);
    coverage.push_back(o.report.angular_coverage.value);
    mass.push_back(o.report.off_manifold_mass.value);
    sticking.push_back(o.report.no_sticking_value.value);
    success.push_back(o.report.goal_success_rate);
    in_band.push_back(o.report.in_band_episode_fraction);
    for (std::size_t b = 0; b < n_bumps; ++b) {
      if (b < o.report.angular_coverage_per_bump.size()) {
        coverage_bump[b].push_back(o.report.angular_coverage_per_bump[b]);
      }
      if (b < o.report.in_band_episode_fraction_per_bump.size()) {
        in_band_bump[b].push_back(o.report.in_band_episode_fraction_per_bump[b]);
      }
    }
    statuses.push_back(diag::to_string(o.concentration.status));
  }
  json cov_b = json::array(), band_b = json::array();
  for (std::size_t b = 0; b < n_bumps; ++b) {
    cov_b.push_back(median(coverage_bump[b]));
    band_b.push_back(median(in_band_bump[b]));
  }
  return json{{"config_hash", config_hash},
              {"field_hash", field_hash(cfg)},
              {"reward_mode", env::to_string(cfg.reward_mode)},
              {"seeds", cfg.seeds},
              {"per_seed", per_seed},
              {"concentration_status", statuses},
              {"median",
               {{"tangential_speed", median(speed)},
                {"unsafe_rate", median(unsafe)},
                {"angular_coverage", median(coverage)},
                {"off_manifold_mass", median(mass)},
                {"no_sticking_value", median(sticking)},
                {"goal_success_rate", median(success)},
                {"in_band_episode_fraction", median(in_band)},
                {"angular_coverage_per_bump", cov_b},
                {"in_band_episode_fraction_per_bump", band_b}}}};
}

int run_experiment(const config::RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const std::string hash = config::config_hash(cfg);
  const fs::path dir = resolve_output_dir(cfg.output_dir);
  try {
    fs::create_directories(dir);
    write_manifest(dir, cfg, hash);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kBadInput;
  }

  std::vector<SeedOutcome> outcomes;
  for (std::uint64_t seed : cfg.seeds) {
    const fs::path seed_dir = dir / ("seed_" + std::to_string(seed));
    try {
      outcomes.push_back(run_seed(cfg, seed, seed_dir, hash));
    } catch (const TrainingDivergence& e) {
      err << "training diverged (seed " << seed << "): " << e.what() << "\n"
          << "last good checkpoint: " << (seed_dir / "checkpoint.vfck").string() << "\n";
      return kDiverged;
    }
    const auto& r = outcomes.back().report;
    out << "seed " << seed << ": tangential_speed=" << r.tangential_speed.value
        << " unsafe_rate=" << r.unsafe_rate.value
        << " angular_coverage=" << r.angular_coverage.value
        << " off_manifold_mass=" << r.off_manifold_mass.value
        << " goal_success=" << r.goal_success_rate << "\n";
  }

  write_file(dir / "summary.json", summarize(cfg, hash, outcomes).dump(2) + "\n");
  diag::VisitationGrid merged;
  merged.resolution = cfg.diagnostics.grid_resolution;
  merged.counts.assign(static_cast<std::size_t>(merged.resolution * merged.resolution), 0);
  for (const SeedOutcome& o : outcomes) merged.merge(o.report.visitation_grid);
  write_file(dir / "grid.txt", merged.to_text(hash));
  out << "run written to " << dir.string() << " (config " << hash << ")\n";
  return kOk;
}

int cli_train(const fs::path& config_path, const Overrides& overrides, std::ostream& out,
              std::ostream& err) {
  config::RunConfig cfg;
  try {
    cfg = config::load(config_path, overrides);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kBadInput;
  }
  return run_experiment(cfg, out, err);
}

int cli_eval(const fs::path& run_dir, const fs::path& checkpoint_in, int n_episodes,
             std::uint64_t seed, std::ostream& out, std::ostream& err) {
  if (n_episodes < 0) {
    err << "error: n_episodes must be >= 0\n";
    return kBadInput;
  }
  config::RunConfig cfg;
  try {
    cfg = config::load(run_dir / "config.json");
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kBadInput;
  }
  const std::string hash = config::config_hash(cfg);
  const fs::path checkpoint = checkpoint_in.empty()
                                  ? run_dir / ("seed_" + std::to_string(cfg.seeds.front())) /
                                        "checkpoint.vfck"
                                  : checkpoint_in;
  if (!fs::exists(checkpoint)) {
    err << "error: checkpoint not found: " << checkpoint.string() << "\n";
    return kBadInput;
  }
  std::unique_ptr<agent::AgentBundle> bundle;
  try {
    agent::TrainConfig base = cfg.train;
    base.buffer_capacity = base.batch_size;
    bundle = agent::load_checkpoint(checkpoint, cfg.env.observation_dim(), base);
  } catch (const CheckpointError& e) {
    err << "error: cannot load checkpoint: " << e.what() << "\n";
    return kBadInput;
  }

  std::vector<env::Episode> episodes;
  SeedOutcome outcome;
  try {
    outcome = evaluate_bundle(cfg, *bundle, seed, n_episodes, &episodes);
  } catch (const TrainingDivergence& e) {
    err << "error: " << e.what() << "\n";
    return kDiverged;
  }
  const fs::path dir = run_dir / "eval" /
                       (checkpoint.parent_path().filename().string() + "_n" +
                        std::to_string(n_episodes) + "_seed" + std::to_string(seed));
  write_evaluation(dir, cfg, hash, outcome, episodes);
  out << "evaluated " << n_episodes << " episodes: tangential_speed="
      << outcome.report.tangential_speed.value << " unsafe_rate=" << outcome.report.unsafe_rate.value
      << " angular_coverage=" << outcome.report.angular_coverage.value
      << " goal_success=" << outcome.report.goal_success_rate << "\n"
      << "written to " << dir.string() << "\n";
  return kOk;
}

std::vector<CheckResult> verification_checks(const config::RunConfig& cfg) {
  const oracle::UncertaintyField field = cfg.build_field();
  shaping::ShapingConfig sc = cfg.build_shaping();
  sc.c_grad = 1.0;
  sc.c_rot = 1.0;
  const diag::BandSpec band = cfg.band();
  const int d = field.dimension();
  const oracle::Box unit = oracle::Box::unit(d);
  Rng rng = Rng::stream(cfg.seeds.front(), kVerify);
  std::vector<CheckResult> checks;
  auto fmt = [](const char* f, double a, double b = 0.0, double c = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return std::string(buf);
  };

  {
    CheckResult c;
    c.name = "skew_orthogonality";
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
      const oracle::Vec g = field.gradient(unit.sample(rng));
      worst = std::max(worst, std::abs(shaping::rotational_field(sc, g).dot(g)));
    }
    c.passed = worst < 1e-12;
    c.vacuous = field.empty();
    c.detail = fmt("max |<W grad U, grad U>| = %.3g over 1000 states (limit 1e-12)", worst);
    checks.push_back(c);
  }

  {
    CheckResult c;
    c.name = "alpha_beta_symmetry";
    double worst = 0.0;
    int pairs = 0;
    for (int i = 0; i < 1000; ++i) {
      const double x = std::ldexp(static_cast<double>(rng.index(1u << 22)), -22);
      const double hi = sc.u_mid + x;
      const double lo = sc.u_mid - x;
      if (hi - sc.u_mid != sc.u_mid - lo) continue;
      ++pairs;
      worst = std::max(worst, std::abs(shaping::alpha(sc, hi) + shaping::alpha(sc, lo)));
      worst = std::max(worst, std::abs(shaping::beta(sc, hi) - shaping::beta(sc, lo)));
    }
    c.passed = worst == 0.0 && pairs > 0;
    c.detail = fmt("max asymmetry %.3g over %.0f mirrored pairs", worst, pairs);
    checks.push_back(c);
  }

  {
    CheckResult c;
    c.name = "decomposition_bound";
    const double curvature = oracle::curvature_bound(field, sc.u_mid, unit, 100000, rng);
    int violations = 0;
    double worst_ratio = 0.0;
    for (int i = 0; i < 10000; ++i) {
      const oracle::Vec s = unit.sample(rng);
      oracle::Vec step(d);
      for (int k = 0; k < d; ++k) step[k] = rng.normal();
      step *= rng.uniform(0.0, 0.1) / std::max(step.norm(), 1e-300);
      const oracle::Vec s_next = (s + step).cwiseMax(0.0).cwiseMin(1.0);
      const double residual = std::abs(shaping::decomposition_residual(sc, field, s, s_next));
      const double bound = 0.5 * curvature * (s_next - s).squaredNorm();
      if (residual > bound) ++violations;
      if (bound > 0.0) worst_ratio = std::max(worst_ratio, residual / bound);
    }
    c.passed = violations == 0;
    c.vacuous = field.empty();
    c.detail = fmt("%.0f of 10000 transitions exceed (L/2)|ds|^2, L = %.6g, max ratio %.4f",
                   violations, curvature, worst_ratio);
    checks.push_back(c);
  }

  {
    CheckResult c;
    c.name = "telescoping";
    double worst = 0.0;
    for (int traj = 0; traj < 100; ++traj) {
      oracle::Vec s = unit.sample(rng);
      const double psi0 = shaping::psi(sc, field.value(s));
      double sum = 0.0;
      double psi_prev = psi0;
      for (int t = 0; t < 60; ++t) {
        oracle::Vec step(d);
        for (int k = 0; k < d; ++k) step[k] = rng.uniform(-0.1, 0.1);
        s = (s + step).cwiseMax(0.0).cwiseMin(1.0);
        const double psi_next = shaping::psi(sc, field.value(s));
        sum += -(psi_next - psi_prev);
        psi_prev = psi_next;
      }
      worst = std::max(worst, std::abs(sum - (psi0 - psi_prev)));
    }
    c.passed = worst <= 1e-9;
    c.detail = fmt("max |sum - (psi_0 - psi_T)| = %.3g over 100 trajectories (limit 1e-9)", worst);
    checks.push_back(c);
  }

  {
    CheckResult c;
    c.name = "closed_loop";
    if (field.empty() || d != 2) {
      c.passed = true;
      c.vacuous = true;
      c.detail = "no bump to loop around";
    } else {
      const auto coarse = diag::level_set_loop(field, sc.u_mid, 0, 90);
      const auto fine = diag::level_set_loop(field, sc.u_mid, 0, 720);
      const auto reversed = diag::level_set_loop(field, sc.u_mid, 0, 720, false);
      if (fine.empty()) {
        c.passed = true;
        c.vacuous = true;
        c.detail = "target level not reached at the first bump";
      } else {
        const auto lc = shaping::closed_loop_integrals(sc, field, coarse);
        const auto lf = shaping::closed_loop_integrals(sc, field, fine);
        const auto lr = shaping::closed_loop_integrals(sc, field, reversed);
        const bool refines = std::abs(lf.gradient_field_sum) < std::abs(lc.gradient_field_sum);
        const bool small = std::abs(lf.grad_sum) < 0.05 * std::abs(lf.rot_sum);
        const bool flips = lf.rot_sum > 0.0 && lr.rot_sum < 0.0;
        c.passed = refines && small && flips;
        c.detail = fmt("gradient return %.3g (N=90) -> %.3g (N=720); ", lc.gradient_field_sum,
                       lf.gradient_field_sum) +
                   fmt("alpha-weighted %.3g vs rot_sum %.6g, reversed %.6g", lf.grad_sum,
                       lf.rot_sum, lr.rot_sum);
      }
    }
    checks.push_back(c);
  }

  {
    CheckResult c;
    c.name = "regular_value";
    const auto probe = oracle::regular_value_probe(field, sc.u_mid, band.delta_band, unit, 10000, rng);
    c.vacuous = probe.vacuous;
    c.passed = probe.vacuous || probe.min_gradient_norm > 0.0;
    c.detail = fmt("min |grad U| in band = %.6g over %.0f band points", probe.min_gradient_norm,
                   static_cast<double>(probe.band_points));
    checks.push_back(c);
  }

  {
    CheckResult c;
    c.name = "reference_witness";
    if (field.empty()) {
      c.passed = true;
      c.vacuous = true;
      c.detail = "grad U vanishes everywhere";
    } else {
      Rng ref_rng = Rng::stream(cfg.seeds.front(), kReference);
      const auto episodes = rollout(cfg, diag::reference_controller(field, sc, cfg.env), 10, ref_rng);
      std::vector<env::Transition> settled;
      std::vector<oracle::Vec> states;
      for (const auto& ep : episodes) {
        for (const auto& tr : ep) {
          if (tr.t < kBurnInSteps) continue;
          settled.push_back(tr);
          states.push_back(tr.s_next);
        }
      }
      if (states.empty()) {
        c.passed = false;
        c.detail = "episodes ended before the burn-in";
      } else {
        const double mass = diag::off_manifold_mass(field, sc.u_mid, states, band.delta_band).value;
        const double v0 = diag::no_sticking_value(field, sc, settled).value;
        c.passed = mass < 0.05 && v0 > 0.0;
        c.detail = fmt("off-manifold mass %.4f after %.0f burn-in steps (limit 0.05), v0 = %.6g",
                       mass, kBurnInSteps, v0);
      }
    }
    checks.push_back(c);
  }
  return checks;
}

int cli_verify(const fs::path& config_path, const Overrides& overrides, std::ostream& out,
               std::ostream& err) {
  config::RunConfig cfg;
  try {
    cfg = config::load(config_path, overrides);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kBadInput;
  }
  bool all = true;
  for (const CheckResult& c : verification_checks(cfg)) {
    out << (c.passed ? "PASS " : "FAIL ") << c.name << (c.vacuous ? " [vacuous]" : "") << ": "
        << c.detail << "\n";
    all = all && c.passed;
  }
  return all ? kOk : kCheckFailed;
}

int cli_compare(const fs::path& run_a, const fs::path& run_b, const fs::path& out_dir_in,
                std::ostream& out, std::ostream& err) {
  json a, b;
  try {
    a = json::parse(read_file(run_a / "summary.json"));
    b = json::parse(read_file(run_b / "summary.json"));
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kBadInput;
  }
  if (a.value("field_hash", "") != b.value("field_hash", "")) {
    err << "warning: runs use different field/shaping configs; comparing anyway\n";
  }
  const char* keys[] = {"tangential_speed", "unsafe_rate", "angular_coverage", "off_manifold_mass",
                        "no_sticking_value", "goal_success_rate"};
  json rows = json::object();
  out << std::left << std::setw(22) << "metric" << std::right << std::setw(14) << "a"
      << std::setw(14) << "b" << std::setw(14) << "a - b" << "\n";
  for (const char* k : keys) {
    const double va = a["median"].value(k, 0.0);
    const double vb = b["median"].value(k, 0.0);
    rows[k] = {{"a", va}, {"b", vb}, {"delta", va - vb}};
    out << std::left << std::setw(22) << k << std::right << std::setw(14) << va << std::setw(14)
        << vb << std::setw(14) << va - vb << "\n";
  }
  const fs::path out_dir = out_dir_in.empty() ? run_a / "compare" : out_dir_in;
  try {
    fs::create_directories(out_dir);
    json doc{{"a", {{"run_dir", run_a.string()}, {"config_hash", a.value("config_hash", "")}}},
             {"b", {{"run_dir", run_b.string()}, {"config_hash", b.value("config_hash", "")}}},
             {"same_field", a.value("field_hash", "") == b.value("field_hash", "")},
             {"metrics", rows}};
    write_file(out_dir / "comparison.json", doc.dump(2) + "\n");
    if (fs::exists(run_a / "grid.txt")) {
      fs::copy_file(run_a / "grid.txt", out_dir / "grid_a.txt", fs::copy_options::overwrite_existing);
    }
    if (fs::exists(run_b / "grid.txt")) {
      fs::copy_file(run_b / "grid.txt", out_dir / "grid_b.txt", fs::copy_options::overwrite_existing);
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kBadInput;
  }
  return kOk;
}

int cli_sweep(const fs::path& config_path, const std::string& axis,
              const std::vector<std::string>& values, const Overrides& overrides,
              std::ostream& out, std::ostream& err) {
  json doc;
  try {
    doc = config::load_document(config_path, overrides);
    config::from_json(doc);
    const json::json_pointer ptr("/" + [&] {
      std::string p = axis;
      std::replace(p.begin(), p.end(), '.', '/');
      return p;
    }());
    if (axis.empty() || !doc.contains(ptr)) throw ConfigError(axis, "unknown field");
    const json& target = doc.at(ptr);
    if (!target.is_primitive() || target.is_null()) {
      throw ConfigError(axis, "sweep axis must be a scalar field");
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kBadInput;
  } catch (const json::exception& e) {
    err << "config error: " << axis << ": " << e.what() << "\n";
    return kBadInput;
  }

  const std::string base_output = doc["output_dir"].get<std::string>();
  json summary = json::array();
  for (const std::string& value : values) {
    config::RunConfig cfg;
    try {
      json run_doc = doc;
      config::apply_override(run_doc, axis, value);
      run_doc["output_dir"] = (fs::path(base_output) / "sweep" / (axis + "=" + value)).string();
      cfg = config::from_json(run_doc);
    } catch (const ConfigError& e) {
      err << "config error: " << e.what() << "\n";
      return kBadInput;
    }
    const int code = run_experiment(cfg, out, err);
    if (code != kOk) return code;
    const json s = json::parse(read_file(resolve_output_dir(cfg.output_dir) / "summary.json"));
    summary.push_back({{"value", value},
                       {"config_hash", s["config_hash"]},
                       {"output_dir", cfg.output_dir},
                       {"median", s["median"]}});
    out << axis << "=" << value << " hash " << s["config_hash"].get<std::string>() << "\n";
  }
  if (!values.empty()) {
    const fs::path dir = resolve_output_dir(base_output) / "sweep";
    fs::create_directories(dir);
    write_file(dir / "sweep_summary.json",
               json{{"axis", axis}, {"runs", summary}}.dump(2) + "\n");
  }
  return kOk;
}

}  // namespace vfield::harness
