#include "vfield/diagnostics.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <numbers>
#include <sstream>

#include "vfield/errors.hpp"

namespace vfield::diag {

namespace {

constexpr double kDegenerate = 1e-12;

Measurement flagged_zero(std::string note) {
  Measurement m;
  m.flagged = true;
  m.note = std::move(note);
  return m;
}

int sector(const Vec& s, const Vec& center, int n_bins) {
  const double angle = std::atan2(s[1] - center[1], s[0] - center[0]);
  double unit = (angle + std::numbers::pi) / (2.0 * std::numbers::pi);
  int bin = static_cast<int>(std::floor(unit * n_bins));
  return std::clamp(bin, 0, n_bins - 1);
}

Measurement coverage_about(const Vec& center, std::span<const Vec> members, int n_bins) {
  if (members.empty()) return flagged_zero("no in-band states");
  std::vector<char> hit(static_cast<std::size_t>(n_bins), 0);
  for (const Vec& s : members) hit[static_cast<std::size_t>(sector(s, center, n_bins))] = 1;
  Measurement m;
  m.used = members.size();
  m.value = static_cast<double>(std::count(hit.begin(), hit.end(), 1)) / n_bins;
  return m;
}

void check_planar(const UncertaintyField& field) {
  if (field.dimension() != 2) {
    throw UnsupportedConfiguration("angular coverage is defined for 2-d fields only");
  }
}

}  // namespace

void BandSpec::validate() const {
  if (!(delta_band > 0.0)) throw ConfigError("diagnostics.delta_band", "must be > 0");
  if (!(eps_unsafe >= 0.0)) throw ConfigError("diagnostics.eps_unsafe", "must be >= 0");
}

Measurement tangential_speed(const UncertaintyField& field, const shaping::SkewGenerator& w,
                             const BandSpec& band, std::span<const Transition> transitions) {
  Measurement m;
  double sum = 0.0;
  for (const Transition& tr : transitions) {
    const double u = field.value(tr.s);
    if (!band.contains(u)) continue;
    const Vec tangent = w.matrix() * field.gradient(tr.s);
    const double norm = tangent.norm();
    if (norm < kDegenerate) {
      ++m.excluded;
      continue;
    }
    sum += (tr.s_next - tr.s).dot(tangent) / norm;
    ++m.used;
  }
  if (m.excluded > 0) m.note = "excluded in-band states with vanishing gradient";
  if (m.used == 0) {
    m.flagged = true;
    if (m.note.empty()) m.note = "no in-band transitions";
    return m;
  }
  m.value = sum / static_cast<double>(m.used);
  return m;
}

Measurement unsafe_rate(const UncertaintyField& field, const BandSpec& band,
                        std::span<const Transition> transitions) {
  if (transitions.empty()) return flagged_zero("no transitions");
  std::size_t unsafe = 0;
  for (const Transition& tr : transitions) {
    if (field.value(tr.s_next) > band.u_mid + band.eps_unsafe) ++unsafe;
  }
  Measurement m;
  m.used = transitions.size();
  m.value = static_cast<double>(unsafe) / static_cast<double>(transitions.size());
  return m;
}

Measurement angular_coverage(const UncertaintyField& field, const BandSpec& band,
                             std::span<const Vec> states, int n_bins) {
  check_planar(field);
  if (field.bumps().size() != 1) {
    throw UnsupportedConfiguration(
        "angular coverage needs a single-bump field; use angular_coverage_for_bump");
  }
  return angular_coverage_for_bump(field, band, 0, states, n_bins);
}

Measurement angular_coverage_for_bump(const UncertaintyField& field, const BandSpec& band,
                                      std::size_t bump, std::span<const Vec> states,
                                      int n_bins) {
  check_planar(field);
  if (n_bins < 2) throw InvalidInput("n_bins must be >= 2");
  if (bump >= field.bumps().size()) throw InvalidInput("bump index out of range");
  std::vector<Vec> members;
  const bool several = field.bumps().size() > 1;
  for (const Vec& s : states) {
    if (!band.contains(field.value(s))) continue;
    if (several && field.nearest_bump(s) != bump) continue;
    members.push_back(s);
  }
  return coverage_about(field.bumps()[bump].center, members, n_bins);
}

Measurement off_manifold_mass(const UncertaintyField& field, double u_mid,
                              std::span<const Vec> states, double eps) {
  if (!(eps > 0.0)) throw InvalidInput("eps must be > 0");
  if (states.empty()) return flagged_zero("no states");
  std::size_t off = 0;
  for (const Vec& s : states) {
    if (std::abs(field.value(s) - u_mid) >= eps) ++off;
  }
  Measurement m;
  m.used = states.size();
  m.value = static_cast<double>(off) / static_cast<double>(states.size());
  return m;
}

Measurement no_sticking_value(const UncertaintyField& field, const shaping::ShapingConfig& cfg,
                              std::span<const Transition> transitions) {
  if (transitions.empty()) return flagged_zero("no transitions");
  double sum = 0.0;
  for (const Transition& tr : transitions) {
    const Vec tangent = shaping::rotational_field(cfg, field.gradient(tr.s));
    sum += shaping::beta(cfg, field.value(tr.s)) * tangent.dot(tr.s_next - tr.s);
  }
  Measurement m;
  m.used = transitions.size();
  m.value = sum / static_cast<double>(transitions.size());
  return m;
}

std::string to_string(BoundStatus status) {
  switch (status) {
    case BoundStatus::pass: return "PASS";
    case BoundStatus::fail: return "FAIL";
    case BoundStatus::inconclusive: return "INCONCLUSIVE";
  }
  return "INCONCLUSIVE";
}

ConcentrationReport concentration_bound_report(const UncertaintyField& field,
                                               const shaping::ShapingConfig& cfg,
                                               std::span<const Transition> run,
                                               std::span<const Transition> reference, double eps,
                                               double curvature) {
  ConcentrationReport r;
  r.eps = eps;
  r.curvature = curvature;

  std::vector<Vec> states;
  states.reserve(run.size());
  for (const Transition& tr : run) states.push_back(tr.s);
  r.measured_mass = states.empty() ? 0.0 : off_manifold_mass(field, cfg.u_mid, states, eps).value;

  auto mean_task = [](std::span<const Transition> trs) {
    double sum = 0.0;
    for (const Transition& tr : trs) sum += tr.task_reward;
    return trs.empty() ? 0.0 : sum / static_cast<double>(trs.size());
  };
  auto taylor = [curvature](std::span<const Transition> trs) {
    double sum = 0.0;
    for (const Transition& tr : trs) sum += (tr.s_next - tr.s).squaredNorm();
    return trs.empty() ? 0.0 : 0.5 * curvature * sum / static_cast<double>(trs.size());
  };
  r.base_reward_gap = mean_task(run) - mean_task(reference);
  r.taylor_error_run = taylor(run);
  r.taylor_error_reference = taylor(reference);

  double v0_sum = 0.0;
  std::size_t v0_count = 0;
  double vmax = 0.0;
  auto scan = [&](std::span<const Transition> trs, bool reference_run) {
    for (const Transition& tr : trs) {
      const double u = field.value(tr.s);
      const double tangential =
          shaping::rotational_field(cfg, field.gradient(tr.s)).dot(tr.s_next - tr.s);
      vmax = std::max(vmax, std::abs(tangential));
      if (reference_run && std::abs(u - cfg.u_mid) < eps) {
        v0_sum += shaping::beta(cfg, u) * tangential;
        ++v0_count;
      }
    }
  };
  scan(reference, true);
  scan(run, false);
  r.v0_hat = v0_count == 0 ? 0.0 : v0_sum / static_cast<double>(v0_count);
  r.vmax_hat = vmax;
  r.b_eps = 1.0 - std::tanh(eps);

  if (!(r.v0_hat > 0.0) || !(r.vmax_hat > 0.0)) {
    r.bound = std::numeric_limits<double>::infinity();
    r.vacuous = true;
    r.status = BoundStatus::inconclusive;
    return r;
  }
  const double numerator = r.base_reward_gap + (r.vmax_hat - r.v0_hat) + r.taylor_error_run +
                           r.taylor_error_reference;
  const double denominator = (1.0 - r.b_eps) * r.vmax_hat;
  r.bound = denominator > 0.0 ? numerator / denominator : std::numeric_limits<double>::infinity();
  r.vacuous = !std::isfinite(r.bound) || r.bound >= 1.0;
  r.status = r.measured_mass <= r.bound ? BoundStatus::pass : BoundStatus::fail;
  return r;
}

std::int64_t VisitationGrid::total() const {
  std::int64_t sum = 0;
  for (auto c : counts) sum += c;
  return sum;
}

void VisitationGrid::merge(const VisitationGrid& other) {
  if (other.resolution != resolution) throw InvalidInput("grid resolutions differ");
  for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
}

std::string VisitationGrid::to_text(const std::string& config_hash) const {
  std::ostringstream out;
  out << "resolution " << resolution << "\n";
  if (!config_hash.empty()) out << "# config_hash " << config_hash << "\n";
  out << "# rows run over y from 0 to 1, columns over x from 0 to 1\n";
  for (int row = 0; row < resolution; ++row) {
    for (int col = 0; col < resolution; ++col) {
      if (col > 0) out << ' ';
      out << at(row, col);
    }
    out << "\n";
  }
  return out.str();
}

VisitationGrid visitation_grid(std::span<const Vec> states, int resolution) {
  if (resolution < 2) throw InvalidInput("resolution must be >= 2");
  VisitationGrid grid;
  grid.resolution = resolution;
  grid.counts.assign(static_cast<std::size_t>(resolution * resolution), 0);
  auto cell = [resolution](double x) {
    return std::clamp(static_cast<int>(std::floor(x * resolution)), 0, resolution - 1);
  };
  for (const Vec& s : states) {
    if (s.size() < 2) throw InvalidInput("visitation grid needs 2-d states");
    ++grid.counts[static_cast<std::size_t>(cell(s[1]) * resolution + cell(s[0]))];
  }
  return grid;
}

std::vector<Vec> visited_states(std::span<const Episode> episodes) {
  std::vector<Vec> out;
  for (const Episode& ep : episodes) {
    if (ep.empty()) continue;
    out.push_back(ep.front().s);
    for (const Transition& tr : ep) out.push_back(tr.s_next);
  }
  return out;
}

std::vector<Transition> flatten(std::span<const Episode> episodes) {
  std::vector<Transition> out;
  for (const Episode& ep : episodes) out.insert(out.end(), ep.begin(), ep.end());
  return out;
}

env::PolicyFn reference_controller(const UncertaintyField& field, const shaping::ShapingConfig& cfg,
                                   const env::EnvConfig& env_cfg, ReferenceGains gains) {
  return [&field, cfg, limit = env_cfg.action_limit, gains](const Vec& obs, Rng&) -> Vec {
    const Vec pos = obs.head(2);
    const Vec grad = field.gradient(pos);
    const double g2 = grad.squaredNorm();
    Vec action;
    if (g2 < kDegenerate * kDegenerate) {
      // Flat region: head for the closest bump, or stand still without one.
      if (field.empty()) return Vec::Zero(2);
      action = field.bumps()[field.nearest_bump(pos)].center - pos;
    } else {
      const double u = field.value(pos);
      const Vec tangent = shaping::rotational_field(cfg, grad) / std::sqrt(g2);
      action = shaping::beta(cfg, u) * gains.tangential_speed * tangent;
      // Newton correction taken at the predicted point, so the chord of a
      // tight level set does not drift out of the band.
      const Vec ahead = pos + action;
      const Vec grad_ahead = field.gradient(ahead);
      const double g2_ahead = grad_ahead.squaredNorm();
      if (g2_ahead >= kDegenerate * kDegenerate) {
        action += gains.correction_gain * (cfg.u_mid - field.value(ahead)) / g2_ahead * grad_ahead;
      } else {
        action += gains.correction_gain * (cfg.u_mid - u) / g2 * grad;
      }
    }
    const double peak = action.cwiseAbs().maxCoeff();
    if (peak > limit) action *= limit / peak;
    return action;
  };
}

std::vector<Vec> level_set_loop(const UncertaintyField& field, double u_mid, std::size_t bump,
                                int n, bool counter_clockwise) {
  check_planar(field);
  if (n < 3) throw InvalidInput("a loop needs at least 3 points");
  if (bump >= field.bumps().size()) throw InvalidInput("bump index out of range");
  const Vec& c = field.bumps()[bump].center;
  if (!(field.value(c) > u_mid)) return {};
  std::vector<Vec> loop;
  loop.reserve(static_cast<std::size_t>(n) + 1);
  for (int i = 0; i < n; ++i) {
    const double theta = 2.0 * std::numbers::pi * i / n * (counter_clockwise ? 1.0 : -1.0);
    Vec dir(2);
    dir << std::cos(theta), std::sin(theta);
    double lo = 0.0;
    double hi = field.bumps()[bump].sigma;
    while (field.value(c + hi * dir) > u_mid) {
      lo = hi;
      hi *= 2.0;
      if (hi > 1e6) throw InvalidInput("level set is unbounded along a ray");
    }
    for (int it = 0; it < 200 && hi - lo > 0.0; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (mid == lo || mid == hi) break;
      (field.value(c + mid * dir) > u_mid ? lo : hi) = mid;
    }
    loop.push_back(c + 0.5 * (lo + hi) * dir);
  }
  loop.push_back(loop.front());
  return loop;
}

EpisodeStats episode_stats(const UncertaintyField& field, const BandSpec& band,
                           const Episode& episode) {
  EpisodeStats st;
  st.length = static_cast<int>(episode.size());
  st.in_band_steps_per_bump.assign(field.bumps().size(), 0);
  for (const Transition& tr : episode) {
    if (band.contains(field.value(tr.s))) {
      ++st.in_band_steps;
      if (!field.empty()) ++st.in_band_steps_per_bump[field.nearest_bump(tr.s)];
    }
    if (tr.goal_reached) st.goal_reached = true;
  }
  return st;
}

DiagnosticsReport evaluate(const UncertaintyField& field, const shaping::ShapingConfig& cfg,
                           const BandSpec& band, std::span<const Episode> episodes,
                           int grid_resolution) {
  DiagnosticsReport rep;
  const std::vector<Transition> trs = flatten(episodes);
  const std::vector<Vec> states = visited_states(episodes);
  rep.episodes = episodes.size();
  rep.transitions = trs.size();
  rep.tangential_speed = tangential_speed(field, cfg.w, band, trs);
  rep.unsafe_rate = unsafe_rate(field, band, trs);
  rep.off_manifold_mass = states.empty() ? flagged_zero("no states")
                                         : off_manifold_mass(field, band.u_mid, states,
                                                             band.delta_band);
  rep.no_sticking_value = no_sticking_value(field, cfg, trs);
  rep.visitation_grid = visitation_grid(states, grid_resolution);

  const std::size_t n_bumps = field.bumps().size();
  if (field.dimension() == 2 && n_bumps > 0) {
    double sum = 0.0;
    bool flagged = false;
    std::size_t used = 0;
    for (std::size_t b = 0; b < n_bumps; ++b) {
      const Measurement m = angular_coverage_for_bump(field, band, b, states);
      rep.angular_coverage_per_bump.push_back(m.value);
      sum += m.value;
      flagged = flagged || m.flagged;
      used += m.used;
    }
    rep.angular_coverage.value = sum / static_cast<double>(n_bumps);
    rep.angular_coverage.used = used;
    rep.angular_coverage.flagged = flagged;
    if (n_bumps > 1) rep.angular_coverage.note = "mean of per-bump coverage";
    else if (flagged) rep.angular_coverage.note = "no in-band states";
  } else {
    rep.angular_coverage = flagged_zero("no bump to measure coverage about");
  }

  std::size_t reached = 0;
  std::size_t in_band = 0;
  std::vector<std::size_t> in_band_bump(n_bumps, 0);
  double length = 0.0;
  for (const Episode& ep : episodes) {
    const EpisodeStats st = episode_stats(field, band, ep);
    if (st.goal_reached) ++reached;
    if (st.in_band_steps >= kInBandSteps) ++in_band;
    for (std::size_t b = 0; b < n_bumps; ++b) {
      if (st.in_band_steps_per_bump[b] >= kInBandSteps) ++in_band_bump[b];
    }
    length += st.length;
  }
  if (!episodes.empty()) {
    const double n = static_cast<double>(episodes.size());
    rep.goal_success_rate = static_cast<double>(reached) / n;
    rep.in_band_episode_fraction = static_cast<double>(in_band) / n;
    rep.mean_episode_length = length / n;
    for (std::size_t c : in_band_bump) {
      rep.in_band_episode_fraction_per_bump.push_back(static_cast<double>(c) / n);
    }
  } else {
    rep.in_band_episode_fraction_per_bump.assign(n_bumps, 0.0);
  }
  return rep;
}

nlohmann::json to_json(const Measurement& m) {
  nlohmann::json j{{"value", m.value}, {"used", m.used}, {"excluded", m.excluded},
                   {"flagged", m.flagged}};
  if (!m.note.empty()) j["note"] = m.note;
  return j;
}

nlohmann::json to_json(const DiagnosticsReport& r) {
  return nlohmann::json{
      {"tangential_speed", to_json(r.tangential_speed)},
      {"unsafe_rate", to_json(r.unsafe_rate)},
      {"angular_coverage", to_json(r.angular_coverage)},
      {"angular_coverage_per_bump", r.angular_coverage_per_bump},
      {"off_manifold_mass", to_json(r.off_manifold_mass)},
      {"no_sticking_value", to_json(r.no_sticking_value)},
      {"goal_success_rate", r.goal_success_rate},
      {"mean_episode_length", r.mean_episode_length},
      {"in_band_episode_fraction", r.in_band_episode_fraction},
      {"in_band_episode_fraction_per_bump", r.in_band_episode_fraction_per_bump},
      {"in_band_steps_threshold", kInBandSteps},
      {"episodes", r.episodes},
      {"transitions", r.transitions},
      {"visitation_grid_resolution", r.visitation_grid.resolution},
  };
}

nlohmann::json to_json(const ConcentrationReport& r) {
  auto finite_or_null = [](double v) -> nlohmann::json {
    if (std::isfinite(v)) return v;
    return nullptr;
  };
  return nlohmann::json{
      {"eps", r.eps},
      {"measured_mass", r.measured_mass},
      {"bound", finite_or_null(r.bound)},
      {"base_reward_gap", r.base_reward_gap},
      {"v0_hat", r.v0_hat},
      {"vmax_hat", r.vmax_hat},
      {"taylor_error_run", r.taylor_error_run},
      {"taylor_error_reference", r.taylor_error_reference},
      {"b_eps", r.b_eps},
      {"curvature", r.curvature},
      {"vacuous", r.vacuous},
      {"status", to_string(r.status)},
  };
}

}  // namespace vfield::diag
