#pragma once

// Euler-Maruyama simulation on a grid aligned with the period, the chain of
// T-segments, the short-window fluctuation probe and path persistence.

#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "phasediff/errors.hpp"
#include "phasediff/model.hpp"
#include "phasediff/parallel.hpp"
#include "phasediff/rng.hpp"
#include "phasediff/stats.hpp"

namespace phasediff {

// A trajectory xi(t0 + i * dt) on a grid with dt = T / steps_per_period.
// t0 is itself a grid point (first_step * dt), so the phase of every sample is
// an exact multiple of dt.
struct PathGrid {
  DiffusionModel model;
  int steps_per_period = 0;
  std::int64_t first_step = 0;
  std::vector<double> values;
  std::uint64_t seed = 0;
  std::string scheme = "euler";

  double dt() const { return model.period() / steps_per_period; }
  double t0() const { return static_cast<double>(first_step) * dt(); }
  double time(std::size_t i) const { return static_cast<double>(first_step + static_cast<std::int64_t>(i)) * dt(); }
  std::size_t steps() const { return values.empty() ? 0 : values.size() - 1; }

  int phase_index(std::size_t i) const {
    return static_cast<int>((first_step + static_cast<std::int64_t>(i)) % steps_per_period);
  }
  double phase(std::size_t i) const { return phase_index(i) * dt(); }

  bool whole_periods() const {
    return first_step % steps_per_period == 0 && steps() % steps_per_period == 0 && steps() > 0;
  }
  std::size_t n_periods() const { return steps() / static_cast<std::size_t>(steps_per_period); }
};

namespace detail {

// S(zeta, p * dt) for every phase index p of one period.
inline std::vector<double> signal_table(const SignalSpec& signal, int steps_per_period,
                                        double zeta) {
  const double dt = signal.period() / steps_per_period;
  std::vector<double> table(static_cast<std::size_t>(steps_per_period));
  for (int p = 0; p < steps_per_period; ++p) table[p] = signal.at_phase(p * dt, zeta);
  return table;
}

inline void check_grid(int steps_per_period) {
  if (steps_per_period < 1) throw DomainError("steps_per_period must be positive");
}

}  // namespace detail

// xi_{i+1} = xi_i + [S(theta, t_i) + b(xi_i)] dt + sigma(xi_i) sqrt(dt) Z_i with
// Z_i element i of the normal stream keyed by seed. The run starts at the grid
// point first_step (t0 = first_step * dt) and covers n_periods whole periods.
inline PathGrid simulate_path(const DiffusionModel& model, double x0, std::size_t n_periods,
                              int steps_per_period, std::uint64_t seed,
                              std::int64_t first_step = 0) {
  detail::check_grid(steps_per_period);
  if (n_periods == 0) throw DomainError("n_periods must be positive");
  if (!std::isfinite(x0)) throw DomainError("x0 must be finite");
  PathGrid path{model, steps_per_period, first_step, {}, seed, "euler"};
  const std::size_t steps = n_periods * static_cast<std::size_t>(steps_per_period);
  path.values.resize(steps + 1);
  const auto table = detail::signal_table(model.signal(), steps_per_period, model.theta());
  const double dt = path.dt();
  const double sqdt = std::sqrt(dt);
  const CoefFn& b = model.drift();
  const CoefFn& sigma = model.sigma();
  NormalStream noise(seed, StreamTag::kPathNoise);
  double x = x0;
  path.values[0] = x;
  int p = static_cast<int>(first_step % steps_per_period);
  for (std::size_t i = 0; i < steps; ++i) {
    x += (table[p] + b(x)) * dt + sigma(x) * sqdt * noise();
    if (!std::isfinite(x)) throw SimulationError("non-finite value in Euler scheme", i + 1);
    path.values[i + 1] = x;
    if (++p == steps_per_period) p = 0;
  }
  return path;
}

// Burn-in periods used before sampling the oscillating stationary regime:
// max(20, ceil(10 / (gamma T))) for affine drift, 20 otherwise.
inline std::size_t default_burn_in(const DiffusionModel& model) {
  if (!model.ou_type()) return 20;
  const double mixing = std::ceil(10.0 / (model.drift().p1() * model.period()));
  return std::max<std::size_t>(20, static_cast<std::size_t>(mixing));
}

// Simulates burn_in + n_periods periods from x0 and keeps the last n_periods,
// with the time origin of the kept part at burn_in * T.
inline PathGrid simulate_stationary(const DiffusionModel& model, std::size_t n_periods,
                                    int steps_per_period, std::uint64_t seed,
                                    std::size_t burn_in, double x0 = 0.0) {
  PathGrid full = simulate_path(model, x0, burn_in + n_periods, steps_per_period, seed);
  if (burn_in == 0) return full;
  const std::size_t skip = burn_in * static_cast<std::size_t>(steps_per_period);
  full.values.erase(full.values.begin(), full.values.begin() + static_cast<std::ptrdiff_t>(skip));
  full.first_step = static_cast<std::int64_t>(skip);
  return full;
}

// X_k = (xi_{(k-1)T + s})_{0 <= s <= T} as views into the path. Consecutive
// segments share their boundary sample.
class SegmentChain {
 public:
  explicit SegmentChain(const PathGrid& path) : path_(&path) {
    if (!path.whole_periods()) throw DomainError("path does not cover whole periods");
  }

  std::size_t count() const { return path_->n_periods(); }
  std::size_t points_per_segment() const { return static_cast<std::size_t>(path_->steps_per_period) + 1; }

  std::span<const double> operator[](std::size_t k) const {
    if (k >= count()) throw DomainError("segment index out of range");
    const auto n = static_cast<std::size_t>(path_->steps_per_period);
    return std::span<const double>(path_->values).subspan(k * n, n + 1);
  }

 private:
  const PathGrid* path_;
};

inline SegmentChain extract_segments(const PathGrid& path) { return SegmentChain(path); }

// Samples xi_{kT + r} for every period k of a whole-period path; r must be a
// grid phase.
inline std::vector<double> sample_at_phase(const PathGrid& path, double r) {
  const double idx = r / path.dt();
  const auto p = static_cast<std::size_t>(std::llround(idx));
  if (std::abs(idx - static_cast<double>(p)) > 1e-9 || p > static_cast<std::size_t>(path.steps_per_period))
    throw DomainError("phase r is not a grid point");
  SegmentChain chain(path);
  std::vector<double> out;
  out.reserve(chain.count());
  for (std::size_t k = 0; k < chain.count(); ++k) out.push_back(chain[k][p]);
  return out;
}

struct FluctuationProbeOptions {
  std::size_t burn_in_periods = 20;
  int steps_per_period = 1000;
  int window_steps = 400;
};

// Monte Carlo estimate of
//   P( sup_{t1 <= t <= t1 + delta} |xi_t - xi_t1| > delta^lambda_exp, |xi_t1| <= delta^-eta_exp )
// with the process started from a burn-in draw at time 0. The window is
// resolved with window_steps Euler steps of size delta / window_steps.
inline stats::Proportion fluctuation_probe(const DiffusionModel& model, double t1, double delta,
                                           double lambda_exp, double eta_exp,
                                           std::size_t replicates, std::uint64_t seed,
                                           const FluctuationProbeOptions& opt = {}) {
  if (!(t1 >= 0.0)) throw DomainError("fluctuation_probe: t1 must be nonnegative");
  if (!(delta > 0.0)) throw DomainError("fluctuation_probe: delta must be positive");
  if (!(lambda_exp > 0.0 && lambda_exp < 0.5)) throw DomainError("lambda_exp must lie in (0, 1/2)");
  if (!(eta_exp > 0.5 && eta_exp < 1.0 - lambda_exp))
    throw DomainError("eta_exp must lie in (1/2, 1 - lambda_exp)");
  if (replicates == 0) throw DomainError("fluctuation_probe: replicates must be positive");
  const double threshold = std::pow(delta, lambda_exp);
  const double level = std::pow(delta, -eta_exp);
  const SignalSpec& sig = model.signal();
  const double period = model.period();
  const double dt = period / opt.steps_per_period;
  const double dtw = delta / opt.window_steps;

  auto hit = map_replicates<char>(replicates, [&](std::size_t rep) -> char {
    const std::uint64_t child = seed_stream(seed, rep);
    NormalStream noise(child, StreamTag::kPathNoise);
    auto step = [&](double x, double t, double h) {
      const double s = sig.at_phase(reduce_phase(t, period), model.theta());
      return x + (s + model.drift()(x)) * h + model.sigma()(x) * std::sqrt(h) * noise();
    };
    double x = 0.0;
    const auto burn_steps = opt.burn_in_periods * static_cast<std::size_t>(opt.steps_per_period);
    for (std::size_t i = 0; i < burn_steps; ++i) x = step(x, static_cast<double>(i) * dt, dt);
    // time origin restarts at the end of the burn-in (a period boundary)
    const auto whole = static_cast<std::size_t>(std::floor(t1 / dt));
    for (std::size_t i = 0; i < whole; ++i) x = step(x, static_cast<double>(i) * dt, dt);
    const double rest = t1 - static_cast<double>(whole) * dt;
    if (rest > 0.0) x = step(x, static_cast<double>(whole) * dt, rest);
    if (!std::isfinite(x)) throw SimulationError("non-finite value in fluctuation probe", rep);
    const double x1 = x;
    double sup = 0.0;
    for (int i = 0; i < opt.window_steps; ++i) {
      x = step(x, t1 + i * dtw, dtw);
      sup = std::max(sup, std::abs(x - x1));
    }
    return (sup > threshold && std::abs(x1) <= level) ? 1 : 0;
  });
  std::size_t hits = 0;
  for (char h : hit) hits += static_cast<std::size_t>(h);
  return stats::proportion(hits, replicates);
}

// --- persistence -----------------------------------------------------------

// CSV with '# key=value' metadata lines, then header "t,x" and one row per
// grid point at 17 significant digits (round-trips every double exactly).
inline std::string path_to_csv(const PathGrid& path) {
  std::string out;
  for (const auto& [k, v] : path.model.describe()) out += "# " + k + "=" + v + "\n";
  out += "# steps_per_period=" + std::to_string(path.steps_per_period) + "\n";
  out += "# first_step=" + std::to_string(path.first_step) + "\n";
  out += "# dt=" + format_g17(path.dt()) + "\n";
  out += "# seed=" + std::to_string(path.seed) + "\n";
  out += "# scheme=" + path.scheme + "\n";
  out += "t,x\n";
  for (std::size_t i = 0; i < path.values.size(); ++i)
    out += format_g17(path.time(i)) + "," + format_g17(path.values[i]) + "\n";
  return out;
}

inline DiffusionModel model_from_keys(const std::map<std::string, std::string>& kv) {
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw DomainError("missing key " + key);
    return it->second;
  };
  auto num = [&](const std::string& key) {
    const std::string& s = get(key);
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw DomainError("bad number for " + key + ": " + s);
    return v;
  };
  const double T = num("model.T");
  SignalSpec signal(PeriodicFn::parse(get("model.lambda"), T),
                    PeriodicFn::parse(get("model.lambda_star"), T), T, num("model.a"),
                    num("model.theta"));
  return DiffusionModel(signal, CoefFn::parse(get("model.b")), CoefFn::parse(get("model.sigma")));
}

inline PathGrid path_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::map<std::string, std::string> meta;
  bool header = false;
  std::vector<double> times, values;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      std::string key = line.substr(1, eq - 1);
      while (!key.empty() && key.front() == ' ') key.erase(key.begin());
      meta[key] = line.substr(eq + 1);
      continue;
    }
    if (!header) {
      if (line != "t,x") throw DomainError("line " + std::to_string(lineno) + ": expected header t,x");
      header = true;
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw DomainError("line " + std::to_string(lineno) + ": expected t,x");
    char* end = nullptr;
    times.push_back(std::strtod(line.c_str(), &end));
    values.push_back(std::strtod(line.c_str() + comma + 1, &end));
    if (*end != '\0') throw DomainError("line " + std::to_string(lineno) + ": trailing characters");
  }
  if (!header || values.empty()) throw DomainError("path CSV has no data");
  PathGrid path{model_from_keys(meta), 0, 0, std::move(values), 0, "euler"};
  path.steps_per_period = std::stoi(meta.at("steps_per_period"));
  path.first_step = meta.count("first_step") ? std::stoll(meta.at("first_step")) : 0;
  path.seed = meta.count("seed") ? std::stoull(meta.at("seed")) : 0;
  path.scheme = meta.count("scheme") ? meta.at("scheme") : "euler";
  for (std::size_t i = 0; i < times.size(); ++i)
    if (std::abs(times[i] - path.time(i)) > 1e-9 * std::max(1.0, std::abs(times[i])))
      throw DomainError("time column does not match the declared grid at row " + std::to_string(i));
  return path;
}

}  // namespace phasediff
