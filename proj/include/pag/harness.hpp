#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "pag/adversaries.hpp"
#include "pag/convex.hpp"
#include "pag/game.hpp"
#include "pag/learners.hpp"
#include "pag/rng.hpp"

namespace pag {

class ConsistencyViolation : public std::runtime_error {
 public:
  explicit ConsistencyViolation(const std::string& w) : std::runtime_error(w) {}
};

class DimensionTooLarge : public std::runtime_error {
 public:
  DimensionTooLarge() : std::runtime_error("reward-setting grid benchmark needs d <= 3") {}
};

enum class BenchmarkMode {
  Auto,            // exact consistent set; closed form when the env pins one
  ExactConsistent, // cost: convex programs over the consistent set; reward: theta grid
  ClosedForm,      // environment-supplied value
  LearnerBound,    // learner-body optimistic value (upper bound, documented)
};

struct RunOptions {
  BenchmarkMode mode = BenchmarkMode::Auto;
  int theta_grid = 41;          // points per free dimension (reward benchmark)
  double contract_grid = 1e-4;  // brute-force oracle resolution
  bool track_consistent_set = true;
  bool verify_containment = false;  // sample consistent set against a learner body
  std::uint64_t seed = 1;
};

// The exact consistent set: every hidden vector that reproduces the observed
// best responses. Grows one batch of halfspaces (and, in the reward setting,
// one equality) per round; redundant halfspaces are pruned by exact support
// tests so the set itself never changes.
class ConsistentSet {
 public:
  explicit ConsistentSet(int dim) : body_(ConvexBody::unit_ball(dim)) {}

  const ConvexBody& body() const { return body_; }

  void observe(const GameRound& round, double x, int chosen, std::optional<double> reward) {
    const ContextAction& taken = round.actions.at(chosen);
    for (const auto& other : round.actions) {
      if (other.id == taken.id) continue;
      Vec normal;
      double offset;
      if (round.setting == Setting::CostContext) {
        // u_taken >= u_other: <mu_t - mu_o, theta> <= -x (r_o - r_t)
        normal = taken.context - other.context;
        offset = -x * (other.known - taken.known);
      } else {
        // x <mu_o - mu_t, theta> <= c_o - c_t
        normal = x * (other.context - taken.context);
        offset = other.known - taken.known;
      }
      if (normal.norm() < 1e-12) continue;
      add_halfspace(normal, offset);
    }
    if (round.setting == Setting::RewardContext && reward) add_equality(taken.context, *reward);
  }

  bool contains(const Vec& theta, double tol) const { return body_.contains(theta, tol); }

 private:
  void add_halfspace(const Vec& normal, double offset) {
    try {
      double s = support(body_, normal).value;
      if (s <= offset + 1e-12 * std::max(1.0, std::abs(offset))) return;  // redundant
    } catch (const EmptyBodyError&) {
      return;
    }
    body_ = body_.cut(normal, offset);
    if (++since_prune_ >= 48) {
      body_ = detail::prune_redundant(body_);
      since_prune_ = 0;
    }
  }

  void add_equality(const Vec& mu, double r) {
    // skip equalities already implied by the recorded ones
    Vec res = eq_span_.cols() == 0 ? mu : Vec(mu - eq_span_ * (eq_span_.transpose() * mu));
    if (res.norm() < 1e-10 * std::max(1.0, mu.norm())) return;
    body_ = body_.slice(mu, r);
    eq_span_.conservativeResize(mu.size(), eq_span_.cols() + 1);
    eq_span_.col(eq_span_.cols() - 1) = res / res.norm();
  }

  ConvexBody body_;
  Mat eq_span_ = Mat::Zero(0, 0);
  int since_prune_ = 0;
};

struct RoundRecord {
  long t = 0;
  double x = 0.0;
  int action = 0;
  double utility = 0.0;
  double bench_hindsight = 0.0;
  double bench_optimistic = 0.0;
  double regret = 0.0;
  double regret_pess = 0.0;
  std::string branch;
  int body_constraints = 0;
  int target_action = -1;           // learner's optimistic target, when exposed
  double learner_optimistic = 0.0;  // learner-body value when exposed
  GameRound round;                  // kept for replay and hindsight filling
};

struct Trajectory {
  nlohmann::json config;
  std::vector<RoundRecord> records;
  Vec theta_hat;
  double regret = 0.0;
  double regret_pess = 0.0;
  long rounds = 0;
  bool halted = false;
  double runtime_ms = 0.0;
  long case_independent = 0;  // reward setting: A+ rounds
  long case_exploit = 0;      // reward setting: target already known
  long low_reward_rounds = 0; // cost setting: x<1 with reward gap >= 2 delta
  bool containment_ok = true;
};

// Principal utility on a contract grid plus all critical contracts; the
// brute-force oracle for opt_profit.
inline OptResult brute_force_opt_contract(const ResolvedInstance& inst, double grid_step) {
  OptResult best{0.0, best_response(inst, 0.0), principal_indirect_utility(inst, 0.0)};
  auto consider = [&](double x) {
    double v = principal_indirect_utility(inst, x);
    if (v > best.value + kTol) best = OptResult{x, best_response(inst, x), v};
  };
  for (double x = 0.0; x <= 1.0 + 1e-12; x += grid_step) consider(std::min(x, 1.0));
  for (double x : critical_contracts(inst).breakpoints) consider(x);
  return best;
}

// Pessimistic benchmark for a reward-context round: theta grid over the free
// dimensions of the consistent set, each point projected onto the body.
inline double reward_grid_benchmark(const GameRound& round, const ConvexBody& body, int grid) {
  const Reduction& red = body.reduction();
  if (red.infeasible) throw EmptyBodyError();
  const int k = red.free_dim();
  if (k > 3) throw DimensionTooLarge();
  auto eval = [&](const Vec& theta) {
    return opt_profit(resolve(round, theta, /*allow_negative=*/true)).value;
  };
  if (k == 0 || red.radius < 1e-12) return eval(red.theta0);

  double best = -std::numeric_limits<double>::infinity();
  std::vector<int> idx(k, 0);
  const double r = red.radius;
  while (true) {
    Vec y(k);
    for (int i = 0; i < k; ++i)
      y[i] = -r + 2.0 * r * idx[static_cast<std::size_t>(i)] / (grid - 1);
    Vec theta = red.lift(y);
    if (!body.contains(theta, 1e-9)) theta = project(body, theta);
    best = std::max(best, eval(theta));
    int i = 0;
    while (i < k && ++idx[static_cast<std::size_t>(i)] == grid) idx[static_cast<std::size_t>(i++)] = 0;
    if (i == k) break;
  }
  return best;
}

// Drive one learner-environment loop. The harness owns ground-truth
// accounting: it keeps the exact consistent set, fills hindsight benchmarks
// after finalize() (adaptive adversaries fix theta only at the end), and
// verifies that the finalized vector replays every observed action.
inline Trajectory run_loop(Learner& learner, Environment& env, const RunOptions& opt) {
  auto t0 = std::chrono::steady_clock::now();
  Trajectory traj;
  traj.config = {{"learner", learner.name()}, {"environment", env.config_json()},
                 {"seed", opt.seed}};

  BenchmarkMode mode = opt.mode;
  if (mode == BenchmarkMode::Auto)
    mode = env.benchmark_closed_form() ? BenchmarkMode::ClosedForm : BenchmarkMode::ExactConsistent;
  traj.config["benchmark_mode"] =
      mode == BenchmarkMode::ClosedForm
          ? "closed_form"
          : (mode == BenchmarkMode::LearnerBound ? "learner_bound" : "exact_consistent");

  const bool need_cs_for_bench = mode == BenchmarkMode::ExactConsistent;
  const bool track =
      need_cs_for_bench || (opt.track_consistent_set && mode != BenchmarkMode::LearnerBound);
  std::optional<ConsistentSet> cs;
  if (track) cs.emplace(env.dim());

  long t = 0;
  while (auto round = env.next_round()) {
    ++t;
    RoundRecord rec;
    rec.t = t;
    rec.round = *round;

    // Pi~_t(Theta^_t): consistent with rounds 1..t-1, so computed before the
    // observation below
    double bench_raw = 0.0;
    switch (mode) {
      case BenchmarkMode::ClosedForm:
        bench_raw = env.benchmark_closed_form().value();
        break;
      case BenchmarkMode::LearnerBound:
        bench_raw = 0.0;  // filled from the learner after propose
        break;
      default:
        if (round->setting == Setting::CostContext)
          bench_raw = optimistic_profit(*round, cs->body()).value;
        else
          bench_raw = reward_grid_benchmark(*round, cs->body(), opt.theta_grid);
    }

    double x = learner.propose(*round);
    auto [chosen, reward] = env.respond(x);
    learner.feedback(chosen, reward);

    if (auto lv = learner.optimistic_value()) {
      rec.learner_optimistic = *lv;
      if (mode == BenchmarkMode::LearnerBound) bench_raw = *lv;
    }

    rec.x = x;
    rec.action = chosen;
    rec.bench_optimistic = bench_raw;
    nlohmann::json snap = learner.snapshot();
    rec.branch = snap.value("branch", "");
    rec.body_constraints = static_cast<int>(snap.value("constraints", 0));
    rec.target_action = snap.value("target_action", -1);
    if (rec.branch == "cut") ++traj.low_reward_rounds;
    if (rec.branch == "exploit") ++traj.case_exploit;
    if (snap.value("took_independent", false)) ++traj.case_independent;

    if (track) cs->observe(*round, x, chosen, reward);
    traj.records.push_back(std::move(rec));
  }
  traj.rounds = t;
  traj.halted = env.is_halted();

  traj.theta_hat = env.finalize();

  // replay: the finalized vector must make every answered action a weak best
  // response (exact tie-broken equality is asserted separately in tests)
  for (auto& rec : traj.records) {
    ResolvedInstance inst = resolve(rec.round, traj.theta_hat);
    rec.utility = (1.0 - rec.x) * inst.actions[static_cast<std::size_t>(rec.action)].reward;
    double u_taken = agent_action_utility(inst.actions[static_cast<std::size_t>(rec.action)], rec.x);
    double u_best = agent_indirect_utility(inst, rec.x);
    if (u_taken < u_best - kTol)
      throw ConsistencyViolation("round " + std::to_string(rec.t) +
                                 ": answered action is not a best response under theta_hat");
    rec.bench_hindsight = opt_profit(inst).value;
    // theta_hat is itself consistent, so the hindsight value is a valid lower
    // bound for the optimistic benchmark; flooring only tightens the estimate
    rec.bench_optimistic = std::max(rec.bench_optimistic, rec.bench_hindsight);
    rec.regret = rec.bench_hindsight - rec.utility;
    rec.regret_pess = rec.bench_optimistic - rec.utility;
    traj.regret += rec.regret;
    traj.regret_pess += rec.regret_pess;
  }
  if (track && !cs->contains(traj.theta_hat, 1e-7))
    throw ConsistencyViolation("finalized vector escapes the consistent set");

  traj.runtime_ms = std::chrono::duration<double, std::milli>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
  return traj;
}

inline double stackelberg_regret(const Trajectory& t) { return t.regret; }
inline double pessimistic_regret(const Trajectory& t) { return t.regret_pess; }

// ---------------------------------------------------------------------------
// CSV / SVG output.

inline void emit_csv(const Trajectory& traj, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "t,x,action,utility,bench_hindsight,bench_optimistic,regret,regret_pess,branch\n";
  char buf[512];
  for (const auto& r : traj.records) {
    std::snprintf(buf, sizeof buf, "%ld,%.17g,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%s\n", r.t, r.x,
                  r.action, r.utility, r.bench_hindsight, r.bench_optimistic, r.regret,
                  r.regret_pess, r.branch.c_str());
    out << buf;
  }
}

struct Series {
  std::string label;
  std::vector<std::pair<double, double>> points;
};

inline void emit_svg(const std::vector<Series>& series, const std::string& path,
                     bool logx = false, bool logy = false) {
  const double W = 720, H = 480, ml = 60, mr = 20, mt = 20, mb = 40;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  auto tx = [&](double v) { return logx ? std::log10(std::max(v, 1e-300)) : v; };
  auto ty = [&](double v) { return logy ? std::log10(std::max(v, 1e-300)) : v; };
  for (const auto& s : series)
    for (auto [x, y] : s.points) {
      xmin = std::min(xmin, tx(x));
      xmax = std::max(xmax, tx(x));
      ymin = std::min(ymin, ty(y));
      ymax = std::max(ymax, ty(y));
    }
  if (!(xmax > xmin)) xmax = xmin + 1;
  if (!(ymax > ymin)) ymax = ymin + 1;
  auto px = [&](double x) { return ml + (tx(x) - xmin) / (xmax - xmin) * (W - ml - mr); };
  auto py = [&](double y) { return H - mb - (ty(y) - ymin) / (ymax - ymin) * (H - mt - mb); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<line x1=\"" << ml << "\" y1=\"" << H - mb << "\" x2=\"" << W - mr << "\" y2=\""
      << H - mb << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << H - mb
      << "\" stroke=\"black\"/>\n";
  int ci = 0;
  for (const auto& s : series) {
    out << "<polyline fill=\"none\" stroke=\"" << colors[ci % 6] << "\" stroke-width=\"1.5\" points=\"";
    for (auto [x, y] : s.points) out << px(x) << "," << py(y) << " ";
    out << "\"/>\n";
    out << "<text x=\"" << ml + 8 << "\" y=\"" << mt + 16 + 16 * ci << "\" fill=\"" << colors[ci % 6]
        << "\" font-size=\"12\">" << s.label << "</text>\n";
    ++ci;
  }
  out << "</svg>\n";
}

// ---------------------------------------------------------------------------
// Config-driven construction and the scaling experiment.

struct RunConfig {
  std::string setting = "cost";   // cost | reward
  std::string learner = "alg1";   // alg1 | alg2 | fixed:<x> | random | greedy | reduction
  std::string environment = "random";  // adv1..adv5 | random | two_action
  long T = 1000;
  int d = 2;
  std::optional<double> delta;        // learner override
  std::optional<double> adv_delta;    // environment delta
  std::optional<long> K;
  double cost_floor = 0.1;
  std::uint64_t seed = 1;
  RunOptions options;

  nlohmann::json to_json() const {
    return {{"setting", setting}, {"learner", learner}, {"environment", environment},
            {"T", T},           {"d", d},             {"cost_floor", cost_floor},
            {"seed", seed}};
  }

  static RunConfig from_json(const nlohmann::json& j) {
    RunConfig c;
    c.setting = j.value("setting", c.setting);
    c.learner = j.value("learner", c.learner);
    c.environment = j.value("environment", c.environment);
    c.T = j.value("T", c.T);
    c.d = j.value("d", c.d);
    if (j.contains("delta")) c.delta = j["delta"].get<double>();
    if (j.contains("adv_delta")) c.adv_delta = j["adv_delta"].get<double>();
    if (j.contains("K")) c.K = j["K"].get<long>();
    c.cost_floor = j.value("cost_floor", c.cost_floor);
    c.seed = j.value("seed", c.seed);
    c.options.seed = c.seed;
    if (j.contains("theta_grid")) c.options.theta_grid = j["theta_grid"].get<int>();
    return c;
  }
};

inline Setting parse_setting(const std::string& s) {
  if (s == "cost") return Setting::CostContext;
  if (s == "reward") return Setting::RewardContext;
  throw std::invalid_argument("setting must be cost or reward");
}

inline std::unique_ptr<Environment> make_environment(const RunConfig& cfg) {
  Setting setting = parse_setting(cfg.setting);
  AdversaryConfig ac;
  ac.T = cfg.T;
  ac.d = cfg.d;
  ac.seed = cfg.seed;
  if (cfg.adv_delta) ac.delta = *cfg.adv_delta;
  ac.K = cfg.K;
  if (cfg.environment == "adv1") {
    if (cfg.d != 2) throw std::invalid_argument("adversary 1 is the d = 2 construction");
    return make_adversary_three_action(cfg.T, cfg.adv_delta.value_or(0.25 * std::pow(cfg.T, -0.25)));
  }
  if (cfg.environment == "adv2") return make_adversary_cost_opt(ac);
  if (cfg.environment == "adv3") return make_adversary_reward_opt(ac);
  if (cfg.environment == "adv4") return make_adversary_cost_stackelberg(ac);
  if (cfg.environment == "adv5") return make_adversary_reward_stackelberg(ac);
  if (cfg.environment == "two_action") return make_two_action_environment(cfg.d, cfg.T, cfg.seed);
  if (cfg.environment == "random")
    return make_random_environment(cfg.d, cfg.T, cfg.seed, setting, cfg.cost_floor);
  throw std::invalid_argument("unknown environment " + cfg.environment);
}

inline std::unique_ptr<Learner> make_learner(const RunConfig& cfg) {
  Setting setting = parse_setting(cfg.setting);
  if (cfg.learner == "alg1") {
    if (setting != Setting::CostContext) throw std::invalid_argument("alg1 needs the cost setting");
    double delta = cfg.delta.value_or(delta_schedule_cost(cfg.d, cfg.T));
    return std::make_unique<Alg1Learner>(cfg.d, delta);
  }
  if (cfg.learner == "alg2") {
    if (setting != Setting::RewardContext) throw std::invalid_argument("alg2 needs the reward setting");
    double delta = cfg.delta.value_or(delta_schedule_reward(cfg.d, cfg.T, cfg.cost_floor));
    return std::make_unique<Alg2Learner>(cfg.d, delta, cfg.cost_floor);
  }
  if (cfg.learner.rfind("fixed", 0) == 0) {
    double x = 0.5;
    auto pos = cfg.learner.find(':');
    if (pos != std::string::npos) x = std::stod(cfg.learner.substr(pos + 1));
    return std::make_unique<FixedContract>(x);
  }
  if (cfg.learner == "random") return std::make_unique<RandomContract>(cfg.seed ^ 0xabcdef);
  if (cfg.learner == "greedy") return make_greedy_myopic(setting, cfg.d);
  if (cfg.learner == "reduction")
    return std::make_unique<PricingReductionLearner>(
        cfg.d, std::make_unique<MidpointPricing>(cfg.d + 1));
  throw std::invalid_argument("unknown learner " + cfg.learner);
}

inline Trajectory run(const RunConfig& cfg) {
  auto env = make_environment(cfg);
  auto learner = make_learner(cfg);
  Trajectory traj = run_loop(*learner, *env, cfg.options);
  traj.config["run_config"] = cfg.to_json();
  return traj;
}

// Simple work pool over independent jobs; each job writes its own slot.
template <class Fn>
inline void parallel_for(int jobs, Fn&& fn, int threads = 0) {
  if (threads <= 0) threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  threads = std::min(threads, jobs);
  if (threads <= 1) {
    for (int i = 0; i < jobs; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  for (int w = 0; w < threads; ++w)
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < jobs; i = next.fetch_add(1)) fn(i);
    });
  for (auto& th : pool) th.join();
}

struct ScalingRow {
  long T = 0;
  double mean_regret = 0.0;
  double mean_regret_pess = 0.0;
};

struct ScalingResult {
  std::vector<ScalingRow> rows;
  double slope_regret = 0.0;       // least squares on log regret vs log T
  double slope_regret_pess = 0.0;
};

inline ScalingResult scaling_experiment(const RunConfig& tmpl, const std::vector<long>& T_list,
                                        const std::vector<std::uint64_t>& seeds,
                                        const std::string& csv_path = "",
                                        const std::string& svg_path = "") {
  const int cells = static_cast<int>(T_list.size() * seeds.size());
  std::vector<Trajectory> out(static_cast<std::size_t>(cells));
  parallel_for(cells, [&](int i) {
    RunConfig cfg = tmpl;
    cfg.T = T_list[static_cast<std::size_t>(i) / seeds.size()];
    cfg.seed = seeds[static_cast<std::size_t>(i) % seeds.size()];
    cfg.options.seed = cfg.seed;
    out[static_cast<std::size_t>(i)] = run(cfg);
  });

  ScalingResult res;
  for (std::size_t ti = 0; ti < T_list.size(); ++ti) {
    ScalingRow row;
    row.T = T_list[ti];
    for (std::size_t si = 0; si < seeds.size(); ++si) {
      const auto& tr = out[ti * seeds.size() + si];
      row.mean_regret += tr.regret / seeds.size();
      row.mean_regret_pess += tr.regret_pess / seeds.size();
    }
    res.rows.push_back(row);
  }
  auto fit = [&](auto getter) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = static_cast<int>(res.rows.size());
    for (const auto& r : res.rows) {
      double lx = std::log(static_cast<double>(r.T));
      double ly = std::log(std::max(getter(r), 1e-12));
      sx += lx;
      sy += ly;
      sxx += lx * lx;
      sxy += lx * ly;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
  };
  res.slope_regret = fit([](const ScalingRow& r) { return r.mean_regret; });
  res.slope_regret_pess = fit([](const ScalingRow& r) { return r.mean_regret_pess; });

  if (!csv_path.empty()) {
    std::ofstream out_csv(csv_path);
    out_csv << "T,mean_regret,mean_regret_pess\n";
    for (const auto& r : res.rows)
      out_csv << r.T << "," << r.mean_regret << "," << r.mean_regret_pess << "\n";
    out_csv << "# slope_regret=" << res.slope_regret
            << " slope_regret_pess=" << res.slope_regret_pess << "\n";
  }
  if (!svg_path.empty()) {
    Series s1{"regret", {}}, s2{"regret_pess", {}};
    for (const auto& r : res.rows) {
      s1.points.emplace_back(static_cast<double>(r.T), std::max(r.mean_regret, 1e-12));
      s2.points.emplace_back(static_cast<double>(r.T), std::max(r.mean_regret_pess, 1e-12));
    }
    emit_svg({s1, s2}, svg_path, true, true);
  }
  return res;
}

inline std::string default_out_dir() {
  const char* env = std::getenv("PAGLAB_OUT");
  return env && *env ? std::string(env) : std::string(".");
}

}  // namespace pag
