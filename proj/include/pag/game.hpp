#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace pag {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Absolute tolerance for utility / contract comparisons throughout the game
// layer. Breakpoints are computed in closed form, never by grid search.
inline constexpr double kTol = 1e-9;

enum class Setting { CostContext, RewardContext };

// One fully specified action: the principal earns reward, the agent pays cost.
struct Action {
  int id = 0;
  double reward = 0.0;
  double cost = 0.0;
};

// Per-round action data as the principal sees it: the known scalar is the
// reward in the cost-context setting and the cost in the reward-context
// setting; the other side is <context, theta_hat>.
struct ContextAction {
  int id = 0;
  double known = 0.0;
  Vec context;
};

struct GameRound {
  Setting setting = Setting::CostContext;
  std::vector<ContextAction> actions;

  int dim() const { return actions.empty() ? 0 : static_cast<int>(actions.front().context.size()); }

  void validate() const {
    if (actions.empty() || actions.front().id != 0)
      throw std::invalid_argument("round must start with the trivial action 0");
    if (std::abs(actions.front().known) > 1e-12 || actions.front().context.norm() > 1e-12)
      throw std::invalid_argument("action 0 must have zero scalar and zero context");
    for (const auto& a : actions) {
      if (a.context.size() != actions.front().context.size())
        throw std::invalid_argument("context dimensions disagree");
      if (a.context.norm() > 1.0 + 1e-9)
        throw std::invalid_argument("context norm exceeds 1");
      if (a.known < -1e-12) throw std::invalid_argument("negative known scalar");
    }
  }
};

struct ResolvedInstance {
  std::vector<Action> actions;
};

class NegativeResolvedValue : public std::runtime_error {
 public:
  explicit NegativeResolvedValue(const std::string& what) : std::runtime_error(what) {}
};

// Fills in the hidden side of a round from theta. With allow_negative the
// caller accepts hypothetical thetas that resolve below zero (benchmark
// grids); the model itself promises nonnegative values only for the true
// hidden vector.
inline ResolvedInstance resolve(const GameRound& round, const Vec& theta,
                                bool allow_negative = false) {
  ResolvedInstance inst;
  inst.actions.reserve(round.actions.size());
  for (std::size_t i = 0; i < round.actions.size(); ++i) {
    const ContextAction& a = round.actions[i];
    if (a.id != static_cast<int>(i)) throw std::invalid_argument("ids must be contiguous from 0");
    double hidden = a.context.size() == 0 ? 0.0 : a.context.dot(theta);
    Action out;
    out.id = a.id;
    if (round.setting == Setting::CostContext) {
      out.cost = hidden;
      out.reward = a.known;
    } else {
      out.reward = hidden;
      out.cost = a.known;
    }
    if (!allow_negative && (out.cost < -kTol || out.reward < -kTol))
      throw NegativeResolvedValue("resolved value below zero for action " + std::to_string(a.id));
    inst.actions.push_back(out);
  }
  return inst;
}

inline double agent_action_utility(const Action& a, double x) { return x * a.reward - a.cost; }

// Best response with the full tie-break: agent utility, then principal
// utility (ties go to the principal), then lowest id. Scanning in id order
// makes the final tie-break implicit.
inline int best_response(const ResolvedInstance& inst, double x) {
  int best = 0;
  for (std::size_t i = 1; i < inst.actions.size(); ++i) {
    const Action& a = inst.actions[i];
    const Action& b = inst.actions[best];
    double ua = agent_action_utility(a, x);
    double ub = agent_action_utility(b, x);
    if (ua > ub + kTol) {
      best = a.id;
      continue;
    }
    if (ua < ub - kTol) continue;
    double pa = (1.0 - x) * a.reward;
    double pb = (1.0 - x) * b.reward;
    if (pa > pb + kTol) best = a.id;
  }
  return best;
}

inline double agent_indirect_utility(const ResolvedInstance& inst, double x) {
  double u = 0.0;
  for (const auto& a : inst.actions) u = std::max(u, agent_action_utility(a, x));
  return u;
}

inline double principal_indirect_utility(const ResolvedInstance& inst, double x) {
  return (1.0 - x) * inst.actions[best_response(inst, x)].reward;
}

// Upper-envelope breakpoints of the agent's indirect utility on [0,1] and the
// action induced on each segment. breakpoints.size() == actions.size() + 1.
struct Envelope {
  std::vector<double> breakpoints;
  std::vector<int> actions;
};

inline Envelope critical_contracts(const ResolvedInstance& inst) {
  if (inst.actions.empty()) throw std::invalid_argument("empty instance");
  std::vector<double> xs{0.0, 1.0};
  const std::size_t n = inst.actions.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double dr = inst.actions[i].reward - inst.actions[j].reward;
      if (std::abs(dr) < 1e-12) continue;
      double x = (inst.actions[i].cost - inst.actions[j].cost) / dr;
      if (x > 1e-12 && x < 1.0 - 1e-12) xs.push_back(x);
    }
  }
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end(),
                       [](double a, double b) { return std::abs(a - b) < 1e-12; }),
           xs.end());

  Envelope env;
  env.breakpoints.push_back(0.0);
  int prev = -1;
  for (std::size_t k = 0; k + 1 < xs.size(); ++k) {
    double mid = 0.5 * (xs[k] + xs[k + 1]);
    int act = best_response(inst, mid);
    if (act == prev) continue;
    if (prev >= 0) env.breakpoints.push_back(xs[k]);
    env.actions.push_back(act);
    prev = act;
  }
  env.breakpoints.push_back(1.0);
  return env;
}

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

// The closed set of contracts under which `a` is a weak best response;
// nullopt iff the action is degenerated (never on the envelope).
inline std::optional<Interval> implementable_interval(const ResolvedInstance& inst, int a) {
  const Action& act = inst.actions.at(a);
  double lo = 0.0, hi = 1.0;
  for (const auto& other : inst.actions) {
    if (other.id == act.id) continue;
    double dr = act.reward - other.reward;
    double dc = act.cost - other.cost;
    if (std::abs(dr) < 1e-12) {
      if (dc > 1e-12) return std::nullopt;  // same reward, strictly costlier
      continue;
    }
    double x = dc / dr;
    if (dr > 0.0)
      lo = std::max(lo, x);
    else
      hi = std::min(hi, x);
  }
  if (lo > hi + 1e-12) return std::nullopt;
  lo = std::clamp(lo, 0.0, 1.0);
  hi = std::clamp(hi, lo, 1.0);
  return Interval{lo, hi};
}

inline std::optional<double> min_pay_contract(const ResolvedInstance& inst, int a) {
  auto iv = implementable_interval(inst, a);
  if (!iv) return std::nullopt;
  return iv->lo;
}

struct OptResult {
  double x = 0.0;
  int action = 0;
  double value = 0.0;
};

// Maximum principal utility. The optimum sits at a critical contract, so only
// breakpoints are searched; ties break toward the smaller x.
inline OptResult opt_profit(const ResolvedInstance& inst) {
  Envelope env = critical_contracts(inst);
  OptResult best{0.0, best_response(inst, 0.0), principal_indirect_utility(inst, 0.0)};
  for (double x : env.breakpoints) {
    double v = principal_indirect_utility(inst, x);
    if (v > best.value + kTol) best = OptResult{x, best_response(inst, x), v};
  }
  return best;
}

// Max principal utility achievable while incentivizing a specific action:
// (1 - min_pay) * reward, or nullopt when the action is degenerated.
inline std::optional<OptResult> opt_profit_from_action(const ResolvedInstance& inst, int a) {
  auto iv = implementable_interval(inst, a);
  if (!iv) return std::nullopt;
  return OptResult{iv->lo, a, (1.0 - iv->lo) * inst.actions.at(a).reward};
}

}  // namespace pag
