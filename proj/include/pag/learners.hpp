#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "pag/convex.hpp"
#include "pag/game.hpp"
#include "pag/rng.hpp"

namespace pag {

class ProtocolError : public std::runtime_error {
 public:
  explicit ProtocolError(const std::string& w) : std::runtime_error(w) {}
};

class NoSmallerCost : public std::runtime_error {
 public:
  NoSmallerCost() : std::runtime_error("no known action with strictly smaller cost") {}
};

// Uniform online-learner contract: propose and feedback strictly alternate;
// the revealed reward is present exactly in the reward-context setting.
class Learner {
 public:
  virtual ~Learner() = default;
  virtual std::string name() const = 0;
  virtual double propose(const GameRound& round) = 0;
  virtual void feedback(int chosen, std::optional<double> revealed_reward) = 0;
  virtual nlohmann::json snapshot() const { return {{"name", name()}}; }

  // optimistic value of the learner's own body, when it maintains one;
  // used by the harness's documented upper-bound benchmark mode
  virtual std::optional<double> optimistic_value() const { return std::nullopt; }

 protected:
  void begin_propose() {
    if (awaiting_feedback_) throw ProtocolError("propose called twice without feedback");
    awaiting_feedback_ = true;
  }
  void begin_feedback() {
    if (!awaiting_feedback_) throw ProtocolError("feedback without a pending proposal");
    awaiting_feedback_ = false;
  }

 private:
  bool awaiting_feedback_ = false;
};

// Theorem-pinned schedule for the cost-context algorithm.
inline double delta_schedule_cost(int d, long T) {
  double dd = d;
  double v = std::pow(2.0 * std::numbers::pi, dd / (4.0 * dd + 2.0)) *
             std::pow(dd, (dd + 4.0) / (4.0 * dd + 2.0)) *
             std::pow(static_cast<double>(T), -1.0 / (2.0 * dd + 1.0));
  return std::min(v, 0.5);
}

// Theorem-pinned schedule for the reward-context algorithm.
inline double delta_schedule_reward(int d, long T, double cost_floor) {
  if (cost_floor <= 0.0) throw std::invalid_argument("cost floor must be positive");
  double dd = d;
  return std::sqrt(3.0 * cost_floor) * std::pow(dd, 0.25 + 1.0 / dd) /
         std::pow(static_cast<double>(T), 1.0 / (2.0 * dd));
}

// Smallest cost excess of `c_star` over the cheaper known actions.
inline double left_cost_gap(const ResolvedInstance& known, double c_star) {
  double gap = std::numeric_limits<double>::infinity();
  for (const auto& a : known.actions)
    if (a.cost < c_star - 1e-12) gap = std::min(gap, c_star - a.cost);
  if (!std::isfinite(gap)) throw NoSmallerCost();
  return gap;
}

struct NonDegenResult {
  double reward = 0.0;    // smallest reward making the action implementable
  double contract = 0.0;  // leftmost contract doing so
};

// Minimum over x in (0,1] of (U_known(x) + c_star) / x. Each envelope segment
// is monotone in x, so the minimum sits at a breakpoint or at x = 1.
inline NonDegenResult non_degenerating_reward(const ResolvedInstance& known, double c_star) {
  if (known.actions.empty()) throw std::invalid_argument("empty known instance");
  if (c_star <= 0.0) throw std::invalid_argument("c_star must be positive");
  Envelope env = critical_contracts(known);
  std::vector<double> xs;
  for (double x : env.breakpoints)
    if (x > 1e-12) xs.push_back(x);
  if (xs.empty() || xs.back() < 1.0 - 1e-12) xs.push_back(1.0);
  NonDegenResult best{std::numeric_limits<double>::infinity(), 1.0};
  for (double x : xs) {
    double r = (agent_indirect_utility(known, x) + c_star) / x;
    if (r < best.reward - 1e-12) best = NonDegenResult{r, x};
  }
  return best;
}

namespace detail {

// Support-redundancy pruning: removes halfspaces that do not change the set.
inline ConvexBody prune_redundant(const ConvexBody& body) {
  const auto& hs = body.halfspaces();
  if (hs.size() < 8) return body;
  std::vector<bool> keep(hs.size(), true);
  for (std::size_t i = 0; i < hs.size(); ++i) {
    keep[i] = false;
    ConvexBody rest = body.drop_halfspaces(keep);
    keep[i] = true;
    try {
      double s = support(rest, hs[i].normal).value;
      if (s <= hs[i].offset + 1e-12 * std::max(1.0, std::abs(hs[i].offset))) keep[i] = false;
    } catch (const EmptyBodyError&) {
      keep[i] = false;  // rest is already empty; the cut adds nothing
    }
  }
  return body.drop_halfspaces(keep);
}

}  // namespace detail

// Cost-context optimism: propose the optimistic min-pay contract plus a
// padding Delta; on a lower-reward response, cut the hypothesis set along the
// indifference context of the taken and targeted actions.
class Alg1Learner : public Learner {
 public:
  Alg1Learner(int dim, double delta)
      : body_(ConvexBody::unit_ball(dim)), delta_(delta) {}
  static Alg1Learner scheduled(int dim, long T) { return Alg1Learner(dim, delta_schedule_cost(dim, T)); }

  std::string name() const override { return delta_ == 0.0 ? "greedy_myopic" : "alg1"; }
  double delta() const { return delta_; }
  const ConvexBody& body() const { return body_; }

  double propose(const GameRound& round) override {
    if (round.setting != Setting::CostContext) throw std::invalid_argument("alg1 is cost-context");
    begin_propose();
    round_ = round;
    opt_ = optimistic_profit(round, body_);
    x_t_ = std::min(opt_.x + delta_, 1.0);
    return x_t_;
  }

  void feedback(int chosen, std::optional<double>) override {
    begin_feedback();
    const auto& taken = round_.actions.at(chosen);
    const auto& target = round_.actions.at(opt_.action);
    last_branch_ = "keep";
    if (taken.known < target.known - 1e-12) {
      Vec xi = (taken.context - target.context) / (taken.known - target.known);
      body_ = body_.cut(Vec(-xi), -x_t_);  // <xi, theta> >= x_t
      last_branch_ = "cut";
      if (++cuts_since_prune_ >= 64) {
        body_ = detail::prune_redundant(body_);
        cuts_since_prune_ = 0;
      }
    }
  }

  std::optional<double> optimistic_value() const override { return opt_.value; }

  nlohmann::json snapshot() const override {
    return {{"name", name()},
            {"delta", delta_},
            {"constraints", body_.halfspaces().size()},
            {"target_action", opt_.action},
            {"x_star", opt_.x},
            {"optimistic_value", opt_.value},
            {"branch", last_branch_},
            {"body", body_.to_json()}};
  }

 private:
  ConvexBody body_;
  double delta_;
  GameRound round_;
  OptimisticResult opt_;
  double x_t_ = 0.0;
  int cuts_since_prune_ = 0;
  std::string last_branch_ = "none";
};

// Reward-context maximal learning. Partitions actions by span membership of
// their contexts, targets the action with the best optimistic profit, and
// picks the branch by the left cost gap.
class Alg2Learner : public Learner {
 public:
  Alg2Learner(int dim, double delta, double cost_floor = 0.1)
      : body_(ConvexBody::unit_ball(dim)),
        span_(Mat::Zero(dim, 0)),
        delta_(delta),
        cost_floor_(cost_floor) {}
  static Alg2Learner scheduled(int dim, long T, double cost_floor) {
    return Alg2Learner(dim, delta_schedule_reward(dim, T, cost_floor), cost_floor);
  }

  std::string name() const override { return "alg2"; }
  double delta() const { return delta_; }
  const ConvexBody& body() const { return body_; }
  int span_dim() const { return static_cast<int>(span_.cols()); }
  const std::string& branch() const { return branch_; }
  bool representative_missing_seen() const { return representative_missing_seen_; }

  double propose(const GameRound& round) override {
    if (round.setting != Setting::RewardContext) throw std::invalid_argument("alg2 is reward-context");
    begin_propose();
    round_ = round;
    const int n = static_cast<int>(round.actions.size());

    in_span_.assign(n, false);
    for (int a = 0; a < n; ++a) in_span_[a] = span_residual(round.actions[a].context) < span_tol(round.actions[a].context);

    Vec center = analytic_center(body_);

    // known instance over A-: rewards pinned by the revealed-reward slices
    known_ids_.clear();
    ResolvedInstance known;
    for (int a = 0; a < n; ++a) {
      if (!in_span_[a]) continue;
      Action act;
      act.id = static_cast<int>(known.actions.size());
      act.cost = round.actions[a].known;
      act.reward = std::max(0.0, round.actions[a].context.dot(center));
      known.actions.push_back(act);
      known_ids_.push_back(a);
    }
    // remove degenerated known actions (keep the trivial action)
    {
      ResolvedInstance filtered;
      std::vector<int> ids;
      for (std::size_t i = 0; i < known.actions.size(); ++i) {
        if (known_ids_[i] != 0 && !implementable_interval(known, static_cast<int>(i))) continue;
        Action act = known.actions[i];
        act.id = static_cast<int>(filtered.actions.size());
        filtered.actions.push_back(act);
        ids.push_back(known_ids_[i]);
      }
      known = std::move(filtered);
      known_ids_ = std::move(ids);
    }
    known_ = known;

    // optimistic target: argmax over all actions of the profit from that
    // action in I(A- u {a}) with the reward maximized over the body
    double best_val = -1.0;
    a_star_ = 0;
    bool a_star_known = true;
    r_star_opt_ = 0.0;
    for (int a = 0; a < n; ++a) {
      double val;
      double ropt = 0.0;
      if (in_span_[a]) {
        auto pos = std::find(known_ids_.begin(), known_ids_.end(), a);
        if (pos == known_ids_.end()) continue;  // filtered as degenerated
        auto from = opt_profit_from_action(known_, static_cast<int>(pos - known_ids_.begin()));
        if (!from) continue;
        val = from->value;
        ropt = known_.actions[static_cast<std::size_t>(pos - known_ids_.begin())].reward;
      } else {
        SupportResult s = support(body_, round.actions[a].context);
        ropt = std::max(0.0, s.value);
        ResolvedInstance inst = known_;
        Action cand;
        cand.id = static_cast<int>(inst.actions.size());
        cand.cost = round.actions[a].known;
        cand.reward = ropt;
        inst.actions.push_back(cand);
        auto from = opt_profit_from_action(inst, cand.id);
        if (!from) continue;
        val = from->value;
      }
      bool better = val > best_val + 1e-12;
      bool tie = std::abs(val - best_val) <= 1e-12;
      // ties prefer a known action (zero immediate regret), then lowest id
      if (better || (tie && in_span_[a] && !a_star_known)) {
        best_val = val;
        a_star_ = a;
        a_star_known = in_span_[a];
        r_star_opt_ = ropt;
      }
    }

    cut_level_.reset();
    if (in_span_[a_star_]) {
      branch_ = "exploit";
      x_t_ = opt_profit(known_).x;
      return finish_propose();
    }

    double c_star = round.actions[a_star_].known;
    double gap;
    try {
      gap = left_cost_gap(known_, c_star);
    } catch (const NoSmallerCost&) {
      gap = std::numeric_limits<double>::infinity();
    }
    if (gap >= delta_ - 1e-12) {
      branch_ = "nondegen";
      NonDegenResult nd = non_degenerating_reward(known_, c_star);
      x_t_ = nd.contract;
      cut_level_ = nd.reward;
      return finish_propose();
    }

    // representative branch: known action with cost in [c*-Delta, c*],
    // lowest such cost
    int rep = -1;
    for (std::size_t i = 0; i < known_.actions.size(); ++i) {
      double c = known_.actions[i].cost;
      if (c >= c_star - delta_ - 1e-12 && c <= c_star + 1e-12) {
        if (rep < 0 || c < known_.actions[static_cast<std::size_t>(rep)].cost - 1e-15) rep = static_cast<int>(i);
      }
    }
    if (rep < 0) {
      // paper leaves this undefined; fall back to the non-degenerating branch
      representative_missing_seen_ = true;
      branch_ = "representative_missing";
      NonDegenResult nd = non_degenerating_reward(known_, c_star);
      x_t_ = nd.contract;
      cut_level_ = nd.reward;
      return finish_propose();
    }
    branch_ = "representative";
    auto mp = min_pay_contract(known_, rep);
    x_t_ = mp ? *mp : 0.0;
    if (x_t_ > 1e-12)
      cut_level_ = (c_star - known_.actions[static_cast<std::size_t>(rep)].cost) / x_t_ +
                   known_.actions[static_cast<std::size_t>(rep)].reward;
    return finish_propose();
  }

  void feedback(int chosen, std::optional<double> revealed_reward) override {
    begin_feedback();
    if (!revealed_reward) throw ProtocolError("reward-context feedback must reveal the reward");
    const Vec& mu = round_.actions.at(chosen).context;
    took_independent_ = !in_span_[static_cast<std::size_t>(chosen)];
    if (took_independent_) {
      body_ = body_.slice(mu, *revealed_reward);
      add_to_span(mu);
      ++independent_rounds_;
      return;
    }
    if (cut_level_) {
      const Vec& mu_star = round_.actions.at(a_star_).context;
      body_ = body_.cut(mu_star, *cut_level_);
      if (++cuts_since_prune_ >= 64) {
        body_ = detail::prune_redundant(body_);
        cuts_since_prune_ = 0;
      }
    }
  }

  std::optional<double> optimistic_value() const override {
    // benchmark relaxation value: profit from the target in I(A- u {a*})
    if (in_span_.empty()) return std::nullopt;
    if (in_span_[a_star_]) return opt_profit(known_).value;
    ResolvedInstance inst = known_;
    Action cand;
    cand.id = static_cast<int>(inst.actions.size());
    cand.cost = round_.actions[a_star_].known;
    cand.reward = r_star_opt_;
    inst.actions.push_back(cand);
    auto from = opt_profit_from_action(inst, cand.id);
    return from ? from->value : opt_profit(known_).value;
  }

  int independent_rounds() const { return independent_rounds_; }

  nlohmann::json snapshot() const override {
    return {{"name", name()},
            {"delta", delta_},
            {"span_dim", span_dim()},
            {"branch", branch_},
            {"took_independent", took_independent_},
            {"target_action", a_star_},
            {"x_t", x_t_},
            {"constraints", body_.halfspaces().size()},
            {"equalities", body_.equalities().size()},
            {"body", body_.to_json()}};
  }

 private:
  double finish_propose() { return x_t_; }

  double span_tol(const Vec& mu) const { return 1e-8 * std::max(1.0, mu.norm()); }

  double span_residual(const Vec& mu) const {
    if (span_.cols() == 0) return mu.norm();
    return (mu - span_ * (span_.transpose() * mu)).norm();
  }

  void add_to_span(const Vec& mu) {
    Vec res = span_.cols() == 0 ? mu : Vec(mu - span_ * (span_.transpose() * mu));
    double n = res.norm();
    if (n < span_tol(mu)) return;
    span_.conservativeResize(Eigen::NoChange, span_.cols() + 1);
    span_.col(span_.cols() - 1) = res / n;
  }

  ConvexBody body_;
  Mat span_;
  double delta_;
  double cost_floor_;
  GameRound round_;
  std::vector<bool> in_span_;
  ResolvedInstance known_;
  std::vector<int> known_ids_;
  int a_star_ = 0;
  double r_star_opt_ = 0.0;
  double x_t_ = 0.0;
  std::optional<double> cut_level_;
  std::string branch_ = "none";
  int independent_rounds_ = 0;
  int cuts_since_prune_ = 0;
  bool took_independent_ = false;
  bool representative_missing_seen_ = false;
};

class FixedContract : public Learner {
 public:
  explicit FixedContract(double x) : x_(x) {}
  std::string name() const override { return "fixed"; }
  double propose(const GameRound&) override {
    begin_propose();
    return x_;
  }
  void feedback(int, std::optional<double>) override { begin_feedback(); }

 private:
  double x_;
};

class RandomContract : public Learner {
 public:
  explicit RandomContract(std::uint64_t seed) : rng_(seed) {}
  std::string name() const override { return "random"; }
  double propose(const GameRound&) override {
    begin_propose();
    return rng_.uniform();
  }
  void feedback(int, std::optional<double>) override { begin_feedback(); }

 private:
  CounterRng rng_;
};

// Stateless optimist for reward rounds: assume every unknown reward sits at
// its unit-ball support value and play that instance's optimal contract.
// (The cost-context myopic baseline is Alg1 with zero padding.)
class RewardGreedy : public Learner {
 public:
  std::string name() const override { return "greedy_myopic"; }
  double propose(const GameRound& round) override {
    begin_propose();
    ResolvedInstance inst;
    for (const auto& a : round.actions)
      inst.actions.push_back({a.id, a.context.norm(), a.known});
    return opt_profit(inst).x;
  }
  void feedback(int, std::optional<double>) override { begin_feedback(); }
};

inline std::unique_ptr<Learner> make_greedy_myopic(Setting setting, int dim) {
  if (setting == Setting::CostContext) return std::make_unique<Alg1Learner>(dim, 0.0);
  return std::make_unique<RewardGreedy>();
}

// ---------------------------------------------------------------------------
// Two-action reduction to contextual pricing.

class PricingLearner {
 public:
  virtual ~PricingLearner() = default;
  virtual double propose_price(const Vec& context) = 0;
  virtual void feedback(bool purchased) = 0;
};

// Baseline inner learner: keeps a hypothesis body for the valuation vector
// and posts the midpoint of the consistent value interval. On a fixed
// context this is exactly interval bisection.
class MidpointPricing : public PricingLearner {
 public:
  explicit MidpointPricing(int dim) : body_(ConvexBody::unit_ball(dim)) {}
  double propose_price(const Vec& context) override {
    ctx_ = context;
    double hi = support(body_, context).value;
    double lo = -support(body_, Vec(-context)).value;
    price_ = 0.5 * (lo + hi);
    return price_;
  }
  void feedback(bool purchased) override {
    if (purchased)
      body_ = body_.cut(Vec(-ctx_), -price_);  // value >= price
    else
      body_ = body_.cut(ctx_, price_);         // value <= price
    if (body_.halfspaces().size() % 64 == 0) body_ = detail::prune_redundant(body_);
  }
  const ConvexBody& body() const { return body_; }

 private:
  ConvexBody body_;
  Vec ctx_;
  double price_ = 0.0;
};

// Appendix-C mapping: value context mu+ = (sqrt2, -sqrt2 mu), price p, contract
// x = 1 - p, purchase iff the non-trivial action is taken.
inline Vec pricing_context(const Vec& mu) {
  Vec out(mu.size() + 1);
  out[0] = std::numbers::sqrt2;
  out.tail(mu.size()) = -std::numbers::sqrt2 * mu;
  return out;
}

inline Vec pricing_hidden(const Vec& theta) {
  Vec out(theta.size() + 1);
  out[0] = std::numbers::sqrt2 / 2.0;
  out.tail(theta.size()) = (std::numbers::sqrt2 / 2.0) * theta;
  return out;
}

class PricingReductionLearner : public Learner {
 public:
  PricingReductionLearner(int dim, std::unique_ptr<PricingLearner> inner)
      : inner_(std::move(inner)), dim_(dim) {}
  static PricingReductionLearner with_baseline(int dim) {
    return PricingReductionLearner(dim, std::make_unique<MidpointPricing>(dim + 1));
  }

  std::string name() const override { return "pricing_reduction"; }

  double propose(const GameRound& round) override {
    if (round.setting != Setting::CostContext)
      throw std::invalid_argument("the reduction runs on cost-context rounds");
    if (round.actions.size() != 2 || std::abs(round.actions[1].known - 1.0) > 1e-9)
      throw std::invalid_argument("reduction needs exactly one non-trivial action with reward 1");
    begin_propose();
    double p = inner_->propose_price(pricing_context(round.actions[1].context));
    last_price_ = p;
    return std::clamp(1.0 - p, 0.0, 1.0);
  }

  void feedback(int chosen, std::optional<double>) override {
    begin_feedback();
    inner_->feedback(chosen == 1);
  }

  double last_price() const { return last_price_; }

 private:
  std::unique_ptr<PricingLearner> inner_;
  int dim_;
  double last_price_ = 0.0;
};

}  // namespace pag
