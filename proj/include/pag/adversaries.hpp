#pragma once

#include <cmath>
#include <memory>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "pag/codes.hpp"
#include "pag/convex.hpp"
#include "pag/game.hpp"
#include "pag/rng.hpp"

namespace pag {

class CodeTooSmall : public std::runtime_error {
 public:
  explicit CodeTooSmall(const std::string& w) : std::runtime_error(w) {}
};

// Adaptive environment contract. finalize() must return a hidden vector that
// reproduces every answered action when the logged rounds are replayed.
class Environment {
 public:
  virtual ~Environment() = default;
  virtual std::string name() const = 0;
  virtual Setting setting() const = 0;
  virtual int dim() const = 0;
  virtual std::optional<GameRound> next_round() = 0;
  virtual std::pair<int, std::optional<double>> respond(double x) = 0;
  virtual Vec finalize() = 0;
  virtual bool is_halted() const = 0;

  // hypothetical response for the current round; must not advance state
  virtual int probe_response(double x) const = 0;
  // set when confinement probes are meaningful for the current round
  virtual bool confinement_applies() const { return true; }
  // closed-form pessimistic benchmark, when the construction pins one
  virtual std::optional<double> benchmark_closed_form() const { return std::nullopt; }
  virtual nlohmann::json config_json() const { return {{"name", name()}}; }
};

struct AdversaryConfig {
  long T = 1000;
  int d = 3;
  double delta = 0.05;
  std::optional<long> K;            // exploration-detection threshold
  std::optional<SphericalCode> code;
  std::uint64_t seed = 1;
};

// beta/gamma of the reward-context adversaries; closed forms are checked
// against their defining equations on construction.
struct BetaGamma {
  double beta = 0.0;
  double gamma = 0.0;
};

inline BetaGamma beta_gamma(double delta) {
  const double e = std::numbers::e;
  BetaGamma bg;
  bg.beta = 3.0 / (8.0 * e) * (1.0 + 2.0 * delta) +
            1.0 / (8.0 * e) * std::sqrt(36.0 * delta * delta + 20.0 * delta + 1.0);
  bg.gamma = 3.0 / (8.0 * e) + delta / (4.0 * e) +
             1.0 / (8.0 * e) * std::sqrt(4.0 * delta * delta + 28.0 * delta + 1.0);
  double res_b =
      (1.0 - (delta / e) / (bg.beta - 1.0 / (2.0 * e))) * bg.beta - (1.0 / (4.0 * e) + delta / (2.0 * e));
  double res_g =
      (1.0 - (delta / e) / (bg.gamma - 1.0 / (2.0 * e))) * bg.gamma - (1.0 / (4.0 * e) - delta / (2.0 * e));
  if (std::abs(res_b) > 1e-9 || std::abs(res_g) > 1e-9)
    throw std::logic_error("beta/gamma defining equations violated");
  return bg;
}

// ---------------------------------------------------------------------------
// Adversary for three actions (d = 2).

class ThreeActionAdversary : public Environment {
 public:
  ThreeActionAdversary(long T, double delta) : T_(T), delta_(delta) {
    if (delta >= 0.25) throw std::invalid_argument("three-action adversary needs delta < 1/4");
    cmin_ = 0.25 + delta_ - delta_ / (4.0 * delta_ + 2.0) -
            delta_ * delta_ / (4.0 + 8.0 * delta_);
    X_ = (4.0 * cmin_ - 1.0) / (4.0 * delta_);
    R_ = std::sqrt(3.0) / 4.0;  // Lemma 3.4 initialization; the listing's
                                // sqrt(3)/2 would make the interval a point
    halt_window_ = static_cast<long>(std::ceil(std::sqrt(static_cast<double>(T))));
  }

  std::string name() const override { return "adversary1"; }
  Setting setting() const override { return Setting::CostContext; }
  int dim() const override { return 2; }
  bool is_halted() const override { return halted_; }
  double cmin() const { return cmin_; }
  double threshold() const { return X_; }
  double radius() const { return R_; }

  std::optional<GameRound> next_round() override {
    if (halted_ || t_ >= T_) return std::nullopt;
    ++t_;
    GameRound round;
    round.setting = Setting::CostContext;
    Vec mu_club(2), mu_heart(2);
    mu_club << 0.5, 0.0;
    mu_heart << 0.0, cmin_ / R_;
    round.actions = {{0, 0.0, Vec::Zero(2)}, {1, 0.5, mu_club}, {2, 0.5 + delta_, mu_heart}};
    current_ = round;
    have_round_ = true;
    return round;
  }

  std::pair<int, std::optional<double>> respond(double x) override {
    if (!have_round_) throw std::logic_error("respond before next_round");
    have_round_ = false;
    int a = answer(x, true);
    return {a, std::nullopt};
  }

  int probe_response(double x) const override {
    return const_cast<ThreeActionAdversary*>(this)->answer(x, false);
  }

  // Lemma 3.2's condition: confinement to {0, club} needs headroom below the
  // cap even at x = 1.
  bool confinement_applies() const override {
    return R_ * (1.0 + 4.0 * delta_) / (4.0 * cmin_) < kCap - 1e-9;
  }

  Vec finalize() override {
    if (theta_hat_) return *theta_hat_;
    Vec th(2);
    th << 0.5, kCap;
    theta_hat_ = th;
    return th;
  }

  nlohmann::json config_json() const override {
    return {{"name", name()}, {"T", T_}, {"delta", delta_}, {"cmin", cmin_}, {"X", X_}};
  }

 private:
  static constexpr double kCap = 0.86602540378443864676;  // sqrt(3)/2

  int answer(double x, bool commit) {
    if (x >= X_) {
      double grown = R_ * (1.0 + 4.0 * delta_ * x) / (4.0 * cmin_);
      if (grown < kCap - 1e-12) {
        if (commit) {
          R_ = grown;
          consec_low_ = 0;
        }
        return 1;  // club
      }
      // hypothesis collapses; answer the truth under (1/2, sqrt(3)/2)
      Vec th(2);
      th << 0.5, kCap;
      int a = best_response(resolve(current_, th), x);
      if (commit) {
        R_ = kCap;
        consec_low_ = 0;
      }
      return a;
    }
    if (commit) {
      if (++consec_low_ >= halt_window_) {
        Vec th(2);
        th << 0.5, R_;
        theta_hat_ = th;
        halted_ = true;
      }
    }
    return x >= 0.5 ? 1 : 0;
  }

  long T_;
  double delta_, cmin_, X_, R_;
  long halt_window_;
  long t_ = 0;
  long consec_low_ = 0;
  bool halted_ = false;
  bool have_round_ = false;
  GameRound current_;
  std::optional<Vec> theta_hat_;
};

// ---------------------------------------------------------------------------
// Spherical-code adversaries (Adversaries 2-5). The cost and reward variants
// share the cycle bookkeeping; the Stackelberg versions add the
// exploration-detection counter and early halting.

class CodeAdversary : public Environment {
 public:
  CodeAdversary(const AdversaryConfig& cfg, Setting setting, bool stackelberg)
      : cfg_(cfg), setting_(setting), stackelberg_(stackelberg) {
    if (cfg.d < 3)
      throw std::invalid_argument("code adversaries need d >= 3 (S_0 has no nontrivial code)");
    const double e = std::numbers::e;
    if (setting_ == Setting::RewardContext) {
      bg_ = beta_gamma(cfg.delta);
      shrink_ = 2.0 * bg_.gamma / bg_.beta - 1.0;
      X_ = cfg.delta / (e * bg_.beta - 0.5);
      x2_ = cfg.delta / (e * bg_.gamma - 0.5);
    } else {
      shrink_ = 1.0 - cfg.delta * cfg.delta;
      X_ = (2.0 + 3.0 * cfg.delta) / (4.0 * (1.0 + cfg.delta));
      x2_ = (2.0 + 5.0 * cfg.delta) / (4.0 * (1.0 + cfg.delta));
    }
    double alpha_needed = std::acos(shrink_);
    code_ = cfg.code ? *cfg.code : generate_circle(alpha_needed);
    if (cfg.d != 3 && !cfg.code)
      throw std::invalid_argument("supply a spherical code for d > 3");
    if (code_.dim != cfg.d - 1) throw std::invalid_argument("code dimension must be d - 1");
    if (code_.min_angle < alpha_needed - 1e-12)
      throw CodeTooSmall("code minimal angle below the construction's requirement");
    if (!validate(code_)) throw CodeTooSmall("code failed validation");

    K_ = cfg.K.value_or(static_cast<long>(std::ceil(std::sqrt(static_cast<double>(cfg.T)))));
    double needed;
    if (setting_ == Setting::RewardContext)
      needed = 2.0 * static_cast<double>(cfg.T) * (1.0 - bg_.gamma / bg_.beta) /
               (stackelberg_ ? static_cast<double>(K_) : 1.0);
    else
      needed = static_cast<double>(cfg.T) * cfg.delta * cfg.delta /
               (stackelberg_ ? static_cast<double>(K_) : 1.0);
    if (static_cast<double>(code_.size()) < needed)
      throw CodeTooSmall("code size " + std::to_string(code_.size()) + " below required " +
                         std::to_string(needed));
    max_cycles_ = stackelberg_
                      ? static_cast<double>(cfg.T) / (static_cast<double>(code_.size()) * K_)
                      : std::numeric_limits<double>::infinity();

    R_ = std::sqrt(3.0) / 2.0;
    build_static_actions();
  }

  std::string name() const override {
    if (setting_ == Setting::CostContext) return stackelberg_ ? "adversary4" : "adversary2";
    return stackelberg_ ? "adversary5" : "adversary3";
  }
  Setting setting() const override { return setting_; }
  int dim() const override { return cfg_.d; }
  bool is_halted() const override { return halted_; }
  double threshold() const { return X_; }
  double second_critical() const { return x2_; }
  double radius() const { return R_; }
  const SphericalCode& code() const { return code_; }
  const BetaGamma& bg() const { return bg_; }

  std::optional<GameRound> next_round() override {
    if (halted_ || t_ >= cfg_.T) return std::nullopt;
    ++t_;
    // radius floor from the boundedness lemmas; cycles are budgeted so this
    // can only fire on a construction bug
    if (R_ < std::sqrt(3.0) / (2.0 * std::numbers::e) - 1e-9)
      throw std::logic_error("radius fell below sqrt(3)/(2e)");
    current_ = make_round();
    current_.validate();
    have_round_ = true;
    return current_;
  }

  std::pair<int, std::optional<double>> respond(double x) override {
    if (!have_round_) throw std::logic_error("respond before next_round");
    have_round_ = false;
    int a = known_best_response(x);
    std::optional<double> reward;
    if (setting_ == Setting::RewardContext) reward = known_reward(a);

    if (x >= X_) {
      apply_cut();
      if (stackelberg_) k_ = 0;
    } else if (stackelberg_) {
      if (++k_ >= K_) {
        theta_hat_ = extreme_theta();
        halted_ = true;
      }
    }
    return {a, reward};
  }

  int probe_response(double x) const override { return known_best_response(x); }

  Vec finalize() override {
    if (theta_hat_) return *theta_hat_;
    theta_hat_ = extreme_theta();
    return *theta_hat_;
  }

  std::optional<double> benchmark_closed_form() const override {
    const double e = std::numbers::e;
    if (setting_ == Setting::RewardContext) return 1.0 / (4.0 * e) + cfg_.delta / (2.0 * e);
    return 1.0 / (4.0 * e) + cfg_.delta / (8.0 * e);
  }

  // current hypothesis set {1/2} x (cuts of R B_{d-1}), mostly for logs
  ConvexBody hypothesis_body() const {
    ConvexBody b(cfg_.d, std::sqrt(0.25 + R_ * R_));
    b = b.with_fixed(0, 0.5);
    for (int i = 0; i + 1 < i_; ++i) {
      // applied cuts of the current cycle
    }
    for (int idx = 0; idx < i_ - 1; ++idx) b = b.cut(lift(cut_normal(idx)), cut_offset());
    return b;
  }

  nlohmann::json config_json() const override {
    nlohmann::json j{{"name", name()},   {"T", cfg_.T},       {"d", cfg_.d},
                     {"delta", cfg_.delta}, {"code_size", code_.size()},
                     {"code_min_angle", code_.min_angle}};
    if (stackelberg_) j["K"] = K_;
    return j;
  }

 private:
  void build_static_actions() {
    const double e = std::numbers::e;
    mu_club_ = Vec::Zero(cfg_.d);
    mu_spade_ = Vec::Zero(cfg_.d);
    if (setting_ == Setting::CostContext) {
      mu_club_[0] = 1.0 / (2.0 * e);
      mu_spade_[0] = 1.0 / (2.0 * e) +
                     cfg_.delta / (4.0 * e) * (2.0 + 5.0 * cfg_.delta) / (1.0 + cfg_.delta);
      r_club_ = 1.0 / (2.0 * e);
      r_spade_ = r_heart_ = 1.0 / (2.0 * e) + cfg_.delta / (2.0 * e);
      c_club_ = 1.0 / (4.0 * e);
      c_spade_ = 1.0 / (4.0 * e) +
                 cfg_.delta / (8.0 * e) * (2.0 + 5.0 * cfg_.delta) / (1.0 + cfg_.delta);
    } else {
      mu_club_[0] = 1.0 / e;
      mu_spade_[0] = 2.0 * bg_.gamma;
      c_club_ = 1.0 / (4.0 * e);
      c_spade_ = c_heart_ = 1.0 / (4.0 * e) + cfg_.delta / e;
      r_club_ = 1.0 / (2.0 * e);
      r_spade_ = bg_.gamma;
    }
  }

  Vec heart_context() const {
    const double e = std::numbers::e;
    Vec mu = Vec::Zero(cfg_.d);
    const Vec& w = code_.words[static_cast<std::size_t>(i_ - 1)];
    if (setting_ == Setting::CostContext) {
      mu[0] = 1.0 / (2.0 * e) +
              cfg_.delta / (4.0 * e) * (2.0 + 3.0 * cfg_.delta) / (1.0 + cfg_.delta) +
              1.0 / (2.0 * e * (1.0 + cfg_.delta));
      mu.tail(cfg_.d - 1) = w / (4.0 * e * (1.0 + cfg_.delta) * R_);
    } else {
      mu[0] = bg_.beta;
      mu.tail(cfg_.d - 1) = (bg_.beta / (2.0 * R_)) * w;
    }
    return mu;
  }

  GameRound make_round() const {
    GameRound round;
    round.setting = setting_;
    double known_club = setting_ == Setting::CostContext ? r_club_ : c_club_;
    double known_spade = setting_ == Setting::CostContext ? r_spade_ : c_spade_;
    double known_heart = setting_ == Setting::CostContext ? r_heart_ : c_heart_;
    round.actions = {{0, 0.0, Vec::Zero(cfg_.d)},
                     {1, known_club, mu_club_},
                     {2, known_spade, mu_spade_},
                     {3, known_heart, heart_context()}};
    return round;
  }

  // Best response within the fully known set {trivial, club, spade}; the
  // validity lemmas confine the agent here for every contract.
  int known_best_response(double x) const {
    if (x >= x2_) return 2;
    if (x >= 0.5) return 1;
    return 0;
  }

  double known_reward(int a) const {
    if (a == 1) return r_club_;
    if (a == 2) return r_spade_;
    return 0.0;
  }

  Vec cut_normal(int idx) const {
    const Vec& w = code_.words[static_cast<std::size_t>(idx)];
    return setting_ == Setting::CostContext ? Vec(-w) : Vec(w);
  }
  double cut_offset() const { return R_ * shrink_; }

  Vec lift(const Vec& zeta_normal) const {
    Vec n = Vec::Zero(cfg_.d);
    n.tail(cfg_.d - 1) = zeta_normal;
    return n;
  }

  void apply_cut() {
    if (i_ < static_cast<int>(code_.size())) {
      ++i_;
      return;
    }
    // code exhausted: shrink the radius, restart the cycle
    R_ *= shrink_;
    i_ = 1;
    ++cycles_;
    if (stackelberg_ && static_cast<double>(cycles_) >= max_cycles_) {
      // arbitrary consistent point: the slice center
      Vec th = Vec::Zero(cfg_.d);
      th[0] = 0.5;
      theta_hat_ = th;
      halted_ = true;
    }
  }

  // argmin (cost) / argmax (reward) of the heart direction over the current
  // hypothesis set, in closed form: -R w_i for cost, +R w_i for reward.
  Vec extreme_theta() const {
    Vec th = Vec::Zero(cfg_.d);
    th[0] = 0.5;
    const Vec& w = code_.words[static_cast<std::size_t>(i_ - 1)];
    th.tail(cfg_.d - 1) = (setting_ == Setting::CostContext ? -R_ : R_) * w;
    return th;
  }

  AdversaryConfig cfg_;
  Setting setting_;
  bool stackelberg_;
  BetaGamma bg_;
  SphericalCode code_;
  double shrink_ = 0.0, X_ = 0.0, x2_ = 0.0, R_ = 0.0;
  Vec mu_club_, mu_spade_;
  double r_club_ = 0.0, r_spade_ = 0.0, r_heart_ = 0.0;
  double c_club_ = 0.0, c_spade_ = 0.0, c_heart_ = 0.0;
  long K_ = 0, k_ = 0, t_ = 0;
  int i_ = 1;
  long cycles_ = 0;
  double max_cycles_ = 0.0;
  bool halted_ = false;
  bool have_round_ = false;
  GameRound current_;
  std::optional<Vec> theta_hat_;
};

inline std::unique_ptr<Environment> make_adversary_three_action(long T, double delta) {
  return std::make_unique<ThreeActionAdversary>(T, delta);
}
inline std::unique_ptr<Environment> make_adversary_cost_opt(const AdversaryConfig& cfg) {
  return std::make_unique<CodeAdversary>(cfg, Setting::CostContext, false);
}
inline std::unique_ptr<Environment> make_adversary_reward_opt(const AdversaryConfig& cfg) {
  return std::make_unique<CodeAdversary>(cfg, Setting::RewardContext, false);
}
inline std::unique_ptr<Environment> make_adversary_cost_stackelberg(const AdversaryConfig& cfg) {
  return std::make_unique<CodeAdversary>(cfg, Setting::CostContext, true);
}
inline std::unique_ptr<Environment> make_adversary_reward_stackelberg(const AdversaryConfig& cfg) {
  return std::make_unique<CodeAdversary>(cfg, Setting::RewardContext, true);
}

// ---------------------------------------------------------------------------
// Benign random environment with a fixed hidden vector; answers truthfully.

class RandomEnvironment : public Environment {
 public:
  RandomEnvironment(int d, long T, std::uint64_t seed, Setting setting, double cost_floor = 0.1,
                    int min_actions = 2, int max_actions = 6, bool unit_reward = false)
      : d_(d),
        T_(T),
        setting_(setting),
        cost_floor_(cost_floor),
        min_actions_(min_actions),
        max_actions_(max_actions),
        unit_reward_(unit_reward),
        rng_(seed) {
    theta_ = rng_.in_ball(d, 0.9);
  }

  std::string name() const override { return "random"; }
  Setting setting() const override { return setting_; }
  int dim() const override { return d_; }
  bool is_halted() const override { return false; }
  const Vec& hidden() const { return theta_; }

  std::optional<GameRound> next_round() override {
    if (t_ >= T_) return std::nullopt;
    ++t_;
    for (int attempt = 0; attempt < 200; ++attempt) {
      GameRound round = draw_round();
      try {
        ResolvedInstance inst = resolve(round, theta_);
        bool ok = true;
        if (setting_ == Setting::RewardContext) {
          for (std::size_t i = 1; i < inst.actions.size(); ++i)
            if (inst.actions[i].cost < cost_floor_ - 1e-12) ok = false;
        }
        if (!ok) continue;
        current_ = round;
        resolved_ = inst;
        have_round_ = true;
        return round;
      } catch (const NegativeResolvedValue&) {
        continue;
      }
    }
    throw std::logic_error("random environment failed to draw a valid round");
  }

  std::pair<int, std::optional<double>> respond(double x) override {
    if (!have_round_) throw std::logic_error("respond before next_round");
    have_round_ = false;
    int a = best_response(resolved_, x);
    std::optional<double> reward;
    if (setting_ == Setting::RewardContext) reward = resolved_.actions[static_cast<std::size_t>(a)].reward;
    return {a, reward};
  }

  int probe_response(double x) const override { return best_response(resolved_, x); }
  bool confinement_applies() const override { return false; }
  Vec finalize() override { return theta_; }

  nlohmann::json config_json() const override {
    return {{"name", name()},
            {"T", T_},
            {"d", d_},
            {"setting", setting_ == Setting::CostContext ? "cost" : "reward"},
            {"cost_floor", cost_floor_}};
  }

 private:
  GameRound draw_round() {
    GameRound round;
    round.setting = setting_;
    round.actions.push_back({0, 0.0, Vec::Zero(d_)});
    int n = min_actions_ +
            static_cast<int>(rng_.uniform() * (max_actions_ - min_actions_ + 1));
    n = std::clamp(n, min_actions_, max_actions_);
    for (int i = 1; i < n; ++i) {
      Vec mu = rng_.in_ball(d_, 1.0);
      if (mu.dot(theta_) < 0) mu = -mu;  // keep resolved values nonnegative
      double known;
      if (setting_ == Setting::CostContext)
        known = unit_reward_ ? 1.0 : rng_.uniform(0.1, 1.0);
      else
        known = rng_.uniform(cost_floor_, 0.5);
      round.actions.push_back({i, known, mu});
    }
    return round;
  }

  int d_;
  long T_;
  Setting setting_;
  double cost_floor_;
  int min_actions_, max_actions_;
  bool unit_reward_;
  CounterRng rng_;
  Vec theta_;
  long t_ = 0;
  bool have_round_ = false;
  GameRound current_;
  ResolvedInstance resolved_;
};

inline std::unique_ptr<Environment> make_random_environment(int d, long T, std::uint64_t seed,
                                                            Setting setting,
                                                            double cost_floor = 0.1) {
  return std::make_unique<RandomEnvironment>(d, T, seed, setting, cost_floor);
}

// Two-action specialization used by the pricing reduction: one non-trivial
// action with reward 1.
inline std::unique_ptr<Environment> make_two_action_environment(int d, long T,
                                                                std::uint64_t seed) {
  return std::make_unique<RandomEnvironment>(d, T, seed, Setting::CostContext, 0.1, 2, 2, true);
}

}  // namespace pag
