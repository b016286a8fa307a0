#include <catch2/catch_amalgamated.hpp>

#include "pag/adversaries.hpp"
#include "pag/learners.hpp"

using namespace pag;

TEST_CASE("delta schedules") {
  CHECK(delta_schedule_cost(2, 10000) == Catch::Approx(0.34694).margin(2e-5));
  CHECK(delta_schedule_cost(2, 2) == 0.5);  // cap binds
  CHECK(delta_schedule_cost(2, 100000000) < delta_schedule_cost(2, 10000));

  CHECK(delta_schedule_reward(2, 10000, 0.1) == Catch::Approx(0.09212).margin(2e-5));
  CHECK(delta_schedule_reward(2, 100000000, 0.1) < delta_schedule_reward(2, 10000, 0.1));
  CHECK_THROWS_AS(delta_schedule_reward(2, 100, 0.0), std::invalid_argument);
}

TEST_CASE("left cost gap") {
  ResolvedInstance known;
  known.actions = {{0, 0.0, 0.0}, {1, 1.0, 0.2}, {2, 2.0, 1.0}};
  CHECK(left_cost_gap(known, 0.5) == Catch::Approx(0.3).margin(1e-12));
  ResolvedInstance only_trivial;
  only_trivial.actions = {{0, 0.0, 0.0}};
  CHECK(left_cost_gap(only_trivial, 0.7) == Catch::Approx(0.7).margin(1e-12));
  CHECK_THROWS_AS(left_cost_gap(known, 0.0), NoSmallerCost);
}

TEST_CASE("non-degenerating reward: worked example and trivial case") {
  ResolvedInstance known;
  known.actions = {{0, 0.0, 0.0}, {1, 1.0, 0.2}, {2, 2.0, 1.0}};
  auto nd = non_degenerating_reward(known, 0.5);
  CHECK(nd.reward == Catch::Approx(1.375).margin(1e-9));
  CHECK(nd.contract == Catch::Approx(0.8).margin(1e-9));

  ResolvedInstance trivial;
  trivial.actions = {{0, 0.0, 0.0}};
  auto nd2 = non_degenerating_reward(trivial, 0.5);
  CHECK(nd2.reward == Catch::Approx(0.5).margin(1e-12));
  CHECK(nd2.contract == Catch::Approx(1.0).margin(1e-12));
}

namespace {

// independent oracle: bisect the smallest reward whose (x, r) pair admits an
// implementing contract on a fine grid
double grid_non_degenerating_reward(const ResolvedInstance& known, double c_star) {
  auto implementable_at = [&](double r) {
    ResolvedInstance inst = known;
    inst.actions.push_back({static_cast<int>(inst.actions.size()), r, c_star});
    for (double x = 0.0; x <= 1.0 + 1e-12; x += 1e-4) {
      double u = x * r - c_star;
      if (u >= agent_indirect_utility(known, std::min(x, 1.0)) - 1e-12) return true;
    }
    return false;
  };
  double lo = 0.0, hi = 4.0;
  for (int it = 0; it < 40; ++it) {
    double mid = 0.5 * (lo + hi);
    if (implementable_at(mid))
      hi = mid;
    else
      lo = mid;
  }
  return hi;
}

}  // namespace

TEST_CASE("non-degenerating reward matches the grid oracle on random instances") {
  CounterRng rng(61);
  for (int trial = 0; trial < 100; ++trial) {
    ResolvedInstance known;
    known.actions.push_back({0, 0.0, 0.0});
    int n = 1 + static_cast<int>(rng.uniform() * 4);
    for (int i = 1; i <= n; ++i)
      known.actions.push_back({i, rng.uniform(0.1, 1.0), rng.uniform(0.05, 0.8)});
    double c_star = rng.uniform(0.05, 0.9);
    auto nd = non_degenerating_reward(known, c_star);
    double oracle = grid_non_degenerating_reward(known, c_star);
    INFO("trial " << trial << " c*=" << c_star);
    REQUIRE(nd.reward == Catch::Approx(oracle).margin(1e-3));
    // the contract really implements the action at that reward
    ResolvedInstance inst = known;
    inst.actions.push_back({static_cast<int>(inst.actions.size()), nd.reward, c_star});
    double u = nd.contract * nd.reward - c_star;
    REQUIRE(u >= agent_indirect_utility(known, nd.contract) - 1e-9);
  }
}

TEST_CASE("alg1 propose/feedback protocol and the padding cap") {
  Alg1Learner alg(2, 0.2);
  GameRound round;
  round.setting = Setting::CostContext;
  round.actions = {{0, 0.0, Vec::Zero(2)}, {1, 0.9, (Vec(2) << 0.6, 0.1).finished()}};
  double x = alg.propose(round);
  CHECK(x >= 0.0);
  CHECK(x <= 1.0);
  CHECK_THROWS_AS(alg.propose(round), ProtocolError);
  alg.feedback(1, std::nullopt);
  CHECK_THROWS_AS(alg.feedback(1, std::nullopt), ProtocolError);

  // optimistic min-pay over the full ball is 0, so the proposal is Delta
  CHECK(x == Catch::Approx(0.2).margin(1e-6));
}

TEST_CASE("alg1 on an adversary-2-shaped body proposes X plus Delta") {
  const double e = std::numbers::e;
  const double delta = 0.1;
  AdversaryConfig cfg;
  cfg.T = 64;
  cfg.d = 3;
  cfg.delta = delta;
  auto env = make_adversary_cost_opt(cfg);
  auto round = env->next_round();
  REQUIRE(round);

  // body = the adversary's hypothesis set {1/2} x R B_{d-1}
  double R = std::sqrt(3.0) / 2.0;
  ConvexBody body = ConvexBody(3, std::sqrt(0.25 + R * R)).with_fixed(0, 0.5);
  double X = (2.0 + 3.0 * delta) / (4.0 * (1.0 + delta));

  Alg1Learner alg(3, 0.05);
  // drive the learner with the prepared body by proposing from a copy
  auto opt = optimistic_profit(*round, body);
  CHECK(opt.x == Catch::Approx(X).margin(1e-6));
  CHECK(opt.action == 3);  // the unknown-cost action
  CHECK(opt.value == Catch::Approx(1.0 / (4.0 * e) + delta / (8.0 * e)).margin(1e-6));
}

TEST_CASE("alg1 cut bookkeeping") {
  Alg1Learner alg(2, 0.3);
  GameRound round;
  round.setting = Setting::CostContext;
  round.actions = {{0, 0.0, Vec::Zero(2)},
                   {1, 0.5, (Vec(2) << 0.3, 0.2).finished()},
                   {2, 0.9, (Vec(2) << 0.1, 0.6).finished()}};
  double x = alg.propose(round);

  SECTION("equal or higher reward leaves the body alone") {
    auto before = alg.body().halfspaces().size();
    alg.feedback(2, std::nullopt);  // the target is the highest-reward implementable action
    CHECK(alg.body().halfspaces().size() == before);
  }
  SECTION("lower reward cuts along the indifference context") {
    alg.feedback(1, std::nullopt);
    REQUIRE(alg.body().halfspaces().size() == 1);
    // cut is <xi, theta> >= x_t with xi oriented toward the higher-reward target
    const auto& hs = alg.body().halfspaces().back();
    Vec xi = ((Vec(2) << 0.3, 0.2).finished() - (Vec(2) << 0.1, 0.6).finished()) / (0.5 - 0.9);
    CHECK((hs.normal + xi).norm() < 1e-12);  // stored negated
    CHECK(hs.offset == Catch::Approx(-x).margin(1e-12));

    // width removed in the xi direction is at least Delta * gap / 2
    double width = information_width(ConvexBody::unit_ball(2), Vec(-xi), -x) / xi.norm();
    CHECK(width >= 0.3 * (0.9 - 0.5) / 2.0 - 1e-9);
  }
}

TEST_CASE("alg2 branches") {
  const double cost_floor = 0.15;
  Alg2Learner alg(2, 0.1, cost_floor);

  // round 1: only the trivial action is in the (empty) span; one unknown action
  GameRound round;
  round.setting = Setting::RewardContext;
  Vec mu = (Vec(2) << 0.8, 0.3).finished();
  round.actions = {{0, 0.0, Vec::Zero(2)}, {1, 0.4, mu}};
  double x = alg.propose(round);
  auto snap = alg.snapshot();
  CHECK(snap["branch"] == "nondegen");  // gap = 0.4 >= Delta
  // known set is the trivial action alone: Rbar = c*, xbar = 1
  CHECK(x == Catch::Approx(1.0).margin(1e-9));

  // feedback: the agent took the unknown action; its context joins the span
  alg.feedback(1, 0.6);
  CHECK(alg.span_dim() == 1);
  CHECK(alg.body().equalities().size() == 1);
  CHECK(alg.independent_rounds() == 1);

  // round 2: same context now resolves; exploit branch has zero regret
  double x2 = alg.propose(round);
  CHECK(alg.branch() == "exploit");
  // known instance {trivial, (c=0.4, r=0.6)}: opt contract = min-pay = 2/3
  CHECK(x2 == Catch::Approx(0.4 / 0.6).margin(1e-6));
  alg.feedback(1, 0.6);
  CHECK(alg.span_dim() == 1);  // nothing new
}

TEST_CASE("alg2 representative branch picks the smallest qualifying cost") {
  Alg2Learner alg(3, 0.2, 0.1);
  // seed the span with two known actions via two independent rounds
  GameRound r1;
  r1.setting = Setting::RewardContext;
  r1.actions = {{0, 0.0, Vec::Zero(3)}, {1, 0.3, (Vec(3) << 0.9, 0, 0).finished()}};
  alg.propose(r1);
  alg.feedback(1, 0.45);
  GameRound r2;
  r2.setting = Setting::RewardContext;
  r2.actions = {{0, 0.0, Vec::Zero(3)}, {1, 0.4, (Vec(3) << 0, 0.8, 0).finished()}};
  alg.propose(r2);
  alg.feedback(1, 0.4);

  // now a target whose cost sits within Delta of a known cost
  GameRound r3;
  r3.setting = Setting::RewardContext;
  r3.actions = {{0, 0.0, Vec::Zero(3)},
                {1, 0.3, (Vec(3) << 0.9, 0, 0).finished()},
                {2, 0.4, (Vec(3) << 0, 0.8, 0).finished()},
                {3, 0.45, (Vec(3) << 0, 0, 0.9).finished()}};
  double x = alg.propose(r3);
  auto snap = alg.snapshot();
  if (snap["branch"] == "representative") {
    // representative = known action with cost in [0.25, 0.45], lowest cost = 0.3
    ResolvedInstance known;
    known.actions = {{0, 0.0, 0.0}, {1, 0.45, 0.3}, {2, 0.4, 0.4}};
    CHECK(x == Catch::Approx(*min_pay_contract(known, 1)).margin(1e-6));
  }
  alg.feedback(0, 0.0);
}

TEST_CASE("baseline learners") {
  FixedContract fixed(0.5);
  GameRound round;
  round.setting = Setting::CostContext;
  round.actions = {{0, 0.0, Vec::Zero(2)}, {1, 1.0, (Vec(2) << 0.5, 0).finished()}};
  CHECK(fixed.propose(round) == 0.5);
  fixed.feedback(0, std::nullopt);
  CHECK(fixed.propose(round) == 0.5);
  fixed.feedback(0, std::nullopt);

  RandomContract r1(9), r2(9);
  double a = r1.propose(round);
  CHECK(a == r2.propose(round));
  CHECK(a >= 0.0);
  CHECK(a < 1.0);
  r1.feedback(0, std::nullopt);
  r2.feedback(0, std::nullopt);
  CHECK(r1.propose(round) == r2.propose(round));

  auto greedy = make_greedy_myopic(Setting::CostContext, 2);
  CHECK(greedy->name() == "greedy_myopic");
  double g = greedy->propose(round);
  CHECK(g >= 0.0);
  CHECK(g <= 1.0);

  auto rgreedy = make_greedy_myopic(Setting::RewardContext, 2);
  GameRound rr;
  rr.setting = Setting::RewardContext;
  rr.actions = {{0, 0.0, Vec::Zero(2)}, {1, 0.25, (Vec(2) << 0.6, 0).finished()}};
  double gr = rgreedy->propose(rr);
  // optimistic reward 0.6 with cost 0.25: min-pay = 5/12
  CHECK(gr == Catch::Approx(0.25 / 0.6).margin(1e-9));
}

TEST_CASE("pricing reduction identity and bisection") {
  CounterRng rng(71);
  for (int i = 0; i < 1000; ++i) {
    int d = 2 + static_cast<int>(rng.uniform() * 3);
    Vec mu = rng.in_ball(d);
    Vec theta = rng.in_ball(d);
    double lhs = pricing_context(mu).dot(pricing_hidden(theta));
    REQUIRE(std::abs(lhs - (1.0 - mu.dot(theta))) < 1e-12);
  }

  // fixed 1-D value: midpoint pricing halves the consistent interval
  MidpointPricing inner(1);
  Vec ctx = (Vec(1) << 1.0).finished();
  double value = 0.37;
  double width_before = 2.0;
  for (int k = 0; k < 20; ++k) {
    double p = inner.propose_price(ctx);
    inner.feedback(p <= value);
  }
  double hi = support(inner.body(), ctx).value;
  double lo = -support(inner.body(), Vec(-ctx)).value;
  CHECK(hi - lo <= width_before * std::pow(2.0, -19));
  CHECK(lo - 1e-9 <= value);
  CHECK(value <= hi + 1e-9);
}
