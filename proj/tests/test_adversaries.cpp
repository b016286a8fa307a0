#include <catch2/catch_amalgamated.hpp>

#include "pag/adversaries.hpp"
#include "pag/harness.hpp"
#include "pag/learners.hpp"

using namespace pag;

namespace {

// Newton oracle for the beta/gamma defining equations, independent of the
// closed forms under test.
double solve_defining(double delta, double rhs) {
  const double e = std::numbers::e;
  double v = 0.25;  // both roots sit near 1/(4e)..1/(2e); start above 1/(2e)
  for (int it = 0; it < 200; ++it) {
    double denom = v - 1.0 / (2.0 * e);
    double f = (1.0 - (delta / e) / denom) * v - rhs;
    double df = 1.0 - (delta / e) * (-1.0 / (denom * denom)) * v - (delta / e) / denom;
    double step = f / df;
    v -= step;
    if (std::abs(step) < 1e-15) break;
  }
  return v;
}

}  // namespace

TEST_CASE("beta/gamma closed forms satisfy their defining equations") {
  const double e = std::numbers::e;
  for (double delta : {0.1, 0.05, 0.02, 0.005}) {
    auto bg = beta_gamma(delta);  // construction already asserts residual < 1e-9
    double beta_oracle = solve_defining(delta, 1.0 / (4.0 * e) + delta / (2.0 * e));
    double gamma_oracle = solve_defining(delta, 1.0 / (4.0 * e) - delta / (2.0 * e));
    CHECK(bg.beta == Catch::Approx(beta_oracle).margin(1e-12));
    CHECK(bg.gamma == Catch::Approx(gamma_oracle).margin(1e-12));
  }
  auto bg = beta_gamma(0.1);
  CHECK(bg.beta == Catch::Approx(0.2498).margin(1e-3));
  CHECK(bg.gamma == Catch::Approx(0.2373).margin(1e-3));
  CHECK(2.0 * bg.gamma / bg.beta - 1.0 == Catch::Approx(0.8993).margin(1e-3));

  // Delta -> 0 limit: both collapse to 1/(2e)
  auto tiny = beta_gamma(1e-8);
  CHECK(tiny.beta == Catch::Approx(1.0 / (2.0 * e)).margin(1e-6));
  CHECK(tiny.gamma == Catch::Approx(1.0 / (2.0 * e)).margin(1e-6));
}

TEST_CASE("three-action adversary constants") {
  CHECK_THROWS_AS(ThreeActionAdversary(100, 0.25), std::invalid_argument);

  // Delta = (1/4) T^{-1/4} at T = 4096
  ThreeActionAdversary adv(4096, 0.03125);
  CHECK(adv.cmin() == Catch::Approx(0.2663143382).margin(1e-9));
  CHECK(adv.threshold() == Catch::Approx(71.0 / 136.0).margin(1e-12));
  CHECK(adv.radius() == Catch::Approx(std::sqrt(3.0) / 4.0).margin(1e-15));

  // the defining identity behind cmin: (1 - X)(1/2 + Delta) = 1/4 + Delta/8
  CHECK((1.0 - adv.threshold()) * (0.5 + 0.03125) ==
        Catch::Approx(0.25 + 0.03125 / 8.0).margin(1e-15));
}

TEST_CASE("three-action adversary halts after sqrt(T) passive rounds") {
  auto env = make_adversary_three_action(256, 0.25 * std::pow(256.0, -0.25));
  FixedContract fixed(0.5);
  RunOptions opt;
  opt.mode = BenchmarkMode::ExactConsistent;
  auto traj = run_loop(fixed, *env, opt);
  CHECK(traj.halted);
  CHECK(traj.rounds == 16);
  CHECK(traj.regret == Catch::Approx(std::pow(256.0, 0.25) / 32.0).margin(1e-9));
  CHECK(traj.theta_hat[0] == 0.5);
  CHECK(traj.theta_hat[1] == Catch::Approx(std::sqrt(3.0) / 4.0).margin(1e-12));
}

TEST_CASE("three-action adversary caps the radius and stays consistent") {
  // a pushy learner collapses the hypothesis interval to sqrt(3)/2
  auto env = make_adversary_three_action(512, 0.1);
  FixedContract pushy(1.0);
  RunOptions opt;
  opt.mode = BenchmarkMode::ExactConsistent;
  auto traj = run_loop(pushy, *env, opt);  // run_loop replays and verifies
  CHECK_FALSE(traj.halted);
  CHECK(traj.rounds == 512);
  CHECK(traj.theta_hat[1] == Catch::Approx(std::sqrt(3.0) / 2.0).margin(1e-12));
}

namespace {

struct ReplayCheck {
  long rounds = 0;
  bool exact = true;
};

// strict tie-broken replay: finalize must reproduce every action exactly
ReplayCheck strict_replay(Learner& learner, Environment& env) {
  std::vector<std::pair<GameRound, std::pair<double, int>>> log;
  while (auto round = env.next_round()) {
    double x = learner.propose(*round);
    auto [a, reward] = env.respond(x);
    learner.feedback(a, reward);
    log.push_back({*round, {x, a}});
  }
  Vec theta = env.finalize();
  ReplayCheck rc;
  rc.rounds = static_cast<long>(log.size());
  for (auto& [round, xa] : log)
    if (best_response(resolve(round, theta), xa.first) != xa.second) rc.exact = false;
  return rc;
}

std::unique_ptr<Environment> build_adversary(const std::string& name, long T, std::uint64_t) {
  AdversaryConfig cfg;
  cfg.T = T;
  cfg.d = 3;
  cfg.delta = 0.05;
  if (name == "adv1") return make_adversary_three_action(T, 0.25 * std::pow(double(T), -0.25));
  if (name == "adv2") return make_adversary_cost_opt(cfg);
  if (name == "adv3") {
    cfg.delta = 0.02;
    return make_adversary_reward_opt(cfg);
  }
  cfg.K = 32;
  if (name == "adv4") return make_adversary_cost_stackelberg(cfg);
  cfg.delta = 0.02;
  return make_adversary_reward_stackelberg(cfg);
}

std::unique_ptr<Learner> build_learner(const std::string& name, Setting setting, int d,
                                       std::uint64_t seed) {
  if (name == "alg") {
    if (setting == Setting::CostContext)
      return std::make_unique<Alg1Learner>(d, delta_schedule_cost(d, 256));
    return std::make_unique<Alg2Learner>(d, delta_schedule_reward(d, 256, 0.09), 0.09);
  }
  if (name == "fixed") return std::make_unique<FixedContract>(0.5);
  return std::make_unique<RandomContract>(seed);
}

}  // namespace

TEST_CASE("all five adversaries replay exactly against alg/fixed/random") {
  for (const std::string envname : {"adv1", "adv2", "adv3", "adv4", "adv5"}) {
    for (const std::string lname : {"alg", "fixed", "random"}) {
      auto env = build_adversary(envname, 256, 7);
      auto learner = build_learner(lname, env->setting(), env->dim(), 7);
      INFO(envname << " vs " << lname);
      auto rc = strict_replay(*learner, *env);
      REQUIRE(rc.exact);
      REQUIRE(rc.rounds >= 1);
    }
  }
}

TEST_CASE("code adversaries never answer the unknown action") {
  CounterRng rng(83);
  for (const std::string envname : {"adv2", "adv3", "adv4", "adv5"}) {
    auto env = build_adversary(envname, 64, 11);
    RandomContract driver(13);
    long probes = 0;
    while (auto round = env->next_round()) {
      REQUIRE(env->confinement_applies());
      for (int i = 0; i < 40; ++i) {
        int a = env->probe_response(rng.uniform());
        REQUIRE(a >= 0);
        REQUIRE(a <= 2);  // trivial, club, spade only
        ++probes;
      }
      double x = driver.propose(*round);
      auto [a, reward] = env->respond(x);
      driver.feedback(a, reward);
      REQUIRE(a <= 2);
    }
    REQUIRE(probes >= 1000);
  }
}

TEST_CASE("code adversary context norms and resolved values stay legal") {
  for (const std::string envname : {"adv2", "adv3"}) {
    auto env = build_adversary(envname, 256, 3);
    RandomContract driver(5);
    std::vector<GameRound> rounds;
    while (auto round = env->next_round()) {
      round->validate();  // norms <= 1, trivial action well formed
      rounds.push_back(*round);
      auto [a, reward] = env->respond(driver.propose(*round));
      driver.feedback(a, reward);
    }
    Vec theta = env->finalize();
    for (const auto& r : rounds) {
      auto inst = resolve(r, theta);  // throws on negative resolved values
      for (const auto& act : inst.actions) {
        REQUIRE(act.cost >= -1e-12);
        REQUIRE(act.reward >= -1e-12);
      }
    }
  }
}

TEST_CASE("adversary-2 geometry: boundary cost identity and radius floor") {
  const double e = std::numbers::e;
  const double delta = 0.05;
  AdversaryConfig cfg;
  cfg.T = 512;
  cfg.d = 3;
  cfg.delta = delta;
  auto env = make_adversary_cost_opt(cfg);
  auto* adv = dynamic_cast<CodeAdversary*>(env.get());
  REQUIRE(adv != nullptr);

  FixedContract pushy(0.9);  // above X: cuts every round
  long t = 0;
  while (auto round = env->next_round()) {
    ++t;
    REQUIRE(adv->radius() >= std::sqrt(3.0) / (2.0 * e) - 1e-12);
    if (t % 64 == 1) {
      // min over the hypothesis set of the heart cost equals the identity
      Vec mu_heart = round->actions[3].context;
      double lo = -support(adv->hypothesis_body(), Vec(-mu_heart)).value;
      double expect = 1.0 / (4.0 * e) +
                      delta / (8.0 * e) * (2.0 + 3.0 * delta) / (1.0 + delta);
      REQUIRE(lo == Catch::Approx(expect).margin(1e-6));
    }
    auto [a, reward] = env->respond(pushy.propose(*round));
    pushy.feedback(a, reward);
  }
  CHECK(t == 512);
}

TEST_CASE("adversary construction rejections") {
  AdversaryConfig cfg;
  cfg.T = 100000;
  cfg.d = 3;
  cfg.delta = 0.05;
  // circle code of 88 words < T Delta^2 = 250
  CHECK_THROWS_AS(make_adversary_cost_opt(cfg), CodeTooSmall);

  cfg.T = 100;
  cfg.d = 2;
  CHECK_THROWS_AS(make_adversary_cost_opt(cfg), std::invalid_argument);

  // reward side at Delta = 0.05 supports only ~550 rounds with a circle code
  AdversaryConfig rc;
  rc.T = 2000;
  rc.d = 3;
  rc.delta = 0.05;
  CHECK_THROWS_AS(make_adversary_reward_opt(rc), CodeTooSmall);
  rc.delta = 0.02;
  CHECK_NOTHROW(make_adversary_reward_opt(rc));
}

TEST_CASE("stackelberg adversaries halt by both mechanisms") {
  AdversaryConfig cfg;
  cfg.T = 10000;
  cfg.d = 3;
  cfg.delta = 0.17;
  cfg.K = 50;

  SECTION("passive learner trips the counter") {
    auto env = make_adversary_cost_stackelberg(cfg);
    FixedContract fixed(0.5);
    RunOptions opt;
    opt.mode = BenchmarkMode::ClosedForm;
    auto traj = run_loop(fixed, *env, opt);
    CHECK(traj.halted);
    CHECK(traj.rounds == 50);
  }
  SECTION("aggressive learner exhausts the cycle budget with >= T/K cuts") {
    auto env = make_adversary_cost_stackelberg(cfg);
    FixedContract pushy(1.0);
    RunOptions opt;
    opt.mode = BenchmarkMode::ClosedForm;
    auto traj = run_loop(pushy, *env, opt);
    CHECK(traj.halted);
    CHECK(traj.rounds >= 10000 / 50);
  }
}

TEST_CASE("random environment reproducibility and truthfulness") {
  auto env1 = make_random_environment(2, 50, 17, Setting::CostContext);
  auto env2 = make_random_environment(2, 50, 17, Setting::CostContext);
  FixedContract f1(0.4), f2(0.4);
  RunOptions opt;
  auto t1 = run_loop(f1, *env1, opt);
  auto t2 = run_loop(f2, *env2, opt);
  REQUIRE(t1.rounds == t2.rounds);
  for (long i = 0; i < t1.rounds; ++i) {
    CHECK(t1.records[static_cast<std::size_t>(i)].action ==
          t2.records[static_cast<std::size_t>(i)].action);
    CHECK(t1.records[static_cast<std::size_t>(i)].utility ==
          t2.records[static_cast<std::size_t>(i)].utility);
  }
}
