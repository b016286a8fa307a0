#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "pag/harness.hpp"

using namespace pag;

namespace {

// plays the optimal contract for the known hidden vector; regret oracle
class OmniscientLearner : public Learner {
 public:
  explicit OmniscientLearner(Vec theta) : theta_(std::move(theta)) {}
  std::string name() const override { return "omniscient"; }
  double propose(const GameRound& round) override {
    begin_propose();
    return opt_profit(resolve(round, theta_)).x;
  }
  void feedback(int, std::optional<double>) override { begin_feedback(); }

 private:
  Vec theta_;
};

}  // namespace

TEST_CASE("omniscient learner has zero Stackelberg regret") {
  RandomEnvironment env(2, 60, 23, Setting::CostContext);
  OmniscientLearner omni(env.hidden());
  RunOptions opt;
  auto traj = run_loop(omni, env, opt);
  CHECK(stackelberg_regret(traj) == Catch::Approx(0.0).margin(1e-9));
  CHECK(pessimistic_regret(traj) >= -1e-9);
}

TEST_CASE("pessimistic regret dominates classic regret") {
  for (auto setting : {Setting::CostContext, Setting::RewardContext}) {
    RandomEnvironment env(2, 40, 31, setting);
    RandomContract learner(5);
    RunOptions opt;
    auto traj = run_loop(learner, env, opt);
    CHECK(traj.regret_pess >= traj.regret - 1e-6);
    for (const auto& r : traj.records) {
      CHECK(r.regret_pess >= r.regret - 1e-6);
      CHECK(r.bench_optimistic >= r.bench_hindsight - 1e-6);  // benchmark dominance
    }
  }
}

TEST_CASE("cost-context consistent-set benchmark dominates the hindsight value") {
  RandomEnvironment env(2, 40, 37, Setting::CostContext);
  Alg1Learner alg(2, 0.3);
  RunOptions opt;
  opt.mode = BenchmarkMode::ExactConsistent;
  auto traj = run_loop(alg, env, opt);
  for (const auto& r : traj.records) {
    CHECK(r.bench_optimistic >= r.bench_hindsight - 1e-6);
    // the learner-body value upper-bounds the consistent-set value
    CHECK(r.learner_optimistic >= r.bench_optimistic - 1e-6);
  }
}

TEST_CASE("reward grid benchmark agrees with the exact value on a singleton") {
  RandomEnvironment env(2, 10, 41, Setting::RewardContext);
  auto round = env.next_round();
  REQUIRE(round);
  Vec theta = env.hidden();
  ConvexBody point = ConvexBody(2, 1.0).with_fixed(0, theta[0]).with_fixed(1, theta[1]);
  double grid = reward_grid_benchmark(*round, point, 41);
  double exact = opt_profit(resolve(*round, theta)).value;
  CHECK(grid == Catch::Approx(exact).margin(1e-9));
}

TEST_CASE("grid and convex-program benchmarks agree on cost rounds") {
  CounterRng rng(43);
  RandomEnvironment env(2, 8, 47, Setting::CostContext);
  ConvexBody body = ConvexBody::unit_ball(2).cut(rng.unit_vector(2), 0.4);
  while (auto round = env.next_round()) {
    double via_program = optimistic_profit(*round, body).value;
    // theta-grid oracle, projected onto the body
    double via_grid = -1e300;
    const int G = 41;
    for (int i = 0; i < G; ++i)
      for (int j = 0; j < G; ++j) {
        Vec th(2);
        th << -1.0 + 2.0 * i / (G - 1), -1.0 + 2.0 * j / (G - 1);
        th = project(body, th);
        via_grid = std::max(via_grid, opt_profit(resolve(*round, th, true)).value);
      }
    CHECK(via_program >= via_grid - 1e-6);
    CHECK(via_program <= via_grid + 0.15);  // grid Lipschitz slack
    auto [a, reward] = env.respond(0.5);
    (void)a;
    (void)reward;
  }
}

TEST_CASE("trajectories are deterministic and CSV re-parses to the same numbers") {
  RunConfig cfg;
  cfg.setting = "cost";
  cfg.learner = "alg1";
  cfg.environment = "random";
  cfg.T = 30;
  cfg.d = 2;
  cfg.seed = 11;
  auto t1 = run(cfg);
  auto t2 = run(cfg);
  REQUIRE(t1.rounds == t2.rounds);
  for (long i = 0; i < t1.rounds; ++i) {
    const auto& a = t1.records[static_cast<std::size_t>(i)];
    const auto& b = t2.records[static_cast<std::size_t>(i)];
    CHECK(a.x == b.x);
    CHECK(a.action == b.action);
    CHECK(a.utility == b.utility);
  }

  std::string path = "test_traj.csv";
  emit_csv(t1, path);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "t,x,action,utility,bench_hindsight,bench_optimistic,regret,regret_pess,branch");
  long rows = 0;
  std::string line;
  double regret_sum = 0.0;
  while (std::getline(in, line)) {
    ++rows;
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    REQUIRE(fields.size() == 9);
    regret_sum += std::stod(fields[6]);
  }
  CHECK(rows == t1.rounds);
  CHECK(regret_sum == Catch::Approx(t1.regret).margin(1e-9));
  std::remove(path.c_str());

  // bit-identical CSV across replays
  emit_csv(t2, path);
  std::stringstream s1, s2;
  {
    std::ifstream f(path);
    s2 << f.rdbuf();
  }
  emit_csv(t1, path);
  {
    std::ifstream f(path);
    s1 << f.rdbuf();
  }
  CHECK(s1.str() == s2.str());
  std::remove(path.c_str());
}

TEST_CASE("SVG output is well-formed XML-ish") {
  Series s{"demo", {{1, 1}, {10, 5}, {100, 20}}};
  std::string path = "test_plot.svg";
  emit_svg({s}, path, true, true);
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  std::string svg = ss.str();
  CHECK(svg.rfind("<?xml", 0) == 0);
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("</svg>") != std::string::npos);
  CHECK(svg.find("<polyline") != std::string::npos);
  // crude balance check: every opened tag type is closed or self-closed
  size_t opens = 0, closes = 0;
  for (size_t i = 0; i + 1 < svg.size(); ++i) {
    if (svg[i] == '<' && svg[i + 1] != '/' && svg[i + 1] != '?') ++opens;
    if (svg[i] == '<' && svg[i + 1] == '/') ++closes;
    if (svg[i] == '/' && svg[i + 1] == '>') ++closes;
  }
  CHECK(opens == closes);
  std::remove(path.c_str());
}

TEST_CASE("scaling experiment emits a table with a fitted slope") {
  RunConfig cfg;
  cfg.setting = "cost";
  cfg.learner = "fixed:0.5";
  cfg.environment = "adv1";
  cfg.d = 2;
  auto res = scaling_experiment(cfg, {256, 1024, 4096}, {1, 2});
  REQUIRE(res.rows.size() == 3);
  // fixed learner halts after sqrt(T) rounds with regret (1/32) T^{1/4}:
  // slope of log regret vs log T is 1/4
  CHECK(res.slope_regret == Catch::Approx(0.25).margin(0.02));
}

TEST_CASE("theta-hat retention: the true vector stays inside both bodies") {
  // 100 seeded runs of each algorithm on truthful environments
  for (int seed = 0; seed < 100; ++seed) {
    {
      RandomEnvironment env(2, 30, 1000 + seed, Setting::CostContext);
      Alg1Learner alg(2, 0.3);
      RunOptions opt;
      opt.mode = BenchmarkMode::LearnerBound;
      auto traj = run_loop(alg, env, opt);
      REQUIRE(alg.body().contains(env.hidden(), 1e-7));
    }
    {
      RandomEnvironment env(2, 30, 2000 + seed, Setting::RewardContext);
      Alg2Learner alg(2, delta_schedule_reward(2, 30, 0.1), 0.1);
      RunOptions opt;
      opt.track_consistent_set = false;
      auto traj = run_loop(alg, env, opt);
      REQUIRE(alg.body().contains(env.hidden(), 1e-7));
    }
  }
}

TEST_CASE("sampled consistent set is contained in the learner body") {
  CounterRng rng(53);
  for (int seed = 0; seed < 5; ++seed) {
    RandomEnvironment env(2, 40, 3000 + seed, Setting::CostContext);
    Alg1Learner alg(2, 0.3);
    ConsistentSet cs(2);
    while (auto round = env.next_round()) {
      double x = alg.propose(*round);
      auto [a, reward] = env.respond(x);
      alg.feedback(a, reward);
      cs.observe(*round, x, a, reward);
    }
    auto samples = hit_and_run(cs.body(), 1000, rng);
    for (const auto& s : samples) REQUIRE(alg.body().contains(s, 1e-6));
  }
}

TEST_CASE("pricing reduction matches the direct pricing simulation round for round") {
  const int d = 2;
  const long T = 300;

  auto env = make_two_action_environment(d, T, 71);
  PricingReductionLearner wrapped(d, std::make_unique<MidpointPricing>(d + 1));

  // direct simulation: same inner learner on the pricing view
  MidpointPricing direct(d + 1);
  auto env2 = make_two_action_environment(d, T, 71);
  auto* re2 = dynamic_cast<RandomEnvironment*>(env2.get());
  Vec theta = re2->hidden();

  long matches = 0, rounds = 0;
  while (true) {
    auto r1 = env->next_round();
    auto r2 = env2->next_round();
    if (!r1 || !r2) break;
    ++rounds;
    double x = wrapped.propose(*r1);
    auto [a, reward] = env->respond(x);
    wrapped.feedback(a, reward);
    bool purchase_wrapped = a == 1;

    double p = direct.propose_price(pricing_context(r2->actions[1].context));
    double value = 1.0 - r2->actions[1].context.dot(theta);
    bool purchase_direct = p <= value;
    direct.feedback(purchase_direct);

    if (purchase_wrapped == purchase_direct) ++matches;
    CHECK(x == Catch::Approx(std::clamp(1.0 - p, 0.0, 1.0)).margin(1e-12));
  }
  CHECK(rounds == T);
  CHECK(matches == rounds);
}
