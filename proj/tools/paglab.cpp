// Experiment runner for contextual principal-agent games: run single
// learner/environment loops, scaling grids, invariant suites, and spherical
// code generation, with CSV/SVG/JSON outputs.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "pag/codes.hpp"
#include "pag/harness.hpp"
#include "pag/volumes.hpp"

namespace {

pag::RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config " + path);
  nlohmann::json j;
  in >> j;
  return pag::RunConfig::from_json(j);
}

std::string out_path(const std::string& dir, const std::string& name) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  return (fs::path(dir) / name).string();
}

int cmd_run(const pag::RunConfig& cfg, const std::string& outdir, bool want_svg) {
  pag::Trajectory traj = pag::run(cfg);
  std::string base = cfg.learner + "_" + cfg.environment + "_T" + std::to_string(cfg.T) + "_s" +
                     std::to_string(cfg.seed);
  pag::emit_csv(traj, out_path(outdir, base + ".csv"));

  nlohmann::json summary = {
      {"config", traj.config},
      {"rounds", traj.rounds},
      {"halted", traj.halted},
      {"regret", traj.regret},
      {"regret_pess", traj.regret_pess},
      {"theta_hat", std::vector<double>(traj.theta_hat.data(),
                                        traj.theta_hat.data() + traj.theta_hat.size())},
      {"runtime_ms", traj.runtime_ms}};
  std::ofstream(out_path(outdir, base + ".json")) << summary.dump(2) << "\n";

  if (want_svg) {
    pag::Series cum{"cumulative regret", {}}, cump{"cumulative pessimistic regret", {}};
    double a = 0, b = 0;
    for (const auto& r : traj.records) {
      a += r.regret;
      b += r.regret_pess;
      cum.points.emplace_back(static_cast<double>(r.t), a);
      cump.points.emplace_back(static_cast<double>(r.t), b);
    }
    pag::emit_svg({cum, cump}, out_path(outdir, base + ".svg"));
  }
  std::cout << base << ": rounds=" << traj.rounds << (traj.halted ? " (halted)" : "")
            << " regret=" << traj.regret << " regret_pess=" << traj.regret_pess << "\n";
  return 0;
}

int cmd_verify(std::uint64_t seed) {
  using namespace pag;
  int failures = 0;
  auto check = [&](bool ok, const std::string& what) {
    std::cout << (ok ? "[ ok ] " : "[FAIL] ") << what << "\n";
    if (!ok) ++failures;
  };

  // envelope structure against a dense grid on random instances
  {
    CounterRng rng(seed);
    bool ok = true;
    for (int trial = 0; trial < 50 && ok; ++trial) {
      ResolvedInstance inst;
      inst.actions.push_back({0, 0.0, 0.0});
      int n = 2 + static_cast<int>(rng.uniform() * 4);
      for (int i = 1; i <= n; ++i)
        inst.actions.push_back({i, rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0)});
      OptResult a = opt_profit(inst);
      OptResult b = brute_force_opt_contract(inst, 1e-3);
      if (std::abs(a.value - b.value) > 1e-9) ok = false;
      double prev = -1e300;
      for (double x = 0.0; x <= 1.0; x += 1e-3) {
        double u = agent_indirect_utility(inst, x);
        if (u < prev - 1e-9) ok = false;  // non-decreasing
        prev = u;
      }
    }
    check(ok, "envelope and opt-profit agree with grid oracles");
  }

  // adversary validity: replay reproducibility on small runs
  {
    bool ok = true;
    for (const char* envname : {"adv1", "adv2", "adv3", "adv4", "adv5"}) {
      RunConfig cfg;
      cfg.environment = envname;
      cfg.setting = (std::string(envname) == "adv3" || std::string(envname) == "adv5") ? "reward"
                                                                                        : "cost";
      cfg.learner = "random";
      cfg.d = std::string(envname) == "adv1" ? 2 : 3;
      cfg.T = 128;
      cfg.adv_delta = std::string(envname) == "adv1" ? 0.1 : 0.05;
      if (std::string(envname) == "adv3" || std::string(envname) == "adv5") cfg.adv_delta = 0.05;
      cfg.seed = seed;
      cfg.options.mode = BenchmarkMode::ClosedForm;
      if (std::string(envname) == "adv1") cfg.options.mode = BenchmarkMode::ExactConsistent;
      try {
        run(cfg);
      } catch (const std::exception& e) {
        std::cerr << envname << ": " << e.what() << "\n";
        ok = false;
      }
    }
    check(ok, "adversaries 1-5 finalize consistently against a random learner");
  }

  // geometry: polygon lemma checks
  {
    CounterRng rng(seed + 1);
    bool ok = true;
    for (int trial = 0; trial < 40 && ok; ++trial) {
      ConvexBody disk = ConvexBody::unit_ball(2);
      int cuts = static_cast<int>(rng.uniform() * 3);
      for (int i = 0; i < cuts; ++i) {
        Vec w = rng.unit_vector(2);
        disk = disk.cut(w, rng.uniform(0.2, 0.9));
      }
      Polygon2D poly = body_to_polygon(disk, 256);
      auto vols = polygon_intrinsic_volumes(poly);
      Eigen::Vector2d mu(rng.normal(), rng.normal());
      mu.normalize();
      double smax = poly.support(mu), smin = -poly.support(-mu);
      double r = smax - rng.uniform(0.05, 1.0) * std::min(1.0, smax - smin);
      auto clipped = clip(poly, mu, r);
      if (!clipped) continue;
      auto vols2 = polygon_intrinsic_volumes(*clipped);
      double w = (smax - r);
      bool found = false;
      for (int j = 1; j <= 2; ++j)
        if (vols.potential_term(j) - vols2.potential_term(j) >= 0.5 * std::pow(w, j) - 1e-9)
          found = true;
      if (!found) ok = false;
    }
    check(ok, "potential decay holds on random polygon cuts");
  }

  // spherical codes validate
  {
    auto c = generate_circle(0.3);
    auto g = generate_greedy(3, 0.8, 8, 200000, seed);
    check(validate(c) && validate(g.code), "generated spherical codes certify their angle");
  }

  std::cout << (failures == 0 ? "verify: all checks passed\n" : "verify: FAILURES\n");
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"contextual principal-agent game laboratory"};
  app.require_subcommand(1);

  std::string outdir = pag::default_out_dir();
  std::string config_path;

  pag::RunConfig cfg;
  long K = -1;
  double delta = -1, adv_delta = -1;
  bool want_svg = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config file");
    sub->add_option("--setting", cfg.setting, "cost | reward");
    sub->add_option("--learner", cfg.learner, "alg1 | alg2 | fixed:<x> | random | greedy | reduction");
    sub->add_option("--env", cfg.environment, "adv1..adv5 | random | two_action");
    sub->add_option("--T", cfg.T, "number of rounds");
    sub->add_option("--d", cfg.d, "context dimension");
    sub->add_option("--delta", delta, "learner delta override");
    sub->add_option("--adv-delta", adv_delta, "adversary delta");
    sub->add_option("--K", K, "exploration-detection threshold");
    sub->add_option("--cost-floor", cfg.cost_floor, "Assumption 5.1 constant");
    sub->add_option("--seed", cfg.seed, "RNG seed");
    sub->add_option("--theta-grid", cfg.options.theta_grid, "grid points per free dimension");
    sub->add_option("--out", outdir, "output directory (default $PAGLAB_OUT or .)");
  };

  auto* run_cmd = app.add_subcommand("run", "run one learner-environment loop");
  add_common(run_cmd);
  run_cmd->add_flag("--svg", want_svg, "emit a cumulative-regret SVG");

  auto* scale_cmd = app.add_subcommand("scale", "regret scaling over a T grid");
  add_common(scale_cmd);
  std::vector<long> T_list{500, 2000, 8000};
  std::vector<std::uint64_t> seeds{1, 2, 3};
  scale_cmd->add_option("--T-list", T_list, "rounds grid");
  scale_cmd->add_option("--seeds", seeds, "seeds");

  auto* verify_cmd = app.add_subcommand("verify", "run the invariant suites");
  std::uint64_t vseed = 20240901;
  verify_cmd->add_option("--seed", vseed, "seed");

  auto* codes_cmd = app.add_subcommand("codes", "generate or validate spherical codes");
  int cdim = 2;
  double cangle = 0.3;
  int ctarget = 0;
  long ctrials = 400000;
  std::uint64_t cseed = 1;
  std::string codes_out, codes_in;
  codes_cmd->add_option("--dim", cdim, "code dimension (paper's d-1)");
  codes_cmd->add_option("--angle", cangle, "minimal angle (radians)");
  codes_cmd->add_option("--target", ctarget, "target size (0 = circle maximum)");
  codes_cmd->add_option("--trials", ctrials, "sampling budget");
  codes_cmd->add_option("--seed", cseed, "seed");
  codes_cmd->add_option("--out", codes_out, "write code JSON here");
  codes_cmd->add_option("--validate", codes_in, "validate an existing code JSON");

  CLI11_PARSE(app, argc, argv);

  try {
    if (!config_path.empty()) cfg = load_config(config_path);
    if (delta >= 0) cfg.delta = delta;
    if (adv_delta >= 0) cfg.adv_delta = adv_delta;
    if (K >= 0) cfg.K = K;
    cfg.options.seed = cfg.seed;

    if (run_cmd->parsed()) return cmd_run(cfg, outdir, want_svg);

    if (scale_cmd->parsed()) {
      auto res = pag::scaling_experiment(cfg, T_list, seeds,
                                         out_path(outdir, "scaling.csv"),
                                         out_path(outdir, "scaling.svg"));
      for (const auto& r : res.rows)
        std::cout << "T=" << r.T << " regret=" << r.mean_regret
                  << " regret_pess=" << r.mean_regret_pess << "\n";
      std::cout << "fitted slope (regret): " << res.slope_regret
                << "  (pessimistic): " << res.slope_regret_pess << "\n";
      return 0;
    }

    if (verify_cmd->parsed()) return cmd_verify(vseed);

    if (codes_cmd->parsed()) {
      if (!codes_in.empty()) {
        std::ifstream in(codes_in);
        nlohmann::json j;
        in >> j;
        auto code = pag::SphericalCode::from_json(j);
        bool ok = pag::validate(code);
        std::cout << (ok ? "valid" : "INVALID") << " code: dim=" << code.dim
                  << " size=" << code.size() << " min_angle=" << code.min_angle << "\n";
        return ok ? 0 : 1;
      }
      pag::SphericalCode code;
      if (cdim == 2 && ctarget == 0) {
        code = pag::generate_circle(cangle);
      } else {
        auto res = pag::generate_greedy(cdim, cangle, ctarget, ctrials, cseed);
        code = res.code;
        if (!res.reached_target)
          std::cerr << "warning: target " << ctarget << " not reached (got " << code.size()
                    << ")\n";
      }
      std::cout << "generated " << code.size() << " codewords at min angle " << cangle << "\n";
      if (!codes_out.empty()) std::ofstream(codes_out) << code.to_json().dump(2) << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
