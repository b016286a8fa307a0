#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "pag/game.hpp"
#include "pag/rng.hpp"

namespace pag {

// Finite set of unit vectors with certified minimal pairwise angle. The
// adversaries only need existence plus certification, so generation is
// randomized and every emitted code goes through validate().
struct SphericalCode {
  int dim = 0;            // ambient dimension (the paper's d - 1)
  double min_angle = 0.0; // certified alpha
  std::vector<Vec> words;

  std::size_t size() const { return words.size(); }

  nlohmann::json to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& w : words) arr.push_back(std::vector<double>(w.data(), w.data() + dim));
    return {{"dim", dim}, {"min_angle", min_angle}, {"words", arr}};
  }

  static SphericalCode from_json(const nlohmann::json& j) {
    SphericalCode c;
    c.dim = j.at("dim").get<int>();
    c.min_angle = j.at("min_angle").get<double>();
    for (const auto& w : j.at("words")) {
      Vec v(c.dim);
      for (int i = 0; i < c.dim; ++i) v[i] = w.at(i).get<double>();
      c.words.push_back(v);
    }
    return c;
  }
};

inline bool validate(const SphericalCode& code) {
  const double ca = std::cos(code.min_angle);
  for (const auto& w : code.words)
    if (std::abs(w.norm() - 1.0) > 1e-12) return false;
  for (std::size_t i = 0; i < code.words.size(); ++i)
    for (std::size_t j = i + 1; j < code.words.size(); ++j)
      if (code.words[i].dot(code.words[j]) > ca + 1e-9) return false;
  return true;
}

// Equally spaced points on the unit circle; exactly floor(2 pi / alpha) of
// them, so the realized spacing is >= alpha.
inline SphericalCode generate_circle(double alpha) {
  if (alpha <= 0.0 || alpha > std::numbers::pi) throw std::invalid_argument("alpha out of range");
  int n = static_cast<int>(std::floor(2.0 * std::numbers::pi / alpha));
  n = std::max(n, 2);
  SphericalCode code;
  code.dim = 2;
  code.min_angle = alpha;
  for (int i = 0; i < n; ++i) {
    double ang = 2.0 * std::numbers::pi * i / n;
    Vec w(2);
    w << std::cos(ang), std::sin(ang);
    code.words.push_back(w);
  }
  if (!validate(code)) throw std::logic_error("circle code failed validation");
  return code;
}

struct GreedyCodeResult {
  SphericalCode code;
  bool reached_target = false;
};

namespace detail {

// Spread a configuration by repelling near neighbors; increases the minimal
// pairwise angle toward a locally optimal packing.
inline void respread(std::vector<Vec>& pts, int iters) {
  const std::size_t n = pts.size();
  if (n < 2) return;
  const int dim = static_cast<int>(pts.front().size());
  for (int it = 0; it < iters; ++it) {
    double step = 0.25 * (1.0 - static_cast<double>(it) / iters) + 0.01;
    std::vector<Vec> next(n, Vec::Zero(dim));
    for (std::size_t i = 0; i < n; ++i) {
      Vec f = Vec::Zero(dim);
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        double dot = std::clamp(pts[i].dot(pts[j]), -1.0, 1.0);
        f -= std::exp(10.0 * (dot - 1.0)) * pts[j];
      }
      Vec cand = pts[i] + step * f;
      double nn = cand.norm();
      next[i] = nn > 1e-12 ? Vec(cand / nn) : pts[i];
    }
    pts = next;
  }
}

inline double min_pairwise_angle(const std::vector<Vec>& pts) {
  double m = std::numbers::pi;
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = i + 1; j < pts.size(); ++j)
      m = std::min(m, std::acos(std::clamp(pts[i].dot(pts[j]), -1.0, 1.0)));
  return m;
}

}  // namespace detail

// Rejection-sampled greedy packing. Plain rejection saturates below tight
// targets (random sequential packing jams early), so a stalled attempt is
// followed by a seeded repulsion repack of a fresh random configuration.
// Deterministic per (dim, alpha, target, seed).
inline GreedyCodeResult generate_greedy(int dim, double alpha, int target_size, long max_trials,
                                        std::uint64_t seed) {
  if (dim < 2) throw std::invalid_argument("dim must be >= 2");
  if (dim == 2) {
    SphericalCode c = generate_circle(alpha);
    GreedyCodeResult r;
    r.reached_target = static_cast<int>(c.size()) >= target_size;
    if (static_cast<int>(c.size()) > target_size) c.words.resize(target_size);
    r.code = c;
    return r;
  }
  const double ca = std::cos(alpha);
  CounterRng rng(seed);
  std::vector<Vec> best;

  auto greedy_fill = [&](std::vector<Vec> pts, long budget) {
    long since_accept = 0;
    while (static_cast<int>(pts.size()) < target_size && since_accept < budget) {
      Vec p = rng.unit_vector(dim);
      ++since_accept;
      bool ok = true;
      for (const auto& q : pts)
        if (p.dot(q) > ca + 1e-12) {
          ok = false;
          break;
        }
      if (ok) {
        pts.push_back(p);
        since_accept = 0;
      }
    }
    return pts;
  };

  long trials_per_attempt = std::max<long>(2000, max_trials / 16);
  best = greedy_fill({}, trials_per_attempt);
  long spent = trials_per_attempt;
  while (static_cast<int>(best.size()) < target_size && spent < max_trials) {
    // repack attempt: random configuration of target size, spread, keep if valid
    std::vector<Vec> pts;
    for (int i = 0; i < target_size; ++i) pts.push_back(rng.unit_vector(dim));
    detail::respread(pts, 600);
    spent += trials_per_attempt;
    if (detail::min_pairwise_angle(pts) >= alpha - 1e-12) {
      best = pts;
      break;
    }
    std::vector<Vec> refill = greedy_fill({}, trials_per_attempt);
    if (refill.size() > best.size()) best = refill;
    spent += trials_per_attempt;
  }

  SphericalCode code;
  code.dim = dim;
  code.min_angle = alpha;
  code.words = best;
  if (!validate(code)) throw std::logic_error("greedy code failed validation");
  GreedyCodeResult r;
  r.code = code;
  r.reached_target = static_cast<int>(best.size()) >= target_size;
  return r;
}

// Lemma-style existence bound N(d, alpha) >= C sqrt(d) cos(alpha) /
// sin^{d-1}(alpha). Reference value for configuring experiments; never a
// correctness gate (C is an unspecified absolute constant).
inline double size_lower_bound(int d, double alpha, double C) {
  double s = std::sin(alpha);
  double c = std::cos(alpha);
  if (c <= 0.0) return 0.0;
  return C * std::sqrt(static_cast<double>(d)) * c / std::pow(s, d - 1);
}

}  // namespace pag
