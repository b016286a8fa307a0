#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "pag/convex.hpp"
#include "pag/rng.hpp"

namespace pag {

class DegeneratePolygon : public std::runtime_error {
 public:
  DegeneratePolygon() : std::runtime_error("polygon is not a full-dimensional convex region") {}
};

struct VolumeVector {
  int dim = 0;
  std::vector<double> values;   // V_0 .. V_dim
  std::vector<double> stderrs;  // empty for exact computations

  double potential() const {
    double phi = 0.0, fact = 1.0;
    for (int j = 1; j <= dim; ++j) {
      fact *= j;
      phi += fact * values[static_cast<std::size_t>(j)];
    }
    return phi;
  }
  double potential_term(int j) const {
    double fact = 1.0;
    for (int i = 2; i <= j; ++i) fact *= i;
    return fact * values.at(static_cast<std::size_t>(j));
  }
};

// Volume of the unit ball in dimension n (kappa_n in the Steiner formula).
inline double unit_ball_volume(int n) {
  if (n == 0) return 1.0;
  if (n == 1) return 2.0;
  return unit_ball_volume(n - 2) * 2.0 * std::numbers::pi / n;
}

// Counterclockwise convex polygon; construction enforces convexity and a
// strictly positive area so the intrinsic volumes are those of a 2-body.
class Polygon2D {
 public:
  explicit Polygon2D(std::vector<Eigen::Vector2d> vertices) : v_(std::move(vertices)) {
    if (v_.size() < 3) throw DegeneratePolygon();
    double a2 = 0.0;
    const std::size_t n = v_.size();
    for (std::size_t i = 0; i < n; ++i) {
      const auto& p = v_[i];
      const auto& q = v_[(i + 1) % n];
      a2 += p.x() * q.y() - q.x() * p.y();
    }
    if (a2 < 0) std::reverse(v_.begin(), v_.end());
    for (std::size_t i = 0; i < n; ++i) {
      Eigen::Vector2d e1 = v_[(i + 1) % n] - v_[i];
      Eigen::Vector2d e2 = v_[(i + 2) % n] - v_[(i + 1) % n];
      if (e1.x() * e2.y() - e1.y() * e2.x() < -1e-12) throw DegeneratePolygon();
    }
    if (area() <= 1e-14) throw DegeneratePolygon();
  }

  const std::vector<Eigen::Vector2d>& vertices() const { return v_; }

  double area() const {
    double a2 = 0.0;
    const std::size_t n = v_.size();
    for (std::size_t i = 0; i < n; ++i) {
      const auto& p = v_[i];
      const auto& q = v_[(i + 1) % n];
      a2 += p.x() * q.y() - q.x() * p.y();
    }
    return 0.5 * std::abs(a2);
  }

  double perimeter() const {
    double s = 0.0;
    const std::size_t n = v_.size();
    for (std::size_t i = 0; i < n; ++i) s += (v_[(i + 1) % n] - v_[i]).norm();
    return s;
  }

  double support(const Eigen::Vector2d& mu) const {
    double s = -std::numeric_limits<double>::infinity();
    for (const auto& p : v_) s = std::max(s, mu.dot(p));
    return s;
  }

 private:
  std::vector<Eigen::Vector2d> v_;
};

inline VolumeVector polygon_intrinsic_volumes(const Polygon2D& p) {
  VolumeVector v;
  v.dim = 2;
  v.values = {1.0, 0.5 * p.perimeter(), p.area()};
  return v;
}

// Sutherland-Hodgman clip of a convex polygon by <normal, x> <= offset.
// Returns the raw vertex chain; empty or degenerate results are possible.
inline std::vector<Eigen::Vector2d> clip_chain(const std::vector<Eigen::Vector2d>& poly,
                                               const Eigen::Vector2d& normal, double offset) {
  std::vector<Eigen::Vector2d> out;
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector2d& p = poly[i];
    const Eigen::Vector2d& q = poly[(i + 1) % n];
    double dp = normal.dot(p) - offset;
    double dq = normal.dot(q) - offset;
    if (dp <= 0) out.push_back(p);
    if ((dp < 0 && dq > 0) || (dp > 0 && dq < 0)) {
      double t = dp / (dp - dq);
      out.push_back(p + t * (q - p));
    }
  }
  // drop duplicate vertices introduced at touching corners
  std::vector<Eigen::Vector2d> dedup;
  for (const auto& p : out) {
    if (dedup.empty() || (p - dedup.back()).norm() > 1e-13) dedup.push_back(p);
  }
  if (dedup.size() >= 2 && (dedup.front() - dedup.back()).norm() < 1e-13) dedup.pop_back();
  return dedup;
}

inline std::optional<Polygon2D> clip(const Polygon2D& poly, const Eigen::Vector2d& normal,
                                     double offset) {
  auto chain = clip_chain(poly.vertices(), normal, offset);
  if (chain.size() < 3) return std::nullopt;
  try {
    return Polygon2D(chain);
  } catch (const DegeneratePolygon&) {
    return std::nullopt;
  }
}

// Exact halfspace intersection of the k-gon inscribed in the ball with the
// body's halfspaces; 2-D only. Equality-sliced bodies are segments and throw.
inline Polygon2D body_to_polygon(const ConvexBody& body, int k = 512) {
  if (body.dim() != 2) throw std::invalid_argument("body_to_polygon needs d = 2");
  if (!body.fixed().empty() || !body.equalities().empty()) throw DegeneratePolygon();
  if (is_empty(body)) throw EmptyBodyError();
  std::vector<Eigen::Vector2d> verts;
  verts.reserve(k);
  for (int i = 0; i < k; ++i) {
    double ang = 2.0 * std::numbers::pi * i / k;
    verts.emplace_back(body.ball_radius() * std::cos(ang), body.ball_radius() * std::sin(ang));
  }
  for (const auto& hs : body.halfspaces()) {
    verts = clip_chain(verts, Eigen::Vector2d(hs.normal[0], hs.normal[1]), hs.offset);
    if (verts.size() < 3) throw DegeneratePolygon();
  }
  return Polygon2D(verts);
}

// Monte-Carlo Steiner fit: estimate vol(body + eps B) by rejection sampling
// (distance to the body via Dykstra projection), then least-squares fit of
// the Steiner polynomial with V_0 = 1 pinned. Counter-based RNG indexed by
// sample id keeps the estimate independent of the thread count.
inline VolumeVector steiner_fit(const ConvexBody& body, const std::vector<double>& epsilons,
                                long samples, std::uint64_t seed) {
  const int d = body.dim();
  if (d > 3) throw std::invalid_argument("steiner_fit supports d <= 3");
  if (epsilons.size() < 3) throw std::invalid_argument("need at least 3 epsilon values");
  for (double e : epsilons)
    if (e <= 0.0 || e > 1.0) throw std::invalid_argument("epsilons must lie in (0, 1]");
  if (is_empty(body)) throw EmptyBodyError();

  double emax = *std::max_element(epsilons.begin(), epsilons.end());
  double Rb = body.ball_radius() + emax;
  double box_vol = unit_ball_volume(d) * std::pow(Rb, d);

  const bool pure_ball =
      body.halfspaces().empty() && body.equalities().empty() && body.fixed().empty();
  const int ne = static_cast<int>(epsilons.size());
  const int nthreads = std::max(1u, std::thread::hardware_concurrency());
  std::vector<std::vector<long>> hits(nthreads, std::vector<long>(ne + 1, 0));
  CounterRng base(seed);

  auto worker = [&](int tid) {
    auto& h = hits[static_cast<std::size_t>(tid)];
    for (long i = tid; i < samples; i += nthreads) {
      CounterRng r = base.split(static_cast<std::uint64_t>(i));
      Vec p(d);
      double n2;
      do {
        for (int j = 0; j < d; ++j) p[j] = r.uniform(-Rb, Rb);
        n2 = p.squaredNorm();
      } while (n2 > Rb * Rb);
      double dist;
      if (pure_ball) {
        dist = std::max(0.0, p.norm() - body.ball_radius());
      } else {
        dist = (p - project(body, p)).norm();
      }
      if (dist <= 1e-14) ++h[0];
      for (int j = 0; j < ne; ++j)
        if (dist <= epsilons[static_cast<std::size_t>(j)]) ++h[static_cast<std::size_t>(j) + 1];
    }
  };
  {
    std::vector<std::thread> pool;
    for (int tid = 1; tid < nthreads; ++tid) pool.emplace_back(worker, tid);
    worker(0);
    for (auto& th : pool) th.join();
  }

  std::vector<long> tot(ne + 1, 0);
  for (const auto& h : hits)
    for (int j = 0; j <= ne; ++j) tot[static_cast<std::size_t>(j)] += h[static_cast<std::size_t>(j)];

  // data points: (eps = 0, vol(S)) plus each epsilon
  std::vector<double> es{0.0};
  es.insert(es.end(), epsilons.begin(), epsilons.end());
  Vec vols(ne + 1), sigs(ne + 1);
  for (int j = 0; j <= ne; ++j) {
    double frac = static_cast<double>(tot[static_cast<std::size_t>(j)]) / samples;
    vols[j] = box_vol * frac;
    sigs[j] = box_vol * std::sqrt(std::max(frac * (1.0 - frac), 1e-12) / samples);
  }

  // subtract the known kappa_d * V_0 * eps^d term, fit V_1..V_d
  Mat X(ne + 1, d);
  Vec y(ne + 1);
  for (int i = 0; i <= ne; ++i) {
    double e = es[static_cast<std::size_t>(i)];
    y[i] = vols[i] - unit_ball_volume(d) * std::pow(e, d);
    for (int j = 1; j <= d; ++j) X(i, j - 1) = unit_ball_volume(d - j) * std::pow(e, d - j);
  }
  Vec coef = (X.transpose() * X).ldlt().solve(X.transpose() * y);
  Mat cov = (X.transpose() * X).inverse();

  VolumeVector v;
  v.dim = d;
  v.values.assign(static_cast<std::size_t>(d) + 1, 0.0);
  v.stderrs.assign(static_cast<std::size_t>(d) + 1, 0.0);
  v.values[0] = 1.0;
  double sig2 = sigs.mean() * sigs.mean();
  for (int j = 1; j <= d; ++j) {
    v.values[static_cast<std::size_t>(j)] = coef[j - 1];
    v.stderrs[static_cast<std::size_t>(j)] = std::sqrt(std::max(0.0, cov(j - 1, j - 1) * sig2));
  }
  return v;
}

inline double potential(const VolumeVector& v) { return v.potential(); }
inline double potential_term(const VolumeVector& v, int j) { return v.potential_term(j); }

// Closed-form Phi(B_d) bound used by the regret analysis: d (2 pi d)^{d/2}.
inline double ball_potential_bound(int d) {
  return d * std::pow(2.0 * std::numbers::pi * d, d / 2.0);
}

}  // namespace pag
