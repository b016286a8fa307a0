#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "pag/game.hpp"
#include "pag/rng.hpp"

namespace pag {

class EmptyBodyError : public std::runtime_error {
 public:
  EmptyBodyError() : std::runtime_error("operation on empty convex body") {}
};

class WidthOutOfRange : public std::runtime_error {
 public:
  WidthOutOfRange() : std::runtime_error("threshold above the support value") {}
};

struct Halfspace {
  Vec normal;     // <normal, theta> <= offset
  double offset = 0.0;
};

struct EqualityCon {
  Vec normal;     // <normal, theta> == value
  double value = 0.0;
};

// Hypothesis-set geometry: an origin-centered ball intersected with
// halfspaces, affine equalities, and fixed coordinates. Bodies are immutable
// values; cut/slice return modified copies.
//
// Equalities are eliminated once by an orthonormal null-space
// parameterization theta = theta0 + N y; since theta0 is the min-norm
// solution, the ball constraint stays a ball in reduced coordinates.
struct Reduction {
  bool infeasible = false;   // equality system inconsistent or outside ball
  Vec theta0;                // min-norm solution of the equality system
  Mat basis;                 // d x k, orthonormal columns spanning the free space
  double radius = 0.0;       // reduced ball radius
  Mat G;                     // reduced halfspaces: G y <= h
  Vec h;
  std::vector<int> row_of;   // reduced row -> original halfspace index

  int free_dim() const { return static_cast<int>(basis.cols()); }
  Vec lift(const Vec& y) const { return free_dim() == 0 ? theta0 : Vec(theta0 + basis * y); }
};

class ConvexBody {
 public:
  ConvexBody() = default;
  explicit ConvexBody(int dim, double ball_radius = 1.0) : dim_(dim), ball_radius_(ball_radius) {
    if (dim <= 0 || ball_radius <= 0.0) throw std::invalid_argument("bad body parameters");
  }
  static ConvexBody unit_ball(int dim) { return ConvexBody(dim, 1.0); }

  int dim() const { return dim_; }
  double ball_radius() const { return ball_radius_; }
  const std::vector<Halfspace>& halfspaces() const { return halfspaces_; }
  const std::vector<EqualityCon>& equalities() const { return equalities_; }
  const std::vector<std::pair<int, double>>& fixed() const { return fixed_; }

  ConvexBody cut(const Vec& w, double b) const {
    check_dim(w);
    if (w.norm() < 1e-14) throw std::invalid_argument("zero cut normal");
    ConvexBody out = *this;
    out.halfspaces_.push_back({w, b});
    out.red_.reset();
    out.interior_.reset();
    return out;
  }

  ConvexBody slice(const Vec& mu, double r) const {
    check_dim(mu);
    if (mu.norm() < 1e-14) throw std::invalid_argument("zero slice normal");
    ConvexBody out = *this;
    out.equalities_.push_back({mu, r});
    out.red_.reset();
    out.interior_.reset();
    return out;
  }

  ConvexBody with_fixed(int index, double value) const {
    if (index < 0 || index >= dim_) throw std::invalid_argument("fixed index out of range");
    ConvexBody out = *this;
    out.fixed_.emplace_back(index, value);
    out.red_.reset();
    out.interior_.reset();
    return out;
  }

  ConvexBody drop_halfspaces(const std::vector<bool>& keep) const {
    ConvexBody out = *this;
    out.halfspaces_.clear();
    for (std::size_t i = 0; i < halfspaces_.size(); ++i)
      if (keep[i]) out.halfspaces_.push_back(halfspaces_[i]);
    out.red_.reset();
    out.interior_.reset();
    return out;
  }

  bool contains(const Vec& theta, double tol) const {
    check_dim(theta);
    if (theta.norm() > ball_radius_ + tol) return false;
    for (const auto& [idx, val] : fixed_)
      if (std::abs(theta[idx] - val) > tol) return false;
    for (const auto& eq : equalities_)
      if (std::abs(eq.normal.dot(theta) - eq.value) > tol * std::max(1.0, eq.normal.norm()))
        return false;
    for (const auto& hs : halfspaces_)
      if (hs.normal.dot(theta) > hs.offset + tol * std::max(1.0, hs.normal.norm())) return false;
    return true;
  }

  const Reduction& reduction() const {
    if (!red_) red_ = std::make_shared<Reduction>(compute_reduction());
    return *red_;
  }

  // Strictly feasible point in reduced coordinates with its margin, computed
  // once per body and shared by every solver call. nullopt when the body has
  // no interior.
  struct InteriorPoint {
    Vec y;
    double margin = 0.0;
  };
  const std::optional<InteriorPoint>& interior() const;

  nlohmann::json to_json() const {
    nlohmann::json fixed = nlohmann::json::array();
    for (const auto& [i, v] : fixed_) fixed.push_back({{"index", i}, {"value", v}});
    nlohmann::json hs = nlohmann::json::array();
    for (const auto& c : halfspaces_)
      hs.push_back({{"normal", std::vector<double>(c.normal.data(), c.normal.data() + dim_)},
                    {"offset", c.offset}});
    nlohmann::json eq = nlohmann::json::array();
    for (const auto& c : equalities_)
      eq.push_back({{"normal", std::vector<double>(c.normal.data(), c.normal.data() + dim_)},
                    {"value", c.value}});
    return {{"dim", dim_},
            {"ball_radius", ball_radius_},
            {"fixed", fixed},
            {"halfspaces", hs},
            {"equalities", eq}};
  }

  static ConvexBody from_json(const nlohmann::json& j) {
    ConvexBody b(j.at("dim").get<int>(), j.at("ball_radius").get<double>());
    for (const auto& f : j.at("fixed"))
      b.fixed_.emplace_back(f.at("index").get<int>(), f.at("value").get<double>());
    auto vec = [&](const nlohmann::json& arr) {
      Vec v(b.dim_);
      for (int i = 0; i < b.dim_; ++i) v[i] = arr.at(i).get<double>();
      return v;
    };
    for (const auto& c : j.at("halfspaces"))
      b.halfspaces_.push_back({vec(c.at("normal")), c.at("offset").get<double>()});
    for (const auto& c : j.at("equalities"))
      b.equalities_.push_back({vec(c.at("normal")), c.at("value").get<double>()});
    return b;
  }

 private:
  void check_dim(const Vec& v) const {
    if (v.size() != dim_) throw std::invalid_argument("dimension mismatch");
  }

  Reduction compute_reduction() const {
    Reduction red;
    const int rows = static_cast<int>(fixed_.size() + equalities_.size());
    if (rows == 0) {
      red.theta0 = Vec::Zero(dim_);
      red.basis = Mat::Identity(dim_, dim_);
      red.radius = ball_radius_;
    } else {
      Mat A = Mat::Zero(rows, dim_);
      Vec b(rows);
      int r = 0;
      for (const auto& [idx, val] : fixed_) {
        A(r, idx) = 1.0;
        b[r++] = val;
      }
      for (const auto& eq : equalities_) {
        A.row(r) = eq.normal.transpose();
        b[r++] = eq.value;
      }
      Eigen::JacobiSVD<Mat> svd(A, Eigen::ComputeThinU | Eigen::ComputeFullV);
      double smax = svd.singularValues().size() ? svd.singularValues()[0] : 0.0;
      double cutoff = std::max(1e-12, 1e-12 * smax);
      int rank = 0;
      for (int i = 0; i < svd.singularValues().size(); ++i)
        if (svd.singularValues()[i] > cutoff) ++rank;
      Vec z = svd.matrixU().leftCols(rank).transpose() * b;
      Vec w(rank);
      for (int i = 0; i < rank; ++i) w[i] = z[i] / svd.singularValues()[i];
      red.theta0 = svd.matrixV().leftCols(rank) * w;
      if ((A * red.theta0 - b).cwiseAbs().maxCoeff() > 1e-8) {
        red.infeasible = true;
        return red;
      }
      red.basis = svd.matrixV().rightCols(dim_ - rank);
      double rem = ball_radius_ * ball_radius_ - red.theta0.squaredNorm();
      if (rem < -1e-12) {
        red.infeasible = true;
        return red;
      }
      red.radius = std::sqrt(std::max(0.0, rem));
    }

    const int k = red.free_dim();
    std::vector<Vec> gs;
    std::vector<double> hs;
    for (std::size_t i = 0; i < halfspaces_.size(); ++i) {
      const auto& c = halfspaces_[i];
      Vec g = red.basis.transpose() * c.normal;
      double off = c.offset - c.normal.dot(red.theta0);
      if (g.norm() < 1e-12) {
        if (off < -1e-9 * std::max(1.0, c.normal.norm())) {
          red.infeasible = true;
          return red;
        }
        continue;  // satisfied everywhere on the affine slice
      }
      gs.push_back(g);
      hs.push_back(off);
      red.row_of.push_back(static_cast<int>(i));
    }
    red.G = Mat::Zero(static_cast<int>(gs.size()), k);
    red.h = Vec(static_cast<int>(gs.size()));
    for (std::size_t i = 0; i < gs.size(); ++i) {
      red.G.row(static_cast<int>(i)) = gs[i].transpose();
      red.h[static_cast<int>(i)] = hs[i];
    }
    return red;
  }

  int dim_ = 0;
  double ball_radius_ = 1.0;
  std::vector<std::pair<int, double>> fixed_;
  std::vector<Halfspace> halfspaces_;
  std::vector<EqualityCon> equalities_;
  mutable std::shared_ptr<const Reduction> red_;
  mutable std::shared_ptr<const std::optional<InteriorPoint>> interior_;
};

namespace detail {

// Small dense barrier solver for
//   min c.z   s.t.  A z <= b,  |z[0..nball)| <= rho,
// used with z = (reduced body coords [, contract]). Rows are normalized to
// unit length on construction. The central-path schedule is t <- 10 t from
// t = 1 until m / t < gap (spec'd stopping rule), with damped Newton steps.
struct BarrierProblem {
  Mat A;
  Vec b;
  Vec c;
  int nball = 0;
  double rho = 0.0;

  int nvar() const { return static_cast<int>(c.size()); }
  int nrows() const { return static_cast<int>(b.size()); }

  void normalize_rows() {
    for (int i = 0; i < nrows(); ++i) {
      double n = A.row(i).norm();
      if (n > 1e-300) {
        A.row(i) /= n;
        b[i] /= n;
      }
    }
  }

  double ball_sq(const Vec& z) const { return z.head(nball).squaredNorm(); }

  bool strictly_feasible(const Vec& z, double margin = 0.0) const {
    if (nball > 0 && ball_sq(z) >= rho * rho - margin) return false;
    for (int i = 0; i < nrows(); ++i)
      if (A.row(i).dot(z) >= b[i] - margin) return false;
    return true;
  }

  double barrier_value(const Vec& z, double t) const {
    double v = t * c.dot(z);
    if (nball > 0) {
      double q = rho * rho - ball_sq(z);
      if (q <= 0.0) return std::numeric_limits<double>::infinity();
      v -= std::log(q);
    }
    for (int i = 0; i < nrows(); ++i) {
      double s = b[i] - A.row(i).dot(z);
      if (s <= 0.0) return std::numeric_limits<double>::infinity();
      v -= std::log(s);
    }
    return v;
  }

  // One centering stage: damped Newton on t*c.z + barrier. Assembled in
  // matrix form (W = slack-scaled rows) so Eigen vectorizes the inner loop.
  void center(Vec& z, double t) const {
    const int n = nvar();
    const int m = nrows();
    Vec slack(m), sinv(m), Adz(m);
    Mat W(m, n);
    Mat hess(n, n);
    Vec grad(n), dz(n);
    for (int iter = 0; iter < 120; ++iter) {
      if (m > 0) {
        slack.noalias() = b - A * z;
        sinv = slack.cwiseInverse();
      }
      grad.noalias() = t * c;
      hess.setZero();
      if (nball > 0) {
        double q = rho * rho - ball_sq(z);
        grad.head(nball) += (2.0 / q) * z.head(nball);
        hess.topLeftCorner(nball, nball).noalias() =
            (4.0 / (q * q)) * (z.head(nball) * z.head(nball).transpose());
        for (int i = 0; i < nball; ++i) hess(i, i) += 2.0 / q;
      }
      if (m > 0) {
        grad.noalias() += A.transpose() * sinv;
        W.noalias() = sinv.asDiagonal() * A;
        hess.noalias() += W.transpose() * W;
      }
      // mild Tikhonov keeps the factorization sane when slacks collapse
      double jitter = 1e-13 * hess.trace() / n + 1e-300;
      for (int i = 0; i < n; ++i) hess(i, i) += jitter;
      dz = hess.ldlt().solve(-grad);
      double decrement = -grad.dot(dz);
      if (!(decrement > 1e-18)) break;
      double lambda = std::sqrt(decrement);

      // largest feasible step, then the damped-Newton cap
      double smax = std::numeric_limits<double>::infinity();
      if (m > 0) {
        Adz.noalias() = A * dz;
        for (int i = 0; i < m; ++i)
          if (Adz[i] > 0.0) smax = std::min(smax, slack[i] / Adz[i]);
      }
      if (nball > 0) {
        double aa = dz.head(nball).squaredNorm();
        if (aa > 0.0) {
          double bb = 2.0 * z.head(nball).dot(dz.head(nball));
          double cc = ball_sq(z) - rho * rho;
          double disc = bb * bb - 4.0 * aa * cc;
          if (disc >= 0.0) {
            double root = (-bb + std::sqrt(disc)) / (2.0 * aa);
            if (root > 0.0) smax = std::min(smax, root);
          }
        }
      }
      double step = std::min({1.0, 0.99 * smax, lambda > 0.25 ? 1.0 / (1.0 + lambda) : 1.0});

      double f0 = barrier_value(z, t);
      bool moved = false;
      while (step > 1e-18) {
        Vec zn = z + step * dz;
        double fn = barrier_value(zn, t);
        if (fn <= f0 - 0.1 * step * decrement + 1e-14 * std::abs(f0)) {
          z = zn;
          moved = true;
          break;
        }
        step *= 0.5;
      }
      if (!moved) break;
      if (lambda < 0.02) break;  // centered enough for path following
    }
  }

  // Follow the central path down to the requested duality gap. The optional
  // early_exit aborts once the objective clears the given level (phase 1 only
  // needs any comfortably feasible point, not the exact margin). Warm starts
  // may enter the path at t0 > 1; damped Newton keeps that safe.
  Vec solve(Vec z, double gap = 1e-9,
            const std::function<bool(const Vec&)>& early_exit = nullptr, double t0 = 1.0) const {
    const double m = nrows() + (nball > 0 ? 1.0 : 0.0);
    double t = t0;
    center(z, t);
    while (m / t >= gap) {
      if (early_exit && early_exit(z)) return z;
      t *= 10.0;
      center(z, t);
    }
    return z;
  }

  // Vertex polish: tighten the near-active rows exactly and keep the result
  // when it is feasible and at least as good. Turns barrier-accurate optima
  // into machine-accurate ones on generic instances.
  Vec polish(const Vec& z_barrier, double slack_tol) const {
    const int n = nvar();
    std::vector<int> active;
    for (int i = 0; i < nrows(); ++i)
      if (b[i] - A.row(i).dot(z_barrier) < slack_tol) active.push_back(i);
    bool ball_active = nball > 0 && (rho - std::sqrt(ball_sq(z_barrier))) < slack_tol;
    if (active.empty() && !ball_active) return z_barrier;

    Vec z = z_barrier;
    const int rows = static_cast<int>(active.size()) + (ball_active ? 1 : 0);
    for (int it = 0; it < 12; ++it) {
      Mat J(rows, n);
      Vec F(rows);
      for (std::size_t i = 0; i < active.size(); ++i) {
        J.row(static_cast<int>(i)) = A.row(active[i]);
        F[static_cast<int>(i)] = A.row(active[i]).dot(z) - b[active[i]];
      }
      if (ball_active) {
        Vec g = Vec::Zero(n);
        g.head(nball) = 2.0 * z.head(nball);
        J.row(rows - 1) = g.transpose();
        F[rows - 1] = ball_sq(z) - rho * rho;
      }
      Vec dz = J.completeOrthogonalDecomposition().solve(-F);
      z += dz;
      if (dz.norm() < 1e-14) break;
    }
    bool ok = c.dot(z) <= c.dot(z_barrier) + 1e-9 && strictly_feasible(z, -1e-9);
    // strictly_feasible with negative margin allows boundary points
    return ok ? z : z_barrier;
  }
};

// Phase-1 margin maximization: max s with A z + s ||a_i|| <= b over the fixed
// ball. Returns (z, margin); margin < tol means empty.
struct Phase1Result {
  Vec z;
  double margin = 0.0;
};

inline Phase1Result phase1(const Mat& A, const Vec& b, int nball, double rho) {
  const int n = static_cast<int>(A.cols());
  if (b.size() == 0) {
    Phase1Result r;
    r.z = Vec::Zero(n);
    r.margin = rho;
    return r;
  }
  BarrierProblem p;
  const int m = static_cast<int>(b.size());
  p.A = Mat::Zero(m, n + 1);
  p.b = b;
  for (int i = 0; i < m; ++i) {
    double nr = std::max(A.row(i).norm(), 1e-12);
    p.A.row(i).head(n) = A.row(i) / nr;
    p.A(i, n) = 1.0;
    p.b[i] = b[i] / nr;
  }
  p.c = Vec::Zero(n + 1);
  p.c[n] = -1.0;  // maximize s
  p.nball = nball;
  p.rho = rho;

  Vec z0 = Vec::Zero(n + 1);
  double smin = p.b.minCoeff();
  z0[n] = smin > 0.0 ? 0.5 * std::min(smin, rho > 0 ? rho : smin) : smin - 1.0;
  // the interior iterate doubles as a strictly feasible phase-2 start, so no
  // vertex polish here; the stopping gap already bounds the margin error.
  // Bail out as soon as the margin is comfortably positive.
  double comfortable = 1e-4 * std::max(rho, 1.0);
  Vec z = p.solve(z0, 1e-10, [&](const Vec& zz) { return zz[n] > comfortable; });
  Phase1Result r;
  r.z = z.head(n);
  r.margin = z[n];
  return r;
}

}  // namespace detail

inline const std::optional<ConvexBody::InteriorPoint>& ConvexBody::interior() const {
  if (!interior_) {
    const Reduction& red = reduction();
    std::optional<InteriorPoint> ip;
    if (!red.infeasible) {
      const int k = red.free_dim();
      if (k == 0 || red.radius < 1e-12) {
        bool ok = true;
        for (int i = 0; i < red.h.size(); ++i)
          if (red.h[i] / std::max(red.G.row(i).norm(), 1e-12) < -1e-9) ok = false;
        if (ok) ip = InteriorPoint{Vec::Zero(k), 0.0};
      } else if (red.h.size() == 0) {
        ip = InteriorPoint{Vec::Zero(k), red.radius};
      } else {
        auto ph = detail::phase1(red.G, red.h, k, red.radius);
        if (ph.margin >= 1e-10) ip = InteriorPoint{ph.z, ph.margin};
      }
    }
    interior_ = std::make_shared<const std::optional<InteriorPoint>>(std::move(ip));
  }
  return *interior_;
}

struct SupportResult {
  double value = 0.0;
  Vec maximizer;
};

inline bool is_empty(const ConvexBody& body, double tol = 1e-10) {
  const Reduction& red = body.reduction();
  if (red.infeasible) return true;
  if (red.free_dim() == 0 || red.radius < 1e-12) {
    // point body: inequality slack only, equality-reduced
    for (int i = 0; i < red.h.size(); ++i) {
      double nr = std::max(red.G.row(i).norm(), 1e-12);
      if (red.h[i] / nr < -1e-9) return true;
    }
    return false;
  }
  if (red.h.size() == 0) return false;
  const auto& ip = body.interior();
  return !ip || ip->margin < tol;
}

inline SupportResult support(const ConvexBody& body, const Vec& mu, double gap = 1e-8) {
  const Reduction& red = body.reduction();
  if (red.infeasible) throw EmptyBodyError();
  const int k = red.free_dim();
  Vec c_red = k > 0 ? Vec(red.basis.transpose() * mu) : Vec();
  double base = mu.dot(red.theta0);

  if (k == 0 || red.radius < 1e-12 || (k > 0 && c_red.norm() < 1e-14)) {
    if (red.h.size() > 0 && is_empty(body)) throw EmptyBodyError();
    return SupportResult{base, red.theta0};
  }
  if (red.h.size() == 0) {
    Vec y = (red.radius / c_red.norm()) * c_red;
    return SupportResult{base + c_red.norm() * red.radius, red.lift(y)};
  }

  const auto& ip = body.interior();
  if (!ip) throw EmptyBodyError();
  detail::BarrierProblem p;
  p.A = red.G;
  p.b = red.h;
  p.c = -c_red / c_red.norm();  // maximize <c_red, y>
  p.nball = k;
  p.rho = red.radius;
  p.normalize_rows();
  Vec y = p.solve(ip->y, gap, nullptr, ip->margin > 1e-6 ? 100.0 : 1.0);
  y = p.polish(y, 1e-6);
  return SupportResult{base + c_red.dot(y), red.lift(y)};
}

inline SupportResult min_support(const ConvexBody& body, const Vec& mu, double gap = 1e-8) {
  SupportResult r = support(body, Vec(-mu), gap);
  r.value = -r.value;
  return r;
}

inline double information_width(const ConvexBody& body, const Vec& mu, double r) {
  double s = support(body, mu).value;
  if (r > s + 1e-7) throw WidthOutOfRange();
  return std::max(0.0, s - r);
}

inline Vec analytic_center(const ConvexBody& body) {
  const Reduction& red = body.reduction();
  if (red.infeasible) throw EmptyBodyError();
  const int k = red.free_dim();
  if (k == 0 || red.radius < 1e-12) return red.theta0;
  if (red.h.size() == 0) return red.theta0;  // ball center
  const auto& ip = body.interior();
  if (!ip) throw EmptyBodyError();
  detail::BarrierProblem p;
  p.A = red.G;
  p.b = red.h;
  p.c = Vec::Zero(k);
  p.nball = k;
  p.rho = red.radius;
  p.normalize_rows();
  Vec y = ip->y;
  p.center(y, 1.0);
  return red.lift(y);
}

struct MinPayResult {
  double x = 0.0;
  Vec theta;
};

// Remark-4.2 program: minimize x over (theta, x) in body x [0,1] subject to
// action `a` being a weak best response in the cost-context round. nullopt
// means the action cannot be incentivized anywhere on the body.
inline std::optional<MinPayResult> min_pay_over_body(const GameRound& round, int a,
                                                     const ConvexBody& body, double gap = 1e-8) {
  if (round.setting != Setting::CostContext)
    throw std::invalid_argument("min_pay_over_body expects a cost-context round");
  const Reduction& red = body.reduction();
  if (red.infeasible) throw EmptyBodyError();
  const int k = red.free_dim();
  const ContextAction& target = round.actions.at(a);

  // rows over z = (y, x): <N^T dmu, y> - x dr <= -<dmu, theta0>
  const int nact = static_cast<int>(round.actions.size());
  std::vector<Vec> rows;
  std::vector<double> rhs;
  for (int j = 0; j < nact; ++j) {
    if (j == a) continue;
    Vec dmu = target.context - round.actions[j].context;
    double dr = target.known - round.actions[j].known;
    Vec row = Vec::Zero(k + 1);
    if (k > 0) row.head(k) = red.basis.transpose() * dmu;
    row[k] = -dr;
    double off = -dmu.dot(red.theta0);
    if (row.norm() < 1e-14) {
      if (off < -1e-12) return std::nullopt;
      continue;
    }
    rows.push_back(row);
    rhs.push_back(off);
  }
  // body halfspaces and the contract box
  for (int i = 0; i < red.h.size(); ++i) {
    Vec row = Vec::Zero(k + 1);
    row.head(k) = red.G.row(i).transpose();
    rows.push_back(row);
    rhs.push_back(red.h[i]);
  }
  {
    Vec lo = Vec::Zero(k + 1), hi = Vec::Zero(k + 1);
    lo[k] = -1.0;
    hi[k] = 1.0;
    rows.push_back(lo);
    rhs.push_back(0.0);  // -x <= 0
    rows.push_back(hi);
    rhs.push_back(1.0);  // x <= 1
  }

  Mat A(static_cast<int>(rows.size()), k + 1);
  Vec b(static_cast<int>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    A.row(static_cast<int>(i)) = rows[i].transpose();
    b[static_cast<int>(i)] = rhs[i];
  }

  if (k == 0 || red.radius < 1e-12) {
    // single-point body: closed-form interval in x
    double lo = 0.0, hi = 1.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      double coef = rows[i][k];
      double off = rhs[i];
      if (std::abs(coef) < 1e-14) {
        if (off < -1e-10) return std::nullopt;
        continue;
      }
      if (coef > 0)
        hi = std::min(hi, off / coef);
      else
        lo = std::max(lo, off / coef);
    }
    if (lo > hi + 1e-12) return std::nullopt;
    return MinPayResult{std::clamp(lo, 0.0, 1.0), red.theta0};
  }

  // strictly feasible start: the body's cached interior point plus any x
  // strictly inside the contract window it induces; full phase 1 only when
  // the window at that point degenerates
  std::optional<Vec> start;
  bool warm = false;
  if (const auto& ip = body.interior(); ip && ip->margin > 1e-8) {
    // every x-free row (body rows, equal-reward comparisons) must hold
    // strictly at the interior point; the rest define a contract window
    double lo = 0.0, hi = 1.0;
    bool ok = true;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      double coef = rows[i][k];
      double rest = rhs[i] - rows[i].head(k).dot(ip->y);
      if (std::abs(coef) < 1e-14) {
        if (rest < 1e-10 * std::max(1.0, rows[i].norm())) {
          ok = false;
          break;
        }
        continue;
      }
      if (coef > 0)
        hi = std::min(hi, rest / coef);
      else
        lo = std::max(lo, rest / coef);
    }
    if (ok && lo + 1e-9 < hi) {
      Vec z0(k + 1);
      z0.head(k) = ip->y;
      z0[k] = 0.5 * (lo + hi);
      start = z0;
      warm = true;
    }
  }
  if (!start) {
    auto ph = detail::phase1(A, b, k, red.radius);
    if (ph.margin < 1e-10) return std::nullopt;
    start = ph.z;
  }
  detail::BarrierProblem p;
  p.A = A;
  p.b = b;
  p.c = Vec::Zero(k + 1);
  p.c[k] = 1.0;
  p.nball = k;
  p.rho = red.radius;
  p.normalize_rows();
  Vec z = p.solve(*start, gap, nullptr, warm ? 100.0 : 1.0);
  z = p.polish(z, 1e-6);
  return MinPayResult{std::clamp(z[k], 0.0, 1.0), red.lift(z.head(k))};
}

struct OptimisticResult {
  Vec theta;
  double x = 0.0;
  int action = 0;
  double value = 0.0;
};

// Optimistic principal utility over the body: run the min-pay program per
// action and keep the best (1 - x_min) * reward.
inline OptimisticResult optimistic_profit(const GameRound& round, const ConvexBody& body,
                                          double gap = 1e-8) {
  if (round.setting != Setting::CostContext)
    throw std::invalid_argument("optimistic_profit expects a cost-context round");
  OptimisticResult best;
  bool have = false;
  std::vector<int> order(round.actions.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (round.actions[a].known != round.actions[b].known)
      return round.actions[a].known > round.actions[b].known;
    return a < b;
  });
  for (int a : order) {
    double r = round.actions[static_cast<std::size_t>(a)].known;
    if (have && r <= best.value + 1e-12) break;  // even a free contract cannot win
    auto mp = min_pay_over_body(round, a, body, gap);
    if (!mp) continue;
    double v = (1.0 - mp->x) * r;
    if (!have || v > best.value + 1e-12 || (std::abs(v - best.value) <= 1e-12 && a < best.action)) {
      best = OptimisticResult{mp->theta, mp->x, a, v};
      have = true;
    }
  }
  if (!have) {
    // pathological: nothing incentivizable; fall back to the trivial action
    best = OptimisticResult{analytic_center(body), 0.0, 0, 0.0};
  }
  return best;
}

// Euclidean projection onto the body by Dykstra's alternating scheme; every
// elementary set (ball, halfspace, affine slice) projects in closed form.
inline Vec project(const ConvexBody& body, const Vec& p, int max_iter = 400) {
  const Reduction& red = body.reduction();
  if (red.infeasible) throw EmptyBodyError();
  const bool has_affine = red.free_dim() < body.dim();
  const auto& hs = body.halfspaces();
  if (!has_affine && hs.empty()) {
    double n = p.norm();
    return n <= body.ball_radius() ? p : Vec(p * (body.ball_radius() / n));
  }

  const int nsets = 1 + static_cast<int>(hs.size()) + (has_affine ? 1 : 0);
  std::vector<Vec> corr(nsets, Vec::Zero(body.dim()));
  Vec x = p;
  for (int it = 0; it < max_iter; ++it) {
    Vec prev = x;
    int s = 0;
    auto apply = [&](auto&& proj) {
      Vec yin = x + corr[s];
      Vec yout = proj(yin);
      corr[s] = yin - yout;
      x = yout;
      ++s;
    };
    apply([&](const Vec& v) {
      double n = v.norm();
      return n <= body.ball_radius() ? v : Vec(v * (body.ball_radius() / n));
    });
    for (const auto& c : hs)
      apply([&](const Vec& v) {
        double viol = c.normal.dot(v) - c.offset;
        if (viol <= 0.0) return v;
        return Vec(v - (viol / c.normal.squaredNorm()) * c.normal);
      });
    if (has_affine)
      apply([&](const Vec& v) {
        return Vec(red.theta0 + red.basis * (red.basis.transpose() * (v - red.theta0)));
      });
    if ((x - prev).norm() < 1e-12) break;
  }
  return x;
}

// Hit-and-run samples from the reduced body; used for containment spot
// checks, so mild non-uniformity from finite burn-in is acceptable.
inline std::vector<Vec> hit_and_run(const ConvexBody& body, int count, CounterRng& rng) {
  const Reduction& red = body.reduction();
  if (red.infeasible) throw EmptyBodyError();
  const int k = red.free_dim();
  std::vector<Vec> out;
  out.reserve(count);
  if (k == 0 || red.radius < 1e-12) {
    for (int i = 0; i < count; ++i) out.push_back(red.theta0);
    return out;
  }
  Vec y;
  if (red.h.size() == 0) {
    y = Vec::Zero(k);
  } else {
    const auto& ip = body.interior();
    if (!ip) throw EmptyBodyError();
    y = ip->y;
  }
  int burn = 16 + 4 * k;
  int every = 3;
  int made = 0, step = 0;
  while (made < count) {
    Vec u = rng.unit_vector(k);
    // chord of the ball
    double b2 = y.dot(u), c2 = y.squaredNorm() - red.radius * red.radius;
    double disc = b2 * b2 - c2;
    if (disc <= 0) continue;
    double tlo = -b2 - std::sqrt(disc), thi = -b2 + std::sqrt(disc);
    for (int i = 0; i < red.h.size(); ++i) {
      double gu = red.G.row(i).dot(u);
      double slack = red.h[i] - red.G.row(i).dot(y);
      if (std::abs(gu) < 1e-14) continue;
      double bound = slack / gu;
      if (gu > 0)
        thi = std::min(thi, bound);
      else
        tlo = std::max(tlo, bound);
    }
    if (thi <= tlo) continue;
    double t = rng.uniform(tlo, thi);
    y = y + t * u;
    ++step;
    if (step > burn && step % every == 0) {
      out.push_back(red.lift(y));
      ++made;
    }
  }
  return out;
}

}  // namespace pag
