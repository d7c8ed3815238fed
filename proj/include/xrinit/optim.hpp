#pragma once

#include <functional>
#include <limits>
#include <vector>

#include "xrinit/common.hpp"

namespace xrinit {

XRINIT_DEFINE_ERROR(NonFiniteObjective);

struct DfoOptions {
  double initial_radius = 1.0;
  double final_radius = 1e-6;
  int max_evals = 1000;
};

struct DfoResult {
  VecX x;
  double f = 0.0;
  int evals = 0;
  std::vector<VecX> accepted;  // sequence of accepted best points
};

namespace detail {

/// Quadratic model m(s) = c + g.s + 0.5 s'Hs fitted to sample points in
/// trust-region coordinates. Falls back to linear(+diagonal) forms when few
/// samples are available. All decisions downstream are invariant to a
/// positive rescaling of f because the coefficients scale linearly with it.
struct QuadModel {
  double c = 0.0;
  VecX g;
  MatX h;

  double value(const VecX& s) const { return c + g.dot(s) + 0.5 * s.dot(h * s); }
};

inline QuadModel fit_quad_model(const std::vector<VecX>& pts, const std::vector<double>& fs,
                                const VecX& center, double radius, int n) {
  const int cols_full = 1 + n + n * (n + 1) / 2;
  const int cols_diag = 1 + 2 * n;
  const int rows = static_cast<int>(pts.size());

  enum { FULL, DIAG, LIN } form = rows >= cols_full ? FULL : (rows >= cols_diag ? DIAG : LIN);
  const int cols = form == FULL ? cols_full : (form == DIAG ? cols_diag : 1 + n);

  MatX a(rows, cols);
  VecX b(rows);
  for (int r = 0; r < rows; ++r) {
    const VecX s = (pts[static_cast<std::size_t>(r)] - center) / radius;
    int c = 0;
    a(r, c++) = 1.0;
    for (int i = 0; i < n; ++i) a(r, c++) = s(i);
    if (form == FULL) {
      for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) a(r, c++) = s(i) * s(j);
    } else if (form == DIAG) {
      for (int i = 0; i < n; ++i) a(r, c++) = s(i) * s(i);
    }
    b(r) = fs[static_cast<std::size_t>(r)];
  }

  MatX ata = a.transpose() * a;
  const double ridge = 1e-10 * (ata.trace() / cols + 1.0);
  ata.diagonal().array() += ridge;
  const VecX coef = ata.ldlt().solve(a.transpose() * b);

  QuadModel mdl;
  mdl.c = coef(0);
  mdl.g = coef.segment(1, n);
  mdl.h = MatX::Zero(n, n);
  if (form == FULL) {
    int c = 1 + n;
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j) {
        const double q = coef(c++);
        if (i == j)
          mdl.h(i, i) = 2.0 * q;
        else {
          mdl.h(i, j) = q;
          mdl.h(j, i) = q;
        }
      }
  } else if (form == DIAG) {
    for (int i = 0; i < n; ++i) mdl.h(i, i) = 2.0 * coef(1 + n + i);
  }
  return mdl;
}

/// Coordinate descent on the model inside the (trust ∩ bound) box in
/// s-coordinates; exact per-coordinate quadratic minimization.
inline VecX solve_subproblem(const QuadModel& m, const VecX& slo, const VecX& shi, int n) {
  VecX s = VecX::Zero(n);
  for (int i = 0; i < n; ++i) s(i) = std::clamp(0.0, slo(i), shi(i));
  for (int pass = 0; pass < 16; ++pass) {
    for (int i = 0; i < n; ++i) {
      const double gi = m.g(i) + m.h.row(i).dot(s) - m.h(i, i) * s(i);
      const double hii = m.h(i, i);
      double best;
      if (hii > 0.0) {
        best = std::clamp(-gi / hii, slo(i), shi(i));
      } else {
        // concave or flat along this axis: pick the better endpoint
        const double flo = gi * slo(i) + 0.5 * hii * slo(i) * slo(i);
        const double fhi = gi * shi(i) + 0.5 * hii * shi(i) * shi(i);
        best = flo <= fhi ? slo(i) : shi(i);
      }
      s(i) = best;
    }
  }
  return s;
}

}  // namespace detail

/// Derivative-free bound-constrained local minimizer: an interpolated
/// quadratic model over recent samples, minimized within a shrinking trust
/// region. Terminates when the radius falls below final_radius or the
/// evaluation budget is exhausted. Deterministic, and f(x*) <= f(x0).
inline DfoResult minimize_df(const std::function<double(const VecX&)>& f, const VecX& x0,
                             const VecX& lower, const VecX& upper, const DfoOptions& opt) {
  const int n = static_cast<int>(x0.size());
  if (lower.size() != n || upper.size() != n) throw Error("minimize_df: bound size mismatch");

  VecX xb = x0.cwiseMax(lower).cwiseMin(upper);

  std::vector<VecX> pts;
  std::vector<double> fs;
  int evals = 0;

  auto eval = [&](const VecX& x) {
    const double v = f(x);
    ++evals;
    pts.push_back(x);
    fs.push_back(std::isfinite(v) ? v : std::numeric_limits<double>::infinity());
    return fs.back();
  };

  DfoResult res;
  double fb = eval(xb);
  if (!std::isfinite(fb)) throw NonFiniteObjective("minimize_df: objective not finite at x0");
  res.accepted.push_back(xb);

  double radius = opt.initial_radius;
  const double radius_cap = 32.0 * opt.initial_radius;

  auto stencil = [&](double r) {
    for (int i = 0; i < n && evals < opt.max_evals; ++i) {
      for (double sgn : {1.0, -1.0}) {
        if (evals >= opt.max_evals) break;
        VecX x = xb;
        x(i) = std::clamp(xb(i) + sgn * r, lower(i), upper(i));
        if ((x - xb).lpNorm<Eigen::Infinity>() < 1e-14 * (1.0 + std::abs(xb(i)))) continue;
        const double v = eval(x);
        if (v < fb) {
          fb = v;
          xb = x;
          res.accepted.push_back(xb);
        }
      }
    }
  };
  stencil(radius);

  int stall = 0;
  while (evals < opt.max_evals && radius >= opt.final_radius) {
    // fit on samples near the current best
    std::vector<VecX> sel_p;
    std::vector<double> sel_f;
    const double reach = 4.0 * radius;
    for (std::size_t i = pts.size(); i-- > 0;) {
      if (!std::isfinite(fs[i])) continue;
      if ((pts[i] - xb).lpNorm<Eigen::Infinity>() <= reach) {
        sel_p.push_back(pts[i]);
        sel_f.push_back(fs[i]);
        if (sel_p.size() >= 120) break;
      }
    }
    if (static_cast<int>(sel_p.size()) < n + 1) {
      stencil(radius);
      if (evals >= opt.max_evals) break;
      continue;
    }

    const detail::QuadModel mdl = detail::fit_quad_model(sel_p, sel_f, xb, radius, n);
    VecX slo(n), shi(n);
    for (int i = 0; i < n; ++i) {
      slo(i) = std::max(-1.0, (lower(i) - xb(i)) / radius);
      shi(i) = std::min(1.0, (upper(i) - xb(i)) / radius);
    }
    const VecX s = detail::solve_subproblem(mdl, slo, shi, n);
    const double pred = mdl.value(VecX::Zero(n)) - mdl.value(s);

    if (s.lpNorm<Eigen::Infinity>() < 1e-12 || !(pred > 0.0)) {
      radius *= 0.5;
      stencil(radius);
      continue;
    }

    const VecX xt = xb + radius * s;
    const double ft = eval(xt);
    const double rho = (fb - ft) / pred;

    if (ft < fb) {
      fb = ft;
      xb = xt;
      res.accepted.push_back(xb);
      stall = 0;
    } else {
      ++stall;
    }

    if (rho >= 0.7 && s.lpNorm<Eigen::Infinity>() >= 0.9) {
      radius = std::min(2.0 * radius, radius_cap);
    } else if (rho < 0.1) {
      radius *= 0.5;
    }
    if (stall >= 3) {
      stencil(radius);
      stall = 0;
    }
  }

  res.x = xb;
  res.f = fb;
  res.evals = evals;
  return res;
}

}  // namespace xrinit
