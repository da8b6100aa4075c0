#include "corsma/conic_solver.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include <stdexcept>

// Homogeneous self-dual embedding with Nesterov-Todd scalings over the
// nonnegative, second order and real PSD cones. Exponential rows are
// compiled away up front (tangent cuts or secant chords), so the core
// path only ever sees symmetric cones.

namespace corsma::conic {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Block {
  ConeKind kind;
  int off = 0;
  int dim = 0;  // rows for NonNeg / SecondOrder, matrix side for PsdReal
  int soc_index = -1;
  int psd_index = -1;
};

int rows_of(const Block& b) {
  return b.kind == ConeKind::PsdReal ? b.dim * (b.dim + 1) / 2 : b.dim;
}

struct Core {
  MatX G;
  VecX h, c;
  std::vector<Block> blocks;
  int degree = 0;
  int m() const { return static_cast<int>(G.rows()); }
  int n() const { return static_cast<int>(G.cols()); }
};

struct SocScale {
  double eta = 1.0;
  VecX wbar, jwbar;
};
struct PsdScale {
  MatX R, Rinv;
};
struct Scaling {
  VecX nn_w;
  std::vector<SocScale> soc;
  std::vector<PsdScale> psd;
  VecX lambda;
};

enum class Op { W, WT, Winv, WinvT };

void apply_op(const Core& core, const Scaling& sc, Op op, const VecX& in, VecX& out) {
  out.resizeLike(in);
  for (const Block& b : core.blocks) {
    const int r = rows_of(b);
    auto vi = in.segment(b.off, r);
    auto vo = out.segment(b.off, r);
    switch (b.kind) {
      case ConeKind::NonNeg: {
        auto w = sc.nn_w.segment(b.off, r);
        if (op == Op::W || op == Op::WT)
          vo = w.cwiseProduct(vi);
        else
          vo = vi.cwiseQuotient(w);
        break;
      }
      case ConeKind::SecondOrder: {
        const SocScale& s = sc.soc[b.soc_index];
        VecX jv(r);
        jv[0] = vi[0];
        jv.tail(r - 1) = -vi.tail(r - 1);
        if (op == Op::W || op == Op::WT) {
          vo = s.eta * (2.0 * s.wbar * s.wbar.dot(vi) - jv);
        } else {
          vo = (1.0 / s.eta) * (2.0 * s.jwbar * s.jwbar.dot(vi) - jv);
        }
        break;
      }
      case ConeKind::PsdReal: {
        const PsdScale& p = sc.psd[b.psd_index];
        MatX V = smat(vi);
        MatX Y;
        switch (op) {
          case Op::W: Y = p.R.transpose() * V * p.R; break;
          case Op::WT: Y = p.R * V * p.R.transpose(); break;
          case Op::Winv: Y = p.Rinv.transpose() * V * p.Rinv; break;
          case Op::WinvT: Y = p.Rinv * V * p.Rinv.transpose(); break;
        }
        vo = svec(0.5 * (Y + Y.transpose()));
        break;
      }
      default: throw std::logic_error("unexpected cone in core solver");
    }
  }
}

VecX apply_op(const Core& core, const Scaling& sc, Op op, const VecX& in) {
  VecX out;
  apply_op(core, sc, op, in, out);
  return out;
}

bool compute_scaling(Core& core, const VecX& s, const VecX& z, Scaling& sc) {
  const int m = core.m();
  sc.nn_w = VecX::Ones(m);
  sc.soc.clear();
  sc.psd.clear();
  sc.lambda = VecX::Zero(m);
  for (auto& b : core.blocks) {
    const int r = rows_of(b);
    auto sb = s.segment(b.off, r);
    auto zb = z.segment(b.off, r);
    switch (b.kind) {
      case ConeKind::NonNeg: {
        if ((sb.array() <= 0).any() || (zb.array() <= 0).any()) return false;
        sc.nn_w.segment(b.off, r) = (sb.array() / zb.array()).sqrt();
        sc.lambda.segment(b.off, r) = (sb.array() * zb.array()).sqrt();
        break;
      }
      case ConeKind::SecondOrder: {
        const double s2 = sb[0] * sb[0] - sb.tail(r - 1).squaredNorm();
        const double z2 = zb[0] * zb[0] - zb.tail(r - 1).squaredNorm();
        if (s2 <= 0 || z2 <= 0 || sb[0] <= 0 || zb[0] <= 0) return false;
        const double ss = std::sqrt(s2), zz = std::sqrt(z2);
        VecX sbar = sb / ss, zbar = zb / zz;
        const double gamma = std::sqrt((1.0 + sbar.dot(zbar)) / 2.0);
        if (!(gamma > 0)) return false;
        SocScale w;
        w.wbar = sbar;
        w.wbar[0] += zbar[0];
        w.wbar.tail(r - 1) -= zbar.tail(r - 1);
        w.wbar /= 2.0 * gamma;
        // Jordan square root of the scaling point, so that W z = W^{-T} s.
        w.wbar[0] += 1.0;
        w.wbar /= std::sqrt(2.0 * w.wbar[0]);
        w.jwbar = w.wbar;
        w.jwbar.tail(r - 1) = -w.wbar.tail(r - 1);
        w.eta = std::sqrt(ss / zz);
        b.soc_index = static_cast<int>(sc.soc.size());
        sc.soc.push_back(std::move(w));
        const double sz = std::sqrt(ss * zz);
        const double dd = sbar[0] + zbar[0] + 2.0 * gamma;
        sc.lambda[b.off] = gamma * sz;
        sc.lambda.segment(b.off + 1, r - 1) =
            (sz / dd) * ((gamma + zbar[0]) * sbar.tail(r - 1) +
                         (gamma + sbar[0]) * zbar.tail(r - 1));
        break;
      }
      case ConeKind::PsdReal: {
        MatX S = smat(sb), Z = smat(zb);
        Eigen::LLT<MatX> ls(S), lz(Z);
        if (ls.info() != Eigen::Success || lz.info() != Eigen::Success) return false;
        MatX Ls = ls.matrixL(), Lz = lz.matrixL();
        Eigen::JacobiSVD<MatX> svd(Lz.transpose() * Ls,
                                   Eigen::ComputeFullU | Eigen::ComputeFullV);
        VecX sig = svd.singularValues();
        if ((sig.array() <= 0).any()) return false;
        PsdScale p;
        VecX isq = sig.array().rsqrt();
        p.R = Ls * svd.matrixV() * isq.asDiagonal();
        p.Rinv = isq.asDiagonal() * svd.matrixU().transpose() * Lz.transpose();
        b.psd_index = static_cast<int>(sc.psd.size());
        sc.psd.push_back(std::move(p));
        sc.lambda.segment(b.off, r) = svec(MatX(sig.asDiagonal()));
        break;
      }
      default: return false;
    }
  }
  return true;
}

VecX jordan_mul(const Core& core, const VecX& a, const VecX& b) {
  VecX out(a.size());
  for (const Block& blk : core.blocks) {
    const int r = rows_of(blk);
    auto ab = a.segment(blk.off, r);
    auto bb = b.segment(blk.off, r);
    auto ob = out.segment(blk.off, r);
    switch (blk.kind) {
      case ConeKind::NonNeg: ob = ab.cwiseProduct(bb); break;
      case ConeKind::SecondOrder: {
        ob[0] = ab.dot(bb);
        ob.tail(r - 1) = ab[0] * bb.tail(r - 1) + bb[0] * ab.tail(r - 1);
        break;
      }
      case ConeKind::PsdReal: {
        MatX A = smat(ab), B = smat(bb);
        MatX P = A * B;
        ob = svec(0.5 * (P + P.transpose()));
        break;
      }
      default: break;
    }
  }
  return out;
}

// lambda \ d, the inverse of the Jordan product by the scaled point.
VecX jordan_div_lambda(const Core& core, const Scaling& sc, const VecX& d) {
  VecX out(d.size());
  for (const Block& blk : core.blocks) {
    const int r = rows_of(blk);
    auto lb = sc.lambda.segment(blk.off, r);
    auto db = d.segment(blk.off, r);
    auto ob = out.segment(blk.off, r);
    switch (blk.kind) {
      case ConeKind::NonNeg: ob = db.cwiseQuotient(lb); break;
      case ConeKind::SecondOrder: {
        const double l0 = lb[0];
        const auto l1 = lb.tail(r - 1);
        const double det = l0 * l0 - l1.squaredNorm();
        const double d0 = db[0];
        const auto d1 = db.tail(r - 1);
        ob[0] = (l0 * d0 - l1.dot(d1)) / det;
        ob.tail(r - 1) = (d1 - ob[0] * l1) / l0;
        break;
      }
      case ConeKind::PsdReal: {
        // lambda is diagonal by construction of the NT scaling.
        MatX L = smat(lb), D = smat(db);
        const Eigen::Index side = L.rows();
        MatX X(side, side);
        for (Eigen::Index i = 0; i < side; ++i)
          for (Eigen::Index j = 0; j < side; ++j) X(i, j) = 2.0 * D(i, j) / (L(i, i) + L(j, j));
        ob = svec(X);
        break;
      }
      default: break;
    }
  }
  return out;
}

VecX cone_identity(const Core& core) {
  VecX e = VecX::Zero(core.m());
  for (const Block& b : core.blocks) {
    switch (b.kind) {
      case ConeKind::NonNeg: e.segment(b.off, b.dim).setOnes(); break;
      case ConeKind::SecondOrder: e[b.off] = 1.0; break;
      case ConeKind::PsdReal: e.segment(b.off, rows_of(b)) = svec(MatX::Identity(b.dim, b.dim)); break;
      default: break;
    }
  }
  return e;
}

double block_margin(const Block& b, const VecX& v) {
  const int r = rows_of(b);
  auto vb = v.segment(b.off, r);
  switch (b.kind) {
    case ConeKind::NonNeg: return vb.minCoeff();
    case ConeKind::SecondOrder: return vb[0] - vb.tail(r - 1).norm();
    case ConeKind::PsdReal: {
      Eigen::SelfAdjointEigenSolver<MatX> es(smat(vb), Eigen::EigenvaluesOnly);
      return es.eigenvalues().minCoeff();
    }
    default: return -kInf;
  }
}

void shift_interior(const Core& core, VecX& v) {
  const VecX e = cone_identity(core);
  for (const Block& b : core.blocks) {
    const double margin = block_margin(b, v);
    // A unit margin, not mere membership: a start pinned to the boundary
    // freezes the first steps at length zero.
    if (margin < 1.0) {
      const int r = rows_of(b);
      v.segment(b.off, r) += (1.0 - margin) * e.segment(b.off, r);
    }
  }
}

double soc_exit(const VecX& p, const VecX& d) {
  const int r = static_cast<int>(p.size());
  const double a = d[0] * d[0] - d.tail(r - 1).squaredNorm();
  const double bq = 2.0 * (p[0] * d[0] - p.tail(r - 1).dot(d.tail(r - 1)));
  const double cq = p[0] * p[0] - p.tail(r - 1).squaredNorm();
  if (std::abs(a) < 1e-300) {
    if (bq < 0) return -cq / bq;
    return kInf;
  }
  const double disc = bq * bq - 4.0 * a * cq;
  if (disc < 0) return kInf;  // no crossing
  const double sq = std::sqrt(disc);
  const double qq = -(bq + (bq >= 0 ? sq : -sq)) / 2.0;
  double r1 = qq / a, r2 = (qq != 0.0) ? cq / qq : kInf;
  double best = kInf;
  if (r1 > 1e-16) best = std::min(best, r1);
  if (r2 > 1e-16) best = std::min(best, r2);
  return best;
}

// Largest t with point + t * dir inside the cone (point strictly interior).
double max_step(const Core& core, const VecX& point, const VecX& dir) {
  double t = kInf;
  for (const Block& b : core.blocks) {
    const int r = rows_of(b);
    auto pb = point.segment(b.off, r);
    auto db = dir.segment(b.off, r);
    switch (b.kind) {
      case ConeKind::NonNeg: {
        for (int i = 0; i < r; ++i)
          if (db[i] < 0) t = std::min(t, -pb[i] / db[i]);
        break;
      }
      case ConeKind::SecondOrder: t = std::min(t, soc_exit(pb, db)); break;
      case ConeKind::PsdReal: {
        MatX P = smat(VecX(pb)), D = smat(VecX(db));
        Eigen::LLT<MatX> llt(P);
        if (llt.info() != Eigen::Success) return 0.0;
        MatX L = llt.matrixL();
        MatX M = L.triangularView<Eigen::Lower>().solve(D);
        M = L.triangularView<Eigen::Lower>().solve(MatX(M.transpose()));
        Eigen::SelfAdjointEigenSolver<MatX> es(0.5 * (M + M.transpose()),
                                               Eigen::EigenvaluesOnly);
        const double mn = es.eigenvalues().minCoeff();
        if (mn < 0) t = std::min(t, -1.0 / mn);
        break;
      }
      default: break;
    }
  }
  return t;
}

struct CoreResult {
  SolveStatus status = SolveStatus::Numerical;
  VecX x, s, z;
  int iterations = 0;
  double pres = kInf, dres = kInf, relgap = kInf, gap = kInf;
};

// Normal equations solver for (M'M) dx = rhs with M = W^{-T} G. The fast path
// factors a prebuilt Gram matrix with Cholesky, which squares the conditioning
// of M; when that stalls near a degenerate optimum the QR path materializes M
// itself and polishes with refinement passes against the exact operator.
struct NormalSolver {
  bool use_qr = false;
  bool ok = false;
  int rows = 0;
  mutable double worst_res = 0.0;
  Eigen::LLT<MatX> llt;
  MatX R;
  MatX M;
  std::function<VecX(const VecX&)> normal_mv;
  std::function<MatX()> make_m;

  void factor(const MatX& S) {
    const int n = static_cast<int>(S.cols());
    worst_res = 0.0;
    if (rows < n) use_qr = false;  // QR path needs a tall matrix
    if (!use_qr) {
      double reg = 1e-12 * std::max(1.0, S.diagonal().cwiseAbs().maxCoeff());
      ok = false;
      for (int attempt = 0; attempt < 4 && !ok; ++attempt) {
        MatX Sr = S;
        Sr.diagonal().array() += reg;
        llt.compute(Sr.selfadjointView<Eigen::Lower>());
        ok = llt.info() == Eigen::Success;
        reg *= 1e3;
      }
      if (ok) {
        M.resize(0, 0);
        return;
      }
      if (rows < n) return;
      use_qr = true;
    }
    M = make_m();
    Eigen::HouseholderQR<MatX> qr(M);
    R = qr.matrixQR().topRows(n).triangularView<Eigen::Upper>();
    const double rmax = R.diagonal().cwiseAbs().maxCoeff();
    ok = std::isfinite(rmax) && rmax > 0.0;
    if (!ok) return;
    const double rmin = 1e-14 * rmax;
    for (int i = 0; i < n; ++i)
      if (std::abs(R(i, i)) < rmin) R(i, i) = R(i, i) < 0.0 ? -rmin : rmin;
  }

  VecX base(const VecX& rhs) const {
    if (!use_qr) return llt.solve(rhs);
    VecX t = rhs;
    R.transpose().triangularView<Eigen::Lower>().solveInPlace(t);
    R.triangularView<Eigen::Upper>().solveInPlace(t);
    return t;
  }

  // Iterative refinement against the exact operator; the factorization only
  // serves as a preconditioner. The worst relative residual since the last
  // factor tells the caller whether that factor is still trustworthy.
  VecX solve(const VecX& rhs) const {
    VecX dx = base(rhs);
    const double rn = std::max(rhs.norm(), 1e-300);
    double rel = 0.0;
    for (int p = 0; p < 6; ++p) {
      const VecX r = normal_mv(dx) - rhs;
      rel = r.norm() / rn;
      if (rel < 1e-10) break;
      dx -= base(r);
    }
    worst_res = std::max(worst_res, rel);
    return dx;
  }
};

CoreResult core_solve(Core core, const SolveOptions& opts) {
  const int m = core.m(), n = core.n();
  CoreResult res;
  res.x = VecX::Zero(n);
  res.s = VecX::Zero(m);
  res.z = VecX::Zero(m);
  if (m == 0 || n == 0) throw std::invalid_argument("core_solve: empty program");

  // Ruiz style equilibration, alternating row and column passes. Row scales
  // stay uniform inside SOC and PSD blocks to preserve the cone geometry;
  // columns are free since they only reparameterize x. Solutions are mapped
  // back at the end: s = D s', x = x' / E.
  VecX D = VecX::Ones(m);
  VecX E = VecX::Ones(n);
  for (int pass = 0; pass < 3; ++pass) {
    for (const Block& b : core.blocks) {
      const int r = rows_of(b);
      if (b.kind == ConeKind::NonNeg) {
        for (int i = 0; i < r; ++i) {
          double d = std::max(core.G.row(b.off + i).cwiseAbs().maxCoeff(),
                              std::abs(core.h[b.off + i]));
          d = std::sqrt(std::clamp(d, 1e-8, 1e12));
          core.G.row(b.off + i) /= d;
          core.h[b.off + i] /= d;
          D[b.off + i] *= d;
        }
      } else {
        double d = std::max(core.G.middleRows(b.off, r).cwiseAbs().maxCoeff(),
                            core.h.segment(b.off, r).cwiseAbs().maxCoeff());
        d = std::sqrt(std::clamp(d, 1e-8, 1e12));
        core.G.middleRows(b.off, r) /= d;
        core.h.segment(b.off, r) /= d;
        D.segment(b.off, r) *= d;
      }
    }
    for (int j = 0; j < n; ++j) {
      const double e = std::sqrt(std::clamp(core.G.col(j).cwiseAbs().maxCoeff(), 1e-8, 1e12));
      core.G.col(j) /= e;
      E[j] *= e;
    }
  }
  core.c = core.c.cwiseQuotient(E);

  core.degree = 0;
  for (const Block& b : core.blocks)
    core.degree += b.kind == ConeKind::NonNeg ? b.dim : (b.kind == ConeKind::SecondOrder ? 1 : b.dim);

  const double hnorm = core.h.norm(), cnorm = core.c.norm();

  // Column support of every cone block. PSD blocks in particular touch only
  // the variables that parameterize their own matrix, so the normal matrix
  // can be assembled from small per-block panels instead of the full m x n
  // product.
  std::vector<std::vector<int>> support(core.blocks.size());
  for (size_t bi = 0; bi < core.blocks.size(); ++bi) {
    const Block& b = core.blocks[bi];
    const int r = rows_of(b);
    for (int j = 0; j < n; ++j)
      if ((core.G.block(b.off, j, r, 1).array() != 0.0).any()) support[bi].push_back(j);
  }

  Scaling sc;
  MatX S(n, n), panel, sub;
  auto build_gram = [&](const Scaling* scp) {
    S.setZero();
    for (size_t bi = 0; bi < core.blocks.size(); ++bi) {
      const Block& b = core.blocks[bi];
      const int r = rows_of(b);
      const auto& cols = support[bi];
      const int p = static_cast<int>(cols.size());
      if (p == 0) continue;
      panel.resize(r, p);
      for (int cj = 0; cj < p; ++cj) panel.col(cj) = core.G.block(b.off, cols[cj], r, 1);
      if (scp) {
        switch (b.kind) {
          case ConeKind::NonNeg:
            panel.array().colwise() /= scp->nn_w.segment(b.off, r).array();
            break;
          case ConeKind::SecondOrder: {
            const SocScale& ss = scp->soc[b.soc_index];
            MatX jp = panel;
            jp.bottomRows(r - 1) *= -1.0;
            panel = ((2.0 * ss.jwbar) * (ss.jwbar.transpose() * panel) - jp) / ss.eta;
            break;
          }
          case ConeKind::PsdReal: {
            const PsdScale& ps = scp->psd[b.psd_index];
            for (int cj = 0; cj < p; ++cj) {
              const MatX Y = ps.Rinv * smat(VecX(panel.col(cj))) * ps.Rinv.transpose();
              panel.col(cj) = svec(0.5 * (Y + Y.transpose()));
            }
            break;
          }
          default: break;
        }
      }
      if (p == n) {
        S.selfadjointView<Eigen::Lower>().rankUpdate(panel.transpose());
      } else {
        sub = MatX::Zero(p, p);
        sub.selfadjointView<Eigen::Lower>().rankUpdate(panel.transpose());
        for (int cj = 0; cj < p; ++cj)
          for (int ci = cj; ci < p; ++ci) S(cols[ci], cols[cj]) += sub(ci, cj);
      }
    }
  };

  // Initial point.
  NormalSolver ns;
  ns.rows = m;
  ns.normal_mv = [&](const VecX& v) { return VecX(core.G.transpose() * (core.G * v)); };
  ns.make_m = [&] { return core.G; };
  build_gram(nullptr);
  ns.factor(S);
  if (!ns.ok) return res;
  VecX x = ns.solve(core.G.transpose() * core.h);
  VecX s = core.h - core.G * x;
  shift_interior(core, s);
  VecX z = core.G * ns.solve(-core.c);
  shift_interior(core, z);
  double tau = 1.0, kappa = 1.0;

  ns.normal_mv = [&](const VecX& v) {
    return VecX(core.G.transpose() *
                apply_op(core, sc, Op::Winv, apply_op(core, sc, Op::WinvT, VecX(core.G * v))));
  };
  ns.make_m = [&] {
    MatX M(m, n);
    for (int j = 0; j < n; ++j) M.col(j) = apply_op(core, sc, Op::WinvT, VecX(core.G.col(j)));
    return M;
  };

  double best_score = kInf;
  double kkt_res = 0.0;
  std::vector<double> best_hist;

  for (int iter = 0; iter <= opts.max_iterations; ++iter) {
    const VecX rx = core.G.transpose() * z + core.c * tau;
    const VecX rz = s + core.G * x - core.h * tau;
    const double rt = kappa + core.c.dot(x) + core.h.dot(z);

    const double pcost = core.c.dot(x) / tau;
    const double pres = rz.norm() / tau / std::max(1.0, hnorm);
    const double dres = rx.norm() / tau / std::max(1.0, cnorm);
    const double gap = s.dot(z) / (tau * tau);
    const double relgap = gap / std::max(1.0, std::abs(pcost));

    const double score = std::max(pres, dres) + relgap;
    if (score < best_score && tau > 1e-12) {
      best_score = score;
      res.x = x.cwiseQuotient(E) / tau;
      res.s = D.cwiseProduct(s) / tau;
      res.z = z.cwiseQuotient(D) / tau;
      res.iterations = iter;
      res.pres = pres;
      res.dres = dres;
      res.relgap = relgap;
      res.gap = gap;
    }
    if (opts.verbose)
      std::fprintf(stderr, "iter %3d pres %9.2e dres %9.2e relgap %9.2e tau %9.2e kappa %9.2e\n",
                   iter, pres, dres, relgap, tau, kappa);

    if (pres <= opts.feas_tol && dres <= opts.feas_tol && relgap <= opts.gap_tol) {
      res.status = SolveStatus::Optimal;
      return res;
    }
    const double hz = core.h.dot(z);
    if (hz < -1e-14) {
      const double cert = (core.G.transpose() * z).norm() / std::max(1.0, cnorm) / (-hz);
      if (cert <= opts.feas_tol) {
        res.status = SolveStatus::PrimalInfeasible;
        res.x.setZero();
        res.s.setZero();
        res.z = z.cwiseQuotient(D) / (-hz);
        res.iterations = iter;
        return res;
      }
    }
    const double cx = core.c.dot(x);
    if (cx < -1e-14) {
      const double cert = (core.G * x + s).norm() / std::max(1.0, hnorm) / (-cx);
      if (cert <= opts.feas_tol) {
        res.status = SolveStatus::DualInfeasible;
        res.x = x.cwiseQuotient(E) / (-cx);
        res.s = D.cwiseProduct(s) / (-cx);
        res.z.setZero();
        res.iterations = iter;
        return res;
      }
    }
    if (iter == opts.max_iterations) break;

    const double mu = (s.dot(z) + tau * kappa) / (core.degree + 1);
    if (!compute_scaling(core, s, z, sc)) break;

    // Upgrade to the QR backend when the best score has stopped falling but
    // the tolerances are still out of reach; give up once even that stops
    // helping and let the caller judge the best iterate.
    best_hist.push_back(best_score);
    // Once refined solves leave a large residual while progress has stalled,
    // the squared conditioning of the Gram matrix has caught up with the
    // Cholesky factor and only the far more expensive QR backend keeps the
    // directions accurate. Residual blips during healthy progress are left
    // alone, and with accurate directions a long stretch without progress
    // will not recover, so give up on such problems instead.
    if (!ns.use_qr && iter >= 4 && std::max(ns.worst_res, kkt_res) > 1e-6 &&
        best_hist[iter] > 0.7 * best_hist[iter - 4]) {
      ns.use_qr = true;
      if (opts.verbose) std::fprintf(stderr, "  switching to QR backend\n");
    }
    kkt_res = 0.0;
    if (iter >= 24 && best_hist[iter] > 0.9 * best_hist[iter - 12]) break;

    if (!ns.use_qr) build_gram(&sc);
    ns.factor(S);
    if (!ns.ok) break;

    auto solve2_base = [&](const VecX& p, const VecX& q, VecX& dx, VecX& dz) {
      VecX wq = apply_op(core, sc, Op::WinvT, q);
      dx = ns.solve(p + core.G.transpose() * apply_op(core, sc, Op::Winv, wq));
      dz = apply_op(core, sc, Op::Winv,
                    VecX(apply_op(core, sc, Op::WinvT, VecX(core.G * dx)) - wq));
    };
    // The back-substitution for dz cancels badly once the scaling degenerates,
    // which the normal equations cannot see; refine against the unreduced
    // system  G'dz = p,  G dx - W'W dz = q  whose first residual is exactly
    // what the dual residual check measures.
    auto solve2 = [&](const VecX& p, const VecX& q, VecX& dx, VecX& dz) {
      solve2_base(p, q, dx, dz);
      const double ref = std::max({1.0, p.norm(), q.norm()});
      double rr = 0.0;
      for (int pass = 0; pass < 3; ++pass) {
        const VecX r1 = p - core.G.transpose() * dz;
        const VecX r2 =
            q - core.G * dx + apply_op(core, sc, Op::WT, apply_op(core, sc, Op::W, dz));
        rr = std::max(r1.norm(), r2.norm()) / ref;
        if (rr < 1e-12) break;
        VecX ddx, ddz;
        solve2_base(r1, r2, ddx, ddz);
        dx += ddx;
        dz += ddz;
      }
      kkt_res = std::max(kkt_res, rr);
    };

    VecX dx2, dz2;
    solve2(-core.c, core.h, dx2, dz2);
    const double denom = core.c.dot(dx2) + core.h.dot(dz2) - kappa / tau;

    const VecX e = cone_identity(core);
    const VecX ll = jordan_mul(core, sc.lambda, sc.lambda);

    auto direction = [&](double eta, const VecX& d_s, double d_kap, VecX& dx, VecX& ds,
                         VecX& dz, double& dtau, double& dkap) {
      const VecX dtil = jordan_div_lambda(core, sc, d_s);
      const VecX wt_dtil = apply_op(core, sc, Op::WT, dtil);
      VecX dx1, dz1;
      solve2(VecX(-(1.0 - eta) * rx), VecX(-(1.0 - eta) * rz - wt_dtil), dx1, dz1);
      const double num = -(1.0 - eta) * rt - core.c.dot(dx1) - core.h.dot(dz1) - d_kap / tau;
      dtau = num / denom;
      dx = dx1 + dtau * dx2;
      dz = dz1 + dtau * dz2;
      ds = wt_dtil - apply_op(core, sc, Op::WT, apply_op(core, sc, Op::W, dz));
      dkap = (d_kap - kappa * dtau) / tau;
    };

    auto step_bound = [&](const VecX& ds, const VecX& dz_, double dtau, double dkap,
                          VecX& ws, VecX& wz) {
      ws = apply_op(core, sc, Op::WinvT, ds);
      wz = apply_op(core, sc, Op::W, dz_);
      double a = std::min(max_step(core, sc.lambda, ws), max_step(core, sc.lambda, wz));
      if (dtau < 0) a = std::min(a, -tau / dtau);
      if (dkap < 0) a = std::min(a, -kappa / dkap);
      return a;
    };

    // Affine direction fixes the centering parameter.
    VecX dxa, dsa, dza, wsa, wza;
    double dtaua, dkapa;
    direction(0.0, VecX(-ll), -tau * kappa, dxa, dsa, dza, dtaua, dkapa);
    const double alpha_aff = std::min(1.0, step_bound(dsa, dza, dtaua, dkapa, wsa, wza));
    const double sigma = std::clamp(std::pow(1.0 - alpha_aff, 3.0), 0.0, 1.0);

    const VecX corr = jordan_mul(core, wsa, wza);
    VecX dxc, dsc, dzc, wsc, wzc;
    double dtauc, dkapc;
    direction(sigma, VecX(sigma * mu * e - ll - corr), sigma * mu - tau * kappa - dtaua * dkapa,
              dxc, dsc, dzc, dtauc, dkapc);
    double alpha = std::min(1.0, 0.99 * step_bound(dsc, dzc, dtauc, dkapc, wsc, wzc));
    if (!(alpha > 1e-13)) break;

    x += alpha * dxc;
    s += alpha * dsc;
    z += alpha * dzc;
    tau += alpha * dtauc;
    kappa += alpha * dkapc;
    if (!(tau > 1e-13)) break;
  }

  res.status = (res.pres < 1e-4 && res.dres < 1e-4 && res.relgap < 1e-2)
                   ? SolveStatus::MaxIterations
                   : SolveStatus::Numerical;
  return res;
}

struct ExpRow {
  VecX a_arg;      // arg(x) = c_arg + a_arg . x
  double c_arg = 0;
  VecX a_bound;
  double c_bound = 0;
  double lo = -25, hi = 25;
};

struct Compiled {
  Core core;
  std::vector<ExpRow> exps;
  // Original row index ranges so s and z can be mapped back per cone block.
  std::vector<std::pair<int, int>> orig_span;  // (orig offset, compiled offset), -1 for exp
  std::vector<const ConeSpec*> orig_cones;
};

}  // namespace

SolveResult solve(const ConicProgram& prog, const SolveOptions& opts, ExpCutCarry* carry) {
  const MatX A = prog.row_matrix();
  const VecX b = prog.row_offsets();
  const int n = prog.num_vars();

  // Collect exponential rows and their tangent knots.
  std::vector<ExpRow> exps;
  {
    int off = 0;
    for (const auto& cone : prog.cones()) {
      if (cone.kind == ConeKind::Exponential) {
        ExpRow e;
        e.a_arg = A.row(off).transpose();
        e.c_arg = b[off];
        e.a_bound = A.row(off + 2).transpose();
        e.c_bound = b[off + 2];
        e.lo = cone.exp_lo;
        e.hi = cone.exp_hi;
        exps.push_back(std::move(e));
      }
      off += cone.rows();
    }
  }

  const int ne = static_cast<int>(exps.size());
  std::vector<std::vector<double>> knots(ne);
  if (carry && static_cast<int>(carry->knots.size()) == ne) knots = carry->knots;
  const int grid = std::max(2, opts.exp_segments);
  for (int i = 0; i < ne; ++i) {
    const int init = opts.exp_mode == ExpMode::InnerChords ? grid : std::max(4, grid / 4);
    for (int g = 0; g <= init; ++g)
      knots[i].push_back(exps[i].lo + (exps[i].hi - exps[i].lo) * g / init);
    std::sort(knots[i].begin(), knots[i].end());
    knots[i].erase(std::unique(knots[i].begin(), knots[i].end(),
                               [](double a, double c) { return std::abs(a - c) < 1e-4; }),
                   knots[i].end());
  }

  SolveResult out;
  const int max_rounds = (ne == 0 || opts.exp_mode == ExpMode::InnerChords)
                             ? 1
                             : std::max(1, opts.max_cut_rounds);

  // Intermediate rounds only need to locate the next cuts, so they run at a
  // relaxed tolerance; once the cut set settles, a polish phase re-solves at
  // the requested accuracy. Below the relaxed accuracy a measured violation
  // is indistinguishable from solve noise, hence the phase-dependent vtol.
  SolveOptions ropts = opts;
  ropts.feas_tol = std::max(opts.feas_tol, 1e-4);
  ropts.gap_tol = std::max(opts.gap_tol, 1e-4);
  bool polish = ropts.feas_tol <= opts.feas_tol && ropts.gap_tol <= opts.gap_tol;

  CoreResult cr;
  for (int round = 0; round < max_rounds; ++round) {
    // Rebuild the compiled program with the current knot sets.
    Core core;
    core.c = prog.objective();
    std::vector<Block> blocks;
    std::vector<std::pair<int, int>> span;  // (orig_off, compiled_off) per original cone
    int orig_off = 0, comp_rows = 0;
    std::vector<std::pair<VecX, double>> extra;  // appended nonneg rows: s = d + g.x
    int exp_idx = 0;
    // One block per cut group: the rows of a group share a narrow column
    // support, which the core solver exploits when it assembles the normal
    // matrix, so they must not be merged with neighbouring nonneg rows.
    auto append_nonneg_block = [&](int count) {
      blocks.push_back({ConeKind::NonNeg, comp_rows, count});
      comp_rows += count;
    };
    for (const auto& cone : prog.cones()) {
      if (cone.kind == ConeKind::Exponential) {
        span.emplace_back(orig_off, -1);
        const ExpRow& e = exps[exp_idx];
        if (opts.exp_mode == ExpMode::OuterCuts) {
          for (double t : knots[exp_idx]) {
            const double et = std::exp(t);
            extra.emplace_back(e.a_bound - et * e.a_arg, e.c_bound - et * e.c_arg - et * (1.0 - t));
          }
          append_nonneg_block(static_cast<int>(knots[exp_idx].size()));
        } else {
          extra.emplace_back(e.a_arg, e.c_arg - e.lo);    // arg >= lo
          extra.emplace_back(-e.a_arg, e.hi - e.c_arg);   // arg <= hi
          int cuts = 2;
          const auto& ks = knots[exp_idx];
          for (size_t i = 0; i + 1 < ks.size(); ++i) {
            const double t0 = ks[i], t1 = ks[i + 1];
            const double mslope = (std::exp(t1) - std::exp(t0)) / (t1 - t0);
            const double icpt = std::exp(t0) - mslope * t0;
            extra.emplace_back(e.a_bound - mslope * e.a_arg,
                               e.c_bound - mslope * e.c_arg - icpt);
            ++cuts;
          }
          append_nonneg_block(cuts);
        }
        ++exp_idx;
      } else {
        span.emplace_back(orig_off, comp_rows);
        Block blk;
        blk.kind = cone.kind;
        blk.off = comp_rows;
        blk.dim = cone.dim;
        if (cone.kind == ConeKind::NonNeg && !blocks.empty() &&
            blocks.back().kind == ConeKind::NonNeg &&
            blocks.back().off + blocks.back().dim == comp_rows)
          blocks.back().dim += cone.dim;
        else
          blocks.push_back(blk);
        comp_rows += cone.rows();
      }
      orig_off += cone.rows();
    }

    core.G = MatX::Zero(comp_rows, n);
    core.h = VecX::Zero(comp_rows);
    core.blocks = blocks;
    {
      int r = 0;
      size_t extra_i = 0;
      int ci = 0;
      // Rows were appended per cone in order; reassemble in the same order.
      exp_idx = 0;
      for (const auto& cone : prog.cones()) {
        if (cone.kind == ConeKind::Exponential) {
          int cuts = opts.exp_mode == ExpMode::OuterCuts
                         ? static_cast<int>(knots[exp_idx].size())
                         : static_cast<int>(knots[exp_idx].size()) + 1;
          for (int kk = 0; kk < cuts; ++kk) {
            // s = d + g.x  ->  G = -g, h = d
            core.G.row(r) = -extra[extra_i].first.transpose();
            core.h[r] = extra[extra_i].second;
            ++extra_i;
            ++r;
          }
          ++exp_idx;
        } else {
          for (int rr = 0; rr < cone.rows(); ++rr) {
            core.G.row(r) = -A.row(span[ci].first + rr);
            core.h[r] = b[span[ci].first + rr];
            ++r;
          }
        }
        ++ci;
      }
    }

    if (const char* dump = std::getenv("CORSMA_DUMP_CORE")) {
      std::ofstream f(dump);
      f.precision(17);
      f << comp_rows << " " << n << "\n";
      for (const Block& blk : core.blocks)
        f << static_cast<int>(blk.kind) << " " << blk.off << " " << blk.dim << "\n";
      f << "END\n";
      for (int j = 0; j < n; ++j) f << core.c[j] << "\n";
      for (int r = 0; r < comp_rows; ++r) f << core.h[r] << "\n";
      for (int r = 0; r < comp_rows; ++r)
        for (int j = 0; j < n; ++j) f << core.G(r, j) << "\n";
    }
    cr = core_solve(core, polish ? opts : ropts);
    out.iterations += cr.iterations;
    out.cut_rounds = round + 1;
    // Keep refining the cuts while the iterate is usable; a best-effort
    // MaxIterations result still locates where the exp rows are violated.
    if (cr.status != SolveStatus::Optimal && cr.status != SolveStatus::MaxIterations) break;
    if (ne == 0 || opts.exp_mode == ExpMode::InnerChords) break;

    const double vtol = polish ? opts.cut_tol : std::max(opts.cut_tol, 0.5 * ropts.feas_tol);
    // Check the exp rows at the solution and add tangent knots where violated.
    bool violated = false;
    for (int i = 0; i < ne; ++i) {
      const double v = exps[i].c_arg + exps[i].a_arg.dot(cr.x);
      const double w = exps[i].c_bound + exps[i].a_bound.dot(cr.x);
      const double scale = std::max({1.0, std::abs(w), std::exp(std::min(v, exps[i].hi))});
      if (std::exp(v) - w > vtol * scale) {
        violated = true;
        const double t = std::clamp(v, exps[i].lo - 30.0, exps[i].hi + 30.0);
        // One knot per round shrinks the local spacing by at most half, which
        // converges too slowly. A geometric ladder between the argument and
        // its bracketing knots keeps the whole bracket refined, so the gap
        // keeps shrinking even when the next solution drifts sideways.
        auto up = std::lower_bound(knots[i].begin(), knots[i].end(), t);
        const double kh = up == knots[i].end() ? t + 1.0 : *up;
        const double kl = up == knots[i].begin() ? t - 1.0 : *(up - 1);
        knots[i].push_back(t);
        for (double f : {0.5, 0.25, 0.125, 0.0625}) {
          knots[i].push_back(t - f * (t - kl));
          knots[i].push_back(t + f * (kh - t));
        }
        if (w > 0) knots[i].push_back(std::clamp(std::log(w), exps[i].lo - 30.0, exps[i].hi + 30.0));
      }
      // Cap the knot count so carried cuts do not grow the program without
      // bound; the ones nearest the current argument carry the constraint.
      if (knots[i].size() > 34) {
        const double center = std::clamp(v, exps[i].lo, exps[i].hi);
        std::sort(knots[i].begin(), knots[i].end(), [&](double a, double c) {
          return std::abs(a - center) < std::abs(c - center);
        });
        knots[i].resize(30);
        knots[i].push_back(exps[i].lo);
        knots[i].push_back(exps[i].hi);
      }
      std::sort(knots[i].begin(), knots[i].end());
      knots[i].erase(std::unique(knots[i].begin(), knots[i].end(),
                                 [](double a, double c) { return std::abs(a - c) < 1e-4; }),
                     knots[i].end());
    }
    if (std::getenv("CORSMA_CUT_TRACE")) {
      double worst = 0.0;
      int nk = 0;
      for (int i = 0; i < ne; ++i) {
        const double v = exps[i].c_arg + exps[i].a_arg.dot(cr.x);
        const double w = exps[i].c_bound + exps[i].a_bound.dot(cr.x);
        const double scale = std::max({1.0, std::abs(w), std::exp(std::min(v, exps[i].hi))});
        worst = std::max(worst, (std::exp(v) - w) / scale);
        nk += static_cast<int>(knots[i].size());
      }
      std::fprintf(stderr, "    round %d polish=%d iters=%d status=%d viol=%.2e knots=%d\n",
                   round, polish ? 1 : 0, cr.iterations, static_cast<int>(cr.status), worst, nk);
    }
    if (!violated) {
      if (polish) break;
      polish = true;
    }
  }

  if (carry) carry->knots = knots;

  out.status = cr.status;
  out.primal_residual = cr.pres;
  out.dual_residual = cr.dres;
  out.gap = cr.gap;
  out.x = cr.x;
  out.objective = prog.objective().dot(cr.x);

  // Map slacks and duals back to the original cone layout. Exponential rows
  // get their slack recomputed from x; their duals are reported as zero.
  out.s = VecX::Zero(prog.num_rows());
  out.z = VecX::Zero(prog.num_rows());
  if (cr.s.size() > 0) {
    int orig_off = 0, comp_off = 0, exp_idx = 0;
    for (const auto& cone : prog.cones()) {
      if (cone.kind == ConeKind::Exponential) {
        out.s[orig_off] = exps[exp_idx].c_arg + exps[exp_idx].a_arg.dot(cr.x);
        out.s[orig_off + 1] = 1.0;
        out.s[orig_off + 2] = exps[exp_idx].c_bound + exps[exp_idx].a_bound.dot(cr.x);
        comp_off += opts.exp_mode == ExpMode::OuterCuts
                        ? static_cast<int>(knots[exp_idx].size())
                        : static_cast<int>(knots[exp_idx].size()) + 1;
        ++exp_idx;
      } else {
        out.s.segment(orig_off, cone.rows()) = cr.s.segment(comp_off, cone.rows());
        out.z.segment(orig_off, cone.rows()) = cr.z.segment(comp_off, cone.rows());
        comp_off += cone.rows();
      }
      orig_off += cone.rows();
    }
    double viol = 0.0;
    for (int i = 0; i < ne; ++i) {
      const double v = exps[i].c_arg + exps[i].a_arg.dot(cr.x);
      const double w = exps[i].c_bound + exps[i].a_bound.dot(cr.x);
      const double scale = std::max({1.0, std::abs(w), std::exp(std::min(v, exps[i].hi))});
      viol = std::max(viol, (std::exp(v) - w) / scale);
    }
    out.exp_violation = viol;
    // A large leftover violation means the cut rounds ran out before the
    // outer approximation tightened; the x returned would overstate any
    // objective or constraint that leans on those rows.
    if (out.exp_violation > std::max(1e-5, 5 * opts.cut_tol) &&
        (out.status == SolveStatus::Optimal || out.status == SolveStatus::MaxIterations))
      out.status = SolveStatus::Numerical;
  }
  return out;
}

}  // namespace corsma::conic
