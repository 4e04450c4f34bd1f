#include "iscc/conic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

namespace iscc::conic {

// ---------------------------------------------------------------------------
// LinExpr arithmetic
// ---------------------------------------------------------------------------

LinExpr& LinExpr::operator+=(const LinExpr& o) {
  for (const auto& [blk, h] : o.mats_) {
    auto it = mats_.find(blk);
    if (it == mats_.end()) {
      mats_.emplace(blk, h);
    } else {
      it->second += h;
    }
  }
  for (const auto& [blk, c] : o.scalars_) scalars_[blk] += c;
  offset_ += o.offset_;
  return *this;
}

LinExpr& LinExpr::operator-=(const LinExpr& o) {
  LinExpr neg = o;
  neg *= -1.0;
  return *this += neg;
}

LinExpr& LinExpr::operator*=(double c) {
  for (auto& [blk, h] : mats_) h *= c;
  for (auto& [blk, v] : scalars_) v *= c;
  offset_ *= c;
  return *this;
}

// ---------------------------------------------------------------------------
// Problem building
// ---------------------------------------------------------------------------

int ConicProblem::add_psd_block(int n, const std::string& label) {
  if (n < 1) throw std::invalid_argument("conic: PSD block size must be >= 1");
  blocks.push_back({BlockKind::hermitian_psd, n, label});
  return static_cast<int>(blocks.size()) - 1;
}

int ConicProblem::add_scalar(const std::string& label) {
  blocks.push_back({BlockKind::nonneg_scalar, 1, label});
  return static_cast<int>(blocks.size()) - 1;
}

void ConicProblem::check_psd(int blk) const {
  if (blk < 0 || blk >= static_cast<int>(blocks.size()))
    throw std::invalid_argument("conic: block id out of range");
  if (blocks[blk].kind != BlockKind::hermitian_psd)
    throw std::invalid_argument("conic: block is not a PSD block");
}

LinExpr ConicProblem::trace_term(int blk, const CMat& h) const {
  check_psd(blk);
  const int n = blocks[blk].n;
  if (h.rows() != n || h.cols() != n)
    throw std::invalid_argument("conic: coefficient dimension mismatch for block '" +
                                blocks[blk].label + "'");
  const double scale = std::max(1.0, h.cwiseAbs().maxCoeff());
  if ((h - h.adjoint()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw std::invalid_argument("conic: trace coefficient is not Hermitian");
  LinExpr e;
  e.mats_.emplace(blk, CMat(0.5 * (h + h.adjoint().eval())));
  return e;
}

LinExpr ConicProblem::trace_sub_term(int blk, int row_off, int col_off, const CMat& q) const {
  check_psd(blk);
  const int n = blocks[blk].n;
  const int r = static_cast<int>(q.rows());
  if (r != q.cols() || row_off < 0 || col_off < 0 || row_off + r > n || col_off + r > n)
    throw std::invalid_argument("conic: sub-block coefficient out of range");
  CMat h = CMat::Zero(n, n);
  h.block(col_off, row_off, r, r) = q;  // tr(h X) = tr(q S) for the addressed sub-block
  LinExpr e;
  e.mats_.emplace(blk, CMat(0.5 * (h + h.adjoint().eval())));  // Re tr(q S)
  return e;
}

LinExpr ConicProblem::entry_re(int blk, int i, int j) const {
  check_psd(blk);
  const int n = blocks[blk].n;
  if (i < 0 || j < 0 || i >= n || j >= n)
    throw std::invalid_argument("conic: entry index out of range");
  CMat h = CMat::Zero(n, n);
  h(i, j) += 0.5;
  h(j, i) += 0.5;
  LinExpr e;
  e.mats_.emplace(blk, h);
  return e;
}

LinExpr ConicProblem::entry_im(int blk, int i, int j) const {
  check_psd(blk);
  const int n = blocks[blk].n;
  if (i < 0 || j < 0 || i >= n || j >= n)
    throw std::invalid_argument("conic: entry index out of range");
  if (i == j) throw std::invalid_argument("conic: diagonal entries of a PSD block are real");
  const cdouble half_i(0.0, 0.5);
  CMat h = CMat::Zero(n, n);
  h(i, j) = half_i;
  h(j, i) = -half_i;
  LinExpr e;
  e.mats_.emplace(blk, h);
  return e;
}

LinExpr ConicProblem::scalar_term(int blk, double coef) const {
  if (blk < 0 || blk >= static_cast<int>(blocks.size()))
    throw std::invalid_argument("conic: block id out of range");
  if (blocks[blk].kind != BlockKind::nonneg_scalar)
    throw std::invalid_argument("conic: block is not a scalar");
  LinExpr e;
  e.scalars_.emplace(blk, coef);
  return e;
}

namespace {

// A single inf/NaN coefficient silently corrupts the equilibration scales and
// every residual after it; reject the row at construction so the bug surfaces
// at the call site instead of deep inside the solver.
void check_finite_row(const LinExpr& e, double rhs, const std::string& name) {
  bool ok = std::isfinite(rhs) && std::isfinite(e.offset());
  for (const auto& [blk, h] : e.mat_terms()) ok = ok && h.allFinite();
  for (const auto& [blk, c] : e.scalar_terms()) ok = ok && std::isfinite(c);
  if (!ok)
    throw std::invalid_argument("conic: non-finite coefficient in constraint '" + name + "'");
}

}  // namespace

void ConicProblem::add_eq(const LinExpr& e, double rhs, const std::string& name) {
  check_finite_row(e, rhs, name);
  constraints.push_back({e, Rel::eq, rhs, name});
}

void ConicProblem::add_le(const LinExpr& e, double rhs, const std::string& name) {
  check_finite_row(e, rhs, name);
  constraints.push_back({e, Rel::le, rhs, name});
}

void ConicProblem::add_ge(const LinExpr& e, double rhs, const std::string& name) {
  LinExpr neg = e;
  neg *= -1.0;
  add_le(neg, -rhs, name);
}

// ---------------------------------------------------------------------------
// Lifts
// ---------------------------------------------------------------------------

void ConicProblem::lift_square_common(int p, const LinExpr& y) {
  add_eq(entry_re(p, 0, 1) - y, 0.0, "sq_tie_y_re");
  add_eq(entry_im(p, 0, 1), 0.0, "sq_tie_y_im");
  add_eq(entry_re(p, 1, 1), 1.0, "sq_tie_one");
}

int ConicProblem::lift_trace_inverse(int rs_block) {
  check_psd(rs_block);
  const int n = blocks[rs_block].n;
  const std::string base = blocks[rs_block].label;  // copy: add_psd_block reallocates
  const int u = add_psd_block(n, base + ".inv_epi");
  const int v = add_psd_block(2 * n, base + ".inv_lmi");
  // [[U, I], [I, R]] >= 0 <=> U >= R^-1 entry ties pin the three corners.
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      add_eq(entry_re(v, i, j) - entry_re(u, i, j), 0.0, base + ".inv_tie_u_re");
      add_eq(entry_re(v, n + i, n + j) - entry_re(rs_block, i, j), 0.0, base + ".inv_tie_r_re");
      if (i != j) {
        add_eq(entry_im(v, i, j) - entry_im(u, i, j), 0.0, base + ".inv_tie_u_im");
        add_eq(entry_im(v, n + i, n + j) - entry_im(rs_block, i, j), 0.0, base + ".inv_tie_r_im");
      }
    }
  }
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      add_eq(entry_re(v, i, n + j), i == j ? 1.0 : 0.0, base + ".inv_tie_i_re");
      add_eq(entry_im(v, i, n + j), 0.0, base + ".inv_tie_i_im");
    }
  }
  return u;
}

LinExpr ConicProblem::lift_square(const LinExpr& y) {
  const int p = add_psd_block(2, "sq_epi");
  lift_square_common(p, y);
  return entry_re(p, 0, 0);
}

void ConicProblem::lift_square(const LinExpr& y, const LinExpr& u) {
  const int p = add_psd_block(2, "sq_epi");
  lift_square_common(p, y);
  add_eq(entry_re(p, 0, 0) - u, 0.0, "sq_tie_u");
}

LinExpr ConicProblem::lift_inverse(const LinExpr& g) {
  const int p = add_psd_block(2, "inv_epi");
  add_eq(entry_re(p, 0, 1), 1.0, "inv_tie_one_re");
  add_eq(entry_im(p, 0, 1), 0.0, "inv_tie_one_im");
  add_eq(entry_re(p, 1, 1) - g, 0.0, "inv_tie_g");
  return entry_re(p, 0, 0);
}

// ---------------------------------------------------------------------------
// Real symmetric embedding
// ---------------------------------------------------------------------------

RMat embed_complex(const CMat& h) {
  const int n = static_cast<int>(h.rows());
  RMat m(2 * n, 2 * n);
  m.topLeftCorner(n, n) = h.real();
  m.bottomRightCorner(n, n) = h.real();
  m.topRightCorner(n, n) = -h.imag();
  m.bottomLeftCorner(n, n) = h.imag();
  return m;
}

namespace {

// Average the embedded structure back to a complex Hermitian matrix.
CMat unembed(const RMat& m) {
  const int n = static_cast<int>(m.rows()) / 2;
  CMat h(n, n);
  h.real() = 0.5 * (m.topLeftCorner(n, n) + m.bottomRightCorner(n, n));
  h.imag() = 0.5 * (m.bottomLeftCorner(n, n) - m.topRightCorner(n, n));
  return 0.5 * (h + h.adjoint().eval());
}

// ---------------------------------------------------------------------------
// Internal standard form: equality rows over real symmetric PSD blocks
// ---------------------------------------------------------------------------

struct Term {
  int blk = 0;
  bool sparse = false;
  RMat dense;
  std::vector<std::tuple<int, int, double>> trip;
};

struct Row {
  std::vector<Term> terms;
  double b = 0.0;
  double scale = 1.0;  // internal row = scale * (original row)
  int orig = -1;       // index into ConicProblem::constraints
  int slack_blk = -1;  // internal slack block for `le` rows
  int slack_term = -1; // index of the slack term within `terms`
};

struct Std {
  std::vector<int> dim;          // internal block side lengths
  std::vector<int> pub_of_int;   // internal -> public block id (-1 for slacks)
  std::vector<int> int_of_pub;   // public -> internal block id
  std::vector<RMat> C;           // objective coefficient per internal block
  std::vector<Row> rows;
  std::vector<std::vector<std::pair<int, int>>> blk_rows;  // blk -> (row, term)
  double c_scale = 1.0;
  double obj_offset = 0.0;
  bool triv_infeasible = false;
  double b_inf = 0.0;  // max |b| over scaled rows
};

Term make_term(const Std& f, int int_blk, const RMat& a) {
  Term t;
  t.blk = int_blk;
  const int n = static_cast<int>(a.rows());
  int nnz = 0;
  for (int j = 0; j < n && nnz <= 8; ++j)
    for (int i = 0; i < n; ++i)
      if (a(i, j) != 0.0 && ++nnz > 8) break;
  (void)f;
  if (nnz <= 8 && n >= 4) {
    t.sparse = true;
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i)
        if (a(i, j) != 0.0) t.trip.emplace_back(i, j, a(i, j));
  } else {
    t.dense = a;
  }
  return t;
}

double term_max_abs(const Term& t) {
  if (t.sparse) {
    double m = 0.0;
    for (const auto& [i, j, c] : t.trip) m = std::max(m, std::abs(c));
    return m;
  }
  return t.dense.size() > 0 ? t.dense.cwiseAbs().maxCoeff() : 0.0;
}

void term_scale(Term& t, double s) {
  if (t.sparse) {
    for (auto& [i, j, c] : t.trip) c *= s;
  } else {
    t.dense *= s;
  }
}

double term_dot(const Term& t, const RMat& m) {
  if (t.sparse) {
    double s = 0.0;
    for (const auto& [i, j, c] : t.trip) s += c * m(i, j);
    return s;
  }
  return (t.dense.array() * m.array()).sum();
}

void term_axpy(const Term& t, double a, RMat& out) {
  if (t.sparse) {
    for (const auto& [i, j, c] : t.trip) out(i, j) += a * c;
  } else {
    out += a * t.dense;
  }
}

// W * A * W for a row coefficient, exploiting sparse A.
RMat term_waw(const Term& t, const RMat& w) {
  if (t.sparse) {
    RMat out = RMat::Zero(w.rows(), w.cols());
    for (const auto& [i, j, c] : t.trip) out.noalias() += c * (w.col(i) * w.row(j));
    return out;
  }
  RMat aw = t.dense * w;
  return w * aw;
}

std::vector<Term> expr_terms(const Std& f, const LinExpr& e) {
  std::vector<Term> terms;
  for (const auto& [blk, h] : e.mat_terms()) {
    if (h.cwiseAbs().maxCoeff() == 0.0) continue;
    terms.push_back(make_term(f, f.int_of_pub[blk], 0.5 * embed_complex(h)));
  }
  for (const auto& [blk, c] : e.scalar_terms()) {
    if (c == 0.0) continue;
    Term t;
    t.blk = f.int_of_pub[blk];
    t.dense = RMat::Constant(1, 1, c);
    terms.push_back(t);
  }
  return terms;
}

Std build_std(const ConicProblem& p) {
  Std f;
  const int npub = static_cast<int>(p.blocks.size());
  f.int_of_pub.resize(npub);
  for (int i = 0; i < npub; ++i) {
    f.int_of_pub[i] = static_cast<int>(f.dim.size());
    f.pub_of_int.push_back(i);
    f.dim.push_back(p.blocks[i].kind == BlockKind::hermitian_psd ? 2 * p.blocks[i].n : 1);
  }

  // Objective with max-coefficient normalization.
  f.obj_offset = p.objective.offset();
  std::vector<RMat> c(f.dim.size());
  for (size_t i = 0; i < f.dim.size(); ++i) c[i] = RMat::Zero(f.dim[i], f.dim[i]);
  for (const Term& t : expr_terms(f, p.objective)) term_axpy(t, 1.0, c[t.blk]);
  double cmax = 0.0;
  for (const RMat& m : c) if (m.size() > 0) cmax = std::max(cmax, m.cwiseAbs().maxCoeff());
  f.c_scale = cmax > 0.0 ? cmax : 1.0;
  for (RMat& m : c) m /= f.c_scale;
  f.C = std::move(c);

  // Rows: equilibrate, then slack `le` rows into equalities.
  for (size_t r = 0; r < p.constraints.size(); ++r) {
    const Constraint& con = p.constraints[r];
    Row row;
    row.orig = static_cast<int>(r);
    row.terms = expr_terms(f, con.expr);
    row.b = con.rhs - con.expr.offset();
    double amax = 0.0;
    for (const Term& t : row.terms) amax = std::max(amax, term_max_abs(t));
    if (amax == 0.0) {
      if (std::abs(row.b) > 1e-12) f.triv_infeasible = true;
      continue;  // vacuous row
    }
    row.scale = 1.0 / amax;
    for (Term& t : row.terms) term_scale(t, row.scale);
    row.b *= row.scale;
    if (con.rel == Rel::le) {
      row.slack_blk = static_cast<int>(f.dim.size());
      f.dim.push_back(1);
      f.pub_of_int.push_back(-1);
      f.C.push_back(RMat::Zero(1, 1));
      Term s;
      s.blk = row.slack_blk;
      s.dense = RMat::Constant(1, 1, 1.0);
      row.slack_term = static_cast<int>(row.terms.size());
      row.terms.push_back(s);
    }
    f.b_inf = std::max(f.b_inf, std::abs(row.b));
    f.rows.push_back(std::move(row));
  }

  f.blk_rows.resize(f.dim.size());
  for (size_t r = 0; r < f.rows.size(); ++r)
    for (size_t k = 0; k < f.rows[r].terms.size(); ++k)
      f.blk_rows[f.rows[r].terms[k].blk].emplace_back(static_cast<int>(r), static_cast<int>(k));
  return f;
}

// ---------------------------------------------------------------------------
// Matrix factor with eigenvalue fallback for nearly singular iterates
// ---------------------------------------------------------------------------

struct Factor {
  RMat l;
  bool ok = true;
};

Factor safe_factor(const RMat& a) {
  Factor f;
  Eigen::LLT<RMat> llt(a);
  if (llt.info() == Eigen::Success) {
    f.l = llt.matrixL();
    return f;
  }
  Eigen::SelfAdjointEigenSolver<RMat> es(a);
  if (es.info() != Eigen::Success) {
    f.ok = false;
    return f;
  }
  const double lmax = std::max(es.eigenvalues().cwiseAbs().maxCoeff(), 1e-300);
  RVec ev = es.eigenvalues().cwiseMax(1e-14 * lmax);
  f.l = es.eigenvectors() * ev.cwiseSqrt().asDiagonal();
  return f;
}

// Largest step alpha with X + alpha * D >= 0 (capped at 1).
double step_length(const RMat& x, const RMat& d) {
  Eigen::GeneralizedSelfAdjointEigenSolver<RMat> ges(d, x,
                                                     Eigen::EigenvaluesOnly | Eigen::Ax_lBx);
  if (ges.info() != Eigen::Success) return 0.0;
  const double lmin = ges.eigenvalues().minCoeff();
  if (lmin >= -1e-14) return 1.0;
  return std::min(1.0, 0.99 / (-lmin));
}

struct IpmOut {
  bool converged = false;
  bool stopped_early = false;
  std::vector<RMat> x, s;
  RVec y;
  double cx = 0.0, by = 0.0, gapxs = 0.0;
  double pres = 0.0, dres = 0.0;
  int iters = 0;
};

struct IpmControls {
  double tol_feas = 1e-8;
  double tol_gap = 1e-7;
  int max_iter = 200;
  bool verbose = false;
  // Optional early stop: args are (X blocks, primal residual, objective in
  // original units); used by phase one to bail out once feasibility is proven.
  std::function<bool(const std::vector<RMat>&, double, double)> early;
};

IpmOut run_ipm(const Std& f, const IpmControls& ctl, const std::vector<RMat>* hint) {
  const int m = static_cast<int>(f.rows.size());
  const int nb = static_cast<int>(f.dim.size());
  double nu = 0.0;
  for (int d : f.dim) nu += d;

  IpmOut out;
  out.x.resize(nb);
  out.s.resize(nb);
  const double tau_p = std::min(1e4, std::max(1.0, f.b_inf));
  for (int b = 0; b < nb; ++b) {
    if (hint && (*hint)[b].size() > 0) {
      out.x[b] = (*hint)[b];
      const double bias = 1e-6 * std::max(1.0, out.x[b].trace() / f.dim[b]);
      out.x[b] += bias * RMat::Identity(f.dim[b], f.dim[b]);
    } else {
      out.x[b] = tau_p * RMat::Identity(f.dim[b], f.dim[b]);
    }
    out.s[b] = RMat::Identity(f.dim[b], f.dim[b]);
  }
  out.y = RVec::Zero(m);

  double cnorm = 1.0;
  for (const RMat& cm : f.C) cnorm = std::hypot(cnorm, cm.norm());
  double bnorm = 1.0;
  for (const Row& r : f.rows) bnorm = std::hypot(bnorm, r.b);

  struct Snap {
    double score = std::numeric_limits<double>::infinity();
    bool base_ok = false;
    std::vector<RMat> x, s;
    RVec y;
    double cx = 0, by = 0, gapxs = 0, pres = 0, dres = 0;
  } best;

  int polish = 0;
  int stall = 0;

  std::vector<RMat> w(nb), g(nb), ginv(nb), rd(nb), rc(nb), dx(nb), ds(nb), dxa(nb), dsa(nb);
  std::vector<RVec> lam(nb);
  RVec rp(m), ax(m);

  for (int it = 0; it <= ctl.max_iter; ++it) {
    // Residuals and merit quantities.
    for (int r = 0; r < m; ++r) {
      double v = 0.0;
      for (const Term& t : f.rows[r].terms) v += term_dot(t, out.x[t.blk]);
      ax(r) = v;
      rp(r) = f.rows[r].b - v;
    }
    double cx = 0.0, gapxs = 0.0, dres2 = 0.0;
    for (int b = 0; b < nb; ++b) {
      cx += (f.C[b].array() * out.x[b].array()).sum();
      gapxs += (out.x[b].array() * out.s[b].array()).sum();
      rd[b] = f.C[b] - out.s[b];
    }
    for (int r = 0; r < m; ++r)
      for (const Term& t : f.rows[r].terms) term_axpy(t, -out.y(r), rd[t.blk]);
    for (int b = 0; b < nb; ++b) dres2 += rd[b].squaredNorm();
    double by = 0.0;
    for (int r = 0; r < m; ++r) by += f.rows[r].b * out.y(r);

    const double pres = rp.norm() / bnorm;
    const double dres = std::sqrt(dres2) / cnorm;
    const double obj_orig = f.c_scale * cx + f.obj_offset;
    const double gap_orig = f.c_scale * gapxs;
    const double dgap_orig = f.c_scale * std::abs(cx - by);
    const double rel_gap = std::min(gap_orig, dgap_orig) / (1.0 + std::abs(obj_orig));
    const bool base_ok = pres <= ctl.tol_feas && dres <= ctl.tol_feas && rel_gap <= ctl.tol_gap;

    if (ctl.verbose) {
      std::ostringstream os;
      os << "ipm iter " << it << " pres " << pres << " dres " << dres << " gap " << rel_gap
         << " obj " << obj_orig << "\n";
      std::fputs(os.str().c_str(), stderr);
    }

    const double score = std::max({pres, dres, rel_gap});
    if (score < best.score || (base_ok && !best.base_ok)) {
      best = {score, base_ok, out.x, out.s, out.y, cx, by, gapxs, pres, dres};
    }

    out.cx = cx;
    out.by = by;
    out.gapxs = gapxs;
    out.pres = pres;
    out.dres = dres;
    out.iters = it;

    if (ctl.early && ctl.early(out.x, pres, obj_orig)) {
      out.stopped_early = true;
      out.converged = true;
      return out;
    }
    if (base_ok && rel_gap <= 0.02 * ctl.tol_gap) {
      out.converged = true;
      return out;
    }
    if (base_ok && ++polish > 10) {
      out.converged = true;
      return out;
    }
    if (it == ctl.max_iter || stall >= 3) break;

    // Nesterov-Todd scaling per block.
    bool scale_ok = true;
    for (int b = 0; b < nb; ++b) {
      Factor lx = safe_factor(out.x[b]);
      Factor ls = safe_factor(out.s[b]);
      if (!lx.ok || !ls.ok) { scale_ok = false; break; }
      Eigen::JacobiSVD<RMat> svd(ls.l.transpose() * lx.l,
                                 Eigen::ComputeFullU | Eigen::ComputeFullV);
      lam[b] = svd.singularValues();
      if (lam[b].minCoeff() <= 1e-150) { scale_ok = false; break; }
      const RVec li = lam[b].cwiseSqrt().cwiseInverse();
      g[b] = lx.l * svd.matrixV() * li.asDiagonal();
      ginv[b] = li.asDiagonal() * svd.matrixU().transpose() * ls.l.transpose();
      w[b] = g[b] * g[b].transpose();
    }
    if (!scale_ok) break;

    // Schur complement M(i, j) = <A_i, W A_j W>.
    RMat mmat = RMat::Zero(m, m);
    std::vector<RMat> tj(nb);
    for (int j = 0; j < m; ++j) {
      for (const Term& t : f.rows[j].terms) {
        RMat contrib = term_waw(t, w[t.blk]);
        for (const auto& [i, k] : f.blk_rows[t.blk]) {
          if (i > j) continue;
          mmat(j, i) += term_dot(f.rows[i].terms[k], contrib);
        }
      }
    }
    Eigen::LLT<RMat> mllt;
    Eigen::LDLT<RMat> mldlt;
    bool use_ldlt = false;
    if (m > 0) {
      mllt.compute(mmat);  // reads the lower triangle only
      if (mllt.info() != Eigen::Success) {
        const double ridge = 1e-12 * std::max(1.0, mmat.diagonal().cwiseAbs().maxCoeff());
        RMat mreg = mmat;
        mreg.diagonal().array() += ridge;
        mllt.compute(mreg);
        if (mllt.info() != Eigen::Success) {
          mldlt.compute(mreg);
          if (mldlt.info() != Eigen::Success) break;
          use_ldlt = true;
        }
      }
    }

    auto solve_newton = [&](const std::vector<RMat>& rcin, std::vector<RMat>& dxo,
                            std::vector<RMat>& dso, RVec& dyo) {
      RVec rhs = rp;
      for (int b = 0; b < nb; ++b) tj[b] = rcin[b] - w[b] * rd[b] * w[b];
      for (int r = 0; r < m; ++r) {
        double v = 0.0;
        for (const Term& t : f.rows[r].terms) v += term_dot(t, tj[t.blk]);
        rhs(r) -= v;
      }
      if (m > 0) {
        dyo = use_ldlt ? RVec(mldlt.solve(rhs)) : RVec(mllt.solve(rhs));
      } else {
        dyo = RVec::Zero(0);
      }
      for (int b = 0; b < nb; ++b) dso[b] = rd[b];
      for (int r = 0; r < m; ++r)
        for (const Term& t : f.rows[r].terms) term_axpy(t, -dyo(r), dso[t.blk]);
      for (int b = 0; b < nb; ++b) {
        dxo[b] = rcin[b] - w[b] * dso[b] * w[b];
        dxo[b] = 0.5 * (dxo[b] + dxo[b].transpose().eval());
      }
    };

    // Predictor.
    for (int b = 0; b < nb; ++b) rc[b] = -out.x[b];
    RVec dya;
    solve_newton(rc, dxa, dsa, dya);
    double apa = 1.0, ada = 1.0;
    for (int b = 0; b < nb; ++b) {
      apa = std::min(apa, step_length(out.x[b], dxa[b]));
      ada = std::min(ada, step_length(out.s[b], dsa[b]));
    }
    double gap_aff = 0.0;
    for (int b = 0; b < nb; ++b)
      gap_aff += ((out.x[b] + apa * dxa[b]).array() * (out.s[b] + ada * dsa[b]).array()).sum();
    const double mu = gapxs / nu;
    const double sigma =
        std::clamp(std::pow(std::max(gap_aff, 0.0) / std::max(gapxs, 1e-300), 3.0), 1e-12, 1.0);
    // Keep complementarity coupled to feasibility: if the gap collapses while
    // residuals remain, the iterate is pinned to the cone boundary and the
    // steps that would restore feasibility get truncated to nothing. Flooring
    // the centering target at the residual scale keeps enough interior room
    // for full feasibility steps; the floor vanishes once the iterate is
    // feasible, so it never blocks convergence.
    double mu_target = sigma * mu;
    const double res_lag = std::max(pres, dres);
    if (res_lag > ctl.tol_feas) mu_target = std::max(mu_target, res_lag);

    // Corrector with Mehrotra second-order term in the scaled space.
    for (int b = 0; b < nb; ++b) {
      const RMat dxt = ginv[b] * dxa[b] * ginv[b].transpose();
      const RMat dst = g[b].transpose() * dsa[b] * g[b];
      RMat z = -0.5 * (dxt * dst + dst * dxt);
      z.diagonal().array() += mu_target;
      z -= RMat(lam[b].cwiseAbs2().asDiagonal());
      const int d = f.dim[b];
      RMat rt(d, d);
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) rt(i, j) = 2.0 * z(i, j) / (lam[b](i) + lam[b](j));
      rc[b] = g[b] * rt * g[b].transpose();
      rc[b] = 0.5 * (rc[b] + rc[b].transpose().eval());
    }
    RVec dy;
    solve_newton(rc, dx, ds, dy);
    double ap = 1.0, ad = 1.0;
    for (int b = 0; b < nb; ++b) {
      ap = std::min(ap, step_length(out.x[b], dx[b]));
      ad = std::min(ad, step_length(out.s[b], ds[b]));
    }
    ap *= 0.99;
    ad *= 0.99;
    for (int b = 0; b < nb; ++b) {
      out.x[b] += ap * dx[b];
      out.s[b] += ad * ds[b];
    }
    out.y += ad * dy;
    stall = (ap < 1e-3 && ad < 1e-3) ? stall + 1 : 0;
  }

  // Fell out of the loop: return the best iterate seen.
  out.x = best.x;
  out.s = best.s;
  out.y = best.y;
  out.cx = best.cx;
  out.by = best.by;
  out.gapxs = best.gapxs;
  out.pres = best.pres;
  out.dres = best.dres;
  out.converged = best.base_ok;
  return out;
}

// Embed per-public-block values and complete slack blocks from row residuals.
std::vector<RMat> complete_start(const Std& f, const std::vector<RMat>& pub_vals) {
  std::vector<RMat> x(f.dim.size());
  for (size_t b = 0; b < f.dim.size(); ++b) {
    if (f.pub_of_int[b] >= 0) x[b] = pub_vals[f.pub_of_int[b]];
  }
  for (const Row& r : f.rows) {
    if (r.slack_blk < 0) continue;
    double v = r.b;
    for (size_t k = 0; k < r.terms.size(); ++k) {
      if (static_cast<int>(k) == r.slack_term) continue;
      v -= term_dot(r.terms[k], x[r.terms[k].blk]);
    }
    x[r.slack_blk] = RMat::Constant(1, 1, std::max(v, 1e-10 * std::max(1.0, std::abs(r.b))));
  }
  return x;
}

std::vector<RMat> identity_pub_vals(const Std& f, const ConicProblem& p) {
  std::vector<RMat> vals(p.blocks.size());
  for (size_t b = 0; b < p.blocks.size(); ++b) {
    const int d = f.dim[f.int_of_pub[b]];
    vals[b] = RMat::Identity(d, d);
  }
  return vals;
}

double expr_value_at_identity(const LinExpr& e) {
  double v = e.offset();
  for (const auto& [blk, h] : e.mat_terms()) v += h.real().trace();
  for (const auto& [blk, c] : e.scalar_terms()) v += c;
  return v;
}

void fill_solution(const ConicProblem& p, const Std& f, const IpmOut& run, ConicSolution& sol) {
  sol.iterations += run.iters;
  sol.objective = f.c_scale * run.cx + f.obj_offset;
  sol.dual_objective = f.c_scale * run.by + f.obj_offset;
  sol.gap = f.c_scale * run.gapxs;
  sol.psd_values.assign(p.blocks.size(), CMat());
  sol.scalar_values.assign(p.blocks.size(), 0.0);
  sol.dual_slacks.assign(p.blocks.size(), CMat());
  sol.dual_slack_scalars.assign(p.blocks.size(), 0.0);
  for (size_t b = 0; b < p.blocks.size(); ++b) {
    const int ib = f.int_of_pub[b];
    if (p.blocks[b].kind == BlockKind::hermitian_psd) {
      sol.psd_values[b] = unembed(run.x[ib]);
      sol.dual_slacks[b] = 2.0 * f.c_scale * unembed(run.s[ib]);
    } else {
      sol.scalar_values[b] = run.x[ib](0, 0);
      sol.dual_slack_scalars[b] = f.c_scale * run.s[ib](0, 0);
    }
  }
  sol.dual_y.assign(p.constraints.size(), 0.0);
  for (size_t r = 0; r < f.rows.size(); ++r)
    sol.dual_y[f.rows[r].orig] = f.c_scale * f.rows[r].scale * run.y(static_cast<int>(r));
}

}  // namespace

// ---------------------------------------------------------------------------
// Phase one: relax every inequality by g_i * (v - 1), minimize v >= 0.
// Optimum v* - 1 < 0 certifies a strictly feasible point; > 0 certifies that
// none exists.
// ---------------------------------------------------------------------------

Phase1Result phase1_start(const ConicProblem& p, const ConicSolverOptions& opts) {
  ConicProblem q = p;
  const int v = q.add_scalar("phase1.relax");
  for (auto& con : q.constraints) {
    if (con.rel != Rel::le) continue;
    const double viol = expr_value_at_identity(con.expr) - con.rhs;
    const double gi = std::max(1.0, viol + 1.0);
    con.expr -= q.scalar_term(v, gi);
    con.rhs -= gi;  // expr - gi * v <= rhs - gi  <=>  expr <= rhs + gi * (v - 1)
  }
  q.minimize(q.scalar_term(v));

  const Std f = build_std(q);
  Phase1Result res;
  if (f.triv_infeasible) {
    res.feasible = false;
    res.certificate = 1.0;
    return res;
  }

  std::vector<RMat> pub = identity_pub_vals(f, q);
  pub[v] = RMat::Constant(1, 1, 2.0);
  const std::vector<RMat> start = complete_start(f, pub);

  IpmControls ctl;
  ctl.tol_feas = opts.tol_feas;
  ctl.tol_gap = opts.phase1_tol_gap;
  ctl.max_iter = opts.max_iter;
  ctl.verbose = opts.verbose;
  const int iv = f.int_of_pub[v];
  ctl.early = [iv](const std::vector<RMat>& x, double pres, double) {
    return x[iv](0, 0) < 0.95 && pres < 1e-6;
  };
  const IpmOut run = run_ipm(f, ctl, &start);

  const double vstar = run.x[iv](0, 0);
  res.certificate = vstar - 1.0;
  res.feasible = run.stopped_early || (run.converged && res.certificate < -1e-9);
  res.psd_values.assign(p.blocks.size(), CMat());
  res.scalar_values.assign(p.blocks.size(), 0.0);
  for (size_t b = 0; b < p.blocks.size(); ++b) {
    const int ib = f.int_of_pub[b];
    if (p.blocks[b].kind == BlockKind::hermitian_psd) {
      res.psd_values[b] = unembed(run.x[ib]);
    } else {
      res.scalar_values[b] = run.x[ib](0, 0);
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Main solve
// ---------------------------------------------------------------------------

ConicSolution solve(const ConicProblem& p, const ConicSolverOptions& opts) {
  ConicSolution sol;
  if (p.blocks.empty()) {
    sol.status = SolveStatus::optimal;
    sol.objective = sol.dual_objective = p.objective.offset();
    return sol;
  }
  const Std f = build_std(p);
  if (f.triv_infeasible) {
    sol.status = SolveStatus::infeasible;
    sol.phase1_certificate = 1.0;
    return sol;
  }

  std::vector<RMat> start;
  bool have_start = false;
  if (opts.use_phase1) {
    Phase1Result ph = phase1_start(p, opts);
    sol.phase1_certificate = ph.certificate;
    if (!ph.feasible && ph.certificate > 1e-7) {
      sol.status = SolveStatus::infeasible;
      return sol;
    }
    // Warm start from the phase-one point even when the certificate is
    // inconclusive (v* within tolerance of 1): that point is nearly feasible,
    // and the interior bias applied to hints keeps it usable. A cold start
    // discards exactly the information phase one paid for.
    std::vector<RMat> pub(p.blocks.size());
    for (size_t b = 0; b < p.blocks.size(); ++b) {
      if (p.blocks[b].kind == BlockKind::hermitian_psd) {
        pub[b] = embed_complex(ph.psd_values[b]);
      } else {
        pub[b] = RMat::Constant(1, 1, std::max(ph.scalar_values[b], 1e-10));
      }
    }
    start = complete_start(f, pub);
    have_start = true;
  }

  IpmControls ctl;
  ctl.tol_feas = opts.tol_feas;
  ctl.tol_gap = opts.tol_gap;
  ctl.max_iter = opts.max_iter;
  ctl.verbose = opts.verbose;
  const IpmOut run = run_ipm(f, ctl, have_start ? &start : nullptr);
  fill_solution(p, f, run, sol);
  sol.status = run.converged ? SolveStatus::optimal : SolveStatus::numerical_limit;
  return sol;
}

double ConicSolution::value(const LinExpr& e) const {
  double v = e.offset();
  for (const auto& [blk, h] : e.mat_terms()) {
    if (psd_values[blk].size() > 0) v += (h * psd_values[blk]).trace().real();
  }
  for (const auto& [blk, c] : e.scalar_terms()) v += c * scalar_values[blk];
  return v;
}

double ConicSolution::multiplier(const ConicProblem& p, int row) const {
  const double y = dual_y[row];
  return p.constraints[row].rel == Rel::le ? -y : y;
}

// ---------------------------------------------------------------------------
// Plain-text dump / load
// ---------------------------------------------------------------------------

namespace {

void dump_expr(std::ostream& out, const LinExpr& e) {
  out << "  offset " << e.offset() << "\n";
  for (const auto& [blk, h] : e.mat_terms()) {
    const int n = static_cast<int>(h.rows());
    out << "  mat " << blk << " " << n << "\n";
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j)
        out << "   " << i << " " << j << " " << h(i, j).real() << " " << h(i, j).imag() << "\n";
    out << "  endmat\n";
  }
  for (const auto& [blk, c] : e.scalar_terms()) out << "  sca " << blk << " " << c << "\n";
  out << "  endexpr\n";
}

}  // namespace

LinExpr ConicProblem::load_expr(std::istream& in) {
  LinExpr e;
  std::string tok;
  while (in >> tok) {
    if (tok == "endexpr") break;
    if (tok == "offset") {
      double v;
      in >> v;
      e += LinExpr(v);
    } else if (tok == "mat") {
      int blk, n;
      in >> blk >> n;
      CMat h = CMat::Zero(n, n);
      std::string t2;
      while (in >> t2 && t2 != "endmat") {
        const int i = std::stoi(t2);
        int j;
        double re, im;
        in >> j >> re >> im;
        h(i, j) = cdouble(re, im);
        if (i != j) h(j, i) = cdouble(re, -im);
      }
      LinExpr term;
      term.mats_.emplace(blk, h);
      e += term;
    } else if (tok == "sca") {
      int blk;
      double c;
      in >> blk >> c;
      LinExpr term;
      term.scalars_.emplace(blk, c);
      e += term;
    } else {
      throw std::invalid_argument("conic: unrecognized token '" + tok + "' in expression");
    }
  }
  return e;
}

void ConicProblem::dump(std::ostream& out) const {
  out << std::setprecision(17);
  out << "conic-problem-v1\n";
  out << "blocks " << blocks.size() << "\n";
  for (const BlockSpec& b : blocks) {
    out << (b.kind == BlockKind::hermitian_psd ? "psd " : "scalar ") << b.n << " " << b.label
        << "\n";
  }
  out << "objective\n";
  dump_expr(out, objective);
  out << "constraints " << constraints.size() << "\n";
  for (const Constraint& c : constraints) {
    out << (c.rel == Rel::eq ? "eq " : "le ") << c.rhs << " " << c.name << "\n";
    dump_expr(out, c.expr);
  }
  out << "end\n";
}

ConicProblem ConicProblem::load(std::istream& in) {
  ConicProblem p;
  std::string tok;
  in >> tok;
  if (tok != "conic-problem-v1") throw std::invalid_argument("conic: bad dump header");
  size_t nblocks = 0;
  in >> tok >> nblocks;
  if (tok != "blocks") throw std::invalid_argument("conic: expected 'blocks'");
  for (size_t b = 0; b < nblocks; ++b) {
    std::string kind, label;
    int n;
    in >> kind >> n;
    std::getline(in, label);
    if (!label.empty() && label.front() == ' ') label.erase(0, 1);
    if (kind == "psd") {
      p.blocks.push_back({BlockKind::hermitian_psd, n, label});
    } else if (kind == "scalar") {
      p.blocks.push_back({BlockKind::nonneg_scalar, 1, label});
    } else {
      throw std::invalid_argument("conic: unknown block kind '" + kind + "'");
    }
  }
  in >> tok;
  if (tok != "objective") throw std::invalid_argument("conic: expected 'objective'");
  p.objective = load_expr(in);
  size_t ncons = 0;
  in >> tok >> ncons;
  if (tok != "constraints") throw std::invalid_argument("conic: expected 'constraints'");
  for (size_t r = 0; r < ncons; ++r) {
    std::string rel, name;
    double rhs;
    in >> rel >> rhs;
    std::getline(in, name);
    if (!name.empty() && name.front() == ' ') name.erase(0, 1);
    Constraint c;
    c.rel = rel == "eq" ? Rel::eq : Rel::le;
    if (rel != "eq" && rel != "le")
      throw std::invalid_argument("conic: unknown relation '" + rel + "'");
    c.rhs = rhs;
    c.name = name;
    c.expr = load_expr(in);
    p.constraints.push_back(std::move(c));
  }
  return p;
}

}  // namespace iscc::conic
