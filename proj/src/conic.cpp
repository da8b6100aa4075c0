#include "corsma/conic.hpp"

#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

namespace corsma::conic {

int ConicProgram::new_var(double obj_coef) {
  int idx = n_++;
  c_.conservativeResize(n_);
  c_[idx] = obj_coef;
  return idx;
}

std::vector<int> ConicProgram::new_vars(int count, double obj_coef) {
  std::vector<int> out(count);
  for (int i = 0; i < count; ++i) out[i] = new_var(obj_coef);
  return out;
}

void ConicProgram::set_objective(int var, double coef) {
  if (var < 0 || var >= n_) throw std::out_of_range("set_objective: bad variable");
  c_[var] = coef;
}

void ConicProgram::push_row(const LinExpr& e) {
  for (const auto& [var, coef] : e.terms) {
    if (var < 0 || var >= n_) throw std::out_of_range("conic row references unknown variable");
    trips_.push_back({m_, var, coef});
  }
  offsets_.push_back(e.constant);
  ++m_;
}

void ConicProgram::add_nonneg(const LinExpr& expr) {
  if (!cones_.empty() && cones_.back().kind == ConeKind::NonNeg) {
    cones_.back().dim += 1;  // merge adjacent nonnegative rows into one block
  } else {
    cones_.push_back({ConeKind::NonNeg, 1});
  }
  push_row(expr);
}

void ConicProgram::add_soc(const std::vector<LinExpr>& rows) {
  if (rows.size() < 2) throw std::invalid_argument("second order cone needs at least 2 rows");
  cones_.push_back({ConeKind::SecondOrder, static_cast<int>(rows.size())});
  for (const auto& r : rows) push_row(r);
}

void ConicProgram::add_rotated_soc(const LinExpr& a, const LinExpr& b,
                                   const std::vector<LinExpr>& v) {
  // a b >= ||v||^2, a,b >= 0  <=>  a + b >= || (2v, a - b) ||.
  std::vector<LinExpr> rows;
  rows.reserve(v.size() + 2);
  LinExpr head = a;
  head += b;
  rows.push_back(head);
  for (const auto& e : v) {
    LinExpr d = e;
    d.scale(2.0);
    rows.push_back(d);
  }
  LinExpr tail = a;
  LinExpr nb = b;
  nb.scale(-1.0);
  tail += nb;
  rows.push_back(tail);
  add_soc(rows);
}

void ConicProgram::add_exp(const LinExpr& arg, const LinExpr& bound, double lo, double hi) {
  if (!(lo < hi)) throw std::invalid_argument("exp bracket must satisfy lo < hi");
  ConeSpec spec{ConeKind::Exponential, 3};
  spec.exp_lo = lo;
  spec.exp_hi = hi;
  cones_.push_back(spec);
  push_row(arg);
  push_row(LinExpr(1.0));
  push_row(bound);
}

void ConicProgram::add_psd(int side, const std::vector<LinExpr>& svec_entries) {
  if (static_cast<int>(svec_entries.size()) != side * (side + 1) / 2)
    throw std::invalid_argument("add_psd: entry count does not match side");
  cones_.push_back({ConeKind::PsdReal, side});
  for (const auto& e : svec_entries) push_row(e);
}

MatX ConicProgram::row_matrix() const {
  MatX A = MatX::Zero(m_, n_);
  for (const auto& t : trips_) A(t.row, t.col) += t.value;
  return A;
}

VecX ConicProgram::row_offsets() const {
  return Eigen::Map<const VecX>(offsets_.data(), static_cast<Eigen::Index>(offsets_.size()));
}

std::string ConicProgram::dump() const {
  std::ostringstream os;
  os.precision(9);
  os << "vars " << n_ << " rows " << m_ << "\nmin";
  for (int j = 0; j < n_; ++j)
    if (c_[j] != 0.0) os << " " << c_[j] << "*x" << j;
  os << "\n";
  std::map<std::pair<int, int>, double> entries;
  for (const auto& t : trips_) entries[std::make_pair(t.row, t.col)] += t.value;
  int row = 0;
  for (const auto& cone : cones_) {
    switch (cone.kind) {
      case ConeKind::NonNeg: os << "nonneg " << cone.rows(); break;
      case ConeKind::SecondOrder: os << "soc " << cone.rows(); break;
      case ConeKind::Exponential:
        os << "exp [" << cone.exp_lo << "," << cone.exp_hi << "]";
        break;
      case ConeKind::PsdReal: os << "psd side " << cone.dim; break;
    }
    os << "\n";
    for (int r = 0; r < cone.rows(); ++r, ++row) {
      os << "  s" << row << " = " << offsets_[row];
      auto it = entries.lower_bound({row, 0});
      for (; it != entries.end() && it->first.first == row; ++it)
        os << (it->second >= 0 ? " + " : " - ") << std::abs(it->second) << "*x"
           << it->first.second;
      os << "\n";
    }
  }
  return os.str();
}

MatX hermitian_to_real_embedding(const CMatX& M) {
  const Eigen::Index d = M.rows();
  MatX Y(2 * d, 2 * d);
  Y.topLeftCorner(d, d) = M.real();
  Y.bottomRightCorner(d, d) = M.real();
  Y.topRightCorner(d, d) = -M.imag();
  Y.bottomLeftCorner(d, d) = M.imag();
  return Y;
}

VecX svec(const MatX& S) {
  const Eigen::Index d = S.rows();
  VecX v(d * (d + 1) / 2);
  const double rt2 = std::sqrt(2.0);
  Eigen::Index k = 0;
  for (Eigen::Index j = 0; j < d; ++j)
    for (Eigen::Index i = j; i < d; ++i) v[k++] = (i == j) ? S(i, j) : rt2 * S(i, j);
  return v;
}

MatX smat(const VecX& v) {
  const Eigen::Index L = v.size();
  const Eigen::Index d = static_cast<Eigen::Index>(std::llround((std::sqrt(8.0 * L + 1.0) - 1.0) / 2.0));
  if (d * (d + 1) / 2 != L) throw std::invalid_argument("smat: length is not triangular");
  MatX S(d, d);
  const double inv_rt2 = 1.0 / std::sqrt(2.0);
  Eigen::Index k = 0;
  for (Eigen::Index j = 0; j < d; ++j)
    for (Eigen::Index i = j; i < d; ++i) {
      double val = (i == j) ? v[k] : inv_rt2 * v[k];
      S(i, j) = val;
      S(j, i) = val;
      ++k;
    }
  return S;
}

int hermitian_param_count(int side) { return side * side; }

namespace {

// Index helpers for the [diag, (re, im) strict lower column major] layout.
int diag_param(int p) { return p; }
int offdiag_param(int side, int p, int q, bool imag) {
  // p > q; position of (p, q) in the strict lower triangle, column major.
  int pos = 0;
  for (int col = 0; col < q; ++col) pos += side - 1 - col;
  pos += p - q - 1;
  return side + 2 * pos + (imag ? 1 : 0);
}

}  // namespace

LinExpr hermitian_trace_form(const CMatX& M, const std::vector<int>& params) {
  const int d = static_cast<int>(M.rows());
  if (static_cast<int>(params.size()) != hermitian_param_count(d))
    throw std::invalid_argument("hermitian_trace_form: parameter count mismatch");
  LinExpr e;
  for (int p = 0; p < d; ++p) e.add(params[diag_param(p)], M(p, p).real());
  for (int q = 0; q < d; ++q)
    for (int p = q + 1; p < d; ++p) {
      e.add(params[offdiag_param(d, p, q, false)], 2.0 * M(p, q).real());
      e.add(params[offdiag_param(d, p, q, true)], 2.0 * M(p, q).imag());
    }
  return e;
}

std::vector<LinExpr> hermitian_embedding_rows(int side, const std::vector<int>& params) {
  const int d = side;
  if (static_cast<int>(params.size()) != hermitian_param_count(d))
    throw std::invalid_argument("hermitian_embedding_rows: parameter count mismatch");
  const double rt2 = std::sqrt(2.0);
  // Y(i, j) of the 2d embedding as a one-term expression over the parameters.
  auto entry = [&](int i, int j) {
    LinExpr e;
    const bool ti = i >= d, tj = j >= d;
    const int p = ti ? i - d : i, q = tj ? j - d : j;
    if (ti == tj) {  // Re X block
      if (p == q)
        e.add(params[diag_param(p)], 1.0);
      else
        e.add(params[offdiag_param(d, std::max(p, q), std::min(p, q), false)], 1.0);
    } else {  // Im X block, antisymmetric, sign +1 in the bottom left
      if (p != q) {
        double sign = ti ? 1.0 : -1.0;       // bottom left holds Im X as written
        if (p < q) sign = -sign;             // Im X(p, q) = -Im X(q, p)
        e.add(params[offdiag_param(d, std::max(p, q), std::min(p, q), true)], sign);
      }
    }
    return e;
  };
  std::vector<LinExpr> rows;
  rows.reserve(d * (2 * d + 1));
  for (int j = 0; j < 2 * d; ++j)
    for (int i = j; i < 2 * d; ++i) {
      LinExpr e = entry(i, j);
      if (i != j) e.scale(rt2);
      rows.push_back(std::move(e));
    }
  return rows;
}

CMatX hermitian_from_params(int side, const VecX& x, const std::vector<int>& params) {
  const int d = side;
  CMatX X(d, d);
  for (int p = 0; p < d; ++p) X(p, p) = x[params[diag_param(p)]];
  for (int q = 0; q < d; ++q)
    for (int p = q + 1; p < d; ++p) {
      cplx v(x[params[offdiag_param(d, p, q, false)]], x[params[offdiag_param(d, p, q, true)]]);
      X(p, q) = v;
      X(q, p) = std::conj(v);
    }
  return X;
}

}  // namespace corsma::conic
