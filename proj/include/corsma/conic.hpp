#pragma once

#include <string>
#include <vector>

#include "corsma/types.hpp"

namespace corsma::conic {

// Sparse affine expression constant + sum coef * x[var].
struct LinExpr {
  double constant = 0.0;
  std::vector<std::pair<int, double>> terms;

  LinExpr() = default;
  explicit LinExpr(double c) : constant(c) {}
  LinExpr& add(int var, double coef) {
    if (coef != 0.0) terms.emplace_back(var, coef);
    return *this;
  }
  LinExpr& operator+=(const LinExpr& o) {
    constant += o.constant;
    terms.insert(terms.end(), o.terms.begin(), o.terms.end());
    return *this;
  }
  LinExpr& scale(double f) {
    constant *= f;
    for (auto& t : terms) t.second *= f;
    return *this;
  }
  double eval(const VecX& x) const {
    double v = constant;
    for (const auto& [i, a] : terms) v += a * x[i];
    return v;
  }
};

enum class ConeKind { NonNeg, SecondOrder, Exponential, PsdReal };

struct ConeSpec {
  ConeKind kind = ConeKind::NonNeg;
  int dim = 0;  // NonNeg: row count; SecondOrder: cone dimension; PsdReal: matrix side
  double exp_lo = -25.0, exp_hi = 25.0;  // bracket metadata for Exponential
  int rows() const {
    switch (kind) {
      case ConeKind::Exponential: return 3;
      case ConeKind::PsdReal: return dim * (dim + 1) / 2;
      default: return dim;
    }
  }
};

// Cone program in slack form: minimize c'x subject to s = rhs(x) in K,
// where each constraint block stores its affine rows directly.
class ConicProgram {
 public:
  int num_vars() const { return n_; }
  int num_rows() const { return m_; }

  int new_var(double obj_coef = 0.0);
  std::vector<int> new_vars(int count, double obj_coef = 0.0);
  void set_objective(int var, double coef);

  // expr(x) >= 0.
  void add_nonneg(const LinExpr& expr);
  // rows[0] >= || rows[1:] ||.
  void add_soc(const std::vector<LinExpr>& rows);
  // a >= 0, b >= 0, a * b >= || v ||^2.
  void add_rotated_soc(const LinExpr& a, const LinExpr& b, const std::vector<LinExpr>& v);
  // exp(arg(x)) <= bound(x); [lo, hi] brackets arg at any solution of interest.
  void add_exp(const LinExpr& arg, const LinExpr& bound, double lo, double hi);
  // smat(entries) positive semidefinite; entries are the scaled lower
  // triangle (sqrt 2 off the diagonal), column major, of a side x side matrix.
  void add_psd(int side, const std::vector<LinExpr>& svec_entries);

  const VecX& objective() const { return c_; }
  const std::vector<ConeSpec>& cones() const { return cones_; }
  // Dense row matrix A and offset b with s = b + A x (so the solver's
  // G = -A, h = b in Gx + s = h form).
  MatX row_matrix() const;
  VecX row_offsets() const;

  std::string dump() const;  // one constraint row per line

 private:
  struct Entry {
    int row;
    int col;
    double value;
  };
  void push_row(const LinExpr& e);
  int n_ = 0;
  int m_ = 0;
  VecX c_ = VecX::Zero(0);
  std::vector<Entry> trips_;
  std::vector<double> offsets_;
  std::vector<ConeSpec> cones_;
};

// [[Re M, -Im M], [Im M, Re M]]; Hermitian M maps to a symmetric matrix with
// every eigenvalue of M duplicated, and tr(embed(M)) = 2 tr(M).
MatX hermitian_to_real_embedding(const CMatX& M);

// Scaled vectorization of a symmetric matrix: lower triangle column major,
// off-diagonal entries times sqrt 2, so that svec(X) . svec(Y) = tr(X Y).
VecX svec(const MatX& S);
MatX smat(const VecX& v);

// Real parameter layout for a Hermitian side x side block: [diagonal entries,
// then (Re, Im) of the strict lower triangle column major].
int hermitian_param_count(int side);
// tr(M X) as a linear expression over those parameters.
LinExpr hermitian_trace_form(const CMatX& M, const std::vector<int>& params);
// svec rows of the real embedding of X over those parameters.
std::vector<LinExpr> hermitian_embedding_rows(int side, const std::vector<int>& params);
// Rebuild the Hermitian matrix from parameter values.
CMatX hermitian_from_params(int side, const VecX& x, const std::vector<int>& params);

}  // namespace corsma::conic
