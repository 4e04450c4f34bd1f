#ifndef ISCC_CONIC_HPP
#define ISCC_CONIC_HPP

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "iscc/scenario.hpp"

namespace iscc::conic {

enum class BlockKind { hermitian_psd, nonneg_scalar };

struct BlockSpec {
  BlockKind kind;
  int n;  ///< side length for PSD blocks, 1 for scalars
  std::string label;
};

/**
 * @brief Real-valued linear functional of the problem's blocks.
 *
 * PSD blocks contribute tr(H X) with Hermitian H, scalars contribute c * x,
 * plus a constant offset. Build terms through the ConicProblem helpers so
 * dimensions and Hermitian-ness are validated.
 */
class LinExpr {
public:
  LinExpr() = default;
  explicit LinExpr(double constant) : offset_(constant) {}

  LinExpr& operator+=(const LinExpr& o);
  LinExpr& operator-=(const LinExpr& o);
  LinExpr& operator*=(double c);
  friend LinExpr operator+(LinExpr a, const LinExpr& b) { return a += b; }
  friend LinExpr operator-(LinExpr a, const LinExpr& b) { return a -= b; }
  friend LinExpr operator*(double c, LinExpr a) { return a *= c; }

  const std::map<int, CMat>& mat_terms() const { return mats_; }
  const std::map<int, double>& scalar_terms() const { return scalars_; }
  double offset() const { return offset_; }
  bool empty() const { return mats_.empty() && scalars_.empty(); }

private:
  friend struct ConicProblem;
  std::map<int, CMat> mats_;       ///< block id -> Hermitian coefficient
  std::map<int, double> scalars_;  ///< block id -> coefficient
  double offset_ = 0.0;
};

enum class Rel { eq, le };

struct Constraint {
  LinExpr expr;
  Rel rel;
  double rhs;
  std::string name;
};

struct ConicProblem {
  std::vector<BlockSpec> blocks;
  std::vector<Constraint> constraints;
  LinExpr objective;  ///< always minimized

  int add_psd_block(int n, const std::string& label);
  int add_scalar(const std::string& label);

  /// tr(H X) for PSD block blk; H must be Hermitian within 1e-12 (symmetrized).
  LinExpr trace_term(int blk, const CMat& h) const;
  /// tr(Q S) where S is the (row_off, col_off) principal sub-block of blk.
  LinExpr trace_sub_term(int blk, int row_off, int col_off, const CMat& q) const;
  /// Re X_ij, Im X_ij of a PSD block (Im requires i != j).
  LinExpr entry_re(int blk, int i, int j) const;
  LinExpr entry_im(int blk, int i, int j) const;
  LinExpr scalar_term(int blk, double coef = 1.0) const;

  void add_eq(const LinExpr& e, double rhs, const std::string& name = "");
  void add_le(const LinExpr& e, double rhs, const std::string& name = "");
  void add_ge(const LinExpr& e, double rhs, const std::string& name = "");
  void minimize(const LinExpr& e) { objective = e; }

  /**
   * Epigraph of tr(R^-1): adds U (n x n) and the 2n x 2n block
   * [[U, I], [I, R]] >= 0 tied entrywise; returns the id of U.
   */
  int lift_trace_inverse(int rs_block);
  /// u >= y^2 through [[u, y], [y, 1]] >= 0; returns the expression for u.
  LinExpr lift_square(const LinExpr& y);
  /// Same lift with a caller-supplied epigraph expression u.
  void lift_square(const LinExpr& y, const LinExpr& u);
  /// w >= 1/g (g > 0) through [[w, 1], [1, g]] >= 0; returns the expression for w.
  LinExpr lift_inverse(const LinExpr& g);

  void dump(std::ostream& out) const;
  static ConicProblem load(std::istream& in);

private:
  void check_psd(int blk) const;
  void lift_square_common(int p, const LinExpr& y);
  static LinExpr load_expr(std::istream& in);
};

struct ConicSolverOptions {
  double tol_feas = 1e-8;
  double tol_gap = 1e-7;
  int max_iter = 200;
  bool use_phase1 = true;  ///< certify strict feasibility before the main solve
  /// Feasibility problems must be solved tightly: the certificate separates
  /// thin-but-real interiors (slack potentials well below 1e-4 after row
  /// equilibration arise in staged solves seeded near a constraint boundary)
  /// from genuinely empty ones.
  double phase1_tol_gap = 1e-9;
  bool verbose = false;
};

enum class SolveStatus { optimal, infeasible, numerical_limit };

struct ConicSolution {
  SolveStatus status = SolveStatus::numerical_limit;
  double objective = 0.0;
  double dual_objective = 0.0;
  double gap = 0.0;  ///< complementarity <X, S> in objective units
  int iterations = 0;
  double phase1_certificate = 0.0;  ///< aux optimum; > 0 certifies infeasibility

  std::vector<CMat> psd_values;        ///< per block (0x0 for scalar slots)
  std::vector<double> scalar_values;   ///< per block (0 for PSD slots)
  std::vector<double> dual_y;          ///< per constraint; <= rows have y <= 0
  std::vector<CMat> dual_slacks;       ///< per PSD block
  std::vector<double> dual_slack_scalars;  ///< per scalar block

  double value(const LinExpr& e) const;
  /// Multiplier in the >= 0 convention for `le` rows (-y), raw y for `eq`.
  double multiplier(const ConicProblem& p, int row) const;
};

struct Phase1Result {
  bool feasible = false;
  double certificate = 0.0;
  std::vector<CMat> psd_values;
  std::vector<double> scalar_values;
};

ConicSolution solve(const ConicProblem& p, const ConicSolverOptions& opts = {});
Phase1Result phase1_start(const ConicProblem& p, const ConicSolverOptions& opts = {});

/// [[Re H, -Im H], [Im H, Re H]]; spectrum of H with doubled multiplicity.
RMat embed_complex(const CMat& h);

}  // namespace iscc::conic

#endif  // ISCC_CONIC_HPP
