#pragma once

// Convex quadratic programs
//
//   minimize    1/2 z'Qz + c'z
//   subject to  A z  = b
//               G z <= h
//
// solved by a primal-dual interior-point method (Mehrotra predictor-corrector).
// Newton systems are factorized with a banded LDL' after interleaving each
// equality multiplier right after the last variable it touches, so horizon
// problems with stage-wise coupling factorize in time linear in their length.
// Dense problems simply get a full band.

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace hybridsize::qp {

struct QuadraticProgram {
  Eigen::MatrixXd Q;
  Eigen::VectorXd c;
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  Eigen::MatrixXd G;
  Eigen::VectorXd h;

  [[nodiscard]] Eigen::Index num_variables() const { return c.size(); }
  [[nodiscard]] double objective(const Eigen::VectorXd& z) const;
};

/// Checks dimensions (throws std::invalid_argument) and symmetrizes Q.
/// Empty A / G matrices may be given with zero rows.
QuadraticProgram make_program(Eigen::MatrixXd Q, Eigen::VectorXd c, Eigen::MatrixXd A,
                              Eigen::VectorXd b, Eigen::MatrixXd G, Eigen::VectorXd h);

enum class Status { Optimal, Infeasible, IterLimit };

std::string to_string(Status s);

struct QpSolution {
  Status status = Status::IterLimit;
  Eigen::VectorXd z;
  double objective = 0.0;
  double eq_residual = 0.0;     // max |Az - b|
  double ineq_violation = 0.0;  // max(0, max(Gz - h))
  Eigen::VectorXd eq_duals;
  Eigen::VectorXd ineq_duals;
  int iterations = 0;
};

struct Settings {
  double tolerance = 1e-9;
  int max_iterations = 100;
  double regularization = 1e-9;
  int refinement_steps = 1;
  bool polish = true;  // refine the interior solution on its active set
};

/// Structure analysis of a program (sparsity, KKT ordering, bandwidth) that
/// is reused by solves differing only in the right-hand side h. Branch and
/// bound changes only variable bounds, which live in h.
class PreparedProgram {
 public:
  explicit PreparedProgram(const QuadraticProgram& qp);

  [[nodiscard]] QpSolution solve(const Eigen::VectorXd& h,
                                 const std::optional<Eigen::VectorXd>& warm_start,
                                 const Settings& settings) const;

  [[nodiscard]] const QuadraticProgram& program() const { return qp_; }
  [[nodiscard]] int bandwidth() const { return bandwidth_; }

 private:
  // Compressed sparse rows.
  struct Csr {
    std::vector<int> ptr{0};
    std::vector<int> col;
    std::vector<double> val;

    void build(const Eigen::MatrixXd& M);
    [[nodiscard]] int rows() const { return static_cast<int>(ptr.size()) - 1; }
    void multiply(const double* x, double* out) const;
    void multiply_transpose_add(const double* y, double* out) const;
  };
  // One contribution to the KKT band: coef times the keep flags of the
  // variables a, b (b < 0: none) and, for G, the weight of row `row`.
  struct BandEntry {
    int index;
    int a;
    int b;
    int row;
    double coef;
  };

  void polish(const Eigen::VectorXd& h, const std::vector<char>& active, const Settings& settings,
              Eigen::VectorXd& x, QpSolution& sol) const;

  QuadraticProgram qp_;
  Csr q_;
  Csr a_;
  Csr g_;
  std::vector<int> var_pos_;  // KKT position of each variable
  std::vector<int> eq_pos_;   // KKT position of each equality multiplier
  int bandwidth_ = 0;
  std::vector<BandEntry> q_band_;  // lower triangle of Q
  std::vector<BandEntry> g_band_;  // lower triangle of g_r g_r' per row of G
  std::vector<BandEntry> a_band_;  // entries of A

  friend class KktWorkspace;
};

QpSolution solve(const QuadraticProgram& qp,
                 const std::optional<Eigen::VectorXd>& warm_start = std::nullopt,
                 const Settings& settings = {});

}  // namespace hybridsize::qp
