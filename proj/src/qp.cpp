#include "hybridsize/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace hybridsize::qp {

namespace {

using Eigen::VectorXd;

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kStepFraction = 0.99;
// A ray with |A'y + G'z| <= ratio * tau excludes every feasible point with
// |x|_1 < 1 / ratio.
constexpr double kCertificateRatio = 1e-6;

double inf_norm(const VectorXd& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

}  // namespace

double QuadraticProgram::objective(const VectorXd& z) const {
  return 0.5 * z.dot(Q * z) + c.dot(z);
}

std::string to_string(Status s) {
  switch (s) {
    case Status::Optimal: return "optimal";
    case Status::Infeasible: return "infeasible";
    case Status::IterLimit: return "iteration_limit";
  }
  return "unknown";
}

QuadraticProgram make_program(Eigen::MatrixXd Q, VectorXd c, Eigen::MatrixXd A, VectorXd b,
                              Eigen::MatrixXd G, VectorXd h) {
  const auto n = c.size();
  auto fail = [](const std::string& what) {
    throw std::invalid_argument("make_program: " + what);
  };
  if (Q.rows() != n || Q.cols() != n) fail("Q must be n x n");
  if (A.rows() == 0) A.resize(0, n);
  if (G.rows() == 0) G.resize(0, n);
  if (A.cols() != n) fail("A must have n columns");
  if (b.size() != A.rows()) fail("b must match rows of A");
  if (G.cols() != n) fail("G must have n columns");
  if (h.size() != G.rows()) fail("h must match rows of G");
  QuadraticProgram qp;
  qp.Q = 0.5 * (Q + Q.transpose());
  qp.c = std::move(c);
  qp.A = std::move(A);
  qp.b = std::move(b);
  qp.G = std::move(G);
  qp.h = std::move(h);
  return qp;
}

// ---------------------------------------------------------------------------

void PreparedProgram::Csr::build(const Eigen::MatrixXd& M) {
  ptr.assign(1, 0);
  col.clear();
  val.clear();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    for (Eigen::Index j = 0; j < M.cols(); ++j) {
      if (M(i, j) != 0.0) {
        col.push_back(static_cast<int>(j));
        val.push_back(M(i, j));
      }
    }
    ptr.push_back(static_cast<int>(col.size()));
  }
}

void PreparedProgram::Csr::multiply(const double* x, double* out) const {
  for (int r = 0; r < rows(); ++r) {
    double s = 0.0;
    for (int k = ptr[r]; k < ptr[r + 1]; ++k) s += val[k] * x[col[k]];
    out[r] = s;
  }
}

void PreparedProgram::Csr::multiply_transpose_add(const double* y, double* out) const {
  for (int r = 0; r < rows(); ++r) {
    const double yr = y[r];
    if (yr == 0.0) continue;
    for (int k = ptr[r]; k < ptr[r + 1]; ++k) out[col[k]] += val[k] * yr;
  }
}

PreparedProgram::PreparedProgram(const QuadraticProgram& qp) : qp_(qp) {
  const int n = static_cast<int>(qp_.c.size());
  if (qp_.Q.rows() != n || qp_.Q.cols() != n || qp_.A.cols() != n || qp_.G.cols() != n ||
      qp_.b.size() != qp_.A.rows() || qp_.h.size() != qp_.G.rows()) {
    throw std::invalid_argument("PreparedProgram: inconsistent dimensions");
  }
  q_.build(qp_.Q);
  a_.build(qp_.A);
  g_.build(qp_.G);

  // Interleave each equality row right after the last variable it touches.
  const int p = a_.rows();
  std::vector<std::vector<int>> rows_after(static_cast<std::size_t>(n) + 1);
  for (int r = 0; r < p; ++r) {
    int last = -1;
    for (int k = a_.ptr[r]; k < a_.ptr[r + 1]; ++k) last = std::max(last, a_.col[k]);
    rows_after[last < 0 ? n : last].push_back(r);
  }
  var_pos_.assign(n, 0);
  eq_pos_.assign(p, 0);
  int pos = 0;
  for (int j = 0; j < n; ++j) {
    var_pos_[j] = pos++;
    for (int r : rows_after[j]) eq_pos_[r] = pos++;
  }
  for (int r : rows_after[n]) eq_pos_[r] = pos++;

  int bw = 0;
  for (int i = 0; i < n; ++i) {
    for (int k = q_.ptr[i]; k < q_.ptr[i + 1]; ++k) {
      bw = std::max(bw, std::abs(var_pos_[i] - var_pos_[q_.col[k]]));
    }
  }
  for (int r = 0; r < g_.rows(); ++r) {
    int lo = std::numeric_limits<int>::max(), hi = -1;
    for (int k = g_.ptr[r]; k < g_.ptr[r + 1]; ++k) {
      lo = std::min(lo, var_pos_[g_.col[k]]);
      hi = std::max(hi, var_pos_[g_.col[k]]);
    }
    if (hi >= 0) bw = std::max(bw, hi - lo);
  }
  for (int r = 0; r < p; ++r) {
    for (int k = a_.ptr[r]; k < a_.ptr[r + 1]; ++k) {
      bw = std::max(bw, std::abs(eq_pos_[r] - var_pos_[a_.col[k]]));
    }
  }
  bandwidth_ = bw;

  // Scatter lists into the band: row `pi` of the band holds columns
  // pi - bw .. pi, with the diagonal last.
  const int stride = bw + 1;
  auto band_index = [&](int pi, int pj) {
    if (pi < pj) std::swap(pi, pj);
    return pi * stride + (pj - pi + bw);
  };
  for (int i = 0; i < n; ++i) {
    for (int k = q_.ptr[i]; k < q_.ptr[i + 1]; ++k) {
      const int j = q_.col[k];
      if (j > i) continue;
      q_band_.push_back({band_index(var_pos_[i], var_pos_[j]), i, j, -1, q_.val[k]});
    }
  }
  for (int r = 0; r < g_.rows(); ++r) {
    for (int ka = g_.ptr[r]; ka < g_.ptr[r + 1]; ++ka) {
      for (int kb = g_.ptr[r]; kb <= ka; ++kb) {
        g_band_.push_back({band_index(var_pos_[g_.col[ka]], var_pos_[g_.col[kb]]), g_.col[ka],
                           g_.col[kb], r, g_.val[ka] * g_.val[kb]});
      }
    }
  }
  for (int r = 0; r < p; ++r) {
    for (int k = a_.ptr[r]; k < a_.ptr[r + 1]; ++k) {
      a_band_.push_back({band_index(eq_pos_[r], var_pos_[a_.col[k]]), a_.col[k], -1, r, a_.val[k]});
    }
  }
}

// Banded LDL' of the regularized, reduced Newton system
//
//   [ Q + G' W G + d I     A'  ] [dx]   [r1]
//   [        A           -d I  ] [dy] = [r2]
//
// with fixed variables and empty equality rows replaced by identity rows.
// The band is stored with `bw` leading zero rows so every row, including
// the first ones, spans exactly bw subdiagonal entries.
class KktWorkspace {
 public:
  KktWorkspace(const PreparedProgram& prog, const std::vector<double>& keep_var,
               const std::vector<double>& keep_eq, const std::vector<double>& keep_g)
      : prog_(prog), keep_var_(keep_var), keep_eq_(keep_eq), keep_g_(keep_g) {
    n_ = static_cast<int>(prog.var_pos_.size());
    p_ = static_cast<int>(prog.eq_pos_.size());
    size_ = n_ + p_;
    bw_ = prog.bandwidth_;
    stride_ = bw_ + 1;
    band_.assign(static_cast<std::size_t>(size_ + bw_) * stride_, 0.0);
    inv_diag_.assign(static_cast<std::size_t>(size_ + bw_), 1.0);
    work_.assign(static_cast<std::size_t>(size_ + bw_), 0.0);
    row_tmp_.assign(static_cast<std::size_t>(bw_) + 1, 0.0);
    kkt_pos_.resize(size_);
    for (int j = 0; j < n_; ++j) kkt_pos_[prog.var_pos_[j]] = j;
    for (int r = 0; r < p_; ++r) kkt_pos_[prog.eq_pos_[r]] = n_ + r;
    res_.resize(size_);
    corr_.resize(size_);
  }

  // Assemble and factorize for inequality weights w (length = rows of G).
  bool factorize(const VectorXd& w, double delta) {
    std::fill(band_.begin(), band_.end(), 0.0);
    double* band = band_.data() + static_cast<std::size_t>(bw_) * stride_;
    const double* kv = keep_var_.data();
    for (const auto& e : prog_.q_band_) band[e.index] += e.coef * kv[e.a] * kv[e.b];
    for (const auto& e : prog_.g_band_) band[e.index] += e.coef * w[e.row] * kv[e.a] * kv[e.b];
    for (const auto& e : prog_.a_band_) band[e.index] += e.coef * keep_eq_[e.row] * kv[e.a];
    for (int j = 0; j < n_; ++j) {
      band[prog_.var_pos_[j] * stride_ + bw_] += kv[j] > 0.0 ? delta : 1.0;
    }
    for (int r = 0; r < p_; ++r) {
      band[prog_.eq_pos_[r] * stride_ + bw_] += keep_eq_[r] > 0.0 ? -delta : 1.0;
    }

    // Row-oriented LDL'. tmp[jj] accumulates L(i, j) D(j) for j = i - bw + jj.
    double* tmp = row_tmp_.data();
    double* inv_d = inv_diag_.data() + bw_;
    for (int i = 0; i < size_; ++i) {
      double* li = band + static_cast<std::ptrdiff_t>(i) * stride_;
      for (int jj = 0; jj < bw_; ++jj) {
        const int j = i - bw_ + jj;
        const double* lj = band + static_cast<std::ptrdiff_t>(j) * stride_ + (bw_ - jj);
        double s = li[jj];
        for (int kk = 0; kk < jj; ++kk) s -= tmp[kk] * lj[kk];
        tmp[jj] = s;
        li[jj] = s * inv_d[j];
      }
      double d = li[bw_];
      for (int kk = 0; kk < bw_; ++kk) d -= tmp[kk] * li[kk];
      if (!std::isfinite(d) || d == 0.0) return false;
      inv_d[i] = 1.0 / d;
    }
    return true;
  }

  // Solves the factorized system; x holds [dx; dy] in natural ordering.
  void solve_factored(VectorXd& x) const {
    double* v = work_.data() + bw_;
    const double* band = band_.data() + static_cast<std::size_t>(bw_) * stride_;
    const double* inv_d = inv_diag_.data() + bw_;
    for (int i = 0; i < size_; ++i) v[i] = x[kkt_pos_[i]];
    for (int i = 0; i < size_; ++i) {
      const double* li = band + static_cast<std::ptrdiff_t>(i) * stride_;
      const double* vk = v + i - bw_;
      double s = v[i];
      for (int kk = 0; kk < bw_; ++kk) s -= li[kk] * vk[kk];
      v[i] = s;
    }
    for (int i = 0; i < size_; ++i) v[i] *= inv_d[i];
    for (int i = size_ - 1; i >= 0; --i) {
      const double* li = band + static_cast<std::ptrdiff_t>(i) * stride_;
      double* vk = v + i - bw_;
      const double vi = v[i];
      for (int kk = 0; kk < bw_; ++kk) vk[kk] -= li[kk] * vi;
    }
    for (int i = 0; i < size_; ++i) x[kkt_pos_[i]] = v[i];
    std::fill(work_.begin(), work_.begin() + bw_, 0.0);
  }

  // Unregularized system applied to x = [dx; dy].
  void apply(const VectorXd& x, const VectorXd& w, VectorXd& out) const {
    out.setZero(size_);
    const double* kv = keep_var_.data();
    for (const auto& e : prog_.q_band_) {
      const double c = e.coef * kv[e.a] * kv[e.b];
      out[e.a] += c * x[e.b];
      if (e.a != e.b) out[e.b] += c * x[e.a];
    }
    const auto& g = prog_.g_;
    for (int r = 0; r < g.rows(); ++r) {
      const double wr = w[r];
      if (wr == 0.0) continue;
      double gx = 0.0;
      for (int k = g.ptr[r]; k < g.ptr[r + 1]; ++k) gx += g.val[k] * kv[g.col[k]] * x[g.col[k]];
      gx *= wr;
      for (int k = g.ptr[r]; k < g.ptr[r + 1]; ++k) out[g.col[k]] += g.val[k] * kv[g.col[k]] * gx;
    }
    for (int j = 0; j < n_; ++j) {
      if (kv[j] == 0.0) out[j] = x[j];
    }
    const auto& a = prog_.a_;
    for (int r = 0; r < p_; ++r) {
      if (keep_eq_[r] == 0.0) {
        out[n_ + r] = x[n_ + r];
        continue;
      }
      double ax = 0.0;
      for (int k = a.ptr[r]; k < a.ptr[r + 1]; ++k) {
        const int j = a.col[k];
        ax += a.val[k] * kv[j] * x[j];
        out[j] += a.val[k] * kv[j] * x[n_ + r];
      }
      out[n_ + r] = ax;
    }
  }

  void solve(const VectorXd& rhs, const VectorXd& w, int refinement_steps, VectorXd& x) {
    x = rhs;
    solve_factored(x);
    for (int it = 0; it < refinement_steps; ++it) {
      apply(x, w, res_);
      corr_ = rhs - res_;
      solve_factored(corr_);
      x += corr_;
    }
  }

 private:
  const PreparedProgram& prog_;
  const std::vector<double>& keep_var_;
  const std::vector<double>& keep_eq_;
  const std::vector<double>& keep_g_;
  int n_ = 0, p_ = 0, size_ = 0, bw_ = 0, stride_ = 1;
  std::vector<double> band_;
  std::vector<double> inv_diag_;
  mutable std::vector<double> work_;
  std::vector<double> row_tmp_;
  std::vector<int> kkt_pos_;
  VectorXd res_, corr_;
};

QpSolution PreparedProgram::solve(const VectorXd& h_in, const std::optional<VectorXd>& warm_start,
                                  const Settings& settings) const {
  const int n = static_cast<int>(qp_.c.size());
  const int p = a_.rows();
  const int m = g_.rows();
  if (h_in.size() != m) throw std::invalid_argument("PreparedProgram::solve: h has wrong size");

  QpSolution sol;
  sol.z = VectorXd::Zero(n);
  sol.eq_duals = VectorXd::Zero(p);
  sol.ineq_duals = VectorXd::Zero(m);
  auto finish = [&](Status status, const VectorXd& x) {
    sol.status = status;
    sol.z = x;
    sol.objective = qp_.objective(x);
    sol.eq_residual = p > 0 ? inf_norm(qp_.A * x - qp_.b) : 0.0;
    sol.ineq_violation = m > 0 ? std::max(0.0, (qp_.G * x - h_in).maxCoeff()) : 0.0;
    return sol;
  };

  // Bounds from singleton rows; variables with coincident bounds are fixed.
  std::vector<double> lb(n, -kInf), ub(n, kInf);
  for (int r = 0; r < m; ++r) {
    if (g_.ptr[r + 1] - g_.ptr[r] != 1) continue;
    const double g = g_.val[g_.ptr[r]];
    const double bound = h_in[r] / g;
    const int j = g_.col[g_.ptr[r]];
    if (g > 0) ub[j] = std::min(ub[j], bound);
    else lb[j] = std::max(lb[j], bound);
  }
  // keep_* are 1 for free variables / active rows and 0 otherwise.
  std::vector<double> keep_var(n, 1.0), keep_eq(p, 0.0), keep_g(m, 0.0);
  VectorXd x = VectorXd::Zero(n);
  for (int j = 0; j < n; ++j) {
    const double scale = 1.0 + std::max(std::abs(lb[j]) < kInf ? std::abs(lb[j]) : 0.0,
                                        std::abs(ub[j]) < kInf ? std::abs(ub[j]) : 0.0);
    if (ub[j] < lb[j] - 1e-9 * scale) return finish(Status::Infeasible, x);
    if (ub[j] - lb[j] <= 1e-12 * scale) {
      keep_var[j] = 0.0;
      x[j] = 0.5 * (lb[j] + ub[j]);
    }
  }
  auto touches_free = [&](const Csr& M, int r) {
    for (int k = M.ptr[r]; k < M.ptr[r + 1]; ++k) if (keep_var[M.col[k]] > 0.0) return true;
    return false;
  };
  auto row_dot = [&](const Csr& M, int r, const VectorXd& v) {
    double s = 0.0;
    for (int k = M.ptr[r]; k < M.ptr[r + 1]; ++k) s += M.val[k] * v[M.col[k]];
    return s;
  };
  for (int r = 0; r < p; ++r) {
    keep_eq[r] = touches_free(a_, r) ? 1.0 : 0.0;
    if (keep_eq[r] == 0.0 &&
        std::abs(row_dot(a_, r, x) - qp_.b[r]) > 1e-9 * (1.0 + std::abs(qp_.b[r]))) {
      return finish(Status::Infeasible, x);
    }
  }
  int m_active = 0;
  for (int r = 0; r < m; ++r) {
    keep_g[r] = touches_free(g_, r) ? 1.0 : 0.0;
    m_active += keep_g[r] > 0.0;
    if (keep_g[r] == 0.0 && row_dot(g_, r, x) > h_in[r] + 1e-9 * (1.0 + std::abs(h_in[r]))) {
      return finish(Status::Infeasible, x);
    }
  }

  auto mul = [](const Csr& M, const VectorXd& v, VectorXd& out) {
    out.resize(M.rows());
    M.multiply(v.data(), out.data());
  };
  // out = M' (v .* mask), with out sized to the variables.
  VectorXd masked;
  auto mul_t = [&](const Csr& M, const VectorXd& v, const std::vector<double>& mask,
                   VectorXd& out) {
    masked = v;
    for (int r = 0; r < M.rows(); ++r) masked[r] *= mask[r];
    out.setZero(n);
    M.multiply_transpose_add(masked.data(), out.data());
  };
  auto mask_vars = [&](VectorXd& v) {
    for (int j = 0; j < n; ++j) v[j] *= keep_var[j];
  };

  KktWorkspace kkt(*this, keep_var, keep_eq, keep_g);
  const double delta = settings.regularization;

  VectorXd y = VectorXd::Zero(p);
  VectorXd s = VectorXd::Ones(m);
  VectorXd zd = Eigen::Map<const VectorXd>(keep_g.data(), m);
  VectorXd w(m), gx(m), qx(n), ax(p), rd(n), rp(p), rg(m), tmp_n(n), tmp_n2(n), rhs(n + p), v(n + p);
  VectorXd t(m), gdx(m), dx(n), dy(p), ds(m), dz(m), rc(m);

  // Initial point: regularized least-squares solve with unit weights.
  {
    w = zd;
    if (!kkt.factorize(w, delta)) return finish(Status::IterLimit, x);
    mul(g_, x, gx);
    VectorXd hx = h_in - gx;
    mul(q_, x, qx);
    mul_t(g_, hx, keep_g, tmp_n);
    mul(a_, x, ax);
    for (int j = 0; j < n; ++j) rhs[j] = keep_var[j] * (-qp_.c[j] - qx[j] + tmp_n[j]);
    for (int r = 0; r < p; ++r) rhs[n + r] = keep_eq[r] * (qp_.b[r] - ax[r]);
    kkt.solve(rhs, w, settings.refinement_steps, v);
    if (warm_start && warm_start->size() == n) {
      for (int j = 0; j < n; ++j) if (keep_var[j] > 0.0) x[j] = (*warm_start)[j];
    } else {
      for (int j = 0; j < n; ++j) if (keep_var[j] > 0.0) x[j] += v[j];
    }
    mul(g_, x, gx);
    for (int r = 0; r < m; ++r) s[r] = keep_g[r] > 0.0 ? std::max(h_in[r] - gx[r], 1.0) : 0.0;
  }

  const double b_norm = inf_norm(qp_.b);
  const double h_norm = std::max(1.0, inf_norm(h_in));
  const double c_norm = inf_norm(qp_.c);
  const double tol = settings.tolerance;

  // Fixed parts of b and h for the infeasibility certificate.
  VectorXd xf = VectorXd::Zero(n);
  for (int j = 0; j < n; ++j) if (keep_var[j] == 0.0) xf[j] = x[j];
  VectorXd bred(p), hred(m);
  mul(a_, xf, bred);
  bred = qp_.b - bred;
  mul(g_, xf, hred);
  hred = h_in - hred;

  // Solves the Newton system for complementarity target rc (= s.*z - sigma mu).
  auto newton = [&](int refinement) {
    for (int r = 0; r < m; ++r) t[r] = keep_g[r] > 0.0 ? (zd[r] * rg[r] - rc[r]) / s[r] : 0.0;
    mul_t(g_, t, keep_g, tmp_n);
    for (int j = 0; j < n; ++j) rhs[j] = keep_var[j] * (-rd[j] - tmp_n[j]);
    for (int r = 0; r < p; ++r) rhs[n + r] = keep_eq[r] * -rp[r];
    kkt.solve(rhs, w, refinement, v);
    dx = v.head(n);
    mask_vars(dx);
    dy = v.tail(p);
    for (int r = 0; r < p; ++r) dy[r] *= keep_eq[r];
    mul(g_, dx, gdx);
    for (int r = 0; r < m; ++r) {
      ds[r] = keep_g[r] * (-rg[r] - gdx[r]);
      dz[r] = keep_g[r] * (w[r] * gdx[r] + t[r]);
    }
  };
  auto max_step = [&](const VectorXd& val, const VectorXd& dval) {
    double a = 1.0;
    for (int r = 0; r < m; ++r) {
      if (dval[r] < 0.0 && keep_g[r] > 0.0) a = std::min(a, -val[r] / dval[r]);
    }
    return a;
  };

  for (int iter = 0; iter < settings.max_iterations; ++iter) {
    sol.iterations = iter + 1;
    mul(g_, x, gx);
    mul(q_, x, qx);
    mul_t(a_, y, keep_eq, tmp_n);
    mul_t(g_, zd, keep_g, tmp_n2);
    rd = qx + qp_.c + tmp_n + tmp_n2;
    mask_vars(rd);
    mul(a_, x, rp);
    for (int r = 0; r < p; ++r) rp[r] = keep_eq[r] * (rp[r] - qp_.b[r]);
    for (int r = 0; r < m; ++r) rg[r] = keep_g[r] * (gx[r] + s[r] - h_in[r]);
    const double sz = s.dot(zd);
    const double mu = m_active > 0 ? sz / m_active : 0.0;

    const double pobj = 0.5 * x.dot(qx) + qp_.c.dot(x);
    const bool primal_ok = inf_norm(rp) <= tol * (1.0 + b_norm) && inf_norm(rg) <= tol * h_norm;
    const bool dual_ok = inf_norm(rd) <= tol * (1.0 + c_norm + inf_norm(qx));
    const bool gap_ok = m_active == 0 || sz <= tol * std::max(1.0, std::abs(pobj));
    if (primal_ok && dual_ok && gap_ok) {
      sol.eq_duals = y;
      sol.ineq_duals = zd;
      if (settings.polish && m_active > 0) {
        std::vector<char> active(m, 0);
        for (int r = 0; r < m; ++r) active[r] = keep_g[r] > 0.0 && zd[r] > s[r];
        polish(h_in, active, settings, x, sol);
      }
      return finish(Status::Optimal, x);
    }

    // Farkas certificate: A'y + G'z ~ 0 with b'y + h'z < 0 proves infeasibility.
    {
      double tau = 0.0;
      for (int r = 0; r < p; ++r) tau -= keep_eq[r] * bred[r] * y[r];
      for (int r = 0; r < m; ++r) tau -= keep_g[r] * hred[r] * zd[r];
      if (tau > 0.0) {
        tmp_n += tmp_n2;  // A'y + G'z from the residual above
        mask_vars(tmp_n);
        if (inf_norm(tmp_n) <= kCertificateRatio * tau) return finish(Status::Infeasible, x);
      }
    }

    for (int r = 0; r < m; ++r) w[r] = keep_g[r] > 0.0 ? zd[r] / s[r] : 0.0;
    if (!kkt.factorize(w, delta)) break;

    for (int r = 0; r < m; ++r) rc[r] = keep_g[r] * s[r] * zd[r];
    // The affine direction only sets the centering, so it skips refinement.
    newton(m_active > 0 ? 0 : settings.refinement_steps);
    if (m_active > 0) {
      const double a_aff = std::min(max_step(s, ds), max_step(zd, dz));
      double mu_aff = 0.0;
      for (int r = 0; r < m; ++r) {
        mu_aff += keep_g[r] * (s[r] + a_aff * ds[r]) * (zd[r] + a_aff * dz[r]);
      }
      mu_aff /= m_active;
      const double sigma = std::pow(std::clamp(mu_aff / std::max(mu, 1e-300), 0.0, 1.0), 3);
      for (int r = 0; r < m; ++r) {
        rc[r] = keep_g[r] * (s[r] * zd[r] + ds[r] * dz[r] - sigma * mu);
      }
      newton(settings.refinement_steps);
    }
    const double alpha =
        m_active > 0 ? std::min(1.0, kStepFraction * std::min(max_step(s, ds), max_step(zd, dz)))
                     : 1.0;
    if (!std::isfinite(alpha) || !dx.allFinite() || !dy.allFinite()) break;
    x += alpha * dx;
    y += alpha * dy;
    s += alpha * ds;
    zd += alpha * dz;
    for (int r = 0; r < m; ++r) {
      if (keep_g[r] > 0.0) {
        s[r] = std::max(s[r], 1e-300);
        zd[r] = std::max(zd[r], 1e-300);
      }
    }
  }
  sol.eq_duals = y;
  sol.ineq_duals = zd;
  return finish(Status::IterLimit, x);
}

// Re-solves with the rows in `active` as equalities and every other
// inequality dropped: active bounds pin their variable, the remaining
// equality-constrained problem is solved densely with a rank-revealing
// factorization (active sets of degenerate vertices are often dependent).
// The result replaces x only if it is primal feasible and does not raise the
// objective.
void PreparedProgram::polish(const VectorXd& h, const std::vector<char>& active,
                             const Settings& settings, VectorXd& x, QpSolution& sol) const {
  const auto n = qp_.c.size();
  const auto p = qp_.A.rows();
  const auto m = qp_.G.rows();
  std::vector<double> lb(n, -kInf), ub(n, kInf);
  std::vector<char> pinned(n, 0);
  VectorXd xp = VectorXd::Zero(n);
  std::vector<Eigen::Index> rows;
  for (Eigen::Index r = 0; r < m; ++r) {
    const int nnz = g_.ptr[r + 1] - g_.ptr[r];
    if (nnz == 1) {
      const int j = g_.col[g_.ptr[r]];
      const double g = g_.val[g_.ptr[r]];
      const double v = h[r] / g;
      if (active[r]) {
        pinned[j] = 1;
        xp[j] = v + 0.0;  // no negative zeros
      }
      if (g > 0) ub[j] = std::min(ub[j], v);
      else lb[j] = std::max(lb[j], v);
    } else if (active[r] && nnz > 0) {
      rows.push_back(r);
    }
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    if (!pinned[j] && std::isfinite(ub[j]) && ub[j] - lb[j] <= 1e-12 * (1.0 + std::abs(ub[j]))) {
      pinned[j] = 1;
      xp[j] = ub[j];
    }
  }
  std::vector<Eigen::Index> free;
  for (Eigen::Index j = 0; j < n; ++j) if (!pinned[j]) free.push_back(j);
  const auto nf = static_cast<Eigen::Index>(free.size());
  const auto k = static_cast<Eigen::Index>(rows.size());
  const auto ne = p + k;

  auto eq_row = [&](Eigen::Index i) {
    return i < p ? Eigen::RowVectorXd(qp_.A.row(i)) : Eigen::RowVectorXd(qp_.G.row(rows[i - p]));
  };
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(nf + ne, nf + ne);
  VectorXd rhs(nf + ne);
  const VectorXd qx = qp_.Q * xp;
  for (Eigen::Index a = 0; a < nf; ++a) {
    for (Eigen::Index b = 0; b < nf; ++b) K(a, b) = qp_.Q(free[a], free[b]);
    rhs[a] = -qp_.c[free[a]] - qx[free[a]];
  }
  for (Eigen::Index i = 0; i < ne; ++i) {
    const Eigen::RowVectorXd e = eq_row(i);
    for (Eigen::Index a = 0; a < nf; ++a) K(nf + i, a) = K(a, nf + i) = e[free[a]];
    rhs[nf + i] = (i < p ? qp_.b[i] : h[rows[i - p]]) - e.dot(xp);
  }
  if (nf + ne > 0) {
    const Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(K);
    const VectorXd sol_kkt = cod.solve(rhs);
    if (!sol_kkt.allFinite()) return;
    if (inf_norm(K * sol_kkt - rhs) > 1e-9 * (1.0 + inf_norm(rhs))) return;
    for (Eigen::Index a = 0; a < nf; ++a) xp[free[a]] = sol_kkt[a];
  }

  const double h_scale = std::max(1.0, inf_norm(h));
  if (m > 0 && (qp_.G * xp - h).maxCoeff() > settings.tolerance * h_scale) return;
  if (p > 0 && inf_norm(qp_.A * xp - qp_.b) > settings.tolerance * (1.0 + inf_norm(qp_.b))) return;
  const double obj_ipm = qp_.objective(x);
  if (qp_.objective(xp) > obj_ipm + settings.tolerance * (1.0 + std::abs(obj_ipm))) return;
  x = xp;
  sol.iterations += 1;
}

QpSolution solve(const QuadraticProgram& qp, const std::optional<VectorXd>& warm_start,
                 const Settings& settings) {
  PreparedProgram prepared(qp);
  return prepared.solve(qp.h, warm_start, settings);
}

}  // namespace hybridsize::qp
