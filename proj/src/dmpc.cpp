// Copyright 2026 The impc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "impc/dmpc.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <stdexcept>

#include "impc/linalg.hpp"

namespace impc {
namespace {

// ---------------------------------------------------------------------------
// Small dense helpers.

Vec mat_vec(const Mat& m, const Vec& v) { return m * v; }

Vec mat_t_vec(const Mat& m, const Vec& v) {
  Vec out(m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double vr = v[r];
    if (vr == 0.0) continue;
    for (std::size_t c = 0; c < m.cols(); ++c) out[c] += m(r, c) * vr;
  }
  return out;
}

// m' * a * n
Mat sandwich(const Mat& m, const Mat& a, const Mat& n) { return m.transpose() * (a * n); }

double inf_norm(const Vec& v) { return norm_inf(v); }

// Cholesky inverse of a small SPD matrix; nullopt if not positive definite.
std::optional<Mat> spd_inverse(const Mat& a) {
  const std::size_t n = a.rows();
  Mat l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > 1e-14)) return std::nullopt;
    l(j, j) = std::sqrt(d);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / l(j, j);
    }
  }
  // inverse = L^-T L^-1, built column by column.
  Mat inv(n, n);
  for (std::size_t c = 0; c < n; ++c) {
    std::vector<double> y(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double s = i == c ? 1.0 : 0.0;
      for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * y[k];
      y[i] = s / l(i, i);
    }
    for (std::size_t i = n; i-- > 0;) {
      double s = y[i];
      for (std::size_t k = i + 1; k < n; ++k) s -= l(k, i) * inv(k, c);
      inv(i, c) = s / l(i, i);
    }
  }
  return inv;
}

// Var-valued helpers recording one node per output entry.

Var dot_const(const Mat& m, std::size_t row, const std::vector<Var>& v, bool transpose = false) {
  std::vector<Var> in;
  std::vector<double> partials;
  double value = 0.0;
  for (std::size_t j = 0; j < v.size(); ++j) {
    const double c = transpose ? m(j, row) : m(row, j);
    if (c == 0.0) continue;
    value += c * v[j].value();
    in.push_back(v[j]);
    partials.push_back(c);
  }
  return tape_record(OpKind::kCustom, value, in, partials);
}

std::vector<Var> mat_vec(const Mat& m, const std::vector<Var>& v) {
  std::vector<Var> out(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) out[r] = dot_const(m, r, v);
  return out;
}

std::vector<Var> mat_t_vec(const Mat& m, const std::vector<Var>& v) {
  std::vector<Var> out(m.cols());
  for (std::size_t c = 0; c < m.cols(); ++c) out[c] = dot_const(m, c, v, true);
  return out;
}

// Column c of a Var matrix dotted with a Var vector: sum_r a(r, c) v[r].
Var column_dot(const Matrix<Var>& a, std::size_t c, const std::vector<Var>& v) {
  std::vector<Var> in;
  std::vector<double> partials;
  double value = 0.0;
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const Var& x = a(r, c);
    const Var& y = v[r];
    if (x.is_constant() && x.value() == 0.0) continue;
    value += x.value() * y.value();
    in.push_back(x);
    partials.push_back(y.value());
    in.push_back(y);
    partials.push_back(x.value());
  }
  return tape_record(OpKind::kCustom, value, in, partials);
}

std::vector<Var> add(const std::vector<Var>& a, const std::vector<Var>& b) {
  std::vector<Var> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

// ---------------------------------------------------------------------------
// Cost terms on plain doubles.

struct CostValues {
  Vec q;
  Vec p;
};

CostValues cost_values(const MpcProblem& prob) { return {values(prob.q), values(prob.p)}; }

Vec stage_diff(const MpcProblem& prob, int k, const Vec& x, const Vec* u) {
  const std::size_t nx = prob.nx();
  Vec d(nx + (u ? prob.nu() : 0));
  for (std::size_t i = 0; i < nx; ++i) d[i] = x[i] - prob.x_ref[k][i];
  if (u) {
    for (std::size_t i = 0; i < prob.nu(); ++i) d[nx + i] = (*u)[i] - prob.u_ref[k][i];
  }
  return d;
}

double cost_of(const CostValues& c, const Vec& d) {
  double s = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) s += c.q[i] * d[i] * d[i] + c.p[i] * d[i];
  return s;
}

Vec clamp_control(const MpcProblem& prob, const Vec& u) {
  Vec out(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    out[i] = std::clamp(u[i], prob.u_lower[i], prob.u_upper[i]);
  }
  return out;
}

bool finite(const Vec& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

// ---------------------------------------------------------------------------
// Riccati backward pass on doubles.

struct Linearized {
  std::vector<Mat> a, b;
};

struct BackwardPass {
  std::vector<Mat> feedback;
  std::vector<Vec> feedforward;
  std::vector<std::vector<bool>> active;
  std::vector<Mat> quu_free_inverse;  // zero rows/cols for clamped entries
  std::vector<Mat> qux;
  std::vector<Mat> vxx;  // N entries
  double expected_linear = 0.0;
};

bool at_lower(double u, double lo) { return u <= lo + 1e-12 * (1.0 + std::abs(lo)); }
bool at_upper(double u, double hi) { return u >= hi - 1e-12 * (1.0 + std::abs(hi)); }

std::optional<BackwardPass> backward_pass(const MpcProblem& prob, const CostValues& c,
                                          const std::vector<Vec>& x, const std::vector<Vec>& u,
                                          const Linearized& lin, double reg,
                                          const std::vector<Mat>* curvature) {
  const int n = prob.horizon;
  const std::size_t nx = prob.nx(), nu = prob.nu();
  BackwardPass out;
  out.feedback.resize(n - 1);
  out.feedforward.resize(n - 1);
  out.active.assign(n - 1, std::vector<bool>(nu, false));
  out.quu_free_inverse.resize(n - 1);
  out.qux.resize(n - 1);
  out.vxx.resize(n);

  const Vec dn = stage_diff(prob, n - 1, x[n - 1], nullptr);
  Vec vx(nx);
  Mat vxx(nx, nx);
  for (std::size_t i = 0; i < nx; ++i) {
    vx[i] = 2.0 * c.q[i] * dn[i] + c.p[i];
    vxx(i, i) = 2.0 * c.q[i];
  }
  out.vxx[n - 1] = vxx;

  for (int k = n - 2; k >= 0; --k) {
    const Mat& a = lin.a[k];
    const Mat& b = lin.b[k];
    const Vec d = stage_diff(prob, k, x[k], &u[k]);
    Vec qx = mat_t_vec(a, vx), qu = mat_t_vec(b, vx);
    for (std::size_t i = 0; i < nx; ++i) qx[i] += 2.0 * c.q[i] * d[i] + c.p[i];
    for (std::size_t i = 0; i < nu; ++i) qu[i] += 2.0 * c.q[nx + i] * d[nx + i] + c.p[nx + i];
    Mat vxx_a = vxx * a;
    Mat qxx = a.transpose() * vxx_a;
    Mat qux = b.transpose() * vxx_a;
    Mat quu = b.transpose() * (vxx * b);
    for (std::size_t i = 0; i < nx; ++i) qxx(i, i) += 2.0 * c.q[i];
    for (std::size_t i = 0; i < nu; ++i) quu(i, i) += 2.0 * c.q[nx + i];
    if (curvature) {
      const Mat& h = (*curvature)[k];
      for (std::size_t i = 0; i < nx; ++i)
        for (std::size_t j = 0; j < nx; ++j) qxx(i, j) += h(i, j);
      for (std::size_t i = 0; i < nu; ++i) {
        for (std::size_t j = 0; j < nx; ++j) qux(i, j) += h(nx + i, j);
        for (std::size_t j = 0; j < nu; ++j) quu(i, j) += h(nx + i, nx + j);
      }
    }

    std::vector<std::size_t> free;
    for (std::size_t i = 0; i < nu; ++i) {
      const bool clamp = (at_lower(u[k][i], prob.u_lower[i]) && qu[i] > 0.0) ||
                         (at_upper(u[k][i], prob.u_upper[i]) && qu[i] < 0.0);
      out.active[k][i] = clamp;
      if (!clamp) free.push_back(i);
    }
    const std::size_t nf = free.size();
    Mat quu_ff(nf, nf);
    for (std::size_t i = 0; i < nf; ++i)
      for (std::size_t j = 0; j < nf; ++j) quu_ff(i, j) = quu(free[i], free[j]) + (i == j ? reg : 0.0);
    Mat inv_f(nf, nf);
    if (nf > 0) {
      auto inv = spd_inverse(quu_ff);
      if (!inv) return std::nullopt;
      inv_f = *inv;
    }
    Mat inv(nu, nu);
    for (std::size_t i = 0; i < nf; ++i)
      for (std::size_t j = 0; j < nf; ++j) inv(free[i], free[j]) = inv_f(i, j);

    Vec kff(nu);
    Mat kfb(nu, nx);
    for (std::size_t i = 0; i < nu; ++i) {
      for (std::size_t j = 0; j < nu; ++j) {
        if (inv(i, j) == 0.0) continue;
        kff[i] -= inv(i, j) * qu[j];
        for (std::size_t col = 0; col < nx; ++col) kfb(i, col) -= inv(i, j) * qux(j, col);
      }
    }
    for (std::size_t i = 0; i < nu; ++i) out.expected_linear += kff[i] * qu[i];

    // V_x = Q_x + K' Quu k + K' Q_u + Qux' k ; V_xx = Q_xx + K' Quu K + K' Qux + Qux' K
    const Vec quu_k = quu * kff;
    Vec new_vx = qx;
    const Vec t1 = mat_t_vec(kfb, quu_k), t2 = mat_t_vec(kfb, qu), t3 = mat_t_vec(qux, kff);
    for (std::size_t i = 0; i < nx; ++i) new_vx[i] += t1[i] + t2[i] + t3[i];
    const Mat kt_qux = kfb.transpose() * qux;
    Mat new_vxx = qxx + sandwich(kfb, quu, kfb) + kt_qux + kt_qux.transpose();
    for (std::size_t i = 0; i < nx; ++i)
      for (std::size_t j = i + 1; j < nx; ++j) {
        const double s = 0.5 * (new_vxx(i, j) + new_vxx(j, i));
        new_vxx(i, j) = s;
        new_vxx(j, i) = s;
      }
    vx = new_vx;
    vxx = new_vxx;
    out.feedback[k] = kfb;
    out.feedforward[k] = kff;
    out.quu_free_inverse[k] = inv;
    out.qux[k] = qux;
    out.vxx[k] = vxx;
  }
  return out;
}

Linearized linearize_trajectory(const MpcProblem& prob, const std::vector<Vec>& x,
                                const std::vector<Vec>& u) {
  Linearized lin;
  for (int k = 0; k + 1 < prob.horizon; ++k) {
    Mat a, b;
    prob.model->step_with_jacobian(x[k], u[k], a, b);
    lin.a.push_back(std::move(a));
    lin.b.push_back(std::move(b));
  }
  return lin;
}

// Rollout with clamping; nullopt if the model throws or produces non-finite
// states.
struct Rollout {
  std::vector<Vec> x, u;
  double cost;
};

std::optional<Rollout> rollout(const MpcProblem& prob, const CostValues& c, const Vec& x_init,
                               const std::vector<Vec>& x_bar, const std::vector<Vec>& u_bar,
                               const BackwardPass* bp, double alpha) {
  Rollout r;
  r.x.push_back(x_init);
  r.cost = 0.0;
  try {
    for (int k = 0; k + 1 < prob.horizon; ++k) {
      Vec uk = u_bar[k];
      if (bp) {
        const Vec dx = r.x[k] - x_bar[k];
        const Vec fb = mat_vec(bp->feedback[k], dx);
        for (std::size_t i = 0; i < uk.size(); ++i) uk[i] += alpha * bp->feedforward[k][i] + fb[i];
      }
      uk = clamp_control(prob, uk);
      r.cost += cost_of(c, stage_diff(prob, k, r.x[k], &uk));
      Vec next = prob.model->step(r.x[k], uk);
      if (!finite(next)) return std::nullopt;
      r.u.push_back(std::move(uk));
      r.x.push_back(std::move(next));
    }
  } catch (const Error&) {
    return std::nullopt;
  }
  r.cost += cost_of(c, stage_diff(prob, prob.horizon - 1, r.x.back(), nullptr));
  if (!std::isfinite(r.cost)) return std::nullopt;
  return r;
}

}  // namespace

// ---------------------------------------------------------------------------
// Models.

Mat DynamicsModel::weighted_hessian(const Vec& x, const Vec& u, const Vec& w) const {
  const std::size_t nx = state_dim(), nu = control_dim(), nz = nx + nu;
  Mat h(nz, nz);
  auto gradient = [&](const Vec& xz, const Vec& uz) {
    Mat a, b;
    step_with_jacobian(xz, uz, a, b);
    Vec g(nz);
    const Vec ga = mat_t_vec(a, w), gb = mat_t_vec(b, w);
    for (std::size_t i = 0; i < nx; ++i) g[i] = ga[i];
    for (std::size_t i = 0; i < nu; ++i) g[nx + i] = gb[i];
    return g;
  };
  for (std::size_t j = 0; j < nz; ++j) {
    Vec xp = x, xm = x, up = u, um = u;
    double& vp = j < nx ? xp[j] : up[j - nx];
    double& vm = j < nx ? xm[j] : um[j - nx];
    const double step = 1e-5 * std::max(1.0, std::abs(vp));
    vp += step;
    vm -= step;
    const Vec gp = gradient(xp, up), gm = gradient(xm, um);
    for (std::size_t i = 0; i < nz; ++i) h(i, j) = (gp[i] - gm[i]) / (2.0 * step);
  }
  for (std::size_t i = 0; i < nz; ++i)
    for (std::size_t j = i + 1; j < nz; ++j) {
      const double s = 0.5 * (h(i, j) + h(j, i));
      h(i, j) = s;
      h(j, i) = s;
    }
  return h;
}

QuadrotorModel::QuadrotorModel(const VehicleParams<Var>& params, double dt)
    : params_(params), dt_(dt) {
  values_.mass = params.mass.value();
  for (int i = 0; i < 3; ++i) values_.inertia[i] = params.inertia[i].value();
  values_.gravity = params.gravity;
}

QuadrotorModel::QuadrotorModel(const VehicleParams<double>& params, double dt)
    : values_(params), dt_(dt) {
  params_.mass = Var(params.mass);
  for (int i = 0; i < 3; ++i) params_.inertia[i] = Var(params.inertia[i]);
  params_.gravity = params.gravity;
}

namespace {
StateVec<double> to_state(const Vec& x) {
  if (x.size() != kStateDim) detail::dimension_mismatch("quadrotor state", x.size(), 1, kStateDim, 1);
  StateVec<double> s;
  std::copy(x.begin(), x.end(), s.begin());
  return s;
}
ControlVec<double> to_control(const Vec& u) {
  if (u.size() != kControlDim) detail::dimension_mismatch("quadrotor control", u.size(), 1, kControlDim, 1);
  ControlVec<double> s;
  std::copy(u.begin(), u.end(), s.begin());
  return s;
}
}  // namespace

Vec QuadrotorModel::step(const Vec& x, const Vec& u) const {
  const auto next = rk4(to_state(x), to_control(u), values_, dt_);
  return Vec(std::vector<double>(next.begin(), next.end()));
}

Vec QuadrotorModel::step_with_jacobian(const Vec& x, const Vec& u, Mat& a, Mat& b) const {
  auto r = impc::step_with_jacobian(to_state(x), to_control(u), values_, dt_);
  a = std::move(r.a);
  b = std::move(r.b);
  return Vec(std::vector<double>(r.next.begin(), r.next.end()));
}

StepWithJacobianDyn QuadrotorModel::step_on_tape(const Vec& x, const Vec& u) const {
  const auto xs = to_state(x);
  const auto us = to_control(u);
  StateVec<Var> xv;
  ControlVec<Var> uv;
  for (std::size_t i = 0; i < kStateDim; ++i) xv[i] = xs[i];
  for (std::size_t i = 0; i < kControlDim; ++i) uv[i] = us[i];
  auto r = impc::step_with_jacobian(xv, uv, params_, dt_);
  return {Vector<Var>(std::vector<Var>(r.next.begin(), r.next.end())), std::move(r.a),
          std::move(r.b)};
}

LinearModel::LinearModel(Matrix<Var> a, Matrix<Var> b)
    : a_(std::move(a)), b_(std::move(b)), a_val_(values(a_)), b_val_(values(b_)) {
  if (a_.rows() != a_.cols() || b_.rows() != a_.rows()) {
    detail::dimension_mismatch("LinearModel", a_.rows(), a_.cols(), b_.rows(), b_.cols());
  }
}

Vec LinearModel::step(const Vec& x, const Vec& u) const { return a_val_ * x + b_val_ * u; }

Vec LinearModel::step_with_jacobian(const Vec& x, const Vec& u, Mat& a, Mat& b) const {
  a = a_val_;
  b = b_val_;
  return step(x, u);
}

StepWithJacobianDyn LinearModel::step_on_tape(const Vec& x, const Vec& u) const {
  return {a_ * cast<Var>(x) + b_ * cast<Var>(u), a_, b_};
}

Mat LinearModel::weighted_hessian(const Vec&, const Vec&, const Vec&) const {
  const std::size_t nz = state_dim() + control_dim();
  return Mat(nz, nz);
}

LinearModel double_integrator(std::size_t axes, double dt) {
  Mat a = Mat::identity(2 * axes);
  Mat b(2 * axes, axes);
  for (std::size_t i = 0; i < axes; ++i) {
    a(i, axes + i) = dt;
    b(i, i) = 0.5 * dt * dt;
    b(axes + i, i) = dt;
  }
  return LinearModel(a, b);
}

// ---------------------------------------------------------------------------
// Problem.

MpcProblem MpcProblem::tracking(std::shared_ptr<const DynamicsModel> model, int horizon,
                                const Vector<Var>& q, const Vector<Var>& p, const Vec& x_ref,
                                const Vec& u_ref, const Vec& u_lower, const Vec& u_upper) {
  MpcProblem prob;
  prob.model = std::move(model);
  prob.horizon = horizon;
  prob.q = q;
  prob.p = p;
  prob.x_ref.assign(static_cast<std::size_t>(std::max(horizon, 0)), x_ref);
  prob.u_ref.assign(static_cast<std::size_t>(std::max(horizon - 1, 0)), u_ref);
  prob.u_lower = u_lower;
  prob.u_upper = u_upper;
  prob.validate();
  return prob;
}

void MpcProblem::validate() const {
  if (!model) throw std::invalid_argument("MpcProblem has no dynamics model");
  if (horizon < 2) throw std::invalid_argument("horizon must be >= 2, got " + std::to_string(horizon));
  const std::size_t nz = nx() + nu();
  if (q.size() != nz || p.size() != nz) {
    detail::dimension_mismatch("cost weights", q.size(), p.size(), nz, nz);
  }
  for (std::size_t i = 0; i < nz; ++i) {
    if (!(q[i].value() >= 0.0)) throw std::invalid_argument("Q diagonal must be >= 0");
    if (i >= nx() && !(q[i].value() > 0.0)) throw std::invalid_argument("Q control block must be > 0");
  }
  if (x_ref.size() != static_cast<std::size_t>(horizon) ||
      u_ref.size() != static_cast<std::size_t>(horizon - 1)) {
    detail::dimension_mismatch("references", x_ref.size(), u_ref.size(), horizon, horizon - 1);
  }
  for (const Vec& r : x_ref) {
    if (r.size() != nx() || !finite(r)) throw std::invalid_argument("state reference must be finite with nx entries");
  }
  for (const Vec& r : u_ref) {
    if (r.size() != nu() || !finite(r)) throw std::invalid_argument("control reference must be finite with nu entries");
  }
  if (u_lower.size() != nu() || u_upper.size() != nu()) {
    detail::dimension_mismatch("control bounds", u_lower.size(), u_upper.size(), nu(), nu());
  }
  for (std::size_t i = 0; i < nu(); ++i) {
    if (!(u_lower[i] <= u_upper[i])) throw std::invalid_argument("control bounds are inverted");
  }
}

Vec CostDefaults::diagonal() const {
  Vec d(kStateDim + kControlDim);
  for (int i = 0; i < 3; ++i) {
    d[i] = position;
    d[3 + i] = attitude;
    d[6 + i] = velocity;
    d[9 + i] = rate;
    d[13 + i] = torque;
  }
  d[12] = thrust;
  return d;
}

MpcProblem attitude_problem(std::shared_ptr<const DynamicsModel> model, const MpcSettings& s,
                            const Vec& x_init, double thrust_ref, const Vec3& attitude_ref,
                            const Vector<Var>* q, const Vector<Var>* p) {
  if (x_init.size() != kStateDim) detail::dimension_mismatch("x_init", x_init.size(), 1, kStateDim, 1);
  Vec x_ref(kStateDim);
  for (int i = 0; i < 3; ++i) {
    x_ref[i] = x_init[i];
    x_ref[3 + i] = attitude_ref[i];
  }
  const Vec u_ref{thrust_ref, 0.0, 0.0, 0.0};
  const Vector<Var> qd = q ? *q : cast<Var>(s.weights.diagonal());
  const Vector<Var> pd = p ? *p : Vector<Var>(kStateDim + kControlDim, Var(0.0));
  return MpcProblem::tracking(std::move(model), s.horizon, qd, pd, x_ref, u_ref, s.limits.lower(),
                              s.limits.upper());
}

double trajectory_cost(const MpcProblem& prob, const std::vector<Vec>& x, const std::vector<Vec>& u) {
  const CostValues c = cost_values(prob);
  double s = 0.0;
  for (int k = 0; k + 1 < prob.horizon; ++k) s += cost_of(c, stage_diff(prob, k, x[k], &u[k]));
  return s + cost_of(c, stage_diff(prob, prob.horizon - 1, x[prob.horizon - 1], nullptr));
}

// ---------------------------------------------------------------------------
// Solver.

MpcSolution ilqr_solve(const MpcProblem& prob, const Vec& x_init, const SolverOptions& opt,
                       const std::vector<Vec>* warm_start) {
  prob.validate();
  if (x_init.size() != prob.nx()) detail::dimension_mismatch("x_init", x_init.size(), 1, prob.nx(), 1);
  if (!finite(x_init)) throw std::invalid_argument("x_init must be finite");
  const CostValues c = cost_values(prob);
  const int n = prob.horizon;

  std::vector<Vec> u0;
  if (warm_start && warm_start->size() == static_cast<std::size_t>(n - 1)) {
    u0 = *warm_start;
  } else {
    u0 = prob.u_ref;
  }
  auto initial = rollout(prob, c, x_init, {}, u0, nullptr, 0.0);
  if (!initial && warm_start) initial = rollout(prob, c, x_init, {}, prob.u_ref, nullptr, 0.0);
  if (!initial) throw SolverError("initial rollout diverged");

  MpcSolution sol;
  std::vector<Vec> x = std::move(initial->x), u = std::move(initial->u);
  double cost = initial->cost;
  double reg = opt.initial_regularization;
  std::optional<BackwardPass> last_bp;

  for (int it = 1; it <= opt.max_iterations; ++it) {
    sol.iterations = it;
    const Linearized lin = linearize_trajectory(prob, x, u);
    std::optional<BackwardPass> bp;
    while (!(bp = backward_pass(prob, c, x, u, lin, reg, nullptr))) {
      reg *= 10.0;
      if (reg > opt.max_regularization) throw SolverError("backward pass failed: regularization exhausted");
    }
    double max_k = 0.0;
    for (const Vec& kk : bp->feedforward) max_k = std::max(max_k, inf_norm(kk));

    bool accepted = false;
    double alpha = 1.0;
    for (int ls = 0; ls < opt.line_search_steps; ++ls, alpha *= 0.5) {
      auto trial = rollout(prob, c, x_init, x, u, &*bp, alpha);
      if (!trial) continue;
      const double expected = alpha * bp->expected_linear;
      const bool armijo = expected < 0.0 ? trial->cost - cost <= opt.armijo * expected
                                         : trial->cost <= cost;
      if (!armijo) continue;
      double du = 0.0;
      for (int k = 0; k + 1 < n; ++k) du = std::max(du, inf_norm(trial->u[k] - u[k]));
      x = std::move(trial->x);
      u = std::move(trial->u);
      cost = trial->cost;
      reg = std::max(reg * 0.5, opt.min_regularization);
      sol.trace.push_back({it, cost, du, reg, alpha});
      accepted = true;
      if (du < opt.tolerance) sol.converged = true;
      break;
    }
    if (!accepted) {
      sol.trace.push_back({it, cost, 0.0, reg, 0.0});
      if (max_k < opt.tolerance) {
        sol.converged = true;
      } else {
        reg *= 10.0;
        if (reg > opt.max_regularization) throw SolverError("line search failed: regularization exhausted");
      }
    }
    if (sol.converged) break;
  }

  // Gains and active set at the returned trajectory.
  const Linearized lin = linearize_trajectory(prob, x, u);
  double final_reg = opt.min_regularization;
  std::optional<BackwardPass> bp;
  while (!(bp = backward_pass(prob, c, x, u, lin, final_reg, nullptr))) {
    final_reg *= 10.0;
    if (final_reg > opt.max_regularization) throw SolverError("final backward pass failed");
  }
  sol.x = std::move(x);
  sol.u = std::move(u);
  sol.cost = cost;
  sol.feedback = std::move(bp->feedback);
  sol.feedforward = std::move(bp->feedforward);
  sol.active = std::move(bp->active);
  return sol;
}

void write_trace_csv(const std::string& path, const std::vector<SolverTraceRow>& trace) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f << "iteration,cost,du,regularization,alpha\n" << std::setprecision(17);
  for (const auto& r : trace) {
    f << r.iteration << ',' << r.cost << ',' << r.du << ',' << r.regularization << ',' << r.alpha
      << '\n';
  }
}

Vec MpcController::step(const MpcProblem& prob, const Vec& x_init) {
  last_ = ilqr_solve(prob, x_init, opt_, warm_.empty() ? nullptr : &warm_);
  warm_.assign(last_.u.begin() + 1, last_.u.end());
  warm_.push_back(last_.u.back());
  return last_.u.front();
}

ControlInput MpcController::step(const MpcProblem& prob, const VehicleState& x_init) {
  const Vec u = step(prob, x_init.to_vec());
  return {u[0], {u[1], u[2], u[3]}};
}

// ---------------------------------------------------------------------------
// Fixed-point gradient.

std::size_t trajectory_size(const MpcProblem& prob) {
  return prob.horizon * prob.nx() + (prob.horizon - 1) * prob.nu();
}
std::size_t state_offset(const MpcProblem& prob, int k) { return k * (prob.nx() + prob.nu()); }
std::size_t control_offset(const MpcProblem& prob, int k) { return state_offset(prob, k) + prob.nx(); }

Vec flatten(const MpcProblem& prob, const MpcSolution& sol) {
  Vec mu(trajectory_size(prob));
  for (int k = 0; k < prob.horizon; ++k) {
    for (std::size_t i = 0; i < prob.nx(); ++i) mu[state_offset(prob, k) + i] = sol.x[k][i];
    if (k + 1 < prob.horizon)
      for (std::size_t i = 0; i < prob.nu(); ++i) mu[control_offset(prob, k) + i] = sol.u[k][i];
  }
  return mu;
}

std::vector<Var> fixed_point_trajectory(const MpcProblem& prob, const MpcSolution& sol,
                                        const FixedPointOptions& opt) {
  if (!sol.converged) throw SolverError("fixed-point gradient requires a converged solution");
  const int n = prob.horizon;
  const std::size_t nx = prob.nx(), nu = prob.nu();
  if (sol.x.size() != static_cast<std::size_t>(n) || sol.u.size() != static_cast<std::size_t>(n - 1)) {
    detail::dimension_mismatch("solution", sol.x.size(), sol.u.size(), n, n - 1);
  }
  const CostValues c = cost_values(prob);
  const Linearized lin = linearize_trajectory(prob, sol.x, sol.u);

  // Constant matrices from a double backward pass at the solution. The
  // curvature terms need the costates, which come from a first pass.
  std::optional<std::vector<Mat>> curvature;
  if (opt.second_order) {
    // Costates of the dynamics constraints: lambda_k = l_x + A' lambda_{k+1}.
    std::vector<Vec> costate(n);
    const Vec dn = stage_diff(prob, n - 1, sol.x[n - 1], nullptr);
    costate[n - 1] = Vec(nx);
    for (std::size_t i = 0; i < nx; ++i) costate[n - 1][i] = 2.0 * c.q[i] * dn[i] + c.p[i];
    for (int k = n - 2; k >= 0; --k) {
      const Vec d = stage_diff(prob, k, sol.x[k], &sol.u[k]);
      Vec l = mat_t_vec(lin.a[k], costate[k + 1]);
      for (std::size_t i = 0; i < nx; ++i) l[i] += 2.0 * c.q[i] * d[i] + c.p[i];
      costate[k] = l;
    }
    curvature.emplace();
    for (int k = 0; k + 1 < n; ++k) {
      curvature->push_back(prob.model->weighted_hessian(sol.x[k], sol.u[k], costate[k + 1]));
    }
  }
  auto bp = backward_pass(prob, c, sol.x, sol.u, lin, 0.0, curvature ? &*curvature : nullptr);
  if (!bp) throw SolverError("fixed-point backward pass is not positive definite");

  // Var pass. Residuals carry the parameters; matrices are constants.
  std::vector<Vector<Var>> next(n - 1);
  std::vector<Matrix<Var>> a_var(n - 1), b_var(n - 1);
  for (int k = 0; k + 1 < n; ++k) {
    auto r = prob.model->step_on_tape(sol.x[k], sol.u[k]);
    next[k] = std::move(r.next);
    a_var[k] = std::move(r.a);
    b_var[k] = std::move(r.b);
  }
  auto grad_l = [&](std::size_t i, double d) { return 2.0 * prob.q[i] * d + prob.p[i]; };

  std::vector<Var> vx(nx);
  {
    const Vec dn = stage_diff(prob, n - 1, sol.x[n - 1], nullptr);
    for (std::size_t i = 0; i < nx; ++i) vx[i] = grad_l(i, dn[i]);
  }
  std::vector<std::vector<Var>> kff(n - 1), defect(n - 1);
  for (int k = n - 2; k >= 0; --k) {
    std::vector<Var> ck(nx);
    for (std::size_t i = 0; i < nx; ++i) ck[i] = next[k][i] - sol.x[k + 1][i];
    const std::vector<Var> gp = add(vx, mat_vec(bp->vxx[k + 1], ck));
    const Vec d = stage_diff(prob, k, sol.x[k], &sol.u[k]);
    std::vector<Var> qx(nx), qu(nu);
    for (std::size_t i = 0; i < nx; ++i) qx[i] = grad_l(i, d[i]) + column_dot(a_var[k], i, gp);
    for (std::size_t i = 0; i < nu; ++i) qu[i] = grad_l(nx + i, d[nx + i]) + column_dot(b_var[k], i, gp);
    std::vector<Var> kk = mat_vec(bp->quu_free_inverse[k], qu);
    for (Var& v : kk) v = -v;
    vx = add(qx, mat_t_vec(bp->qux[k], kk));
    kff[k] = std::move(kk);
    defect[k] = std::move(ck);
  }

  std::vector<Var> mu(trajectory_size(prob));
  std::vector<Var> dx(nx, Var(0.0));
  for (int k = 0; k < n; ++k) {
    for (std::size_t i = 0; i < nx; ++i) mu[state_offset(prob, k) + i] = sol.x[k][i] + dx[i];
    if (k + 1 == n) break;
    const std::vector<Var> du = add(kff[k], mat_vec(bp->feedback[k], dx));
    for (std::size_t i = 0; i < nu; ++i) mu[control_offset(prob, k) + i] = sol.u[k][i] + du[i];
    dx = add(add(mat_vec(lin.a[k], dx), mat_vec(lin.b[k], du)), defect[k]);
  }
  return mu;
}

Gradient backward_fixed_point(const MpcProblem& prob, const MpcSolution& sol, const Vec& dloss_dmu,
                              const FixedPointOptions& opt) {
  if (dloss_dmu.size() != trajectory_size(prob)) {
    detail::dimension_mismatch("dloss/dmu", dloss_dmu.size(), 1, trajectory_size(prob), 1);
  }
  const std::vector<Var> mu = fixed_point_trajectory(prob, sol, opt);
  std::vector<Var> in;
  std::vector<double> partials;
  double value = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    if (dloss_dmu[i] == 0.0) continue;
    value += dloss_dmu[i] * mu[i].value();
    in.push_back(mu[i]);
    partials.push_back(dloss_dmu[i]);
  }
  const Var s = tape_record(OpKind::kCustom, value, in, partials);
  if (s.is_constant()) return Gradient();
  return s.tape()->backward(s);
}

ActiveBounds active_bounds(const MpcProblem& prob, const MpcSolution& sol) {
  ActiveBounds out(sol.active.size(), std::vector<int>(prob.nu(), 0));
  for (std::size_t k = 0; k < sol.active.size(); ++k) {
    for (std::size_t j = 0; j < prob.nu(); ++j) {
      if (!sol.active[k][j]) continue;
      out[k][j] = std::abs(sol.u[k][j] - prob.u_lower[j]) <= std::abs(sol.u[k][j] - prob.u_upper[j]) ? -1 : 1;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dense KKT oracle for linear-quadratic problems.

namespace {

const LinearModel& require_linear(const MpcProblem& prob) {
  const auto* lin = dynamic_cast<const LinearModel*>(prob.model.get());
  if (!lin) throw std::invalid_argument("KKT oracle requires a LinearModel problem");
  return *lin;
}

struct ActiveRow {
  int k;
  std::size_t j;
  double bound;
};

std::vector<ActiveRow> active_rows(const MpcProblem& prob, const ActiveBounds* bounds) {
  std::vector<ActiveRow> rows;
  if (!bounds) return rows;
  for (int k = 0; k + 1 < prob.horizon; ++k) {
    for (std::size_t j = 0; j < prob.nu(); ++j) {
      const int side = (*bounds)[k][j];
      if (side == 0) continue;
      rows.push_back({k, j, side < 0 ? prob.u_lower[j] : prob.u_upper[j]});
    }
  }
  return rows;
}

// Stationarity and constraint residuals r(mu, lambda; theta) of the KKT system,
// generic over the scalar so the oracle can differentiate them.
template <class S>
std::vector<S> kkt_residual(const MpcProblem& prob, const Vec& x_init, const Vec& mu, const Vec& lambda,
                            const std::vector<ActiveRow>& rows, const Matrix<S>& a, const Matrix<S>& b,
                            const Vector<S>& q, const Vector<S>& p) {
  const int n = prob.horizon;
  const std::size_t nx = prob.nx(), nu = prob.nu();
  const std::size_t nmu = trajectory_size(prob);
  std::vector<S> r(nmu + lambda.size(), S(0.0));
  auto lam_dyn = [&](int k, std::size_t i) { return lambda[nx + k * nx + i]; };
  // Stationarity.
  for (int k = 0; k < n; ++k) {
    const std::size_t so = state_offset(prob, k);
    for (std::size_t i = 0; i < nx; ++i) {
      S g = 2.0 * q[i] * (mu[so + i] - prob.x_ref[k][i]) + p[i];
      if (k == 0) g = g + lambda[i];
      else g = g + lam_dyn(k - 1, i);
      if (k + 1 < n) {
        for (std::size_t j = 0; j < nx; ++j) g = g - a(j, i) * lam_dyn(k, j);
      }
      r[so + i] = g;
    }
    if (k + 1 == n) continue;
    const std::size_t uo = control_offset(prob, k);
    for (std::size_t i = 0; i < nu; ++i) {
      S g = 2.0 * q[nx + i] * (mu[uo + i] - prob.u_ref[k][i]) + p[nx + i];
      for (std::size_t j = 0; j < nx; ++j) g = g - b(j, i) * lam_dyn(k, j);
      r[uo + i] = g;
    }
  }
  for (std::size_t m = 0; m < rows.size(); ++m) {
    r[control_offset(prob, rows[m].k) + rows[m].j] =
        r[control_offset(prob, rows[m].k) + rows[m].j] + lambda[nx + (n - 1) * nx + m];
  }
  // Constraints.
  std::size_t row = nmu;
  for (std::size_t i = 0; i < nx; ++i) r[row++] = S(mu[i] - x_init[i]);
  for (int k = 0; k + 1 < n; ++k) {
    const std::size_t so = state_offset(prob, k), uo = control_offset(prob, k);
    const std::size_t so1 = state_offset(prob, k + 1);
    for (std::size_t i = 0; i < nx; ++i) {
      S g = S(mu[so1 + i]);
      for (std::size_t j = 0; j < nx; ++j) g = g - a(i, j) * mu[so + j];
      for (std::size_t j = 0; j < nu; ++j) g = g - b(i, j) * mu[uo + j];
      r[row++] = g;
    }
  }
  for (const ActiveRow& ar : rows) r[row++] = S(mu[control_offset(prob, ar.k) + ar.j] - ar.bound);
  return r;
}

}  // namespace

LqKktSolution solve_lq_kkt(const MpcProblem& prob, const Vec& x_init, const ActiveBounds* active) {
  prob.validate();
  const LinearModel& model = require_linear(prob);
  const int n = prob.horizon;
  const std::size_t nx = prob.nx();
  const std::size_t nmu = trajectory_size(prob);
  const std::vector<ActiveRow> rows = active_rows(prob, active);
  const std::size_t nl = nx + (n - 1) * nx + rows.size();
  const Mat a = values(model.a()), b = values(model.b());
  const CostValues c = cost_values(prob);

  // r is affine in (mu, lambda): r = K z + r0. Build K and r0 by evaluation.
  const Vec zero_mu(nmu), zero_l(nl);
  const std::vector<double> r0 = kkt_residual<double>(prob, x_init, zero_mu, zero_l, rows, a, b, c.q, c.p);
  Mat k(nmu + nl, nmu + nl);
  for (std::size_t col = 0; col < nmu + nl; ++col) {
    Vec mu(nmu), lam(nl);
    if (col < nmu) mu[col] = 1.0; else lam[col - nmu] = 1.0;
    const std::vector<double> r = kkt_residual<double>(prob, x_init, mu, lam, rows, a, b, c.q, c.p);
    for (std::size_t i = 0; i < r.size(); ++i) k(i, col) = r[i] - r0[i];
  }
  Vec rhs(nmu + nl);
  for (std::size_t i = 0; i < rhs.size(); ++i) rhs[i] = -r0[i];
  const Vec z = solve_linear(k, rhs);
  LqKktSolution out;
  out.mu = z.segment(0, nmu);
  out.lambda = z.segment(nmu, nl);
  out.kkt = std::move(k);
  return out;
}

Gradient kkt_gradient(const MpcProblem& prob, const Vec& x_init, const LqKktSolution& sol,
                      const Vec& dloss_dmu, const ActiveBounds* active) {
  const LinearModel& model = require_linear(prob);
  const std::size_t nmu = trajectory_size(prob);
  if (dloss_dmu.size() != nmu) detail::dimension_mismatch("dloss/dmu", dloss_dmu.size(), 1, nmu, 1);
  const std::vector<ActiveRow> rows = active_rows(prob, active);
  // K is symmetric, so K' y = [dloss/dmu; 0] is a plain solve.
  Vec rhs(sol.kkt.rows());
  for (std::size_t i = 0; i < nmu; ++i) rhs[i] = dloss_dmu[i];
  const Vec y = solve_linear(sol.kkt.transpose(), rhs);
  const std::vector<Var> r =
      kkt_residual<Var>(prob, x_init, sol.mu, sol.lambda, rows, model.a(), model.b(), prob.q, prob.p);
  std::vector<Var> in;
  std::vector<double> partials;
  double value = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (y[i] == 0.0) continue;
    value -= y[i] * r[i].value();
    in.push_back(r[i]);
    partials.push_back(-y[i]);
  }
  const Var s = tape_record(OpKind::kCustom, value, in, partials);
  if (s.is_constant()) return Gradient();
  return s.tape()->backward(s);
}

}  // namespace impc
