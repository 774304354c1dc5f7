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

#pragma once

// Box-constrained iLQR model predictive control and its fixed-point
// gradient with respect to model and cost parameters.
//
// Trajectory convention: N states x_0..x_{N-1} with x_0 = x_init and N-1
// controls u_0..u_{N-2}. Cost
//   sum_k d_k' Q d_k + p' d_k  (d_k = [x_k - xr_k; u_k - ur_k], k < N-1)
//   + e' Q_x e + p_x' e         (e = x_{N-1} - xr_{N-1})
// with diagonal Q.

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "impc/autodiff.hpp"
#include "impc/dynamics.hpp"
#include "impc/matrix.hpp"

namespace impc {

struct StepWithJacobianDyn {
  Vector<Var> next;
  Matrix<Var> a;
  Matrix<Var> b;
};

// A discrete-time model whose parameters may live on a tape.
class DynamicsModel {
 public:
  virtual ~DynamicsModel() = default;
  virtual std::size_t state_dim() const = 0;
  virtual std::size_t control_dim() const = 0;

  virtual Vec step(const Vec& x, const Vec& u) const = 0;
  // Next state plus A = df/dx and B = df/du.
  virtual Vec step_with_jacobian(const Vec& x, const Vec& u, Mat& a, Mat& b) const = 0;
  // Same quantities with the learnable parameters as tape Vars.
  virtual StepWithJacobianDyn step_on_tape(const Vec& x, const Vec& u) const = 0;
  // Hessian of w' f(x, u) with respect to z = [x; u]. The default
  // differentiates step_with_jacobian by central differences.
  virtual Mat weighted_hessian(const Vec& x, const Vec& u, const Vec& w) const;
};

// Quadrotor RK4 step at the MPC rate. Mass and inertia may be Vars.
class QuadrotorModel final : public DynamicsModel {
 public:
  QuadrotorModel(const VehicleParams<Var>& params, double dt);
  explicit QuadrotorModel(const VehicleParams<double>& params, double dt);

  std::size_t state_dim() const override { return kStateDim; }
  std::size_t control_dim() const override { return kControlDim; }
  Vec step(const Vec& x, const Vec& u) const override;
  Vec step_with_jacobian(const Vec& x, const Vec& u, Mat& a, Mat& b) const override;
  StepWithJacobianDyn step_on_tape(const Vec& x, const Vec& u) const override;

  const VehicleParams<double>& values() const { return values_; }
  double dt() const { return dt_; }

 private:
  VehicleParams<Var> params_;
  VehicleParams<double> values_;
  double dt_;
};

// x' = A x + B u with optionally taped entries.
class LinearModel : public DynamicsModel {
 public:
  LinearModel(Matrix<Var> a, Matrix<Var> b);
  LinearModel(const Mat& a, const Mat& b) : LinearModel(cast<Var>(a), cast<Var>(b)) {}

  std::size_t state_dim() const override { return a_.rows(); }
  std::size_t control_dim() const override { return b_.cols(); }
  Vec step(const Vec& x, const Vec& u) const override;
  Vec step_with_jacobian(const Vec& x, const Vec& u, Mat& a, Mat& b) const override;
  StepWithJacobianDyn step_on_tape(const Vec& x, const Vec& u) const override;
  Mat weighted_hessian(const Vec& x, const Vec& u, const Vec& w) const override;

  const Matrix<Var>& a() const { return a_; }
  const Matrix<Var>& b() const { return b_; }

 private:
  Matrix<Var> a_, b_;
  Mat a_val_, b_val_;
};

// Axis-decoupled double integrator (position, velocity per axis; force per
// axis) with unit mass.
LinearModel double_integrator(std::size_t axes, double dt);

struct MpcProblem {
  std::shared_ptr<const DynamicsModel> model;
  int horizon = 10;        // N
  Vector<Var> q;           // diagonal of Q over [x; u]
  Vector<Var> p;           // linear weight over [x; u]
  std::vector<Vec> x_ref;  // N entries
  std::vector<Vec> u_ref;  // N-1 entries
  Vec u_lower;
  Vec u_upper;

  // Hover (or commanded attitude) tracking with the same reference at every
  // step. Throws DimensionError on inconsistent sizes.
  static MpcProblem tracking(std::shared_ptr<const DynamicsModel> model, int horizon,
                             const Vector<Var>& q, const Vector<Var>& p, const Vec& x_ref,
                             const Vec& u_ref, const Vec& u_lower, const Vec& u_upper);

  std::size_t nx() const { return model->state_dim(); }
  std::size_t nu() const { return model->control_dim(); }
  // Throws DimensionError or std::invalid_argument describing the violation.
  void validate() const;
};

// Default diagonal weights for the quadrotor: attitude, rates, thrust and
// torque deviations. Position and velocity are unweighted.
struct CostDefaults {
  double position = 0.0;
  double attitude = 10.0;
  double velocity = 0.0;
  double rate = 0.1;
  double thrust = 0.1;
  double torque = 1.0;

  Vec diagonal() const;
};

struct SolverOptions {
  int max_iterations = 50;
  double tolerance = 1e-6;  // on the accepted control update, inf-norm
  double initial_regularization = 1e-6;
  double min_regularization = 1e-9;
  double max_regularization = 1e10;
  double armijo = 1e-4;
  int line_search_steps = 11;  // alpha = 1 .. 2^-10
};

struct SolverTraceRow {
  int iteration = 0;
  double cost = 0.0;
  double du = 0.0;
  double regularization = 0.0;
  double alpha = 0.0;
};

struct MpcSolution {
  std::vector<Vec> x;
  std::vector<Vec> u;
  double cost = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<Mat> feedback;           // K_k
  std::vector<Vec> feedforward;        // k_k
  std::vector<std::vector<bool>> active;  // clamped control components
  std::vector<SolverTraceRow> trace;
};

struct MpcSettings {
  int horizon = 10;
  double dt = 0.02;
  CostDefaults weights;
  ActuatorLimits limits;
  SolverOptions solver;
};

// Attitude regulation about a hover at `attitude_ref` with thrust reference
// `thrust_ref`. The position reference holds x_init's position; velocities,
// rates and torques are referenced to zero.
MpcProblem attitude_problem(std::shared_ptr<const DynamicsModel> model, const MpcSettings& s,
                            const Vec& x_init, double thrust_ref, const Vec3& attitude_ref = {},
                            const Vector<Var>* q = nullptr, const Vector<Var>* p = nullptr);

double trajectory_cost(const MpcProblem& prob, const std::vector<Vec>& x, const std::vector<Vec>& u);

MpcSolution ilqr_solve(const MpcProblem& prob, const Vec& x_init, const SolverOptions& opt = {},
                       const std::vector<Vec>* warm_start = nullptr);

void write_trace_csv(const std::string& path, const std::vector<SolverTraceRow>& trace);

// Receding-horizon wrapper: solves, returns the first control, and warm
// starts the next solve from the shifted previous controls.
class MpcController {
 public:
  explicit MpcController(SolverOptions opt = {}) : opt_(opt) {}
  Vec step(const MpcProblem& prob, const Vec& x_init);
  ControlInput step(const MpcProblem& prob, const VehicleState& x_init);
  const MpcSolution& last_solution() const { return last_; }
  void reset() { warm_.clear(); }

 private:
  SolverOptions opt_;
  std::vector<Vec> warm_;
  MpcSolution last_;
};

// Flattened trajectory layout used for loss gradients and the KKT oracle:
// [x_0, u_0, x_1, u_1, ..., u_{N-2}, x_{N-1}].
std::size_t trajectory_size(const MpcProblem& prob);
std::size_t state_offset(const MpcProblem& prob, int k);
std::size_t control_offset(const MpcProblem& prob, int k);
Vec flatten(const MpcProblem& prob, const MpcSolution& sol);

struct FixedPointOptions {
  // Include the dynamics curvature weighted by the costates so the extra
  // iteration is a full Newton step on the optimality conditions. Without
  // it the step is Gauss-Newton.
  bool second_order = true;
};

// Runs one LQR backward + forward pass at the converged solution with the
// problem's Vars live, then seeds sum(dloss_dmu .* mu_new). Throws
// SolverError when the solution has not converged.
Gradient backward_fixed_point(const MpcProblem& prob, const MpcSolution& sol, const Vec& dloss_dmu,
                              const FixedPointOptions& opt = {});

// The same one-step trajectory as Vars, for callers that continue building
// on the tape (the trainer chains it into its upper loss).
std::vector<Var> fixed_point_trajectory(const MpcProblem& prob, const MpcSolution& sol,
                                        const FixedPointOptions& opt = {});

// Per control component: -1 held at the lower bound, +1 at the upper, 0 free.
using ActiveBounds = std::vector<std::vector<int>>;
ActiveBounds active_bounds(const MpcProblem& prob, const MpcSolution& sol);

// Dense solution of a linear-quadratic problem by its KKT system, with the
// given active bounds held as equalities. Only LinearModel problems.
struct LqKktSolution {
  Vec mu;
  Vec lambda;  // [x_0 = x_init (nx); dynamics (N-1)*nx; active bounds]
  Mat kkt;
};
LqKktSolution solve_lq_kkt(const MpcProblem& prob, const Vec& x_init,
                           const ActiveBounds* active = nullptr);

// Implicit gradient of loss through the KKT conditions of an LQ problem.
Gradient kkt_gradient(const MpcProblem& prob, const Vec& x_init, const LqKktSolution& sol,
                      const Vec& dloss_dmu,
                      const ActiveBounds* active = nullptr);

}  // namespace impc
