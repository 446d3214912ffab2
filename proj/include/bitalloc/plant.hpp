#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <functional>
#include <utility>
#include <vector>

#include "bitalloc/rng.hpp"

namespace bitalloc {

// Inverted pendulum on a cart, linearized about the upright equilibrium.
struct PlantParams {
  double cart_mass = 0.5;      // M, kg
  double pendulum_mass = 0.2;  // m, kg
  double length_to_com = 0.3;  // l, m (pivot to bar centre of mass)
  double friction = 0.1;       // b, N/m/s
  double gravity = 9.8;        // m/s^2

  // I = m l^2 / 3, recomputed so it can never go stale.
  double inertia() const {
    return pendulum_mass * length_to_com * length_to_com / 3.0;
  }
  // c = (M + m) I + m M l^2
  double denom() const {
    return (cart_mass + pendulum_mass) * inertia() +
           pendulum_mass * cart_mass * length_to_com * length_to_com;
  }
};

// State ordering [r, theta, v = dr/dt, q = dtheta/dt].
struct PlantState {
  double r = 0.0;
  double theta = 0.0;
  double v = 0.0;
  double q = 0.0;

  Eigen::Vector4d vec() const { return {r, theta, v, q}; }
  static PlantState from(const Eigen::Vector4d& x) { return {x[0], x[1], x[2], x[3]}; }
  bool finite() const;
};

// Continuous-time dynamics dx/dt = A x + B f about the upright equilibrium.
std::pair<Eigen::Matrix4d, Eigen::Vector4d> linearized_matrices(const PlantParams& p);

struct LqrDesign {
  Eigen::RowVector4d gain = Eigen::RowVector4d::Zero();  // K
  double precompensation = 0.0;                          // reference scaling
  Eigen::Matrix4d state_weight = Eigen::Matrix4d::Zero();
  double effort_weight = 0.1;
  double riccati_residual = 0.0;

  // u = precompensation * reference - K x
  double force(const PlantState& s, double reference) const {
    return precompensation * reference - gain.dot(s.vec());
  }
};

// Continuous algebraic Riccati equation A'P + PA - P B r^-1 B' P + Q = 0,
// solved by Newton-Kleinman iteration from a Bass-style stabilizing gain.
Eigen::MatrixXd solve_care(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                           const Eigen::MatrixXd& Q, double effort_weight);

LqrDesign solve_lqr(const Eigen::Matrix4d& A, const Eigen::Vector4d& B,
                    const Eigen::Matrix4d& Q, double effort_weight);

// Default weights: Q = diag(5000, 0, 100, 0), R = 0.1.
LqrDesign design_controller(const PlantParams& p);

// One RK4 step of the linear dynamics with the force held constant.
PlantState step(const PlantParams& p, const PlantState& s, double force, double dt);
Eigen::Vector4d rk4_step(const Eigen::Matrix4d& A, const Eigen::Vector4d& B,
                         const Eigen::Vector4d& x, double force, double dt);

struct Trajectory {
  std::vector<PlantState> states;  // length steps + 1, starting at s0
  std::vector<double> forces;      // same length; forces.back() is not applied
  double dt = 0.01;

  double duration() const { return dt * static_cast<double>(states.size() - 1); }
};

// Closed-loop simulation with zero-order-hold control sampled every dt.
Trajectory rollout(const PlantParams& p,
                   const std::function<double(const PlantState&)>& controller,
                   const PlantState& s0, double duration, double dt);

void export_trajectory_csv(const Trajectory& traj, const std::filesystem::path& path);

// Episode draw used across dataset generation and evaluation.
struct ScenarioRanges {
  double mass_lo = 0.1, mass_hi = 2.0;       // kg
  double length_lo = 0.2, length_hi = 0.5;   // m
  double theta0_lo = -0.1, theta0_hi = 0.1;  // rad
};

struct Scenario {
  double pendulum_mass = 0.0;
  double length_to_com = 0.0;
  double theta0 = 0.0;
};

Scenario draw_scenario(Rng& rng, const ScenarioRanges& ranges = {});

inline constexpr double kReferencePosition = 0.2;  // m
inline constexpr double kControlDt = 0.01;         // s

}  // namespace bitalloc
