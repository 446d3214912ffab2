#include "bitalloc/plant.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "bitalloc/io.hpp"

namespace bitalloc {

bool PlantState::finite() const {
  return std::isfinite(r) && std::isfinite(theta) && std::isfinite(v) &&
         std::isfinite(q);
}

std::pair<Eigen::Matrix4d, Eigen::Vector4d> linearized_matrices(const PlantParams& p) {
  if (p.cart_mass <= 0.0 || p.pendulum_mass <= 0.0 || p.length_to_com <= 0.0)
    throw std::invalid_argument("masses and length must be positive");
  const double m = p.pendulum_mass;
  const double M = p.cart_mass;
  const double l = p.length_to_com;
  const double b = p.friction;
  const double g = p.gravity;
  const double I = p.inertia();
  const double c = p.denom();

  Eigen::Matrix4d A = Eigen::Matrix4d::Zero();
  A(0, 2) = 1.0;
  A(1, 3) = 1.0;
  A(2, 1) = m * m * g * l * l / c;
  A(2, 2) = -b * (I + m * l * l) / c;
  A(3, 1) = m * g * l * (M + m) / c;
  A(3, 2) = -m * l * b / c;

  Eigen::Vector4d B;
  B << 0.0, 0.0, (I + m * l * l) / c, m * l / c;
  return {A, B};
}

namespace {

// Lyapunov equation F'P + PF = -W via Kronecker vectorization; fine for 4x4.
Eigen::MatrixXd solve_lyapunov(const Eigen::MatrixXd& F, const Eigen::MatrixXd& W) {
  const Eigen::Index n = F.rows();
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n * n, n * n);
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
  // vec(F'P) = (I kron F') vec(P); vec(P F) = (F' kron I) vec(P)
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index k = 0; k < n; ++k) {
        M(i * n + k, i * n + j) += F(j, k);  // I kron F'
        M(j * n + k, i * n + k) += F(i, j);  // F' kron I
      }
  Eigen::VectorXd rhs(n * n);
  for (Eigen::Index c = 0; c < n; ++c) rhs.segment(c * n, n) = -W.col(c);
  const Eigen::VectorXd vp = M.fullPivLu().solve(rhs);
  Eigen::MatrixXd P(n, n);
  for (Eigen::Index c = 0; c < n; ++c) P.col(c) = vp.segment(c * n, n);
  return 0.5 * (P + P.transpose());
}

bool is_hurwitz(const Eigen::MatrixXd& A) {
  const Eigen::EigenSolver<Eigen::MatrixXd> es(A);
  return (es.eigenvalues().real().array() < 0.0).all();
}

double care_residual_norm(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                          const Eigen::MatrixXd& Q, double r,
                          const Eigen::MatrixXd& P) {
  const Eigen::MatrixXd res =
      A.transpose() * P + P * A - P * B * (1.0 / r) * B.transpose() * P + Q;
  return res.norm();
}

}  // namespace

namespace {

// Stabilizing CARE solution from the stable invariant subspace of the
// Hamiltonian [[A, -B r^-1 B'], [-Q, -A']].
Eigen::MatrixXd care_from_hamiltonian(const Eigen::MatrixXd& A,
                                      const Eigen::MatrixXd& B,
                                      const Eigen::MatrixXd& Q, double r) {
  const Eigen::Index n = A.rows();
  Eigen::MatrixXd H(2 * n, 2 * n);
  H.topLeftCorner(n, n) = A;
  H.topRightCorner(n, n) = -B * (1.0 / r) * B.transpose();
  H.bottomLeftCorner(n, n) = -Q;
  H.bottomRightCorner(n, n) = -A.transpose();

  const Eigen::EigenSolver<Eigen::MatrixXd> es(H);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("riccati: hamiltonian eigendecomposition failed");
  std::vector<Eigen::Index> stable;
  for (Eigen::Index i = 0; i < 2 * n; ++i)
    if (es.eigenvalues()[i].real() < 0.0) stable.push_back(i);
  if (static_cast<Eigen::Index>(stable.size()) != n)
    throw std::runtime_error("riccati: no stable invariant subspace");

  Eigen::MatrixXcd x1(n, n), x2(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    x1.col(j) = es.eigenvectors().col(stable[static_cast<std::size_t>(j)]).head(n);
    x2.col(j) = es.eigenvectors().col(stable[static_cast<std::size_t>(j)]).tail(n);
  }
  const Eigen::MatrixXd P = (x2 * x1.fullPivLu().inverse()).real();
  return 0.5 * (P + P.transpose());
}

}  // namespace

Eigen::MatrixXd solve_care(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                           const Eigen::MatrixXd& Q, double effort_weight) {
  if (effort_weight <= 0.0) throw std::invalid_argument("effort weight must be > 0");

  // The subspace solution is exact up to eigensolver accuracy; a short
  // Newton-Kleinman pass then drives the residual to the numerical floor.
  Eigen::MatrixXd K =
      (1.0 / effort_weight) * B.transpose() * care_from_hamiltonian(A, B, Q, effort_weight);
  if (!is_hurwitz(A - B * K))
    throw std::runtime_error("riccati: stabilizing initialization failed");

  constexpr int kMaxIterations = 200;
  const double tolerance = 1e-12 * std::max(1.0, Q.norm());
  Eigen::MatrixXd P, best_p;
  double best_residual = std::numeric_limits<double>::infinity();
  int stalled = 0;
  for (int it = 0; it < kMaxIterations; ++it) {
    const Eigen::MatrixXd Acl = A - B * K;
    const Eigen::MatrixXd W = Q + K.transpose() * effort_weight * K;
    P = solve_lyapunov(Acl, W);
    K = (1.0 / effort_weight) * B.transpose() * P;
    const double residual = care_residual_norm(A, B, Q, effort_weight, P);
    if (residual < 0.9 * best_residual) {
      stalled = 0;
    } else if (++stalled >= 3) {
      break;  // at the numerical floor
    }
    if (residual < best_residual) {
      best_residual = residual;
      best_p = P;
    }
    if (residual < tolerance) return P;
  }
  if (best_residual < 1e-8) return best_p;
  std::ostringstream msg;
  msg << "riccati iteration did not converge; residual=" << best_residual;
  throw std::runtime_error(msg.str());
}

LqrDesign solve_lqr(const Eigen::Matrix4d& A, const Eigen::Vector4d& B,
                    const Eigen::Matrix4d& Q, double effort_weight) {
  const Eigen::MatrixXd P = solve_care(A, B, Q, effort_weight);
  LqrDesign design;
  design.gain = (1.0 / effort_weight) * B.transpose() * P;
  design.state_weight = Q;
  design.effort_weight = effort_weight;
  design.riccati_residual = care_residual_norm(A, B, Q, effort_weight, P);

  const Eigen::Matrix4d Acl = A - B * design.gain;
  if (!is_hurwitz(Acl)) throw std::runtime_error("lqr design not stabilizing");

  // Reference scaling for unit DC gain from reference to cart position.
  const Eigen::RowVector4d C{1.0, 0.0, 0.0, 0.0};
  const double dc = C.dot(Acl.fullPivLu().solve(B));
  if (dc == 0.0) throw std::runtime_error("lqr precompensation undefined");
  design.precompensation = -1.0 / dc;
  return design;
}

LqrDesign design_controller(const PlantParams& p) {
  const auto [A, B] = linearized_matrices(p);
  Eigen::Matrix4d Q = Eigen::Matrix4d::Zero();
  Q(0, 0) = 5000.0;
  Q(2, 2) = 100.0;
  return solve_lqr(A, B, Q, 0.1);
}

Eigen::Vector4d rk4_step(const Eigen::Matrix4d& A, const Eigen::Vector4d& B,
                         const Eigen::Vector4d& x, double force, double dt) {
  const Eigen::Vector4d bf = B * force;
  const Eigen::Vector4d k1 = A * x + bf;
  const Eigen::Vector4d k2 = A * (x + 0.5 * dt * k1) + bf;
  const Eigen::Vector4d k3 = A * (x + 0.5 * dt * k2) + bf;
  const Eigen::Vector4d k4 = A * (x + dt * k3) + bf;
  return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

PlantState step(const PlantParams& p, const PlantState& s, double force, double dt) {
  if (dt <= 0.0) throw std::invalid_argument("dt must be positive");
  const auto [A, B] = linearized_matrices(p);
  const PlantState out = PlantState::from(rk4_step(A, B, s.vec(), force, dt));
  if (!out.finite()) throw std::runtime_error("diverged");
  return out;
}

Trajectory rollout(const PlantParams& p,
                   const std::function<double(const PlantState&)>& controller,
                   const PlantState& s0, double duration, double dt) {
  if (dt <= 0.0) throw std::invalid_argument("dt must be positive");
  const auto n = static_cast<std::int64_t>(std::llround(duration / dt));
  if (n < 0 || std::abs(static_cast<double>(n) * dt - duration) > 1e-9)
    throw std::invalid_argument("duration must be an integer number of steps");

  const auto [A, B] = linearized_matrices(p);
  Trajectory traj;
  traj.dt = dt;
  traj.states.reserve(static_cast<std::size_t>(n) + 1);
  traj.forces.reserve(static_cast<std::size_t>(n) + 1);
  PlantState s = s0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double f = controller(s);
    traj.states.push_back(s);
    traj.forces.push_back(f);
    s = PlantState::from(rk4_step(A, B, s.vec(), f, dt));
    if (!s.finite()) throw std::runtime_error("diverged");
  }
  traj.states.push_back(s);
  traj.forces.push_back(controller(s));  // recorded, never applied
  return traj;
}

void export_trajectory_csv(const Trajectory& traj, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "t,r,theta,v,q,f\n";
  for (std::size_t i = 0; i < traj.states.size(); ++i) {
    const PlantState& s = traj.states[i];
    out << io::format_double(traj.dt * static_cast<double>(i)) << ','
        << io::format_double(s.r) << ',' << io::format_double(s.theta) << ','
        << io::format_double(s.v) << ',' << io::format_double(s.q) << ','
        << io::format_double(traj.forces[i]) << '\n';
  }
  io::write_file_atomic(path, out.str());
}

Scenario draw_scenario(Rng& rng, const ScenarioRanges& ranges) {
  Scenario s;
  s.pendulum_mass = rng.uniform(ranges.mass_lo, ranges.mass_hi);
  s.length_to_com = rng.uniform(ranges.length_lo, ranges.length_hi);
  s.theta0 = rng.uniform(ranges.theta0_lo, ranges.theta0_hi);
  return s;
}

}  // namespace bitalloc
