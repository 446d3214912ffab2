#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <filesystem>

#include "bitalloc/io.hpp"
#include "bitalloc/plant.hpp"
#include "bitalloc/rng.hpp"

using namespace bitalloc;

namespace {

bool hurwitz(const Eigen::Matrix4d& m) {
  const Eigen::EigenSolver<Eigen::Matrix4d> es(m);
  return (es.eigenvalues().real().array() < 0.0).all();
}

// Closed forms for the physical entries, used as the derivative oracle:
//   A32 = 3 m g / (4M + m)            A33 = -4 b / (4M + m)
//   A42 = 3 g (M + m) / (l (4M + m))  A43 = -3 b / (l (4M + m))
//   B3  = 4 / (4M + m)                B4  = 3 / (l (4M + m))
struct Entries {
  double a32, a33, a42, a43, b3, b4;
};

Entries entries_of(const PlantParams& p) {
  const auto [A, B] = linearized_matrices(p);
  return {A(2, 1), A(2, 2), A(3, 1), A(3, 2), B(2), B(3)};
}

}  // namespace

TEST_CASE("matrix shape matches the linearized equations") {
  PlantParams p;
  p.cart_mass = 0.5;
  p.pendulum_mass = 0.2;
  p.length_to_com = 0.3;
  const auto [A, B] = linearized_matrices(p);

  CHECK(A.row(0) == Eigen::RowVector4d(0, 0, 1, 0));
  CHECK(A.row(1) == Eigen::RowVector4d(0, 0, 0, 1));
  CHECK(A(2, 0) == 0.0);
  CHECK(A(3, 0) == 0.0);

  // I = 0.006, c = 0.0132 for these parameters.
  CHECK(p.inertia() == doctest::Approx(0.006).epsilon(1e-12));
  CHECK(p.denom() == doctest::Approx(0.0132).epsilon(1e-12));
  CHECK(B(2) == doctest::Approx(0.024 / 0.0132).epsilon(1e-12));
  CHECK(B(3) == doctest::Approx(0.06 / 0.0132).epsilon(1e-12));
  CHECK(A(2, 1) == doctest::Approx(0.2 * 0.2 * 9.8 * 0.09 / 0.0132).epsilon(1e-12));
  CHECK(A(3, 1) == doctest::Approx(0.2 * 9.8 * 0.3 * 0.7 / 0.0132).epsilon(1e-12));

  // Equilibrium: zero state and zero force stay put.
  const Eigen::Vector4d zero = Eigen::Vector4d::Zero();
  CHECK((A * zero + B * 0.0) == zero);
  const PlantState still = step(p, PlantState{}, 0.0, 0.01);
  CHECK(still.vec() == zero);
}

TEST_CASE("matrix entries match analytic mass/length sensitivities") {
  Rng rng(15);
  for (int draw = 0; draw < 10; ++draw) {
    PlantParams p;
    p.pendulum_mass = rng.uniform(0.1, 2.0);
    p.length_to_com = rng.uniform(0.2, 0.5);
    const double M = p.cart_mass, m = p.pendulum_mass, l = p.length_to_com;
    const double g = p.gravity, b = p.friction;
    const double den = 4.0 * M + m;

    struct Partial {
      double wrt_m, wrt_l;
    };
    const Partial dm_expected[] = {
        {12.0 * M * g / (den * den), 0.0},                                  // A32
        {4.0 * b / (den * den), 0.0},                                       // A33
        {9.0 * g * M / (l * den * den), -3.0 * g * (M + m) / (l * l * den)},  // A42
        {3.0 * b / (l * den * den), 3.0 * b / (l * l * den)},               // A43
        {-4.0 / (den * den), 0.0},                                          // B3
        {-3.0 / (l * den * den), -3.0 / (l * l * den)},                     // B4
    };

    const double h = 1e-6;
    PlantParams pm_hi = p, pm_lo = p, pl_hi = p, pl_lo = p;
    pm_hi.pendulum_mass += h;
    pm_lo.pendulum_mass -= h;
    pl_hi.length_to_com += h;
    pl_lo.length_to_com -= h;
    const Entries em_hi = entries_of(pm_hi), em_lo = entries_of(pm_lo);
    const Entries el_hi = entries_of(pl_hi), el_lo = entries_of(pl_lo);

    const double fd_m[] = {(em_hi.a32 - em_lo.a32) / (2 * h), (em_hi.a33 - em_lo.a33) / (2 * h),
                           (em_hi.a42 - em_lo.a42) / (2 * h), (em_hi.a43 - em_lo.a43) / (2 * h),
                           (em_hi.b3 - em_lo.b3) / (2 * h),   (em_hi.b4 - em_lo.b4) / (2 * h)};
    const double fd_l[] = {(el_hi.a32 - el_lo.a32) / (2 * h), (el_hi.a33 - el_lo.a33) / (2 * h),
                           (el_hi.a42 - el_lo.a42) / (2 * h), (el_hi.a43 - el_lo.a43) / (2 * h),
                           (el_hi.b3 - el_lo.b3) / (2 * h),   (el_hi.b4 - el_lo.b4) / (2 * h)};
    for (int i = 0; i < 6; ++i) {
      const double scale_m = std::max(1.0, std::abs(dm_expected[i].wrt_m));
      const double scale_l = std::max(1.0, std::abs(dm_expected[i].wrt_l));
      CHECK(std::abs(fd_m[i] - dm_expected[i].wrt_m) / scale_m < 1e-6);
      CHECK(std::abs(fd_l[i] - dm_expected[i].wrt_l) / scale_l < 1e-6);
    }
  }
}

TEST_CASE("scalar riccati equation has the textbook solution") {
  Eigen::MatrixXd A(1, 1), B(1, 1), Q(1, 1);
  A << 0.0;
  B << 1.0;
  Q << 1.0;
  const Eigen::MatrixXd P = solve_care(A, B, Q, 1.0);
  CHECK(P(0, 0) == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("controller designs are stabilizing across the sampled ranges") {
  Rng rng(23);
  for (int draw = 0; draw < 20; ++draw) {
    PlantParams p;
    p.pendulum_mass = rng.uniform(0.1, 2.0);
    p.length_to_com = rng.uniform(0.2, 0.5);
    const LqrDesign design = design_controller(p);
    CHECK(design.riccati_residual < 1e-8);
    const auto [A, B] = linearized_matrices(p);
    CHECK(hurwitz(A - B * design.gain));
    // With no force needed at equilibrium, unit DC gain means the reference
    // scaling coincides with the position gain.
    CHECK(design.precompensation ==
          doctest::Approx(design.gain(0)).epsilon(1e-6));
  }
}

TEST_CASE("closed loop settles on the reference position") {
  PlantParams p;
  p.pendulum_mass = 0.5;
  p.length_to_com = 0.3;
  const LqrDesign design = design_controller(p);
  const auto controller = [&](const PlantState& s) {
    return design.force(s, kReferencePosition);
  };

  SUBCASE("full criterion bands at two seconds") {
    const Trajectory traj =
        rollout(p, controller, PlantState{0.0, 0.05, 0.0, 0.0}, 2.0, 0.01);
    CHECK(traj.states.size() == 201);
    CHECK(std::abs(traj.states.back().r - 0.2) < 0.1);
    CHECK(std::abs(traj.states.back().theta) < 0.01);
  }

  SUBCASE("long horizon reaches the reference to 1e-6") {
    const Trajectory traj =
        rollout(p, controller, PlantState{0.0, 0.05, 0.0, 0.0}, 10.0, 0.01);
    CHECK(std::abs(traj.states.back().r - 0.2) < 1e-6);
    CHECK(std::abs(traj.states.back().theta) < 1e-8);
  }
}

TEST_CASE("zero controller keeps the equilibrium") {
  PlantParams p;
  const auto zero_controller = [](const PlantState&) { return 0.0; };
  const Trajectory traj = rollout(p, zero_controller, PlantState{}, 1.0, 0.01);
  CHECK(traj.states.size() == 101);
  for (const PlantState& s : traj.states) CHECK(s.vec() == Eigen::Vector4d::Zero());
}

TEST_CASE("rk4 step agrees with a refined euler integration") {
  PlantParams p;
  p.pendulum_mass = 0.4;
  p.length_to_com = 0.35;
  const auto [A, B] = linearized_matrices(p);
  const PlantState s0{0.01, 0.005, 0.02, -0.01};
  const double f = 0.1;
  const double dt = 0.01;

  Eigen::Vector4d euler = s0.vec();
  const int substeps = 100;
  for (int i = 0; i < substeps; ++i)
    euler += (dt / substeps) * (A * euler + B * f);
  const Eigen::Vector4d rk4 = rk4_step(A, B, s0.vec(), f, dt);
  CHECK((rk4 - euler).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("cumulative closed-loop drift versus refined euler stays below 1e-4") {
  PlantParams p;
  p.pendulum_mass = 0.6;
  p.length_to_com = 0.25;
  const LqrDesign design = design_controller(p);
  const auto [A, B] = linearized_matrices(p);
  const double dt = 0.01;
  const int steps = 200;

  Eigen::Vector4d x_rk4{0.0, 0.08, 0.0, 0.0};
  Eigen::Vector4d x_euler = x_rk4;
  for (int t = 0; t < steps; ++t) {
    const double f = design.force(PlantState::from(x_rk4), kReferencePosition);
    x_rk4 = rk4_step(A, B, x_rk4, f, dt);
    // Refined Euler with the same zero-order-hold force.
    const double f_e = design.force(PlantState::from(x_euler), kReferencePosition);
    for (int i = 0; i < 100; ++i) x_euler += (dt / 100) * (A * x_euler + B * f_e);
  }
  CHECK((x_rk4 - x_euler).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("first-order response to a force impulse matches B") {
  PlantParams p;
  p.pendulum_mass = 0.2;
  p.length_to_com = 0.3;
  const auto [A, B] = linearized_matrices(p);
  const double dt = 1e-7;
  const Eigen::Vector4d out = rk4_step(A, B, Eigen::Vector4d::Zero(), 1.0, dt);
  CHECK(out[2] / dt == doctest::Approx(B[2]).epsilon(1e-4));
  CHECK(out[3] / dt == doctest::Approx(B[3]).epsilon(1e-4));
}

TEST_CASE("divergence and bad arguments raise") {
  PlantParams p;
  CHECK_THROWS_WITH((void)step(p, PlantState{1e308, 0, 1e308, 0}, 1e300, 0.01),
                    "diverged");
  CHECK_THROWS((void)step(p, PlantState{}, 0.0, 0.0));
  const auto zero_controller = [](const PlantState&) { return 0.0; };
  CHECK_THROWS((void)rollout(p, zero_controller, PlantState{}, 0.505, 0.01));
  CHECK_THROWS((void)solve_care(Eigen::MatrixXd::Zero(1, 1),
                                Eigen::MatrixXd::Ones(1, 1),
                                Eigen::MatrixXd::Ones(1, 1), 0.0));
}

TEST_CASE("trajectory csv export") {
  PlantParams p;
  p.pendulum_mass = 0.5;
  p.length_to_com = 0.3;
  const LqrDesign design = design_controller(p);
  const auto controller = [&](const PlantState& s) {
    return design.force(s, kReferencePosition);
  };
  const Trajectory traj = rollout(p, controller, PlantState{0, 0.02, 0, 0}, 0.1, 0.01);
  const auto path = std::filesystem::temp_directory_path() / "bitalloc_traj_test.csv";
  export_trajectory_csv(traj, path);
  const std::string text = io::read_file(path);
  CHECK(text.rfind("t,r,theta,v,q,f\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 12);  // header + 11 samples
  std::filesystem::remove(path);
}
