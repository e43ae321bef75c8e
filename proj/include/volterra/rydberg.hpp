#pragma once

#include "volterra/pulse.hpp"

#include <Eigen/Dense>
#include <complex>
#include <utility>
#include <vector>

namespace volterra {

/// Basis ordering for the simulated atom: |g>, |p>, |r>, |g'>. The fourth
/// level collects spontaneous decay into other ground sublevels so the
/// Lindblad channels stay trace-preserving.
inline constexpr int kLevels = 4;
inline constexpr int kDim = kLevels * kLevels;  // superoperator dimension

using DensityMatrix = Eigen::Matrix4cd;
using SuperOp = Eigen::Matrix<std::complex<double>, kDim, kDim>;

/// Two-photon ladder parameters, all in rad/us. Decay from |p> splits
/// 1:2 between |g> and |g'>; Gamma_d dephases the Rydberg level.
struct RydbergSystem {
    double Delta = 0.0;                      // single-photon detuning
    double delta = 0.0;                      // two-photon detuning
    double Gamma = 2.0 * 3.14159265358979323846 * 1.41;
    double Gamma_d = 2.0 * 3.14159265358979323846 * 0.043;

    double gamma_g() const { return Gamma / 3.0; }
    double gamma_gp() const { return 2.0 * Gamma / 3.0; }
};

/// Piecewise-constant Rabi controls: omega_b drives g-p, omega_r drives p-r.
struct ControlSchedule {
    Pulse omega_b;
    Pulse omega_r;

    std::size_t steps() const { return omega_b.size(); }
    double dt() const { return omega_b.dt; }

    void validate() const;
};

struct Trajectory {
    std::vector<DensityMatrix> states;  // length steps + 1, includes rho0
    double final_cost = 0.0;            // vs the target passed to propagate
};

DensityMatrix ground_state();   // |g><g|
DensityMatrix rydberg_state();  // |r><r|

/// H = ob (|g><p| + h.c.)/2 + or (|p><r| + h.c.)/2 - Delta |p><p| - delta |r><r|.
Eigen::Matrix4cd hamiltonian(const RydbergSystem& sys, double ob, double or_);

/// Column-major-vectorized Lindblad generator:
///   L = -i (I (x) H - H^T (x) I) + sum_j [ conj(V_j) (x) V_j
///        - 1/2 (I (x) V_j^+ V_j + (V_j^+ V_j)^T (x) I) ]
/// with V_g = sqrt(Gamma/3) |g><p|, V_g' = sqrt(2 Gamma/3) |g'><p|,
/// V_d = sqrt(Gamma_d) |r><r|.
SuperOp liouvillian(const RydbergSystem& sys, double ob, double or_);

/// Constant generators dL/d(ob) and dL/d(or): the Hamiltonian coupling
/// terms enter L linearly, so these do not depend on the control values.
SuperOp control_generator_b();
SuperOp control_generator_r();

/// exp(L dt) by scaling-and-squaring.
SuperOp step_propagator(const RydbergSystem& sys, double ob, double or_, double dt);

/// Sequential propagation under per-step propagators; all intermediate
/// states are retained for gradient reuse. final_cost is evaluated against
/// rho_target.
Trajectory propagate(const RydbergSystem& sys, const ControlSchedule& controls,
                     const DensityMatrix& rho0, const DensityMatrix& rho_target);

/// C = 1 - |Tr(rho_target^+ rho_T)|^2.
double cost(const DensityMatrix& rho_T, const DensityMatrix& rho_target);

/// dC/d(omega_b(j)), dC/d(omega_r(j)) for every step j: one forward pass,
/// one backward adjoint pass, and per-step directional derivatives of
/// exp(L dt) from the upper-right block of exp([[A, E], [0, A]]).
std::pair<Eigen::VectorXd, Eigen::VectorXd> cost_gradient(const RydbergSystem& sys,
                                                          const ControlSchedule& controls,
                                                          const DensityMatrix& rho0,
                                                          const DensityMatrix& rho_target);

/// Cost plus gradient in one sweep (shares the forward pass).
struct CostWithGradient {
    double cost = 0.0;
    Eigen::VectorXd grad_b;
    Eigen::VectorXd grad_r;
};
CostWithGradient cost_and_gradient(const RydbergSystem& sys, const ControlSchedule& controls,
                                   const DensityMatrix& rho0, const DensityMatrix& rho_target);

} // namespace volterra
