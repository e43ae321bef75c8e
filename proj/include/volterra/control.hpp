#pragma once

#include "volterra/kernel.hpp"
#include "volterra/pulse.hpp"
#include "volterra/rydberg.hpp"

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <vector>

namespace volterra {

/// Direction choice for the constrained optimizer. box_qn takes
/// limited-memory quasi-Newton steps with an active-set projection;
/// penalty_pg takes plain projected-gradient steps. Both project onto the
/// box and add the quadratic rise-speed penalty when its weight is nonzero.
enum class OptimizerMode { box_qn, penalty_pg };

enum class TerminationReason { converged, max_iter, line_search_failure };

struct OptimizerConfig {
    int max_iterations = 1500;
    double gradient_tolerance = 1e-9;
    double step_scale = 0.02;            // first-step fraction of the box width
    double lo_b = 0.0, hi_b = 2.0 * 3.14159265358979323846 * 30.0;  // rad/us
    double lo_r = 0.0, hi_r = 2.0 * 3.14159265358979323846 * 30.0;
    double rise_speed_limit_b = 0.0;     // rad/us^2; 0 means hi_b / 0.15 us
    double rise_speed_limit_r = 0.0;     // rad/us^2; 0 means hi_r / 0.10 us
    double rise_penalty_weight = 0.0;    // 0 disables the rise-speed penalty
    int history_size = 10;
    std::uint64_t seed = 0;
    OptimizerMode mode = OptimizerMode::box_qn;
    double init_perturbation = 0.0;      // relative amplitude of seeded jitter on the start pulses

    double effective_rise_limit_b() const { return rise_speed_limit_b > 0 ? rise_speed_limit_b : hi_b / 0.15; }
    double effective_rise_limit_r() const { return rise_speed_limit_r > 0 ? rise_speed_limit_r : hi_r / 0.10; }

    void validate() const;
};

struct OptimizationResult {
    ControlSchedule controls;                     // pre-distortion inputs
    std::optional<ControlSchedule> distorted_controls;  // after the kernel, when one was given
    std::vector<double> cost_trace;               // accepted iterates only
    double final_cost = 0.0;
    TerminationReason termination_reason = TerminationReason::max_iter;
};

/// Pulls a cost gradient taken w.r.t. the distorted samples s = apply(k, x)
/// back to the raw input samples: returns J^T dC_ds with J = jacobian(k, x).
Eigen::VectorXd chain_gradient(const Eigen::VectorXd& dC_ds, const VolterraKernel& k, const Pulse& x);

/// Counterintuitive STIRAP-like Gaussian pair used as the optimizer start:
/// omega_r peaks at 0.35 T, omega_b at 0.65 T, width 0.18 T.
ControlSchedule stirap_initial_guess(std::size_t L_c, double T, double amplitude);

/// Minimizes the excitation error C = 1 - |Tr(rho_r rho(T))|^2 for the
/// g -> r transfer over piecewise-constant controls of L_c steps spanning
/// T us. When a kernel is given the dynamics sees apply(kernel, u) and the
/// simulation horizon extends to the distorted length L_c + R - 1.
OptimizationResult optimize_excitation(const RydbergSystem& sys, double T, std::size_t L_c,
                                       const std::optional<VolterraKernel>& kernel,
                                       const OptimizerConfig& cfg);

/// Excitation error of the given controls with the kernel applied to each.
double evaluate_distorted(const RydbergSystem& sys, const ControlSchedule& controls,
                          const VolterraKernel& kernel);

/// Excitation error of the controls as-is.
double evaluate_ideal(const RydbergSystem& sys, const ControlSchedule& controls);

struct PredistortResult {
    Pulse input;           // length N - R + 1
    double objective = 0.0;
    bool converged = false;
};

/// Solves argmin_x (1/N) sum_n huber_delta(target_n - apply(k, x)_n) with
/// delta = 1e-8, quasi-Newton descent started from the target's first
/// N - R + 1 samples.
PredistortResult predistort(const VolterraKernel& kernel, const Pulse& target,
                            const OptimizerConfig& cfg);

/// Shared quasi-Newton core: projected limited-memory BFGS with Armijo
/// backtracking and greedy step expansion. Exposed for tests.
struct BoxFunction {
    virtual ~BoxFunction() = default;
    virtual double value_and_gradient(const Eigen::VectorXd& x, Eigen::VectorXd& grad) = 0;
};
struct PqnResult {
    Eigen::VectorXd x;
    double fx = 0.0;
    std::vector<double> trace;
    TerminationReason reason = TerminationReason::max_iter;
};
PqnResult pqn_minimize(BoxFunction& f, const Eigen::VectorXd& x0, const Eigen::VectorXd& lo,
                       const Eigen::VectorXd& hi, int max_iter, int history, double g_tol,
                       double step0_frac, bool quasi_newton = true);

} // namespace volterra
