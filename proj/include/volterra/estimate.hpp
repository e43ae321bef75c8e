#pragma once

#include "volterra/kernel.hpp"
#include "volterra/pulse.hpp"

#include <Eigen/Dense>
#include <vector>

namespace volterra {

/// Stacked least-squares problem Y = U K over one or more training pairs.
/// Row layout per pair: column 0 is the constant 1, columns 1..R the lagged
/// inputs x_{n}, x_{n-1}, .., x_{n-R+1}, columns R+1..M-1 the products
/// x_{n-a} x_{n-b} with (a, b), a <= b, in lexicographic order.
struct EstimationProblem {
    Eigen::MatrixXd design;              // (sum_p N_p) x M
    Eigen::VectorXd observations;        // stacked outputs
    int memory_length = 1;
    std::vector<Eigen::Index> pair_boundaries;  // row offset where each pair starts
};

struct EstimateReport {
    VolterraKernel kernel;
    double residual_norm = 0.0;
    bool rank_deficient = false;
    double condition_estimate = 0.0;
};

/// Builds the stacked design matrix. Each pair restarts the lag window
/// (x_q = 0 for q < 0). Measured outputs longer than L + R - 1 are
/// truncated; shorter outputs keep only the measured rows (a warning goes
/// to stderr either way).
EstimationProblem build_design_matrix(const std::vector<TrainingPair>& pairs, int R);

/// Least squares through a rank-revealing orthogonal factorization of U
/// (U^T U is never formed). Rank deficiency below a 1e-12 relative diagonal
/// threshold is flagged and the minimum-norm solution returned.
EstimateReport solve_orthogonalized(const EstimationProblem& p);

/// The non-orthogonalized baseline: solves U^T U K = U^T Y by LU. Falls
/// back to a pseudo-inverse (with the rank_deficient flag) only when the
/// direct solve produces non-finite values.
EstimateReport solve_normal_equations(const EstimationProblem& p);

/// Linear-plus-offset fit: same pipeline restricted to columns 0..R, h2 = 0
/// in the returned kernel.
EstimateReport solve_linear_only(const std::vector<TrainingPair>& pairs, int R);

/// Mean absolute scaled error between two equal-length sequences:
///   (1/N) sum_i | a_i/||a|| - b_i/||b|| |   (l2 norms).
/// Throws numeric_error("undefined scale") if either argument is all zero.
double mase(const Eigen::VectorXd& z_true, const Eigen::VectorXd& z_est);
double mase(const std::vector<double>& z_true, const std::vector<double>& z_est);

/// MASE between two kernels' h1 (or h2) blocks, used for recovery reports.
double mase_h1(const VolterraKernel& truth, const VolterraKernel& est);
double mase_h2(const VolterraKernel& truth, const VolterraKernel& est);

} // namespace volterra
