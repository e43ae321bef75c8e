#include "volterra/estimate.hpp"
#include "volterra/errors.hpp"

#include <cmath>
#include <iostream>

namespace volterra {

namespace {

// Design matrix for one pair, rows x cols, quadratic columns optional.
Eigen::MatrixXd pair_design(const Eigen::VectorXd& x, int R, Eigen::Index rows, bool quadratic) {
    const int L = static_cast<int>(x.size());
    Eigen::MatrixXd X = Eigen::MatrixXd::Zero(rows, R);
    for (Eigen::Index n = 0; n < rows; ++n) {
        int q_lo = std::max<int>(0, static_cast<int>(n) - L + 1);
        int q_hi = std::min<int>(R - 1, static_cast<int>(n));
        for (int q = q_lo; q <= q_hi; ++q)
            X(n, q) = x[n - q];
    }
    const int M = quadratic ? 1 + R + R * (R + 1) / 2 : 1 + R;
    Eigen::MatrixXd U(rows, M);
    U.col(0).setOnes();
    U.middleCols(1, R) = X;
    if (quadratic) {
        int col = 1 + R;
        for (int a = 0; a < R; ++a)
            for (int b = a; b < R; ++b)
                U.col(col++) = X.col(a).cwiseProduct(X.col(b));
    }
    return U;
}

EstimationProblem build_problem(const std::vector<TrainingPair>& pairs, int R, bool quadratic) {
    if (pairs.empty())
        throw validation_error("no training pairs");
    if (R < 1)
        throw validation_error("memory length must be >= 1");

    std::vector<Eigen::Index> rows_per(pairs.size());
    Eigen::Index total_rows = 0;
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        try {
            pairs[p].input.validate();
            pairs[p].output.validate();
        } catch (const validation_error& e) {
            throw validation_error("training pair " + std::to_string(p) + ": " + e.what());
        }
        // A model with memory R explains at most L + R - 1 output samples; use
        // whatever the measurement actually covers of that window.
        const Eigen::Index L = static_cast<Eigen::Index>(pairs[p].input.size());
        const Eigen::Index expected = L + R - 1;
        const Eigen::Index measured = static_cast<Eigen::Index>(pairs[p].output.size());
        rows_per[p] = std::min(measured, expected);
        total_rows += rows_per[p];
    }

    const int M = quadratic ? 1 + R + R * (R + 1) / 2 : 1 + R;
    EstimationProblem prob;
    prob.memory_length = R;
    prob.design.resize(total_rows, M);
    prob.observations.resize(total_rows);
    Eigen::Index row = 0;
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        prob.pair_boundaries.push_back(row);
        Eigen::Map<const Eigen::VectorXd> x(pairs[p].input.samples.data(), pairs[p].input.size());
        prob.design.middleRows(row, rows_per[p]) = pair_design(x, R, rows_per[p], quadratic);
        prob.observations.segment(row, rows_per[p]) =
            Eigen::Map<const Eigen::VectorXd>(pairs[p].output.samples.data(), rows_per[p]);
        row += rows_per[p];
    }
    return prob;
}

VolterraKernel decode_kernel(const Eigen::VectorXd& K, int R, bool quadratic) {
    if (quadratic)
        return from_coefficients(K, R);
    VolterraKernel k;
    k.R = R;
    k.h0 = K[0];
    k.h1 = K.segment(1, R);
    k.h2 = Eigen::MatrixXd::Zero(R, R);
    return k;
}

EstimateReport solve_cod(const Eigen::MatrixXd& U, const Eigen::VectorXd& Y, int R, bool quadratic) {
    if (U.rows() < 1)
        throw validation_error("estimation problem has no rows");
    if (U.rows() < U.cols())
        std::cerr << "warning: fewer rows (" << U.rows() << ") than coefficients (" << U.cols()
                  << "); the fit is underdetermined\n";
    // Default rank tolerance (eps scaled by the diagonal size). The pivoted-QR
    // diagonal underestimates small singular values, so a looser cutoff would
    // discard genuine directions on nearly degenerate training sets.
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(U);
    Eigen::VectorXd K = cod.solve(Y);
    EstimateReport rep;
    rep.kernel = decode_kernel(K, R, quadratic);
    rep.residual_norm = (Y - U * K).norm();
    rep.rank_deficient = cod.rank() < U.cols();
    Eigen::VectorXd diag = cod.matrixQTZ().diagonal().cwiseAbs();
    Eigen::Index r = std::max<Eigen::Index>(cod.rank(), 1);
    rep.condition_estimate = diag[0] / std::max(diag[r - 1], 1e-300);
    return rep;
}

} // namespace

EstimationProblem build_design_matrix(const std::vector<TrainingPair>& pairs, int R) {
    return build_problem(pairs, R, true);
}

EstimateReport solve_orthogonalized(const EstimationProblem& p) {
    return solve_cod(p.design, p.observations, p.memory_length, true);
}

EstimateReport solve_normal_equations(const EstimationProblem& p) {
    if (p.design.rows() < 1)
        throw validation_error("estimation problem has no rows");
    Eigen::MatrixXd A = p.design.transpose() * p.design;
    Eigen::VectorXd b = p.design.transpose() * p.observations;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(A);
    Eigen::VectorXd K = lu.solve(b);
    EstimateReport rep;
    rep.rank_deficient = false;
    rep.condition_estimate = 1.0 / std::max(lu.rcond(), 1e-300);
    if (!K.allFinite()) {
        // singular normal matrix: fall back to the pseudo-inverse
        Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(A);
        K = cod.solve(b);
        rep.rank_deficient = true;
    }
    rep.kernel = decode_kernel(K, p.memory_length, true);
    rep.residual_norm = (p.observations - p.design * K).norm();
    return rep;
}

EstimateReport solve_linear_only(const std::vector<TrainingPair>& pairs, int R) {
    EstimationProblem p = build_problem(pairs, R, false);
    return solve_cod(p.design, p.observations, R, false);
}

double mase(const Eigen::VectorXd& z_true, const Eigen::VectorXd& z_est) {
    if (z_true.size() != z_est.size())
        throw validation_error("mase: length mismatch (" + std::to_string(z_true.size()) + " vs " +
                               std::to_string(z_est.size()) + ")");
    if (z_true.size() == 0)
        throw validation_error("mase: empty sequences");
    double nt = z_true.norm();
    double ne = z_est.norm();
    if (nt == 0.0 || ne == 0.0)
        throw numeric_error("mase: undefined scale (zero-norm argument)");
    return (z_true / nt - z_est / ne).cwiseAbs().sum() / static_cast<double>(z_true.size());
}

double mase(const std::vector<double>& z_true, const std::vector<double>& z_est) {
    return mase(Eigen::Map<const Eigen::VectorXd>(z_true.data(), z_true.size()),
                Eigen::Map<const Eigen::VectorXd>(z_est.data(), z_est.size()));
}

namespace {

// Embed both kernels in the larger memory window so different R compare.
std::pair<Eigen::VectorXd, Eigen::VectorXd> padded_h1(const VolterraKernel& a, const VolterraKernel& b) {
    int R = std::max(a.R, b.R);
    Eigen::VectorXd va = Eigen::VectorXd::Zero(R), vb = Eigen::VectorXd::Zero(R);
    va.head(a.R) = a.h1;
    vb.head(b.R) = b.h1;
    return {va, vb};
}

} // namespace

double mase_h1(const VolterraKernel& truth, const VolterraKernel& est) {
    auto [vt, ve] = padded_h1(truth, est);
    return mase(vt, ve);
}

double mase_h2(const VolterraKernel& truth, const VolterraKernel& est) {
    int R = std::max(truth.R, est.R);
    Eigen::MatrixXd mt = Eigen::MatrixXd::Zero(R, R), me = Eigen::MatrixXd::Zero(R, R);
    mt.topLeftCorner(truth.R, truth.R) = truth.h2;
    me.topLeftCorner(est.R, est.R) = est.h2;
    return mase(Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(mt.data(), R * R)),
                Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(me.data(), R * R)));
}

} // namespace volterra
