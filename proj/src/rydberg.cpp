#include "volterra/rydberg.hpp"
#include "volterra/errors.hpp"

#include <unsupported/Eigen/MatrixFunctions>

namespace volterra {

namespace {

using cd = std::complex<double>;
constexpr cd I_UNIT{0.0, 1.0};

Eigen::MatrixXcd kron(const Eigen::Matrix4cd& A, const Eigen::Matrix4cd& B) {
    Eigen::MatrixXcd out(kDim, kDim);
    for (int i = 0; i < kLevels; ++i)
        for (int j = 0; j < kLevels; ++j)
            out.block<kLevels, kLevels>(i * kLevels, j * kLevels) = A(i, j) * B;
    return out;
}

// -i (I (x) H - H^T (x) I) for column-major vec.
SuperOp commutator_part(const Eigen::Matrix4cd& H) {
    Eigen::Matrix4cd id = Eigen::Matrix4cd::Identity();
    return -I_UNIT * (kron(id, H) - kron(H.transpose(), id));
}

// conj(V) (x) V - 1/2 (I (x) V^+V + (V^+V)^T (x) I)
SuperOp dissipator(const Eigen::Matrix4cd& V) {
    Eigen::Matrix4cd id = Eigen::Matrix4cd::Identity();
    Eigen::Matrix4cd VdV = V.adjoint() * V;
    return kron(V.conjugate(), V) - 0.5 * (kron(id, VdV) + kron(VdV.transpose(), id));
}

Eigen::Matrix4cd coupling_b() {
    Eigen::Matrix4cd H = Eigen::Matrix4cd::Zero();
    H(0, 1) = 0.5;
    H(1, 0) = 0.5;
    return H;
}

Eigen::Matrix4cd coupling_r() {
    Eigen::Matrix4cd H = Eigen::Matrix4cd::Zero();
    H(1, 2) = 0.5;
    H(2, 1) = 0.5;
    return H;
}

using Vec16 = Eigen::Matrix<cd, kDim, 1>;

Vec16 vec_of(const DensityMatrix& rho) {
    return Eigen::Map<const Vec16>(rho.data());
}

// Upper-right block of exp([[A, E], [0, A]]): the directional derivative of
// exp(A) along E. The diagonal block is exp(A) itself, so one augmented
// exponential yields both.
struct PropagatorWithDerivative {
    SuperOp P;
    SuperOp dP;
};

PropagatorWithDerivative augmented_exp(const SuperOp& A, const SuperOp& E) {
    Eigen::MatrixXcd aug = Eigen::MatrixXcd::Zero(2 * kDim, 2 * kDim);
    aug.topLeftCorner(kDim, kDim) = A;
    aug.topRightCorner(kDim, kDim) = E;
    aug.bottomRightCorner(kDim, kDim) = A;
    Eigen::MatrixXcd ex = aug.exp();
    return {ex.topLeftCorner(kDim, kDim), ex.topRightCorner(kDim, kDim)};
}

} // namespace

void ControlSchedule::validate() const {
    omega_b.validate();
    omega_r.validate();
    if (omega_b.size() != omega_r.size())
        throw validation_error("control schedules differ in length");
    if (omega_b.dt != omega_r.dt)
        throw validation_error("control schedules differ in dt");
}

DensityMatrix ground_state() {
    DensityMatrix rho = DensityMatrix::Zero();
    rho(0, 0) = 1.0;
    return rho;
}

DensityMatrix rydberg_state() {
    DensityMatrix rho = DensityMatrix::Zero();
    rho(2, 2) = 1.0;
    return rho;
}

Eigen::Matrix4cd hamiltonian(const RydbergSystem& sys, double ob, double or_) {
    Eigen::Matrix4cd H = ob * coupling_b() + or_ * coupling_r();
    H(1, 1) = -sys.Delta;
    H(2, 2) = -sys.delta;
    return H;
}

SuperOp liouvillian(const RydbergSystem& sys, double ob, double or_) {
    SuperOp L = commutator_part(hamiltonian(sys, ob, or_));
    Eigen::Matrix4cd V = Eigen::Matrix4cd::Zero();
    V(0, 1) = std::sqrt(sys.gamma_g());      // |g><p|
    L += dissipator(V);
    V.setZero();
    V(3, 1) = std::sqrt(sys.gamma_gp());     // |g'><p|
    L += dissipator(V);
    V.setZero();
    V(2, 2) = std::sqrt(sys.Gamma_d);        // |r><r|
    L += dissipator(V);
    return L;
}

SuperOp control_generator_b() { return commutator_part(coupling_b()); }
SuperOp control_generator_r() { return commutator_part(coupling_r()); }

SuperOp step_propagator(const RydbergSystem& sys, double ob, double or_, double dt) {
    if (!(dt > 0.0))
        throw validation_error("step_propagator: dt must be positive");
    Eigen::MatrixXcd Ldt = liouvillian(sys, ob, or_) * dt;
    return Ldt.exp();
}

Trajectory propagate(const RydbergSystem& sys, const ControlSchedule& controls,
                     const DensityMatrix& rho0, const DensityMatrix& rho_target) {
    controls.validate();
    const std::size_t Lc = controls.steps();
    Trajectory traj;
    traj.states.reserve(Lc + 1);
    traj.states.push_back(rho0);
    Vec16 v = vec_of(rho0);
    for (std::size_t j = 0; j < Lc; ++j) {
        SuperOp P = step_propagator(sys, controls.omega_b.samples[j], controls.omega_r.samples[j],
                                    controls.dt());
        v = P * v;
        traj.states.push_back(Eigen::Map<const DensityMatrix>(v.data()));
    }
    traj.final_cost = cost(traj.states.back(), rho_target);
    return traj;
}

double cost(const DensityMatrix& rho_T, const DensityMatrix& rho_target) {
    cd z = (rho_target.adjoint() * rho_T).trace();
    return 1.0 - std::norm(z);
}

CostWithGradient cost_and_gradient(const RydbergSystem& sys, const ControlSchedule& controls,
                                   const DensityMatrix& rho0, const DensityMatrix& rho_target) {
    controls.validate();
    const std::size_t Lc = controls.steps();
    const double dt = controls.dt();
    const SuperOp Db = control_generator_b();
    const SuperOp Dr = control_generator_r();

    std::vector<SuperOp> P(Lc), dPb(Lc), dPr(Lc);
    std::vector<Vec16> states(Lc + 1);
    states[0] = vec_of(rho0);
    for (std::size_t j = 0; j < Lc; ++j) {
        SuperOp A = liouvillian(sys, controls.omega_b.samples[j], controls.omega_r.samples[j]) * dt;
        auto [Pj, dPbj] = augmented_exp(A, Db * dt);
        P[j] = Pj;
        dPb[j] = dPbj;
        dPr[j] = augmented_exp(A, Dr * dt).dP;
        states[j + 1] = P[j] * states[j];
    }

    const Vec16 t = vec_of(rho_target);
    cd z = t.dot(states[Lc]);  // Eigen dot conjugates the left argument
    CostWithGradient out;
    out.cost = 1.0 - std::norm(z);
    if (!std::isfinite(out.cost))
        throw numeric_error("cost is not finite");
    out.grad_b.resize(Lc);
    out.grad_r.resize(Lc);

    Vec16 w = t;  // adjoint state; after the loop body for step j it equals P_{j+1}^+ .. P_Lc^+ t
    for (std::size_t j = Lc; j-- > 0;) {
        cd db = w.dot(dPb[j] * states[j]);
        cd dr = w.dot(dPr[j] * states[j]);
        out.grad_b[j] = -2.0 * std::real(std::conj(z) * db);
        out.grad_r[j] = -2.0 * std::real(std::conj(z) * dr);
        w = P[j].adjoint() * w;
    }
    if (!out.grad_b.allFinite() || !out.grad_r.allFinite())
        throw numeric_error("gradient is not finite");
    return out;
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> cost_gradient(const RydbergSystem& sys,
                                                          const ControlSchedule& controls,
                                                          const DensityMatrix& rho0,
                                                          const DensityMatrix& rho_target) {
    CostWithGradient cg = cost_and_gradient(sys, controls, rho0, rho_target);
    return {cg.grad_b, cg.grad_r};
}

} // namespace volterra
