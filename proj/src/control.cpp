#include "volterra/control.hpp"
#include "volterra/errors.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

namespace volterra {

void OptimizerConfig::validate() const {
    if (max_iterations < 0)
        throw validation_error("optimizer: max_iterations must be >= 0");
    if (!(gradient_tolerance > 0.0))
        throw validation_error("optimizer: gradient_tolerance must be positive");
    if (!(step_scale > 0.0))
        throw validation_error("optimizer: step_scale must be positive");
    if (lo_b > hi_b || lo_r > hi_r)
        throw validation_error("optimizer: box bounds must satisfy lo <= hi");
    if (history_size < 1)
        throw validation_error("optimizer: history_size must be >= 1");
    if (rise_penalty_weight < 0.0)
        throw validation_error("optimizer: rise_penalty_weight must be >= 0");
}

Eigen::VectorXd chain_gradient(const Eigen::VectorXd& dC_ds, const VolterraKernel& k, const Pulse& x) {
    const Eigen::Index N = static_cast<Eigen::Index>(x.size()) + k.R - 1;
    if (dC_ds.size() != N)
        throw validation_error("chain_gradient: expected gradient of length " + std::to_string(N) +
                               ", got " + std::to_string(dC_ds.size()));
    return jacobian(k, x).transpose() * dC_ds;
}

PqnResult pqn_minimize(BoxFunction& f, const Eigen::VectorXd& x0, const Eigen::VectorXd& lo,
                       const Eigen::VectorXd& hi, int max_iter, int history, double g_tol,
                       double step0_frac, bool quasi_newton) {
    const Eigen::Index n = x0.size();
    auto clip = [&](const Eigen::VectorXd& v) { return v.cwiseMax(lo).cwiseMin(hi).eval(); };

    PqnResult res;
    Eigen::VectorXd x = clip(x0);
    Eigen::VectorXd g(n), gn(n);
    double fx = f.value_and_gradient(x, g);
    res.trace.push_back(fx);

    double span = (hi - lo).maxCoeff();
    double box = (std::isfinite(span) && span < 1e15) ? span : std::max(1.0, x.cwiseAbs().maxCoeff());

    std::deque<Eigen::VectorXd> S, Y;
    int fails = 0;
    res.reason = TerminationReason::max_iter;

    for (int it = 0; it < max_iter; ++it) {
        const double eps_act = 1e-10 * box;
        Eigen::Array<bool, Eigen::Dynamic, 1> active(n);
        for (Eigen::Index i = 0; i < n; ++i)
            active[i] = (x[i] <= lo[i] + eps_act && g[i] > 0.0) || (x[i] >= hi[i] - eps_act && g[i] < 0.0);
        Eigen::VectorXd pg = g;
        for (Eigen::Index i = 0; i < n; ++i)
            if (active[i])
                pg[i] = 0.0;
        const double pg_inf = pg.cwiseAbs().maxCoeff();
        if (pg_inf < g_tol) {
            res.reason = TerminationReason::converged;
            break;
        }

        // two-loop recursion on the projected gradient
        Eigen::VectorXd q = pg;
        std::vector<double> alpha(S.size());
        if (quasi_newton) {
            for (std::size_t i = S.size(); i-- > 0;) {
                alpha[i] = S[i].dot(q) / Y[i].dot(S[i]);
                q -= alpha[i] * Y[i];
            }
        }
        if (quasi_newton && !S.empty())
            q *= S.back().dot(Y.back()) / Y.back().dot(Y.back());
        else
            q *= step0_frac * box / pg_inf;
        if (quasi_newton)
            for (std::size_t i = 0; i < S.size(); ++i) {
                double beta = Y[i].dot(q) / Y[i].dot(S[i]);
                q += (alpha[i] - beta) * S[i];
            }
        Eigen::VectorXd d = -q;
        for (Eigen::Index i = 0; i < n; ++i)
            if (active[i])
                d[i] = 0.0;
        if (d.dot(g) >= 0.0) {
            d = -pg * (step0_frac * box / pg_inf);
            S.clear();
            Y.clear();
        }

        // Armijo on the actual (projected) move, backtracking plus greedy expansion
        auto trial = [&](double a, Eigen::VectorXd& xt, Eigen::VectorXd& gt) {
            xt = clip(x + a * d);
            return f.value_and_gradient(xt, gt);
        };
        const double c1 = 1e-4;
        double step = 1.0;
        Eigen::VectorXd xn(n);
        double fn = trial(step, xn, gn);
        bool ok = false;
        if (fn <= fx + c1 * g.dot(xn - x)) {
            ok = true;
            Eigen::VectorXd x2(n), g2(n);
            while (step < 64.0) {
                double f2 = trial(step * 2.0, x2, g2);
                if (f2 < fn) {
                    step *= 2.0;
                    xn = x2;
                    fn = f2;
                    gn = g2;
                } else {
                    break;
                }
            }
        } else {
            for (int bt = 0; bt < 40; ++bt) {
                step *= 0.5;
                fn = trial(step, xn, gn);
                if (fn <= fx + c1 * g.dot(xn - x)) {
                    ok = true;
                    break;
                }
            }
        }
        if (!ok) {
            ++fails;
            S.clear();
            Y.clear();
            if (fails > 1) {
                res.reason = TerminationReason::line_search_failure;
                break;
            }
            continue;
        }
        fails = 0;

        Eigen::VectorXd s = xn - x;
        Eigen::VectorXd y = gn - g;
        if (s.dot(y) > 1e-12 * s.norm() * y.norm()) {
            S.push_back(std::move(s));
            Y.push_back(std::move(y));
            if (static_cast<int>(S.size()) > std::max(history, 1)) {
                S.pop_front();
                Y.pop_front();
            }
        }
        x = xn;
        fx = fn;
        g = gn;
        res.trace.push_back(fx);
    }

    res.x = x;
    res.fx = fx;
    return res;
}

ControlSchedule stirap_initial_guess(std::size_t L_c, double T, double amplitude) {
    if (L_c == 0)
        throw validation_error("stirap_initial_guess: need at least one step");
    if (!(T > 0.0))
        throw validation_error("stirap_initial_guess: duration must be positive");
    ControlSchedule cs;
    cs.omega_b.dt = cs.omega_r.dt = T / static_cast<double>(L_c);
    cs.omega_b.label = "omega_b";
    cs.omega_r.label = "omega_r";
    cs.omega_b.samples.resize(L_c);
    cs.omega_r.samples.resize(L_c);
    const double w = 0.18;
    for (std::size_t j = 0; j < L_c; ++j) {
        double t = (static_cast<double>(j) + 0.5) / static_cast<double>(L_c);
        cs.omega_r.samples[j] = amplitude * std::exp(-(t - 0.35) * (t - 0.35) / (2.0 * w * w));
        cs.omega_b.samples[j] = amplitude * std::exp(-(t - 0.65) * (t - 0.65) / (2.0 * w * w));
    }
    return cs;
}

namespace {

// Quadratic penalty on rise-speed violations of one control. Returns the
// weighted penalty and accumulates its gradient.
double rise_penalty(const Eigen::VectorXd& u, double dt, double limit, double weight,
                    Eigen::VectorXd& grad) {
    if (weight <= 0.0)
        return 0.0;
    double pen = 0.0;
    for (Eigen::Index j = 0; j + 1 < u.size(); ++j) {
        double slope = (u[j + 1] - u[j]) / dt;
        double excess = std::abs(slope) - limit;
        if (excess > 0.0) {
            pen += weight * excess * excess;
            double d = weight * 2.0 * excess * (slope > 0 ? 1.0 : -1.0) / dt;
            grad[j + 1] += d;
            grad[j] -= d;
        }
    }
    return pen;
}

// GRAPE objective over stacked controls [omega_b; omega_r], optionally seen
// through a distortion kernel.
class ExcitationObjective : public BoxFunction {
public:
    ExcitationObjective(const RydbergSystem& sys, double dt, std::size_t L_c,
                        const std::optional<VolterraKernel>& kernel, const OptimizerConfig& cfg)
        : sys_(sys), dt_(dt), Lc_(L_c), kernel_(kernel), cfg_(cfg) {}

    double value_and_gradient(const Eigen::VectorXd& x, Eigen::VectorXd& grad) override {
        grad.setZero(x.size());
        Pulse ub{std::vector<double>(x.data(), x.data() + Lc_), dt_, "omega_b"};
        Pulse ur{std::vector<double>(x.data() + Lc_, x.data() + 2 * Lc_), dt_, "omega_r"};

        double value;
        if (kernel_) {
            ControlSchedule dist;
            dist.omega_b = apply(*kernel_, ub);
            dist.omega_r = apply(*kernel_, ur);
            CostWithGradient cg = cost_and_gradient(sys_, dist, ground_state(), rydberg_state());
            value = cg.cost;
            grad.head(Lc_) = chain_gradient(cg.grad_b, *kernel_, ub);
            grad.tail(Lc_) = chain_gradient(cg.grad_r, *kernel_, ur);
        } else {
            ControlSchedule cs{ub, ur};
            CostWithGradient cg = cost_and_gradient(sys_, cs, ground_state(), rydberg_state());
            value = cg.cost;
            grad.head(Lc_) = cg.grad_b;
            grad.tail(Lc_) = cg.grad_r;
        }

        if (cfg_.rise_penalty_weight > 0.0) {
            Eigen::VectorXd gb = Eigen::VectorXd::Zero(Lc_);
            Eigen::VectorXd gr = Eigen::VectorXd::Zero(Lc_);
            value += rise_penalty(x.head(Lc_), dt_, cfg_.effective_rise_limit_b(),
                                  cfg_.rise_penalty_weight, gb);
            value += rise_penalty(x.tail(Lc_), dt_, cfg_.effective_rise_limit_r(),
                                  cfg_.rise_penalty_weight, gr);
            grad.head(Lc_) += gb;
            grad.tail(Lc_) += gr;
        }
        return value;
    }

private:
    RydbergSystem sys_;
    double dt_;
    std::size_t Lc_;
    std::optional<VolterraKernel> kernel_;
    OptimizerConfig cfg_;
};

} // namespace

OptimizationResult optimize_excitation(const RydbergSystem& sys, double T, std::size_t L_c,
                                       const std::optional<VolterraKernel>& kernel,
                                       const OptimizerConfig& cfg) {
    cfg.validate();
    if (!(T > 0.0))
        throw validation_error("optimize_excitation: duration must be positive");
    if (L_c == 0)
        throw validation_error("optimize_excitation: zero-duration schedule rejected");

    const double dt = T / static_cast<double>(L_c);
    ControlSchedule init = stirap_initial_guess(L_c, T, (cfg.lo_b + cfg.hi_b) / 2.0);
    if (cfg.init_perturbation > 0.0) {
        Rng rng(cfg.seed);
        double amp_b = cfg.init_perturbation * (cfg.hi_b - cfg.lo_b);
        double amp_r = cfg.init_perturbation * (cfg.hi_r - cfg.lo_r);
        for (std::size_t j = 0; j < L_c; ++j) {
            init.omega_b.samples[j] += rng.uniform(-amp_b, amp_b);
            init.omega_r.samples[j] += rng.uniform(-amp_r, amp_r);
        }
    }

    Eigen::VectorXd x0(2 * L_c), lo(2 * L_c), hi(2 * L_c);
    x0.head(L_c) = Eigen::Map<const Eigen::VectorXd>(init.omega_b.samples.data(), L_c);
    x0.tail(L_c) = Eigen::Map<const Eigen::VectorXd>(init.omega_r.samples.data(), L_c);
    lo.head(L_c).setConstant(cfg.lo_b);
    lo.tail(L_c).setConstant(cfg.lo_r);
    hi.head(L_c).setConstant(cfg.hi_b);
    hi.tail(L_c).setConstant(cfg.hi_r);

    ExcitationObjective obj(sys, dt, L_c, kernel, cfg);
    PqnResult r = pqn_minimize(obj, x0, lo, hi, cfg.max_iterations, cfg.history_size,
                               cfg.gradient_tolerance, cfg.step_scale,
                               cfg.mode == OptimizerMode::box_qn);

    OptimizationResult out;
    out.controls.omega_b = Pulse{std::vector<double>(r.x.data(), r.x.data() + L_c), dt, "omega_b"};
    out.controls.omega_r = Pulse{std::vector<double>(r.x.data() + L_c, r.x.data() + 2 * L_c), dt, "omega_r"};
    if (kernel) {
        ControlSchedule dist;
        dist.omega_b = apply(*kernel, out.controls.omega_b);
        dist.omega_r = apply(*kernel, out.controls.omega_r);
        out.distorted_controls = std::move(dist);
    }
    out.cost_trace = std::move(r.trace);
    out.final_cost = r.fx;
    out.termination_reason = r.reason;
    return out;
}

double evaluate_ideal(const RydbergSystem& sys, const ControlSchedule& controls) {
    return propagate(sys, controls, ground_state(), rydberg_state()).final_cost;
}

double evaluate_distorted(const RydbergSystem& sys, const ControlSchedule& controls,
                          const VolterraKernel& kernel) {
    ControlSchedule dist;
    dist.omega_b = apply(kernel, controls.omega_b);
    dist.omega_r = apply(kernel, controls.omega_r);
    return propagate(sys, dist, ground_state(), rydberg_state()).final_cost;
}

namespace {

class PredistortObjective : public BoxFunction {
public:
    PredistortObjective(const VolterraKernel& k, const Pulse& target)
        : k_(k), target_(target), N_(static_cast<Eigen::Index>(target.size())) {}

    double value_and_gradient(const Eigen::VectorXd& x, Eigen::VectorXd& grad) override {
        Pulse xp{std::vector<double>(x.data(), x.data() + x.size()), target_.dt, "input"};
        Pulse y = apply(k_, xp);
        Eigen::Map<const Eigen::VectorXd> yv(y.samples.data(), N_);
        Eigen::Map<const Eigen::VectorXd> tv(target_.samples.data(), N_);
        Eigen::VectorXd r = tv - yv;

        const double delta = 1e-8;
        double val = 0.0;
        Eigen::VectorXd dfdy(N_);
        for (Eigen::Index i = 0; i < N_; ++i) {
            double a = std::abs(r[i]);
            if (a <= delta) {
                val += r[i] * r[i] / (2.0 * delta);
                dfdy[i] = -r[i] / delta;
            } else {
                val += a - delta / 2.0;
                dfdy[i] = (r[i] > 0) ? -1.0 : 1.0;
            }
        }
        val /= static_cast<double>(N_);
        dfdy /= static_cast<double>(N_);
        grad = chain_gradient(dfdy, k_, xp);
        return val;
    }

private:
    VolterraKernel k_;
    Pulse target_;
    Eigen::Index N_;
};

} // namespace

PredistortResult predistort(const VolterraKernel& kernel, const Pulse& target,
                            const OptimizerConfig& cfg) {
    cfg.validate();
    kernel.validate();
    target.validate();
    const Eigen::Index N = static_cast<Eigen::Index>(target.size());
    const Eigen::Index L = N - kernel.R + 1;
    if (L < 1)
        throw validation_error("predistort: target must be at least as long as the kernel memory");

    Eigen::VectorXd x0 = Eigen::Map<const Eigen::VectorXd>(target.samples.data(), L);
    const double inf = std::numeric_limits<double>::infinity();
    Eigen::VectorXd lo = Eigen::VectorXd::Constant(L, -inf);
    Eigen::VectorXd hi = Eigen::VectorXd::Constant(L, inf);

    PredistortObjective obj(kernel, target);
    PqnResult r = pqn_minimize(obj, x0, lo, hi, cfg.max_iterations, cfg.history_size,
                               cfg.gradient_tolerance, cfg.step_scale, true);

    PredistortResult out;
    out.input = Pulse{std::vector<double>(r.x.data(), r.x.data() + L), target.dt, "predistorted"};
    out.objective = r.fx;
    out.converged = (r.reason == TerminationReason::converged);
    return out;
}

} // namespace volterra
