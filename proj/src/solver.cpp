#include "rpl/solver.hpp"

#include <Eigen/LU>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <deque>

namespace rpl {

std::string to_string(SolverMode mode) {
    switch (mode) {
        case SolverMode::automatic: return "automatic";
        case SolverMode::fixed_point: return "fixed_point";
        case SolverMode::gradient_descent: return "gradient_descent";
        case SolverMode::newton: return "newton";
    }
    return "unknown";
}

SolverMode solver_mode_from_string(const std::string& name) {
    for (auto m : {SolverMode::automatic, SolverMode::fixed_point, SolverMode::gradient_descent, SolverMode::newton}) {
        if (to_string(m) == name) return m;
    }
    throw InputError("unknown solver mode '" + name + "'");
}

void validate(const SolverOptions& opts) {
    if (!(opts.tol > 0.0)) throw InputError("solver tol must be positive");
    if (opts.max_iter <= 0) throw InputError("solver max_iter must be positive");
    if (!(opts.damping > 0.0 && opts.damping <= 1.0)) throw InputError("solver damping must lie in (0, 1]");
}

namespace {

constexpr double kArmijoC1 = 1e-4;
constexpr double kBacktrack = 0.5;
constexpr int kMaxBacktracks = 60;
constexpr int kStallWindow = 50;

// One weighted regularized problem in coefficient space.
class Problem {
public:
    Problem(const PairwiseLoss& loss, const Dataset& data, const Vector& weights, const Matrix& gram, double lambda)
        : loss_(loss), data_(data), weights_(weights), gram_(gram), lambda_(lambda) {}

    double objective(const Vector& alpha, bool shifted) const {
        const Vector f = gram_ * alpha;
        return weighted_risk(loss_, data_, weights_, f, shifted) + lambda_ * h_norm_sq(alpha, gram_);
    }

    // J(next) - J(current) summed pair by pair; identical for L and L*.
    double objective_change(const Vector& current, const Vector& next) const {
        const Vector f0 = gram_ * current;
        const Vector f1 = gram_ * next;
        const Index n = data_.size();
        const bool uniform = weights_.size() == 0;
        double sum = 0.0;
        for (Index i = 0; i < n; ++i) {
            for (Index j = 0; j < n; ++j) {
                const double w = uniform ? 1.0 : weights_(i) * weights_(j);
                if (w == 0.0) continue;
                sum += w * (pair_value(loss_, data_.ys(i), data_.ys(j), f1(i), f1(j)) -
                            pair_value(loss_, data_.ys(i), data_.ys(j), f0(i), f0(j)));
            }
        }
        if (uniform) sum /= static_cast<double>(n) * static_cast<double>(n);
        return sum + lambda_ * (next.dot(gram_ * next) - current.dot(gram_ * current));
    }

    RiskGradient gradient(const Vector& alpha) const {
        return weighted_risk_gradient_coeffs(loss_, data_, weights_, gram_, alpha, lambda_);
    }

    double residual(const Vector& r) const { return h_seminorm(r, gram_); }

    Matrix newton_matrix(const Vector& alpha) const {
        Matrix m = pair_hessian_matrix(loss_, data_, weights_, gram_ * alpha) * gram_;
        m.diagonal().array() += 2.0 * lambda_;
        return m;
    }

    double lambda() const { return lambda_; }
    const Matrix& gram() const { return gram_; }

private:
    const PairwiseLoss& loss_;
    const Dataset& data_;
    const Vector& weights_;
    const Matrix& gram_;
    double lambda_;
};

struct LineSearchResult {
    bool accepted = false;
    double step = 0.0;
    Vector alpha;
    double change = 0.0;
};

// Armijo backtracking along `dir`; near the optimum where the objective change
// drops below round-off, a step that reduces the stationarity residual is accepted.
LineSearchResult armijo(const Problem& prob, const Vector& alpha, const Vector& dir, double slope,
                        double first_step, double residual, double objective_scale) {
    LineSearchResult out;
    double step = first_step;
    const double noise = 1e-13 * (std::abs(objective_scale) + 1e-300);
    for (int k = 0; k < kMaxBacktracks; ++k, step *= kBacktrack) {
        Vector trial = alpha + step * dir;
        if (!trial.allFinite()) continue;
        const double change = prob.objective_change(alpha, trial);
        bool ok = change <= kArmijoC1 * step * slope;
        if (!ok && std::abs(change) <= noise) {
            ok = prob.residual(prob.gradient(trial).residual_dir) < residual;
        }
        if (ok) {
            out.accepted = true;
            out.step = step;
            out.alpha = std::move(trial);
            out.change = change;
            return out;
        }
    }
    return out;
}

void finish(FittedModel& model, const Problem& prob, const SolverOptions& opts) {
    model.diagnostics.objective = prob.objective(model.function.alpha, opts.shifted);
    if (!model.diagnostics.converged) {
        warn("fit did not converge after " + std::to_string(model.diagnostics.iterations) + " iterations (" +
             model.diagnostics.method + ", residual " + std::to_string(model.diagnostics.final_residual) + ")");
    }
}

void solve_smooth(FittedModel& model, const Problem& prob, const SolverOptions& opts, SolverMode mode) {
    Diagnostics& d = model.diagnostics;
    Vector& alpha = model.function.alpha;
    const double lambda = prob.lambda();
    double step_hint = 1.0;
    double objective = opts.record_trace || opts.line_search ? prob.objective(alpha, opts.shifted) : 0.0;
    if (opts.record_trace) d.objective_trace.push_back(objective);

    for (d.iterations = 0; d.iterations < opts.max_iter; ++d.iterations) {
        const RiskGradient grad = prob.gradient(alpha);
        const Vector& r = grad.residual_dir;
        const double res = prob.residual(r);
        d.final_residual = res;
        if (!std::isfinite(res)) break;
        if (res <= opts.tol) {
            d.converged = true;
            break;
        }

        if (mode == SolverMode::fixed_point) {
            alpha = (1.0 - opts.damping) * alpha - opts.damping * grad.g / (2.0 * lambda);
        } else {
            Vector dir;
            if (mode == SolverMode::newton) {
                dir = -Eigen::PartialPivLU<Matrix>(prob.newton_matrix(alpha)).solve(r);
                if (!dir.allFinite() || r.dot(prob.gram() * dir) >= 0.0) dir = -r;
            } else {
                dir = -r;
            }
            const double slope = r.dot(prob.gram() * dir);
            if (!opts.line_search) {
                alpha += (mode == SolverMode::newton ? 1.0 : opts.damping / (2.0 * lambda)) * dir;
            } else {
                const double first = mode == SolverMode::newton ? 1.0 : std::min(1.0, 2.0 * step_hint);
                LineSearchResult ls = armijo(prob, alpha, dir, slope, first, res, objective);
                if (!ls.accepted) break;
                step_hint = ls.step;
                alpha = std::move(ls.alpha);
                objective += ls.change;
            }
        }
        if (!alpha.allFinite()) break;
        if (opts.record_trace) d.objective_trace.push_back(prob.objective(alpha, opts.shifted));
    }
    if (!d.converged && d.iterations >= opts.max_iter) {
        d.final_residual = prob.residual(prob.gradient(alpha).residual_dir);
        d.converged = d.final_residual <= opts.tol;
    }
}

// Diminishing-step subgradient descent with best-iterate tracking. Converged
// once the best objective improves by less than tol over kStallWindow steps.
void solve_subgradient(FittedModel& model, const Problem& prob, const SolverOptions& opts) {
    Diagnostics& d = model.diagnostics;
    d.best_effort = true;
    Vector alpha = model.function.alpha;
    Vector best_alpha = alpha;
    double best = prob.objective(alpha, opts.shifted);
    std::deque<double> history{best};
    if (opts.record_trace) d.objective_trace.push_back(best);
    const double eta0 = opts.damping / (2.0 * prob.lambda());
    d.final_residual = kInf;
    for (d.iterations = 1; d.iterations <= opts.max_iter; ++d.iterations) {
        const Vector r = prob.gradient(alpha).residual_dir;
        if (prob.residual(r) == 0.0) {
            d.final_residual = 0.0;
            d.converged = true;
            break;
        }
        alpha -= eta0 / std::sqrt(static_cast<double>(d.iterations)) * r;
        const double obj = prob.objective(alpha, opts.shifted);
        if (obj < best) {
            best = obj;
            best_alpha = alpha;
        }
        if (opts.record_trace) d.objective_trace.push_back(best);
        history.push_back(best);
        if (static_cast<int>(history.size()) > kStallWindow + 1) history.pop_front();
        if (static_cast<int>(history.size()) == kStallWindow + 1) {
            d.final_residual = history.front() - history.back();
            if (d.final_residual < opts.tol) {
                d.converged = true;
                break;
            }
        }
    }
    d.iterations = std::min(d.iterations, opts.max_iter);
    model.function.alpha = best_alpha;
}

}  // namespace

FittedModel fit_weighted(const PairwiseLoss& loss, const Dataset& data, const Vector& weights,
                         const KernelSpec& kernel, double lambda, const SolverOptions& opts, const Vector& initial) {
    if (!(lambda > 0.0) || !std::isfinite(lambda)) throw InputError("lambda must be positive");
    validate(loss);
    validate(kernel);
    validate(data);
    validate(opts);
    validate_weights(weights, data.size());
    if (initial.size() != 0 && initial.size() != data.size()) {
        throw InputError("warm start has the wrong number of coefficients");
    }

    const LossConstants lc = loss_constants(loss);
    FittedModel model;
    model.lambda = lambda;
    model.loss = loss;
    model.shifted = opts.shifted;
    model.training = data;
    model.weights = weights;
    model.gram = gram_matrix(kernel, data.xs);
    model.function.kernel = kernel;
    model.function.anchors = data.xs;
    model.function.alpha = initial.size() == 0 ? Vector::Zero(data.size()) : initial;
    if (!kernel.bounded() && std::isfinite(lc.lip)) {
        warn("unbounded kernel: Lipschitz-based norm bounds do not apply and are skipped");
    }
    if (!lc.convex) {
        model.diagnostics.nonconvex_warning = true;
        if (opts.warn_nonconvex) {
            warn("loss '" + to_string(loss.family) + "' is not convex; fit returns a stationary point reached from "
                 "the initial coefficients");
        }
    }

    const Problem prob(model.loss, model.training, model.weights, model.gram, lambda);
    if (!lc.differentiable) {
        model.diagnostics.method = "subgradient";
        solve_subgradient(model, prob, opts);
    } else {
        SolverMode mode = opts.mode;
        if (mode == SolverMode::automatic) {
            mode = lc.convex && lc.twice_differentiable ? SolverMode::newton : SolverMode::gradient_descent;
        }
        if (mode == SolverMode::newton && !lc.twice_differentiable) mode = SolverMode::gradient_descent;
        model.diagnostics.method = to_string(mode);
        solve_smooth(model, prob, opts, mode);
    }
    finish(model, prob, opts);
    return model;
}

FittedModel fit(const PairwiseLoss& loss, const Dataset& data, const KernelSpec& kernel, double lambda,
                const SolverOptions& opts) {
    return fit_weighted(loss, data, Vector(), kernel, lambda, opts);
}

FittedModel fit_ls_closed_form(const Dataset& data, const KernelSpec& kernel, double lambda) {
    if (!(lambda > 0.0) || !std::isfinite(lambda)) throw InputError("lambda must be positive");
    validate(kernel);
    validate(data);
    const Index n = data.size();
    const double c = 2.0 / (static_cast<double>(n) * lambda);
    FittedModel model;
    model.lambda = lambda;
    model.loss = PairwiseLoss::squared();
    model.training = data;
    model.gram = gram_matrix(kernel, data.xs);
    model.function.kernel = kernel;
    model.function.anchors = data.xs;

    const Matrix centering = Matrix::Identity(n, n) - Matrix::Constant(n, n, 1.0 / static_cast<double>(n));
    const Vector rhs = c * (centering * data.ys);
    Matrix system = Matrix::Identity(n, n) + c * centering * model.gram;
    Eigen::ColPivHouseholderQR<Matrix> qr(system);
    if (qr.rank() < n) {
        const double jitter = 1e-10 * model.gram.trace() / static_cast<double>(n);
        warn("closed-form system is singular; adding diagonal jitter " + std::to_string(jitter));
        Matrix k = model.gram;
        k.diagonal().array() += jitter;
        system = Matrix::Identity(n, n) + c * centering * k;
        qr.compute(system);
    }
    model.function.alpha = qr.solve(rhs);

    const Problem prob(model.loss, model.training, model.weights, model.gram, lambda);
    model.diagnostics.method = "closed_form";
    model.diagnostics.iterations = 1;
    model.diagnostics.final_residual = prob.residual(prob.gradient(model.function.alpha).residual_dir);
    model.diagnostics.converged = true;
    model.diagnostics.objective = prob.objective(model.function.alpha, false);
    return model;
}

Vector predict(const FittedModel& model, const Matrix& xs) { return evaluate(model.function, xs); }

double stationarity_residual(const FittedModel& model, const Dataset& data) {
    if (data.size() != model.alpha().size()) throw InputError("model and dataset sizes differ");
    const Matrix gram = gram_matrix(model.kernel(), data.xs);
    const Vector& w = model.weights.size() == data.size() ? model.weights : Vector();
    const RiskGradient grad = weighted_risk_gradient_coeffs(model.loss, data, w, gram, model.alpha(), model.lambda);
    return h_seminorm(grad.residual_dir, gram);
}

double regularized_objective(const FittedModel& model, bool shifted) {
    const Problem prob(model.loss, model.training, model.weights, model.gram, model.lambda);
    return prob.objective(model.alpha(), shifted);
}

std::vector<BoundCheck> a_priori_bounds(const FittedModel& model, double slack) {
    std::vector<BoundCheck> out;
    const double norm = std::sqrt(h_norm_sq(model.alpha(), model.gram));

    BoundCheck hb{"h_norm_bound", norm, 0.0, true, false, "||f||_H <= sqrt(R(0)/lambda)"};
    const double r0 = weighted_risk(model.loss, model.training, model.weights, Vector::Zero(model.training.size()));
    hb.rhs = std::sqrt(r0 / model.lambda);
    hb.holds = hb.lhs <= hb.rhs + slack;
    out.push_back(hb);

    BoundCheck sb{"sup_norm_bound", 0.0, 0.0, true, false, "||f||_inf <= |L|_1 ||k||^2 / lambda on training inputs"};
    const LossConstants lc = loss_constants(model.loss);
    const double k = sup_norm(model.kernel());
    if (!std::isfinite(lc.lip) || !std::isfinite(k)) {
        sb.skipped = true;
        sb.note = !std::isfinite(lc.lip) ? "loss is not separately Lipschitz" : "kernel is unbounded";
    } else {
        sb.lhs = (model.gram * model.alpha()).cwiseAbs().maxCoeff();
        sb.rhs = lc.lip * k * k / model.lambda;
        sb.holds = sb.lhs <= sb.rhs + slack;
    }
    out.push_back(sb);
    return out;
}

}  // namespace rpl
