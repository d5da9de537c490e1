#pragma once

#include "rpl/core.hpp"
#include "rpl/kernels.hpp"
#include "rpl/losses.hpp"
#include "rpl/risk.hpp"

#include <string>
#include <vector>

namespace rpl {

enum class SolverMode {
    automatic,         // newton for convex C2 losses, gradient_descent otherwise
    fixed_point,       // alpha <- (1 - damping) alpha + damping (-g / 2 lambda)
    gradient_descent,  // steps along -(g + 2 lambda alpha), Armijo backtracking
    newton,            // solves (2 lambda I + B G) d = -(g + 2 lambda alpha), Armijo backtracking
};

std::string to_string(SolverMode mode);
SolverMode solver_mode_from_string(const std::string& name);

struct SolverOptions {
    double tol = 1e-8;
    int max_iter = 10000;
    double damping = 0.5;
    bool line_search = true;
    SolverMode mode = SolverMode::automatic;
    bool warn_nonconvex = true;
    bool shifted = false;       // report objectives for L* instead of L
    bool record_trace = false;  // keep the objective after every iteration
};

void validate(const SolverOptions& opts);

struct Diagnostics {
    int iterations = 0;
    double final_residual = 0.0;
    double objective = 0.0;
    bool converged = false;
    bool nonconvex_warning = false;
    bool best_effort = false;  // subgradient path: residual is the objective stall
    std::string method;
    std::vector<double> objective_trace;
};

/// f = sum_i alpha_i k(., x_i) over the training inputs, together with the
/// problem it solves.
struct FittedModel {
    RkhsFunction function;
    double lambda = 1.0;
    PairwiseLoss loss;
    bool shifted = false;
    Diagnostics diagnostics;

    Dataset training;  // may be empty for models loaded from disk
    Vector weights;    // empty = uniform
    Matrix gram;       // Gram matrix of the anchors

    const Vector& alpha() const { return function.alpha; }
    const KernelSpec& kernel() const { return function.kernel; }
};

FittedModel fit(const PairwiseLoss& loss, const Dataset& data, const KernelSpec& kernel, double lambda,
                const SolverOptions& opts = {});

/// Fit under the weighted empirical measure sum_i w_i delta_{z_i}, optionally
/// warm-started from `initial` coefficients.
FittedModel fit_weighted(const PairwiseLoss& loss, const Dataset& data, const Vector& weights,
                         const KernelSpec& kernel, double lambda, const SolverOptions& opts = {},
                         const Vector& initial = Vector());

/// Squared loss: solves (I + (2/(n lambda)) C K) alpha = (2/(n lambda)) C y with
/// C = I - 11^T / n.
FittedModel fit_ls_closed_form(const Dataset& data, const KernelSpec& kernel, double lambda);

Vector predict(const FittedModel& model, const Matrix& xs);

/// H-seminorm of g + 2 lambda alpha for the model's loss on `data`.
double stationarity_residual(const FittedModel& model, const Dataset& data);

/// Regularized objective R(G alpha) + lambda alpha^T G alpha under the model's weights.
double regularized_objective(const FittedModel& model, bool shifted);

struct BoundCheck {
    std::string name;
    double lhs = 0.0;
    double rhs = 0.0;
    bool holds = true;
    bool skipped = false;
    std::string note;
};

/// Norm bounds every minimizer satisfies: ||f||_H <= sqrt(R(0)/lambda), and for
/// Lipschitz losses with a bounded kernel ||f||_inf <= |L|_1 ||k||^2 / lambda.
std::vector<BoundCheck> a_priori_bounds(const FittedModel& model, double slack = 1e-8);

}  // namespace rpl
