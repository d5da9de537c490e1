#pragma once

#include "rpl/core.hpp"
#include "rpl/kernels.hpp"
#include "rpl/losses.hpp"
#include "rpl/risk.hpp"
#include "rpl/solver.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace rpl {

/// Finitely supported probability measure sum_i w_i delta_{(x_i, y_i)}.
struct DiscreteMeasure {
    Dataset atoms;
    Vector weights;

    Index size() const { return atoms.size(); }

    static DiscreteMeasure empirical(const Dataset& data);
    static DiscreteMeasure point_mass(const Vector& x, double y);
};

void validate(const DiscreteMeasure& measure);

/// Atoms of P followed by those atoms of Q not already present in P (exact match
/// on x and y), with both weight vectors expressed over the merged list.
struct AtomUnion {
    Dataset atoms;
    Vector p;
    Vector q;
};

AtomUnion merge_atoms(const DiscreteMeasure& p, const DiscreteMeasure& q);

/// d_TV = (1/2) sum over the union of atoms of |p_i - q_i|.
double total_variation(const DiscreteMeasure& p, const DiscreteMeasure& q);

struct InfluenceResult {
    RkhsFunction direction;  // anchored at the merged atoms of P and Q
    double h_norm = 0.0;
    double operator_residual = 0.0;  // ||M(IF) + T||_H
    double t_norm = 0.0;             // ||T||_H
    bool bound_2lambda_check = false;
    Vector t_coeffs;  // T(Q;P) over the same anchors
    Matrix gram;      // Gram matrix of the anchors
};

/// -M(P)^{-1} T(Q;P) at the model's training measure P. Requires a convex,
/// twice-differentiable, separately Lipschitz loss with bounded derivatives and a
/// bounded kernel.
InfluenceResult gateaux_derivative(const FittedModel& model, const DiscreteMeasure& q);
InfluenceResult influence_function(const FittedModel& model, const Vector& x0, double y0);

/// Coefficient-space Hessian operator over `anchors` (which must start with the
/// model's training points): returns 2 lambda I + B G.
Matrix hessian_operator(const FittedModel& model, const AtomUnion& merged, const Matrix& gram);

/// ||(f_{(1-eps)P + eps Q} - f_P)/eps - IF||_H with refits over the merged atoms.
struct QuotientCheck {
    double epsilon = 0.0;
    double error = 0.0;
    bool converged = false;
};
QuotientCheck refit_quotient_error(const FittedModel& model, const DiscreteMeasure& q, const InfluenceResult& inf,
                                   double epsilon, const SolverOptions& opts);

/// Regularized risks inf_f R_mu(f) + lambda ||f||^2 for two weightings of the same
/// atoms. Each problem is also warm-started from the other's solution until
/// neither improves, so the reported values satisfy
/// R(Q) <= J_Q(f_P) and R(P) <= J_P(f_Q) for the returned minimizers.
/// `initial_p` warm-starts the fit under p.
struct RiskComparison {
    double risk_p = 0.0;
    double risk_q = 0.0;
    Vector alpha_p;
    Vector alpha_q;
    bool converged = true;
};
RiskComparison compare_regularized_risks(const PairwiseLoss& loss, const Dataset& atoms, const Vector& p,
                                         const Vector& q, const KernelSpec& kernel, double lambda,
                                         const SolverOptions& opts, const Vector& initial_p = Vector());

enum class ScTarget { risk, estimator };

std::string to_string(ScTarget target);
ScTarget sc_target_from_string(const std::string& name);

struct SensitivityResult {
    ScTarget target = ScTarget::risk;
    Index n = 0;            // size of the augmented sample
    double value = 0.0;     // SC_n
    double bound = kInf;    // 2c(1 + 1/n) for target = risk
    double reference = 0.0; // R^reg(P_{n-1}) or 0
    double augmented = 0.0; // R^reg(P_eps)
    bool converged = true;
    std::string convention;
};

/// SC_n(z0) = n (S((1 - 1/n) P_{n-1} + (1/n) delta_{z0}) - S(P_{n-1})), where the
/// reference P_{n-1} carries a zero-weight slot for z0.
SensitivityResult sensitivity_curve(const Dataset& data, const Vector& x0, double y0, const PairwiseLoss& loss,
                                    const KernelSpec& kernel, double lambda, ScTarget target,
                                    const SolverOptions& opts = {});

struct MaxbiasReport {
    double epsilon = 0.0;
    double worst_delta = 0.0;
    double bound = 0.0;  // 2 c eps (1 + eps)
    Vector argmax_x;
    double argmax_y = 0.0;
    Index grid_size = 0;
    Index nonconverged = 0;
    bool holds = true;
};

/// Corners and center of the input bounding box scaled by {1, 3, 10} about the
/// center, crossed with responses {min y, max y, min y - 10 range, max y + 10 range}.
Dataset default_contamination_grid(const Dataset& data);

MaxbiasReport maxbias_probe(const Dataset& data, const PairwiseLoss& loss, const KernelSpec& kernel, double lambda,
                            double epsilon, const Dataset& grid = {}, const SolverOptions& opts = {});

struct StabilityCheck {
    double lhs = 0.0;
    double rhs = 0.0;
    bool holds = true;
};

/// ||f_P - f_Q||_H against 4 c_{L,1} ||k||^2 / lambda.
StabilityCheck stability_bound_check(const FittedModel& model_p, const FittedModel& model_q);

struct SummaryStats {
    double mean = 0.0;
    double sd = 0.0;
    double q05 = 0.0;
    double q95 = 0.0;
};

SummaryStats summarize(std::vector<double> values);

struct BootstrapReport {
    std::size_t resamples = 0;
    std::size_t converged = 0;
    std::size_t nonconverged = 0;
    std::uint64_t seed = 0;
    SummaryStats h_norm;
    std::vector<SummaryStats> predictions;  // one per probe
};

/// Per-resample index draw; replaces the seeded generator (tests use it to force
/// the identity resample).
using Resampler = std::function<std::vector<Index>(std::size_t resample, Index n)>;

/// Index stream for one resample: depends only on (seed, resample).
std::vector<Index> seeded_resample(std::uint64_t seed, std::size_t resample, Index n, const Vector& weights = {});

BootstrapReport bootstrap_distribution(const Dataset& data, const PairwiseLoss& loss, const KernelSpec& kernel,
                                       double lambda, std::size_t resamples, std::uint64_t seed,
                                       const Matrix& probes, const SolverOptions& opts = {},
                                       const Vector& weights = {}, const Resampler& resampler = {});

/// Throws UnsupportedOperation unless the loss is convex, twice differentiable,
/// separately Lipschitz with bounded first and second derivatives, and the kernel is bounded.
void require_smooth_lipschitz(const PairwiseLoss& loss, const KernelSpec& kernel);

/// Throws UnsupportedOperation unless the loss has a finite value bound.
void require_bounded_loss(const PairwiseLoss& loss);

}  // namespace rpl
