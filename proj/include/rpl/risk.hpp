#pragma once

#include "rpl/core.hpp"
#include "rpl/kernels.hpp"
#include "rpl/losses.hpp"

namespace rpl {

/// Observations (x_i, y_i); one input per row of `xs`.
struct Dataset {
    Matrix xs;
    Vector ys;

    Index size() const { return ys.size(); }
    Index dim() const { return xs.cols(); }
};

/// Throws InputError on shape mismatch, n = 0, or non-finite entries.
void validate(const Dataset& data);

/// Probability weights over the rows of a dataset. Empty means uniform 1/n.
/// Zero weights are allowed; such points do not enter the risk.
void validate_weights(const Vector& weights, Index n);

struct RiskReport {
    double risk = 0.0;
    double regularized_risk = 0.0;
    bool shifted = false;
    Index pair_count = 0;
};

/// (1/n^2) sum_i sum_j L(z_i, z_j, f_i, f_j), diagonal pairs included.
double empirical_risk(const PairwiseLoss& loss, const Dataset& data, const Vector& fvals);
/// Same V-statistic under product weights w_i w_j.
double weighted_risk(const PairwiseLoss& loss, const Dataset& data, const Vector& weights, const Vector& fvals,
                     bool shifted = false);

/// Risk of the shifted loss L*(.., t, t~) = L(.., t, t~) - L(.., 0, 0).
double empirical_shifted_risk(const PairwiseLoss& loss, const Dataset& data, const Vector& fvals);

RiskReport regularized_risk(const PairwiseLoss& loss, const Dataset& data, const RkhsFunction& model, double lambda,
                            bool shifted);

struct RiskGradient {
    Vector g;             // coefficient form of the risk's H-gradient, anchored at the data
    Vector residual_dir;  // g + 2 lambda alpha
};

RiskGradient risk_gradient_coeffs(const PairwiseLoss& loss, const Dataset& data, const Matrix& gram,
                                  const Vector& alpha, double lambda);
RiskGradient weighted_risk_gradient_coeffs(const PairwiseLoss& loss, const Dataset& data, const Vector& weights,
                                           const Matrix& gram, const Vector& alpha, double lambda);

/// Second-derivative assembly B with B_ab = sum of w-weighted D_iD_j L terms, so
/// that the Hessian of the regularized risk acts on coefficients as 2 lambda I + B G.
Matrix pair_hessian_matrix(const PairwiseLoss& loss, const Dataset& data, const Vector& weights,
                           const Vector& fvals);

/// H-seminorm sqrt(r^T G r).
double h_seminorm(const Vector& r, const Matrix& gram);

/// Uniform weights 1/n.
Vector uniform_weights(Index n);

}  // namespace rpl
