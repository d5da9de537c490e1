#pragma once

#include "rpl/core.hpp"

#include <cstdint>
#include <string>

namespace rpl {

enum class LossFamily { mee, absolute, logistic_pairwise, squared, hinge_ranking, ls_ranking, logistic_ranking };

std::string to_string(LossFamily family);
LossFamily loss_family_from_string(const std::string& name);

/// A pairwise loss L(x, y, x~, y~, t, t~). None of the implemented families
/// depends on the inputs x, x~; they enter only through the predictions t, t~.
///
/// Residual-type families are functions of u = (y - t) - (y~ - t~); ranking
/// families are functions of v = |y - y~| - (t - t~) sign(y - y~) with sign(0) = 0.
struct PairwiseLoss {
    LossFamily family = LossFamily::logistic_pairwise;
    double h = 1.0;  // mee bandwidth
    double a = 1.0;  // logistic smoothing

    static PairwiseLoss mee(double h) { return {LossFamily::mee, h, 1.0}; }
    static PairwiseLoss absolute() { return {LossFamily::absolute, 1.0, 1.0}; }
    static PairwiseLoss logistic_pairwise(double a) { return {LossFamily::logistic_pairwise, 1.0, a}; }
    static PairwiseLoss squared() { return {LossFamily::squared, 1.0, 1.0}; }
    static PairwiseLoss hinge_ranking() { return {LossFamily::hinge_ranking, 1.0, 1.0}; }
    static PairwiseLoss ls_ranking() { return {LossFamily::ls_ranking, 1.0, 1.0}; }
    static PairwiseLoss logistic_ranking(double a) { return {LossFamily::logistic_ranking, 1.0, a}; }

    bool operator==(const PairwiseLoss& other) const;
};

void validate(const PairwiseLoss& loss);

/// Constants consumed by the robustness bounds. Infinite entries mean "no finite bound".
struct LossConstants {
    double lip = kInf;          // separate Lipschitz constant |L|_1
    double grad_bound = kInf;   // c_{L,1}
    double hess_bound = kInf;   // c_{L,2}
    double value_bound = kInf;  // c with L <= c
    bool convex = false;
    bool differentiable = false;
    bool twice_differentiable = false;
};

LossConstants loss_constants(const PairwiseLoss& loss);

/// Value and derivatives in (t, t~) at one pair. `h55 h56 h66` are meaningful only
/// for twice-differentiable families.
struct PairTerms {
    double value = 0.0;
    double d5 = 0.0;
    double d6 = 0.0;
    double h55 = 0.0;
    double h56 = 0.0;
    double h66 = 0.0;
};

// Response-only forms; inputs are not validated (hot path).
double pair_value(const PairwiseLoss& loss, double y, double yt, double t, double tt);
double pair_shifted_value(const PairwiseLoss& loss, double y, double yt, double t, double tt);
PairTerms pair_terms(const PairwiseLoss& loss, double y, double yt, double t, double tt);

struct LossGradient {
    double d5 = 0.0;
    double d6 = 0.0;
};

// Checked scalar interface. Throws InputError for non-finite arguments.
double loss_value(const PairwiseLoss& loss, double y, double yt, double t, double tt);
double loss_shifted_value(const PairwiseLoss& loss, double y, double yt, double t, double tt);
/// Subgradient convention at kinks: the zero element.
LossGradient loss_grad(const PairwiseLoss& loss, double y, double yt, double t, double tt);
/// Throws UnsupportedOperation for families without second derivatives.
Eigen::Matrix2d loss_hessian(const PairwiseLoss& loss, double y, double yt, double t, double tt);

// Six-argument forms matching L(x, y, x~, y~, t, t~).
template <typename DX, typename DXt>
double loss_value(const PairwiseLoss& loss, const Eigen::MatrixBase<DX>&, double y, const Eigen::MatrixBase<DXt>&,
                  double yt, double t, double tt) {
    return loss_value(loss, y, yt, t, tt);
}

template <typename DX, typename DXt>
double loss_shifted_value(const PairwiseLoss& loss, const Eigen::MatrixBase<DX>&, double y,
                          const Eigen::MatrixBase<DXt>&, double yt, double t, double tt) {
    return loss_shifted_value(loss, y, yt, t, tt);
}

template <typename DX, typename DXt>
LossGradient loss_grad(const PairwiseLoss& loss, const Eigen::MatrixBase<DX>&, double y, const Eigen::MatrixBase<DXt>&,
                       double yt, double t, double tt) {
    return loss_grad(loss, y, yt, t, tt);
}

template <typename DX, typename DXt>
Eigen::Matrix2d loss_hessian(const PairwiseLoss& loss, const Eigen::MatrixBase<DX>&, double y,
                             const Eigen::MatrixBase<DXt>&, double yt, double t, double tt) {
    return loss_hessian(loss, y, yt, t, tt);
}

/// Monte-Carlo lower estimate of the local modulus of continuity of the second
/// derivatives: sup |D_iD_j L(.., f, f~) - D_iD_j L(.., g, g~)| over
/// f, f~, g, g~ in [-r, r] with |f - g|, |f~ - g~| <= h. Responses are drawn from
/// [-response_range, response_range] (default 2r + 1).
double modulus_of_continuity_probe(const PairwiseLoss& loss, double h, double r, std::size_t samples,
                                   std::uint64_t seed, double response_range = -1.0);

}  // namespace rpl
