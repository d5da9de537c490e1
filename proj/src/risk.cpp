#include "rpl/risk.hpp"

#include <cmath>

namespace rpl {

namespace {

void require_fvals(const Dataset& data, const Vector& fvals) {
    if (fvals.size() != data.size()) {
        throw InputError("prediction vector has length " + std::to_string(fvals.size()) + ", dataset has " +
                         std::to_string(data.size()) + " points");
    }
}

// Pair weights are w_i w_j, or 1 with a final 1/n^2 when weights are empty, so the
// uniform case sums exactly as written in the V-statistic.
struct PairWeights {
    const Vector& w;
    double final_scale;

    double operator()(Index i, Index j) const { return w.size() == 0 ? 1.0 : w(i) * w(j); }
};

PairWeights pair_weights(const Vector& weights, Index n) {
    const double nn = static_cast<double>(n);
    return {weights, weights.size() == 0 ? 1.0 / (nn * nn) : 1.0};
}

}  // namespace

void validate(const Dataset& data) {
    if (data.ys.size() == 0) throw InputError("dataset is empty");
    if (data.xs.rows() != data.ys.size()) {
        throw InputError("dataset has " + std::to_string(data.xs.rows()) + " inputs but " +
                         std::to_string(data.ys.size()) + " responses");
    }
    if (!data.xs.allFinite() || !data.ys.allFinite()) throw InputError("dataset contains NaN or Inf");
}

void validate_weights(const Vector& weights, Index n) {
    if (weights.size() == 0) return;
    if (weights.size() != n) throw InputError("weight vector length does not match the dataset");
    if (!weights.allFinite() || weights.minCoeff() < 0.0) throw InputError("weights must be finite and nonnegative");
    if (std::abs(weights.sum() - 1.0) > 1e-12) throw InputError("weights must sum to one");
}

Vector uniform_weights(Index n) { return Vector::Constant(n, 1.0 / static_cast<double>(n)); }

double weighted_risk(const PairwiseLoss& loss, const Dataset& data, const Vector& weights, const Vector& fvals,
                     bool shifted) {
    require_fvals(data, fvals);
    validate_weights(weights, data.size());
    const Index n = data.size();
    const PairWeights pw = pair_weights(weights, n);
    double sum = 0.0;
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < n; ++j) {
            const double w = pw(i, j);
            if (w == 0.0) continue;
            const double l = shifted ? pair_shifted_value(loss, data.ys(i), data.ys(j), fvals(i), fvals(j))
                                     : pair_value(loss, data.ys(i), data.ys(j), fvals(i), fvals(j));
            sum += w * l;
        }
    }
    return sum * pw.final_scale;
}

double empirical_risk(const PairwiseLoss& loss, const Dataset& data, const Vector& fvals) {
    return weighted_risk(loss, data, Vector(), fvals, false);
}

double empirical_shifted_risk(const PairwiseLoss& loss, const Dataset& data, const Vector& fvals) {
    return weighted_risk(loss, data, Vector(), fvals, true);
}

RiskReport regularized_risk(const PairwiseLoss& loss, const Dataset& data, const RkhsFunction& model, double lambda,
                            bool shifted) {
    if (!(lambda > 0.0)) throw InputError("lambda must be positive");
    validate(data);
    RiskReport report;
    report.shifted = shifted;
    report.pair_count = data.size() * data.size();
    const Vector fvals = evaluate(model, data.xs);
    report.risk = weighted_risk(loss, data, Vector(), fvals, shifted);
    const double norm_sq = model.size() == 0 ? 0.0 : h_norm_sq(model, gram_matrix(model.kernel, model.anchors));
    report.regularized_risk = report.risk + lambda * norm_sq;
    return report;
}

RiskGradient weighted_risk_gradient_coeffs(const PairwiseLoss& loss, const Dataset& data, const Vector& weights,
                                           const Matrix& gram, const Vector& alpha, double lambda) {
    const Index n = data.size();
    if (alpha.size() != n || gram.rows() != n || gram.cols() != n) {
        throw InputError("risk gradient: coefficient, Gram, and dataset sizes differ");
    }
    validate_weights(weights, n);
    const Vector f = gram * alpha;
    const PairWeights pw = pair_weights(weights, n);
    Vector g = Vector::Zero(n);
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < n; ++j) {
            const double w = pw(i, j);
            if (w == 0.0) continue;
            const PairTerms p = pair_terms(loss, data.ys(i), data.ys(j), f(i), f(j));
            g(i) += w * p.d5;
            g(j) += w * p.d6;
        }
    }
    g *= pw.final_scale;
    RiskGradient out;
    out.residual_dir = g + 2.0 * lambda * alpha;
    out.g = std::move(g);
    return out;
}

RiskGradient risk_gradient_coeffs(const PairwiseLoss& loss, const Dataset& data, const Matrix& gram,
                                  const Vector& alpha, double lambda) {
    return weighted_risk_gradient_coeffs(loss, data, Vector(), gram, alpha, lambda);
}

Matrix pair_hessian_matrix(const PairwiseLoss& loss, const Dataset& data, const Vector& weights,
                           const Vector& fvals) {
    require_fvals(data, fvals);
    validate_weights(weights, data.size());
    if (!loss_constants(loss).twice_differentiable) {
        throw UnsupportedOperation("loss '" + to_string(loss.family) + "' has no second derivatives");
    }
    const Index n = data.size();
    const PairWeights pw = pair_weights(weights, n);
    Matrix b = Matrix::Zero(n, n);
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < n; ++j) {
            const double w = pw(i, j);
            if (w == 0.0) continue;
            const PairTerms p = pair_terms(loss, data.ys(i), data.ys(j), fvals(i), fvals(j));
            b(i, i) += w * p.h55;
            b(i, j) += w * p.h56;
            b(j, i) += w * p.h56;
            b(j, j) += w * p.h66;
        }
    }
    return b * pw.final_scale;
}

double h_seminorm(const Vector& r, const Matrix& gram) { return std::sqrt(h_norm_sq(r, gram)); }

}  // namespace rpl
