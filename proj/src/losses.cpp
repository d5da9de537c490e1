#include "rpl/losses.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace rpl {

namespace {

constexpr double kLn2 = 0.69314718055994530942;

double sign0(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// Lambda(r) = 1 / (1 + exp(-r)), evaluated without overflow.
double logistic_cdf(double r) {
    if (r >= 0.0) return 1.0 / (1.0 + std::exp(-r));
    const double e = std::exp(r);
    return e / (1.0 + e);
}

// log cosh(x) >= 0, accurate near zero.
double log_cosh(double x) {
    const double ax = std::abs(x);
    if (ax > 20.0) return ax + std::log1p(std::exp(-2.0 * ax)) - kLn2;
    const double s = std::sinh(0.5 * ax);
    return std::log1p(2.0 * s * s);
}

bool is_ranking(LossFamily f) {
    return f == LossFamily::hinge_ranking || f == LossFamily::ls_ranking || f == LossFamily::logistic_ranking;
}

// Every family is phi(w) with w = base + sigma (t~ - t).
struct Argument {
    double base;
    double sigma;
};

Argument argument(const PairwiseLoss& loss, double y, double yt) {
    if (is_ranking(loss.family)) return {std::abs(y - yt), sign0(y - yt)};
    return {y - yt, 1.0};
}

double phi(const PairwiseLoss& loss, double w) {
    switch (loss.family) {
        case LossFamily::mee:
            return -std::expm1(-w * w / (2.0 * loss.h * loss.h));
        case LossFamily::absolute:
            return std::abs(w);
        case LossFamily::logistic_pairwise:
        case LossFamily::logistic_ranking:
            // u - 2a log(2 Lambda(u/a)) == 2a log cosh(u / 2a)
            return 2.0 * loss.a * log_cosh(w / (2.0 * loss.a));
        case LossFamily::squared:
        case LossFamily::ls_ranking:
            return w * w;
        case LossFamily::hinge_ranking:
            return std::max(0.0, w);
    }
    return 0.0;
}

double phi_prime(const PairwiseLoss& loss, double w) {
    switch (loss.family) {
        case LossFamily::mee: {
            const double h2 = loss.h * loss.h;
            return (w / h2) * std::exp(-w * w / (2.0 * h2));
        }
        case LossFamily::absolute:
            return sign0(w);
        case LossFamily::logistic_pairwise:
        case LossFamily::logistic_ranking:
            return 2.0 * logistic_cdf(w / loss.a) - 1.0;
        case LossFamily::squared:
        case LossFamily::ls_ranking:
            return 2.0 * w;
        case LossFamily::hinge_ranking:
            return w > 0.0 ? 1.0 : 0.0;
    }
    return 0.0;
}

double phi_second(const PairwiseLoss& loss, double w) {
    switch (loss.family) {
        case LossFamily::mee: {
            const double h2 = loss.h * loss.h;
            return (1.0 - w * w / h2) * std::exp(-w * w / (2.0 * h2)) / h2;
        }
        case LossFamily::logistic_pairwise:
        case LossFamily::logistic_ranking: {
            const double r = w / loss.a;
            return (2.0 / loss.a) * logistic_cdf(r) * logistic_cdf(-r);
        }
        case LossFamily::squared:
        case LossFamily::ls_ranking:
            return 2.0;
        case LossFamily::absolute:
        case LossFamily::hinge_ranking:
            break;
    }
    return 0.0;
}

void require_finite(double y, double yt, double t, double tt) {
    if (!std::isfinite(y) || !std::isfinite(yt) || !std::isfinite(t) || !std::isfinite(tt)) {
        throw InputError("pairwise loss evaluated at a non-finite argument");
    }
}

}  // namespace

std::string to_string(LossFamily family) {
    switch (family) {
        case LossFamily::mee: return "mee";
        case LossFamily::absolute: return "absolute";
        case LossFamily::logistic_pairwise: return "logistic_pairwise";
        case LossFamily::squared: return "squared";
        case LossFamily::hinge_ranking: return "hinge_ranking";
        case LossFamily::ls_ranking: return "ls_ranking";
        case LossFamily::logistic_ranking: return "logistic_ranking";
    }
    return "unknown";
}

LossFamily loss_family_from_string(const std::string& name) {
    for (auto f : {LossFamily::mee, LossFamily::absolute, LossFamily::logistic_pairwise, LossFamily::squared,
                   LossFamily::hinge_ranking, LossFamily::ls_ranking, LossFamily::logistic_ranking}) {
        if (to_string(f) == name) return f;
    }
    throw InputError("unknown loss family '" + name + "'");
}

bool PairwiseLoss::operator==(const PairwiseLoss& other) const {
    if (family != other.family) return false;
    switch (family) {
        case LossFamily::mee: return h == other.h;
        case LossFamily::logistic_pairwise:
        case LossFamily::logistic_ranking: return a == other.a;
        default: return true;
    }
}

void validate(const PairwiseLoss& loss) {
    if (loss.family == LossFamily::mee && !(loss.h > 0.0 && std::isfinite(loss.h))) {
        throw InputError("mee loss needs bandwidth h > 0");
    }
    if ((loss.family == LossFamily::logistic_pairwise || loss.family == LossFamily::logistic_ranking) &&
        !(loss.a > 0.0 && std::isfinite(loss.a))) {
        throw InputError("logistic loss needs smoothing a > 0");
    }
}

LossConstants loss_constants(const PairwiseLoss& loss) {
    LossConstants c;
    switch (loss.family) {
        case LossFamily::mee:
            // sup |rho'| is attained at |u| = h; sup |rho''| at u = 0.
            c.lip = std::exp(-0.5) / loss.h;
            c.grad_bound = c.lip;
            c.hess_bound = 1.0 / (loss.h * loss.h);
            c.value_bound = 1.0;
            c.convex = false;
            c.differentiable = c.twice_differentiable = true;
            break;
        case LossFamily::absolute:
        case LossFamily::hinge_ranking:
            c.lip = 1.0;
            c.grad_bound = 1.0;
            c.convex = true;
            break;
        case LossFamily::logistic_pairwise:
        case LossFamily::logistic_ranking:
            c.lip = 1.0;
            c.grad_bound = 1.0;
            c.hess_bound = 1.0 / (2.0 * loss.a);
            c.convex = true;
            c.differentiable = c.twice_differentiable = true;
            break;
        case LossFamily::squared:
        case LossFamily::ls_ranking:
            c.hess_bound = 2.0;
            c.convex = true;
            c.differentiable = c.twice_differentiable = true;
            break;
    }
    return c;
}

double pair_value(const PairwiseLoss& loss, double y, double yt, double t, double tt) {
    const Argument arg = argument(loss, y, yt);
    return phi(loss, arg.base + arg.sigma * (tt - t));
}

double pair_shifted_value(const PairwiseLoss& loss, double y, double yt, double t, double tt) {
    const Argument arg = argument(loss, y, yt);
    return phi(loss, arg.base + arg.sigma * (tt - t)) - phi(loss, arg.base);
}

PairTerms pair_terms(const PairwiseLoss& loss, double y, double yt, double t, double tt) {
    const Argument arg = argument(loss, y, yt);
    const double w = arg.base + arg.sigma * (tt - t);
    PairTerms out;
    out.value = phi(loss, w);
    const double d = arg.sigma * phi_prime(loss, w);
    out.d5 = -d;
    out.d6 = d;
    const double s = arg.sigma * arg.sigma * phi_second(loss, w);
    out.h55 = s;
    out.h66 = s;
    out.h56 = -s;
    return out;
}

double loss_value(const PairwiseLoss& loss, double y, double yt, double t, double tt) {
    validate(loss);
    require_finite(y, yt, t, tt);
    return pair_value(loss, y, yt, t, tt);
}

double loss_shifted_value(const PairwiseLoss& loss, double y, double yt, double t, double tt) {
    validate(loss);
    require_finite(y, yt, t, tt);
    return pair_shifted_value(loss, y, yt, t, tt);
}

LossGradient loss_grad(const PairwiseLoss& loss, double y, double yt, double t, double tt) {
    validate(loss);
    require_finite(y, yt, t, tt);
    const PairTerms p = pair_terms(loss, y, yt, t, tt);
    return {p.d5, p.d6};
}

Eigen::Matrix2d loss_hessian(const PairwiseLoss& loss, double y, double yt, double t, double tt) {
    validate(loss);
    if (!loss_constants(loss).twice_differentiable) {
        throw UnsupportedOperation("loss '" + to_string(loss.family) + "' has no second derivatives");
    }
    require_finite(y, yt, t, tt);
    const PairTerms p = pair_terms(loss, y, yt, t, tt);
    Eigen::Matrix2d hess;
    hess << p.h55, p.h56, p.h56, p.h66;
    return hess;
}

double modulus_of_continuity_probe(const PairwiseLoss& loss, double h, double r, std::size_t samples,
                                   std::uint64_t seed, double response_range) {
    validate(loss);
    if (!loss_constants(loss).twice_differentiable) {
        throw UnsupportedOperation("modulus of continuity needs a twice-differentiable loss");
    }
    if (!(h >= 0.0) || !(r > 0.0)) throw InputError("modulus probe needs h >= 0 and r > 0");
    if (h == 0.0) return 0.0;
    const double yr = response_range > 0.0 ? response_range : 2.0 * r + 1.0;

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> pred(-r, r);
    std::uniform_real_distribution<double> step(-h, h);
    std::uniform_real_distribution<double> resp(-yr, yr);
    double best = 0.0;
    for (std::size_t s = 0; s < samples; ++s) {
        const double y = resp(rng);
        const double yt = resp(rng);
        const double f = pred(rng);
        const double ft = pred(rng);
        const double g = std::clamp(f + step(rng), -r, r);
        const double gt = std::clamp(ft + step(rng), -r, r);
        const PairTerms a = pair_terms(loss, y, yt, f, ft);
        const PairTerms b = pair_terms(loss, y, yt, g, gt);
        best = std::max({best, std::abs(a.h55 - b.h55), std::abs(a.h56 - b.h56), std::abs(a.h66 - b.h66)});
    }
    return best;
}

}  // namespace rpl
