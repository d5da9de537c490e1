#include "rpl/robustness.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>

namespace rpl {

namespace {

bool same_atom(const Dataset& a, Index i, const Dataset& b, Index j) {
    return a.ys(i) == b.ys(j) && a.xs.row(i) == b.xs.row(j);
}

Index find_atom(const Dataset& atoms, Index count, const Dataset& other, Index j) {
    for (Index i = 0; i < count; ++i) {
        if (same_atom(atoms, i, other, j)) return i;
    }
    return -1;
}

Vector measure_weights(const FittedModel& model) {
    return model.weights.size() == 0 ? uniform_weights(model.training.size()) : model.weights;
}

double objective(const PairwiseLoss& loss, const Dataset& atoms, const Vector& w, const Matrix& gram,
                 const Vector& alpha, double lambda) {
    return weighted_risk(loss, atoms, w, gram * alpha) + lambda * h_norm_sq(alpha, gram);
}

// sum_{i,j} a_i b_j (D5(i,j) e_i + D6(i,j) e_j)
Vector cross_gradient(const PairwiseLoss& loss, const Dataset& atoms, const Vector& a, const Vector& b,
                      const Vector& f) {
    const Index m = atoms.size();
    Vector out = Vector::Zero(m);
    for (Index i = 0; i < m; ++i) {
        if (a(i) == 0.0) continue;
        for (Index j = 0; j < m; ++j) {
            const double w = a(i) * b(j);
            if (w == 0.0) continue;
            const PairTerms p = pair_terms(loss, atoms.ys(i), atoms.ys(j), f(i), f(j));
            out(i) += w * p.d5;
            out(j) += w * p.d6;
        }
    }
    return out;
}

Vector pad(const Vector& alpha, Index size) {
    Vector out = Vector::Zero(size);
    out.head(alpha.size()) = alpha;
    return out;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

double quantile7(const std::vector<double>& sorted, double p) {
    const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    if (lo + 1 >= sorted.size()) return sorted.back();
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

void require_training(const FittedModel& model) {
    if (model.training.size() == 0) throw InputError("model carries no training data");
    if (!model.diagnostics.converged) throw NumericFailure("model did not converge");
}

}  // namespace

DiscreteMeasure DiscreteMeasure::empirical(const Dataset& data) {
    validate(data);
    return {data, uniform_weights(data.size())};
}

DiscreteMeasure DiscreteMeasure::point_mass(const Vector& x, double y) {
    DiscreteMeasure m;
    m.atoms.xs = x.transpose();
    m.atoms.ys = Vector::Constant(1, y);
    m.weights = Vector::Ones(1);
    return m;
}

void validate(const DiscreteMeasure& measure) {
    validate(measure.atoms);
    if (measure.weights.size() == 0) throw InputError("measure has no weights");
    validate_weights(measure.weights, measure.atoms.size());
}

AtomUnion merge_atoms(const DiscreteMeasure& p, const DiscreteMeasure& q) {
    validate(p);
    validate(q);
    if (p.atoms.dim() != q.atoms.dim()) throw InputError("measures live on inputs of different dimension");
    const Index np = p.size();
    std::vector<Index> slot(static_cast<std::size_t>(q.size()));
    Index extra = 0;
    for (Index j = 0; j < q.size(); ++j) {
        const Index k = find_atom(p.atoms, np, q.atoms, j);
        slot[static_cast<std::size_t>(j)] = k;
        if (k < 0) ++extra;
    }
    AtomUnion u;
    u.atoms.xs.resize(np + extra, p.atoms.dim());
    u.atoms.ys.resize(np + extra);
    u.atoms.xs.topRows(np) = p.atoms.xs;
    u.atoms.ys.head(np) = p.atoms.ys;
    u.p = pad(p.weights, np + extra);
    u.q = Vector::Zero(np + extra);
    Index next = np;
    for (Index j = 0; j < q.size(); ++j) {
        Index k = slot[static_cast<std::size_t>(j)];
        if (k < 0) {
            // an atom repeated within Q shares the slot created for its first copy
            k = find_atom(u.atoms, next, q.atoms, j);
            if (k < 0) {
                k = next++;
                u.atoms.xs.row(k) = q.atoms.xs.row(j);
                u.atoms.ys(k) = q.atoms.ys(j);
            }
        }
        u.q(k) += q.weights(j);
    }
    u.atoms.xs.conservativeResize(next, Eigen::NoChange);
    u.atoms.ys.conservativeResize(next);
    u.p.conservativeResize(next);
    u.q.conservativeResize(next);
    return u;
}

double total_variation(const DiscreteMeasure& p, const DiscreteMeasure& q) {
    validate(p);
    validate(q);
    if (p.atoms.dim() != q.atoms.dim()) throw InputError("measures live on inputs of different dimension");
    // repeated atoms within a measure collapse before the difference is taken
    std::map<std::vector<double>, double> diff;
    auto accumulate = [&](const DiscreteMeasure& m, double sign) {
        for (Index i = 0; i < m.size(); ++i) {
            std::vector<double> key;
            key.reserve(static_cast<std::size_t>(m.atoms.dim()) + 1);
            for (Index c = 0; c < m.atoms.dim(); ++c) key.push_back(m.atoms.xs(i, c) + 0.0);
            key.push_back(m.atoms.ys(i) + 0.0);
            diff[key] += sign * m.weights(i);
        }
    };
    accumulate(p, 1.0);
    accumulate(q, -1.0);
    double sum = 0.0;
    for (const auto& [key, d] : diff) sum += std::abs(d);
    return std::min(1.0, 0.5 * sum);
}

void require_smooth_lipschitz(const PairwiseLoss& loss, const KernelSpec& kernel) {
    const LossConstants lc = loss_constants(loss);
    if (!lc.convex || !lc.twice_differentiable || !std::isfinite(lc.lip) || !std::isfinite(lc.grad_bound) ||
        !std::isfinite(lc.hess_bound)) {
        throw UnsupportedOperation("loss '" + to_string(loss.family) +
                                   "' is not convex, twice differentiable and separately Lipschitz with "
                                   "bounded derivatives");
    }
    if (!kernel.bounded()) throw UnsupportedOperation("kernel '" + to_string(kernel.family) + "' is unbounded");
}

void require_bounded_loss(const PairwiseLoss& loss) {
    if (!std::isfinite(loss_constants(loss).value_bound)) {
        throw UnsupportedOperation("loss '" + to_string(loss.family) + "' is unbounded");
    }
}

Matrix hessian_operator(const FittedModel& model, const AtomUnion& merged, const Matrix& gram) {
    const Vector f = evaluate(model.function, merged.atoms.xs);
    Matrix m = pair_hessian_matrix(model.loss, merged.atoms, merged.p, f) * gram;
    m.diagonal().array() += 2.0 * model.lambda;
    return m;
}

InfluenceResult gateaux_derivative(const FittedModel& model, const DiscreteMeasure& q) {
    require_smooth_lipschitz(model.loss, model.kernel());
    require_training(model);
    const DiscreteMeasure p{model.training, measure_weights(model)};
    const AtomUnion u = merge_atoms(p, q);
    const Index m = u.atoms.size();

    InfluenceResult out;
    out.gram = gram_matrix(model.kernel(), u.atoms.xs);
    const Vector f = evaluate(model.function, u.atoms.xs);
    const Vector spp = cross_gradient(model.loss, u.atoms, u.p, u.p, f);
    const Vector spq = cross_gradient(model.loss, u.atoms, u.p, u.q, f);
    const Vector sqp = cross_gradient(model.loss, u.atoms, u.q, u.p, f);
    out.t_coeffs = (spq - spp) + (sqp - spp);
    out.t_norm = h_seminorm(out.t_coeffs, out.gram);

    const Matrix op = hessian_operator(model, u, out.gram);
    Eigen::ColPivHouseholderQR<Matrix> qr(op);
    Vector beta;
    if (qr.rank() < m) {
        Matrix jittered = op;
        jittered.diagonal().array() += 1e-10 * 2.0 * model.lambda;
        beta = jittered.colPivHouseholderQr().solve(-out.t_coeffs);
    } else {
        beta = qr.solve(-out.t_coeffs);
    }
    out.operator_residual = h_seminorm(op * beta + out.t_coeffs, out.gram);
    if (!(out.operator_residual <= 1e-6 * std::max(1.0, out.t_norm))) {
        throw NumericFailure("influence solve residual " + std::to_string(out.operator_residual) +
                             " exceeds tolerance");
    }
    out.h_norm = h_seminorm(beta, out.gram);
    out.bound_2lambda_check = out.h_norm <= out.t_norm / (2.0 * model.lambda) + 1e-8;
    out.direction.alpha = std::move(beta);
    out.direction.anchors = u.atoms.xs;
    out.direction.kernel = model.kernel();
    return out;
}

InfluenceResult influence_function(const FittedModel& model, const Vector& x0, double y0) {
    if (x0.size() != model.training.dim()) throw InputError("point dimension does not match the model");
    return gateaux_derivative(model, DiscreteMeasure::point_mass(x0, y0));
}

QuotientCheck refit_quotient_error(const FittedModel& model, const DiscreteMeasure& q, const InfluenceResult& inf,
                                   double epsilon, const SolverOptions& opts) {
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw InputError("epsilon must lie in (0, 1)");
    require_training(model);
    const DiscreteMeasure p{model.training, measure_weights(model)};
    const AtomUnion u = merge_atoms(p, q);
    if (u.atoms.size() != inf.direction.alpha.size()) throw InputError("influence result does not match Q");
    const Vector start = pad(model.alpha(), u.atoms.size());
    const FittedModel base = fit_weighted(model.loss, u.atoms, u.p, model.kernel(), model.lambda, opts, start);
    const Vector mix = (1.0 - epsilon) * u.p + epsilon * u.q;
    const FittedModel moved = fit_weighted(model.loss, u.atoms, mix / mix.sum(), model.kernel(), model.lambda, opts,
                                           base.alpha());
    QuotientCheck out;
    out.epsilon = epsilon;
    out.converged = base.diagnostics.converged && moved.diagnostics.converged;
    const Vector diff = (moved.alpha() - base.alpha()) / epsilon - inf.direction.alpha;
    out.error = h_seminorm(diff, inf.gram);
    return out;
}

RiskComparison compare_regularized_risks(const PairwiseLoss& loss, const Dataset& atoms, const Vector& p,
                                         const Vector& q, const KernelSpec& kernel, double lambda,
                                         const SolverOptions& opts, const Vector& initial_p) {
    const Matrix gram = gram_matrix(kernel, atoms.xs);
    RiskComparison out;
    auto run = [&](const Vector& w, const Vector& start) {
        const FittedModel m = fit_weighted(loss, atoms, w, kernel, lambda, opts, start);
        out.converged = out.converged && m.diagnostics.converged;
        return m.alpha();
    };
    auto j = [&](const Vector& w, const Vector& alpha) { return objective(loss, atoms, w, gram, alpha, lambda); };

    out.alpha_p = run(p, initial_p);
    double jp = j(p, out.alpha_p);
    out.alpha_q = run(q, Vector());
    double jq = j(q, out.alpha_q);
    {
        const Vector warm = run(q, out.alpha_p);
        const double v = j(q, warm);
        if (v < jq) {
            out.alpha_q = warm;
            jq = v;
        }
    }
    // Each side must do at least as well as the other side's minimizer on its own objective.
    for (int round = 0; round < 20; ++round) {
        bool changed = false;
        if (const double v = j(q, out.alpha_p); v < jq) {
            out.alpha_q = out.alpha_p;
            jq = v;
            const Vector refit = run(q, out.alpha_q);
            if (const double r = j(q, refit); r < jq) {
                out.alpha_q = refit;
                jq = r;
            }
            changed = true;
        }
        if (const double v = j(p, out.alpha_q); v < jp) {
            out.alpha_p = out.alpha_q;
            jp = v;
            const Vector refit = run(p, out.alpha_p);
            if (const double r = j(p, refit); r < jp) {
                out.alpha_p = refit;
                jp = r;
            }
            changed = true;
        }
        if (!changed) break;
    }
    out.risk_p = jp;
    out.risk_q = jq;
    return out;
}

std::string to_string(ScTarget target) { return target == ScTarget::risk ? "risk" : "estimator"; }

ScTarget sc_target_from_string(const std::string& name) {
    if (name == "risk") return ScTarget::risk;
    if (name == "estimator") return ScTarget::estimator;
    throw InputError("unknown sensitivity target '" + name + "' (expected risk or estimator)");
}

SensitivityResult sensitivity_curve(const Dataset& data, const Vector& x0, double y0, const PairwiseLoss& loss,
                                    const KernelSpec& kernel, double lambda, ScTarget target,
                                    const SolverOptions& opts) {
    validate(data);
    validate(loss);
    validate(kernel);
    if (!(lambda > 0.0)) throw InputError("lambda must be positive");
    if (x0.size() != data.dim()) throw InputError("point dimension does not match the dataset");
    const LossConstants lc = loss_constants(loss);
    if (target == ScTarget::risk) require_bounded_loss(loss);

    const AtomUnion u = merge_atoms(DiscreteMeasure::empirical(data), DiscreteMeasure::point_mass(x0, y0));
    const double n = static_cast<double>(data.size() + 1);
    Vector mix = (1.0 - 1.0 / n) * u.p;
    mix += (1.0 / n) * u.q;
    mix /= mix.sum();

    const RiskComparison cmp = compare_regularized_risks(loss, u.atoms, u.p, mix, kernel, lambda, opts);
    SensitivityResult out;
    out.target = target;
    out.n = data.size() + 1;
    out.converged = cmp.converged;
    out.convention =
        "reference: the n-1 given points with weight 1/(n-1) and a zero-weight slot for z0; "
        "augmented: (1-1/n) reference + (1/n) delta_z0";
    if (target == ScTarget::risk) {
        out.reference = cmp.risk_p;
        out.augmented = cmp.risk_q;
        out.value = n * (cmp.risk_q - cmp.risk_p);
        out.bound = 2.0 * lc.value_bound * (1.0 + 1.0 / n);
    } else {
        const Matrix gram = gram_matrix(kernel, u.atoms.xs);
        out.value = n * h_seminorm(cmp.alpha_q - cmp.alpha_p, gram);
        out.reference = 0.0;
        out.augmented = out.value / n;
    }
    return out;
}

Dataset default_contamination_grid(const Dataset& data) {
    validate(data);
    const Index d = data.dim();
    const Eigen::RowVectorXd lo = data.xs.colwise().minCoeff();
    const Eigen::RowVectorXd hi = data.xs.colwise().maxCoeff();
    const Eigen::RowVectorXd center = 0.5 * (lo + hi);

    std::vector<Eigen::RowVectorXd> xs{center};
    const Index corners = Index{1} << d;
    for (const double scale : {1.0, 3.0, 10.0}) {
        for (Index mask = 0; mask < corners; ++mask) {
            Eigen::RowVectorXd corner(d);
            for (Index c = 0; c < d; ++c) corner(c) = (mask >> c) & 1 ? hi(c) : lo(c);
            Eigen::RowVectorXd point = center + scale * (corner - center);
            if (std::find(xs.begin(), xs.end(), point) == xs.end()) xs.push_back(point);
        }
    }

    const double ymin = data.ys.minCoeff();
    const double ymax = data.ys.maxCoeff();
    const double range = ymax - ymin;
    std::vector<double> ys;
    for (const double y : {ymin, ymax, ymin - 10.0 * range, ymax + 10.0 * range}) {
        if (std::find(ys.begin(), ys.end(), y) == ys.end()) ys.push_back(y);
    }

    Dataset grid;
    grid.xs.resize(static_cast<Index>(xs.size() * ys.size()), d);
    grid.ys.resize(grid.xs.rows());
    Index row = 0;
    for (const auto& x : xs) {
        for (const double y : ys) {
            grid.xs.row(row) = x;
            grid.ys(row) = y;
            ++row;
        }
    }
    return grid;
}

MaxbiasReport maxbias_probe(const Dataset& data, const PairwiseLoss& loss, const KernelSpec& kernel, double lambda,
                            double epsilon, const Dataset& grid_in, const SolverOptions& opts) {
    validate(data);
    validate(loss);
    validate(kernel);
    require_bounded_loss(loss);
    if (!(lambda > 0.0)) throw InputError("lambda must be positive");
    if (!(epsilon >= 0.0 && epsilon < 1.0)) throw InputError("epsilon must lie in [0, 1)");
    const Dataset grid = grid_in.size() == 0 ? default_contamination_grid(data) : grid_in;
    validate(grid);
    if (grid.dim() != data.dim()) throw InputError("contamination grid dimension does not match the dataset");

    const double c = loss_constants(loss).value_bound;
    MaxbiasReport out;
    out.epsilon = epsilon;
    out.bound = 2.0 * c * epsilon * (1.0 + epsilon);
    out.grid_size = grid.size();
    out.argmax_x = grid.xs.row(0).transpose();
    out.argmax_y = grid.ys(0);
    if (epsilon == 0.0) return out;

    const DiscreteMeasure p = DiscreteMeasure::empirical(data);
    const Vector alpha_p = fit(loss, data, kernel, lambda, opts).alpha();
    for (Index g = 0; g < grid.size(); ++g) {
        const AtomUnion u = merge_atoms(p, DiscreteMeasure::point_mass(grid.xs.row(g).transpose(), grid.ys(g)));
        Vector mix = (1.0 - epsilon) * u.p + epsilon * u.q;
        mix /= mix.sum();
        const RiskComparison cmp =
            compare_regularized_risks(loss, u.atoms, u.p, mix, kernel, lambda, opts, pad(alpha_p, u.atoms.size()));
        if (!cmp.converged) ++out.nonconverged;
        const double delta = std::abs(cmp.risk_q - cmp.risk_p);
        if (delta > out.worst_delta) {
            out.worst_delta = delta;
            out.argmax_x = grid.xs.row(g).transpose();
            out.argmax_y = grid.ys(g);
        }
    }
    out.holds = out.worst_delta <= out.bound + 1e-8;
    return out;
}

StabilityCheck stability_bound_check(const FittedModel& model_p, const FittedModel& model_q) {
    if (!(model_p.loss == model_q.loss)) throw InputError("models use different losses");
    const KernelSpec& kp = model_p.kernel();
    const KernelSpec& kq = model_q.kernel();
    if (kp.family != kq.family || kp.gamma != kq.gamma || kp.matrix != kq.matrix) {
        throw InputError("models use different kernels");
    }
    if (model_p.lambda != model_q.lambda) throw InputError("models use different lambda");
    require_smooth_lipschitz(model_p.loss, kp);
    if (!model_p.diagnostics.converged || !model_q.diagnostics.converged) {
        throw NumericFailure("stability check needs converged models");
    }

    // merge identical anchors so identical models give an exactly zero difference
    const Matrix& ap = model_p.function.anchors;
    const Matrix& aq = model_q.function.anchors;
    if (ap.cols() != aq.cols()) throw InputError("models use inputs of different dimension");
    Matrix anchors(ap.rows() + aq.rows(), ap.cols());
    anchors.topRows(ap.rows()) = ap;
    Vector coeff = pad(model_p.alpha(), anchors.rows());
    Index used = ap.rows();
    for (Index j = 0; j < aq.rows(); ++j) {
        Index k = -1;
        for (Index i = 0; i < used; ++i) {
            if (anchors.row(i) == aq.row(j)) {
                k = i;
                break;
            }
        }
        if (k < 0) {
            k = used++;
            anchors.row(k) = aq.row(j);
        }
        coeff(k) -= model_q.alpha()(j);
    }
    anchors.conservativeResize(used, Eigen::NoChange);
    coeff.conservativeResize(used);

    StabilityCheck out;
    out.lhs = h_seminorm(coeff, gram_matrix(kp, anchors));
    const double k = sup_norm(kp);
    out.rhs = 4.0 * loss_constants(model_p.loss).lip * k * k / model_p.lambda;
    out.holds = out.lhs <= out.rhs + 1e-8;
    return out;
}

SummaryStats summarize(std::vector<double> values) {
    SummaryStats s;
    if (values.empty()) {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        return {nan, nan, nan, nan};
    }
    // Welford: a constant sample keeps its exact mean and zero spread
    double ss = 0.0;
    std::size_t k = 0;
    for (const double v : values) {
        ++k;
        const double delta = v - s.mean;
        s.mean += delta / static_cast<double>(k);
        ss += delta * (v - s.mean);
    }
    if (values.size() > 1) s.sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
    std::sort(values.begin(), values.end());
    s.q05 = quantile7(values, 0.05);
    s.q95 = quantile7(values, 0.95);
    return s;
}

std::vector<Index> seeded_resample(std::uint64_t seed, std::size_t resample, Index n, const Vector& weights) {
    std::mt19937_64 gen(splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(resample))));
    std::vector<Index> idx(static_cast<std::size_t>(n));
    if (weights.size() == 0) {
        std::uniform_int_distribution<Index> pick(0, n - 1);
        for (auto& i : idx) i = pick(gen);
    } else {
        std::discrete_distribution<Index> pick(weights.data(), weights.data() + weights.size());
        for (auto& i : idx) i = pick(gen);
    }
    return idx;
}

BootstrapReport bootstrap_distribution(const Dataset& data, const PairwiseLoss& loss, const KernelSpec& kernel,
                                       double lambda, std::size_t resamples, std::uint64_t seed,
                                       const Matrix& probes, const SolverOptions& opts, const Vector& weights,
                                       const Resampler& resampler) {
    validate(data);
    validate_weights(weights, data.size());
    if (resamples < 1) throw InputError("bootstrap needs at least one resample");
    if (probes.rows() > 0 && probes.cols() != data.dim()) {
        throw InputError("probe dimension does not match the dataset");
    }
    const Index n = data.size();
    BootstrapReport out;
    out.resamples = resamples;
    out.seed = seed;
    std::vector<double> norms;
    std::vector<std::vector<double>> preds(static_cast<std::size_t>(probes.rows()));
    for (std::size_t b = 0; b < resamples; ++b) {
        const std::vector<Index> idx = resampler ? resampler(b, n) : seeded_resample(seed, b, n, weights);
        if (static_cast<Index>(idx.size()) != n) throw InputError("resampler returned the wrong number of draws");
        Dataset sample;
        sample.xs.resize(n, data.dim());
        sample.ys.resize(n);
        for (Index i = 0; i < n; ++i) {
            const Index k = idx[static_cast<std::size_t>(i)];
            if (k < 0 || k >= n) throw InputError("resampler index out of range");
            sample.xs.row(i) = data.xs.row(k);
            sample.ys(i) = data.ys(k);
        }
        const FittedModel m = fit(loss, sample, kernel, lambda, opts);
        if (!m.diagnostics.converged) {
            ++out.nonconverged;
            continue;
        }
        ++out.converged;
        norms.push_back(std::sqrt(h_norm_sq(m.alpha(), m.gram)));
        if (probes.rows() > 0) {
            const Vector pv = predict(m, probes);
            for (Index r = 0; r < probes.rows(); ++r) preds[static_cast<std::size_t>(r)].push_back(pv(r));
        }
    }
    out.h_norm = summarize(norms);
    for (auto& p : preds) out.predictions.push_back(summarize(std::move(p)));
    return out;
}

}  // namespace rpl
