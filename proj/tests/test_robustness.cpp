#include "doctest.h"

#include "helpers.hpp"
#include "rpl/robustness.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numeric>

using namespace rpl;

namespace {

SolverOptions tight() {
    SolverOptions o;
    o.tol = 1e-13;
    o.max_iter = 20000;
    return o;
}

DiscreteMeasure measure(const Dataset& atoms, const Vector& w) { return {atoms, w}; }

Dataset shared_atoms(std::mt19937_64& gen, Index m) { return testing::random_dataset(gen, m, 2); }

Vector random_simplex(std::mt19937_64& gen, Index m, bool allow_zero) {
    Vector w = testing::random_weights(gen, m);
    if (allow_zero) {
        std::bernoulli_distribution drop(0.3);
        for (Index i = 0; i < m; ++i) {
            if (drop(gen)) w(i) = 0.0;
        }
        if (w.sum() == 0.0) w(0) = 1.0;
    }
    return w / w.sum();
}

// (1/2) sum_{ij} |p_i p_j - q_i q_j| over a shared atom list.
double product_tv(const Vector& p, const Vector& q) {
    double s = 0.0;
    for (Index i = 0; i < p.size(); ++i) {
        for (Index j = 0; j < p.size(); ++j) s += std::abs(p(i) * p(j) - q(i) * q(j));
    }
    return 0.5 * s;
}

Dataset append(const Dataset& d, const Vector& x, double y) {
    Dataset out;
    out.xs.resize(d.size() + 1, d.dim());
    out.ys.resize(d.size() + 1);
    out.xs.topRows(d.size()) = d.xs;
    out.ys.head(d.size()) = d.ys;
    out.xs.row(d.size()) = x.transpose();
    out.ys(d.size()) = y;
    return out;
}

}  // namespace

TEST_CASE("total variation is a metric on discrete measures") {
    std::mt19937_64 gen(51);
    for (int trial = 0; trial < 30; ++trial) {
        const Dataset atoms = shared_atoms(gen, 6);
        const Vector a = random_simplex(gen, 6, true), b = random_simplex(gen, 6, true), c = random_simplex(gen, 6, true);
        const double ab = total_variation(measure(atoms, a), measure(atoms, b));
        CHECK(total_variation(measure(atoms, a), measure(atoms, a)) == 0.0);
        CHECK(ab == doctest::Approx(total_variation(measure(atoms, b), measure(atoms, a))).epsilon(1e-15));
        CHECK(ab >= 0.0);
        CHECK(ab <= 1.0 + 1e-15);
        CHECK(ab <= total_variation(measure(atoms, a), measure(atoms, c)) +
                        total_variation(measure(atoms, c), measure(atoms, b)) + 1e-15);
        CHECK(ab == doctest::Approx(0.5 * (a - b).cwiseAbs().sum()).epsilon(1e-14));

        const double pair = product_tv(a, b);
        CHECK(ab <= pair + 1e-14);
        CHECK(pair <= 2.0 * ab + 1e-14);
    }

    Dataset one;
    one.xs = Matrix::Zero(1, 2);
    one.ys = Vector::Zero(1);
    Dataset other = one;
    other.ys(0) = 1.0;
    CHECK(total_variation(DiscreteMeasure::empirical(one), DiscreteMeasure::empirical(other)) == 1.0);
}

TEST_CASE("merge_atoms keeps P first and deduplicates exact matches") {
    Dataset p;
    p.xs = Matrix(3, 1);
    p.xs << 0.0, 1.0, 2.0;
    p.ys = Vector(3);
    p.ys << 5.0, 6.0, 7.0;
    Dataset q;
    q.xs = Matrix(2, 1);
    q.xs << 1.0, 3.0;
    q.ys = Vector(2);
    q.ys << 6.0, 8.0;
    const AtomUnion u = merge_atoms(DiscreteMeasure::empirical(p), DiscreteMeasure::empirical(q));
    REQUIRE(u.atoms.size() == 4);
    CHECK(u.atoms.xs(3, 0) == 3.0);
    CHECK(u.p(3) == 0.0);
    CHECK(u.q(0) == 0.0);
    CHECK(u.q(1) == 0.5);
    CHECK(u.q(3) == 0.5);
    CHECK(u.p.sum() == doctest::Approx(1.0));

    Dataset bad;
    bad.xs = Matrix::Zero(1, 2);
    bad.ys = Vector::Zero(1);
    CHECK_THROWS_AS(merge_atoms(DiscreteMeasure::empirical(p), DiscreteMeasure::empirical(bad)), InputError);
    CHECK_THROWS_AS(validate(DiscreteMeasure{p, Vector::Constant(3, 0.5)}), InputError);
}

TEST_CASE("influence of P on itself is zero") {
    std::mt19937_64 gen(52);
    const Dataset d = testing::random_dataset(gen, 15, 2);
    const FittedModel m = fit(PairwiseLoss::logistic_pairwise(0.5), d, KernelSpec::gaussian(1.0), 0.2, tight());
    const InfluenceResult r = gateaux_derivative(m, DiscreteMeasure::empirical(d));
    CHECK(r.h_norm <= 1e-10);
    CHECK(r.t_norm == 0.0);

    Dataset single;
    single.xs = Matrix::Constant(1, 2, 0.3);
    single.ys = Vector::Constant(1, 1.5);
    const FittedModel one = fit(PairwiseLoss::logistic_pairwise(0.5), single, KernelSpec::gaussian(1.0), 0.2, tight());
    const InfluenceResult same = influence_function(one, single.xs.row(0).transpose(), 1.5);
    CHECK(same.h_norm == 0.0);
    CHECK(same.direction.alpha.size() == 1);
}

TEST_CASE("influence function with constant responses matches the hand-derived system") {
    // With y_i = c the minimizer is f = 0, phi'(0) = 0 and phi''(0) = 1/(2a), so the
    // influence direction beta over anchors (x_1..x_n, x0) solves
    //   (2 lambda I + 2 phi''(0) (diag(p) - p p^T) G) beta = 2 phi'(c - y0) (p - e_0).
    std::mt19937_64 gen(53);
    for (const double a : {0.1, 0.5, 2.0}) {
        const Index n = 12;
        Dataset d = testing::random_dataset(gen, n, 2);
        d.ys.setConstant(0.7);
        const double lambda = 0.3;
        const KernelSpec k = KernelSpec::gaussian(1.5);
        const FittedModel m = fit(PairwiseLoss::logistic_pairwise(a), d, k, lambda, tight());
        REQUIRE(m.alpha().cwiseAbs().maxCoeff() == 0.0);

        Vector x0(2);
        x0 << 0.4, -2.0;
        const double y0 = -1.1;
        const InfluenceResult r = influence_function(m, x0, y0);

        Matrix anchors(n + 1, 2);
        anchors.topRows(n) = d.xs;
        anchors.row(n) = x0.transpose();
        Matrix g(n + 1, n + 1);
        for (Index i = 0; i <= n; ++i) {
            for (Index j = 0; j <= n; ++j) g(i, j) = std::exp(-(anchors.row(i) - anchors.row(j)).squaredNorm() / 1.5);
        }
        Vector p = Vector::Zero(n + 1);
        p.head(n).setConstant(1.0 / n);
        Vector e0 = Vector::Zero(n + 1);
        e0(n) = 1.0;
        const double dphi = std::tanh((0.7 - y0) / (2.0 * a));
        const double ddphi = 1.0 / (2.0 * a);
        Matrix lhs = 2.0 * ddphi * (Matrix(p.asDiagonal()) - p * p.transpose()) * g;
        lhs.diagonal().array() += 2.0 * lambda;
        const Vector beta = lhs.fullPivLu().solve(2.0 * dphi * (p - e0));

        const Vector diff = r.direction.alpha - beta;
        CHECK(std::sqrt(std::max(0.0, diff.dot(g * diff))) <= 1e-10 * std::max(1.0, r.h_norm));
        CHECK(r.h_norm > 0.0);
        CHECK(r.bound_2lambda_check);
        CHECK(r.operator_residual <= 1e-10);
    }
}

TEST_CASE("influence function agrees with refit difference quotients") {
    std::mt19937_64 gen(54);
    const Dataset d = testing::random_dataset(gen, 20, 2);
    const FittedModel m = fit(PairwiseLoss::logistic_pairwise(0.5), d, KernelSpec::gaussian(1.0), 0.1, tight());
    Vector x0(2);
    x0 << 1.0, -0.5;
    const InfluenceResult r = influence_function(m, x0, 2.5);
    CHECK(r.h_norm <= r.t_norm / 0.2 + 1e-12);

    // Independent quotient: refit the mixture directly with fit_weighted.
    Dataset u = append(d, x0, 2.5);
    Vector p = Vector::Zero(21);
    p.head(20).setConstant(1.0 / 20);
    const Matrix g = gram_matrix(KernelSpec::gaussian(1.0), u.xs);
    const FittedModel base = fit_weighted(m.loss, u, p, m.kernel(), m.lambda, tight());
    std::vector<double> errs;
    for (const double eps : {1e-2, 1e-3, 1e-4}) {
        Vector mix = (1.0 - eps) * p;
        mix(20) += eps;
        const FittedModel moved = fit_weighted(m.loss, u, mix, m.kernel(), m.lambda, tight(), base.alpha());
        const Vector diff = (moved.alpha() - base.alpha()) / eps - r.direction.alpha;
        errs.push_back(std::sqrt(diff.dot(g * diff)));
        const QuotientCheck q = refit_quotient_error(m, DiscreteMeasure::point_mass(x0, 2.5), r, eps, tight());
        CHECK(q.converged);
        CHECK(q.error == doctest::Approx(errs.back()).epsilon(1e-3));
    }
    CHECK(errs[2] <= 1e-3 * std::max(1.0, r.h_norm));
    CHECK(errs[0] / errs[1] >= 5.0);
    CHECK(errs[0] / errs[1] <= 20.0);
    CHECK(errs[1] / errs[2] >= 5.0);
    CHECK(errs[1] / errs[2] <= 20.0);
}

TEST_CASE("Hessian operator is self-adjoint and coercive in H") {
    std::mt19937_64 gen(55);
    const Dataset d = testing::random_dataset(gen, 15, 2);
    const double lambda = 0.25;
    const FittedModel m = fit(PairwiseLoss::logistic_pairwise(0.3), d, KernelSpec::gaussian(1.0), lambda, tight());
    const AtomUnion u = merge_atoms(DiscreteMeasure::empirical(d), DiscreteMeasure::point_mass(Vector::Ones(2), 3.0));
    const Matrix g = gram_matrix(m.kernel(), u.atoms.xs);
    const Matrix op = hessian_operator(m, u, g);
    const Matrix gm = g * op;
    CHECK((gm - gm.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * gm.cwiseAbs().maxCoeff());
    for (int trial = 0; trial < 20; ++trial) {
        const Vector h = testing::random_vector(gen, u.atoms.size());
        CHECK(h.dot(gm * h) >= 2.0 * lambda * h.dot(g * h) * (1.0 - 1e-12));
    }
}

TEST_CASE("influence requires a smooth Lipschitz loss and a bounded kernel") {
    std::mt19937_64 gen(56);
    const Dataset d = testing::random_dataset(gen, 8, 1);
    for (const auto& l : {PairwiseLoss::squared(), PairwiseLoss::mee(1.0), PairwiseLoss::absolute(),
                          PairwiseLoss::hinge_ranking(), PairwiseLoss::ls_ranking()}) {
        SolverOptions o;
        o.warn_nonconvex = false;
        o.max_iter = 200;
        const FittedModel m = fit(l, d, KernelSpec::gaussian(1.0), 0.5, o);
        CHECK_THROWS_AS(influence_function(m, Vector::Zero(1), 0.0), UnsupportedOperation);
    }
    const FittedModel lin = fit(PairwiseLoss::logistic_pairwise(1.0), d, KernelSpec::linear_kernel(), 0.5);
    CHECK_THROWS_AS(influence_function(lin, Vector::Zero(1), 0.0), UnsupportedOperation);
    CHECK_NOTHROW(require_smooth_lipschitz(PairwiseLoss::logistic_ranking(1.0), KernelSpec::abel(1.0)));
    CHECK_THROWS_AS(require_bounded_loss(PairwiseLoss::logistic_pairwise(1.0)), UnsupportedOperation);
    CHECK_NOTHROW(require_bounded_loss(PairwiseLoss::mee(1.0)));

    FittedModel bare = fit(PairwiseLoss::logistic_pairwise(1.0), d, KernelSpec::gaussian(1.0), 0.5);
    bare.training = Dataset();
    CHECK_THROWS_AS(influence_function(bare, Vector::Zero(1), 0.0), InputError);
}

TEST_CASE("regularized risks of two weightings differ by at most 2c d_TV") {
    std::mt19937_64 gen(57);
    const PairwiseLoss l = PairwiseLoss::mee(0.8);
    SolverOptions o;
    o.warn_nonconvex = false;
    for (int trial = 0; trial < 10; ++trial) {
        const Dataset atoms = shared_atoms(gen, 8);
        const Vector p = random_simplex(gen, 8, false), q = random_simplex(gen, 8, true);
        const RiskComparison c = compare_regularized_risks(l, atoms, p, q, KernelSpec::gaussian(1.0), 0.2, o);
        const double tv = total_variation(measure(atoms, p), measure(atoms, q));
        CHECK(std::abs(c.risk_p - c.risk_q) <= 2.0 * tv + 1e-10);
        CHECK(std::abs(c.risk_p - c.risk_q) <= product_tv(p, q) + 1e-10);
    }
}

TEST_CASE("maxbias probe") {
    std::mt19937_64 gen(58);
    const Dataset d = testing::random_dataset(gen, 15, 2);
    const PairwiseLoss l = PairwiseLoss::mee(1.0);
    SolverOptions o;
    o.warn_nonconvex = false;

    const MaxbiasReport zero = maxbias_probe(d, l, KernelSpec::gaussian(1.0), 0.1, 0.0, {}, o);
    CHECK(zero.worst_delta == 0.0);
    CHECK(zero.bound == 0.0);
    CHECK(zero.holds);

    const MaxbiasReport r = maxbias_probe(d, l, KernelSpec::gaussian(1.0), 0.1, 0.1, {}, o);
    CHECK(r.bound == doctest::Approx(0.22).epsilon(1e-15));
    CHECK(r.grid_size == 52);
    CHECK(r.holds);
    CHECK(r.worst_delta > 0.0);
    CHECK(r.worst_delta <= r.bound);

    CHECK_THROWS_AS(maxbias_probe(d, PairwiseLoss::squared(), KernelSpec::gaussian(1.0), 0.1, 0.1), UnsupportedOperation);
    CHECK_THROWS_AS(maxbias_probe(d, l, KernelSpec::gaussian(1.0), 0.1, 1.0), InputError);
    CHECK_THROWS_AS(maxbias_probe(d, l, KernelSpec::gaussian(1.0), 0.0, 0.1), InputError);
}

TEST_CASE("default contamination grid") {
    Dataset d;
    d.xs = Matrix(2, 2);
    d.xs << 0.0, 0.0, 2.0, 4.0;
    d.ys = Vector(2);
    d.ys << 1.0, 3.0;
    const Dataset g = default_contamination_grid(d);
    CHECK(g.size() == 13 * 4);
    CHECK(g.xs(0, 0) == 1.0);
    CHECK(g.xs(0, 1) == 2.0);
    CHECK(g.ys.minCoeff() == -19.0);
    CHECK(g.ys.maxCoeff() == 23.0);
    CHECK(g.xs.col(0).maxCoeff() == 11.0);
    CHECK(g.xs.col(1).minCoeff() == -18.0);

    // a single point has a degenerate box: one x and two distinct y values
    Dataset one;
    one.xs = Matrix::Zero(1, 3);
    one.ys = Vector::Constant(1, 2.0);
    CHECK(default_contamination_grid(one).size() == 1);
}

TEST_CASE("sensitivity curve") {
    std::mt19937_64 gen(59);
    const Dataset d = testing::random_dataset(gen, 12, 2);
    const KernelSpec k = KernelSpec::gaussian(1.0);
    SolverOptions o = tight();
    o.warn_nonconvex = false;

    Vector x0(2);
    x0 << 0.2, 0.1;
    // mee with a wide window keeps the problem well conditioned; two plain fits give the oracle
    const PairwiseLoss wide = PairwiseLoss::mee(3.0);
    const SensitivityResult s = sensitivity_curve(d, x0, 0.5, wide, k, 0.5, ScTarget::risk, o);
    const FittedModel ref = fit(wide, d, k, 0.5, o);
    const FittedModel aug = fit(wide, append(d, x0, 0.5), k, 0.5, o);
    const double expected = 13.0 * (aug.diagnostics.objective - ref.diagnostics.objective);
    CHECK(s.n == 13);
    CHECK(s.converged);
    CHECK(s.value == doctest::Approx(expected).epsilon(1e-7));
    CHECK(s.bound == doctest::Approx(2.0 * (1.0 + 1.0 / 13.0)).epsilon(1e-15));
    CHECK(std::abs(s.value) <= s.bound);

    std::uniform_real_distribution<double> unif(-30.0, 30.0);
    for (int trial = 0; trial < 10; ++trial) {
        Vector z(2);
        z << unif(gen), unif(gen);
        const SensitivityResult far = sensitivity_curve(d, z, unif(gen), PairwiseLoss::mee(0.5), k, 0.2, ScTarget::risk, o);
        CHECK(std::abs(far.value) <= far.bound);
    }

    // inserting a copy of an existing point
    const SensitivityResult dup =
        sensitivity_curve(d, d.xs.row(3).transpose(), d.ys(3), PairwiseLoss::mee(1.0), k, 0.2, ScTarget::risk, o);
    CHECK(std::abs(dup.value) <= dup.bound);

    const PairwiseLoss lg = PairwiseLoss::logistic_pairwise(0.5);
    const SensitivityResult e = sensitivity_curve(d, x0, 4.0, lg, k, 0.3, ScTarget::estimator, o);
    const FittedModel eref = fit(lg, d, k, 0.3, o);
    const FittedModel eaug = fit(lg, append(d, x0, 4.0), k, 0.3, o);
    const Dataset u = append(d, x0, 4.0);
    const Vector padded = (Vector(13) << eref.alpha(), 0.0).finished();
    const Vector gap = eaug.alpha() - padded;
    const Matrix g = gram_matrix(k, u.xs);
    CHECK(e.value == doctest::Approx(13.0 * std::sqrt(gap.dot(g * gap))).epsilon(1e-6));
    CHECK(e.value > 0.0);

    CHECK_THROWS_AS(sensitivity_curve(d, x0, 0.0, lg, k, 0.3, ScTarget::risk), UnsupportedOperation);
    CHECK(sc_target_from_string("estimator") == ScTarget::estimator);
    CHECK_THROWS_AS(sc_target_from_string("bias"), InputError);
}

TEST_CASE("stability bound") {
    std::mt19937_64 gen(60);
    const Dataset d = testing::random_dataset(gen, 10, 2);
    const PairwiseLoss l = PairwiseLoss::logistic_pairwise(1.0);
    const FittedModel a = fit(l, d, KernelSpec::gaussian(1.0), 0.5, tight());
    const StabilityCheck same = stability_bound_check(a, a);
    CHECK(same.lhs <= 1e-12);
    CHECK(same.rhs == 8.0);
    CHECK(same.holds);

    const Dataset other = testing::random_dataset(gen, 7, 2);
    const FittedModel b = fit(l, other, KernelSpec::gaussian(1.0), 0.5, tight());
    const StabilityCheck s = stability_bound_check(a, b);
    // independent norm of the difference over the stacked anchors
    Matrix anchors(17, 2);
    anchors << d.xs, other.xs;
    const Vector coef = (Vector(17) << a.alpha(), -b.alpha()).finished();
    const Matrix g = gram_matrix(KernelSpec::gaussian(1.0), anchors);
    CHECK(s.lhs == doctest::Approx(std::sqrt(coef.dot(g * coef))).epsilon(1e-9));
    CHECK(s.holds);

    const FittedModel c = fit(l, other, KernelSpec::gaussian(1.0), 0.4, tight());
    CHECK_THROWS_AS(stability_bound_check(a, c), InputError);
    const FittedModel e = fit(PairwiseLoss::logistic_pairwise(2.0), other, KernelSpec::gaussian(1.0), 0.5, tight());
    CHECK_THROWS_AS(stability_bound_check(a, e), InputError);
}

TEST_CASE("summary statistics") {
    const SummaryStats s = summarize({5.0, 1.0, 3.0, 2.0, 4.0});
    CHECK(s.mean == 3.0);
    CHECK(s.sd == doctest::Approx(std::sqrt(2.5)).epsilon(1e-15));
    CHECK(s.q05 == doctest::Approx(1.2).epsilon(1e-15));
    CHECK(s.q95 == doctest::Approx(4.8).epsilon(1e-15));
    const SummaryStats one = summarize({7.0});
    CHECK(one.mean == 7.0);
    CHECK(one.q05 == 7.0);
    CHECK(std::isnan(summarize({}).mean));
}

TEST_CASE("bootstrap") {
    std::mt19937_64 gen(61);
    const Dataset d = testing::random_dataset(gen, 12, 2);
    const PairwiseLoss l = PairwiseLoss::logistic_pairwise(0.5);
    const KernelSpec k = KernelSpec::gaussian(1.0);
    const Matrix probes = testing::random_dataset(gen, 3, 2).xs;

    const Resampler identity = [](std::size_t, Index n) {
        std::vector<Index> idx(static_cast<std::size_t>(n));
        std::iota(idx.begin(), idx.end(), Index{0});
        return idx;
    };
    const BootstrapReport id = bootstrap_distribution(d, l, k, 0.3, 5, 1, probes, {}, {}, identity);
    const FittedModel single = fit(l, d, k, 0.3);
    const Vector pred = predict(single, probes);
    CHECK(id.converged == 5);
    CHECK(id.h_norm.sd == 0.0);
    CHECK(id.h_norm.mean == doctest::Approx(std::sqrt(single.alpha().dot(single.gram * single.alpha()))).epsilon(1e-12));
    for (Index i = 0; i < 3; ++i) CHECK(id.predictions[static_cast<std::size_t>(i)].mean == doctest::Approx(pred(i)).epsilon(1e-12));

    Dataset flat = d;
    flat.ys.setConstant(2.0);
    const BootstrapReport z = bootstrap_distribution(flat, l, k, 0.3, 8, 3, probes);
    CHECK(z.h_norm.mean == 0.0);
    CHECK(z.h_norm.q95 == 0.0);

    const BootstrapReport a = bootstrap_distribution(d, l, k, 0.3, 10, 42, probes);
    const BootstrapReport b = bootstrap_distribution(d, l, k, 0.3, 10, 42, probes);
    CHECK(a.h_norm.mean == b.h_norm.mean);
    CHECK(a.h_norm.sd == b.h_norm.sd);
    CHECK(a.predictions[1].q95 == b.predictions[1].q95);
    CHECK(a.h_norm.sd > 0.0);
    const BootstrapReport c = bootstrap_distribution(d, l, k, 0.3, 10, 43, probes);
    CHECK(c.h_norm.mean != a.h_norm.mean);

    CHECK(seeded_resample(9, 4, 20) == seeded_resample(9, 4, 20));
    CHECK(seeded_resample(9, 4, 20) != seeded_resample(9, 5, 20));
    Vector w = Vector::Zero(5);
    w(2) = 1.0;
    for (const Index i : seeded_resample(1, 0, 5, w)) CHECK(i == 2);
    CHECK_THROWS_AS(bootstrap_distribution(d, l, k, 0.3, 0, 1, probes), InputError);
}
