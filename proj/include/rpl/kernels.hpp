#pragma once

#include "rpl/core.hpp"

#include <cmath>
#include <memory>
#include <string>

namespace rpl {

enum class KernelFamily { gaussian_rbf, abel_rbf, linear, precomputed };

std::string to_string(KernelFamily family);
KernelFamily kernel_family_from_string(const std::string& name);

/// Kernel choice plus its width. For `precomputed`, inputs are one-dimensional
/// row indices into `matrix`.
struct KernelSpec {
    KernelFamily family = KernelFamily::gaussian_rbf;
    double gamma = 1.0;
    std::shared_ptr<const Matrix> matrix;  // precomputed only
    std::string matrix_path;               // provenance of `matrix`, kept for persistence

    bool bounded() const { return family != KernelFamily::linear; }

    static KernelSpec gaussian(double gamma) { return {KernelFamily::gaussian_rbf, gamma, nullptr, {}}; }
    static KernelSpec abel(double gamma) { return {KernelFamily::abel_rbf, gamma, nullptr, {}}; }
    static KernelSpec linear_kernel() { return {KernelFamily::linear, 1.0, nullptr, {}}; }
    static KernelSpec precomputed_matrix(Matrix k, std::string path = {});
};

/// Throws InputError unless the parameters describe a usable kernel.
void validate(const KernelSpec& spec);

namespace detail {

inline Index precomputed_index(const KernelSpec& spec, double coordinate) {
    const double rounded = std::round(coordinate);
    if (!spec.matrix || rounded != coordinate || rounded < 0.0 ||
        rounded >= static_cast<double>(spec.matrix->rows())) {
        throw InputError("precomputed kernel index out of range: " + std::to_string(coordinate));
    }
    return static_cast<Index>(rounded);
}

}  // namespace detail

/// k(x, x') for any pair of Eigen vector expressions.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar kernel_eval(const KernelSpec& spec, const Eigen::MatrixBase<DerivedA>& x,
                                      const Eigen::MatrixBase<DerivedB>& xp) {
    using Scalar = typename DerivedA::Scalar;
    if (x.size() != xp.size()) {
        throw InputError("kernel_eval: dimension mismatch (" + std::to_string(x.size()) + " vs " +
                         std::to_string(xp.size()) + ")");
    }
    switch (spec.family) {
        case KernelFamily::gaussian_rbf:
            return std::exp(-(x - xp).squaredNorm() / static_cast<Scalar>(spec.gamma));
        case KernelFamily::abel_rbf:
            return std::exp(-(x - xp).template lpNorm<1>() / static_cast<Scalar>(spec.gamma));
        case KernelFamily::linear:
            return x.dot(xp);
        case KernelFamily::precomputed: {
            if (x.size() != 1) throw InputError("precomputed kernel expects one index column");
            const Index i = detail::precomputed_index(spec, static_cast<double>(x(0)));
            const Index j = detail::precomputed_index(spec, static_cast<double>(xp(0)));
            return static_cast<Scalar>((*spec.matrix)(i, j));
        }
    }
    return Scalar(0);
}

/// Gram matrix over the rows of `points`; each unordered pair is evaluated once
/// and mirrored so the result is exactly symmetric.
Matrix gram_matrix(const KernelSpec& spec, const Matrix& points);

/// K(a, b) with rows of `a` against rows of `b`.
Matrix cross_gram(const KernelSpec& spec, const Matrix& a, const Matrix& b);

/// sup_x sqrt(k(x,x)); +inf for the linear kernel.
double sup_norm(const KernelSpec& spec);

/// f(.) = sum_b alpha_b k(., anchor_b)
struct RkhsFunction {
    Vector alpha;
    Matrix anchors;  // one anchor per row
    KernelSpec kernel;

    Index size() const { return alpha.size(); }
    Index dim() const { return anchors.cols(); }
};

Vector evaluate(const RkhsFunction& f, const Matrix& xs);

/// alpha^T G alpha with tiny negative round-off clamped to zero.
double h_norm_sq(const RkhsFunction& f, const Matrix& gram);
double h_norm_sq(const Vector& alpha, const Matrix& gram);

/// Load an n x n kernel matrix from header-less CSV; warns if it is not PSD.
Matrix load_precomputed_kernel_csv(const std::string& path);

}  // namespace rpl
