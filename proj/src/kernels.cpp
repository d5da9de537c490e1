#include "rpl/kernels.hpp"

#include "rpl/csv.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cstdio>

namespace rpl {

std::string to_string(KernelFamily family) {
    switch (family) {
        case KernelFamily::gaussian_rbf: return "gaussian_rbf";
        case KernelFamily::abel_rbf: return "abel_rbf";
        case KernelFamily::linear: return "linear";
        case KernelFamily::precomputed: return "precomputed";
    }
    return "unknown";
}

KernelFamily kernel_family_from_string(const std::string& name) {
    if (name == "gaussian_rbf") return KernelFamily::gaussian_rbf;
    if (name == "abel_rbf") return KernelFamily::abel_rbf;
    if (name == "linear") return KernelFamily::linear;
    if (name == "precomputed") return KernelFamily::precomputed;
    throw InputError("unknown kernel family '" + name + "'");
}

KernelSpec KernelSpec::precomputed_matrix(Matrix k, std::string path) {
    KernelSpec spec;
    spec.family = KernelFamily::precomputed;
    spec.matrix = std::make_shared<const Matrix>(std::move(k));
    spec.matrix_path = std::move(path);
    validate(spec);
    return spec;
}

void validate(const KernelSpec& spec) {
    switch (spec.family) {
        case KernelFamily::gaussian_rbf:
        case KernelFamily::abel_rbf:
            if (!(spec.gamma > 0.0) || !std::isfinite(spec.gamma)) {
                throw InputError("kernel gamma must be positive and finite");
            }
            break;
        case KernelFamily::linear:
            break;
        case KernelFamily::precomputed: {
            if (!spec.matrix || spec.matrix->rows() == 0 || spec.matrix->rows() != spec.matrix->cols()) {
                throw InputError("precomputed kernel needs a nonempty square matrix");
            }
            const Matrix& k = *spec.matrix;
            if (!k.allFinite()) throw InputError("precomputed kernel has non-finite entries");
            if ((k - k.transpose()).cwiseAbs().maxCoeff() != 0.0) {
                throw InputError("precomputed kernel matrix is not symmetric");
            }
            break;
        }
    }
}

Matrix gram_matrix(const KernelSpec& spec, const Matrix& points) {
    const Index n = points.rows();
    if (n == 0) throw InputError("gram_matrix: empty point list");
    Matrix k(n, n);
    for (Index j = 0; j < n; ++j) {
        k(j, j) = kernel_eval(spec, points.row(j), points.row(j));
        for (Index i = j + 1; i < n; ++i) {
            const double v = kernel_eval(spec, points.row(i), points.row(j));
            k(i, j) = v;
            k(j, i) = v;
        }
    }
    return k;
}

Matrix cross_gram(const KernelSpec& spec, const Matrix& a, const Matrix& b) {
    if (a.rows() > 0 && b.rows() > 0 && a.cols() != b.cols()) {
        throw InputError("cross_gram: dimension mismatch");
    }
    Matrix k(a.rows(), b.rows());
    for (Index j = 0; j < b.rows(); ++j) {
        for (Index i = 0; i < a.rows(); ++i) k(i, j) = kernel_eval(spec, a.row(i), b.row(j));
    }
    return k;
}

double sup_norm(const KernelSpec& spec) {
    switch (spec.family) {
        case KernelFamily::gaussian_rbf:
        case KernelFamily::abel_rbf:
            return 1.0;
        case KernelFamily::linear:
            return kInf;
        case KernelFamily::precomputed:
            if (!spec.matrix) throw InputError("precomputed kernel without matrix");
            return std::sqrt(std::max(0.0, spec.matrix->diagonal().maxCoeff()));
    }
    return kInf;
}

Vector evaluate(const RkhsFunction& f, const Matrix& xs) {
    if (f.alpha.size() != f.anchors.rows()) {
        throw InputError("evaluate: coefficient/anchor count mismatch");
    }
    Vector out = Vector::Zero(xs.rows());
    if (xs.rows() == 0 || f.size() == 0) return out;
    if (xs.cols() != f.dim()) {
        throw InputError("evaluate: input dimension " + std::to_string(xs.cols()) + " does not match anchors (" +
                         std::to_string(f.dim()) + ")");
    }
    for (Index i = 0; i < xs.rows(); ++i) {
        double s = 0.0;
        for (Index b = 0; b < f.size(); ++b) s += f.alpha(b) * kernel_eval(f.kernel, xs.row(i), f.anchors.row(b));
        out(i) = s;
    }
    return out;
}

double h_norm_sq(const Vector& alpha, const Matrix& gram) {
    if (gram.rows() != alpha.size() || gram.cols() != alpha.size()) {
        throw InputError("h_norm_sq: Gram size does not match coefficient count");
    }
    const double q = alpha.dot(gram * alpha);
    if (q >= 0.0) return q;
    const double scale = alpha.squaredNorm() * gram.cwiseAbs().maxCoeff();
    if (q < -1e-12 * scale) {
        warn("h_norm_sq: quadratic form " + std::to_string(q) + " is negative beyond round-off; Gram may not be PSD");
    }
    return 0.0;
}

double h_norm_sq(const RkhsFunction& f, const Matrix& gram) { return h_norm_sq(f.alpha, gram); }

Matrix load_precomputed_kernel_csv(const std::string& path) {
    const CsvTable table = read_csv(path, /*has_header=*/false);
    const Index n = static_cast<Index>(table.rows.size());
    if (n == 0) throw InputError(path + ": empty kernel matrix");
    Matrix k(n, n);
    for (Index i = 0; i < n; ++i) {
        if (static_cast<Index>(table.rows[i].size()) != n) {
            throw InputError(path + ": kernel matrix row " + std::to_string(i + 1) + " has " +
                             std::to_string(table.rows[i].size()) + " columns, expected " + std::to_string(n));
        }
        for (Index j = 0; j < n; ++j) k(i, j) = table.rows[i][j];
    }
    if ((k - k.transpose()).cwiseAbs().maxCoeff() != 0.0) throw InputError(path + ": kernel matrix is not symmetric");
    const double min_eig = Eigen::SelfAdjointEigenSolver<Matrix>(k, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
    if (min_eig < -1e-6) {
        warn(path + ": precomputed kernel has minimum eigenvalue " + std::to_string(min_eig));
    }
    return k;
}

}  // namespace rpl
