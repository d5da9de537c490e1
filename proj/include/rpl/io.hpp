#pragma once

#include "rpl/core.hpp"
#include "rpl/kernels.hpp"
#include "rpl/losses.hpp"
#include "rpl/risk.hpp"
#include "rpl/solver.hpp"

#include "json.hpp"

#include <cstdint>
#include <optional>
#include <string>

namespace rpl {

using Json = nlohmann::ordered_json;

struct RunConfig {
    KernelSpec kernel;
    PairwiseLoss loss;
    double lambda = 1.0;
    SolverOptions solver;
    std::uint64_t seed = 0;
    std::string output_dir = ".";
};

/// Strict: unknown keys, wrong types and out-of-range values throw InputError.
/// Relative kernel-matrix paths resolve against `base_dir`.
RunConfig parse_config(const Json& doc, const std::string& base_dir = ".");
RunConfig load_config(const std::string& path);

Json to_json(const KernelSpec& kernel);
Json to_json(const PairwiseLoss& loss);
Json to_json(const SolverOptions& opts);
Json to_json(const Diagnostics& diag);
Json to_json(const LossConstants& lc);
Json to_json(const BoundCheck& check);

/// Finite values as numbers, infinities as the strings "inf" / "-inf".
Json number_or_inf(double value);
Json to_json(const Vector& v);
Json to_json(const Matrix& m);

/// Model file: kernel, loss, lambda, anchors, alpha, diagnostics. Doubles use the
/// shortest decimal form that parses back to the same bits.
Json model_to_json(const FittedModel& model);
FittedModel model_from_json(const Json& doc, const std::string& base_dir = ".");
void save_model(const FittedModel& model, const std::string& path);
FittedModel load_model(const std::string& path);

/// Header x1,...,xd,y.
Dataset load_dataset(const std::string& path);
/// Header x1,...,xd with an optional trailing y column (ignored). An empty file
/// yields zero rows with `expected_dim` columns.
Matrix load_points(const std::string& path, Index expected_dim = -1);

Json read_json_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace rpl
