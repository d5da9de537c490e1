#include "rpl/io.hpp"

#include "rpl/csv.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace rpl {

namespace fs = std::filesystem;

namespace {

void reject_unknown(const Json& obj, const std::set<std::string>& allowed, const std::string& where) {
    if (!obj.is_object()) throw InputError(where + " must be a JSON object");
    for (const auto& [key, value] : obj.items()) {
        if (!allowed.count(key)) throw InputError("unknown key '" + key + "' in " + where);
    }
}

double get_number(const Json& obj, const std::string& key, const std::string& where) {
    const Json& v = obj.at(key);
    if (!v.is_number()) throw InputError(where + "." + key + " must be a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw InputError(where + "." + key + " must be finite");
    return d;
}

bool get_bool(const Json& obj, const std::string& key, const std::string& where) {
    const Json& v = obj.at(key);
    if (!v.is_boolean()) throw InputError(where + "." + key + " must be true or false");
    return v.get<bool>();
}

std::string get_string(const Json& obj, const std::string& key, const std::string& where) {
    const Json& v = obj.at(key);
    if (!v.is_string()) throw InputError(where + "." + key + " must be a string");
    return v.get<std::string>();
}

std::string resolve(const std::string& path, const std::string& base_dir) {
    const fs::path p(path);
    return p.is_absolute() ? path : (fs::path(base_dir) / p).string();
}

KernelSpec parse_kernel(const Json& k, const std::string& base_dir) {
    reject_unknown(k, {"family", "gamma", "matrix"}, "kernel");
    if (!k.contains("family")) throw InputError("kernel.family is required");
    const KernelFamily family = kernel_family_from_string(get_string(k, "family", "kernel"));
    if (family == KernelFamily::precomputed) {
        if (!k.contains("matrix")) throw InputError("kernel.matrix is required for the precomputed kernel");
        if (k.contains("gamma")) throw InputError("kernel.gamma does not apply to the precomputed kernel");
        const std::string path = resolve(get_string(k, "matrix", "kernel"), base_dir);
        return KernelSpec::precomputed_matrix(load_precomputed_kernel_csv(path), path);
    }
    if (k.contains("matrix")) throw InputError("kernel.matrix applies only to the precomputed kernel");
    KernelSpec spec;
    spec.family = family;
    if (family == KernelFamily::linear) {
        if (k.contains("gamma")) throw InputError("kernel.gamma does not apply to the linear kernel");
    } else {
        if (!k.contains("gamma")) throw InputError("kernel.gamma is required");
        spec.gamma = get_number(k, "gamma", "kernel");
    }
    validate(spec);
    return spec;
}

PairwiseLoss parse_loss(const Json& l) {
    reject_unknown(l, {"family", "h", "a"}, "loss");
    if (!l.contains("family")) throw InputError("loss.family is required");
    PairwiseLoss loss;
    loss.family = loss_family_from_string(get_string(l, "family", "loss"));
    const bool wants_h = loss.family == LossFamily::mee;
    const bool wants_a = loss.family == LossFamily::logistic_pairwise || loss.family == LossFamily::logistic_ranking;
    if (l.contains("h")) {
        if (!wants_h) throw InputError("loss.h applies only to mee");
        loss.h = get_number(l, "h", "loss");
    } else if (wants_h) {
        throw InputError("loss.h is required for mee");
    }
    if (l.contains("a")) {
        if (!wants_a) throw InputError("loss.a applies only to the logistic families");
        loss.a = get_number(l, "a", "loss");
    } else if (wants_a) {
        throw InputError("loss.a is required for " + to_string(loss.family));
    }
    validate(loss);
    return loss;
}

SolverOptions parse_solver(const Json& s) {
    reject_unknown(s, {"tol", "max_iter", "damping", "line_search", "mode", "warn_nonconvex", "shifted"}, "solver");
    SolverOptions opts;
    if (s.contains("tol")) opts.tol = get_number(s, "tol", "solver");
    if (s.contains("max_iter")) {
        const Json& v = s.at("max_iter");
        if (!v.is_number_integer()) throw InputError("solver.max_iter must be an integer");
        const auto m = v.get<long long>();
        if (m < 1 || m > 100000000) throw InputError("solver.max_iter out of range");
        opts.max_iter = static_cast<int>(m);
    }
    if (s.contains("damping")) opts.damping = get_number(s, "damping", "solver");
    if (s.contains("line_search")) opts.line_search = get_bool(s, "line_search", "solver");
    if (s.contains("mode")) opts.mode = solver_mode_from_string(get_string(s, "mode", "solver"));
    if (s.contains("warn_nonconvex")) opts.warn_nonconvex = get_bool(s, "warn_nonconvex", "solver");
    if (s.contains("shifted")) opts.shifted = get_bool(s, "shifted", "solver");
    validate(opts);
    return opts;
}

}  // namespace

RunConfig parse_config(const Json& doc, const std::string& base_dir) {
    try {
        reject_unknown(doc, {"kernel", "loss", "lambda", "solver", "seed", "output_dir"}, "config");
        for (const char* key : {"kernel", "loss", "lambda"}) {
            if (!doc.contains(key)) throw InputError(std::string("config.") + key + " is required");
        }
        RunConfig cfg;
        cfg.kernel = parse_kernel(doc.at("kernel"), base_dir);
        cfg.loss = parse_loss(doc.at("loss"));
        cfg.lambda = get_number(doc, "lambda", "config");
        if (!(cfg.lambda > 0.0)) throw InputError("config.lambda must be positive");
        if (doc.contains("solver")) cfg.solver = parse_solver(doc.at("solver"));
        if (doc.contains("seed")) {
            const Json& v = doc.at("seed");
            if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
                throw InputError("config.seed must be a nonnegative integer");
            }
            cfg.seed = v.get<std::uint64_t>();
        }
        if (doc.contains("output_dir")) cfg.output_dir = resolve(get_string(doc, "output_dir", "config"), base_dir);
        return cfg;
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("config: ") + e.what());
    }
}

RunConfig load_config(const std::string& path) {
    const fs::path parent = fs::path(path).parent_path();
    return parse_config(read_json_file(path), parent.empty() ? "." : parent.string());
}

Json number_or_inf(double value) {
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    if (std::isnan(value)) return nullptr;
    return value;
}

Json to_json(const Vector& v) {
    Json out = Json::array();
    for (Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

Json to_json(const Matrix& m) {
    Json out = Json::array();
    for (Index i = 0; i < m.rows(); ++i) {
        Json row = Json::array();
        for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        out.push_back(std::move(row));
    }
    return out;
}

Json to_json(const KernelSpec& kernel) {
    Json k;
    k["family"] = to_string(kernel.family);
    if (kernel.family == KernelFamily::precomputed) {
        k["matrix"] = kernel.matrix_path;
    } else if (kernel.family != KernelFamily::linear) {
        k["gamma"] = kernel.gamma;
    }
    return k;
}

Json to_json(const PairwiseLoss& loss) {
    Json l;
    l["family"] = to_string(loss.family);
    if (loss.family == LossFamily::mee) l["h"] = loss.h;
    if (loss.family == LossFamily::logistic_pairwise || loss.family == LossFamily::logistic_ranking) l["a"] = loss.a;
    return l;
}

Json to_json(const SolverOptions& opts) {
    return Json{{"tol", opts.tol},
                {"max_iter", opts.max_iter},
                {"damping", opts.damping},
                {"line_search", opts.line_search},
                {"mode", to_string(opts.mode)},
                {"warn_nonconvex", opts.warn_nonconvex},
                {"shifted", opts.shifted}};
}

Json to_json(const Diagnostics& diag) {
    return Json{{"method", diag.method},
                {"iterations", diag.iterations},
                {"final_residual", number_or_inf(diag.final_residual)},
                {"objective", number_or_inf(diag.objective)},
                {"converged", diag.converged},
                {"nonconvex_warning", diag.nonconvex_warning},
                {"best_effort", diag.best_effort}};
}

Json to_json(const LossConstants& lc) {
    return Json{{"lip", number_or_inf(lc.lip)},
                {"grad_bound", number_or_inf(lc.grad_bound)},
                {"hess_bound", number_or_inf(lc.hess_bound)},
                {"value_bound", number_or_inf(lc.value_bound)},
                {"convex", lc.convex},
                {"differentiable", lc.differentiable},
                {"twice_differentiable", lc.twice_differentiable}};
}

Json to_json(const BoundCheck& check) {
    Json j{{"name", check.name}, {"holds", check.holds}, {"skipped", check.skipped}};
    if (!check.skipped) {
        j["lhs"] = number_or_inf(check.lhs);
        j["rhs"] = number_or_inf(check.rhs);
    }
    j["note"] = check.note;
    return j;
}

Json model_to_json(const FittedModel& model) {
    Json j;
    j["format"] = "rpl-model";
    j["version"] = 1;
    j["kernel"] = to_json(model.kernel());
    j["loss"] = to_json(model.loss);
    j["lambda"] = model.lambda;
    j["shifted"] = model.shifted;
    j["anchors"] = to_json(model.function.anchors);
    j["alpha"] = to_json(model.alpha());
    j["diagnostics"] = to_json(model.diagnostics);
    return j;
}

FittedModel model_from_json(const Json& doc, const std::string& base_dir) {
    try {
        reject_unknown(doc,
                       {"format", "version", "kernel", "loss", "lambda", "shifted", "anchors", "alpha",
                        "diagnostics"},
                       "model");
        if (doc.value("format", std::string()) != "rpl-model") throw InputError("not a model file");
        if (doc.value("version", 0) != 1) throw InputError("unsupported model version");
        FittedModel model;
        model.function.kernel = parse_kernel(doc.at("kernel"), base_dir);
        model.loss = parse_loss(doc.at("loss"));
        model.lambda = get_number(doc, "lambda", "model");
        if (!(model.lambda > 0.0)) throw InputError("model.lambda must be positive");
        model.shifted = get_bool(doc, "shifted", "model");

        const Json& alpha = doc.at("alpha");
        const Json& anchors = doc.at("anchors");
        if (!alpha.is_array() || !anchors.is_array() || alpha.size() != anchors.size()) {
            throw InputError("model alpha and anchors must be arrays of equal length");
        }
        const auto n = static_cast<Index>(alpha.size());
        const Index d = n == 0 ? 0 : static_cast<Index>(anchors.at(0).size());
        model.function.alpha.resize(n);
        model.function.anchors.resize(n, d);
        for (Index i = 0; i < n; ++i) {
            const Json& row = anchors.at(static_cast<std::size_t>(i));
            if (!row.is_array() || static_cast<Index>(row.size()) != d) throw InputError("ragged anchor matrix");
            for (Index c = 0; c < d; ++c) {
                const Json& v = row.at(static_cast<std::size_t>(c));
                if (!v.is_number()) throw InputError("anchors must be numbers");
                model.function.anchors(i, c) = v.get<double>();
            }
            const Json& a = alpha.at(static_cast<std::size_t>(i));
            if (!a.is_number()) throw InputError("alpha must be numbers");
            model.function.alpha(i) = a.get<double>();
        }
        if (!model.function.alpha.allFinite() || !model.function.anchors.allFinite()) {
            throw InputError("model contains non-finite numbers");
        }

        const Json& dj = doc.at("diagnostics");
        if (!dj.is_object()) throw InputError("model.diagnostics must be an object");
        Diagnostics& diag = model.diagnostics;
        diag.method = dj.value("method", std::string());
        diag.iterations = dj.value("iterations", 0);
        diag.final_residual = dj.contains("final_residual") && dj.at("final_residual").is_number()
                                  ? dj.at("final_residual").get<double>()
                                  : 0.0;
        diag.objective = dj.contains("objective") && dj.at("objective").is_number() ? dj.at("objective").get<double>()
                                                                                     : 0.0;
        diag.converged = dj.value("converged", false);
        diag.nonconvex_warning = dj.value("nonconvex_warning", false);
        diag.best_effort = dj.value("best_effort", false);
        if (n > 0) model.gram = gram_matrix(model.kernel(), model.function.anchors);
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("model: ") + e.what());
    }
}

void save_model(const FittedModel& model, const std::string& path) {
    write_text_file(path, model_to_json(model).dump(2) + "\n");
}

FittedModel load_model(const std::string& path) {
    const fs::path parent = fs::path(path).parent_path();
    return model_from_json(read_json_file(path), parent.empty() ? "." : parent.string());
}

Dataset load_dataset(const std::string& path) {
    const CsvTable t = read_csv(path, /*has_header=*/true);
    const std::size_t cols = t.header.size();
    if (cols < 2 || t.header.back() != "y") throw InputError(path + ": header must be x1,...,xd,y");
    for (std::size_t c = 0; c + 1 < cols; ++c) {
        if (t.header[c] != "x" + std::to_string(c + 1)) {
            throw InputError(path + ": header column " + std::to_string(c + 1) + " must be 'x" +
                             std::to_string(c + 1) + "'");
        }
    }
    if (t.rows.empty()) throw InputError(path + ": dataset has no rows");
    Dataset data;
    const auto n = static_cast<Index>(t.rows.size());
    const auto d = static_cast<Index>(cols - 1);
    data.xs.resize(n, d);
    data.ys.resize(n);
    for (Index i = 0; i < n; ++i) {
        for (Index c = 0; c < d; ++c) data.xs(i, c) = t.rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
        data.ys(i) = t.rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(d)];
    }
    validate(data);
    return data;
}

Matrix load_points(const std::string& path, Index expected_dim) {
    const CsvTable t = read_csv(path, /*has_header=*/true);
    if (t.header.empty()) return Matrix(0, expected_dim < 0 ? 0 : expected_dim);
    std::size_t d = t.header.size();
    if (t.header.back() == "y") --d;
    for (std::size_t c = 0; c < d; ++c) {
        if (t.header[c] != "x" + std::to_string(c + 1)) {
            throw InputError(path + ": header must be x1,...,xd with an optional y column");
        }
    }
    if (d == 0) throw InputError(path + ": no input columns");
    if (expected_dim >= 0 && static_cast<Index>(d) != expected_dim) {
        throw InputError(path + ": inputs have dimension " + std::to_string(d) + ", model expects " +
                         std::to_string(expected_dim));
    }
    Matrix xs(static_cast<Index>(t.rows.size()), static_cast<Index>(d));
    for (Index i = 0; i < xs.rows(); ++i) {
        for (Index c = 0; c < xs.cols(); ++c) xs(i, c) = t.rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
    }
    return xs;
}

Json read_json_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return Json::parse(ss.str());
    } catch (const nlohmann::json::parse_error& e) {
        throw InputError(path + ": " + e.what());
    }
}

void write_text_file(const std::string& path, const std::string& text) {
    const fs::path parent = fs::path(path).parent_path();
    if (!parent.empty()) {
        std::error_code ec;
        fs::create_directories(parent, ec);
        if (ec) throw InputError("cannot create directory " + parent.string() + ": " + ec.message());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write " + path);
    out << text;
    if (!out) throw InputError("write failed for " + path);
}

}  // namespace rpl
