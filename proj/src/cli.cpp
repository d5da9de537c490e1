#include "rpl/cli.hpp"

#include "rpl/csv.hpp"
#include "rpl/io.hpp"
#include "rpl/robustness.hpp"

#include "CLI11.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>

namespace rpl {

namespace {

struct GlobalArgs {
    std::string config;
    std::string data;
    std::string out;
    std::optional<std::uint64_t> seed;
};

// Restores the warning target when a CLI call returns.
struct WarningRedirect {
    std::ostream* previous;
    explicit WarningRedirect(std::ostream& err) : previous(set_warning_stream(&err)) {}
    ~WarningRedirect() { set_warning_stream(previous); }
};

void require(const std::string& value, const std::string& flag) {
    if (value.empty()) throw InputError(flag + " is required");
}

void emit(const std::string& text, const std::string& path, std::ostream& out) {
    if (path.empty()) {
        out << text;
    } else {
        write_text_file(path, text);
    }
}

void emit_json(const Json& j, const std::string& path, std::ostream& out) { emit(j.dump(2) + "\n", path, out); }

// "x1,...,xd;y"
std::pair<Vector, double> parse_point(const std::string& text) {
    const auto semi = text.find(';');
    if (semi == std::string::npos) throw InputError("--point must look like \"x1,...,xd;y\"");
    const CsvTable xs = parse_csv(text.substr(0, semi) + "\n", false, "--point");
    const CsvTable ys = parse_csv(text.substr(semi + 1) + "\n", false, "--point");
    if (xs.rows.size() != 1 || ys.rows.size() != 1 || ys.rows[0].size() != 1) {
        throw InputError("--point must look like \"x1,...,xd;y\"");
    }
    Vector x(static_cast<Index>(xs.rows[0].size()));
    for (Index i = 0; i < x.size(); ++i) x(i) = xs.rows[0][static_cast<std::size_t>(i)];
    return {x, ys.rows[0][0]};
}

RunConfig config_with_seed(const GlobalArgs& g) {
    require(g.config, "--config");
    RunConfig cfg = load_config(g.config);
    if (g.seed) cfg.seed = *g.seed;
    return cfg;
}

Json header_json(const std::string& command, const RunConfig& cfg) {
    return Json{{"command", command},
                {"kernel", to_json(cfg.kernel)},
                {"loss", to_json(cfg.loss)},
                {"lambda", cfg.lambda}};
}

Json stats_json(const SummaryStats& s) {
    return Json{{"mean", number_or_inf(s.mean)},
                {"sd", number_or_inf(s.sd)},
                {"q05", number_or_inf(s.q05)},
                {"q95", number_or_inf(s.q95)}};
}

int cmd_fit(const GlobalArgs& g, bool oracle, std::ostream& out) {
    const RunConfig cfg = config_with_seed(g);
    require(g.data, "--data");
    const Dataset data = load_dataset(g.data);
    FittedModel model;
    if (oracle) {
        if (cfg.loss.family != LossFamily::squared) throw InputError("--oracle is only available for squared loss");
        model = fit_ls_closed_form(data, cfg.kernel, cfg.lambda);
    } else {
        model = fit(cfg.loss, data, cfg.kernel, cfg.lambda, cfg.solver);
    }
    const std::string dir = g.out.empty() ? cfg.output_dir : g.out;
    const std::string model_path = (std::filesystem::path(dir) / "model.json").string();
    const std::string report_path = (std::filesystem::path(dir) / "fit_report.json").string();
    save_model(model, model_path);

    Json report = header_json("fit", cfg);
    report["n"] = data.size();
    report["d"] = data.dim();
    report["solver"] = to_json(cfg.solver);
    report["loss_constants"] = to_json(loss_constants(cfg.loss));
    report["diagnostics"] = to_json(model.diagnostics);
    report["stationarity_residual"] = stationarity_residual(model, data);
    report["regularized_objective"] = regularized_objective(model, false);
    report["h_norm"] = std::sqrt(h_norm_sq(model.alpha(), model.gram));
    Json bounds = Json::array();
    for (const auto& b : a_priori_bounds(model)) bounds.push_back(to_json(b));
    report["bounds"] = bounds;
    write_text_file(report_path, report.dump(2) + "\n");

    out << "model: " << model_path << "\nreport: " << report_path << "\nconverged: "
        << (model.diagnostics.converged ? "true" : "false") << "\n";
    return model.diagnostics.converged ? kExitOk : kExitNonConvergence;
}

int cmd_predict(const GlobalArgs& g, const std::string& model_path, std::ostream& out) {
    require(model_path, "--model");
    require(g.data, "--data");
    const FittedModel model = load_model(model_path);
    const Matrix xs = load_points(g.data, model.function.anchors.cols());
    const Vector pred = xs.rows() == 0 ? Vector() : predict(model, xs);
    std::string text = "prediction\n";
    for (Index i = 0; i < pred.size(); ++i) text += format_double(pred(i)) + "\n";
    emit(text, g.out, out);
    return kExitOk;
}

FittedModel model_with_training(const std::string& model_path, const Dataset& data) {
    FittedModel model = load_model(model_path);
    if (model.function.anchors.rows() != data.size() || model.function.anchors != data.xs) {
        throw InputError("--data does not match the model's anchor points");
    }
    model.training = data;
    return model;
}

int cmd_influence(const GlobalArgs& g, const std::string& model_path, const std::string& point, std::ostream& out) {
    require(model_path, "--model");
    require(g.data, "--data");
    require(point, "--point");
    const Dataset data = load_dataset(g.data);
    const FittedModel model = model_with_training(model_path, data);
    const auto [x0, y0] = parse_point(point);
    const InfluenceResult r = influence_function(model, x0, y0);
    Json j{{"command", "influence"},
           {"point", Json{{"x", to_json(x0)}, {"y", y0}}},
           {"h_norm", r.h_norm},
           {"t_norm", r.t_norm},
           {"operator_residual", r.operator_residual},
           {"bound", r.t_norm / (2.0 * model.lambda)},
           {"bound_2lambda_check", r.bound_2lambda_check},
           {"anchors", to_json(r.direction.anchors)},
           {"direction", to_json(r.direction.alpha)}};
    emit_json(j, g.out, out);
    return r.bound_2lambda_check ? kExitOk : kExitInvariantFailure;
}

int cmd_sc(const GlobalArgs& g, const std::string& point, const std::string& target, std::ostream& out) {
    const RunConfig cfg = config_with_seed(g);
    require(g.data, "--data");
    require(point, "--point");
    const Dataset data = load_dataset(g.data);
    const auto [x0, y0] = parse_point(point);
    const SensitivityResult r =
        sensitivity_curve(data, x0, y0, cfg.loss, cfg.kernel, cfg.lambda, sc_target_from_string(target), cfg.solver);
    Json j = header_json("sc", cfg);
    j["target"] = to_string(r.target);
    j["point"] = Json{{"x", to_json(x0)}, {"y", y0}};
    j["n"] = r.n;
    j["value"] = r.value;
    j["bound"] = number_or_inf(r.bound);
    const bool holds = r.target != ScTarget::risk || std::abs(r.value) <= r.bound + 1e-8;
    j["holds"] = holds;
    j["reference"] = r.reference;
    j["augmented"] = r.augmented;
    j["converged"] = r.converged;
    j["convention"] = r.convention;
    emit_json(j, g.out, out);
    if (!holds) return kExitInvariantFailure;
    return r.converged ? kExitOk : kExitNonConvergence;
}

int cmd_maxbias(const GlobalArgs& g, const std::vector<double>& eps, const std::string& grid_path, std::ostream& out) {
    const RunConfig cfg = config_with_seed(g);
    require(g.data, "--data");
    const Dataset data = load_dataset(g.data);
    const Dataset grid = grid_path.empty() ? default_contamination_grid(data) : load_dataset(grid_path);
    Json j = header_json("maxbias", cfg);
    j["grid"] = grid_path.empty() ? "default" : grid_path;
    Json reports = Json::array();
    bool all_hold = true;
    for (const double e : eps) {
        const MaxbiasReport r = maxbias_probe(data, cfg.loss, cfg.kernel, cfg.lambda, e, grid, cfg.solver);
        all_hold = all_hold && r.holds;
        reports.push_back(Json{{"epsilon", r.epsilon},
                               {"worst_delta", r.worst_delta},
                               {"bound", r.bound},
                               {"holds", r.holds},
                               {"contamination_argmax", Json{{"x", to_json(r.argmax_x)}, {"y", r.argmax_y}}},
                               {"grid_size", r.grid_size},
                               {"nonconverged", r.nonconverged}});
    }
    j["reports"] = reports;
    j["all_hold"] = all_hold;
    emit_json(j, g.out, out);
    return all_hold ? kExitOk : kExitInvariantFailure;
}

int cmd_bootstrap(const GlobalArgs& g, int resamples, const std::string& probes_path, bool identity,
                  std::ostream& out) {
    const RunConfig cfg = config_with_seed(g);
    require(g.data, "--data");
    if (resamples < 1) throw InputError("--B must be at least 1");
    const Dataset data = load_dataset(g.data);
    const Matrix probes = probes_path.empty() ? Matrix(0, data.dim()) : load_points(probes_path, data.dim());
    Resampler resampler;
    if (identity) {
        resampler = [](std::size_t, Index n) {
            std::vector<Index> idx(static_cast<std::size_t>(n));
            std::iota(idx.begin(), idx.end(), Index{0});
            return idx;
        };
    }
    const BootstrapReport r = bootstrap_distribution(data, cfg.loss, cfg.kernel, cfg.lambda,
                                                     static_cast<std::size_t>(resamples), cfg.seed, probes,
                                                     cfg.solver, Vector(), resampler);
    Json j = header_json("bootstrap", cfg);
    j["B"] = r.resamples;
    j["seed"] = r.seed;
    j["converged"] = r.converged;
    j["nonconverged"] = r.nonconverged;
    j["h_norm"] = stats_json(r.h_norm);
    Json pj = Json::array();
    for (Index i = 0; i < probes.rows(); ++i) {
        Json p = stats_json(r.predictions[static_cast<std::size_t>(i)]);
        p["x"] = to_json(Vector(probes.row(i).transpose()));
        pj.push_back(p);
    }
    j["probes"] = pj;
    emit_json(j, g.out, out);
    return r.converged > 0 ? kExitOk : kExitNonConvergence;
}

// ---- check ------------------------------------------------------------------

BoundCheck skipped(const std::string& name, const std::string& why) { return {name, 0.0, 0.0, true, true, why}; }

double coefficient_objective(const FittedModel& m, const Dataset& data, const Vector& alpha) {
    return weighted_risk(m.loss, data, Vector(), m.gram * alpha) + m.lambda * alpha.dot(m.gram * alpha);
}

Vector coefficient_gradient(const FittedModel& m, const Dataset& data, const Vector& alpha) {
    return m.gram * risk_gradient_coeffs(m.loss, data, m.gram, alpha, m.lambda).residual_dir;
}

std::vector<BoundCheck> run_invariants(const FittedModel& model, const Dataset& data, const SolverOptions& opts,
                                       std::uint64_t seed, const std::string& fault) {
    std::vector<BoundCheck> out;
    LossConstants lc = loss_constants(model.loss);
    if (fault == "grad_bound") lc.grad_bound = std::isfinite(lc.grad_bound) ? 1e-3 * lc.grad_bound : 1e-3;
    if (fault == "lip") lc.lip = std::isfinite(lc.lip) ? 1e-3 * lc.lip : 1e-3;
    if (fault == "value_bound") lc.value_bound = std::isfinite(lc.value_bound) ? 1e-3 * lc.value_bound : 1e-3;

    std::mt19937_64 gen(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const Index n = data.size();
    Vector probe_alpha(n);
    for (Index i = 0; i < n; ++i) probe_alpha(i) = model.alpha()(i) + normal(gen) / static_cast<double>(n);

    if (!lc.differentiable) {
        out.push_back(skipped("gradient_fd", "loss is not differentiable"));
    } else {
        const Vector analytic = coefficient_gradient(model, data, probe_alpha);
        Vector numeric(n);
        for (Index i = 0; i < n; ++i) {
            const double h = 1e-6 * std::max(1.0, std::abs(probe_alpha(i)));
            Vector up = probe_alpha, dn = probe_alpha;
            up(i) += h;
            dn(i) -= h;
            numeric(i) = (coefficient_objective(model, data, up) - coefficient_objective(model, data, dn)) / (2.0 * h);
        }
        const double err = (analytic - numeric).norm() / std::max(analytic.norm(), 1e-8);
        out.push_back({"gradient_fd", err, 1e-5, err <= 1e-5, false, "relative error vs central differences"});
    }

    if (!lc.twice_differentiable) {
        out.push_back(skipped("hessian_fd", "loss is not twice differentiable"));
    } else {
        const Vector f = model.gram * probe_alpha;
        Matrix op = pair_hessian_matrix(model.loss, data, Vector(), f) * model.gram;
        op.diagonal().array() += 2.0 * model.lambda;
        double worst = 0.0;
        for (int trial = 0; trial < 3; ++trial) {
            Vector v(n);
            for (Index i = 0; i < n; ++i) v(i) = normal(gen);
            v /= v.norm();
            const double h = 1e-5;
            const Vector numeric = (coefficient_gradient(model, data, probe_alpha + h * v) -
                                    coefficient_gradient(model, data, probe_alpha - h * v)) /
                                   (2.0 * h);
            const Vector analytic = model.gram * (op * v);
            worst = std::max(worst, (analytic - numeric).norm() / std::max(analytic.norm(), 1e-8));
        }
        out.push_back({"hessian_fd", worst, 1e-4, worst <= 1e-4, false, "relative error vs central differences"});
    }

    // pair-level checks at the fitted predictions and at random arguments
    const Vector fitted = model.gram * model.alpha();
    const double yspan = std::max(1.0, data.ys.maxCoeff() - data.ys.minCoeff());
    std::vector<std::array<double, 4>> args;
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < n; ++j) args.push_back({data.ys(i), data.ys(j), fitted(i), fitted(j)});
    }
    std::uniform_real_distribution<double> unif(-3.0 * yspan, 3.0 * yspan);
    for (int k = 0; k < 1000; ++k) args.push_back({unif(gen), unif(gen), unif(gen), unif(gen)});

    double max_d = 0.0, max_h = 0.0, max_v = 0.0, min_eig = kInf;
    for (const auto& a : args) {
        const PairTerms t = pair_terms(model.loss, a[0], a[1], a[2], a[3]);
        max_d = std::max({max_d, std::abs(t.d5), std::abs(t.d6)});
        max_v = std::max(max_v, t.value);
        if (lc.twice_differentiable) {
            max_h = std::max({max_h, std::abs(t.h55), std::abs(t.h56), std::abs(t.h66)});
            Eigen::Matrix2d hm;
            hm << t.h55, t.h56, t.h56, t.h66;
            min_eig = std::min(min_eig, Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(hm).eigenvalues()(0));
        }
    }

    if (!lc.convex || !lc.twice_differentiable) {
        out.push_back(skipped("hessian_psd", lc.convex ? "loss is not twice differentiable" : "loss is not convex"));
    } else {
        out.push_back({"hessian_psd", min_eig, -1e-12, min_eig >= -1e-12, false, "smallest pair-Hessian eigenvalue"});
    }

    const double rel = 1.0 + 1e-12;
    const bool d_ok = max_d <= lc.grad_bound * rel && max_d <= lc.lip * rel;
    out.push_back({"derivative_bounds", max_d, std::min(lc.grad_bound, lc.lip), d_ok, false,
                   "max |D5 L|, |D6 L| against grad_bound and lip"});
    if (lc.twice_differentiable) {
        out.push_back({"second_derivative_bound", max_h, lc.hess_bound, max_h <= lc.hess_bound * rel, false,
                       "max |D_i D_j L| against hess_bound"});
    } else {
        out.push_back(skipped("second_derivative_bound", "loss is not twice differentiable"));
    }
    out.push_back({"value_bound", max_v, lc.value_bound, max_v <= lc.value_bound * rel, false, "max L against c"});

    const double resid = stationarity_residual(model, data);
    if (model.diagnostics.best_effort) {
        out.push_back({"convergence_residual", model.diagnostics.final_residual, opts.tol, model.diagnostics.converged,
                       false, "subgradient path: objective stall over the last window"});
    } else {
        out.push_back({"convergence_residual", resid, opts.tol, model.diagnostics.converged && resid <= opts.tol,
                       false, "H-seminorm of g + 2 lambda alpha"});
    }

    for (const auto& b : a_priori_bounds(model)) out.push_back(b);

    const double shifted = regularized_objective(model, true);
    out.push_back({"shifted_risk_nonpositive", shifted, 0.0, shifted <= 1e-10, false,
                   "R_{L*}(f) + lambda ||f||^2 <= value at f = 0"});
    return out;
}

int cmd_check(const GlobalArgs& g, const std::string& fault, std::ostream& out, std::ostream& err) {
    const RunConfig cfg = config_with_seed(g);
    require(g.data, "--data");
    const Dataset data = load_dataset(g.data);
    const FittedModel model = fit(cfg.loss, data, cfg.kernel, cfg.lambda, cfg.solver);
    const std::vector<BoundCheck> checks = run_invariants(model, data, cfg.solver, cfg.seed, fault);
    Json j = header_json("check", cfg);
    Json list = Json::array();
    bool all = true;
    for (const auto& c : checks) {
        list.push_back(to_json(c));
        if (!c.skipped && !c.holds) {
            all = false;
            err << "invariant failed: " << c.name << "\n";
        }
    }
    j["invariants"] = list;
    j["all_pass"] = all;
    emit_json(j, g.out, out);
    return all ? kExitOk : kExitInvariantFailure;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    WarningRedirect redirect(err);
    CLI::App app{"Regularized pairwise learning in a reproducing kernel Hilbert space", "rpl"};
    app.require_subcommand(1);
    app.fallthrough();

    GlobalArgs g;
    std::uint64_t seed = 0;
    app.add_option("--config", g.config, "run configuration (JSON)");
    app.add_option("--data", g.data, "dataset CSV with header x1,...,xd,y");
    app.add_option("--out", g.out, "output file (output directory for fit)");
    auto* seed_opt = app.add_option("--seed", seed, "overrides the config seed");

    auto* fit_cmd = app.add_subcommand("fit", "fit a model; writes model.json and fit_report.json");
    bool oracle = false;
    fit_cmd->add_flag("--oracle", oracle, "closed-form solve (squared loss only)");

    auto* predict_cmd = app.add_subcommand("predict", "predict at the inputs of --data");
    std::string model_path;
    predict_cmd->add_option("--model", model_path, "model JSON")->required();

    auto* influence_cmd = app.add_subcommand("influence", "influence function at a point");
    std::string point;
    influence_cmd->add_option("--model", model_path, "model JSON")->required();
    influence_cmd->add_option("--point", point, "\"x1,...,xd;y\"")->required();

    auto* sc_cmd = app.add_subcommand("sc", "sensitivity curve at a point");
    std::string target = "risk";
    sc_cmd->add_option("--point", point, "\"x1,...,xd;y\"")->required();
    sc_cmd->add_option("--target", target, "risk or estimator")->check(CLI::IsMember({"risk", "estimator"}));

    auto* maxbias_cmd = app.add_subcommand("maxbias", "maximum-bias probe over a contamination grid");
    std::vector<double> eps{0.05, 0.1, 0.2};
    std::string grid_path;
    maxbias_cmd->add_option("--eps", eps, "comma-separated contamination levels")->delimiter(',');
    maxbias_cmd->add_option("--grid", grid_path, "contamination grid CSV (x1,...,xd,y)");

    auto* bootstrap_cmd = app.add_subcommand("bootstrap", "bootstrap distribution of the fitted function");
    int resamples = 100;
    std::string probes_path;
    bool identity = false;
    bootstrap_cmd->add_option("--B", resamples, "number of resamples");
    bootstrap_cmd->add_option("--probes", probes_path, "probe inputs CSV (x1,...,xd)");
    bootstrap_cmd->add_flag("--test-identity-resample", identity)->group("");

    auto* check_cmd = app.add_subcommand("check", "run the invariant suite on a fitted problem");
    std::string fault;
    check_cmd->add_option("--inject-fault", fault)->group("");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitInputError;
    }
    if (seed_opt->count() > 0) g.seed = seed;

    try {
        if (fit_cmd->parsed()) return cmd_fit(g, oracle, out);
        if (predict_cmd->parsed()) return cmd_predict(g, model_path, out);
        if (influence_cmd->parsed()) return cmd_influence(g, model_path, point, out);
        if (sc_cmd->parsed()) return cmd_sc(g, point, target, out);
        if (maxbias_cmd->parsed()) return cmd_maxbias(g, eps, grid_path, out);
        if (bootstrap_cmd->parsed()) return cmd_bootstrap(g, resamples, probes_path, identity, out);
        if (check_cmd->parsed()) return cmd_check(g, fault, out, err);
    } catch (const InputError& e) {
        err << "error: " << e.what() << "\n";
        return kExitInputError;
    } catch (const UnsupportedOperation& e) {
        err << "error: " << e.what() << "\n";
        return kExitInputError;
    } catch (const NumericFailure& e) {
        err << "error: " << e.what() << "\n";
        return kExitNonConvergence;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitInputError;
    }
    return kExitInputError;
}

}  // namespace rpl
