#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <Eigen/Dense>
#include <fftw3.h>
#include <json.hpp>

#include "sedsim/harness.hpp"
#include "sedsim/io.hpp"
#include "sedsim/linear_model.hpp"
#include "sedsim/point_process.hpp"
#include "sedsim/statistics.hpp"
#include "sedsim/stokes_solver.hpp"
#include "sedsim/torus.hpp"
#include "sedsim/verify.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Invocation {
    std::string config_path;
    std::string out_dir = "runs";
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
};

json load_effective_config(const Invocation& inv) {
    json cfg = inv.config_path.empty() ? json::object() : sedsim::read_json_file(inv.config_path);
    for (const auto& ov : inv.overrides) {
        const auto eq = ov.find('=');
        if (eq == std::string::npos || eq == 0)
            throw std::invalid_argument("--set expects dotted.key=value, got: " + ov);
        const std::string key = ov.substr(0, eq);
        const std::string val = ov.substr(eq + 1);
        json* node = &cfg;
        std::size_t pos = 0;
        while (true) {
            const std::size_t dot = key.find('.', pos);
            const std::string part =
                key.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
            if (part.empty()) throw std::invalid_argument("--set key has an empty segment: " + ov);
            if (dot == std::string::npos) {
                json parsed = json::parse(val, nullptr, false);
                (*node)[part] = parsed.is_discarded() ? json(val) : parsed;
                break;
            }
            node = &((*node)[part]);
            pos = dot + 1;
        }
    }
    return cfg;
}

sedsim::TorusDomain domain_from_json(const json& j) {
    return sedsim::TorusDomain(j.at("d").get<int>(), j.at("L").get<double>(),
                               j.at("n_grid").get<int>());
}

sedsim::EnsembleSpec ensemble_from_json(const json& j, std::optional<std::uint64_t> seed) {
    sedsim::EnsembleSpec s;
    s.kind = sedsim::process_kind_from_name(j.at("kind").get<std::string>());
    s.rho = j.value("rho", 0.0);
    s.lambda_target = j.value("lambda_target", 0.0);
    s.spacing = j.value("spacing", 0.0);
    s.u_max = j.value("u_max", 0.0);
    s.delta = j.value("delta", 0.0);
    s.realizations = j.value("realizations", 1);
    s.master_seed = j.value("master_seed", std::uint64_t{1});
    if (seed) s.master_seed = *seed;
    return s;
}

Eigen::VectorXd vector_from_json(const json& j) {
    Eigen::VectorXd v(static_cast<int>(j.size()));
    for (int i = 0; i < v.size(); ++i) v(i) = j.at(i).get<double>();
    return v;
}

Eigen::VectorXd default_gravity(int d) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(d);
    e(d - 1) = -1.0;
    return e;
}

json diagnostics_to_json(const sedsim::SolverDiagnostics& diag) {
    return json{{"iterations", diag.iterations},
                {"constraint_rel", diag.constraint_rel},
                {"converged", diag.converged},
                {"wall_seconds", diag.wall_seconds},
                {"residual_history", diag.residual_history}};
}

// ---------------------------------------------------------------------------
int cmd_sample(const Invocation& inv, const json& cfg, json& log) {
    const sedsim::TorusDomain dom = domain_from_json(cfg.at("domain"));
    const sedsim::EnsembleSpec spec = ensemble_from_json(cfg.at("ensemble"), inv.seed);
    const auto ensemble = sedsim::sample_ensemble_all(spec, dom);

    fs::create_directories(fs::path(inv.out_dir) / "configs");
    json rows = json::array();
    int written = 0;
    for (std::size_t i = 0; i < ensemble.size(); ++i) {
        const auto& pc = ensemble[i];
        if (spec.kind != sedsim::ProcessKind::poisson) {
            try {
                pc.require_hardcore();
            } catch (const std::exception& e) {
                std::cerr << "hardcore post-validation failed on realization " << i << ": "
                          << e.what() << "\n";
                log["error"] = std::string("hardcore post-validation: ") + e.what();
                return 4;
            }
        }
        char name[64];
        std::snprintf(name, sizeof name, "config_%05zu.json", i);
        sedsim::save_configuration(pc, (fs::path(inv.out_dir) / "configs" / name).string());
        ++written;
        json row{{"index", i},
                 {"count", pc.count()},
                 {"intensity", pc.intensity()},
                 {"volume_fraction", pc.volume_fraction()}};
        row["min_distance"] =
            pc.count() >= 2 ? json(sedsim::min_pairwise_distance(pc)) : json(nullptr);
        rows.push_back(row);
    }
    double mean_count = 0.0;
    for (const auto& pc : ensemble) mean_count += pc.count();
    mean_count /= static_cast<double>(ensemble.size());
    json summary{{"kind", sedsim::process_kind_name(spec.kind)},
                 {"realizations", written},
                 {"mean_count", mean_count},
                 {"rows", rows}};
    sedsim::write_json_file((fs::path(inv.out_dir) / "sample_summary.json").string(), summary);
    log["files_written"] = written;
    std::cout << "wrote " << written << " configurations (mean count " << mean_count << ") to "
              << inv.out_dir << "/configs\n";
    return 0;
}

// ---------------------------------------------------------------------------
std::vector<sedsim::ParticleConfiguration> load_stored_ensemble(const std::string& dir) {
    if (!fs::is_directory(dir))
        throw std::invalid_argument("stats: input_dir does not exist: " + dir);
    std::vector<std::string> paths;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("config_", 0) == 0 && entry.path().extension() == ".json")
            paths.push_back(entry.path().string());
    }
    std::sort(paths.begin(), paths.end());
    if (paths.empty()) throw std::invalid_argument("stats: no config_*.json under " + dir);
    std::vector<sedsim::ParticleConfiguration> ensemble;
    ensemble.reserve(paths.size());
    for (const auto& p : paths) ensemble.push_back(sedsim::load_configuration(p));
    return ensemble;
}

int cmd_stats(const Invocation& inv, const json& cfg, json& log) {
    const auto ensemble = load_stored_ensemble(cfg.at("input_dir").get<std::string>());
    const sedsim::TorusDomain& dom = ensemble.front().domain;
    const std::vector<std::string> all = {"g2", "structure_factor", "number_variance", "metric"};
    const std::vector<std::string> wanted = cfg.value("estimators", all);
    fs::create_directories(inv.out_dir);
    json summary;
    summary["realizations"] = ensemble.size();

    for (const auto& est : wanted) {
        if (est == "g2") {
            std::vector<double> edges;
            if (cfg.contains("g2_bin_edges")) {
                edges = cfg.at("g2_bin_edges").get<std::vector<double>>();
            } else {
                const int nb = std::max<int>(2, std::min<int>(12, static_cast<int>(dom.L / (8.0 * dom.h()))));
                for (int b = 0; b <= nb; ++b) edges.push_back(dom.L / 4.0 * b / nb);
            }
            const auto g2 = sedsim::estimate_pair_correlation(ensemble, edges);
            std::vector<double> lo(edges.begin(), edges.end() - 1), hi(edges.begin() + 1, edges.end());
            sedsim::write_csv((fs::path(inv.out_dir) / "g2.csv").string(),
                              {{"r_lo", lo}, {"r_hi", hi}, {"g2", g2.g2}, {"stderr", g2.stderrs}});
            summary["g2_intensity"] = g2.intensity;
        } else if (est == "structure_factor") {
            const double k_max = cfg.value("k_max", 2.0 * std::numbers::pi / dom.L * 4.01);
            const auto sf = sedsim::estimate_structure_factor(ensemble, k_max);
            std::vector<double> deg(sf.degeneracy.begin(), sf.degeneracy.end());
            sedsim::write_csv(
                (fs::path(inv.out_dir) / "structure_factor.csv").string(),
                {{"k", sf.k_mag}, {"s", sf.s}, {"stderr", sf.stderrs}, {"degeneracy", deg}});
        } else if (est == "number_variance") {
            std::vector<double> radii;
            if (cfg.contains("radii")) {
                radii = cfg.at("radii").get<std::vector<double>>();
            } else {
                for (double f : {0.29, 0.41, 0.59, 0.78, 0.97}) radii.push_back(dom.L / 4.0 * f);
            }
            const auto nv = sedsim::number_variance_curve(ensemble, radii);
            sedsim::write_csv(
                (fs::path(inv.out_dir) / "number_variance.csv").string(),
                {{"radius", nv.radii}, {"variance", nv.variance}, {"stderr", nv.stderrs}});
            summary["number_variance_exponent"] = nv.fit.exponent;
            summary["number_variance_exponent_stderr"] = nv.fit.exponent_stderr;
        } else if (est == "metric") {
            const auto metric = sedsim::hyperuniformity_metric(ensemble);
            summary["hyperuniformity_metric"] = metric.value;
            summary["hyperuniformity_metric_stderr"] = metric.stderr_;
        } else {
            throw std::invalid_argument("stats: unknown estimator " + est);
        }
    }
    sedsim::write_json_file((fs::path(inv.out_dir) / "stats_summary.json").string(), summary);
    log["estimators"] = wanted;
    std::cout << "estimators " << json(wanted).dump() << " written to " << inv.out_dir << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
int cmd_solve(const Invocation& inv, const json& cfg, json& log) {
    sedsim::ParticleConfiguration pc{sedsim::TorusDomain(2, 8.0, 64), {}, 1.0, 0.1};
    if (cfg.contains("config_file")) {
        pc = sedsim::load_configuration(cfg.at("config_file").get<std::string>());
    } else if (cfg.contains("centers")) {
        pc.domain = domain_from_json(cfg.at("domain"));
        pc.delta = cfg.value("delta", 0.1);
        for (const auto& c : cfg.at("centers")) {
            sedsim::Point p(pc.domain.d);
            for (int a = 0; a < pc.domain.d; ++a) p(a) = c.at(a).get<double>();
            pc.centers.push_back(p);
        }
    } else {
        pc.domain = domain_from_json(cfg.at("domain"));
        pc = sedsim::sample_ensemble(ensemble_from_json(cfg.at("ensemble"), inv.seed), pc.domain,
                                     cfg.value("index", std::uint64_t{0}));
    }
    const int n_grid = cfg.value("n_grid", pc.domain.n_grid);
    const Eigen::VectorXd e =
        cfg.contains("e") ? vector_from_json(cfg.at("e")) : default_gravity(pc.domain.d);
    const double tol = cfg.value("tol", 1e-8);
    const std::string method = cfg.value("method", "direct");
    fs::create_directories(inv.out_dir);

    sedsim::SuspensionSolution sol{pc.domain, pc, e, 0.0, 0.0,
                                   sedsim::SpectralField(pc.domain, 1),
                                   sedsim::SpectralField(pc.domain, 1), {}, {}, {}};
    try {
        if (method == "direct") {
            sol = sedsim::solve_sedimentation(pc.domain, pc, e, n_grid, tol,
                                              cfg.value("max_iterations", 5000));
        } else if (method == "reflections") {
            const auto outcome = sedsim::solve_by_reflections(pc.domain, pc, e, n_grid,
                                                              cfg.value("reflection_tol", 1e-6),
                                                              cfg.value("max_sweeps", 200));
            log["reflection_sweeps"] = outcome.report.sweeps;
            log["reflection_diffs"] = outcome.report.sweep_diffs;
            if (!outcome.solution.has_value()) {
                std::cerr << "reflections did not converge after " << outcome.report.sweeps
                          << " sweeps\n";
                log["error"] = "reflections did not converge";
                return 3;
            }
            sol = *outcome.solution;
        } else {
            throw std::invalid_argument("solve: method must be direct or reflections");
        }
    } catch (const sedsim::SolverError& e) {
        log["error"] = e.what();
        log["diagnostics"] = diagnostics_to_json(e.diagnostics);
        std::cerr << "solver failure: " << e.what() << "\n";
        return 3;
    }

    const double energy_residual = sedsim::check_energy_identity(sol);
    log["energy_identity_residual"] = energy_residual;
    json settling = nullptr;
    if (pc.count() > 0) {
        const auto id = sedsim::settling_identity(sol);
        settling = json{{"lhs", id.lhs}, {"rhs", id.rhs}, {"gap", id.gap}};
    }
    log["settling_identity"] = settling;

    json vel = json::array(), ang = json::array();
    for (const auto& v : sol.velocities) vel.push_back(std::vector<double>(v.data(), v.data() + v.size()));
    for (const auto& w : sol.angular) ang.push_back(std::vector<double>(w.data(), w.data() + w.size()));
    json summary{{"alpha", sol.alpha},
                 {"lambda_grid", sol.lambda_grid},
                 {"n_grid", n_grid},
                 {"velocities", vel},
                 {"angular", ang},
                 {"energy_identity_residual", energy_residual},
                 {"settling_identity", settling},
                 {"diagnostics", diagnostics_to_json(sol.diagnostics)}};
    sedsim::write_json_file((fs::path(inv.out_dir) / "solution.json").string(), summary);
    if (cfg.value("export_fields", true)) {
        sedsim::save_field(sol.phi, (fs::path(inv.out_dir) / "phi").string());
        sedsim::save_field(sol.pressure, (fs::path(inv.out_dir) / "pressure").string());
    }
    std::cout << "solved " << pc.count() << " particles on n=" << n_grid
              << ", energy identity residual " << energy_residual << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
int cmd_sweep(const Invocation& inv, const json& cfg, json& log) {
    const json& ex = cfg.at("experiment");
    sedsim::ExperimentConfig ec;
    ec.d = ex.value("d", 3);
    ec.model = sedsim::model_kind_from_name(ex.value("model", std::string("linear")));
    ec.ensemble = ensemble_from_json(ex.at("ensemble"), inv.seed);
    ec.lengths = ex.at("lengths").get<std::vector<double>>();
    ec.cells_per_unit = ex.value("cells_per_unit", 4);
    if (ec.model != sedsim::ModelKind::scalar_proxy)
        ec.e = ex.contains("e") ? vector_from_json(ex.at("e")) : default_gravity(ec.d);
    ec.tol = ex.value("tol", 1e-8);
    ec.failure_cap = ex.value("failure_cap", 0.05);
    ec.workers = inv.workers.value_or(ex.value("workers", 1));
    ec.out_dir = inv.out_dir;

    const auto results = sedsim::scaling_sweep(ec);
    json fits;
    for (const auto& [name, res] : results) {
        fits[name] = {{"exponent", res.power_fit.exponent},
                      {"exponent_stderr", res.power_fit.exponent_stderr},
                      {"r_squared", res.power_fit.r_squared},
                      {"log_slope", res.value_sq_log_fit.slope},
                      {"log_r_squared", res.value_sq_log_fit.r_squared}};
        std::cout << name << ": ~ L^" << res.power_fit.exponent << " (R^2 "
                  << res.power_fit.r_squared << "), points " << res.points.size() << "\n";
    }
    log["fits"] = fits;
    return 0;
}

// ---------------------------------------------------------------------------
int cmd_verify(const Invocation& inv, const json& cfg, json& log) {
    const json vc = cfg.value("verify", json::object());
    sedsim::VerifyOptions opts;
    opts.master_seed = inv.seed.value_or(vc.value("master_seed", std::uint64_t{20260814}));
    opts.corrupt_tol = vc.value("corrupt_tol", 0.0);
    opts.workers = inv.workers.value_or(vc.value("workers", 1));
    if (vc.value("keep_artifacts", false)) opts.out_dir = inv.out_dir + "/artifacts";

    std::vector<int> criteria;
    if (cfg.contains("criteria"))
        criteria = cfg.at("criteria").get<std::vector<int>>();
    else
        for (int k = 1; k <= 10; ++k) criteria.push_back(k);

    fs::create_directories(inv.out_dir);
    json report = json::array();
    bool ok = true;
    for (int k : criteria) {
        const auto checks = sedsim::run_criterion(k, opts);
        bool crit_ok = sedsim::all_pass(checks);
        ok = ok && crit_ok;
        for (const auto& c : checks) {
            std::cout << sedsim::format_check_line(c) << "\n";
            report.push_back(json{{"criterion", k},
                                  {"name", c.name},
                                  {"pass", c.pass},
                                  {"measured", c.measured},
                                  {"threshold", c.threshold},
                                  {"detail", c.detail}});
        }
        std::cout << "criterion " << k << ": " << (crit_ok ? "PASS" : "FAIL") << "\n";
    }
    sedsim::write_json_file((fs::path(inv.out_dir) / "verify_report.json").string(), report);
    log["all_pass"] = ok;
    std::cout << (ok ? "all checks passed" : "some checks FAILED") << "\n";
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Periodic-torus Stokes sedimentation toolkit"};
    app.require_subcommand(1);
    Invocation inv;
    app.add_option("--config", inv.config_path, "JSON configuration file");
    app.add_option("--out", inv.out_dir, "output directory (default: runs)");
    app.add_option("--seed", inv.seed, "master seed override");
    app.add_option("--set", inv.overrides, "dotted.key=value config override (repeatable)");
    app.add_option("--workers", inv.workers, "worker threads")->envname("SEDSIM_WORKERS");

    CLI::App* sub_sample = app.add_subcommand("sample", "draw and store point configurations");
    CLI::App* sub_stats = app.add_subcommand("stats", "estimators over stored configurations");
    CLI::App* sub_solve = app.add_subcommand("solve", "one constrained Stokes solve");
    CLI::App* sub_sweep = app.add_subcommand("sweep", "scaling sweep over box sizes");
    CLI::App* sub_verify = app.add_subcommand("verify", "run the acceptance battery");
    for (CLI::App* s : {sub_sample, sub_stats, sub_solve, sub_sweep, sub_verify}) s->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    json log;
    log["argv"] = std::vector<std::string>(argv + 1, argv + argc);
    log["versions"] = {{"record_schema", 1},
                       {"result_schema", 1},
                       {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                                     std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                     std::to_string(EIGEN_MINOR_VERSION)},
                       {"fftw", std::string(fftw_version)}};
    const auto t0 = std::chrono::steady_clock::now();

    int rc = 0;
    try {
        const json cfg = load_effective_config(inv);
        log["effective_config"] = cfg;
        log["seed_override"] = inv.seed ? json(*inv.seed) : json(nullptr);
        if (app.got_subcommand(sub_sample)) {
            log["subcommand"] = "sample";
            rc = cmd_sample(inv, cfg, log);
        } else if (app.got_subcommand(sub_stats)) {
            log["subcommand"] = "stats";
            rc = cmd_stats(inv, cfg, log);
        } else if (app.got_subcommand(sub_solve)) {
            log["subcommand"] = "solve";
            rc = cmd_solve(inv, cfg, log);
        } else if (app.got_subcommand(sub_sweep)) {
            log["subcommand"] = "sweep";
            rc = cmd_sweep(inv, cfg, log);
        } else {
            log["subcommand"] = "verify";
            rc = cmd_verify(inv, cfg, log);
        }
    } catch (const sedsim::SolverError& e) {
        log["error"] = e.what();
        log["diagnostics"] = diagnostics_to_json(e.diagnostics);
        std::cerr << "solver failure: " << e.what() << "\n";
        rc = 3;
    } catch (const sedsim::SweepFailure& e) {
        log["error"] = e.what();
        std::cerr << "sweep failure: " << e.what() << "\n";
        rc = 3;
    } catch (const std::exception& e) {
        log["error"] = e.what();
        std::cerr << "config error: " << e.what() << "\n";
        rc = 2;
    }

    log["exit_code"] = rc;
    log["wall_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    try {
        fs::create_directories(inv.out_dir);
        sedsim::write_json_file((fs::path(inv.out_dir) / "run_log.json").string(), log);
    } catch (...) {
        // best effort; the primary exit code stands
    }
    return rc;
}
