#include "sedsim/harness.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <mutex>
#include <thread>

#include "sedsim/io.hpp"
#include "sedsim/linear_model.hpp"
#include "sedsim/spectral_ops.hpp"
#include "sedsim/stokes_solver.hpp"

namespace sedsim {
namespace {

constexpr int kRecordSchema = 2;  // v2 adds phi_sq_mean; v1 records recompute
const double kNan = std::numeric_limits<double>::quiet_NaN();

double now_seconds(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string record_path(const ExperimentConfig& config, double L, int index) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "rec_%s_L%.6g_i%05d.json", model_kind_name(config.model).c_str(),
                  L, index);
    return config.out_dir + "/records/" + buf;
}

nlohmann::json record_to_json(const RealizationRecord& rec) {
    nlohmann::json j;
    j["schema_version"] = kRecordSchema;
    j["index"] = rec.index;
    j["ok"] = rec.ok;
    j["error"] = rec.error;
    j["particle_count"] = rec.particle_count;
    j["lambda"] = rec.lambda;
    if (std::isfinite(rec.mean_speed))
        j["mean_speed"] = rec.mean_speed;
    else
        j["mean_speed"] = nullptr;
    auto vel = nlohmann::json::array();
    for (const auto& v : rec.velocities) {
        auto row = nlohmann::json::array();
        for (int a = 0; a < v.size(); ++a) row.push_back(v(a));
        vel.push_back(row);
    }
    j["velocities"] = vel;
    j["phi_sq_mean"] = rec.phi_sq_mean;
    j["proxy_g_sum"] = rec.proxy_g_sum;
    auto fs = nlohmann::json::array();
    for (int a = 0; a < rec.proxy_f_sum.size(); ++a) fs.push_back(rec.proxy_f_sum(a));
    j["proxy_f_sum"] = fs;
    j["wall_seconds"] = rec.wall_seconds;
    return j;
}

RealizationRecord record_from_json(const nlohmann::json& j) {
    if (j.at("schema_version").get<int>() > kRecordSchema)
        throw std::runtime_error("realization record: unsupported schema version");
    RealizationRecord rec;
    rec.index = j.at("index").get<int>();
    rec.ok = j.at("ok").get<bool>();
    rec.error = j.at("error").get<std::string>();
    rec.particle_count = j.at("particle_count").get<int>();
    rec.lambda = j.at("lambda").get<double>();
    rec.mean_speed = j.at("mean_speed").is_null() ? kNan : j.at("mean_speed").get<double>();
    for (const auto& row : j.at("velocities")) {
        Eigen::VectorXd v(row.size());
        for (std::size_t a = 0; a < row.size(); ++a) v(a) = row[a].get<double>();
        rec.velocities.push_back(v);
    }
    rec.phi_sq_mean = j.at("phi_sq_mean").get<double>();
    rec.proxy_g_sum = j.at("proxy_g_sum").get<double>();
    const auto& fs = j.at("proxy_f_sum");
    rec.proxy_f_sum = Eigen::VectorXd::Zero(fs.size());
    for (std::size_t a = 0; a < fs.size(); ++a) rec.proxy_f_sum(a) = fs[a].get<double>();
    rec.wall_seconds = j.at("wall_seconds").get<double>();
    return rec;
}

// Index-sharded worker pool; exceptions are rethrown on the caller thread.
void parallel_over(int count, int workers, const std::function<void(int)>& body) {
    workers = std::max(1, std::min(workers, count));
    if (workers <= 1) {
        for (int i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto run = [&] {
        for (;;) {
            const int i = next.fetch_add(1);
            if (i >= count) return;
            try {
                body(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) pool.emplace_back(run);
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

void solve_one_velocity_model(const ExperimentConfig& config, const TorusDomain& dom, int n_grid,
                              int index, RealizationRecord& rec) {
    const auto t0 = std::chrono::steady_clock::now();
    rec.index = index;
    const ParticleConfiguration cfg = sample_ensemble(config.ensemble, dom, index);
    rec.particle_count = cfg.count();
    rec.lambda = cfg.volume_fraction();
    auto mean_square = [](const SpectralField& f) {
        double acc = 0.0;
        for (double v : f.data) acc += v * v;
        return acc / static_cast<double>(f.dom.cells());
    };
    try {
        if (config.model == ModelKind::linear) {
            LinearSolution sol = solve_linear(dom, cfg, config.e, n_grid, false);
            rec.velocities = sol.velocities;
            rec.phi_sq_mean = mean_square(sol.phi);
        } else {
            SuspensionSolution sol =
                solve_sedimentation(dom, cfg, config.e, n_grid, config.tol, 5000, false);
            rec.velocities = sol.velocities;
            rec.lambda = sol.lambda_grid;
            rec.phi_sq_mean = mean_square(sol.phi);
        }
        rec.ok = true;
        if (rec.particle_count > 0) {
            const Eigen::VectorXd ehat = config.e / config.e.norm();
            double acc = 0.0;
            for (const auto& v : rec.velocities) acc += ehat.dot(v);
            rec.mean_speed = acc / rec.particle_count;
        } else {
            rec.mean_speed = kNan;
        }
    } catch (const SolverError& err) {
        rec.ok = false;
        rec.error = err.what();
    } catch (const std::runtime_error& err) {
        rec.ok = false;
        rec.error = err.what();
    }
    rec.wall_seconds = now_seconds(t0);
}

// Proxy sums with one kernel component resident at a time (d=4 grids do not
// fit d+1 full kernels in memory at once).
void proxy_sums(const TorusDomain& dom, const std::vector<ParticleConfiguration>& configs,
                const std::vector<int>& indices, std::vector<RealizationRecord>& records) {
    const int d = dom.d;
    std::int64_t nb = 0;
    SpectralField stencil(dom, 1);
    {
        const auto cells = ball_cells(dom, Point::Zero(d));
        if (cells.size() < 8) throw std::invalid_argument("proxy_sums: ball resolves fewer than 8 cells");
        nb = static_cast<std::int64_t>(cells.size());
        for (std::int64_t c : cells) stencil.at(0, c) = 1.0 / static_cast<double>(nb);
    }
    FourierField wh = fft_of(stencil);
    const std::complex<double>* wc = wh.comp(0);
    const double nd = static_cast<double>(dom.cells());
    const double invvol = 1.0 / std::pow(dom.L, d);
    const double ball_meas = static_cast<double>(nb) * std::pow(dom.h(), d);
    const std::complex<double> i1(0.0, 1.0);

    for (int comp = -1; comp < d; ++comp) {
        FourierField work(dom, 1);
        std::complex<double>* kc = work.comp(0);
        for_each_mode(dom, [&](const ModeInfo& mi) {
            if (mi.zero_mode) {
                kc[mi.flat] = 0.0;
                return;
            }
            const std::complex<double> avg = invvol / mi.k2 * wc[mi.flat] * nd;
            kc[mi.flat] = comp < 0 ? avg : i1 * mi.kt[comp] * avg * ball_meas;
        });
        const SpectralField kernel = ifft_of(std::move(work));
        for (std::size_t r = 0; r < configs.size(); ++r) {
            RealizationRecord& rec = records[indices[r]];
            for (const Point& p : configs[r].centers) {
                const double v = interpolate(kernel, p)[0];
                if (comp < 0)
                    rec.proxy_g_sum += v;
                else
                    rec.proxy_f_sum(comp) += v;
            }
        }
    }
}

ScalingPoint aggregate_point(double L, const std::vector<RealizationRecord>& records,
                             const std::function<double(const RealizationRecord&)>& value_of,
                             double value, double stderr_) {
    ScalingPoint pt;
    pt.L = L;
    pt.value = value;
    pt.stderr_ = stderr_;
    for (const auto& rec : records) {
        if (!rec.ok) continue;
        if (!std::isfinite(value_of(rec))) continue;
        ++pt.realizations_used;
        pt.mean_count += rec.particle_count;
        pt.mean_lambda += rec.lambda;
    }
    if (pt.realizations_used > 0) {
        pt.mean_count /= pt.realizations_used;
        pt.mean_lambda /= pt.realizations_used;
    }
    return pt;
}

ValueWithError mean_with_stderr(const std::vector<double>& xs) {
    ValueWithError out;
    const int m = static_cast<int>(xs.size());
    if (m == 0) {
        out.value = kNan;
        out.stderr_ = kNan;
        return out;
    }
    for (double x : xs) out.value += x;
    out.value /= m;
    if (m >= 2) out.stderr_ = std::sqrt(sample_variance(xs) / m);
    return out;
}

ValueWithError variance_with_stderr(const std::vector<double>& xs) {
    const int m = static_cast<int>(xs.size());
    ValueWithError out;
    out.value = sample_variance(xs);
    auto loo = [&](int skip) {
        std::vector<double> sub;
        sub.reserve(m - 1);
        for (int r = 0; r < m; ++r)
            if (r != skip) sub.push_back(xs[r]);
        return sample_variance(sub);
    };
    if (m >= 3) out.stderr_ = jackknife_stderr(m, loo, out.value);
    return out;
}

nlohmann::json fit_to_json(const PowerLawFit& f) {
    return {{"exponent", f.exponent},
            {"exponent_stderr", f.exponent_stderr},
            {"r_squared", f.r_squared},
            {"amplitude", f.amplitude}};
}

nlohmann::json fit_to_json(const LogLinearFit& f) {
    return {{"slope", f.slope},
            {"slope_stderr", f.slope_stderr},
            {"r_squared", f.r_squared},
            {"intercept", f.intercept}};
}

}  // namespace

std::string model_kind_name(ModelKind kind) {
    switch (kind) {
        case ModelKind::linear: return "linear";
        case ModelKind::full: return "full";
        case ModelKind::scalar_proxy: return "scalar_proxy";
    }
    throw std::invalid_argument("model_kind_name: unknown kind");
}

ModelKind model_kind_from_name(const std::string& name) {
    if (name == "linear") return ModelKind::linear;
    if (name == "full") return ModelKind::full;
    if (name == "scalar_proxy") return ModelKind::scalar_proxy;
    throw std::invalid_argument("model_kind_from_name: unknown model '" + name + "'");
}

void ExperimentConfig::validate() const {
    if (lengths.empty()) throw std::invalid_argument("experiment: L list is empty");
    for (std::size_t i = 1; i < lengths.size(); ++i)
        if (!(lengths[i] > lengths[i - 1]))
            throw std::invalid_argument("experiment: L list must be strictly increasing");
    if (cells_per_unit < 1) throw std::invalid_argument("experiment: cells_per_unit must be >= 1");
    if (ensemble.realizations < 1) throw std::invalid_argument("experiment: need >= 1 realization");
    if (!(failure_cap >= 0.0 && failure_cap < 1.0))
        throw std::invalid_argument("experiment: failure_cap must be in [0,1)");
    if (model != ModelKind::scalar_proxy) {
        if (e.size() != d) throw std::invalid_argument("experiment: gravity dimension mismatch");
        if (!(e.norm() > 0.0)) throw std::invalid_argument("experiment: gravity must be nonzero");
        if (d < 2 || d > 3) throw std::invalid_argument("experiment: velocity models need d in {2,3}");
    } else if (d < 1 || d > 4) {
        throw std::invalid_argument("experiment: d must be in 1..4");
    }
    for (double L : lengths) (void)grid_cells(L);
}

int ExperimentConfig::grid_cells(double L) const {
    const double exact = L * cells_per_unit;
    const int n = static_cast<int>(std::lround(exact));
    if (std::abs(exact - n) > 1e-9 * std::max(1.0, exact))
        throw std::invalid_argument("experiment: L * cells_per_unit must be an integer");
    if (n < 8 || n % 2 != 0)
        throw std::invalid_argument("experiment: grid per box must be even and >= 8");
    return n;
}

std::vector<RealizationRecord> run_ensemble(const ExperimentConfig& config, double L) {
    config.validate();
    const int n_grid = config.grid_cells(L);
    const TorusDomain dom(config.d, L, n_grid);
    dom.require_resolution();
    const int m = config.ensemble.realizations;

    const bool persist = !config.out_dir.empty();
    if (persist) std::filesystem::create_directories(config.out_dir + "/records");

    std::vector<RealizationRecord> records(m);
    std::vector<char> have(m, 0);
    if (persist) {
        for (int i = 0; i < m; ++i) {
            const std::string path = record_path(config, L, i);
            if (!std::filesystem::exists(path)) continue;
            try {
                records[i] = record_from_json(read_json_file(path));
                have[i] = records[i].index == i ? 1 : 0;
            } catch (const std::exception&) {
                have[i] = 0;  // unreadable record: recompute
            }
        }
    }

    if (config.model == ModelKind::scalar_proxy) {
        std::vector<ParticleConfiguration> configs;
        std::vector<int> indices;
        for (int i = 0; i < m; ++i) {
            if (have[i]) continue;
            RealizationRecord& rec = records[i];
            rec = RealizationRecord{};
            rec.index = i;
            rec.proxy_f_sum = Eigen::VectorXd::Zero(config.d);
            configs.push_back(sample_ensemble(config.ensemble, dom, i));
            rec.particle_count = configs.back().count();
            rec.lambda = configs.back().volume_fraction();
            rec.ok = true;
            indices.push_back(i);
        }
        if (!configs.empty()) proxy_sums(dom, configs, indices, records);
    } else {
        parallel_over(m, config.workers, [&](int i) {
            if (have[i]) return;
            records[i] = RealizationRecord{};
            solve_one_velocity_model(config, dom, n_grid, i, records[i]);
        });
    }

    if (persist)
        for (int i = 0; i < m; ++i)
            if (!have[i]) write_json_file(record_path(config, L, i), record_to_json(records[i]));

    bool any_ok = false;
    for (const auto& rec : records) any_ok = any_ok || rec.ok;
    if (!any_ok) throw SweepFailure("run_ensemble: every realization failed at L=" + std::to_string(L));
    return records;
}

ScalingResult make_scaling_result(const std::string& quantity,
                                  const std::vector<ScalingPoint>& points) {
    ScalingResult res;
    res.quantity = quantity;
    res.points = points;
    std::vector<double> xs, ys, es, ys2, es2;
    bool weighted = !points.empty();
    for (const auto& pt : points) {
        xs.push_back(pt.L);
        ys.push_back(pt.value);
        es.push_back(pt.stderr_);
        ys2.push_back(pt.value * pt.value);
        es2.push_back(2.0 * std::abs(pt.value) * pt.stderr_);
        if (!(pt.stderr_ > 0.0)) weighted = false;
    }
    bool power_ok = points.size() >= 3;
    for (double y : ys) power_ok = power_ok && y > 0.0;
    if (power_ok) {
        res.power_fit = fit_power_law(xs, ys, weighted ? es : std::vector<double>{});
    } else {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        res.power_fit = PowerLawFit{nan, nan, nan, nan};
    }
    if (points.size() >= 3) {
        res.value_sq_log_fit = fit_log_linear(xs, ys2, weighted ? es2 : std::vector<double>{});
    } else {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        res.value_sq_log_fit = LogLinearFit{nan, nan, nan, nan};
    }
    return res;
}

std::map<std::string, ScalingResult> scaling_sweep(const ExperimentConfig& config) {
    config.validate();
    if (config.lengths.size() < 3) throw std::invalid_argument("scaling_sweep: need >= 3 box sizes");
    if (config.ensemble.realizations < 20)
        throw std::invalid_argument("scaling_sweep: need >= 20 realizations");

    const bool proxy = config.model == ModelKind::scalar_proxy;
    std::map<std::string, std::vector<ScalingPoint>> points;

    for (double L : config.lengths) {
        const std::vector<RealizationRecord> records = run_ensemble(config, L);
        int failures = 0;
        for (const auto& rec : records) failures += rec.ok ? 0 : 1;
        if (failures > config.failure_cap * records.size())
            throw SweepFailure("scaling_sweep: solver failures exceed the cap at L=" +
                               std::to_string(L) + " (" + std::to_string(failures) + "/" +
                               std::to_string(records.size()) + ")");

        if (proxy) {
            std::vector<double> gsums;
            std::vector<Eigen::VectorXd> fsums;
            for (const auto& rec : records)
                if (rec.ok) {
                    gsums.push_back(rec.proxy_g_sum);
                    fsums.push_back(rec.proxy_f_sum);
                }
            const ValueWithError gvar = variance_with_stderr(gsums);

            const int m = static_cast<int>(fsums.size());
            auto fvar = [&](int skip) {
                double acc = 0.0;
                for (int a = 0; a < config.d; ++a) {
                    std::vector<double> ys;
                    ys.reserve(m);
                    for (int r = 0; r < m; ++r)
                        if (r != skip) ys.push_back(fsums[r](a));
                    acc += sample_variance(ys);
                }
                return acc;
            };
            ValueWithError svar;
            svar.value = fvar(-1);
            if (m >= 3)
                svar.stderr_ = jackknife_stderr(m, [&](int skip) { return fvar(skip); }, svar.value);

            auto always = [](const RealizationRecord&) { return 0.0; };
            points["fluctuation_proxy_variance"].push_back(
                aggregate_point(L, records, always, gvar.value, gvar.stderr_));
            points["speed_proxy_variance"].push_back(
                aggregate_point(L, records, always, svar.value, svar.stderr_));
        } else {
            std::vector<double> speeds, phi_sqs;
            std::vector<std::vector<Eigen::VectorXd>> velocity_sets;
            for (const auto& rec : records)
                if (rec.ok) {
                    if (std::isfinite(rec.mean_speed)) speeds.push_back(rec.mean_speed);
                    velocity_sets.push_back(rec.velocities);
                    phi_sqs.push_back(rec.phi_sq_mean);
                }
            if (static_cast<int>(velocity_sets.size()) < 20)
                throw SweepFailure("scaling_sweep: fewer than 20 usable realizations at L=" +
                                   std::to_string(L));
            const ValueWithError speed = mean_with_stderr(speeds);
            const ValueWithError sigma = linear_fluctuation(velocity_sets);
            const ValueWithError qbar = mean_with_stderr(phi_sqs);
            ValueWithError field;  // sqrt of the mean square, delta-method error
            field.value = std::sqrt(std::max(0.0, qbar.value));
            field.stderr_ = field.value > 0.0 ? qbar.stderr_ / (2.0 * field.value) : 0.0;

            points["mean_speed"].push_back(aggregate_point(
                L, records, [](const RealizationRecord& r) { return r.mean_speed; }, speed.value,
                speed.stderr_));
            auto always = [](const RealizationRecord&) { return 0.0; };
            points["sigma"].push_back(aggregate_point(L, records, always, sigma.value, sigma.stderr_));
            points["sigma_field"].push_back(
                aggregate_point(L, records, always, field.value, field.stderr_));
        }
    }

    std::map<std::string, ScalingResult> out;
    for (auto& [name, pts] : points) out[name] = make_scaling_result(name, pts);

    if (!config.out_dir.empty()) {
        for (const auto& [name, res] : out) {
            persist_result(res, config.out_dir + "/" + name + ".json");
            emit_plot_data(res, config.out_dir + "/" + name);
        }
    }
    return out;
}

void persist_result(const ScalingResult& result, const std::string& path) {
    nlohmann::json j;
    j["schema_version"] = result.schema_version;
    j["quantity"] = result.quantity;
    auto pts = nlohmann::json::array();
    for (const auto& pt : result.points)
        pts.push_back({{"L", pt.L},
                       {"value", pt.value},
                       {"stderr", pt.stderr_},
                       {"realizations_used", pt.realizations_used},
                       {"mean_count", pt.mean_count},
                       {"mean_lambda", pt.mean_lambda}});
    j["points"] = pts;
    j["power_fit"] = fit_to_json(result.power_fit);
    j["value_sq_log_fit"] = fit_to_json(result.value_sq_log_fit);
    write_json_file(path, j);

    std::vector<CsvColumn> cols(6);
    cols[0].name = "L";
    cols[1].name = "value";
    cols[2].name = "stderr";
    cols[3].name = "realizations_used";
    cols[4].name = "mean_count";
    cols[5].name = "mean_lambda";
    for (const auto& pt : result.points) {
        cols[0].values.push_back(pt.L);
        cols[1].values.push_back(pt.value);
        cols[2].values.push_back(pt.stderr_);
        cols[3].values.push_back(pt.realizations_used);
        cols[4].values.push_back(pt.mean_count);
        cols[5].values.push_back(pt.mean_lambda);
    }
    const std::string csv_path =
        path.size() > 5 && path.substr(path.size() - 5) == ".json"
            ? path.substr(0, path.size() - 5) + ".csv"
            : path + ".csv";
    write_csv(csv_path, cols);
}

ScalingResult load_result(const std::string& path) {
    const nlohmann::json j = read_json_file(path);
    const int version = j.at("schema_version").get<int>();
    ScalingResult res;
    if (version > res.schema_version)
        throw std::runtime_error("load_result: unsupported schema version " + std::to_string(version));
    res.schema_version = version;
    res.quantity = j.at("quantity").get<std::string>();
    for (const auto& p : j.at("points")) {
        ScalingPoint pt;
        pt.L = p.at("L").get<double>();
        pt.value = p.at("value").get<double>();
        pt.stderr_ = p.at("stderr").get<double>();
        pt.realizations_used = p.at("realizations_used").get<int>();
        pt.mean_count = p.at("mean_count").get<double>();
        pt.mean_lambda = p.at("mean_lambda").get<double>();
        res.points.push_back(pt);
    }
    const auto& pf = j.at("power_fit");
    res.power_fit.exponent = pf.at("exponent").get<double>();
    res.power_fit.exponent_stderr = pf.at("exponent_stderr").get<double>();
    res.power_fit.r_squared = pf.at("r_squared").get<double>();
    res.power_fit.amplitude = pf.at("amplitude").get<double>();
    const auto& lf = j.at("value_sq_log_fit");
    res.value_sq_log_fit.slope = lf.at("slope").get<double>();
    res.value_sq_log_fit.slope_stderr = lf.at("slope_stderr").get<double>();
    res.value_sq_log_fit.r_squared = lf.at("r_squared").get<double>();
    res.value_sq_log_fit.intercept = lf.at("intercept").get<double>();
    return res;
}

void emit_plot_data(const ScalingResult& result, const std::string& base_path) {
    if (result.points.empty()) throw std::invalid_argument("emit_plot_data: empty result");

    std::vector<CsvColumn> data(3);
    data[0].name = "L";
    data[1].name = "value";
    data[2].name = "stderr";
    for (const auto& pt : result.points) {
        data[0].values.push_back(pt.L);
        data[1].values.push_back(pt.value);
        data[2].values.push_back(pt.stderr_);
    }
    write_csv(base_path + "_data.csv", data);

    const double lo = result.points.front().L;
    const double hi = result.points.back().L;
    std::vector<CsvColumn> fit(3);
    fit[0].name = "L";
    fit[1].name = "power_fit";
    fit[2].name = "log_fit_value_sq";
    for (int i = 0; i < 50; ++i) {
        const double t = i / 49.0;
        const double L = lo * std::pow(hi / lo, t);
        fit[0].values.push_back(L);
        fit[1].values.push_back(result.power_fit.amplitude *
                                std::pow(L, result.power_fit.exponent));
        fit[2].values.push_back(result.value_sq_log_fit.slope * std::log(L) +
                                result.value_sq_log_fit.intercept);
    }
    write_csv(base_path + "_fit.csv", fit);
}

}  // namespace sedsim
