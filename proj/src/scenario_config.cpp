#include "flowfilt/scenario_config.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "flowfilt/io.hpp"

namespace flowfilt {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& field, const std::string& msg) {
    throw ConfigError(field, msg);
}

const json& require(const json& node, const std::string& path, const char* key) {
    if (!node.is_object()) fail(path, "expected an object");
    auto it = node.find(key);
    if (it == node.end()) {
        fail(path.empty() ? key : path + "." + key, "missing required field");
    }
    return *it;
}

double toNumber(const json& node, const std::string& path) {
    if (!node.is_number()) fail(path, "expected a number");
    return node.get<double>();
}

std::string toStr(const json& node, const std::string& path) {
    if (!node.is_string()) fail(path, "expected a string");
    return node.get<std::string>();
}

Vector toVector(const json& node, const std::string& path) {
    if (!node.is_array()) fail(path, "expected an array of numbers");
    Vector v(node.size());
    for (std::size_t i = 0; i < node.size(); ++i) {
        v[static_cast<Index>(i)] = toNumber(node[i], path + "[" + std::to_string(i) + "]");
    }
    return v;
}

Matrix toMatrix(const json& node, const std::string& path) {
    if (!node.is_array() || node.empty()) fail(path, "expected a non-empty array of rows");
    const std::size_t cols = node[0].is_array() ? node[0].size() : 0;
    if (cols == 0) fail(path, "expected rows to be arrays of numbers");
    Matrix m(node.size(), cols);
    for (std::size_t r = 0; r < node.size(); ++r) {
        const std::string rp = path + "[" + std::to_string(r) + "]";
        if (!node[r].is_array() || node[r].size() != cols) {
            fail(rp, "rows must all have " + std::to_string(cols) + " entries");
        }
        for (std::size_t c = 0; c < cols; ++c) {
            m(static_cast<Index>(r), static_cast<Index>(c)) =
                toNumber(node[r][c], rp + "[" + std::to_string(c) + "]");
        }
    }
    return m;
}

Schedule parseSchedule(const json& node, const std::string& path) {
    if (node.is_null()) return Schedule::linear();
    const std::string kind = toStr(require(node, path, "kind"), path + ".kind");
    if (kind == "linear") return Schedule::linear();
    if (kind == "power2") return Schedule::power2();
    if (kind == "power") {
        const double p = toNumber(require(node, path, "exponent"), path + ".exponent");
        if (p < 1.0) fail(path + ".exponent", "schedule exponent must be >= 1");
        return Schedule::power(p);
    }
    fail(path + ".kind", "unknown schedule kind '" + kind + "' (linear|power2|power)");
}

MeasurementFn parseMeasurementFn(const std::string& kind, const json& node,
                                 const std::string& path, Index state_dim,
                                 Index* measurement_dim) {
    if (kind == "identity") {
        *measurement_dim = state_dim;
        return [](const Vector& x) { return x; };
    }
    if (kind == "linear") {
        Matrix h = toMatrix(require(node, path, "matrix"), path + ".matrix");
        if (h.cols() != state_dim) {
            fail(path + ".matrix", "column count must equal the state dimension");
        }
        *measurement_dim = h.rows();
        return [h](const Vector& x) { return h * x; };
    }
    if (kind == "range-to-origin") {
        *measurement_dim = 1;
        return [](const Vector& x) {
            Vector y(1);
            y[0] = x.norm();
            return y;
        };
    }
    if (kind == "range-bearing") {
        if (state_dim < 2) fail(path, "range-bearing needs at least a 2D state");
        *measurement_dim = 2;
        return [](const Vector& x) {
            Vector y(2);
            y[0] = std::hypot(x[0], x[1]);
            y[1] = std::atan2(x[1], x[0]);
            return y;
        };
    }
    if (kind == "cubic") {
        *measurement_dim = state_dim;
        return [](const Vector& x) { return Vector(x.array().cube()); };
    }
    fail(path + ".measurement_fn", "unknown measurement function '" + kind +
                                       "' (identity|linear|range-to-origin|range-bearing|cubic)");
}

SystemModel parseSystem(const json& node, const std::string& path, Index state_dim,
                        const std::string& base_dir) {
    const std::string kind = toStr(require(node, path, "kind"), path + ".kind");
    SystemModel model;
    if (kind == "identity") {
        model = SystemModel::identity(state_dim);
    } else if (kind == "linear") {
        Matrix a = toMatrix(require(node, path, "matrix"), path + ".matrix");
        if (a.rows() != state_dim) {
            fail(path + ".matrix", "size must equal the state dimension");
        }
        model = SystemModel::linear(std::move(a));
    } else if (kind == "random-walk") {
        model = SystemModel::randomWalk(state_dim);
    } else if (kind == "coordinated-turn-2d") {
        if (state_dim != 4) {
            fail(path, "coordinated-turn-2d needs state_dim 4 (px, py, vx, vy)");
        }
        const double dt = toNumber(require(node, path, "dt"), path + ".dt");
        const double rate = toNumber(require(node, path, "turn_rate"), path + ".turn_rate");
        model = SystemModel::coordinatedTurn2d(dt, rate);
    } else if (kind == "cubic-drift") {
        const double coeff = toNumber(require(node, path, "coeff"), path + ".coeff");
        model = SystemModel::cubicDrift(state_dim, coeff);
    } else {
        fail(path + ".kind", "unknown system kind '" + kind +
                                 "' (identity|linear|random-walk|coordinated-turn-2d|cubic-drift)");
    }

    if (node.contains("noise") && !node["noise"].is_null()) {
        const json& jn = node["noise"];
        const std::string npath = path + ".noise";
        const std::string nkind = toStr(require(jn, npath, "kind"), npath + ".kind");
        if (nkind == "none") {
            model.noise.kind = NoiseSpec::Kind::none;
        } else if (nkind == "gaussian") {
            model.noise.kind = NoiseSpec::Kind::gaussian;
            model.noise.cov = toMatrix(require(jn, npath, "cov"), npath + ".cov");
            if (model.noise.cov.rows() != model.noise.cov.cols()) {
                fail(npath + ".cov", "noise covariance must be square");
            }
        } else if (nkind == "deterministic") {
            model.noise.kind = NoiseSpec::Kind::deterministic_set;
            if (jn.contains("path")) {
                const std::string p = toStr(jn["path"], npath + ".path");
                model.noise.samples =
                    readParticleCsv((std::filesystem::path(base_dir) / p).string());
            } else if (jn.contains("particles")) {
                const json& jp = jn["particles"];
                Matrix loc = toMatrix(require(jp, npath + ".particles", "locations"),
                                      npath + ".particles.locations");
                Vector w = toVector(require(jp, npath + ".particles", "weights"),
                                    npath + ".particles.weights");
                model.noise.samples = ParticleSet(std::move(loc), std::move(w));
            } else {
                fail(npath, "deterministic noise needs 'path' or 'particles'");
            }
        } else {
            fail(npath + ".kind", "unknown noise kind '" + nkind +
                                      "' (none|gaussian|deterministic)");
        }
    }
    return model;
}

FlowConfig parseFlow(const json& node, const std::string& path) {
    FlowConfig cfg;
    if (node.is_null()) return cfg;
    if (!node.is_object()) fail(path, "expected an object");
    if (node.contains("variant")) {
        const std::string v = toStr(node["variant"], path + ".variant");
        if (v == "recursive") cfg.variant = FlowVariant::recursive;
        else if (v == "iterative") cfg.variant = FlowVariant::iterative;
        else fail(path + ".variant", "unknown variant '" + v + "' (recursive|iterative)");
    }
    if (node.contains("integrator")) {
        const std::string v = toStr(node["integrator"], path + ".integrator");
        if (v == "fixed-rk4") cfg.integrator = FlowIntegrator::fixed_rk4;
        else if (v == "adaptive-heun") cfg.integrator = FlowIntegrator::adaptive_heun;
        else fail(path + ".integrator", "unknown integrator '" + v + "' (fixed-rk4|adaptive-heun)");
    }
    if (node.contains("steps")) {
        const double s = toNumber(node["steps"], path + ".steps");
        if (s < 1 || s != std::floor(s)) fail(path + ".steps", "steps must be a positive integer");
        cfg.step_count = static_cast<int>(s);
    }
    if (node.contains("tolerance")) {
        cfg.tolerance = toNumber(node["tolerance"], path + ".tolerance");
        if (!(cfg.tolerance > 0.0)) fail(path + ".tolerance", "tolerance must be positive");
    }
    if (node.contains("damping")) {
        cfg.damping = toNumber(node["damping"], path + ".damping");
    }
    if (node.contains("k1")) {
        const double k1 = toNumber(node["k1"], path + ".k1");
        if (!(k1 > 2.0)) fail(path + ".k1", "k1 must exceed 2 so that k2 = 2(k1-2) stays positive");
        cfg.params = DistanceParams::withK1(k1);
    }
    if (node.contains("k2")) {
        cfg.params.k2 = toNumber(node["k2"], path + ".k2");
        if (!(cfg.params.k2 > 0.0)) fail(path + ".k2", "k2 must be positive");
    }
    if (node.contains("trace")) {
        if (!node["trace"].is_boolean()) fail(path + ".trace", "expected a boolean");
        cfg.trace = node["trace"].get<bool>();
    }
    return cfg;
}

ParticleSet parsePrior(const json& node, const std::string& path, Index state_dim,
                       std::uint64_t seed, const DistanceParams& params,
                       const std::string& base_dir) {
    const std::string kind = toStr(require(node, path, "kind"), path + ".kind");
    if (kind == "gaussian") {
        Vector mean = toVector(require(node, path, "mean"), path + ".mean");
        Matrix cov = toMatrix(require(node, path, "cov"), path + ".cov");
        const double count = toNumber(require(node, path, "count"), path + ".count");
        if (mean.size() != state_dim) {
            fail(path + ".mean", "dimension must equal the state dimension");
        }
        if (count < 1 || count != std::floor(count)) {
            fail(path + ".count", "count must be a positive integer");
        }
        Index draws = 0;
        if (node.contains("draw_count")) {
            draws = static_cast<Index>(toNumber(node["draw_count"], path + ".draw_count"));
        }
        return gaussianParticles(mean, cov, static_cast<Index>(count), seed ^ 0x9e3779b97f4a7c15ULL,
                                 params, draws);
    }
    if (kind == "particles") {
        ParticleSet set = [&] {
            if (node.contains("path")) {
                const std::string p = toStr(node["path"], path + ".path");
                return readParticleCsv((std::filesystem::path(base_dir) / p).string());
            }
            if (node.contains("particles")) {
                const json& jp = node["particles"];
                Matrix loc = toMatrix(require(jp, path + ".particles", "locations"),
                                      path + ".particles.locations");
                Vector w = toVector(require(jp, path + ".particles", "weights"),
                                    path + ".particles.weights");
                return ParticleSet(std::move(loc), std::move(w));
            }
            fail(path, "prior particles need 'path' or 'particles'");
        }();
        if (set.dim() != state_dim) {
            fail(path, "prior particle dimension does not match the state dimension");
        }
        return set;
    }
    fail(path + ".kind", "unknown prior kind '" + kind + "' (gaussian|particles)");
}

} // namespace

std::uint64_t configHash(const nlohmann::json& config) {
    // nlohmann::json objects iterate key-sorted, so dump() is canonical.
    const std::string canonical = config.dump();
    std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
    for (unsigned char c : canonical) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

RunSetup parseRunSetup(const nlohmann::json& config, const std::string& base_dir) {
    if (!config.is_object()) fail("", "top-level config must be an object");
    static const std::set<std::string> known = {
        "scenario", "seed", "state_dim", "system",      "likelihood",
        "prior",    "flow", "output",    "measurements", "inputs"};
    for (const auto& [key, value] : config.items()) {
        (void)value;
        if (!known.count(key)) fail(key, "unknown top-level field");
    }

    RunSetup setup;
    if (config.contains("scenario") && config["scenario"].is_object() &&
        config["scenario"].contains("name")) {
        setup.name = toStr(config["scenario"]["name"], "scenario.name");
    }

    std::uint64_t seed = 0;
    if (config.contains("seed")) {
        const double s = toNumber(config["seed"], "seed");
        if (s < 0 || s != std::floor(s)) fail("seed", "seed must be a nonnegative integer");
        seed = static_cast<std::uint64_t>(s);
    }

    const double sd = toNumber(require(config, "", "state_dim"), "state_dim");
    if (sd < 1 || sd != std::floor(sd)) fail("state_dim", "state_dim must be a positive integer");
    const Index state_dim = static_cast<Index>(sd);

    FlowConfig flow = parseFlow(config.contains("flow") ? config["flow"] : json(), "flow");

    SystemModel system =
        parseSystem(require(config, "", "system"), "system", state_dim, base_dir);

    const json& jl = require(config, "", "likelihood");
    const std::string lkind = toStr(require(jl, "likelihood", "kind"), "likelihood.kind");
    if (lkind != "gaussian-additive") {
        fail("likelihood.kind", "unknown likelihood kind '" + lkind + "' (gaussian-additive)");
    }
    LikelihoodTemplate lik;
    const std::string mf =
        toStr(require(jl, "likelihood", "measurement_fn"), "likelihood.measurement_fn");
    lik.h = parseMeasurementFn(mf, jl, "likelihood", state_dim, &lik.measurement_dim);
    lik.noise_cov = toMatrix(require(jl, "likelihood", "noise_cov"), "likelihood.noise_cov");
    if (lik.noise_cov.rows() != lik.noise_cov.cols() ||
        lik.noise_cov.rows() != lik.measurement_dim) {
        fail("likelihood.noise_cov", "must be a square matrix of the measurement dimension (" +
                                         std::to_string(lik.measurement_dim) + ")");
    }
    lik.schedule = parseSchedule(jl.contains("schedule") ? jl["schedule"] : json(),
                                 "likelihood.schedule");

    ParticleSet prior = parsePrior(require(config, "", "prior"), "prior", state_dim, seed,
                                   flow.params, base_dir);

    std::vector<Vector> measurements;
    if (config.contains("measurements")) {
        const json& jm = config["measurements"];
        if (!jm.is_array()) fail("measurements", "expected an array of measurement vectors");
        for (std::size_t k = 0; k < jm.size(); ++k) {
            const std::string mp = "measurements[" + std::to_string(k) + "]";
            Vector y = toVector(jm[k], mp);
            if (y.size() != lik.measurement_dim) {
                fail(mp, "measurement dimension " + std::to_string(y.size()) +
                             " does not match the likelihood dimension " +
                             std::to_string(lik.measurement_dim));
            }
            measurements.push_back(std::move(y));
        }
    }

    std::vector<Vector> inputs;
    if (config.contains("inputs")) {
        const json& ji = config["inputs"];
        if (!ji.is_array()) fail("inputs", "expected an array of input vectors");
        for (std::size_t k = 0; k < ji.size(); ++k) {
            inputs.push_back(toVector(ji[k], "inputs[" + std::to_string(k) + "]"));
        }
    }

    setup.methods = {Method::flow_recursive};
    if (config.contains("output") && config["output"].is_object() &&
        config["output"].contains("methods")) {
        const json& jm = config["output"]["methods"];
        if (!jm.is_array()) fail("output.methods", "expected an array of method names");
        setup.methods.clear();
        for (std::size_t i = 0; i < jm.size(); ++i) {
            const std::string name =
                toStr(jm[i], "output.methods[" + std::to_string(i) + "]");
            const auto m = methodFromName(name);
            if (!m) {
                fail("output.methods[" + std::to_string(i) + "]",
                     "unknown method '" + name +
                         "' (flow-recursive|flow-iterative|reweight|sir)");
            }
            setup.methods.push_back(*m);
        }
        if (setup.methods.empty()) fail("output.methods", "at least one method required");
    }

    setup.scenario = Scenario{std::move(system), std::move(lik),    std::move(prior),
                              std::move(measurements), std::move(inputs), flow, seed};
    setup.config_hash = configHash(config);
    return setup;
}

RunSetup loadRunSetup(const std::string& path) {
    std::ifstream f(path);
    if (!f) {
        throw ConfigError("", "cannot open config file '" + path + "'");
    }
    nlohmann::json config;
    try {
        config = nlohmann::json::parse(f);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("", std::string("JSON parse error in '") + path + "': " + e.what());
    }
    return parseRunSetup(config, std::filesystem::path(path).parent_path().string());
}

} // namespace flowfilt
