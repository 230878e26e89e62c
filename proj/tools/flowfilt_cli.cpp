// flowfilt command-line front end: scenario runs, derivative checks and the
// oracle self-test suite.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "flowfilt/io.hpp"
#include "flowfilt/scenario_config.hpp"
#include "flowfilt/selftest.hpp"

namespace {

constexpr const char* kVersion = "0.1.0";

using namespace flowfilt;

int workerCap() {
    if (const char* env = std::getenv("FLOWFILT_THREADS")) {
        const int n = std::atoi(env);
        if (n >= 1) return n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

struct MethodRun {
    Method method;
    std::vector<StepRecord> records;
    FlowTrace trace;
};

int cmdRun(const std::string& config_path, const std::string& out_dir,
           const std::string& methods_csv, std::int64_t seed_override, bool trace) {
    RunSetup setup;
    try {
        setup = loadRunSetup(config_path);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    }
    if (!methods_csv.empty()) {
        setup.methods.clear();
        std::stringstream ss(methods_csv);
        std::string name;
        while (std::getline(ss, name, ',')) {
            const auto m = methodFromName(name);
            if (!m) {
                std::cerr << "config error: --methods: unknown method '" << name
                          << "' (flow-recursive|flow-iterative|reweight|sir)\n";
                return 2;
            }
            setup.methods.push_back(*m);
        }
    }
    if (seed_override >= 0) {
        setup.scenario.seed = static_cast<std::uint64_t>(seed_override);
    }

    std::vector<MethodRun> runs(setup.methods.size());
    // Traces are recorded for the first flow method only; trace.csv has a
    // single fixed name.
    int trace_slot = -1;
    if (trace) {
        for (std::size_t i = 0; i < setup.methods.size(); ++i) {
            if (setup.methods[i] == Method::flow_recursive ||
                setup.methods[i] == Method::flow_iterative) {
                trace_slot = static_cast<int>(i);
                break;
            }
        }
    }

    const int cap = workerCap();
    std::vector<std::future<void>> pending;
    std::size_t next = 0;
    std::exception_ptr failure;
    while (next < setup.methods.size() || !pending.empty()) {
        while (next < setup.methods.size() &&
               static_cast<int>(pending.size()) < cap) {
            const std::size_t i = next++;
            pending.push_back(std::async(std::launch::async, [&, i] {
                runs[i].method = setup.methods[i];
                FlowTrace* t = static_cast<int>(i) == trace_slot ? &runs[i].trace : nullptr;
                runs[i].records = runScenario(setup.scenario, setup.methods[i], t);
            }));
        }
        try {
            pending.front().get();
        } catch (...) {
            if (!failure) failure = std::current_exception();
        }
        pending.erase(pending.begin());
    }
    if (failure) {
        try {
            std::rethrow_exception(failure);
        } catch (const FlowStalledError& e) {
            std::cerr << "flow stalled: " << e.what() << "\n";
            return 3;
        } catch (const UpdateImpossibleError& e) {
            std::cerr << "update impossible: " << e.what() << "\n";
            return 3;
        } catch (const Error& e) {
            std::cerr << "error: " << e.what() << "\n";
            return 1;
        }
    }

    std::filesystem::create_directories(out_dir);
    std::vector<StepRecord> all_records;
    for (const auto& run : runs) {
        all_records.insert(all_records.end(), run.records.begin(), run.records.end());
    }
    {
        std::ofstream f(std::filesystem::path(out_dir) / "estimates.csv");
        f << estimatesCsv(all_records);
    }

    nlohmann::json records = nlohmann::json::array();
    for (const auto& rec : all_records) {
        std::vector<double> mean(rec.mean.data(), rec.mean.data() + rec.mean.size());
        std::vector<double> cov;
        for (Index r = 0; r < rec.covariance.rows(); ++r) {
            for (Index c = 0; c < rec.covariance.cols(); ++c) {
                cov.push_back(rec.covariance(r, c));
            }
        }
        records.push_back({{"step", rec.step},
                           {"method", methodName(rec.method)},
                           {"mean", mean},
                           {"covariance_row_major", cov},
                           {"ess", rec.ess},
                           {"wall_ms", rec.wall_ms}});
    }
    char hash_hex[19];
    std::snprintf(hash_hex, sizeof hash_hex, "%016llx",
                  static_cast<unsigned long long>(setup.config_hash));
    nlohmann::json report{{"scenario", setup.name},
                          {"config_hash", hash_hex},
                          {"seed", setup.scenario.seed},
                          {"version", kVersion},
                          {"records", records}};
    {
        std::ofstream f(std::filesystem::path(out_dir) / "report.json");
        f << report.dump(2) << "\n";
    }
    if (trace_slot >= 0) {
        std::ofstream f(std::filesystem::path(out_dir) / "trace.csv");
        f << traceCsv(runs[trace_slot].trace);
        std::ofstream g(std::filesystem::path(out_dir) / "trace_diagnostics.json");
        g << traceDiagnosticsJson(runs[trace_slot].trace) << "\n";
    }
    std::cout << "wrote " << out_dir << "/report.json, estimates.csv"
              << (trace_slot >= 0 ? ", trace.csv" : "") << "\n";
    return 0;
}

int cmdGradcheck(int trials, std::int64_t seed) {
    GradcheckOptions opts;
    opts.trials = trials;
    if (seed >= 0) opts.seed = static_cast<std::uint64_t>(seed);
    const GradcheckResult r = runGradcheck(opts);
    std::printf("trials            %d\n", r.trials);
    std::printf("worst gradient    %.3e  (tol %.1e)\n", r.worst_grad, opts.grad_tol);
    std::printf("worst hessian     %.3e  (tol %.1e)\n", r.worst_hess, opts.hess_tol);
    std::printf("worst J-vector    %.3e  (tol %.1e)\n", r.worst_j, opts.j_tol);
    if (!r.pass) {
        std::printf("FAIL: reproduce the worst instance with --trials 1 --seed %llu\n",
                    static_cast<unsigned long long>(r.failing_seed));
        return 1;
    }
    std::printf("PASS\n");
    return 0;
}

int cmdSelftest(bool list_only) {
    if (list_only) {
        for (const auto& name : selftestNames()) {
            std::cout << name << "\n";
        }
        return 0;
    }
    bool all_pass = true;
    for (const CheckResult& r : runSelftest()) {
        std::printf("%-4s %-26s %6.2fs  %s\n", r.pass ? "PASS" : "FAIL",
                    r.name.c_str(), r.seconds, r.detail.c_str());
        all_pass = all_pass && r.pass;
    }
    return all_pass ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Degeneracy-free particle-flow filtering toolkit"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "out";
    std::string methods_csv;
    std::int64_t seed = -1;
    bool trace = false;
    CLI::App* run = app.add_subcommand("run", "Run a scenario config");
    run->add_option("config", config_path, "Scenario config (JSON)")->required();
    run->add_option("--out", out_dir, "Output directory");
    run->add_option("--methods", methods_csv,
                    "Comma-separated methods (flow-recursive,flow-iterative,reweight,sir)");
    run->add_option("--seed", seed, "Override the scenario seed");
    run->add_flag("--trace", trace, "Write trace.csv for the first flow method");

    int trials = 100;
    std::int64_t gc_seed = -1;
    CLI::App* gradcheck =
        app.add_subcommand("gradcheck", "Finite-difference derivative validation");
    gradcheck->add_option("--trials", trials, "Number of random instances");
    gradcheck->add_option("--seed", gc_seed, "Base seed");

    bool list_only = false;
    CLI::App* selftest = app.add_subcommand("selftest", "Oracle acceptance suite");
    selftest->add_flag("--list", list_only, "List checks without running");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmdRun(config_path, out_dir, methods_csv, seed, trace);
        if (gradcheck->parsed()) return cmdGradcheck(trials, gc_seed);
        if (selftest->parsed()) return cmdSelftest(list_only);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
