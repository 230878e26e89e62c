#include <doctest.h>

#include <json.hpp>

#include "flowfilt/scenario_config.hpp"

using namespace flowfilt;
using nlohmann::json;

namespace {

json minimalConfig() {
    return json{
        {"scenario", {{"name", "unit"}}},
        {"seed", 5},
        {"state_dim", 1},
        {"system", {{"kind", "identity"}}},
        {"likelihood",
         {{"kind", "gaussian-additive"},
          {"measurement_fn", "identity"},
          {"noise_cov", {{1.0}}}}},
        {"prior",
         {{"kind", "gaussian"},
          {"mean", {0.0}},
          {"cov", {{1.0}}},
          {"count", 10}}},
        {"measurements", {{0.5}}},
    };
}

std::string fieldOf(const json& config) {
    try {
        parseRunSetup(config, ".");
    } catch (const ConfigError& e) {
        return e.field();
    }
    return "";
}

} // namespace

TEST_CASE("minimal config parses") {
    RunSetup setup = parseRunSetup(minimalConfig(), ".");
    CHECK(setup.name == "unit");
    CHECK(setup.scenario.seed == 5);
    CHECK(setup.scenario.prior.count() == 10);
    CHECK(setup.scenario.measurements.size() == 1);
    REQUIRE(setup.methods.size() == 1);
    CHECK(setup.methods[0] == Method::flow_recursive);
    CHECK(setup.config_hash != 0);
}

TEST_CASE("validation errors carry the offending field path") {
    json cfg = minimalConfig();
    cfg["measurements"] = {{0.5, 1.0}}; // 2D measurement against a 1D likelihood
    CHECK(fieldOf(cfg) == "measurements[0]");

    cfg = minimalConfig();
    cfg.erase("state_dim");
    CHECK(fieldOf(cfg) == "state_dim");

    cfg = minimalConfig();
    cfg["surprise"] = 1;
    CHECK(fieldOf(cfg) == "surprise");

    cfg = minimalConfig();
    cfg["flow"] = {{"k1", 2.0}};
    CHECK(fieldOf(cfg) == "flow.k1");

    cfg = minimalConfig();
    cfg["flow"] = {{"integrator", "euler"}};
    CHECK(fieldOf(cfg) == "flow.integrator");

    cfg = minimalConfig();
    cfg["prior"]["mean"] = {0.0, 0.0};
    CHECK(fieldOf(cfg) == "prior.mean");

    cfg = minimalConfig();
    cfg["likelihood"]["noise_cov"] = {{1.0, 0.0}};
    CHECK(fieldOf(cfg) == "likelihood.noise_cov");
}

TEST_CASE("flow and output sections are honored") {
    json cfg = minimalConfig();
    cfg["flow"] = {{"variant", "iterative"},
                   {"integrator", "adaptive-heun"},
                   {"tolerance", 1e-4},
                   {"k1", 50.0}};
    cfg["output"] = {{"methods", {"flow-iterative", "sir"}}};
    RunSetup setup = parseRunSetup(cfg, ".");
    CHECK(setup.scenario.flow.variant == FlowVariant::iterative);
    CHECK(setup.scenario.flow.integrator == FlowIntegrator::adaptive_heun);
    CHECK(setup.scenario.flow.tolerance == 1e-4);
    CHECK(setup.scenario.flow.params.k1 == 50.0);
    CHECK(setup.scenario.flow.params.k2 == 96.0); // 2 * (k1 - 2)
    REQUIRE(setup.methods.size() == 2);
    CHECK(setup.methods[0] == Method::flow_iterative);
    CHECK(setup.methods[1] == Method::sir);
}

TEST_CASE("config hash tracks semantics, not formatting") {
    const char* compact =
        R"({"state_dim":1,"seed":3,"system":{"kind":"identity"}})";
    const char* spaced =
        R"({
             "seed":    3,
             "system":  { "kind" : "identity" },
             "state_dim": 1
           })";
    CHECK(configHash(json::parse(compact)) == configHash(json::parse(spaced)));

    json changed = json::parse(compact);
    changed["seed"] = 4;
    CHECK(configHash(changed) != configHash(json::parse(compact)));
}

TEST_CASE("gaussian prior sampling is seed-stable") {
    RunSetup a = parseRunSetup(minimalConfig(), ".");
    RunSetup b = parseRunSetup(minimalConfig(), ".");
    CHECK((a.scenario.prior.locations() - b.scenario.prior.locations())
              .cwiseAbs()
              .maxCoeff() == 0.0);

    json other = minimalConfig();
    other["seed"] = 6;
    RunSetup c = parseRunSetup(other, ".");
    CHECK((a.scenario.prior.locations() - c.scenario.prior.locations())
              .cwiseAbs()
              .maxCoeff() != 0.0);
}

TEST_CASE("loadRunSetup reports unreadable and malformed files") {
    CHECK_THROWS_AS(loadRunSetup("/nonexistent/path/config.json"), ConfigError);
}
