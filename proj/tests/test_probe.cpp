#include <doctest.h>

#include "tmf/errors.hpp"
#include "tmf/probe.hpp"

using namespace tmf;

TEST_CASE("attention and MLP probes report no violations") {
  for (auto id : {EncoderId::attention, EncoderId::mlp}) {
    ProbeSpec spec;
    spec.encoder = id;
    spec.samples = 500;
    spec.seed = 3;
    const auto rep = probe_assumptions(spec);
    CHECK(rep.sample_count == 500);
    CHECK(rep.max_violation_margin <= 0.0);
    CHECK(rep.k_hat <= 1.0);
    CHECK(rep.k_hat > 0.0);
    CHECK(rep.param_grad_envelope > 0.0);
    CHECK(rep.state_jac_envelope > 0.0);
    CHECK(std::isfinite(rep.state_jac_envelope));
  }
}

TEST_CASE("zero tokens give zero output") {
  ProbeSpec spec;
  spec.zero_T = true;
  spec.samples = 20;
  const auto rep = probe_assumptions(spec);
  CHECK(rep.k_hat == 0.0);
  CHECK(rep.growth_margin == 0.0);
  CHECK(rep.closed_form_margin == 0.0);
}

TEST_CASE("probe report serialization and ids") {
  ProbeSpec spec;
  spec.encoder = encoder_from_string("mlp");
  spec.samples = 10;
  const auto j = to_json(probe_assumptions(spec));
  CHECK(j.at("encoder") == "mlp");
  for (const char* key : {"sample_count", "k_hat", "param_grad_envelope", "state_jac_envelope",
                          "growth_margin", "closed_form_margin", "max_violation_margin"})
    CHECK(j.contains(key));
  CHECK_THROWS_AS(encoder_from_string("conv"), ConfigError);
  spec.D = 0;
  CHECK_THROWS_AS(probe_assumptions(spec), ConfigError);
}
