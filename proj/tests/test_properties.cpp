#include <doctest.h>

#include "properties.hpp"

namespace {

void check(const props::Outcome& o) {
  CHECK(o.cases == 1000);
  INFO("worst = " << o.worst);
  CHECK(o.failures == 0);
}

}  // namespace

TEST_CASE("identifiability of (W G, V G^-T)") { check(props::identifiability(1000, 1)); }
TEST_CASE("subspace distance is span invariant") { check(props::distance_span_invariance(1000, 2)); }
TEST_CASE("subspace distance is symmetric and in [0, 1]") { check(props::distance_symmetry_range(1000, 3)); }
TEST_CASE("response scaling keeps span(W_hat)") { check(props::response_scaling(1000, 4)); }
TEST_CASE("spectral step is rotation equivariant") { check(props::spectral_equivariance(1000, 5)); }
