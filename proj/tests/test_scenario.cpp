#include <doctest.h>

#include "corsma/scenario.hpp"

using namespace corsma;

TEST_CASE("db and dbm conversions") {
  CHECK(dbm_to_watts(25.0) == doctest::Approx(0.31622776601683794).epsilon(1e-12));
  CHECK(dbm_to_watts(-110.0) == doctest::Approx(1e-14).epsilon(1e-12));
  CHECK(db_to_linear(-60.0) == doctest::Approx(1e-6).epsilon(1e-12));
  CHECK(db_to_linear(-50.0) == doctest::Approx(1e-5).epsilon(1e-12));
  CHECK(watts_to_dbm(dbm_to_watts(7.3)) == doctest::Approx(7.3).epsilon(1e-12));
}

TEST_CASE("default scenario matches the reference configuration") {
  Scenario sc = make_default_scenario();
  CHECK(sc.U == 3);
  CHECK(sc.K == 5);
  CHECK(sc.Nt == 8);
  CHECK(sc.p_max == doctest::Approx(0.31622776601683794));
  CHECK(sc.noise_power == doctest::Approx(1e-14));
  CHECK(sc.eps0 == doctest::Approx(1e-6));
  CHECK(sc.beta0 == doctest::Approx(1e-5));
  CHECK(sc.bandwidth == doctest::Approx(1e6));
  CHECK(sc.sensing_threshold == doctest::Approx(2.0));
  CHECK(sc.weights.sum() == doctest::Approx(1.0));
  CHECK(sc.rate_thresholds[0] == doctest::Approx(1e6));
  CHECK(sc.rx_uav_position == sc.ts_position);
  randomize_cs_positions(sc, 7);
  CHECK_NOTHROW(sc.validate());
}

TEST_CASE("validation rejects malformed scenarios") {
  Scenario sc = make_default_scenario();
  randomize_cs_positions(sc, 1);
  sc.validate();
  Scenario bad = sc;
  bad.cs_positions = MatX::Zero(2, 2);
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = sc;
  bad.noise_power = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = sc;
  bad.weights = VecX::Constant(5, -0.2);
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("cs generation is deterministic per seed and inside the area") {
  Scenario a = make_default_scenario();
  Scenario b = make_default_scenario();
  randomize_cs_positions(a, 42);
  randomize_cs_positions(b, 42);
  CHECK((a.cs_positions - b.cs_positions).cwiseAbs().maxCoeff() == 0.0);
  randomize_cs_positions(b, 43);
  CHECK((a.cs_positions - b.cs_positions).cwiseAbs().maxCoeff() > 1e-6);
  CHECK(a.cs_positions.minCoeff() >= 0.0);
  CHECK(a.cs_positions.maxCoeff() <= 500.0);
}

TEST_CASE("json round trip and unit suffixes") {
  Scenario sc = make_default_scenario();
  randomize_cs_positions(sc, 5);
  Scenario back = scenario_from_json(scenario_to_json(sc));
  CHECK(back.U == sc.U);
  CHECK((back.cs_positions - sc.cs_positions).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(back.p_max == doctest::Approx(sc.p_max));
  CHECK(scenario_hash(back) == scenario_hash(sc));

  const char* text = R"({"U":2,"K":3,"p_max_dbm":20.0,"noise_power_dbm":-110.0,
    "eps0_db":-60.0,"beta0_db":-50.0,"rate_threshold":2e6,
    "cs_positions":[[0,0],[10,0],[0,10]]})";
  Scenario s2 = scenario_from_json(text);
  CHECK(s2.p_max == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(s2.noise_power == doctest::Approx(1e-14));
  CHECK(s2.eps0 == doctest::Approx(1e-6));
  CHECK(s2.beta0 == doctest::Approx(1e-5));
  CHECK(s2.rate_thresholds.size() == 3);
  CHECK(s2.rate_thresholds[2] == doctest::Approx(2e6));
  CHECK(s2.weights.size() == 3);
}

TEST_CASE("scenario hash separates different instances") {
  Scenario a = make_default_scenario();
  randomize_cs_positions(a, 1);
  Scenario b = a;
  CHECK(scenario_hash(a) == scenario_hash(b));
  b.cs_positions(0, 0) += 1e-6;
  CHECK(scenario_hash(a) != scenario_hash(b));
}
