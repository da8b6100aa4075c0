#include <doctest.h>

#include <random>

#include "corsma/rates.hpp"

using namespace corsma;

namespace {

// Single UAV overhead one CS, all-ones LoS; the matched beams give closed
// form SINR Nt * p / sigma^2 * eps0 / r^2.
struct SingleUser {
  Scenario sc;
  Association assoc;
  Channels ch;
  BeamformingState state;
};

SingleUser make_single_user() {
  SingleUser s;
  s.sc = make_default_scenario(1, 1);
  s.sc.cs_positions = MatX::Constant(1, 2, 250.0);
  s.assoc.cs_to_uav = {0};
  s.assoc.clusters = {{0}};
  s.assoc.centroids = MatX::Constant(1, 2, 250.0);
  s.state.uav_positions = MatX::Constant(1, 2, 250.0);
  s.state.common = {CVecX::Zero(8)};
  s.state.private_beams = {CVecX::Zero(8)};
  s.state.sensing = {CVecX::Zero(8)};
  s.state.common_alloc = VecX::Zero(1);
  s.ch = all_channels(s.sc, s.state.uav_positions, ChannelMode::LOS_ONES, 0);
  return s;
}

}  // namespace

TEST_CASE("single user matched beam SINRs and rates") {
  SingleUser s = make_single_user();
  const double p = s.sc.p_max;

  SUBCASE("common beam only") {
    s.state.common[0] = CVecX::Constant(8, std::sqrt(p / 8.0));
    CHECK(common_sinr(s.sc, s.assoc, s.ch, s.state, 0) ==
          doctest::Approx(2.5298221281347033e4).epsilon(1e-9));
  }
  SUBCASE("private beam only") {
    s.state.private_beams[0] = CVecX::Constant(8, std::sqrt(p / 8.0));
    CHECK(private_sinr(s.sc, s.assoc, s.ch, s.state, 0) ==
          doctest::Approx(2.5298221281347033e4).epsilon(1e-9));
    RateReport rep = evaluate_rates(s.sc, s.assoc, s.ch, s.state);
    // B log2(1 + 2.5298e4) = 1.4627e7 b/s.
    CHECK(rep.private_rate[0] == doctest::Approx(1.4627e7).epsilon(1e-3));
    CHECK(rep.wsr == doctest::Approx(rep.private_rate[0]).epsilon(1e-12));
  }
}

TEST_CASE("sensing beam is excluded from communication interference by default") {
  SingleUser s = make_single_user();
  const double p = s.sc.p_max;
  s.state.private_beams[0] = CVecX::Constant(8, std::sqrt(0.5 * p / 8.0));
  s.state.sensing[0] = CVecX::Constant(8, std::sqrt(0.5 * p / 8.0));
  const double clean = private_sinr(s.sc, s.assoc, s.ch, s.state, 0);
  RateOptions opt;
  opt.sensing_as_interference = true;
  const double dirty = private_sinr(s.sc, s.assoc, s.ch, s.state, 0, opt);
  CHECK(clean > 100.0 * dirty);
  CHECK(dirty == doctest::Approx(clean / (1.0 + clean)).epsilon(1e-6));
}

TEST_CASE("sensing snr closed form overhead") {
  SingleUser s = make_single_user();
  // Steered sensing beam with all power: gamma_s = beta0/(r0^2 sigma^2) * Nt p / r_u^2.
  const CVecX a = steering_vector(8, Vec2(250, 250), 100.0, Vec2(250, 250));
  s.state.sensing[0] = std::sqrt(s.sc.p_max / 8.0) * a;
  const double gs = sensing_snr(s.sc, s.assoc, s.state);
  CHECK(gs == doctest::Approx(25.298221281347033).epsilon(1e-9));
}

TEST_CASE("common rate is coherent across UAVs") {
  Scenario sc = make_default_scenario(2, 1);
  sc.cs_positions = MatX::Constant(1, 2, 250.0);
  Association assoc;
  assoc.cs_to_uav = {0};
  assoc.clusters = {{0}, {}};
  MatX pos(2, 2);
  pos << 250, 250, 250, 250;
  Channels ch = all_channels(sc, pos, ChannelMode::LOS_ONES, 0);
  BeamformingState st;
  st.uav_positions = pos;
  st.common = {CVecX::Constant(8, std::sqrt(sc.p_max / 8.0)),
               CVecX::Constant(8, std::sqrt(sc.p_max / 8.0))};
  st.private_beams = {CVecX::Zero(8)};
  st.sensing = {CVecX::Zero(8), CVecX::Zero(8)};
  st.common_alloc = VecX::Zero(1);
  const double two = common_sinr(sc, assoc, ch, st, 0);
  st.common[1].setZero();
  const double one = common_sinr(sc, assoc, ch, st, 0);
  CHECK(two == doctest::Approx(4.0 * one).epsilon(1e-9));  // amplitude doubling
}

TEST_CASE("monte carlo sensing estimate matches the closed form") {
  Scenario sc = make_default_scenario(3, 3);
  randomize_cs_positions(sc, 21);
  Association assoc;
  assoc.cs_to_uav = {0, 1, 2};
  assoc.clusters = {{0}, {1}, {2}};
  MatX pos(3, 2);
  pos << 150, 150, 300, 250, 200, 350;
  BeamformingState st;
  st.uav_positions = pos;
  st.common.resize(3);
  st.sensing.resize(3);
  st.private_beams.resize(3);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 1.0);
  auto rand_beam = [&](double power) {
    CVecX v(sc.Nt);
    for (int n = 0; n < sc.Nt; ++n) v[n] = cplx(g(rng), g(rng));
    return std::sqrt(power) * v / v.norm();
  };
  for (int u = 0; u < 3; ++u) {
    st.common[u] = rand_beam(0.4 * sc.p_max);
    st.sensing[u] = rand_beam(0.2 * sc.p_max);
  }
  for (int k = 0; k < 3; ++k) st.private_beams[k] = rand_beam(0.35 * sc.p_max);
  st.common_alloc = VecX::Zero(3);

  const double exact = sensing_snr(sc, assoc, st);
  // 64 symbols x 1500 draws = 9.6e4 effective samples.
  const double mc = sensing_snr_monte_carlo(sc, assoc, st, 64, 1500, 99);
  CHECK(mc == doctest::Approx(exact).epsilon(0.02));
}

TEST_CASE("common allocation feasibility flag") {
  SingleUser s = make_single_user();
  s.state.common[0] = CVecX::Constant(8, std::sqrt(s.sc.p_max / 8.0));
  RateReport ok = evaluate_rates(s.sc, s.assoc, s.ch, s.state);
  CHECK(ok.common_alloc_feasible);
  s.state.common_alloc[0] = ok.common_rate_min * 1.01;
  RateReport bad = evaluate_rates(s.sc, s.assoc, s.ch, s.state);
  CHECK_FALSE(bad.common_alloc_feasible);
  CHECK(bad.wsr == doctest::Approx(bad.total_rate.dot(s.sc.weights)));
}
