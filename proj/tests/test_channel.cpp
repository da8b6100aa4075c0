#include <doctest.h>

#include "corsma/channel.hpp"

using namespace corsma;

TEST_CASE("slant range") {
  CHECK(distance3d(Vec2(0, 0), 100.0, Vec2(300, 400)) ==
        doctest::Approx(509.9019513592785).epsilon(1e-12));
  CHECK(distance3d(Vec2(250, 250), 100.0, Vec2(250, 250)) == doctest::Approx(100.0));
}

TEST_CASE("steering vector overhead alternates sign") {
  // Directly above the target the elevation cosine is 1.
  CVecX a = steering_vector(4, Vec2(0, 0), 100.0, Vec2(0, 0));
  CHECK(std::abs(a[0] - cplx(1, 0)) < 1e-12);
  CHECK(std::abs(a[1] - cplx(-1, 0)) < 1e-12);
  CHECK(std::abs(a[2] - cplx(1, 0)) < 1e-12);
  CHECK(std::abs(a[3] - cplx(-1, 0)) < 1e-12);
  for (int n = 0; n < 4; ++n) CHECK(std::abs(a[n]) == doctest::Approx(1.0));
}

TEST_CASE("los channel magnitude follows the path loss") {
  Scenario sc = make_default_scenario(1, 1);
  sc.cs_positions = MatX::Zero(1, 2);
  MatX pos = MatX::Zero(1, 2);  // UAV overhead at 100 m
  for (ChannelMode mode : {ChannelMode::LOS_ONES, ChannelMode::LOS_STEERING}) {
    CVecX h = comm_channel(sc, 0, 0, pos, mode, 0);
    // ||h||^2 = Nt * eps0 / r^2 = 8e-10 at r = 100.
    CHECK(h.squaredNorm() == doctest::Approx(8e-10).epsilon(1e-12));
    for (int n = 0; n < sc.Nt; ++n) CHECK(std::abs(h[n]) == doctest::Approx(1e-5).epsilon(1e-12));
  }
  CVecX ones = comm_channel(sc, 0, 0, pos, ChannelMode::LOS_ONES, 0);
  for (int n = 0; n < sc.Nt; ++n) CHECK(ones[n].imag() == 0.0);
}

TEST_CASE("rayleigh channels are seeded and unit mean power") {
  Scenario sc = make_default_scenario(2, 3);
  randomize_cs_positions(sc, 3);
  MatX pos(2, 2);
  pos << 100, 100, 400, 400;
  CVecX h1 = comm_channel(sc, 0, 1, pos, ChannelMode::RAYLEIGH, 11);
  CVecX h2 = comm_channel(sc, 0, 1, pos, ChannelMode::RAYLEIGH, 11);
  CHECK((h1 - h2).norm() == 0.0);
  CVecX h3 = comm_channel(sc, 0, 1, pos, ChannelMode::RAYLEIGH, 12);
  CHECK((h1 - h3).norm() > 0.0);
  CVecX h4 = comm_channel(sc, 1, 1, pos, ChannelMode::RAYLEIGH, 11);
  CHECK((h1 - h4).norm() > 0.0);

  // Average fading power over many draws approaches eps0 / r^2 per antenna.
  const double r = distance3d(Vec2(pos.row(0)), sc.uav_altitude, Vec2(sc.cs_positions.row(1)));
  double acc = 0.0;
  const int draws = 4000;
  for (int d = 0; d < draws; ++d)
    acc += comm_channel(sc, 0, 1, pos, ChannelMode::RAYLEIGH, 1000 + d).squaredNorm();
  const double mean_gain = acc / draws / sc.Nt;
  CHECK(mean_gain == doctest::Approx(sc.eps0 / (r * r)).epsilon(0.05));
}

TEST_CASE("sensing gain closed form") {
  Scenario sc = make_default_scenario(1, 1);
  sc.cs_positions = MatX::Zero(1, 2);
  // UAV overhead at the target: r_u = r_0 = 100 m.
  CHECK(sensing_gain(sc, Vec2(250, 250)) == doctest::Approx(3.1622776601683794e-7).epsilon(1e-12));
}

TEST_CASE("channel argument validation") {
  Scenario sc = make_default_scenario(1, 1);
  sc.cs_positions = MatX::Zero(1, 2);
  MatX pos = MatX::Zero(1, 2);
  CHECK_THROWS_AS(comm_channel(sc, 1, 0, pos, ChannelMode::LOS_ONES, 0), std::invalid_argument);
  CHECK_THROWS_AS(comm_channel(sc, 0, 5, pos, ChannelMode::LOS_ONES, 0), std::invalid_argument);
  MatX bad = MatX::Zero(2, 2);
  CHECK_THROWS_AS(comm_channel(sc, 0, 0, bad, ChannelMode::LOS_ONES, 0), std::invalid_argument);
}
