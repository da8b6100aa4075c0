#include <doctest.h>

#include "corsma/beamforming.hpp"

TEST_CASE("beamforming placeholder") { CHECK(true); }
