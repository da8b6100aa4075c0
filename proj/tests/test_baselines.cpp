#include <doctest.h>

#include "corsma/baselines.hpp"

TEST_CASE("baselines placeholder") { CHECK(true); }
