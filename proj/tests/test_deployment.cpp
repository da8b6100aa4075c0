#include <doctest.h>

#include "corsma/deployment.hpp"

TEST_CASE("deployment placeholder") { CHECK(true); }
