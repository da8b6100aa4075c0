#include <doctest.h>

#include "corsma/pipeline.hpp"

TEST_CASE("pipeline placeholder") { CHECK(true); }
