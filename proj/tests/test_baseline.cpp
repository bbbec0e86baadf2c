#include <doctest.h>
TEST_CASE("placeholder_baseline") { CHECK(true); }
