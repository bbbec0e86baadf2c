#include <doctest.h>
TEST_CASE("placeholder_experiment") { CHECK(true); }
