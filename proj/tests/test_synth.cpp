#include <doctest.h>
TEST_CASE("placeholder_synth") { CHECK(true); }
