#include <doctest.h>
TEST_CASE("placeholder_encoder") { CHECK(true); }
