#include <doctest.h>
TEST_CASE("placeholder_protocols") { CHECK(true); }
