#include <doctest.h>
TEST_CASE("placeholder_head") { CHECK(true); }
