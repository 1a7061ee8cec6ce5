#include "doctest.h"

TEST_SUITE("consistency") {}
