#include "doctest.h"

TEST_SUITE("generators") {}
