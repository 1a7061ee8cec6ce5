#include "doctest.h"

TEST_SUITE("rollout") {}
