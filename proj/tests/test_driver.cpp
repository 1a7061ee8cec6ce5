#include "doctest.h"

TEST_SUITE("driver") {}
