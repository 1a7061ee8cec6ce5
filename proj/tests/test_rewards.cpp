#include "doctest.h"

TEST_SUITE("rewards") {}
