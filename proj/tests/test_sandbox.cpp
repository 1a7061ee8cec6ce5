#include "doctest.h"

TEST_SUITE("sandbox") {}
