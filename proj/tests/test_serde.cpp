#include "doctest.h"

TEST_SUITE("serde") {}
