#include "doctest.h"

TEST_SUITE("answers") {}
