#include "doctest.h"

TEST_SUITE("policy_optim") {}
