// Builds the amalgamated Catch2 implementation once for all test binaries.
#include <catch2/catch_amalgamated.cpp>
