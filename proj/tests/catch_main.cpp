// Single compilation of the amalgamated Catch2 (provides main()).
#include <catch2/catch_amalgamated.cpp>
