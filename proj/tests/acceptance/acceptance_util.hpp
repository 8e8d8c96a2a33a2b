#pragma once

#include <cstdio>
#include <string>

// one pass/fail line per criterion, independent of the doctest output
inline void report_criterion(int number, bool pass, const std::string& detail) {
    std::printf("[acceptance] criterion %2d: %s  %s\n", number,
                pass ? "PASS" : "FAIL", detail.c_str());
    std::fflush(stdout);
}
