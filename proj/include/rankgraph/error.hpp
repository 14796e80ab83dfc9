#pragma once

#include <stdexcept>
#include <string>

namespace rankgraph {

// Invalid inputs: bad files, schema violations, shape mismatches, bad config.
// Everything else (I/O failures, non-finite blowups mid-run) stays a plain
// std::runtime_error. The CLI maps ValidationError -> exit 1, runtime -> 2.
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

[[noreturn]] inline void fail_validation(const std::string& msg) {
    throw ValidationError(msg);
}

}  // namespace rankgraph
