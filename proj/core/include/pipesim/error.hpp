#pragma once

#include <stdexcept>
#include <string>

namespace pipesim {

// Raised for malformed inputs, violated invariants, and infeasible requests.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace pipesim
