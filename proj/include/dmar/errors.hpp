#pragma once

#include <stdexcept>
#include <string>

namespace dmar {

// Violated API precondition or internal invariant (a programming error).
class contract_error : public std::logic_error {
 public:
  explicit contract_error(const std::string& what) : std::logic_error(what) {}
};

// Degenerate or malformed data: empty arms, schema violations, degenerate
// slices. Maps to CLI exit code 3.
class data_error : public std::runtime_error {
 public:
  explicit data_error(const std::string& what) : std::runtime_error(what) {}
};

// Numerical failure: non-finite values, bracket failures. CLI exit code 4.
class numeric_error : public std::runtime_error {
 public:
  explicit numeric_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace dmar
