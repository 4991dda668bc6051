#pragma once
// Runnable property suites. Each compares the optimized code paths against
// the plain-loop oracles and reports the worst measured deviation.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace qmatch::verify {

struct PropertyResult {
  std::string name;
  bool passed = false;
  double measured = 0.0;
  double threshold = 0.0;
  std::string detail;
};

struct SuiteReport {
  std::string suite;
  std::vector<PropertyResult> properties;
  bool all_passed() const;
};

// Random clouds with n in [10, 200], d in [2, 16] and |u| <= 0.9; the
// residual |U(Q) - u| is measured with the direct oracle.
SuiteReport inverse_map(std::size_t trials, std::uint64_t seed);

// Exhaustive over all C(n, b) batches: unbiasedness of the memory-bank
// estimator and the finite-population variance formula.
SuiteReport variance(std::size_t n, std::size_t b, std::uint64_t seed);

// Analytic vs central-difference gradients across adapter and feature-map
// kinds.
SuiteReport gradients(std::size_t instances, std::uint64_t seed);

// Assignment-based W2 against brute force and a few exact identities.
SuiteReport wasserstein(std::size_t trials, std::uint64_t seed);

void print(std::ostream& out, const SuiteReport& report);

}  // namespace qmatch::verify
