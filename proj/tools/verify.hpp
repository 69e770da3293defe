#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace deepjko::cli {

struct Check {
  std::string name;
  double measured = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

struct VerifyOptions {
  std::size_t dim = 2;     // jacobi
  std::size_t ntau = 64;   // jacobi
  std::size_t cases = 50;  // grad, hessian
  std::uint64_t seed = 7;
};

const std::vector<std::string>& suite_names();

// Throws Error{InvalidArgument} for an unknown suite.
std::vector<Check> run_suite(const std::string& suite, const VerifyOptions& options);

}  // namespace deepjko::cli
