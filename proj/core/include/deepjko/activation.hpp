#pragma once

#include <memory>

#include "deepjko/tape.hpp"

namespace deepjko {

// σ(x) = log(eˣ + e⁻ˣ), evaluated as |x| + log1p(e^{-2|x|}) so it never overflows.
double sigma(double x);
// σ'(x) = tanh(x)
double sigma_prime(double x);
// σ''(x) = 1 - tanh²(x)
double sigma_second(double x);
// σ'''(x) = -2 tanh(x) (1 - tanh²(x))
double sigma_third(double x);

// Vectorized tape kernels. Each carries the next derivative so that the
// closed-form input derivatives can themselves be differentiated in θ.
std::shared_ptr<const ad::UnaryKernel> sigma_kernel();
std::shared_ptr<const ad::UnaryKernel> sigma_prime_kernel();
std::shared_ptr<const ad::UnaryKernel> sigma_second_kernel();

}  // namespace deepjko
