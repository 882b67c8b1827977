#pragma once

#include <functional>

namespace sdemix {

// Adaptive Simpson on [a, b] (b < a allowed) to absolute tolerance tol.
double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                        double tol = 1e-10, int max_depth = 50);

}  // namespace sdemix
