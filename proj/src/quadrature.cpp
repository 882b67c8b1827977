#include "sdemix/quadrature.hpp"

#include <cmath>

#include "sdemix/error.hpp"

namespace sdemix {
namespace {

double simpson_rec(const std::function<double(double)>& f, double a, double b, double fa,
                   double fm, double fb, double whole, double tol, int depth) {
    double m = 0.5 * (a + b);
    double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    double flm = f(lm), frm = f(rm);
    double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    double diff = left + right - whole;
    if (std::fabs(diff) <= 15.0 * tol) return left + right + diff / 15.0;
    if (depth <= 0) throw NumericError("adaptive Simpson: recursion depth exhausted");
    return simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

}  // namespace

double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                        double tol, int max_depth) {
    if (a == b) return 0.0;
    if (b < a) return -adaptive_simpson(f, b, a, tol, max_depth);
    double fa = f(a), fb = f(b), m = 0.5 * (a + b), fm = f(m);
    double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    double r = simpson_rec(f, a, b, fa, fm, fb, whole, tol, max_depth);
    if (!std::isfinite(r)) throw NumericError("adaptive Simpson: non-finite integral");
    return r;
}

}  // namespace sdemix
