#pragma once

#include <string>
#include <vector>

#include "shapednet/errors.hpp"

namespace shapednet {

// One subject's ground-truth and predicted body-fat percentage.
struct BfPair {
    double truth = 0;  // b (reference value)
    double pred = 0;   // b_hat
};

struct MeanSd {
    double mean = 0, sd = 0;  // sample sd, n-1 denominator (0 when n < 2)
};

MeanSd mape(const std::vector<BfPair>& pairs);  // mean/sd of 100*|b_hat-b|/b
MeanSd mae(const std::vector<BfPair>& pairs);   // mean/sd of |b_hat-b|
MeanSd msd(const std::vector<BfPair>& pairs);   // mean/sd of b_hat-b (signed)

// Numeric special functions used by the interval and Tukey machinery; all
// documented pure computations, exposed for oracle tests.
double log_gamma(double x);
double incomplete_beta(double a, double b, double x);  // regularized I_x(a,b)
double student_t_cdf(double t, double dof);
double student_t_quantile(double p, double dof);  // bisection, |err| <= 1e-10
double normal_pdf(double x);
double normal_cdf(double x);
// P(Q <= q) for the studentized range with k groups and dof error degrees of
// freedom; numeric double integral, absolute tolerance ~1e-6.
double studentized_range_cdf(double q, int k, double dof);

struct ConfInterval {
    double lo = 0, hi = 0;
};

// mean +/- t_{1-alpha/2, n-1} * s / sqrt(n); requires n >= 2.
ConfInterval t_confidence_interval(const std::vector<double>& samples, double alpha = 0.05);

double spread(const ConfInterval& ci);  // hi - lo; inverted interval -> error

struct TukeyPair {
    std::string group_a, group_b;
    double md = 0;  // mean(A) - mean(B)
    double p = 0;
    bool reject = false;  // p < alpha
};

struct NamedSamples {
    std::string name;
    std::vector<double> values;
};

// Tukey's HSD over >= 2 groups (each n >= 2): pooled within-group MSE,
// studentized-range statistic with the Tukey-Kramer adjustment for unbalanced
// sizes, p from studentized_range_cdf.
std::vector<TukeyPair> tukey_hsd(const std::vector<NamedSamples>& groups,
                                 double alpha = 0.05);

}  // namespace shapednet
