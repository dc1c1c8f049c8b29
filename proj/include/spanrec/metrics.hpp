#pragma once

#include <vector>

namespace spanrec {

// Mean absolute error; throws ValidationError on empty or mismatched input.
double mae(const std::vector<double>& predictions, const std::vector<double>& targets);

// Root mean squared error; same preconditions as mae.
double rmse(const std::vector<double>& predictions, const std::vector<double>& targets);

struct WelchResult {
    double t = 0.0;
    double df = 0.0;
    double p_value = 1.0;
};

// Two-sided Welch t-test with Welch-Satterthwaite degrees of freedom. Each
// sample needs >= 2 values. When both variances are zero the p-value is 1 for
// equal means and 0 otherwise.
WelchResult welch_details(const std::vector<double>& a, const std::vector<double>& b);
double welch_t_test(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace spanrec
