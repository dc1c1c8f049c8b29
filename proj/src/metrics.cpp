#include "spanrec/metrics.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <cmath>

#include "spanrec/common.hpp"

namespace spanrec {
namespace {

void check_pair(const std::vector<double>& predictions, const std::vector<double>& targets) {
    if (predictions.empty()) throw ValidationError("metrics need at least one prediction");
    if (predictions.size() != targets.size())
        throw ValidationError("predictions and targets differ in length");
}

double mean_of(const std::vector<double>& v) {
    double acc = 0.0;
    for (double x : v) acc += x;
    return acc / static_cast<double>(v.size());
}

// Unbiased sample variance.
double variance_of(const std::vector<double>& v, double mean) {
    double acc = 0.0;
    for (double x : v) acc += (x - mean) * (x - mean);
    return acc / static_cast<double>(v.size() - 1);
}

}  // namespace

double mae(const std::vector<double>& predictions, const std::vector<double>& targets) {
    check_pair(predictions, targets);
    double acc = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) acc += std::fabs(predictions[i] - targets[i]);
    return acc / static_cast<double>(predictions.size());
}

double rmse(const std::vector<double>& predictions, const std::vector<double>& targets) {
    check_pair(predictions, targets);
    double acc = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const double d = predictions[i] - targets[i];
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(predictions.size()));
}

WelchResult welch_details(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() < 2 || b.size() < 2)
        throw ValidationError("welch_t_test needs at least two values per sample");

    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    const double ma = mean_of(a);
    const double mb = mean_of(b);
    const double va = variance_of(a, ma);
    const double vb = variance_of(b, mb);

    WelchResult r;
    if (va == 0.0 && vb == 0.0) {
        r.t = ma == mb ? 0.0 : (ma > mb ? std::numeric_limits<double>::infinity()
                                        : -std::numeric_limits<double>::infinity());
        r.df = na + nb - 2.0;
        r.p_value = ma == mb ? 1.0 : 0.0;
        return r;
    }

    const double sa = va / na;
    const double sb = vb / nb;
    r.t = (ma - mb) / std::sqrt(sa + sb);
    r.df = (sa + sb) * (sa + sb) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    const boost::math::students_t dist(r.df);
    r.p_value = 2.0 * boost::math::cdf(dist, -std::fabs(r.t));
    return r;
}

double welch_t_test(const std::vector<double>& a, const std::vector<double>& b) {
    return welch_details(a, b).p_value;
}

}  // namespace spanrec
