#include "cadv/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace cadv {

std::uint64_t mix64(std::uint64_t x) {
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

namespace {
constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;
}

StateVector project_box(std::span<const double> v) {
    StateVector out(v.begin(), v.end());
    project_box_inplace(out);
    return out;
}

void project_box_inplace(std::span<double> v) {
    for (double& x : v) {
        if (!std::isfinite(x)) throw InvalidInput("project_box: non-finite coordinate");
        x = std::clamp(x, 0.0, 1.0);
    }
}

bool in_box(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return x >= 0.0 && x <= 1.0; });
}

double log_sum_exp(std::span<const double> values) {
    if (values.empty()) throw InvalidInput("log_sum_exp: empty input");
    const double m = *std::max_element(values.begin(), values.end());
    if (!std::isfinite(m)) return m;
    double acc = 0.0;
    for (double v : values) acc += std::exp(v - m);
    return m + std::log(acc);
}

std::vector<double> softmax(std::span<const double> logits) {
    const double lse = log_sum_exp(logits);
    std::vector<double> p(logits.size());
    std::transform(logits.begin(), logits.end(), p.begin(),
                   [lse](double l) { return std::exp(l - lse); });
    return p;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double squared_distance(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw InvalidInput("squared_distance: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id), key_(mix64(seed ^ mix64(stream_id + kGolden))) {}

std::uint64_t RngStream::at(std::uint64_t counter) const {
    return mix64(key_ + (counter + 1) * kGolden);
}

std::uint64_t RngStream::next_u64() { return at(counter_++); }

double RngStream::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double RngStream::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    // 1 - u keeps the log argument in (0,1].
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

RngStream RngStream::derive(std::uint64_t tag) const {
    return RngStream(seed_, mix64(stream_id_ ^ mix64(tag + 0x632be59bd9b4e019ULL)));
}

}  // namespace cadv
