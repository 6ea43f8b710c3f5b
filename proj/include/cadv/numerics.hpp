#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cadv {

/// A point of the box domain [0,1]^d (or of R^d before projection).
using StateVector = std::vector<double>;

struct InvalidInput : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Raised when a caller hands over an object that breaks an operation's
/// mathematical preconditions (e.g. an unnormalized density to the KL estimator).
struct ContractViolation : std::logic_error {
    using std::logic_error::logic_error;
};

struct OracleFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Clamps every coordinate into [0,1]. Throws InvalidInput on NaN/inf.
StateVector project_box(std::span<const double> v);
void project_box_inplace(std::span<double> v);

bool in_box(std::span<const double> v);

/// log(sum(exp(values))) without overflow.
double log_sum_exp(std::span<const double> values);

/// Numerically stable softmax.
std::vector<double> softmax(std::span<const double> logits);

/// Standard normal CDF.
double normal_cdf(double z);

double squared_distance(std::span<const double> a, std::span<const double> b);

/// Counter-based random stream.
///
/// Draw i of stream (seed, id) is a pure function of (seed, id, i): the
/// generator is SplitMix64 run over a key derived from seed and id. Two
/// streams with equal (seed, id) therefore produce bitwise-equal sequences
/// on every platform, and `at(i)` addresses any draw directly.
class RngStream {
  public:
    static constexpr const char* kGeneratorId = "splitmix64-counter/v1";

    RngStream(std::uint64_t seed, std::uint64_t stream_id);

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream_id() const { return stream_id_; }
    std::uint64_t position() const { return counter_; }

    std::uint64_t next_u64();
    /// Uniform in [0,1) with 53 random bits.
    double uniform();
    /// Standard normal via Box-Muller over two consecutive uniforms.
    double normal();

    void seek(std::uint64_t counter) {
        counter_ = counter;
        has_spare_ = false;
    }

    /// Raw draw at an arbitrary counter value; does not move the stream.
    std::uint64_t at(std::uint64_t counter) const;

    /// Child stream whose id mixes this stream's id with `tag`.
    RngStream derive(std::uint64_t tag) const;

  private:
    std::uint64_t seed_;
    std::uint64_t stream_id_;
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

std::uint64_t mix64(std::uint64_t x);

}  // namespace cadv
