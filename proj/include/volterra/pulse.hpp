#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace volterra {

/// Uniformly sampled real signal. Amplitudes are dimensionless for training
/// data and rad/us when the pulse is a Rabi-frequency control.
struct Pulse {
    std::vector<double> samples;
    double dt = 1.0;            // sample spacing in us, > 0
    std::string label;

    std::size_t size() const { return samples.size(); }

    /// Throws validation_error if empty, dt <= 0, or any sample is not finite.
    void validate() const;
};

/// Input/output pulse pair used to fit a distortion model. For data produced
/// by a memory-R channel the output has length input.size() + R - 1.
struct TrainingPair {
    Pulse input;
    Pulse output;
};

/// Deterministic random stream with a portable layout: the same seed yields
/// the same draws on every platform. The mt19937_64 word sequence is fixed
/// by the standard; only the std::*_distribution transforms are
/// implementation-defined, so those are spelled out here instead.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform draw in [0, 1) with 53-bit resolution.
    double uniform01();

    /// Uniform draw in [lo, hi].
    double uniform(double lo, double hi);

    /// Standard normal draw (Box-Muller, pairs cached).
    double normal();

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

/// i.i.d. uniform samples in [-amplitude, +amplitude].
Pulse generate_random_noise(std::size_t steps, double amplitude, std::uint64_t seed, double dt = 1.0);

/// Natural cubic spline through `knots` uniformly spaced abscissae with
/// seeded uniform ordinates in [-1, 1], sampled at `steps` points.
/// knots = 2 degenerates to a straight line.
Pulse generate_spline(std::size_t steps, std::size_t knots, std::uint64_t seed, double dt = 1.0);

/// samples[n] = amplitude * cos(2*pi*cycles*n/steps + phase).
Pulse generate_cosine(std::size_t steps, double cycles, double amplitude, double phase, double dt = 1.0);

/// samples[n] = amplitude * exp(-(n - center)^2 / (2*sigma^2)).
Pulse generate_gaussian_pulse(std::size_t steps, double center, double sigma, double amplitude, double dt = 1.0);

/// Adds an independent Normal(0, sigma) draw to every sample. Length, dt and
/// label are untouched.
Pulse add_measurement_noise(const Pulse& p, double sigma, std::uint64_t seed);

/// CSV round-trip: header "# dt=<float> label=<string>", then one amplitude
/// per line at full double precision.
Pulse read_pulse(const std::string& path);
void write_pulse(const std::string& path, const Pulse& p);

} // namespace volterra
