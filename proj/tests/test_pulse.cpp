#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "volterra/errors.hpp"
#include "volterra/pulse.hpp"

#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

using namespace volterra;

namespace {

// plain DFT magnitude at bin k
double dft_mag(const std::vector<double>& x, std::size_t k) {
    std::complex<double> acc = 0.0;
    const double w = -2.0 * std::numbers::pi * static_cast<double>(k) / x.size();
    for (std::size_t n = 0; n < x.size(); ++n)
        acc += x[n] * std::polar(1.0, w * static_cast<double>(n));
    return std::abs(acc);
}

double high_band_mean(const Pulse& p) {
    const std::size_t lo = p.size() / 4;
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t k = lo; k <= p.size() / 2; ++k, ++count)
        sum += dft_mag(p.samples, k);
    return sum / count;
}

std::filesystem::path temp_file(const std::string& name) {
    return std::filesystem::temp_directory_path() / name;
}

} // namespace

TEST_CASE("random noise pulses stay within amplitude and are deterministic") {
    Pulse p = generate_random_noise(4000, 1.0, 7);
    REQUIRE(p.size() == 4000);
    for (double v : p.samples)
        CHECK(std::abs(v) <= 1.0);
    Pulse q = generate_random_noise(4000, 1.0, 7);
    CHECK(p.samples == q.samples);
    Pulse r = generate_random_noise(4000, 1.0, 8);
    CHECK(p.samples != r.samples);

    Pulse z = generate_random_noise(1, 0.0, 0);
    REQUIRE(z.size() == 1);
    CHECK(z.samples[0] == 0.0);
}

TEST_CASE("spline pulses are continuous and degenerate to a line at two knots") {
    Pulse p = generate_spline(500, 5, 3);
    REQUIRE(p.size() == 500);
    double max_ord = 0.0;
    for (double v : p.samples)
        max_ord = std::max(max_ord, std::abs(v));
    for (std::size_t n = 1; n < p.size(); ++n)
        CHECK(std::abs(p.samples[n] - p.samples[n - 1]) < 2.0 * max_ord);

    Pulse line = generate_spline(10, 2, 11);
    for (std::size_t n = 2; n < line.size(); ++n) {
        double second = line.samples[n] - 2.0 * line.samples[n - 1] + line.samples[n - 2];
        CHECK(std::abs(second) < 1e-12);
    }
}

TEST_CASE("spline high-frequency content grows with knot count") {
    for (int steps : {500}) {
        double means[3] = {0.0, 0.0, 0.0};
        int knots[3] = {4, 16, 64};
        for (std::uint64_t seed = 0; seed < 20; ++seed)
            for (int i = 0; i < 3; ++i)
                means[i] += high_band_mean(generate_spline(steps, knots[i], seed));
        CHECK(means[0] < means[1]);
        CHECK(means[1] < means[2]);
    }
}

TEST_CASE("spectral content tracks the generator parameters") {
    // random noise carries more high-band energy than any spline
    double hr = 0.0, hs = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        hr += high_band_mean(generate_random_noise(500, 1.0, seed));
        hs += high_band_mean(generate_spline(500, 64, seed));
    }
    CHECK(hr > hs);

    // a cosine's dominant DFT bin is its cycle count
    for (int cycles : {1, 2, 3, 4}) {
        Pulse c = generate_cosine(500, cycles, 1.0, 0.0);
        std::size_t best = 1;
        for (std::size_t k = 1; k <= 250; ++k)
            if (dft_mag(c.samples, k) > dft_mag(c.samples, best))
                best = k;
        CHECK(best == static_cast<std::size_t>(cycles));
    }

    // wider gaussians concentrate toward DC, shrinking the bin-1 share
    double prev = 2.0;
    for (double sigma : {20.0, 40.0, 80.0}) {
        Pulse g = generate_gaussian_pulse(500, 250.0, sigma, 1.0);
        double low = dft_mag(g.samples, 1) / dft_mag(g.samples, 0);
        CHECK(low < prev);
        prev = low;
    }
}

TEST_CASE("cosine pulse samples the stated formula") {
    Pulse p = generate_cosine(4, 1.0, 1.0, 0.0);
    REQUIRE(p.size() == 4);
    CHECK(p.samples[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(p.samples[1]) < 1e-12);
    CHECK(p.samples[2] == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(std::abs(p.samples[3]) < 1e-12);

    Pulse flat = generate_cosine(100, 0.0, 2.0, 0.0);
    for (double v : flat.samples)
        CHECK(v == doctest::Approx(2.0).epsilon(1e-15));

    Pulse ph = generate_cosine(500, 12.5, 1.0, std::numbers::pi / 3.0);
    CHECK(ph.samples[0] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("gaussian pulse peaks at the center with the stated width") {
    Pulse p = generate_gaussian_pulse(3, 1.0, 1.0, 1.0);
    REQUIRE(p.size() == 3);
    CHECK(p.samples[0] == doctest::Approx(std::exp(-0.5)).epsilon(1e-15));
    CHECK(p.samples[1] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(p.samples[2] == doctest::Approx(std::exp(-0.5)).epsilon(1e-15));

    Pulse s = generate_gaussian_pulse(101, 50.0, 10.0, 1.0);
    CHECK(s.samples[50] == doctest::Approx(1.0).epsilon(1e-15));
    for (int d = 1; d <= 50; ++d)
        CHECK(s.samples[50 - d] == doctest::Approx(s.samples[50 + d]).epsilon(1e-12));
}

TEST_CASE("measurement noise has the requested scale") {
    Pulse p = generate_random_noise(4000, 1.0, 1);

    Pulse same = add_measurement_noise(p, 0.0, 9);
    CHECK(same.samples == p.samples);

    Pulse noisy = add_measurement_noise(p, 1e-4, 9);
    double mean = 0.0;
    for (std::size_t n = 0; n < p.size(); ++n)
        mean += noisy.samples[n] - p.samples[n];
    mean /= p.size();
    double var = 0.0;
    for (std::size_t n = 0; n < p.size(); ++n) {
        double d = noisy.samples[n] - p.samples[n] - mean;
        var += d * d;
    }
    double sd = std::sqrt(var / (p.size() - 1));
    CHECK(sd == doctest::Approx(1e-4).epsilon(0.10));

    Pulse tiny = add_measurement_noise(generate_random_noise(500, 1.0, 2), 1e-9, 3);
    Pulse base = generate_random_noise(500, 1.0, 2);
    for (std::size_t n = 0; n < base.size(); ++n)
        CHECK(std::abs(tiny.samples[n] - base.samples[n]) < 1e-8);
}

TEST_CASE("pulse file round-trip preserves samples and metadata") {
    Pulse p = generate_spline(64, 7, 21);
    p.dt = 0.002;
    p.label = "round trip";
    auto path = temp_file("volterra_pulse_roundtrip.csv");
    write_pulse(path.string(), p);
    Pulse q = read_pulse(path.string());
    CHECK(q.samples == p.samples);
    CHECK(q.dt == p.dt);
    CHECK(q.label == p.label);
    std::filesystem::remove(path);
}

TEST_CASE("pulse file errors carry location and cause") {
    auto empty = temp_file("volterra_pulse_empty.csv");
    {
        std::ofstream out(empty);
        out << "# dt=1 label=nothing\n";
    }
    CHECK_THROWS_WITH_AS(read_pulse(empty.string()), doctest::Contains("empty pulse"),
                         validation_error);
    std::filesystem::remove(empty);

    auto bad = temp_file("volterra_pulse_bad.csv");
    {
        std::ofstream out(bad);
        out << "# dt=1 label=bad\n0.5\nabc\n";
    }
    CHECK_THROWS_WITH_AS(read_pulse(bad.string()), doctest::Contains(":3:"), validation_error);
    std::filesystem::remove(bad);

    CHECK_THROWS_AS(read_pulse("/nonexistent/volterra/pulse.csv"), validation_error);
}

TEST_CASE("generator argument validation") {
    CHECK_THROWS_AS(generate_random_noise(0, 1.0, 0), validation_error);
    CHECK_THROWS_AS(generate_spline(10, 1, 0), validation_error);
    CHECK_THROWS_AS(generate_spline(4, 8, 0), validation_error);
    CHECK_THROWS_AS(generate_gaussian_pulse(10, 5.0, 0.0, 1.0), validation_error);
    CHECK_THROWS_AS(add_measurement_noise(generate_random_noise(4, 1.0, 0), -1.0, 0),
                    validation_error);
}
