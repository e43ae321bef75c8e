#include "volterra/pulse.hpp"
#include "volterra/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

namespace volterra {

void Pulse::validate() const {
    if (samples.empty())
        throw validation_error("empty pulse");
    if (!(dt > 0.0))
        throw validation_error("pulse dt must be positive");
    for (std::size_t i = 0; i < samples.size(); ++i)
        if (!std::isfinite(samples[i]))
            throw validation_error("non-finite sample at index " + std::to_string(i));
}

double Rng::uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform01();
}

double Rng::normal() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    // u1 in (0, 1] keeps the log finite
    double u1 = 1.0 - uniform01();
    double u2 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
}

Pulse generate_random_noise(std::size_t steps, double amplitude, std::uint64_t seed, double dt) {
    if (steps == 0)
        throw validation_error("generate_random_noise: steps must be >= 1");
    if (amplitude < 0.0)
        throw validation_error("generate_random_noise: amplitude must be >= 0");
    Rng rng(seed);
    Pulse p;
    p.dt = dt;
    p.label = "random-noise";
    p.samples.resize(steps);
    for (auto& s : p.samples)
        s = rng.uniform(-amplitude, amplitude);
    return p;
}

namespace {

// Natural cubic spline through (xs, ys), evaluated at integer abscissae
// 0..steps-1. Second-derivative coefficients from the standard tridiagonal
// system with free ends.
std::vector<double> natural_spline(const std::vector<double>& xs, const std::vector<double>& ys,
                                   std::size_t steps) {
    const std::size_t n = xs.size();
    std::vector<double> h(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i)
        h[i] = xs[i + 1] - xs[i];

    // Thomas algorithm on the natural-spline tridiagonal system for c.
    std::vector<double> diag(n, 1.0), upper(n, 0.0), rhs(n, 0.0);
    for (std::size_t i = 1; i + 1 < n; ++i) {
        diag[i] = 2.0 * (h[i - 1] + h[i]);
        upper[i] = h[i];
        rhs[i] = 3.0 * ((ys[i + 1] - ys[i]) / h[i] - (ys[i] - ys[i - 1]) / h[i - 1]);
    }
    std::vector<double> c(n, 0.0);
    std::vector<double> dd(n), rr(n);
    dd[0] = diag[0];
    rr[0] = rhs[0];
    for (std::size_t i = 1; i < n; ++i) {
        double lower = (i + 1 < n) ? h[i - 1] : 0.0;  // natural end rows have no sub-diagonal
        double w = lower / dd[i - 1];
        dd[i] = diag[i] - w * upper[i - 1];
        rr[i] = rhs[i] - w * rr[i - 1];
    }
    c[n - 1] = rr[n - 1] / dd[n - 1];
    for (std::size_t i = n - 1; i-- > 0;)
        c[i] = (rr[i] - upper[i] * c[i + 1]) / dd[i];

    std::vector<double> out(steps);
    std::size_t seg = 0;
    for (std::size_t j = 0; j < steps; ++j) {
        double xv = static_cast<double>(j);
        while (seg + 2 < n && xv >= xs[seg + 1])
            ++seg;
        double dx = xv - xs[seg];
        double b = (ys[seg + 1] - ys[seg]) / h[seg] - h[seg] * (2.0 * c[seg] + c[seg + 1]) / 3.0;
        double d = (c[seg + 1] - c[seg]) / (3.0 * h[seg]);
        out[j] = ys[seg] + b * dx + c[seg] * dx * dx + d * dx * dx * dx;
    }
    return out;
}

} // namespace

Pulse generate_spline(std::size_t steps, std::size_t knots, std::uint64_t seed, double dt) {
    if (steps == 0)
        throw validation_error("generate_spline: steps must be >= 1");
    if (knots < 2)
        throw validation_error("generate_spline: need at least 2 knots");
    if (knots > steps)
        throw validation_error("generate_spline: more knots than steps");
    Rng rng(seed);
    std::vector<double> xs(knots), ys(knots);
    for (std::size_t i = 0; i < knots; ++i) {
        xs[i] = static_cast<double>(steps - 1) * static_cast<double>(i) / static_cast<double>(knots - 1);
        ys[i] = rng.uniform(-1.0, 1.0);
    }
    Pulse p;
    p.dt = dt;
    p.label = "spline-" + std::to_string(knots);
    p.samples = natural_spline(xs, ys, steps);
    return p;
}

Pulse generate_cosine(std::size_t steps, double cycles, double amplitude, double phase, double dt) {
    if (steps == 0)
        throw validation_error("generate_cosine: steps must be >= 1");
    Pulse p;
    p.dt = dt;
    p.label = "cosine";
    p.samples.resize(steps);
    for (std::size_t n = 0; n < steps; ++n)
        p.samples[n] = amplitude * std::cos(2.0 * std::numbers::pi * cycles * static_cast<double>(n) /
                                                static_cast<double>(steps) +
                                            phase);
    return p;
}

Pulse generate_gaussian_pulse(std::size_t steps, double center, double sigma, double amplitude, double dt) {
    if (steps == 0)
        throw validation_error("generate_gaussian_pulse: steps must be >= 1");
    if (!(sigma > 0.0))
        throw validation_error("generate_gaussian_pulse: sigma must be positive");
    Pulse p;
    p.dt = dt;
    p.label = "gaussian";
    p.samples.resize(steps);
    for (std::size_t n = 0; n < steps; ++n) {
        double z = (static_cast<double>(n) - center) / sigma;
        p.samples[n] = amplitude * std::exp(-0.5 * z * z);
    }
    return p;
}

Pulse add_measurement_noise(const Pulse& p, double sigma, std::uint64_t seed) {
    if (sigma < 0.0)
        throw validation_error("add_measurement_noise: sigma must be >= 0");
    Pulse out = p;
    if (sigma == 0.0)
        return out;
    Rng rng(seed);
    for (auto& s : out.samples)
        s += sigma * rng.normal();
    return out;
}

Pulse read_pulse(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw validation_error("cannot open pulse file: " + path);
    std::string line;
    if (!std::getline(in, line))
        throw validation_error(path + ": empty file");
    Pulse p;
    {
        // header: "# dt=<float> label=<string>"
        const std::string dt_tag = "# dt=";
        if (line.rfind(dt_tag, 0) != 0)
            throw validation_error(path + ":1: expected header '# dt=<float> label=<string>'");
        std::size_t label_pos = line.find(" label=");
        std::string dt_str =
            (label_pos == std::string::npos) ? line.substr(dt_tag.size())
                                             : line.substr(dt_tag.size(), label_pos - dt_tag.size());
        try {
            std::size_t used = 0;
            p.dt = std::stod(dt_str, &used);
            if (used != dt_str.size())
                throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw validation_error(path + ":1: malformed dt value '" + dt_str + "'");
        }
        if (label_pos != std::string::npos)
            p.label = line.substr(label_pos + 7);
    }
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty())
            continue;
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(line, &used);
        } catch (const std::exception&) {
            throw validation_error(path + ":" + std::to_string(lineno) + ": malformed amplitude '" + line + "'");
        }
        while (used < line.size() && (line[used] == ' ' || line[used] == '\r'))
            ++used;
        if (used != line.size())
            throw validation_error(path + ":" + std::to_string(lineno) + ": malformed amplitude '" + line + "'");
        if (std::isnan(v))
            throw validation_error(path + ":" + std::to_string(lineno) + ": NaN amplitude");
        p.samples.push_back(v);
    }
    if (p.samples.empty())
        throw validation_error(path + ": empty pulse");
    p.validate();
    return p;
}

void write_pulse(const std::string& path, const Pulse& p) {
    p.validate();
    // write-to-temp plus rename so failures never leave partial files
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out)
            throw validation_error("cannot write pulse file: " + tmp);
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.17g", p.dt);
        out << "# dt=" << buf << " label=" << p.label << "\n";
        for (double s : p.samples) {
            std::snprintf(buf, sizeof buf, "%.17g", s);
            out << buf << "\n";
        }
        if (!out)
            throw validation_error("write failed: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

} // namespace volterra
