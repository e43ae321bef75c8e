#include "volterra/kernel.hpp"
#include "volterra/errors.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>

#include <json.hpp>

namespace volterra {

using json = nlohmann::ordered_json;

void VolterraKernel::validate() const {
    if (R < 1)
        throw validation_error("kernel memory length must be >= 1");
    if (h1.size() != R)
        throw validation_error("kernel h1 length != R");
    if (h2.rows() != R || h2.cols() != R)
        throw validation_error("kernel h2 shape != R x R");
    if ((h2 - h2.transpose()).cwiseAbs().maxCoeff() > 0.0)
        throw validation_error("kernel h2 is not symmetric");
}

VolterraKernel identity_kernel() {
    VolterraKernel k;
    k.R = 1;
    k.h0 = 0.0;
    k.h1 = Eigen::VectorXd::Ones(1);
    k.h2 = Eigen::MatrixXd::Zero(1, 1);
    return k;
}

VolterraKernel make_gaussian_kernel(int R, double sigma1, double sigma2, double J, double h0,
                                    double mu, double mu1, double mu2) {
    if (R < 1)
        throw validation_error("make_gaussian_kernel: R must be >= 1");
    if (!(sigma1 > 0.0) || !(sigma2 > 0.0))
        throw validation_error("make_gaussian_kernel: sigmas must be positive");
    VolterraKernel k;
    k.R = R;
    k.h0 = h0;
    k.h1.resize(R);
    for (int t = 0; t < R; ++t) {
        double z = (t - mu) / sigma1;
        k.h1[t] = std::exp(-0.5 * z * z) / (sigma1 * std::sqrt(2.0 * std::numbers::pi));
    }
    k.h2.resize(R, R);
    for (int t1 = 0; t1 < R; ++t1)
        for (int t2 = 0; t2 < R; ++t2) {
            double z1 = t1 - mu1, z2 = t2 - mu2;
            k.h2(t1, t2) = J * std::exp(-(z1 * z1 + z2 * z2) / (2.0 * sigma2 * sigma2));
        }
    k.h2 = ((k.h2 + k.h2.transpose()) / 2.0).eval();
    return k;
}

namespace {

// Lagged-sample matrix X with X(n, q) = x_{n-q} (zero outside [0, L)).
Eigen::MatrixXd lag_matrix(const Eigen::VectorXd& x, int R, int N) {
    const int L = static_cast<int>(x.size());
    Eigen::MatrixXd X = Eigen::MatrixXd::Zero(N, R);
    for (int n = 0; n < N; ++n) {
        int q_lo = std::max(0, n - L + 1);
        int q_hi = std::min(R - 1, n);
        for (int q = q_lo; q <= q_hi; ++q)
            X(n, q) = x[n - q];
    }
    return X;
}

} // namespace

VolterraKernel distortion_preset(char name) {
    switch (name) {
    case 'A': return make_gaussian_kernel(50, 1.0, 4.25, 5e-6, 0.1);
    case 'B': return make_gaussian_kernel(50, 6.0, 6.37, 5e-6, 0.1);
    case 'C': return make_gaussian_kernel(50, 11.0, 8.50, 5e-6, 0.1);
    case 'D': return make_gaussian_kernel(20, 1.0, 4.25, 5e-6, 0.1);
    case 'E': return make_gaussian_kernel(40, 1.0, 4.25, 5e-6, 0.1);
    case 'F': return make_gaussian_kernel(60, 1.0, 4.25, 5e-6, 0.1);
    default:
        throw validation_error(std::string("unknown distortion preset '") + name +
                               "'; valid names are A, B, C, D, E, F");
    }
}

Pulse apply(const VolterraKernel& k, const Pulse& x, std::size_t N_out) {
    k.validate();
    x.validate();
    const int L = static_cast<int>(x.size());
    const int N = static_cast<int>(N_out);
    if (N < 1)
        throw validation_error("apply: output window must have at least one sample");
    Eigen::Map<const Eigen::VectorXd> xv(x.samples.data(), L);
    Eigen::MatrixXd X = lag_matrix(xv, k.R, N);
    Eigen::VectorXd y = (X * k.h1).array() + k.h0;
    y += ((X * k.h2).array() * X.array()).rowwise().sum().matrix();
    Pulse out;
    out.dt = x.dt;
    out.label = x.label;
    out.samples.assign(y.data(), y.data() + N);
    return out;
}

Pulse apply(const VolterraKernel& k, const Pulse& x) {
    return apply(k, x, x.size() + static_cast<std::size_t>(k.R) - 1);
}

Eigen::MatrixXd jacobian(const VolterraKernel& k, const Pulse& x) {
    k.validate();
    x.validate();
    const int L = static_cast<int>(x.size());
    const int N = L + k.R - 1;
    Eigen::Map<const Eigen::VectorXd> xv(x.samples.data(), L);
    Eigen::MatrixXd X = lag_matrix(xv, k.R, N);
    Eigen::MatrixXd W = X * k.h2;  // W(n, q) = sum_e h2(q, e) x_{n-e}
    Eigen::MatrixXd Jm = Eigen::MatrixXd::Zero(N, L);
    for (int j = 0; j < L; ++j) {
        int n_hi = std::min(N - 1, j + k.R - 1);
        for (int n = j; n <= n_hi; ++n) {
            int d = n - j;
            Jm(n, j) = k.h1[d] + 2.0 * W(n, d);
        }
    }
    return Jm;
}

Eigen::VectorXd to_coefficients(const VolterraKernel& k) {
    k.validate();
    Eigen::VectorXd v(k.coefficient_count());
    v[0] = k.h0;
    v.segment(1, k.R) = k.h1;
    int idx = 1 + k.R;
    for (int a = 0; a < k.R; ++a)
        for (int b = a; b < k.R; ++b)
            v[idx++] = (a == b) ? k.h2(a, a) : 2.0 * k.h2(a, b);
    return v;
}

VolterraKernel from_coefficients(const Eigen::VectorXd& v, int R) {
    if (R < 1)
        throw validation_error("from_coefficients: R must be >= 1");
    const int M = 1 + R + R * (R + 1) / 2;
    if (v.size() != M)
        throw validation_error("from_coefficients: expected " + std::to_string(M) +
                               " coefficients for R=" + std::to_string(R) + ", got " +
                               std::to_string(v.size()));
    VolterraKernel k;
    k.R = R;
    k.h0 = v[0];
    k.h1 = v.segment(1, R);
    k.h2 = Eigen::MatrixXd::Zero(R, R);
    int idx = 1 + R;
    for (int a = 0; a < R; ++a)
        for (int b = a; b < R; ++b) {
            double c = v[idx++];
            if (a == b) {
                k.h2(a, a) = c;
            } else {
                k.h2(a, b) = c / 2.0;
                k.h2(b, a) = c / 2.0;
            }
        }
    return k;
}

VolterraKernel read_kernel(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw validation_error("cannot open kernel file: " + path);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw validation_error(path + ": invalid JSON: " + e.what());
    }
    for (const auto& field : {"R", "h0", "h1", "h2_packed", "convention"})
        if (!doc.contains(field))
            throw validation_error(path + ": missing kernel field '" + std::string(field) + "'");
    if (doc["convention"].get<std::string>() != "symmetric-h2")
        throw validation_error(path + ": unsupported kernel convention '" +
                               doc["convention"].get<std::string>() + "'");
    VolterraKernel k;
    k.R = doc["R"].get<int>();
    if (k.R < 1)
        throw validation_error(path + ": R must be >= 1");
    k.h0 = doc["h0"].get<double>();
    auto h1 = doc["h1"].get<std::vector<double>>();
    if (static_cast<int>(h1.size()) != k.R)
        throw validation_error(path + ": h1 length != R");
    k.h1 = Eigen::Map<const Eigen::VectorXd>(h1.data(), k.R);
    auto packed = doc["h2_packed"].get<std::vector<double>>();
    if (static_cast<int>(packed.size()) != k.R * (k.R + 1) / 2)
        throw validation_error(path + ": h2_packed length != R(R+1)/2");
    k.h2 = Eigen::MatrixXd::Zero(k.R, k.R);
    int idx = 0;
    for (int a = 0; a < k.R; ++a)
        for (int b = a; b < k.R; ++b) {
            k.h2(a, b) = packed[idx];
            k.h2(b, a) = packed[idx];
            ++idx;
        }
    k.validate();
    return k;
}

void write_kernel(const std::string& path, const VolterraKernel& k) {
    k.validate();
    json doc;
    doc["convention"] = "symmetric-h2";
    doc["R"] = k.R;
    doc["h0"] = k.h0;
    doc["h1"] = std::vector<double>(k.h1.data(), k.h1.data() + k.R);
    std::vector<double> packed;
    packed.reserve(static_cast<std::size_t>(k.R) * (k.R + 1) / 2);
    for (int a = 0; a < k.R; ++a)
        for (int b = a; b < k.R; ++b)
            packed.push_back(k.h2(a, b));
    doc["h2_packed"] = packed;
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out)
            throw validation_error("cannot write kernel file: " + tmp);
        out << doc.dump(2) << "\n";
        if (!out)
            throw validation_error("write failed: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

} // namespace volterra
