#pragma once

#include "volterra/pulse.hpp"

#include <Eigen/Dense>
#include <string>

namespace volterra {

/// Second-order, causal, finite-memory Volterra kernel:
///   y_n = h0 + sum_j h1[j] x_{n-j} + sum_{k,l} h2(k,l) x_{n-k} x_{n-l}
/// with x_q = 0 outside [0, L). h2 is symmetric; the full matrix is kept in
/// memory for fast products, the packed upper triangle is what goes to disk.
struct VolterraKernel {
    int R = 1;                  // memory length, >= 1
    double h0 = 0.0;
    Eigen::VectorXd h1;         // length R
    Eigen::MatrixXd h2;         // R x R, symmetric

    /// Flattened coefficient count M = 1 + R + R(R+1)/2.
    int coefficient_count() const { return 1 + R + R * (R + 1) / 2; }

    /// Throws validation_error on size mismatch or asymmetric h2.
    void validate() const;
};

/// Identity channel: apply(k, x) == x.
VolterraKernel identity_kernel();

/// The synthetic Gaussian distortion family:
///   h1[t]      = exp(-(t - mu)^2 / (2 sigma1^2)) / (sigma1 sqrt(2 pi))
///   h2(t1,t2)  = J exp(-((t1 - mu1)^2 + (t2 - mu2)^2) / (2 sigma2^2))
/// on the window t in {0..R-1}; h2 is symmetrized when mu1 != mu2.
VolterraKernel make_gaussian_kernel(int R, double sigma1, double sigma2, double J, double h0,
                                    double mu = 0.0, double mu1 = 0.0, double mu2 = 0.0);

/// The six built-in synthetic distortions. A/B/C share R = 50 and widen the
/// Gaussians (sigma1 in {1, 6, 11}, sigma2 in {4.25, 6.37, 8.50}); D/E/F
/// share sigma1 = 1, sigma2 = 4.25 and grow the memory (R in {20, 40, 60}).
/// All use J = 5e-6 and h0 = 0.1.
VolterraKernel distortion_preset(char name);

/// Forward model. Output length N = L + R - 1; dt carried over.
Pulse apply(const VolterraKernel& k, const Pulse& x);

/// Forward model observed over an explicit window of N_out samples: the
/// natural output truncated, or extended with h0 once the input has died
/// out. Used to compare channels of different memory on a common window.
Pulse apply(const VolterraKernel& k, const Pulse& x, std::size_t N_out);

/// Analytic Jacobian of apply: entry (n, j) = d y_n / d x_j
///   = h1[n-j] + 2 * sum_e h2(n-j, e) x_{n-e}
/// with out-of-window indices contributing zero. Shape N x L.
Eigen::MatrixXd jacobian(const VolterraKernel& k, const Pulse& x);

/// Canonical coefficient vector [h0, h1_0..h1_{R-1}, c_00, c_01, ..,
/// c_{R-1,R-1}] with (a,b), a <= b, lexicographic. Off-diagonal packed
/// entries are doubled, c_ab = 2 h2(a,b) for a < b, so that
/// sum_{a<=b} c_ab x_{n-a} x_{n-b} reproduces the ordered double sum.
Eigen::VectorXd to_coefficients(const VolterraKernel& k);
VolterraKernel from_coefficients(const Eigen::VectorXd& v, int R);

/// JSON kernel file with fields R, h0, h1, h2_packed (row-major upper
/// triangle of the symmetric h2, not the doubled c) and a
/// convention: "symmetric-h2" tag.
VolterraKernel read_kernel(const std::string& path);
void write_kernel(const std::string& path, const VolterraKernel& k);

} // namespace volterra
