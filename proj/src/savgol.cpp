#include "epicontrol/savgol.hpp"

#include <Eigen/Dense>

#include "epicontrol/error.hpp"

namespace epicontrol {

namespace {

/// Weights w such that sum_k w[k] * y[k] is the degree-`order` least-squares fit over
/// window positions 0..window-1, evaluated at position `at`.
Eigen::VectorXd fit_weights(int window, int order, int at) {
    const double centre = 0.5 * (window - 1);
    Eigen::MatrixXd vandermonde(window, order + 1);
    for (int k = 0; k < window; ++k) {
        const double x = k - centre;
        double p = 1.0;
        for (int j = 0; j <= order; ++j) {
            vandermonde(k, j) = p;
            p *= x;
        }
    }
    Eigen::VectorXd basis(order + 1);
    double p = 1.0;
    for (int j = 0; j <= order; ++j) {
        basis(j) = p;
        p *= (at - centre);
    }
    // w^T = basis^T (V^T V)^{-1} V^T, i.e. w = V (V^T V)^{-1} basis.
    const Eigen::MatrixXd gram = vandermonde.transpose() * vandermonde;
    const Eigen::VectorXd coeffs = gram.ldlt().solve(basis);
    return vandermonde * coeffs;
}

}  // namespace

std::vector<double> savgol_smooth(std::span<const double> series, int window, int poly_order) {
    if (window < 1 || window % 2 == 0) throw ValidationError("Savitzky-Golay window must be a positive odd integer");
    if (poly_order < 0 || poly_order >= window) throw ValidationError("poly_order must satisfy 0 <= poly_order < window");
    const int n = static_cast<int>(series.size());
    if (n < window) {
        throw ValidationError("series of length " + std::to_string(n) + " is shorter than the window " +
                              std::to_string(window));
    }
    const int half = window / 2;
    std::vector<Eigen::VectorXd> weights(static_cast<std::size_t>(window));
    for (int at = 0; at < window; ++at) weights[static_cast<std::size_t>(at)] = fit_weights(window, poly_order, at);

    std::vector<double> out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        int start = i - half;
        if (start < 0) start = 0;
        if (start + window > n) start = n - window;
        const auto& w = weights[static_cast<std::size_t>(i - start)];
        double acc = 0.0;
        for (int k = 0; k < window; ++k) acc += w(k) * series[static_cast<std::size_t>(start + k)];
        out[static_cast<std::size_t>(i)] = acc;
    }
    return out;
}

}  // namespace epicontrol
