#pragma once

#include <span>
#include <vector>

namespace epicontrol {

/// Savitzky-Golay smoothing: least-squares polynomial of degree `poly_order` fitted over a
/// `window`-point neighbourhood of every sample. Near the edges the window is shifted inward
/// (kept at full length, one-sided) and the fitted polynomial is evaluated at the sample's own
/// position, so polynomials up to `poly_order` are reproduced exactly everywhere.
///
/// Requires an odd window, poly_order < window and series.size() >= window.
std::vector<double> savgol_smooth(std::span<const double> series, int window, int poly_order);

}  // namespace epicontrol
