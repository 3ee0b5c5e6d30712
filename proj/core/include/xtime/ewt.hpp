#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace xtime::ewt {

/// Band edges [w_0 = 0, w_1, ..., w_B = pi] in normalized radian frequency,
/// strictly increasing.
struct Boundaries {
  std::vector<double> omegas;

  std::size_t bands() const noexcept { return omegas.empty() ? 0 : omegas.size() - 1; }
};

struct BoundaryDetection {
  Boundaries boundaries;
  std::size_t peaks_found = 0;
  bool padded = false;  // fewer than B spectral maxima; widest bands were bisected
};

/// Detects B bands from the magnitude spectrum of the mean-removed signal:
/// the B largest strict local maxima (DC and the last bin excluded, ties to
/// the lower frequency) are kept and interior edges are placed halfway
/// between adjacent kept maxima. Missing edges are filled by bisecting the
/// widest interval.
BoundaryDetection detect_boundaries_detailed(std::span<const double> signal, std::size_t bands);
Boundaries detect_boundaries(std::span<const double> signal, std::size_t bands);

/// Partition-of-unity filter bank over the half-spectrum bins of a length-n
/// real signal. filters[b][k] is the gain of band b at bin k.
struct FilterBank {
  Boundaries boundaries;
  double gamma = 0.0;
  std::size_t signal_length = 0;
  std::vector<std::vector<double>> filters;

  std::size_t bands() const noexcept { return filters.size(); }
  std::size_t bins() const noexcept { return filters.empty() ? 0 : filters.front().size(); }
};

/// Largest transition ratio for which the raised-cosine transitions of
/// adjacent boundaries do not overlap.
double max_transition_ratio(const Boundaries& boundaries);

/// Builds raised-cosine crossfades of half-width gamma * w_b around every
/// interior edge w_b. gamma = 0 gives hard indicator masks; gamma above the
/// feasible maximum is clamped with a warning.
FilterBank build_filter_bank(const Boundaries& boundaries, std::size_t signal_length, double gamma);

/// Convenience: gamma as a fraction of max_transition_ratio(boundaries).
FilterBank build_filter_bank_relative(const Boundaries& boundaries, std::size_t signal_length,
                                      double gamma_fraction);

struct BandComponents {
  std::vector<std::vector<double>> components;

  std::size_t bands() const noexcept { return components.size(); }
};

/// X_b = IFFT(FFT(X) * filter_b). Components sum to the input up to rounding.
BandComponents decompose(std::span<const double> signal, const FilterBank& bank);

std::vector<double> reconstruct(const BandComponents& components);

}  // namespace xtime::ewt
