#include "xtime/ewt.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <numeric>

#include "xtime/error.hpp"
#include "xtime/fft.hpp"

namespace xtime::ewt {
namespace {

constexpr std::string_view kModule = "ewt";
constexpr double kPi = std::numbers::pi;

double bin_frequency(std::size_t k, std::size_t n) {
  return 2.0 * kPi * static_cast<double>(k) / static_cast<double>(n);
}

void validate(const Boundaries& b) {
  const auto& w = b.omegas;
  if (w.size() < 2 || w.front() != 0.0 || w.back() != kPi) {
    throw Error(kModule, "degenerate boundaries: must start at 0 and end at pi");
  }
  for (std::size_t i = 1; i < w.size(); ++i) {
    if (!(w[i] > w[i - 1])) throw Error(kModule, "degenerate boundaries: not strictly increasing");
  }
}

// Fraction of the spectrum "above" the edge at `edge` with transition half-width `tau`.
double step_above(double omega, double edge, double tau) {
  if (tau == 0.0) return omega >= edge ? 1.0 : 0.0;
  if (omega <= edge - tau) return 0.0;
  if (omega >= edge + tau) return 1.0;
  const double x = (omega - (edge - tau)) / (2.0 * tau);
  const double s = std::sin(0.5 * kPi * x);
  return s * s;
}

}  // namespace

BoundaryDetection detect_boundaries_detailed(std::span<const double> signal, std::size_t bands) {
  if (bands < 1) throw Error(kModule, "band count must be at least 1");
  if (signal.size() < 2 * bands) {
    throw Error(kModule, "signal of length " + std::to_string(signal.size()) + " too short for " +
                             std::to_string(bands) + " bands");
  }
  BoundaryDetection out;
  if (bands == 1) {
    out.boundaries.omegas = {0.0, kPi};
    return out;
  }

  const std::size_t n = signal.size();
  const double mean = std::accumulate(signal.begin(), signal.end(), 0.0) / static_cast<double>(n);
  std::vector<double> centered(signal.begin(), signal.end());
  for (double& v : centered) v -= mean;
  const auto spectrum = fft::rfft(centered);
  std::vector<double> mag(spectrum.size());
  std::transform(spectrum.begin(), spectrum.end(), mag.begin(), [](auto c) { return std::abs(c); });

  std::vector<std::size_t> maxima;
  for (std::size_t k = 1; k + 1 < mag.size(); ++k) {
    if (mag[k] > mag[k - 1] && mag[k] > mag[k + 1]) maxima.push_back(k);
  }
  std::stable_sort(maxima.begin(), maxima.end(), [&](std::size_t a, std::size_t b) { return mag[a] > mag[b]; });
  if (maxima.size() > bands) maxima.resize(bands);
  std::sort(maxima.begin(), maxima.end());
  out.peaks_found = maxima.size();

  std::vector<double>& w = out.boundaries.omegas;
  w.push_back(0.0);
  for (std::size_t i = 1; i < maxima.size(); ++i) {
    w.push_back(0.5 * (bin_frequency(maxima[i - 1], n) + bin_frequency(maxima[i], n)));
  }
  w.push_back(kPi);

  while (w.size() - 1 < bands) {
    out.padded = true;
    std::size_t widest = 0;
    for (std::size_t i = 1; i + 1 < w.size(); ++i) {
      if (w[i + 1] - w[i] > w[widest + 1] - w[widest]) widest = i;
    }
    w.insert(w.begin() + static_cast<std::ptrdiff_t>(widest + 1), 0.5 * (w[widest] + w[widest + 1]));
  }
  if (out.padded) {
    // Per-window decomposition can hit this on every window; warn once.
    static std::atomic<bool> warned{false};
    const auto lvl = warned.exchange(true) ? spdlog::level::debug : spdlog::level::warn;
    spdlog::log(lvl, "ewt: {} spectral maxima for {} bands; bisected widest bands", out.peaks_found, bands);
  }
  return out;
}

Boundaries detect_boundaries(std::span<const double> signal, std::size_t bands) {
  return detect_boundaries_detailed(signal, bands).boundaries;
}

double max_transition_ratio(const Boundaries& boundaries) {
  validate(boundaries);
  const auto& w = boundaries.omegas;
  double ratio = 1.0;
  for (std::size_t b = 0; b + 1 < w.size(); ++b) ratio = std::min(ratio, (w[b + 1] - w[b]) / (w[b + 1] + w[b]));
  return ratio;
}

FilterBank build_filter_bank(const Boundaries& boundaries, std::size_t signal_length, double gamma) {
  validate(boundaries);
  if (signal_length < 2) throw Error(kModule, "signal length must be at least 2");
  if (!(gamma >= 0.0)) throw Error(kModule, "transition ratio must be non-negative");
  const double limit = max_transition_ratio(boundaries);
  if (gamma > limit) {
    spdlog::warn("ewt: transition ratio {} exceeds feasible maximum {}; clamped", gamma, limit);
    gamma = limit;
  }

  const std::size_t bands = boundaries.bands();
  const std::size_t bins = fft::half_bins(signal_length);
  const auto& w = boundaries.omegas;

  FilterBank bank;
  bank.boundaries = boundaries;
  bank.gamma = gamma;
  bank.signal_length = signal_length;
  bank.filters.assign(bands, std::vector<double>(bins, 0.0));

  std::vector<double> above(bands + 1);
  for (std::size_t k = 0; k < bins; ++k) {
    const double omega = bin_frequency(k, signal_length);
    above[0] = 1.0;
    above[bands] = 0.0;
    for (std::size_t b = 1; b < bands; ++b) above[b] = step_above(omega, w[b], gamma * w[b]);
    for (std::size_t b = 0; b < bands; ++b) bank.filters[b][k] = above[b] - above[b + 1];
  }
  return bank;
}

FilterBank build_filter_bank_relative(const Boundaries& boundaries, std::size_t signal_length,
                                      double gamma_fraction) {
  if (!(gamma_fraction >= 0.0 && gamma_fraction <= 1.0)) {
    throw Error(kModule, "transition fraction must lie in [0, 1]");
  }
  return build_filter_bank(boundaries, signal_length, gamma_fraction * max_transition_ratio(boundaries));
}

BandComponents decompose(std::span<const double> signal, const FilterBank& bank) {
  if (signal.size() != bank.signal_length) {
    throw Error(kModule, "filter bank built for length " + std::to_string(bank.signal_length) +
                             ", signal has length " + std::to_string(signal.size()));
  }
  const auto spectrum = fft::rfft(signal);
  BandComponents out;
  out.components.reserve(bank.bands());
  std::vector<std::complex<double>> masked(spectrum.size());
  for (const auto& filter : bank.filters) {
    for (std::size_t k = 0; k < spectrum.size(); ++k) masked[k] = spectrum[k] * filter[k];
    out.components.push_back(fft::irfft(masked, signal.size()));
  }
  return out;
}

std::vector<double> reconstruct(const BandComponents& components) {
  if (components.components.empty()) throw Error(kModule, "no components to reconstruct");
  const std::size_t n = components.components.front().size();
  std::vector<double> out(n, 0.0);
  for (const auto& c : components.components) {
    if (c.size() != n) throw Error(kModule, "components differ in length");
    for (std::size_t t = 0; t < n; ++t) out[t] += c[t];
  }
  return out;
}

}  // namespace xtime::ewt
