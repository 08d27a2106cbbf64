#include "ftx/spectral.hpp"

#include <cmath>
#include <utility>

#include "ftx/errors.hpp"

namespace ftx::spectral {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

thread_local std::size_t dft_calls = 0;

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// Iterative radix-2 Cooley-Tukey, decimation in time.
ComplexSpectrum fft_pow2(const std::vector<double>& x) {
  const std::size_t n = x.size();
  ComplexSpectrum s;
  s.re.resize(n);
  s.im.assign(n, 0.0);

  // Bit-reversal reordering of the real input.
  std::size_t bits = 0;
  while ((std::size_t{1} << bits) < n) ++bits;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t r = 0;
    for (std::size_t b = 0; b < bits; ++b) r |= ((i >> b) & 1) << (bits - 1 - b);
    s.re[r] = x[i];
  }

  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -kTwoPi / static_cast<double>(len);
    const double wr = std::cos(ang), wi = std::sin(ang);
    for (std::size_t start = 0; start < n; start += len) {
      double cr = 1.0, ci = 0.0;
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::size_t a = start + k;
        const std::size_t b = start + k + len / 2;
        const double tr = s.re[b] * cr - s.im[b] * ci;
        const double ti = s.re[b] * ci + s.im[b] * cr;
        s.re[b] = s.re[a] - tr;
        s.im[b] = s.im[a] - ti;
        s.re[a] += tr;
        s.im[a] += ti;
        const double ncr = cr * wr - ci * wi;
        ci = cr * wi + ci * wr;
        cr = ncr;
      }
    }
  }
  return s;
}

ComplexSpectrum dft_sum(const std::vector<double>& x) {
  const std::size_t n = x.size();
  ComplexSpectrum s;
  s.re.assign(n, 0.0);
  s.im.assign(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t t = 0; t < n; ++t) {
      const double ang = -kTwoPi * static_cast<double>(k) *
                         static_cast<double>(t) / static_cast<double>(n);
      s.re[k] += x[t] * std::cos(ang);
      s.im[k] += x[t] * std::sin(ang);
    }
  }
  return s;
}

}  // namespace

ComplexSpectrum dft_forward(const std::vector<double>& x) {
  if (x.empty()) throw DataError("dft_forward: empty input");
  ++dft_calls;
  if (is_power_of_two(x.size())) return fft_pow2(x);
  return dft_sum(x);
}

ComplexSpectrum dft_direct(const std::vector<double>& x) {
  if (x.empty()) throw DataError("dft_direct: empty input");
  return dft_sum(x);
}

void amplitude_phase(const ComplexSpectrum& s, std::vector<double>& amp,
                     std::vector<double>& phase) {
  const std::size_t n = s.size();
  amp.resize(n);
  phase.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    amp[k] = std::hypot(s.re[k], s.im[k]);
    phase[k] = std::atan2(s.im[k], s.re[k]);
  }
}

std::vector<double> reconstruct(const std::vector<double>& amp,
                                const std::vector<double>& phase) {
  if (amp.size() != phase.size()) {
    throw DataError("reconstruct: amplitude length " +
                    std::to_string(amp.size()) + " != phase length " +
                    std::to_string(phase.size()));
  }
  const std::size_t n = amp.size();
  std::vector<double> x(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    double acc = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double ang = phase[k] + kTwoPi * static_cast<double>(k) *
                                        static_cast<double>(t) /
                                        static_cast<double>(n);
      acc += amp[k] * std::cos(ang);
    }
    x[t] = acc / static_cast<double>(n);
  }
  return x;
}

std::size_t dft_call_count() { return dft_calls; }

void reset_dft_call_count() { dft_calls = 0; }

}  // namespace ftx::spectral
