#pragma once

#include <cstddef>
#include <vector>

namespace ftx::spectral {

// Bin k holds sum_t x_t * e^{-2*pi*i*k*t/n}.
struct ComplexSpectrum {
  std::vector<double> re;
  std::vector<double> im;

  std::size_t size() const { return re.size(); }
};

// Forward DFT. Radix-2 iterative fast path when n is a power of two,
// direct O(n^2) summation otherwise. Errors on empty input. Each call
// bumps a thread-local counter so ablation tests can assert the branch
// that owns the transform really is switched off.
ComplexSpectrum dft_forward(const std::vector<double>& x);

// Direct-summation evaluation of the definition; test oracle for the fast
// path. Does not touch the call counter.
ComplexSpectrum dft_direct(const std::vector<double>& x);

// A_k = sqrt(re^2 + im^2), phi_k = atan2(im, re) in (-pi, pi].
void amplitude_phase(const ComplexSpectrum& s, std::vector<double>& amp,
                     std::vector<double>& phase);

// Real part of the inverse DFT (1/n normalization) of A_k * e^{i*phi_k}.
std::vector<double> reconstruct(const std::vector<double>& amp,
                                const std::vector<double>& phase);

std::size_t dft_call_count();
void reset_dft_call_count();

}  // namespace ftx::spectral
