#pragma once

#include <complex>
#include <cstddef>
#include <memory>
#include <span>

namespace pmsense::detail {

// Unnormalized complex DFT of fixed length backed by an FFTW plan.
//   forward:  X[d] = sum_m x[m] exp(-j 2 pi d m / n)
//   backward: X[d] = sum_m x[m] exp(+j 2 pi d m / n)
// Plans are created under a process-wide lock; execute() is thread-safe.
class Dft {
 public:
  enum class Direction { forward, backward };

  Dft(std::size_t n, Direction dir);
  ~Dft();
  Dft(Dft&&) noexcept;
  Dft& operator=(Dft&&) noexcept;
  Dft(const Dft&) = delete;
  Dft& operator=(const Dft&) = delete;

  std::size_t size() const noexcept { return n_; }
  void execute(std::span<const std::complex<double>> in, std::span<std::complex<double>> out) const;

 private:
  struct Plan;
  std::size_t n_;
  std::unique_ptr<Plan> plan_;
};

}  // namespace pmsense::detail
