#include "fft.hpp"

#include <fftw3.h>

#include <mutex>
#include <vector>

#include "pmsense/error.hpp"

namespace pmsense::detail {

namespace {
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

struct Dft::Plan {
  fftw_plan handle = nullptr;
  ~Plan() {
    if (handle != nullptr) {
      std::lock_guard lock(planner_mutex());
      fftw_destroy_plan(handle);
    }
  }
};

Dft::Dft(std::size_t n, Direction dir) : n_(n), plan_(std::make_unique<Plan>()) {
  if (n == 0) throw InputError("Dft: length must be >= 1");
  std::vector<std::complex<double>> in(n), out(n);
  std::lock_guard lock(planner_mutex());
  plan_->handle = fftw_plan_dft_1d(static_cast<int>(n), reinterpret_cast<fftw_complex*>(in.data()),
                                   reinterpret_cast<fftw_complex*>(out.data()),
                                   dir == Direction::forward ? FFTW_FORWARD : FFTW_BACKWARD,
                                   FFTW_ESTIMATE | FFTW_UNALIGNED);
  if (plan_->handle == nullptr) throw NumericalError("Dft: FFTW could not create a plan");
}

Dft::~Dft() = default;

Dft::Dft(Dft&&) noexcept = default;
Dft& Dft::operator=(Dft&&) noexcept = default;

void Dft::execute(std::span<const std::complex<double>> in, std::span<std::complex<double>> out) const {
  if (in.size() != n_ || out.size() != n_) throw InputError("Dft::execute: length mismatch");
  // FFTW's new-array execute never writes to `in` for out-of-place plans.
  fftw_execute_dft(plan_->handle,
                   reinterpret_cast<fftw_complex*>(const_cast<std::complex<double>*>(in.data())),
                   reinterpret_cast<fftw_complex*>(out.data()));
}

}  // namespace pmsense::detail
