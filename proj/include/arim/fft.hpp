#pragma once

#include <complex>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <stdexcept>

#include <fftw3.h>

namespace arim {

/// Forward complex DFT of a fixed length, backed by an FFTW plan.
/// Plans are created once per length under a lock (the FFTW planner is not
/// reentrant); execution through fftw_execute_dft is thread-safe.
class FftPlan {
public:
    static const FftPlan& forward(std::size_t n) {
        static std::mutex mutex;
        static std::map<std::size_t, std::unique_ptr<FftPlan>> cache;
        std::lock_guard lock(mutex);
        auto& slot = cache[n];
        if (!slot) slot.reset(new FftPlan(n));
        return *slot;
    }

    std::size_t size() const { return size_; }

    /// out[k] = sum_n in[n] exp(-j 2 pi k n / N). in and out may alias.
    void execute(std::span<const std::complex<double>> in,
                 std::span<std::complex<double>> out) const {
        if (in.size() != size_ || out.size() != size_)
            throw std::invalid_argument("fft length mismatch");
        // FFTW never writes to the input of an out-of-place forward transform.
        auto* src = reinterpret_cast<fftw_complex*>(const_cast<std::complex<double>*>(in.data()));
        auto* dst = reinterpret_cast<fftw_complex*>(out.data());
        fftw_execute_dft(plan_, src, dst);
    }

    FftPlan(const FftPlan&) = delete;
    FftPlan& operator=(const FftPlan&) = delete;
    ~FftPlan() { fftw_destroy_plan(plan_); }

private:
    explicit FftPlan(std::size_t n) : size_(n) {
        if (n == 0) throw std::invalid_argument("fft length must be positive");
        auto* in = fftw_alloc_complex(n);
        auto* out = fftw_alloc_complex(n);
        plan_ = fftw_plan_dft_1d(static_cast<int>(n), in, out, FFTW_FORWARD,
                                 FFTW_ESTIMATE | FFTW_UNALIGNED);
        fftw_free(in);
        fftw_free(out);
        if (plan_ == nullptr) throw std::runtime_error("fftw planning failed");
    }

    std::size_t size_;
    fftw_plan plan_ = nullptr;
};

}  // namespace arim
