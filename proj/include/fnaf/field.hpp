#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "fnaf/error.hpp"

namespace fnaf {

using Complex = std::complex<double>;

/// Row-major 2-D array. Storage is always 64-bit so accumulations over it
/// are deterministic regardless of how the data was serialized.
template <typename T>
class Grid {
public:
    Grid() = default;
    Grid(std::size_t rows, std::size_t cols, T fill = T{})
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Grid(std::size_t rows, std::size_t cols, std::vector<T> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_)
            throw Error(ErrorKind::InvalidInput, "field", "data length does not match rows*cols");
    }

    [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
    [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
    [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
    [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

    T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    [[nodiscard]] std::span<T> data() noexcept { return data_; }
    [[nodiscard]] std::span<const T> data() const noexcept { return data_; }
    [[nodiscard]] const std::vector<T>& values() const noexcept { return data_; }

    template <typename U>
    [[nodiscard]] bool same_shape(const Grid<U>& other) const noexcept {
        return rows_ == other.rows() && cols_ == other.cols();
    }

    friend bool operator==(const Grid& a, const Grid& b) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<T> data_;
};

using ComplexGrid = Grid<Complex>;
using Image2D = Grid<double>;

/// Boolean region; `unsigned char` rather than `bool` keeps contiguous storage.
using RegionMask = Grid<unsigned char>;

/// Throws InvalidInput unless the two grids have identical shape.
template <typename A, typename B>
void require_same_shape(const Grid<A>& a, const Grid<B>& b, const char* module) {
    if (!a.same_shape(b))
        throw Error(ErrorKind::InvalidInput, module,
                    "shape mismatch: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " vs " +
                        std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
}

// Fourier transforms --------------------------------------------------------

/// Centered (DC at rows/2, cols/2), orthonormal forward 2-D DFT.
ComplexGrid fft2c(const ComplexGrid& img);
/// Inverse of fft2c.
ComplexGrid ifft2c(const ComplexGrid& ksp);

ComplexGrid to_complex(const Image2D& img);
Image2D magnitude(const ComplexGrid& g);
Image2D real_part(const ComplexGrid& g);

// Metrics -------------------------------------------------------------------

struct ImageMetrics {
    double nmse = 0.0;
    double psnr = 0.0;
    double ssim = 0.0;
};

inline constexpr int kSsimWindow = 7;
inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;

ImageMetrics image_metrics(const Image2D& recon, const Image2D& target);

double nmse(const Image2D& recon, const Image2D& target);
double psnr(const Image2D& recon, const Image2D& target);

/// Mean SSIM over every 7x7 window fully inside the image. Dynamic range is
/// the target maximum; variances use the unbiased sample normalization.
double ssim(const Image2D& recon, const Image2D& target);

/// SSIM together with dSSIM/d(recon).
double ssim_with_grad(const Image2D& recon, const Image2D& target, Image2D& grad);

/// NMSE restricted to the true pixels of `region`.
double masked_nmse(const Image2D& recon, const Image2D& target, const RegionMask& region);

/// d masked_nmse / d recon, written into `grad` (zero outside the region).
double masked_nmse_with_grad(const Image2D& recon, const Image2D& target, const RegionMask& region,
                             Image2D& grad);

double mse(const Image2D& a, const Image2D& b);
double max_value(const Image2D& img);
double min_value(const Image2D& img);
bool all_finite(const Image2D& img);
bool all_finite(const ComplexGrid& g);

} // namespace fnaf
