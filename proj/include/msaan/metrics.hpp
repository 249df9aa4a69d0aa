#pragma once

#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "msaan/autograd.hpp"
#include "msaan/pipeline.hpp"

// Evaluation metrics on the luminance channel plus the plain (non-recorded)
// forms of the training losses.

namespace msaan {

namespace detail {

// Shaved luminance planes (0..255 scale) of both images.
inline std::pair<std::vector<double>, std::vector<double>> shaved_y(const Image& a, const Image& b, int shave,
                                                                    int& w, int& h) {
    MSAAN_CHECK(a.width == b.width && a.height == b.height, "metric inputs must have equal dims");
    MSAAN_CHECK(shave >= 0, "shave must be >= 0");
    MSAAN_CHECK(a.width > 2 * shave && a.height > 2 * shave, "image too small for the requested border shave");
    const std::vector<float> ya = rgb_to_y(a);
    const std::vector<float> yb = rgb_to_y(b);
    w = a.width - 2 * shave;
    h = a.height - 2 * shave;
    std::vector<double> pa(size_t(w) * h), pb(size_t(w) * h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            pa[size_t(y) * w + x] = ya[size_t(y + shave) * a.width + (x + shave)];
            pb[size_t(y) * w + x] = yb[size_t(y + shave) * a.width + (x + shave)];
        }
    return {std::move(pa), std::move(pb)};
}

}  // namespace detail

// 10*log10(255^2 / MSE) on the shaved Y planes; identical inputs report +inf.
inline double psnr_y(const Image& sr, const Image& hr, int shave) {
    int w = 0, h = 0;
    auto [a, b] = detail::shaved_y(sr, hr, shave, w, h);
    double mse = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(255.0 * 255.0 / mse);
}

// Single-scale SSIM on Y: 11x11 Gaussian window (sigma 1.5), K1=0.01,
// K2=0.03, L=255, averaged over valid (fully interior) window positions.
inline double ssim_y(const Image& sr, const Image& hr, int shave) {
    constexpr int kWin = 11;
    constexpr double kSigma = 1.5;
    constexpr double kC1 = (0.01 * 255.0) * (0.01 * 255.0);
    constexpr double kC2 = (0.03 * 255.0) * (0.03 * 255.0);

    int w = 0, h = 0;
    auto [a, b] = detail::shaved_y(sr, hr, shave, w, h);
    MSAAN_CHECK(w >= kWin && h >= kWin, "image too small for an 11x11 SSIM window after shaving");

    double window[kWin][kWin];
    double wsum = 0.0;
    for (int i = 0; i < kWin; ++i)
        for (int j = 0; j < kWin; ++j) {
            const double dy = i - (kWin - 1) / 2.0, dx = j - (kWin - 1) / 2.0;
            window[i][j] = std::exp(-(dx * dx + dy * dy) / (2.0 * kSigma * kSigma));
            wsum += window[i][j];
        }
    for (auto& row : window)
        for (double& v : row) v /= wsum;

    double total = 0.0;
    int64_t positions = 0;
    for (int y = 0; y + kWin <= h; ++y) {
        for (int x = 0; x + kWin <= w; ++x) {
            double mu_a = 0.0, mu_b = 0.0;
            for (int i = 0; i < kWin; ++i)
                for (int j = 0; j < kWin; ++j) {
                    mu_a += window[i][j] * a[size_t(y + i) * w + (x + j)];
                    mu_b += window[i][j] * b[size_t(y + i) * w + (x + j)];
                }
            double var_a = 0.0, var_b = 0.0, cov = 0.0;
            for (int i = 0; i < kWin; ++i)
                for (int j = 0; j < kWin; ++j) {
                    const double da = a[size_t(y + i) * w + (x + j)] - mu_a;
                    const double db = b[size_t(y + i) * w + (x + j)] - mu_b;
                    var_a += window[i][j] * da * da;
                    var_b += window[i][j] * db * db;
                    cov += window[i][j] * da * db;
                }
            total += ((2.0 * mu_a * mu_b + kC1) * (2.0 * cov + kC2)) /
                     ((mu_a * mu_a + mu_b * mu_b + kC1) * (var_a + var_b + kC2));
            ++positions;
        }
    }
    return total / static_cast<double>(positions);
}

// Mean absolute difference.
inline double l1_loss(const Tensor& sr, const Tensor& hr) {
    MSAAN_CHECK(sr.dims == hr.dims, "l1 loss: dims mismatch");
    double acc = 0.0;
    for (int64_t i = 0; i < sr.numel(); ++i) acc += std::abs(double(sr.data[i]) - double(hr.data[i]));
    return acc / sr.numel();
}

// Mean over all bins and planes of |Re dF| + |Im dF|, planes zero-padded to
// the next power of two per side.
inline double fft_loss(const Tensor& sr, const Tensor& hr) {
    MSAAN_CHECK(sr.dims == hr.dims, "fft loss: dims mismatch");
    return detail::spectrum_abs_mean<float>(sub<float>(sr, hr), nullptr);
}

inline double combined_loss(const Tensor& sr, const Tensor& hr, float fft_weight = 0.05f) {
    MSAAN_CHECK(fft_weight >= 0.0f, "fft_weight must be >= 0");
    return l1_loss(sr, hr) + fft_weight * fft_loss(sr, hr);
}

// Per-image and aggregate evaluation results.
struct EvalReport {
    struct Row {
        std::string name;
        double psnr_db = 0.0;
        double ssim = 0.0;
    };
    std::vector<Row> rows;
    int shave = 0;
    int skipped = 0;  // unreadable inputs

    double mean_psnr() const {
        double acc = 0.0;
        for (const auto& r : rows) acc += r.psnr_db;
        return rows.empty() ? 0.0 : acc / rows.size();
    }

    double mean_ssim() const {
        double acc = 0.0;
        for (const auto& r : rows) acc += r.ssim;
        return rows.empty() ? 0.0 : acc / rows.size();
    }

    // name<TAB>psnr<TAB>ssim, one row per image, then the aggregate.
    std::string to_tsv() const {
        std::ostringstream os;
        os << std::fixed << std::setprecision(4);
        for (const auto& r : rows) os << r.name << "\t" << r.psnr_db << "\t" << r.ssim << "\n";
        os << "mean\t" << mean_psnr() << "\t" << mean_ssim() << "\n";
        return os.str();
    }

    std::string to_table() const {
        std::ostringstream os;
        os << std::fixed << std::setprecision(4);
        os << std::setw(28) << std::left << "image" << std::setw(12) << "psnr(db)" << "ssim\n";
        for (const auto& r : rows)
            os << std::setw(28) << std::left << r.name << std::setw(12) << r.psnr_db << r.ssim << "\n";
        os << std::setw(28) << std::left << "mean" << std::setw(12) << mean_psnr() << mean_ssim() << "\n";
        if (skipped > 0) os << "(skipped " << skipped << " unreadable file(s))\n";
        return os.str();
    }
};

}  // namespace msaan
