#include "noctr/metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace noctr {

namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;

void check_same(const DenseTensor& a, const DenseTensor& b) {
    if (a.shape != b.shape) throw std::invalid_argument("metric inputs must share a shape");
}

Mat gaussian_window() {
    Mat w(kWindow, kWindow);
    const double c = (kWindow - 1) / 2.0;
    double total = 0.0;
    for (int i = 0; i < kWindow; ++i) {
        for (int j = 0; j < kWindow; ++j) {
            const double d2 = (i - c) * (i - c) + (j - c) * (j - c);
            w(i, j) = std::exp(-d2 / (2.0 * kSigma * kSigma));
            total += w(i, j);
        }
    }
    return w / total;
}

// Valid-mode 2-D correlation with an 11x11 kernel.
Mat filter_valid(const Mat& img, const Mat& kernel) {
    const int out_h = static_cast<int>(img.rows()) - kWindow + 1;
    const int out_w = static_cast<int>(img.cols()) - kWindow + 1;
    Mat out(out_h, out_w);
    for (int i = 0; i < out_h; ++i) {
        for (int j = 0; j < out_w; ++j) {
            out(i, j) = img.block(i, j, kWindow, kWindow).cwiseProduct(kernel).sum();
        }
    }
    return out;
}

double ssim_slice(const Mat& a, const Mat& b, double max_value) {
    static const Mat window = gaussian_window();
    const double c1 = (0.01 * max_value) * (0.01 * max_value);
    const double c2 = (0.03 * max_value) * (0.03 * max_value);

    Mat mu1 = filter_valid(a, window);
    Mat mu2 = filter_valid(b, window);
    Mat mu1_sq = mu1.cwiseProduct(mu1);
    Mat mu2_sq = mu2.cwiseProduct(mu2);
    Mat mu12 = mu1.cwiseProduct(mu2);
    Mat sigma1_sq = filter_valid(a.cwiseProduct(a), window) - mu1_sq;
    Mat sigma2_sq = filter_valid(b.cwiseProduct(b), window) - mu2_sq;
    Mat sigma12 = filter_valid(a.cwiseProduct(b), window) - mu12;

    Mat num = (2.0 * mu12.array() + c1) * (2.0 * sigma12.array() + c2);
    Mat den = (mu1_sq.array() + mu2_sq.array() + c1) *
              (sigma1_sq.array() + sigma2_sq.array() + c2);
    return (num.array() / den.array()).mean();
}

// View band `b` of a tensor as a 2-D slice over the two leading modes.
// Bands enumerate the trailing modes in row-major order.
Mat band_slice(const DenseTensor& t, std::size_t band) {
    const int h = t.shape[0];
    const int w = t.order() >= 2 ? t.shape[1] : 1;
    std::size_t band_count = 1;
    for (int k = 2; k < t.order(); ++k) band_count *= static_cast<std::size_t>(t.shape[k]);
    Mat slice(h, w);
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            const std::size_t flat =
                (static_cast<std::size_t>(i) * w + static_cast<std::size_t>(j)) * band_count + band;
            slice(i, j) = t.data[flat];
        }
    }
    return slice;
}

std::size_t band_count(const DenseTensor& t) {
    std::size_t n = 1;
    for (int k = 2; k < t.order(); ++k) n *= static_cast<std::size_t>(t.shape[k]);
    return n;
}

double mse(const DenseTensor& a, const DenseTensor& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.size());
}

}  // namespace

double psnr(const DenseTensor& xhat, const DenseTensor& x, double max_value) {
    check_same(xhat, x);
    const double err = mse(xhat, x);
    if (err == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(max_value * max_value / err);
}

double ssim(const DenseTensor& xhat, const DenseTensor& x, double max_value) {
    check_same(xhat, x);
    const int h = x.shape[0];
    const int w = x.order() >= 2 ? x.shape[1] : 1;
    if (h < kWindow || w < kWindow) {
        throw std::invalid_argument("ssim: image smaller than the 11x11 window");
    }
    const std::size_t bands = band_count(x);
    double acc = 0.0;
    for (std::size_t b = 0; b < bands; ++b) {
        acc += ssim_slice(band_slice(xhat, b), band_slice(x, b), max_value);
    }
    return acc / static_cast<double>(bands);
}

double nrmse(const DenseTensor& xhat, const DenseTensor& x) {
    check_same(xhat, x);
    double res = 0.0, ref = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = xhat.data[i] - x.data[i];
        res += d * d;
        ref += x.data[i] * x.data[i];
    }
    if (ref == 0.0) throw std::invalid_argument("nrmse: reference has zero norm");
    return std::sqrt(res / ref);
}

double r2(const DenseTensor& xhat, const DenseTensor& x) {
    check_same(xhat, x);
    double mean = 0.0;
    for (double v : x.data) mean += v;
    mean /= static_cast<double>(x.size());
    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = x.data[i] - xhat.data[i];
        const double c = x.data[i] - mean;
        ss_res += r * r;
        ss_tot += c * c;
    }
    if (ss_tot == 0.0) throw std::invalid_argument("r2: reference is constant");
    return 1.0 - ss_res / ss_tot;
}

MetricsReport evaluate_metrics(const DenseTensor& xhat, const DenseTensor& x, double max_value,
                               bool per_band) {
    MetricsReport report;
    report.psnr = psnr(xhat, x, max_value);
    const int h = x.shape[0];
    const int w = x.order() >= 2 ? x.shape[1] : 1;
    report.ssim = (h >= kWindow && w >= kWindow) ? ssim(xhat, x, max_value)
                                                 : std::numeric_limits<double>::quiet_NaN();
    report.nrmse = nrmse(xhat, x);
    report.r2 = r2(xhat, x);
    if (per_band) {
        std::vector<double> bands;
        const std::size_t n = band_count(x);
        for (std::size_t b = 0; b < n; ++b) {
            Mat ah = band_slice(xhat, b), ax = band_slice(x, b);
            double err = (ah - ax).squaredNorm() / static_cast<double>(ah.size());
            bands.push_back(err == 0.0 ? std::numeric_limits<double>::infinity()
                                       : 10.0 * std::log10(max_value * max_value / err));
        }
        report.per_band_psnr = std::move(bands);
    }
    return report;
}

}  // namespace noctr
