#pragma once

#include "noctr/tensor.hpp"

#include <optional>
#include <vector>

namespace noctr {

/// Peak signal-to-noise ratio in dB: 10*log10(max_value^2 / MSE).
/// Returns +inf when the residual is exactly zero.
double psnr(const DenseTensor& xhat, const DenseTensor& x, double max_value = 1.0);

/// Mean structural similarity with the standard 11x11 Gaussian window
/// (sigma 1.5), C1 = (0.01 L)^2, C2 = (0.03 L)^2. Tensors of order > 2 are
/// scored per 2-D slice over the leading two modes and averaged across
/// bands/frames. Spatial dims must be >= the window size.
double ssim(const DenseTensor& xhat, const DenseTensor& x, double max_value = 1.0);

/// ||xhat - x||_F / ||x||_F. The reference must have nonzero norm.
double nrmse(const DenseTensor& xhat, const DenseTensor& x);

/// Coefficient of determination 1 - SS_res / SS_tot. The reference must be
/// non-constant.
double r2(const DenseTensor& xhat, const DenseTensor& x);

struct MetricsReport {
    double psnr = 0.0;
    double ssim = 0.0;
    double nrmse = 0.0;
    double r2 = 0.0;
    std::optional<std::vector<double>> per_band_psnr;
};

/// All four metrics at once; with per_band set, PSNR is also reported per
/// band slice. SSIM is skipped (set to NaN) when the spatial dims are
/// smaller than the window.
MetricsReport evaluate_metrics(const DenseTensor& xhat, const DenseTensor& x,
                               double max_value = 1.0, bool per_band = false);

}  // namespace noctr
