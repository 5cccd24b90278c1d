#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "darswin/image.hpp"

namespace darswin {

/// Depth evaluation over the valid set D = mask AND gt > 0.
struct DepthEval {
    double abs_rel = 0.0;
    double rmse = 0.0;
    double log_rmse = 0.0;
    double sq_rel = 0.0;
    double delta[3] = {0.0, 0.0, 0.0};  // thresholds 1.25^t, t = 1..3
    std::size_t valid_count = 0;
};

namespace detail {
inline void check_metric_shapes(const Image& a, const Image& b, const PixelMask& mask) {
    if (a.h != b.h || a.w != b.w || a.c != 1 || b.c != 1 || mask.h != a.h || mask.w != a.w)
        throw std::invalid_argument("metrics: shape mismatch pred " + std::to_string(a.h) + "x" +
                                    std::to_string(a.w) + "x" + std::to_string(a.c) + " vs gt " +
                                    std::to_string(b.h) + "x" + std::to_string(b.w) + "x" +
                                    std::to_string(b.c));
}
}  // namespace detail

/// Scale-invariant log loss: d_i = pred_i - log(gt_i) over valid pixels,
/// sqrt( mean(d^2) - lambda * mean(d)^2 ). Predictions are log-depths.
inline double si_log_loss(const Image& pred_log, const Image& gt, const PixelMask& mask,
                          double lambda = 0.85) {
    detail::check_metric_shapes(pred_log, gt, mask);
    double sum = 0.0, sum_sq = 0.0;
    std::size_t n = 0;
    for (int y = 0; y < gt.h; ++y) {
        for (int x = 0; x < gt.w; ++x) {
            if (!mask.at(y, x)) continue;
            const double g = gt.at(y, x);
            if (!(g > 0.0))
                throw std::domain_error("metrics: nonpositive ground-truth depth " +
                                        std::to_string(g) + " inside the valid mask");
            const double d = pred_log.at(y, x) - std::log(g);
            sum += d;
            sum_sq += d * d;
            ++n;
        }
    }
    if (n == 0) throw std::domain_error("metrics: empty valid mask");
    const double mean_sq = sum_sq / n;
    const double mean = sum / n;
    return std::sqrt(std::max(0.0, mean_sq - lambda * mean * mean));
}

inline DepthEval evaluate(const Image& pred, const Image& gt, const PixelMask& mask) {
    detail::check_metric_shapes(pred, gt, mask);
    DepthEval e;
    double abs_rel = 0.0, sq_rel = 0.0, sq = 0.0, log_sq = 0.0;
    std::size_t hits[3] = {0, 0, 0};
    for (int y = 0; y < gt.h; ++y) {
        for (int x = 0; x < gt.w; ++x) {
            if (!mask.at(y, x)) continue;
            const double gstar = gt.at(y, x);
            if (!(gstar > 0.0)) continue;  // valid set is mask AND gt > 0
            const double d = pred.at(y, x);
            ++e.valid_count;
            const double err = gstar - d;
            abs_rel += std::abs(err) / gstar;
            sq_rel += err * err / gstar;
            sq += err * err;
            // A nonpositive prediction counts as a delta failure, not an error.
            double ratio = std::numeric_limits<double>::infinity();
            double log_d = -std::numeric_limits<double>::infinity();
            if (d > 0.0) {
                ratio = std::max(gstar / d, d / gstar);
                log_d = std::log(d);
            }
            const double log_err = std::log(gstar) - log_d;
            log_sq += std::isfinite(log_err) ? log_err * log_err
                                             : std::numeric_limits<double>::infinity();
            for (int t = 0; t < 3; ++t)
                if (ratio <= std::pow(1.25, t + 1)) ++hits[t];
        }
    }
    if (e.valid_count == 0) throw std::domain_error("metrics: empty valid set");
    const double inv = 1.0 / static_cast<double>(e.valid_count);
    e.abs_rel = abs_rel * inv;
    e.sq_rel = sq_rel * inv;
    e.rmse = std::sqrt(sq * inv);
    e.log_rmse = std::sqrt(log_sq * inv);
    for (int t = 0; t < 3; ++t) e.delta[t] = hits[t] * inv;
    return e;
}

}  // namespace darswin
