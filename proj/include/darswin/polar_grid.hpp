#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "darswin/image.hpp"
#include "darswin/lens.hpp"
#include "darswin/sampling.hpp"
#include "darswin/threads.hpp"

namespace darswin {

/// Radial-azimuth patch grid with per-patch sample points in pixel
/// coordinates. Construction is a pure function of its inputs: patch
/// boundaries come from radial_nodes/azimuth_nodes, sample radii sit at
/// midpoints of s_r uniform sub-intervals of the patch's g-interval, sample
/// azimuths at s_phi midpoints of the patch's azimuth interval. No sample
/// ever lands on a patch boundary, so adjacent patches never share samples.
struct PolarGrid {
    int n_r = 0, n_phi = 0;
    int s_r = 0, s_phi = 0;
    int h = 0, w = 0;
    double cx = 0.0, cy = 0.0;   // image-circle center, pixels
    double radius_px = 0.0;      // min(h, w) / 2
    LensModel lens;
    GFunction g;
    std::vector<double> radial_edges_g;   // n_r + 1 values in g-space
    std::vector<double> azimuth_edges;    // n_phi + 1 values in [0, 2pi]
    // Per-sample pixel coordinates, laid out [n_r][n_phi][s_r * s_phi].
    std::vector<double> sample_x, sample_y;
    // Sample polar coordinates (normalized radius, azimuth), same layout.
    std::vector<double> sample_r, sample_phi;

    int patches() const { return n_r * n_phi; }
    int samples_per_patch() const { return s_r * s_phi; }
    std::size_t total_samples() const {
        return static_cast<std::size_t>(patches()) * samples_per_patch();
    }
    std::size_t sample_index(int pr, int pphi, int si, int sj) const {
        return (static_cast<std::size_t>(pr) * n_phi + pphi) * samples_per_patch() +
               static_cast<std::size_t>(si) * s_phi + sj;
    }
    int patch_of_sample(std::size_t sample) const {
        return static_cast<int>(sample / samples_per_patch());
    }
};

inline PolarGrid build_grid(const LensModel& lens, const GFunction& g, int n_r, int n_phi,
                            int s_r, int s_phi, int h, int w) {
    if (n_r < 1 || n_phi < 1 || s_r < 1 || s_phi < 1)
        throw std::invalid_argument("polar_grid: patch/sample counts must be >= 1");
    if (h < 2 || w < 2)
        throw std::invalid_argument("polar_grid: image must be at least 2x2, got " +
                                    std::to_string(h) + "x" + std::to_string(w));
    PolarGrid grid;
    grid.n_r = n_r;
    grid.n_phi = n_phi;
    grid.s_r = s_r;
    grid.s_phi = s_phi;
    grid.h = h;
    grid.w = w;
    grid.cx = (w - 1) / 2.0;
    grid.cy = (h - 1) / 2.0;
    grid.radius_px = std::min(h, w) / 2.0;
    grid.lens = lens;
    grid.g = g;

    const double ga = g_eval(g, g.a);
    grid.radial_edges_g.resize(n_r + 1);
    for (int j = 0; j <= n_r; ++j) grid.radial_edges_g[j] = ga * j / n_r;
    grid.azimuth_edges = azimuth_nodes(n_phi);

    const std::size_t total = grid.total_samples();
    grid.sample_x.resize(total);
    grid.sample_y.resize(total);
    grid.sample_r.resize(total);
    grid.sample_phi.resize(total);

    // Radii repeat across azimuth patches; compute the n_r * s_r distinct ones once.
    std::vector<double> radii(static_cast<std::size_t>(n_r) * s_r);
    for (int pr = 0; pr < n_r; ++pr) {
        const double u0 = grid.radial_edges_g[pr], u1 = grid.radial_edges_g[pr + 1];
        for (int si = 0; si < s_r; ++si) {
            const double u = u0 + (si + 0.5) / s_r * (u1 - u0);
            radii[static_cast<std::size_t>(pr) * s_r + si] = project(lens, g_inverse(g, u));
        }
    }
    for (int pr = 0; pr < n_r; ++pr) {
        for (int pphi = 0; pphi < n_phi; ++pphi) {
            const double phi0 = grid.azimuth_edges[pphi], phi1 = grid.azimuth_edges[pphi + 1];
            for (int si = 0; si < s_r; ++si) {
                const double r = radii[static_cast<std::size_t>(pr) * s_r + si];
                for (int sj = 0; sj < s_phi; ++sj) {
                    const double phi = phi0 + (sj + 0.5) / s_phi * (phi1 - phi0);
                    const std::size_t idx = grid.sample_index(pr, pphi, si, sj);
                    grid.sample_r[idx] = r;
                    grid.sample_phi[idx] = phi;
                    grid.sample_x[idx] = grid.cx + r * grid.radius_px * std::cos(phi);
                    grid.sample_y[idx] = grid.cy + r * grid.radius_px * std::sin(phi);
                }
            }
        }
    }
    return grid;
}

/// Bilinear lookup with clamping to the pixel-center box; points within half
/// a pixel of the circle boundary read the boundary pixel.
inline double bilinear_at(const Image& img, double x, double y, int ch) {
    const double xc = std::clamp(x, 0.0, static_cast<double>(img.w - 1));
    const double yc = std::clamp(y, 0.0, static_cast<double>(img.h - 1));
    const int x0 = std::min(static_cast<int>(xc), img.w - 2);
    const int y0 = std::min(static_cast<int>(yc), img.h - 2);
    const double fx = xc - x0, fy = yc - y0;
    return img.at(y0, x0, ch) * (1.0 - fx) * (1.0 - fy) +
           img.at(y0, x0 + 1, ch) * fx * (1.0 - fy) +
           img.at(y0 + 1, x0, ch) * (1.0 - fx) * fy +
           img.at(y0 + 1, x0 + 1, ch) * fx * fy;
}

/// Polar token map: [n_r * n_phi] rows of s_r * s_phi * C values, channel
/// fastest within a sample. Interpolation weights are renormalized over the
/// corners whose pixel centers lie inside the image circle, so the sampler
/// never reads a pixel outside it; rim samples whose cell has no in-circle
/// corner fall back to the nearest in-circle pixel.
inline std::vector<double> bilinear_sample(const Image& img, const PolarGrid& grid) {
    if (img.h != grid.h || img.w != grid.w)
        throw std::invalid_argument("polar_grid: image " + std::to_string(img.h) + "x" +
                                    std::to_string(img.w) + " does not match grid " +
                                    std::to_string(grid.h) + "x" + std::to_string(grid.w));
    const double r2 = grid.radius_px * grid.radius_px;
    const auto inside = [&](int x, int y) {
        return (x - grid.cx) * (x - grid.cx) + (y - grid.cy) * (y - grid.cy) <= r2;
    };
    const std::size_t total = grid.total_samples();
    std::vector<double> out(total * img.c);
    for (std::size_t s = 0; s < total; ++s) {
        const double xc = std::clamp(grid.sample_x[s], 0.0, static_cast<double>(img.w - 1));
        const double yc = std::clamp(grid.sample_y[s], 0.0, static_cast<double>(img.h - 1));
        const int x0 = std::min(static_cast<int>(xc), img.w - 2);
        const int y0 = std::min(static_cast<int>(yc), img.h - 2);
        const double fx = xc - x0, fy = yc - y0;
        double w[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
        const int px[4] = {x0, x0 + 1, x0, x0 + 1};
        const int py[4] = {y0, y0, y0 + 1, y0 + 1};
        double wsum = 0.0;
        for (int cnr = 0; cnr < 4; ++cnr) {
            if (!inside(px[cnr], py[cnr])) w[cnr] = 0.0;
            wsum += w[cnr];
        }
        if (wsum > 0.0) {
            for (int ch = 0; ch < img.c; ++ch) {
                double acc = 0.0;
                for (int cnr = 0; cnr < 4; ++cnr)
                    if (w[cnr] > 0.0) acc += w[cnr] * img.at(py[cnr], px[cnr], ch);
                out[s * img.c + ch] = acc / wsum;
            }
        } else {
            // Whole cell outside: take the nearest in-circle pixel.
            int bx = static_cast<int>(grid.cx), by = static_cast<int>(grid.cy);
            double best = std::numeric_limits<double>::infinity();
            for (int y = std::max(0, y0 - 2); y <= std::min(img.h - 1, y0 + 3); ++y)
                for (int x = std::max(0, x0 - 2); x <= std::min(img.w - 1, x0 + 3); ++x) {
                    if (!inside(x, y)) continue;
                    const double d = (x - xc) * (x - xc) + (y - yc) * (y - yc);
                    if (d < best) {
                        best = d;
                        bx = x;
                        by = y;
                    }
                }
            for (int ch = 0; ch < img.c; ++ch) out[s * img.c + ch] = img.at(by, bx, ch);
        }
    }
    return out;
}

/// Fixed pixel-to-sample binding. Each valid pixel stores its k nearest
/// sample identifiers (Euclidean pixel distance, ties broken by smallest id).
/// Depends only on the grid geometry, never on features.
struct KnnIndex {
    int h = 0, w = 0, k = 0;
    std::size_t sample_count = 0;
    PixelMask mask;
    std::vector<std::uint32_t> neighbors;  // [h * w * k], valid pixels only

    const std::uint32_t* at(int y, int x) const {
        return neighbors.data() + (static_cast<std::size_t>(y) * w + x) * k;
    }
};

inline KnnIndex build_knn_index(const PolarGrid& grid, int k = 4, int threads = 0) {
    const std::size_t n_samples = grid.total_samples();
    if (static_cast<std::size_t>(k) > n_samples)
        throw std::invalid_argument("polar_grid: k=" + std::to_string(k) + " exceeds sample count " +
                                    std::to_string(n_samples));
    KnnIndex index;
    index.h = grid.h;
    index.w = grid.w;
    index.k = k;
    index.sample_count = n_samples;
    index.mask = circle_mask(grid.h, grid.w);
    index.neighbors.assign(static_cast<std::size_t>(grid.h) * grid.w * k, 0);

    // Bucket samples into a coarse cell grid and search outward ring by ring.
    const double cell = std::max(1.0, 2.0 * grid.radius_px / std::sqrt(static_cast<double>(n_samples)));
    const int ncx = std::max(1, static_cast<int>(std::ceil(grid.w / cell)));
    const int ncy = std::max(1, static_cast<int>(std::ceil(grid.h / cell)));
    std::vector<std::vector<std::uint32_t>> buckets(static_cast<std::size_t>(ncx) * ncy);
    const auto cell_of = [&](double x, double y) {
        const int bx = std::clamp(static_cast<int>(x / cell), 0, ncx - 1);
        const int by = std::clamp(static_cast<int>(y / cell), 0, ncy - 1);
        return std::make_pair(bx, by);
    };
    for (std::size_t s = 0; s < n_samples; ++s) {
        const auto [bx, by] = cell_of(grid.sample_x[s], grid.sample_y[s]);
        buckets[static_cast<std::size_t>(by) * ncx + bx].push_back(static_cast<std::uint32_t>(s));
    }

    parallel_for(static_cast<std::size_t>(grid.h), threads, [&](std::size_t ylo, std::size_t yhi) {
        std::vector<std::pair<double, std::uint32_t>> cand;
        for (std::size_t y = ylo; y < yhi; ++y) {
            for (int x = 0; x < grid.w; ++x) {
                if (!index.mask.at(static_cast<int>(y), x)) continue;
                const double px = static_cast<double>(x), py = static_cast<double>(y);
                const auto [bx, by] = cell_of(px, py);
                cand.clear();
                double kth = std::numeric_limits<double>::infinity();
                for (int ring = 0; ring < std::max(ncx, ncy); ++ring) {
                    // Once we hold k candidates, any cell farther than the
                    // current k-th distance cannot contribute.
                    if (cand.size() >= static_cast<std::size_t>(k)) {
                        const double ring_min = (ring - 1) * cell;
                        if (ring_min > 0.0 && ring_min * ring_min > kth) break;
                    }
                    bool any_cell = false;
                    for (int cy2 = by - ring; cy2 <= by + ring; ++cy2) {
                        if (cy2 < 0 || cy2 >= ncy) continue;
                        for (int cx2 = bx - ring; cx2 <= bx + ring; ++cx2) {
                            if (cx2 < 0 || cx2 >= ncx) continue;
                            if (std::max(std::abs(cx2 - bx), std::abs(cy2 - by)) != ring) continue;
                            any_cell = true;
                            for (const std::uint32_t s : buckets[static_cast<std::size_t>(cy2) * ncx + cx2]) {
                                const double dx = grid.sample_x[s] - px;
                                const double dy = grid.sample_y[s] - py;
                                cand.emplace_back(dx * dx + dy * dy, s);
                            }
                        }
                    }
                    if (cand.size() >= static_cast<std::size_t>(k)) {
                        std::nth_element(cand.begin(), cand.begin() + (k - 1), cand.end());
                        kth = cand[k - 1].first;
                    }
                    if (!any_cell && ring > std::max(ncx, ncy)) break;
                }
                std::sort(cand.begin(), cand.end());
                std::uint32_t* dst = index.neighbors.data() + (y * grid.w + x) * k;
                for (int j = 0; j < k; ++j) dst[j] = cand[j].second;
            }
        }
    });
    return index;
}

/// Unweighted k-neighbor average of per-sample feature vectors back onto the
/// pixel grid. Invalid pixels are zero-filled; callers consult index.mask.
inline Image knn_project(const std::vector<double>& features, std::size_t feature_dim,
                         const KnnIndex& index) {
    if (feature_dim == 0 || features.size() != index.sample_count * feature_dim)
        throw std::invalid_argument("polar_grid: feature buffer " + std::to_string(features.size()) +
                                    " does not match " + std::to_string(index.sample_count) +
                                    " samples x dim " + std::to_string(feature_dim));
    Image out(index.h, index.w, static_cast<int>(feature_dim), 0.0);
    const double inv_k = 1.0 / index.k;
    for (int y = 0; y < index.h; ++y) {
        for (int x = 0; x < index.w; ++x) {
            if (!index.mask.at(y, x)) continue;
            const std::uint32_t* nb = index.at(y, x);
            for (std::size_t ch = 0; ch < feature_dim; ++ch) {
                double acc = 0.0;
                for (int j = 0; j < index.k; ++j) acc += features[nb[j] * feature_dim + ch];
                out.at(y, x, static_cast<int>(ch)) = acc * inv_k;
            }
        }
    }
    return out;
}

}  // namespace darswin
