#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "darswin/image.hpp"
#include "darswin/lens.hpp"
#include "darswin/rng.hpp"
#include "darswin/threads.hpp"

namespace darswin {

/// Equirectangular panorama: row 0 is +90 degrees latitude, column 0 is
/// -180 degrees longitude, and W = 2H. Depth is ray length in meters,
/// 0 marks invalid.
struct Panorama {
    Image rgb;    // H_p x W_p x 3
    Image depth;  // H_p x W_p x 1
};

inline void validate(const Panorama& p) {
    if (p.rgb.w != 2 * p.rgb.h || p.depth.h != p.rgb.h || p.depth.w != p.rgb.w || p.rgb.c != 3 ||
        p.depth.c != 1)
        throw std::invalid_argument("data: degenerate panorama (need W=2H, matching rgb/depth)");
}

/// One synthesized fisheye training sample.
struct DepthSample {
    Image rgb;    // H x W x 3
    Image depth;  // H x W x 1, meters
    PixelMask mask;
    LensModel lens;
    double yaw = 0.0;
};

struct DistortionGroup {
    std::string name;
    double xi_lo = 0.0, xi_hi = 0.0;
};

inline const std::vector<DistortionGroup>& distortion_groups() {
    static const std::vector<DistortionGroup> groups = {
        {"very_low", 0.0, 0.05}, {"low", 0.2, 0.35}, {"medium", 0.5, 0.7}, {"high", 0.85, 1.0}};
    return groups;
}

inline DistortionGroup group_by_name(const std::string& name) {
    for (const auto& g : distortion_groups())
        if (g.name == name) return g;
    throw std::invalid_argument("data: unknown distortion group '" + name + "'");
}

namespace datadetail {

/// Unit direction for (longitude, latitude), z up.
inline std::array<double, 3> lonlat_dir(double lon, double lat) {
    return {std::cos(lat) * std::cos(lon), std::cos(lat) * std::sin(lon), std::sin(lat)};
}

inline double bilinear_pano(const Image& img, double lon, double lat, int ch) {
    // Continuous pixel coordinates with half-pixel centers; longitude wraps.
    const double col = (lon + kPi) / (2.0 * kPi) * img.w - 0.5;
    const double row = (kPi / 2.0 - lat) / kPi * img.h - 0.5;
    const double rc = std::clamp(row, 0.0, static_cast<double>(img.h - 1));
    const int r0 = std::min(static_cast<int>(rc), img.h - 2 >= 0 ? img.h - 2 : 0);
    const double fr = rc - r0;
    const int c0 = static_cast<int>(std::floor(col));
    const double fc = col - c0;
    const auto wrap = [&](int c) { return ((c % img.w) + img.w) % img.w; };
    const int ca = wrap(c0), cb = wrap(c0 + 1);
    const int r1 = std::min(r0 + 1, img.h - 1);
    return img.at(r0, ca, ch) * (1.0 - fc) * (1.0 - fr) + img.at(r0, cb, ch) * fc * (1.0 - fr) +
           img.at(r1, ca, ch) * (1.0 - fc) * fr + img.at(r1, cb, ch) * fc * fr;
}

inline double nearest_pano(const Image& img, double lon, double lat, int ch) {
    const double col = (lon + kPi) / (2.0 * kPi) * img.w - 0.5;
    const double row = (kPi / 2.0 - lat) / kPi * img.h - 0.5;
    const int r = std::clamp(static_cast<int>(std::lround(row)), 0, img.h - 1);
    const int c = ((static_cast<int>(std::lround(col)) % img.w) + img.w) % img.w;
    return img.at(r, c, ch);
}

}  // namespace datadetail

/// Render a fisheye RGB-D view of the panorama under the given lens. RGB is
/// bilinear; depth uses nearest-neighbor lookup so no value is ever blended
/// across a depth edge.
inline DepthSample warp_to_fisheye(const Panorama& pano, const LensModel& lens, double yaw,
                                   int out_size, int threads = 0) {
    validate(pano);
    if (out_size < 8) throw std::invalid_argument("data: out_size must be >= 8");
    DepthSample s;
    s.rgb = Image(out_size, out_size, 3);
    s.depth = Image(out_size, out_size, 1);
    s.mask = circle_mask(out_size, out_size);
    s.lens = lens;
    s.yaw = yaw;

    const double cx = (out_size - 1) / 2.0, cy = (out_size - 1) / 2.0;
    const double rpx = out_size / 2.0;
    // Camera basis: optical axis at (lon=yaw, lat=0), image x toward
    // increasing longitude, image y downward (toward decreasing latitude).
    const std::array<double, 3> axis = datadetail::lonlat_dir(yaw, 0.0);
    const std::array<double, 3> right = {-std::sin(yaw), std::cos(yaw), 0.0};
    const std::array<double, 3> up = {0.0, 0.0, 1.0};

    parallel_for(static_cast<std::size_t>(out_size), threads, [&](std::size_t ylo, std::size_t yhi) {
        for (std::size_t y = ylo; y < yhi; ++y) {
            for (int x = 0; x < out_size; ++x) {
                if (!s.mask.at(static_cast<int>(y), x)) continue;
                const double dx = (x - cx) / rpx, dy = (y - cy) / rpx;
                const double r = std::min(std::sqrt(dx * dx + dy * dy), 1.0);
                const double theta = unproject(lens, r);
                const double phi = std::atan2(dy, dx);
                std::array<double, 3> dir;
                const double st = std::sin(theta), ct = std::cos(theta);
                for (int i = 0; i < 3; ++i)
                    dir[i] = ct * axis[i] + st * (std::cos(phi) * right[i] - std::sin(phi) * up[i]);
                const double lon = std::atan2(dir[1], dir[0]);
                const double lat = std::asin(std::clamp(dir[2], -1.0, 1.0));
                for (int ch = 0; ch < 3; ++ch)
                    s.rgb.at(static_cast<int>(y), x, ch) =
                        datadetail::bilinear_pano(pano.rgb, lon, lat, ch);
                s.depth.at(static_cast<int>(y), x) = datadetail::nearest_pano(pano.depth, lon, lat, 0);
            }
        }
    });
    return s;
}

/// Cropped cross image plus where the crop sits inside the 4 x 3 face cross.
struct CubemapResult {
    Image image;
    PixelMask valid;   // same size as image
    int crop_x = 0, crop_y = 0;
    int face_size = 0;
};

/// Piecewise-perspective undistortion: six 90-degree faces sampled through
/// the fisheye projection, unrolled into a cross and cropped to valid pixels.
inline CubemapResult undistort_cubemap_full(const DepthSample& sample, int face_size = 0) {
    if (sample.rgb.h < 2 || sample.rgb.h != sample.rgb.w)
        throw std::invalid_argument("data: cubemap needs a square fisheye sample");
    const int fs = face_size > 0 ? face_size : sample.rgb.h;
    // Face frames: forward, right, up in camera coordinates (axis = +x).
    struct Face {
        std::array<double, 3> fwd, right, up;
        int cell_x, cell_y;  // position in the 4 x 3 cross
    };
    const std::vector<Face> faces = {
        {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, 1, 1},    // front
        {{0, 1, 0}, {-1, 0, 0}, {0, 0, 1}, 2, 1},   // right
        {{0, -1, 0}, {1, 0, 0}, {0, 0, 1}, 0, 1},   // left
        {{-1, 0, 0}, {0, -1, 0}, {0, 0, 1}, 3, 1},  // back
        {{0, 0, 1}, {0, 1, 0}, {-1, 0, 0}, 1, 0},   // top
        {{0, 0, -1}, {0, 1, 0}, {1, 0, 0}, 1, 2},   // bottom
    };
    Image cross(3 * fs, 4 * fs, 3, 0.0);
    PixelMask cross_mask(3 * fs, 4 * fs);
    const double cx = (sample.rgb.w - 1) / 2.0, cy = (sample.rgb.h - 1) / 2.0;
    const double rpx = sample.rgb.w / 2.0;
    for (const Face& face : faces) {
        for (int v = 0; v < fs; ++v) {
            for (int u = 0; u < fs; ++u) {
                const double fu = (u + 0.5) / fs * 2.0 - 1.0;  // tan of 45 degrees = 1
                const double fv = (v + 0.5) / fs * 2.0 - 1.0;
                std::array<double, 3> dir;
                double norm = 0.0;
                for (int i = 0; i < 3; ++i) {
                    dir[i] = face.fwd[i] + fu * face.right[i] - fv * face.up[i];
                    norm += dir[i] * dir[i];
                }
                norm = std::sqrt(norm);
                for (auto& d : dir) d /= norm;
                const double theta = std::acos(std::clamp(dir[0], -1.0, 1.0));
                if (theta > sample.lens.fov / 2.0) continue;
                const double r = project(sample.lens, theta);
                const double phi = std::atan2(-dir[2], dir[1]);
                const double sx = cx + r * rpx * std::cos(phi);
                const double sy = cy + r * rpx * std::sin(phi);
                const int oy = face.cell_y * fs + v, ox = face.cell_x * fs + u;
                for (int ch = 0; ch < 3; ++ch) {
                    const double xc = std::clamp(sx, 0.0, double(sample.rgb.w - 1));
                    const double yc = std::clamp(sy, 0.0, double(sample.rgb.h - 1));
                    const int x0 = std::min(static_cast<int>(xc), sample.rgb.w - 2);
                    const int y0 = std::min(static_cast<int>(yc), sample.rgb.h - 2);
                    const double fx = xc - x0, fy = yc - y0;
                    cross.at(oy, ox, ch) = sample.rgb.at(y0, x0, ch) * (1 - fx) * (1 - fy) +
                                           sample.rgb.at(y0, x0 + 1, ch) * fx * (1 - fy) +
                                           sample.rgb.at(y0 + 1, x0, ch) * (1 - fx) * fy +
                                           sample.rgb.at(y0 + 1, x0 + 1, ch) * fx * fy;
                }
                cross_mask.set(oy, ox, true);
            }
        }
    }
    // Crop to the valid bounding box.
    int x0 = cross.w, x1 = -1, y0 = cross.h, y1 = -1;
    for (int y = 0; y < cross.h; ++y)
        for (int x = 0; x < cross.w; ++x)
            if (cross_mask.at(y, x)) {
                x0 = std::min(x0, x);
                x1 = std::max(x1, x);
                y0 = std::min(y0, y);
                y1 = std::max(y1, y);
            }
    if (x1 < x0) throw std::runtime_error("data: cubemap produced no valid pixels");
    CubemapResult res;
    res.image = Image(y1 - y0 + 1, x1 - x0 + 1, 3, 0.0);
    res.valid = PixelMask(y1 - y0 + 1, x1 - x0 + 1);
    res.crop_x = x0;
    res.crop_y = y0;
    res.face_size = fs;
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            for (int ch = 0; ch < 3; ++ch) res.image.at(y - y0, x - x0, ch) = cross.at(y, x, ch);
            res.valid.set(y - y0, x - x0, cross_mask.at(y, x));
        }
    return res;
}

inline Image undistort_cubemap(const DepthSample& sample, int face_size = 0) {
    return undistort_cubemap_full(sample, face_size).image;
}

/// Procedural box-room panorama with analytically exact depth. The camera
/// sits strictly inside an axis-aligned box; RGB is a smooth texture keyed
/// by the hit face and the hit point, deterministic in the seed.
struct BoxRoomSpec {
    double size_x = 4.0, size_y = 3.0, size_z = 2.5;  // full extents, meters
    double cam_x = 0.4, cam_y = -0.3, cam_z = 0.2;    // offset from the box center
    std::uint64_t texture_seed = 0;
    int height = 128;  // panorama rows; width is 2 * height
};

inline Panorama synth_panorama(const BoxRoomSpec& spec) {
    const double hx = spec.size_x / 2.0, hy = spec.size_y / 2.0, hz = spec.size_z / 2.0;
    if (std::abs(spec.cam_x) >= hx || std::abs(spec.cam_y) >= hy || std::abs(spec.cam_z) >= hz)
        throw std::invalid_argument("data: camera must sit strictly inside the box");
    const int hp = spec.height, wp = 2 * spec.height;
    Panorama pano;
    pano.rgb = Image(hp, wp, 3);
    pano.depth = Image(hp, wp, 1);

    Rng rng(spec.texture_seed);
    // Per-face base colors and sinusoid phases.
    std::array<std::array<double, 3>, 6> base{};
    std::array<std::array<double, 3>, 6> phase{};
    for (int f = 0; f < 6; ++f)
        for (int ch = 0; ch < 3; ++ch) {
            base[f][ch] = 0.25 + 0.5 * rng.uniform();
            phase[f][ch] = rng.uniform(0.0, 2.0 * kPi);
        }

    const std::array<double, 3> cam = {spec.cam_x, spec.cam_y, spec.cam_z};
    const std::array<double, 3> half = {hx, hy, hz};
    for (int row = 0; row < hp; ++row) {
        const double lat = kPi / 2.0 - (row + 0.5) / hp * kPi;
        for (int col = 0; col < wp; ++col) {
            const double lon = -kPi + (col + 0.5) / wp * 2.0 * kPi;
            const auto dir = datadetail::lonlat_dir(lon, lat);
            double best_t = std::numeric_limits<double>::infinity();
            int best_face = 0;
            for (int axis = 0; axis < 3; ++axis) {
                if (dir[axis] == 0.0) continue;
                for (int sgn = 0; sgn < 2; ++sgn) {
                    const double bound = sgn == 0 ? half[axis] : -half[axis];
                    const double t = (bound - cam[axis]) / dir[axis];
                    if (t <= 1e-12 || t >= best_t) continue;
                    bool inside = true;
                    for (int other = 0; other < 3; ++other) {
                        if (other == axis) continue;
                        const double coord = cam[other] + t * dir[other];
                        if (std::abs(coord) > half[other] + 1e-9) inside = false;
                    }
                    if (inside) {
                        best_t = t;
                        best_face = axis * 2 + sgn;
                    }
                }
            }
            pano.depth.at(row, col) = best_t;
            const std::array<double, 3> hit = {cam[0] + best_t * dir[0], cam[1] + best_t * dir[1],
                                               cam[2] + best_t * dir[2]};
            for (int ch = 0; ch < 3; ++ch) {
                const double wave =
                    std::sin(2.1 * hit[0] + phase[best_face][ch]) *
                    std::cos(1.7 * hit[1] + 0.5 * phase[best_face][(ch + 1) % 3]) +
                    0.5 * std::sin(2.9 * hit[2] + phase[best_face][(ch + 2) % 3]);
                pano.rgb.at(row, col, ch) = std::clamp(base[best_face][ch] + 0.2 * wave, 0.0, 1.0);
            }
        }
    }
    return pano;
}

/// One dataset manifest record; images are warped on the fly from panoramas.
struct ManifestRecord {
    std::string pano_path;
    double xi = 0.0;
    double yaw_rad = 0.0;
    double fov_deg = 175.0;
    int out_size = 64;
};

inline nlohmann::json record_to_json(const ManifestRecord& r) {
    return {{"pano_path", r.pano_path}, {"xi", r.xi},           {"yaw_rad", r.yaw_rad},
            {"fov_deg", r.fov_deg},     {"out_size", r.out_size}};
}

inline ManifestRecord record_from_json(const nlohmann::json& j) {
    return ManifestRecord{j.at("pano_path").get<std::string>(), j.at("xi").get<double>(),
                          j.at("yaw_rad").get<double>(), j.at("fov_deg").get<double>(),
                          j.at("out_size").get<int>()};
}

inline void write_manifest(const std::string& path, const std::vector<ManifestRecord>& records) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("data: cannot open manifest for writing: " + path);
    for (const auto& r : records) out << record_to_json(r).dump() << "\n";
}

inline std::vector<ManifestRecord> read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("data: cannot open manifest: " + path);
    std::vector<ManifestRecord> records;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded())
            throw std::runtime_error("data: bad manifest line in " + path + ": " + line);
        records.push_back(record_from_json(j));
    }
    return records;
}

/// Training manifest: xi uniform in the group's range, yaw uniform in
/// [0, 2pi), both from the seeded generator.
inline std::vector<ManifestRecord> make_split(const std::vector<std::string>& pano_paths,
                                              const DistortionGroup& group, std::uint64_t seed,
                                              int count, double fov_deg = 175.0,
                                              int out_size = 64) {
    if (pano_paths.empty()) throw std::invalid_argument("data: empty panorama list");
    if (count < 1) throw std::invalid_argument("data: sample count must be >= 1");
    Rng rng(seed);
    std::vector<ManifestRecord> records;
    records.reserve(count);
    for (int i = 0; i < count; ++i) {
        ManifestRecord r;
        r.pano_path = pano_paths[i % pano_paths.size()];
        r.xi = rng.uniform(group.xi_lo, group.xi_hi);
        r.yaw_rad = rng.uniform(0.0, 2.0 * kPi);
        r.fov_deg = fov_deg;
        r.out_size = out_size;
        records.push_back(r);
    }
    return records;
}

/// 20 fixed-distortion test manifests over the same panorama list. The default
/// grid is {0.00, 0.05, ..., 0.95}; include_one shifts it to {0.05, ..., 1.00}.
inline std::vector<std::vector<ManifestRecord>> make_test_suite(
    const std::vector<std::string>& pano_paths, std::uint64_t seed, bool include_one = false,
    double fov_deg = 175.0, int out_size = 64) {
    if (pano_paths.empty()) throw std::invalid_argument("data: empty panorama list");
    Rng rng(seed);
    std::vector<double> yaws(pano_paths.size());
    for (auto& y : yaws) y = rng.uniform(0.0, 2.0 * kPi);
    std::vector<std::vector<ManifestRecord>> suite;
    suite.reserve(20);
    for (int i = 0; i < 20; ++i) {
        const double xi = (include_one ? i + 1 : i) * 0.05;
        std::vector<ManifestRecord> records;
        records.reserve(pano_paths.size());
        for (std::size_t p = 0; p < pano_paths.size(); ++p)
            records.push_back(ManifestRecord{pano_paths[p], xi, yaws[p], fov_deg, out_size});
        suite.push_back(std::move(records));
    }
    return suite;
}

}  // namespace darswin
