#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace darswin {

/// Dense row-major image, double valued. Channel count is small (1 or 3).
struct Image {
    int h = 0, w = 0, c = 0;
    std::vector<double> data;

    Image() = default;
    Image(int h_, int w_, int c_, double fill = 0.0)
        : h(h_), w(w_), c(c_), data(static_cast<std::size_t>(h_) * w_ * c_, fill) {
        if (h_ < 1 || w_ < 1 || c_ < 1)
            throw std::invalid_argument("image: bad dimensions " + std::to_string(h_) + "x" +
                                        std::to_string(w_) + "x" + std::to_string(c_));
    }

    double& at(int y, int x, int ch = 0) {
        return data[(static_cast<std::size_t>(y) * w + x) * c + ch];
    }
    double at(int y, int x, int ch = 0) const {
        return data[(static_cast<std::size_t>(y) * w + x) * c + ch];
    }
    std::size_t size() const { return data.size(); }
};

/// Mask of pixels whose centers lie inside the inscribed image circle.
struct PixelMask {
    int h = 0, w = 0;
    std::vector<unsigned char> valid;

    PixelMask() = default;
    PixelMask(int h_, int w_) : h(h_), w(w_), valid(static_cast<std::size_t>(h_) * w_, 0) {}
    bool at(int y, int x) const { return valid[static_cast<std::size_t>(y) * w + x] != 0; }
    void set(int y, int x, bool v) { valid[static_cast<std::size_t>(y) * w + x] = v ? 1 : 0; }
    std::size_t count() const {
        std::size_t n = 0;
        for (auto v : valid) n += v;
        return n;
    }
};

inline PixelMask circle_mask(int h, int w) {
    PixelMask m(h, w);
    const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
    const double r = std::min(h, w) / 2.0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            m.set(y, x, (x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r);
    return m;
}

}  // namespace darswin
