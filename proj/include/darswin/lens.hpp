#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include <json.hpp>

namespace darswin {

inline constexpr double kPi = 3.14159265358979323846;

inline double deg2rad(double d) { return d * kPi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / kPi; }

/// Unified camera model. Maps the incident angle theta (measured from the
/// optical axis) to a normalized image radius in [0, 1]:
///
///   r = f * sin(theta) / (xi + cos(theta))
///
/// xi = 0 is the perspective limit, xi = 1 the most distorted lens the
/// model covers. The focal is normalized so that project(fov/2) == 1.
struct LensModel {
    double xi = 0.0;     // distortion parameter, in [0, 1]
    double fov = kPi;    // full field of view, radians, in (0, pi]
    double focal = 1.0;  // normalized-image-radius units
};

/// Focal length such that the maximum incident angle fov/2 maps to radius 1.
inline double focal_from_fov(double xi, double fov) {
    if (xi < 0.0 || xi > 1.0)
        throw std::domain_error("lens: xi out of [0,1]: " + std::to_string(xi));
    if (!(fov > 0.0) || fov > kPi)
        throw std::domain_error("lens: fov out of (0,pi]: " + std::to_string(fov));
    const double half = fov / 2.0;
    const double f = (xi + std::cos(half)) / std::sin(half);
    if (!(f > 0.0))
        throw std::domain_error("lens: degenerate focal for xi=" + std::to_string(xi) +
                                " fov=" + std::to_string(fov));
    return f;
}

inline LensModel make_lens(double xi, double fov) {
    return LensModel{xi, fov, focal_from_fov(xi, fov)};
}

namespace detail {
inline void check_theta(const LensModel& m, double theta) {
    constexpr double tol = 1e-12;
    if (theta < -tol || theta > m.fov / 2.0 + tol)
        throw std::domain_error("lens: theta " + std::to_string(theta) +
                                " outside [0, fov/2] with fov/2=" + std::to_string(m.fov / 2.0));
}
}  // namespace detail

inline double project(const LensModel& m, double theta) {
    detail::check_theta(m, theta);
    return m.focal * std::sin(theta) / (m.xi + std::cos(theta));
}

/// d project / d theta; strictly positive on [0, fov/2) for fov < pi.
inline double projection_derivative(const LensModel& m, double theta) {
    detail::check_theta(m, theta);
    const double denom = m.xi + std::cos(theta);
    return m.focal * (m.xi * std::cos(theta) + 1.0) / (denom * denom);
}

/// Closed-form inverse of project. Substituting t = tan(theta/2) into the
/// projection turns it into a quadratic in t; the root inside [0, fov/2],
/// rationalized for stability near r = 0, is
///
///   t = r (1 + xi) / (f + sqrt(f^2 + r^2 (1 - xi^2)))
inline double unproject(const LensModel& m, double radius) {
    if (radius < 0.0 || radius > 1.0 + 1e-12)
        throw std::domain_error("lens: radius out of [0,1]: " + std::to_string(radius));
    const double disc = m.focal * m.focal + radius * radius * (1.0 - m.xi * m.xi);
    if (disc < -1e-12)
        throw std::runtime_error("lens: negative discriminant (internal invariant violated)");
    const double t = radius * (1.0 + m.xi) / (m.focal + std::sqrt(std::max(disc, 0.0)));
    return 2.0 * std::atan(t);
}

inline nlohmann::json lens_to_json(const LensModel& m) {
    return {{"model", "unified"}, {"xi", m.xi}, {"fov_deg", rad2deg(m.fov)}};
}

inline LensModel lens_from_json(const nlohmann::json& j) {
    if (j.at("model").get<std::string>() != "unified")
        throw std::runtime_error("lens: unsupported model tag '" +
                                 j.at("model").get<std::string>() + "'");
    return make_lens(j.at("xi").get<double>(), deg2rad(j.at("fov_deg").get<double>()));
}

}  // namespace darswin
