#pragma once

// sRGB (D65) -> CIELAB conversion and the CIEDE2000 colour difference
// (k_L = k_C = k_H = 1).

#include <cmath>
#include <cstdint>
#include <numbers>

namespace uibench::color {

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;

  friend bool operator==(const Rgb&, const Rgb&) = default;
};

struct Lab {
  double l = 0.0;
  double a = 0.0;
  double b = 0.0;

  friend bool operator==(const Lab&, const Lab&) = default;
};

namespace detail {

inline double srgb_to_linear(std::uint8_t v) {
  const double c = v / 255.0;
  return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

inline double lab_f(double t) {
  constexpr double kDelta = 6.0 / 29.0;
  return t > kDelta * kDelta * kDelta ? std::cbrt(t) : t / (3.0 * kDelta * kDelta) + 4.0 / 29.0;
}

constexpr double deg(double rad) { return rad * 180.0 / std::numbers::pi; }
constexpr double rad(double deg) { return deg * std::numbers::pi / 180.0; }

}  // namespace detail

inline Lab to_lab(Rgb c) {
  const double r = detail::srgb_to_linear(c.r);
  const double g = detail::srgb_to_linear(c.g);
  const double b = detail::srgb_to_linear(c.b);
  const double x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
  const double y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
  const double z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;
  // D65 reference white
  const double fx = detail::lab_f(x / 0.95047);
  const double fy = detail::lab_f(y / 1.00000);
  const double fz = detail::lab_f(z / 1.08883);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

inline double ciede2000(const Lab& c1, const Lab& c2) {
  using detail::deg;
  using detail::rad;
  constexpr double kPow25To7 = 6103515625.0;

  const double cab1 = std::hypot(c1.a, c1.b);
  const double cab2 = std::hypot(c2.a, c2.b);
  const double cab_mean = (cab1 + cab2) / 2.0;
  const double cab_mean7 = std::pow(cab_mean, 7.0);
  const double g = 0.5 * (1.0 - std::sqrt(cab_mean7 / (cab_mean7 + kPow25To7)));

  const double a1p = (1.0 + g) * c1.a;
  const double a2p = (1.0 + g) * c2.a;
  const double c1p = std::hypot(a1p, c1.b);
  const double c2p = std::hypot(a2p, c2.b);

  auto hue = [](double b, double ap) {
    if (b == 0.0 && ap == 0.0) return 0.0;
    double h = deg(std::atan2(b, ap));
    return h < 0.0 ? h + 360.0 : h;
  };
  const double h1p = hue(c1.b, a1p);
  const double h2p = hue(c2.b, a2p);

  const double dlp = c2.l - c1.l;
  const double dcp = c2p - c1p;
  double dhp = 0.0;
  if (c1p * c2p != 0.0) {
    dhp = h2p - h1p;
    if (dhp > 180.0) dhp -= 360.0;
    else if (dhp < -180.0) dhp += 360.0;
  }
  const double dHp = 2.0 * std::sqrt(c1p * c2p) * std::sin(rad(dhp / 2.0));

  const double lp_mean = (c1.l + c2.l) / 2.0;
  const double cp_mean = (c1p + c2p) / 2.0;
  double hp_mean = h1p + h2p;
  if (c1p * c2p != 0.0) {
    if (std::abs(h1p - h2p) <= 180.0) hp_mean /= 2.0;
    else if (h1p + h2p < 360.0) hp_mean = (h1p + h2p + 360.0) / 2.0;
    else hp_mean = (h1p + h2p - 360.0) / 2.0;
  }

  const double t = 1.0 - 0.17 * std::cos(rad(hp_mean - 30.0)) + 0.24 * std::cos(rad(2.0 * hp_mean)) +
                   0.32 * std::cos(rad(3.0 * hp_mean + 6.0)) -
                   0.20 * std::cos(rad(4.0 * hp_mean - 63.0));
  const double d_theta = 30.0 * std::exp(-std::pow((hp_mean - 275.0) / 25.0, 2.0));
  const double cp_mean7 = std::pow(cp_mean, 7.0);
  const double rc = 2.0 * std::sqrt(cp_mean7 / (cp_mean7 + kPow25To7));
  const double lm50 = (lp_mean - 50.0) * (lp_mean - 50.0);
  const double sl = 1.0 + 0.015 * lm50 / std::sqrt(20.0 + lm50);
  const double sc = 1.0 + 0.045 * cp_mean;
  const double sh = 1.0 + 0.015 * cp_mean * t;
  const double rt = -std::sin(rad(2.0 * d_theta)) * rc;

  const double tl = dlp / sl;
  const double tc = dcp / sc;
  const double th = dHp / sh;
  return std::sqrt(tl * tl + tc * tc + th * th + rt * tc * th);
}

inline double ciede2000(Rgb a, Rgb b) { return ciede2000(to_lab(a), to_lab(b)); }

}  // namespace uibench::color
