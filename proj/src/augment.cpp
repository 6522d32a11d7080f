#include "ciscnet/augment.hpp"

#include <algorithm>
#include <cmath>

namespace ciscnet {

namespace {

uint8_t clamp_u8(double v) {
  return static_cast<uint8_t>(std::clamp(static_cast<int>(std::lround(v)), 0, 255));
}

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
  double mx = std::max({r, g, b}), mn = std::min({r, g, b});
  v = mx;
  double d = mx - mn;
  s = mx == 0 ? 0 : d / mx;
  if (d == 0) {
    h = 0;
  } else if (mx == r) {
    h = 60.0 * std::fmod((g - b) / d, 6.0);
  } else if (mx == g) {
    h = 60.0 * ((b - r) / d + 2.0);
  } else {
    h = 60.0 * ((r - g) / d + 4.0);
  }
  if (h < 0) h += 360.0;
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
  double c = v * s;
  double hp = h / 60.0;
  double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double r1 = 0, g1 = 0, b1 = 0;
  if (hp < 1) {
    r1 = c; g1 = x;
  } else if (hp < 2) {
    r1 = x; g1 = c;
  } else if (hp < 3) {
    g1 = c; b1 = x;
  } else if (hp < 4) {
    g1 = x; b1 = c;
  } else if (hp < 5) {
    r1 = x; b1 = c;
  } else {
    r1 = c; b1 = x;
  }
  double m = v - c;
  r = r1 + m;
  g = g1 + m;
  b = b1 + m;
}

}  // namespace

LabeledPatch flip_horizontal(const LabeledPatch& p) {
  LabeledPatch out(p.height, p.width);
  for (int y = 0; y < p.height; ++y) {
    for (int x = 0; x < p.width; ++x) {
      int sx = p.width - 1 - x;
      out.inst(y, x) = p.inst(y, sx);
      out.cls(y, x) = p.cls(y, sx);
      for (int ch = 0; ch < 3; ++ch) out.rgb(y, x, ch) = p.rgb(y, sx, ch);
    }
  }
  return out;
}

LabeledPatch rot90(const LabeledPatch& p, int quarter_turns) {
  int k = ((quarter_turns % 4) + 4) % 4;
  if (k == 0) return p;
  LabeledPatch src = p;
  for (int step = 0; step < k; ++step) {
    LabeledPatch out(src.width, src.height);
    // counterclockwise: out(y, x) = src(x, W-1-y)
    for (int y = 0; y < out.height; ++y) {
      for (int x = 0; x < out.width; ++x) {
        int sy = x;
        int sx = src.width - 1 - y;
        out.inst(y, x) = src.inst(sy, sx);
        out.cls(y, x) = src.cls(sy, sx);
        for (int ch = 0; ch < 3; ++ch) out.rgb(y, x, ch) = src.rgb(sy, sx, ch);
      }
    }
    src = std::move(out);
  }
  return src;
}

LabeledPatch scale_patch(const LabeledPatch& p, double factor) {
  if (factor <= 0) throw InvalidConfig("scale factor must be positive");
  LabeledPatch out(p.height, p.width);
  double cy = (p.height - 1) / 2.0, cx = (p.width - 1) / 2.0;
  for (int y = 0; y < p.height; ++y) {
    for (int x = 0; x < p.width; ++x) {
      double sy = (y - cy) / factor + cy;
      double sx = (x - cx) / factor + cx;

      // labels: nearest neighbor, outside the source is background
      int ny = static_cast<int>(std::lround(sy));
      int nx = static_cast<int>(std::lround(sx));
      if (ny >= 0 && ny < p.height && nx >= 0 && nx < p.width) {
        out.inst(y, x) = p.inst(ny, nx);
        out.cls(y, x) = p.cls(ny, nx);
      }

      // image: bilinear with clamp-to-edge
      double fy = std::clamp(sy, 0.0, static_cast<double>(p.height - 1));
      double fx = std::clamp(sx, 0.0, static_cast<double>(p.width - 1));
      int y0 = static_cast<int>(std::floor(fy)), x0 = static_cast<int>(std::floor(fx));
      int y1 = std::min(y0 + 1, p.height - 1), x1 = std::min(x0 + 1, p.width - 1);
      double wy = fy - y0, wx = fx - x0;
      for (int ch = 0; ch < 3; ++ch) {
        double v = (1 - wy) * ((1 - wx) * p.rgb(y0, x0, ch) + wx * p.rgb(y0, x1, ch)) +
                   wy * ((1 - wx) * p.rgb(y1, x0, ch) + wx * p.rgb(y1, x1, ch));
        out.rgb(y, x, ch) = clamp_u8(v);
      }
    }
  }
  return out;
}

void adjust_hsv_contrast(LabeledPatch& p, double hue_deg, double sat_factor,
                         double contrast_factor) {
  for (int y = 0; y < p.height; ++y) {
    for (int x = 0; x < p.width; ++x) {
      double r = p.rgb(y, x, 0), g = p.rgb(y, x, 1), b = p.rgb(y, x, 2);
      double h, s, v;
      rgb_to_hsv(r / 255.0, g / 255.0, b / 255.0, h, s, v);
      h = std::fmod(h + hue_deg + 360.0, 360.0);
      s = std::clamp(s * sat_factor, 0.0, 1.0);
      hsv_to_rgb(h, s, v, r, g, b);
      double rgb[3] = {r * 255.0, g * 255.0, b * 255.0};
      for (int ch = 0; ch < 3; ++ch) {
        double c = (rgb[ch] - 127.5) * contrast_factor + 127.5;
        p.rgb(y, x, ch) = clamp_u8(c);
      }
    }
  }
}

void gaussian_blur(LabeledPatch& p, double sigma) {
  if (sigma <= 0) return;
  int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  double ksum = 0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    ksum += kernel[i + radius];
  }
  for (double& k : kernel) k /= ksum;

  size_t npx = p.npx();
  std::vector<double> tmp(npx * 3), out(npx * 3);
  // horizontal
  for (int y = 0; y < p.height; ++y) {
    for (int x = 0; x < p.width; ++x) {
      for (int ch = 0; ch < 3; ++ch) {
        double acc = 0;
        for (int i = -radius; i <= radius; ++i) {
          int sx = std::clamp(x + i, 0, p.width - 1);
          acc += kernel[i + radius] * p.rgb(y, sx, ch);
        }
        tmp[(static_cast<size_t>(y) * p.width + x) * 3 + ch] = acc;
      }
    }
  }
  // vertical
  for (int y = 0; y < p.height; ++y) {
    for (int x = 0; x < p.width; ++x) {
      for (int ch = 0; ch < 3; ++ch) {
        double acc = 0;
        for (int i = -radius; i <= radius; ++i) {
          int sy = std::clamp(y + i, 0, p.height - 1);
          acc += kernel[i + radius] * tmp[(static_cast<size_t>(sy) * p.width + x) * 3 + ch];
        }
        out[(static_cast<size_t>(y) * p.width + x) * 3 + ch] = acc;
      }
    }
  }
  for (size_t i = 0; i < npx * 3; ++i) p.image[i] = clamp_u8(out[i]);
}

void add_gaussian_noise(LabeledPatch& p, double sigma, Rng& rng) {
  for (size_t i = 0; i < p.image.size(); ++i) {
    p.image[i] = clamp_u8(p.image[i] + rng.normal() * sigma);
  }
}

LabeledPatch augment(const LabeledPatch& patch, const AugmentConfig& cfg, Rng& rng) {
  LabeledPatch out = patch;

  if (cfg.p_flip_rot > 0 && rng.uniform() < cfg.p_flip_rot) {
    int k = rng.uniform_int(0, 3);
    bool flip = rng.uniform_int(0, 1) == 1;
    if (out.height != out.width && (k % 2) == 1) k = (k + 1) % 4;  // keep the canvas shape
    if (k != 0) out = rot90(out, k);
    if (flip) out = flip_horizontal(out);
  }
  if (cfg.p_scale > 0 && rng.uniform() < cfg.p_scale) {
    double factor = rng.uniform(cfg.scale_min, cfg.scale_max);
    out = scale_patch(out, factor);
  }
  if (cfg.p_color > 0 && rng.uniform() < cfg.p_color) {
    double hue = rng.uniform(-cfg.hue_max_deg, cfg.hue_max_deg);
    double sat = rng.uniform(cfg.sat_min, cfg.sat_max);
    double con = rng.uniform(cfg.contrast_min, cfg.contrast_max);
    adjust_hsv_contrast(out, hue, sat, con);
  }
  if (cfg.p_blur > 0 && rng.uniform() < cfg.p_blur) {
    double sigma = rng.uniform(cfg.blur_sigma_min, cfg.blur_sigma_max);
    gaussian_blur(out, sigma);
  }
  if (cfg.p_noise > 0 && rng.uniform() < cfg.p_noise) {
    double sigma = rng.uniform(0.0, cfg.noise_sigma_max);
    add_gaussian_noise(out, sigma, rng);
  }
  return out;
}

}  // namespace ciscnet
