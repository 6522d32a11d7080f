#include "ciscnet/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ciscnet/rng.hpp"

namespace ciscnet {

using json = nlohmann::json;
namespace fs = std::filesystem;

const std::array<std::string, kNumClasses> kClassNames = {
    "neutrophil", "epithelial", "lymphocyte", "plasma", "eosinophil", "connective"};

void validate_patch(const LabeledPatch& patch) {
  size_t npx = patch.npx();
  if (patch.height <= 0 || patch.width <= 0) throw DimensionMismatch("non-positive patch size");
  if (patch.image.size() != npx * 3 || patch.instances.size() != npx ||
      patch.classes.size() != npx) {
    throw DimensionMismatch("image/instances/classes sizes disagree");
  }
  std::map<uint16_t, uint8_t> label_class;
  for (size_t i = 0; i < npx; ++i) {
    uint16_t lbl = patch.instances[i];
    uint8_t cls = patch.classes[i];
    if (cls > kNumClasses) throw Error("class value " + std::to_string(cls) + " out of range");
    if ((lbl > 0) != (cls > 0)) throw InconsistentLabels(lbl > 0 ? lbl : 0);
    if (lbl > 0) {
      auto it = label_class.find(lbl);
      if (it == label_class.end()) {
        label_class.emplace(lbl, cls);
      } else if (it->second != cls) {
        throw InconsistentLabels(lbl);
      }
    }
  }
}

namespace {

std::string patch_name(const char* prefix, int i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%05d.%s", prefix, i, ext);
  return buf;
}

std::vector<uint8_t> read_file_bytes(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw MissingFile(path.string());
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (f.bad()) throw IoFailure("reading " + path.string());
  return bytes;
}

void write_file_bytes(const fs::path& path, const void* data, size_t size) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoFailure("cannot open " + path.string() + " for writing");
  f.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
  if (!f) throw IoFailure("writing " + path.string());
}

// Binary P6, 8-bit, fixed header formatting so reruns are byte-identical.
void write_ppm(const fs::path& path, const std::vector<uint8_t>& rgb, int h, int w) {
  std::ostringstream header;
  header << "P6\n" << w << " " << h << "\n255\n";
  std::string hs = header.str();
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoFailure("cannot open " + path.string() + " for writing");
  f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  f.write(reinterpret_cast<const char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
  if (!f) throw IoFailure("writing " + path.string());
}

std::vector<uint8_t> read_ppm(const fs::path& path, int expect_h, int expect_w) {
  std::vector<uint8_t> bytes = read_file_bytes(path);
  // parse "P6\n<w> <h>\n<max>\n"
  size_t pos = 0;
  auto next_token = [&]() -> std::string {
    while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
    size_t start = pos;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) ++pos;
    return std::string(bytes.begin() + start, bytes.begin() + pos);
  };
  if (next_token() != "P6") throw IoFailure(path.string() + ": not a binary PPM");
  int w = std::stoi(next_token());
  int h = std::stoi(next_token());
  int maxval = std::stoi(next_token());
  if (maxval != 255) throw IoFailure(path.string() + ": unsupported maxval");
  if (h != expect_h || w != expect_w) throw DimensionMismatch(path.string());
  ++pos;  // single whitespace after maxval
  size_t need = static_cast<size_t>(h) * w * 3;
  if (bytes.size() - pos < need) throw IoFailure(path.string() + ": truncated pixel data");
  return std::vector<uint8_t>(bytes.begin() + pos, bytes.begin() + pos + need);
}

}  // namespace

std::vector<LabeledPatch> load_dataset(const fs::path& dir) {
  fs::path mpath = dir / "manifest.json";
  std::ifstream mf(mpath);
  if (!mf) throw MissingFile(mpath.string());
  json m;
  try {
    mf >> m;
  } catch (const json::exception& e) {
    throw IoFailure(mpath.string() + ": " + e.what());
  }

  DatasetManifest manifest;
  manifest.patch_count = m.at("patch_count").get<int>();
  manifest.height = m.at("height").get<int>();
  manifest.width = m.at("width").get<int>();
  if (manifest.patch_count > 0 && (manifest.height <= 0 || manifest.width <= 0))
    throw DimensionMismatch("manifest height/width must be positive");
  const auto& entries = m.at("entries");
  if (static_cast<int>(entries.size()) != manifest.patch_count)
    throw DimensionMismatch("manifest entries length != patch_count");

  std::vector<LabeledPatch> patches;
  patches.reserve(manifest.patch_count);
  int h = manifest.height, w = manifest.width;
  size_t npx = static_cast<size_t>(h) * w;
  for (const auto& e : entries) {
    LabeledPatch p(h, w);
    p.image = read_ppm(dir / e.at("image").get<std::string>(), h, w);

    std::vector<uint8_t> inst_bytes = read_file_bytes(dir / e.at("instances").get<std::string>());
    if (inst_bytes.size() != npx * 2)
      throw DimensionMismatch(e.at("instances").get<std::string>());
    for (size_t i = 0; i < npx; ++i) {
      p.instances[i] =
          static_cast<uint16_t>(inst_bytes[2 * i] | (static_cast<uint16_t>(inst_bytes[2 * i + 1]) << 8));
    }

    std::vector<uint8_t> cls_bytes = read_file_bytes(dir / e.at("classes").get<std::string>());
    if (cls_bytes.size() != npx) throw DimensionMismatch(e.at("classes").get<std::string>());
    p.classes.assign(cls_bytes.begin(), cls_bytes.end());

    validate_patch(p);
    patches.push_back(std::move(p));
  }
  return patches;
}

void save_dataset(const std::vector<LabeledPatch>& patches, const fs::path& dir,
                  std::optional<int64_t> seed) {
  int h = patches.empty() ? 0 : patches[0].height;
  int w = patches.empty() ? 0 : patches[0].width;
  for (const auto& p : patches) {
    if (p.height != h || p.width != w) throw HeterogeneousDimensions();
  }

  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoFailure("cannot create " + dir.string() + ": " + ec.message());

  json m;
  m["patch_count"] = static_cast<int>(patches.size());
  m["height"] = h;
  m["width"] = w;
  m["class_names"] = kClassNames;
  if (seed) m["seed"] = *seed;
  json entries = json::array();
  size_t npx = static_cast<size_t>(h) * w;
  for (size_t i = 0; i < patches.size(); ++i) {
    const LabeledPatch& p = patches[i];
    std::string img_name = patch_name("img", static_cast<int>(i), "ppm");
    std::string inst_name = patch_name("inst", static_cast<int>(i), "raw");
    std::string cls_name = patch_name("cls", static_cast<int>(i), "raw");

    write_ppm(dir / img_name, p.image, h, w);

    std::vector<uint8_t> inst_bytes(npx * 2);
    for (size_t j = 0; j < npx; ++j) {
      inst_bytes[2 * j] = static_cast<uint8_t>(p.instances[j] & 0xff);
      inst_bytes[2 * j + 1] = static_cast<uint8_t>(p.instances[j] >> 8);
    }
    write_file_bytes(dir / inst_name, inst_bytes.data(), inst_bytes.size());
    write_file_bytes(dir / cls_name, p.classes.data(), p.classes.size());

    entries.push_back({{"image", img_name}, {"instances", inst_name}, {"classes", cls_name}});
  }
  m["entries"] = entries;

  std::string text = m.dump(2);
  text.push_back('\n');
  write_file_bytes(dir / "manifest.json", text.data(), text.size());
}

namespace {

struct EllipseSpec {
  double cx, cy;     // center, pixel units
  double ax, ay;     // semi-axes after halving the sampled axis lengths
  double cos_t, sin_t;
};

// Pixel-center rasterization.
std::vector<std::pair<int, int>> rasterize(const EllipseSpec& e, int h, int w) {
  std::vector<std::pair<int, int>> px;
  int y0 = std::max(0, static_cast<int>(std::floor(e.cy - std::max(e.ax, e.ay) - 1)));
  int y1 = std::min(h - 1, static_cast<int>(std::ceil(e.cy + std::max(e.ax, e.ay) + 1)));
  int x0 = std::max(0, static_cast<int>(std::floor(e.cx - std::max(e.ax, e.ay) - 1)));
  int x1 = std::min(w - 1, static_cast<int>(std::ceil(e.cx + std::max(e.ax, e.ay) + 1)));
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      double dx = x - e.cx, dy = y - e.cy;
      double u = (dx * e.cos_t + dy * e.sin_t) / e.ax;
      double v = (-dx * e.sin_t + dy * e.cos_t) / e.ay;
      if (u * u + v * v <= 1.0) px.emplace_back(y, x);
    }
  }
  return px;
}

bool four_connected(const std::vector<std::pair<int, int>>& px) {
  if (px.empty()) return false;
  std::set<std::pair<int, int>> all(px.begin(), px.end());
  std::vector<std::pair<int, int>> stack{px[0]};
  std::set<std::pair<int, int>> seen{px[0]};
  while (!stack.empty()) {
    auto [y, x] = stack.back();
    stack.pop_back();
    const int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
    for (int k = 0; k < 4; ++k) {
      std::pair<int, int> q{y + dy[k], x + dx[k]};
      if (all.count(q) && !seen.count(q)) {
        seen.insert(q);
        stack.push_back(q);
      }
    }
  }
  return seen.size() == all.size();
}

// Whether {d > dmax/2} over the cell is 4-connected, with d the exact
// distance to the nearest in-patch pixel not carrying `label`. Cells failing
// this would decode into several seeds at the default watershed threshold.
bool seed_region_connected(const std::vector<int>& pixels, const std::vector<uint16_t>& occ,
                           uint16_t label, int h, int w) {
  if (pixels.empty()) return false;
  int y0 = h, y1 = -1, x0 = w, x1 = -1;
  for (int p : pixels) {
    y0 = std::min(y0, p / w);
    y1 = std::max(y1, p / w);
    x0 = std::min(x0, p % w);
    x1 = std::max(x1, p % w);
  }
  y0 = std::max(0, y0 - 1);
  y1 = std::min(h - 1, y1 + 1);
  x0 = std::max(0, x0 - 1);
  x1 = std::min(w - 1, x1 + 1);

  std::vector<std::pair<int, int>> cand;
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      if (occ[static_cast<size_t>(y) * w + x] == label) continue;
      bool adj = (y > 0 && occ[static_cast<size_t>(y - 1) * w + x] == label) ||
                 (y + 1 < h && occ[static_cast<size_t>(y + 1) * w + x] == label) ||
                 (x > 0 && occ[static_cast<size_t>(y) * w + x - 1] == label) ||
                 (x + 1 < w && occ[static_cast<size_t>(y) * w + x + 1] == label);
      if (adj) cand.emplace_back(y, x);
    }
  }
  if (cand.empty()) return false;

  std::vector<int64_t> d2(pixels.size());
  int64_t max_d2 = 0;
  for (size_t i = 0; i < pixels.size(); ++i) {
    int py = pixels[i] / w, px = pixels[i] % w;
    int64_t best = INT64_MAX;
    for (auto [qy, qx] : cand) {
      int64_t dy = py - qy, dx = px - qx;
      best = std::min(best, dy * dy + dx * dx);
    }
    d2[i] = best;
    max_d2 = std::max(max_d2, best);
  }

  // v > 1/2  <=>  4*d2 > max_d2
  std::set<std::pair<int, int>> seed;
  for (size_t i = 0; i < pixels.size(); ++i) {
    if (4 * d2[i] > max_d2) seed.emplace(pixels[i] / w, pixels[i] % w);
  }
  if (seed.empty()) return false;
  std::vector<std::pair<int, int>> stack{*seed.begin()};
  std::set<std::pair<int, int>> seen{*seed.begin()};
  while (!stack.empty()) {
    auto [y, x] = stack.back();
    stack.pop_back();
    const int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
    for (int k = 0; k < 4; ++k) {
      std::pair<int, int> q{y + dy[k], x + dx[k]};
      if (seed.count(q) && !seen.count(q)) {
        seen.insert(q);
        stack.push_back(q);
      }
    }
  }
  return seen.size() == seed.size();
}

int sample_class(Rng& rng, const std::array<double, kNumClasses>& weights, double total) {
  double r = rng.uniform() * total;
  double acc = 0;
  for (int c = 0; c < kNumClasses; ++c) {
    acc += weights[c];
    if (r < acc) return c + 1;
  }
  return kNumClasses;
}

// Nucleus fill colors per class: dark blue-purple family, hues spread far
// enough apart that the classes stay separable under the rendering noise.
const int kClassColor[kNumClasses][3] = {
    {40, 30, 150}, {125, 40, 160}, {30, 75, 110}, {150, 60, 115}, {95, 95, 165}, {60, 18, 85}};

}  // namespace

std::vector<LabeledPatch> generate_synthetic(const SyntheticConfig& cfg,
                                             std::vector<CountVector>* counts_out) {
  if (cfg.height < 32 || cfg.width < 32)
    throw DimensionTooSmall("synthetic patches need height,width >= 32");
  if (cfg.density <= 0.0 || cfg.density > 1.0)
    throw InvalidConfig("density must be in (0,1]");
  double weight_total = 0;
  for (double w : cfg.class_weights) {
    if (w < 0) throw InvalidWeights("class weight < 0");
    weight_total += w;
  }
  if (weight_total <= 0) throw InvalidWeights("class weights all zero");

  // mean rasterized ellipse area for axis lengths uniform in [3,12]
  const double mean_area = 3.141592653589793 * 7.5 * 7.5 / 4.0;
  int target = static_cast<int>(std::llround(cfg.density * cfg.height * cfg.width / mean_area));

  std::vector<LabeledPatch> patches;
  patches.reserve(cfg.n_patches);
  if (counts_out) counts_out->clear();

  for (int pi = 0; pi < cfg.n_patches; ++pi) {
    Rng rng(static_cast<uint64_t>(cfg.seed), 0x9e3779b97f4a7c15ULL + static_cast<uint64_t>(pi));
    LabeledPatch patch(cfg.height, cfg.width);
    CountVector counts;

    // occupancy holds placed labels; the default placement keeps a 1 px gap
    std::vector<uint16_t>& occ = patch.instances;
    std::vector<std::vector<int>> label_pixels;  // flat indices per label
    uint16_t next_label = 1;
    int attempts_left = target * 40 + 40;
    int placed = 0;
    while (placed < target && attempts_left-- > 0) {
      EllipseSpec e;
      double len_a = rng.uniform(3.0, 12.0);  // full axis lengths
      double len_b = rng.uniform(3.0, 12.0);
      e.ax = len_a / 2.0;
      e.ay = len_b / 2.0;
      double theta = rng.uniform(0.0, 3.141592653589793);
      e.cos_t = std::cos(theta);
      e.sin_t = std::sin(theta);
      double margin = std::max(e.ax, e.ay) + 1.5;
      if (2 * margin >= cfg.width || 2 * margin >= cfg.height) continue;
      e.cx = rng.uniform(margin, cfg.width - margin);
      e.cy = rng.uniform(margin, cfg.height - margin);
      int cls = sample_class(rng, cfg.class_weights, weight_total);

      std::vector<std::pair<int, int>> px = rasterize(e, cfg.height, cfg.width);
      if (static_cast<int>(px.size()) < cfg.min_cell_area) continue;
      if (!four_connected(px)) continue;

      bool free = true;
      int gap = cfg.touching ? 0 : 1;
      for (auto [y, x] : px) {
        for (int oy = -gap; oy <= gap && free; ++oy) {
          for (int ox = -gap; ox <= gap && free; ++ox) {
            int yy = y + oy, xx = x + ox;
            if (yy < 0 || yy >= cfg.height || xx < 0 || xx >= cfg.width) continue;
            if (occ[static_cast<size_t>(yy) * cfg.width + xx] != 0) free = false;
          }
        }
        if (!free) break;
      }
      if (!free) continue;

      std::vector<int> flat;
      flat.reserve(px.size());
      for (auto [y, x] : px) flat.push_back(y * cfg.width + x);
      for (int i : flat) occ[i] = next_label;

      // every cell must decode to a single seed at the default threshold;
      // in touching mode a new contact may also break a neighbor
      bool ok = seed_region_connected(flat, occ, next_label, cfg.height, cfg.width);
      if (ok && cfg.touching) {
        std::set<uint16_t> neighbors;
        for (auto [y, x] : px) {
          const int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
          for (int k = 0; k < 4; ++k) {
            int yy = y + dy[k], xx = x + dx[k];
            if (yy < 0 || yy >= cfg.height || xx < 0 || xx >= cfg.width) continue;
            uint16_t l = occ[static_cast<size_t>(yy) * cfg.width + xx];
            if (l != 0 && l != next_label) neighbors.insert(l);
          }
        }
        for (uint16_t l : neighbors) {
          if (!seed_region_connected(label_pixels[l - 1], occ, l, cfg.height, cfg.width)) {
            ok = false;
            break;
          }
        }
      }
      if (!ok) {
        for (int i : flat) occ[i] = 0;
        continue;
      }

      for (auto [y, x] : px) patch.cls(y, x) = static_cast<uint8_t>(cls);
      label_pixels.push_back(std::move(flat));
      counts.counts[cls - 1]++;
      ++next_label;
      ++placed;
    }

    // render: pink-white stroma, dark nuclei with per-class hue offsets, mild noise
    for (int y = 0; y < cfg.height; ++y) {
      for (int x = 0; x < cfg.width; ++x) {
        int base[3];
        uint8_t cls = patch.cls(y, x);
        if (cls == 0) {
          base[0] = 238;
          base[1] = 214;
          base[2] = 228;
        } else {
          base[0] = kClassColor[cls - 1][0];
          base[1] = kClassColor[cls - 1][1];
          base[2] = kClassColor[cls - 1][2];
        }
        for (int ch = 0; ch < 3; ++ch) {
          double v = base[ch] + rng.normal() * 4.0;
          patch.rgb(y, x, ch) = static_cast<uint8_t>(std::clamp(static_cast<int>(std::lround(v)), 0, 255));
        }
      }
    }

    validate_patch(patch);
    patches.push_back(std::move(patch));
    if (counts_out) counts_out->push_back(counts);
  }
  return patches;
}

CountVector count_ground_truth(const LabeledPatch& patch) {
  validate_patch(patch);
  std::map<uint16_t, uint8_t> label_class;
  for (size_t i = 0; i < patch.npx(); ++i) {
    if (patch.instances[i] > 0) label_class.emplace(patch.instances[i], patch.classes[i]);
  }
  CountVector cv;
  for (const auto& [lbl, cls] : label_class) cv.counts[cls - 1]++;
  return cv;
}

}  // namespace ciscnet
