#include "ciscnet/postprocess.hpp"

#include <algorithm>
#include <queue>

#include "ciscnet/layers.hpp"

namespace ciscnet {

namespace {

template <typename T>
struct QueueEntry {
  T value;
  int index;
};

template <typename T>
struct LowerPriority {
  bool operator()(const QueueEntry<T>& a, const QueueEntry<T>& b) const {
    if (a.value != b.value) return a.value < b.value;
    return a.index > b.index;  // ties: lower row-major index first
  }
};

}  // namespace

template <typename T>
std::vector<int> decode_watershed(const std::vector<T>& sum_pred, int height, int width,
                                  const PostprocessConfig& cfg) {
  cfg.validate();
  const size_t npx = static_cast<size_t>(height) * width;
  if (sum_pred.size() != npx) throw ShapeMismatch("decode_watershed map size");
  const T theta_mask = static_cast<T>(cfg.mask_threshold);
  const T theta_seed = static_cast<T>(cfg.seed_threshold);

  std::vector<int> labels(npx, 0);
  const int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};

  // seeds: 4-connected components of the seed superlevel set, labeled in
  // row-major discovery order
  int next_label = 0;
  std::vector<int> stack;
  for (size_t i = 0; i < npx; ++i) {
    if (labels[i] != 0 || !(sum_pred[i] > theta_seed)) continue;
    ++next_label;
    labels[i] = next_label;
    stack.assign(1, static_cast<int>(i));
    while (!stack.empty()) {
      int p = stack.back();
      stack.pop_back();
      int py = p / width, px = p % width;
      for (int k = 0; k < 4; ++k) {
        int qy = py + dy[k], qx = px + dx[k];
        if (qy < 0 || qy >= height || qx < 0 || qx >= width) continue;
        int q = qy * width + qx;
        if (labels[q] == 0 && sum_pred[q] > theta_seed) {
          labels[q] = next_label;
          stack.push_back(q);
        }
      }
    }
  }
  const int num_seeds = next_label;
  if (num_seeds == 0) return std::vector<int>(npx, 0);

  std::priority_queue<QueueEntry<T>, std::vector<QueueEntry<T>>, LowerPriority<T>> queue;
  for (size_t i = 0; i < npx; ++i) {
    if (labels[i] != 0) queue.push({sum_pred[i], static_cast<int>(i)});
  }
  while (!queue.empty()) {
    QueueEntry<T> e = queue.top();
    queue.pop();
    int py = e.index / width, px = e.index % width;
    int lbl = labels[e.index];
    for (int k = 0; k < 4; ++k) {
      int qy = py + dy[k], qx = px + dx[k];
      if (qy < 0 || qy >= height || qx < 0 || qx >= width) continue;
      int q = qy * width + qx;
      if (labels[q] == 0 && sum_pred[q] > theta_mask) {
        labels[q] = lbl;
        queue.push({sum_pred[q], q});
      }
    }
  }

  // size filter, then contiguous renumbering in seed discovery order
  std::vector<int> area(num_seeds + 1, 0);
  for (int l : labels) area[l]++;
  std::vector<int> remap(num_seeds + 1, 0);
  int survivors = 0;
  for (int l = 1; l <= num_seeds; ++l) {
    if (area[l] >= cfg.min_cell_area) remap[l] = ++survivors;
  }
  for (int& l : labels) l = remap[l];
  return labels;
}

template <typename T>
std::vector<int> classify_instances(const std::vector<int>& instances, int num_labels,
                                    const Tensor4<T>& class_pred) {
  if (class_pred.n != 1 || class_pred.c != kNumClasses)
    throw ShapeMismatch("classify_instances prediction");
  const size_t npx = static_cast<size_t>(class_pred.h) * class_pred.w;
  if (instances.size() != npx) throw ShapeMismatch("classify_instances label map");
  if (num_labels == 0) return {};

  std::vector<std::array<double, kNumClasses>> scores(num_labels);
  std::vector<int> area(num_labels, 0);
  for (auto& s : scores) s.fill(0.0);
  for (size_t i = 0; i < npx; ++i) {
    int l = instances[i];
    if (l == 0) continue;
    if (l < 0 || l > num_labels) throw ShapeMismatch("label out of range");
    area[l - 1]++;
    for (int c = 0; c < kNumClasses; ++c) {
      scores[l - 1][c] += static_cast<double>(class_pred.plane(0, c)[i]);
    }
  }

  std::vector<int> classes(num_labels);
  for (int l = 0; l < num_labels; ++l) {
    if (area[l] == 0) throw EmptyInstance(l + 1);
    int best = 0;
    for (int c = 1; c < kNumClasses; ++c) {
      if (scores[l][c] > scores[l][best]) best = c;  // ties keep the lower channel
    }
    classes[l] = best + 1;
  }
  return classes;
}

template <typename T>
SegmentationResult postprocess(const Tensor4<T>& pred, const PostprocessConfig& cfg) {
  if (pred.n != 1 || pred.c != kNumClasses) throw ShapeMismatch("postprocess prediction");
  const size_t npx = static_cast<size_t>(pred.h) * pred.w;
  std::vector<T> sum(npx, T(0));
  for (int c = 0; c < kNumClasses; ++c) {
    const T* p = pred.plane(0, c);
    for (size_t i = 0; i < npx; ++i) sum[i] += p[i];
  }

  SegmentationResult res;
  res.height = pred.h;
  res.width = pred.w;
  res.instances = decode_watershed(sum, pred.h, pred.w, cfg);
  int num_labels = 0;
  for (int l : res.instances) num_labels = std::max(num_labels, l);
  res.instance_classes = classify_instances(res.instances, num_labels, pred);
  for (int cls : res.instance_classes) res.counts.counts[cls - 1]++;
  return res;
}

Tensor4f rot90_tensor(const Tensor4f& t, int quarter_turns) {
  int k = ((quarter_turns % 4) + 4) % 4;
  Tensor4f src = t;
  for (int step = 0; step < k; ++step) {
    Tensor4f out(src.n, src.c, src.w, src.h);
    for (int n = 0; n < src.n; ++n) {
      for (int c = 0; c < src.c; ++c) {
        const float* sp = src.plane(n, c);
        float* op = out.plane(n, c);
        for (int y = 0; y < out.h; ++y) {
          for (int x = 0; x < out.w; ++x) {
            op[static_cast<size_t>(y) * out.w + x] =
                sp[static_cast<size_t>(x) * src.w + (src.w - 1 - y)];
          }
        }
      }
    }
    src = std::move(out);
  }
  return src;
}

Tensor4f flip_h_tensor(const Tensor4f& t) {
  Tensor4f out(t.n, t.c, t.h, t.w);
  for (int n = 0; n < t.n; ++n) {
    for (int c = 0; c < t.c; ++c) {
      const float* sp = t.plane(n, c);
      float* op = out.plane(n, c);
      for (int y = 0; y < t.h; ++y) {
        for (int x = 0; x < t.w; ++x) {
          op[static_cast<size_t>(y) * t.w + x] = sp[static_cast<size_t>(y) * t.w + (t.w - 1 - x)];
        }
      }
    }
  }
  return out;
}

Tensor4f tta_predict(const NetworkConfig& cfg, const ParamSet<float>& params,
                     const Tensor4f& image) {
  Tensor4f accum;
  bool first = true;
  for (int f = 0; f < 2; ++f) {
    for (int k = 0; k < 4; ++k) {
      Tensor4f input = f ? flip_h_tensor(image) : image;
      input = rot90_tensor(input, k);
      Tensor4f out = unet_forward(cfg, params, input);
      out = rot90_tensor(out, -k);
      if (f) out = flip_h_tensor(out);
      if (first) {
        accum = std::move(out);
        first = false;
      } else {
        for (size_t i = 0; i < accum.data.size(); ++i) accum.data[i] += out.data[i];
      }
    }
  }
  for (float& v : accum.data) v /= 8.0f;
  return accum;
}

#define CISCNET_INSTANTIATE(T)                                                                \
  template std::vector<int> decode_watershed<T>(const std::vector<T>&, int, int,             \
                                                const PostprocessConfig&);                    \
  template std::vector<int> classify_instances<T>(const std::vector<int>&, int,              \
                                                  const Tensor4<T>&);                         \
  template SegmentationResult postprocess<T>(const Tensor4<T>&, const PostprocessConfig&);

CISCNET_INSTANTIATE(float)
CISCNET_INSTANTIATE(double)

#undef CISCNET_INSTANTIATE

}  // namespace ciscnet
