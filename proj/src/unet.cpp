#include "ciscnet/unet.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "ciscnet/rng.hpp"

namespace ciscnet {

using json = nlohmann::json;

void NetworkConfig::validate() const {
  if (in_channels < 1 || out_channels < 1) throw InvalidConfig("channel counts must be positive");
  if (depth < 1) throw InvalidConfig("depth must be >= 1");
  if (base_features < 1 || feature_cap < base_features)
    throw InvalidConfig("need feature_cap >= base_features >= 1");
  if (groups < 1) throw InvalidConfig("groups must be >= 1");
  for (int d = 0; d <= depth; ++d) {
    if (features_at(d) % groups != 0)
      throw IndivisibleGroups("level " + std::to_string(d) + " has " +
                              std::to_string(features_at(d)) + " features");
  }
}

namespace {

struct ShapeBuilder {
  std::vector<ParamShape> shapes;
  void conv(const std::string& name, int oc, int ic, int k) {
    shapes.push_back({name + ".w", {oc, ic, k, k}});
    shapes.push_back({name + ".b", {1, oc, 1, 1}});
  }
  void conv_t(const std::string& name, int in_c, int out_c, int k) {
    shapes.push_back({name + ".w", {in_c, out_c, k, k}});
    shapes.push_back({name + ".b", {1, out_c, 1, 1}});
  }
  void norm(const std::string& name, int c) {
    shapes.push_back({name + ".gamma", {1, c, 1, 1}});
    shapes.push_back({name + ".beta", {1, c, 1, 1}});
  }
};

}  // namespace

std::vector<ParamShape> unet_param_shapes(const NetworkConfig& cfg) {
  cfg.validate();
  ShapeBuilder b;
  for (int d = 0; d < cfg.depth; ++d) {
    std::string lvl = "enc" + std::to_string(d);
    int f = cfg.features_at(d);
    int in_c = d == 0 ? cfg.in_channels : f;
    b.conv(lvl + ".conv1", f, in_c, 3);
    b.norm(lvl + ".norm1", f);
    b.conv(lvl + ".conv2", f, f, 3);
    b.norm(lvl + ".norm2", f);
    std::string down = "down" + std::to_string(d);
    b.conv(down + ".conv", cfg.features_at(d + 1), f, 3);
    b.norm(down + ".norm", cfg.features_at(d + 1));
  }
  int fb = cfg.features_at(cfg.depth);
  b.conv("bottom.conv1", fb, fb, 3);
  b.norm("bottom.norm1", fb);
  b.conv("bottom.conv2", fb, fb, 3);
  b.norm("bottom.norm2", fb);
  for (int d = cfg.depth - 1; d >= 0; --d) {
    int f = cfg.features_at(d);
    int f_in = cfg.features_at(d + 1);
    b.conv_t("up" + std::to_string(d), f_in, f, 2);
    std::string lvl = "dec" + std::to_string(d);
    b.conv(lvl + ".conv1", f, 2 * f, 3);
    b.norm(lvl + ".norm1", f);
    b.conv(lvl + ".conv2", f, f, 3);
    b.norm(lvl + ".norm2", f);
  }
  b.conv("head", cfg.out_channels, cfg.features_at(0), 1);
  return b.shapes;
}

int64_t unet_param_count(const NetworkConfig& cfg) {
  int64_t total = 0;
  for (const ParamShape& s : unet_param_shapes(cfg)) {
    total += static_cast<int64_t>(s.dims[0]) * s.dims[1] * s.dims[2] * s.dims[3];
  }
  return total;
}

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

template <typename T>
ParamSet<T> unet_init_params(const NetworkConfig& cfg) {
  Rng rng(cfg.seed, 0xc15c4e7ULL);
  ParamSet<T> params;
  for (const ParamShape& s : unet_param_shapes(cfg)) {
    Tensor4<T> t(s.dims[0], s.dims[1], s.dims[2], s.dims[3]);
    if (ends_with(s.name, ".w")) {
      // transposed convs route each input channel to one tap per output pixel
      bool transposed = s.name[0] == 'u';
      double fan_in = transposed ? s.dims[0]
                                 : static_cast<double>(s.dims[1]) * s.dims[2] * s.dims[3];
      double limit = std::sqrt(6.0 / fan_in);
      for (auto& v : t.data) v = static_cast<T>(rng.uniform(-limit, limit));
    } else if (ends_with(s.name, ".gamma")) {
      for (auto& v : t.data) v = T(1);
    }  // biases and betas stay zero
    params.add(s.name, std::move(t));
  }
  return params;
}

namespace {

enum OpKind { kConv = 0, kConvT, kGroupNorm, kMish, kSkipSave, kConcat };

}  // namespace

template <typename T>
Tensor4<T> unet_forward(const NetworkConfig& cfg, const ParamSet<T>& params, const Tensor4<T>& x,
                        UnetCache<T>* cache) {
  cfg.validate();
  if (x.c != cfg.in_channels) throw ShapeMismatch("unet_forward: input channels");
  int div = 1 << cfg.depth;
  if (x.h % div != 0 || x.w % div != 0)
    throw IndivisibleDimensions("input " + std::to_string(x.h) + "x" + std::to_string(x.w) +
                                " not divisible by " + std::to_string(div));
  if (cache) {
    cache->steps.clear();
    cache->in_n = x.n;
    cache->in_c = x.c;
    cache->in_h = x.h;
    cache->in_w = x.w;
  }

  using Step = typename UnetCache<T>::Step;
  Tensor4<T> t = x;

  auto run_conv = [&](const std::string& name, int stride, int pad) {
    int wi = params.index_of(name + ".w");
    int bi = params.index_of(name + ".b");
    Tensor4<T> out = conv2d(t, params[wi], params[bi].data, stride, pad);
    if (cache) {
      Step s;
      s.kind = kConv;
      s.param = wi;
      s.param2 = bi;
      s.stride = stride;
      s.pad = pad;
      s.saved = std::move(t);
      cache->steps.push_back(std::move(s));
    }
    t = std::move(out);
  };
  auto run_norm = [&](const std::string& name) {
    int gi = params.index_of(name + ".gamma");
    int bi = params.index_of(name + ".beta");
    GroupNormCtx<T> ctx;
    Tensor4<T> out = group_norm(t, params[gi].data, params[bi].data, cfg.groups,
                                static_cast<T>(cfg.eps), cache ? &ctx : nullptr);
    if (cache) {
      Step s;
      s.kind = kGroupNorm;
      s.param = gi;
      s.param2 = bi;
      s.gn = std::move(ctx);
      cache->steps.push_back(std::move(s));
    }
    t = std::move(out);
  };
  auto run_mish = [&]() {
    Tensor4<T> out = mish(t);
    if (cache) {
      Step s;
      s.kind = kMish;
      s.saved = std::move(t);
      cache->steps.push_back(std::move(s));
    }
    t = std::move(out);
  };
  auto block = [&](const std::string& conv_name, const std::string& norm_name, int stride, int pad) {
    run_conv(conv_name, stride, pad);
    run_norm(norm_name);
    run_mish();
  };

  std::vector<Tensor4<T>> skips(cfg.depth);
  for (int d = 0; d < cfg.depth; ++d) {
    std::string lvl = "enc" + std::to_string(d);
    block(lvl + ".conv1", lvl + ".norm1", 1, 1);
    block(lvl + ".conv2", lvl + ".norm2", 1, 1);
    skips[d] = t;
    if (cache) {
      Step s;
      s.kind = kSkipSave;
      s.skip_id = d;
      cache->steps.push_back(std::move(s));
    }
    std::string down = "down" + std::to_string(d);
    block(down + ".conv", down + ".norm", 2, 1);
  }
  block("bottom.conv1", "bottom.norm1", 1, 1);
  block("bottom.conv2", "bottom.norm2", 1, 1);

  for (int d = cfg.depth - 1; d >= 0; --d) {
    std::string up = "up" + std::to_string(d);
    int wi = params.index_of(up + ".w");
    int bi = params.index_of(up + ".b");
    Tensor4<T> out = conv_transpose2d(t, params[wi], params[bi].data, 2);
    if (cache) {
      Step s;
      s.kind = kConvT;
      s.param = wi;
      s.param2 = bi;
      s.stride = 2;
      s.saved = std::move(t);
      cache->steps.push_back(std::move(s));
    }
    t = std::move(out);

    if (cache) {
      Step s;
      s.kind = kConcat;
      s.skip_id = d;
      s.concat_main_c = t.c;
      cache->steps.push_back(std::move(s));
    }
    t = concat_channels(t, skips[d]);

    std::string lvl = "dec" + std::to_string(d);
    block(lvl + ".conv1", lvl + ".norm1", 1, 1);
    block(lvl + ".conv2", lvl + ".norm2", 1, 1);
  }

  run_conv("head", 1, 0);
  return t;
}

template <typename T>
ParamSet<T> zeros_like(const ParamSet<T>& params) {
  ParamSet<T> out;
  for (size_t i = 0; i < params.tensors.size(); ++i) {
    const Tensor4<T>& t = params.tensors[i];
    out.add(params.names[i], Tensor4<T>(t.n, t.c, t.h, t.w));
  }
  return out;
}

namespace {

template <typename T>
void axpy(std::vector<T>& dst, const std::vector<T>& src) {
  for (size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

template <typename T>
ParamSet<T> unet_backward(const NetworkConfig& cfg, const ParamSet<T>& params,
                          const UnetCache<T>& cache, const Tensor4<T>& upstream, Tensor4<T>* dx) {
  ParamSet<T> grads = zeros_like(params);
  std::vector<Tensor4<T>> dskip(cfg.depth);
  Tensor4<T> g = upstream;

  for (auto it = cache.steps.rbegin(); it != cache.steps.rend(); ++it) {
    const auto& s = *it;
    switch (s.kind) {
      case kConv: {
        ConvGrads<T> cg = conv2d_backward(s.saved, params[s.param], g, s.stride, s.pad, true);
        axpy(grads[s.param].data, cg.dw.data);
        axpy(grads[s.param2].data, cg.db);
        g = std::move(cg.dx);
        break;
      }
      case kConvT: {
        ConvGrads<T> cg = conv_transpose2d_backward(s.saved, params[s.param], g, s.stride, true);
        axpy(grads[s.param].data, cg.dw.data);
        axpy(grads[s.param2].data, cg.db);
        g = std::move(cg.dx);
        break;
      }
      case kGroupNorm: {
        GroupNormGrads<T> gg = group_norm_backward(s.gn, params[s.param].data, g);
        axpy(grads[s.param].data, gg.dgamma);
        axpy(grads[s.param2].data, gg.dbeta);
        g = std::move(gg.dx);
        break;
      }
      case kMish: {
        g = mish_backward(s.saved, g);
        break;
      }
      case kConcat: {
        Tensor4<T> d_main, d_skip;
        split_channels(g, s.concat_main_c, d_main, d_skip);
        dskip[s.skip_id] = std::move(d_skip);
        g = std::move(d_main);
        break;
      }
      case kSkipSave: {
        const Tensor4<T>& add = dskip[s.skip_id];
        for (size_t i = 0; i < g.data.size(); ++i) g.data[i] += add.data[i];
        break;
      }
    }
  }
  if (dx) *dx = std::move(g);
  return grads;
}

void save_checkpoint(const std::filesystem::path& path, const NetworkConfig& cfg,
                     const ParamSet<float>& params) {
  std::vector<ParamShape> shapes = unet_param_shapes(cfg);
  if (shapes.size() != params.tensors.size()) throw CheckpointMismatch("parameter count");
  json manifest;
  manifest["dtype"] = "f32le";
  manifest["network"] = {{"in_channels", cfg.in_channels}, {"out_channels", cfg.out_channels},
                         {"depth", cfg.depth},             {"base_features", cfg.base_features},
                         {"feature_cap", cfg.feature_cap}, {"groups", cfg.groups},
                         {"eps", cfg.eps},                 {"seed", cfg.seed}};
  json plist = json::array();
  for (size_t i = 0; i < shapes.size(); ++i) {
    if (params.names[i] != shapes[i].name) throw CheckpointMismatch("parameter order");
    const Tensor4<float>& t = params.tensors[i];
    if (t.n != shapes[i].dims[0] || t.c != shapes[i].dims[1] || t.h != shapes[i].dims[2] ||
        t.w != shapes[i].dims[3])
      throw CheckpointMismatch("shape of " + shapes[i].name);
    plist.push_back({{"name", shapes[i].name}, {"shape", shapes[i].dims}});
  }
  manifest["params"] = plist;
  std::string mtext = manifest.dump();

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoFailure("cannot open " + path.string() + " for writing");
  f << kCheckpointVersion << "\n";
  uint64_t mlen = mtext.size();
  f.write(reinterpret_cast<const char*>(&mlen), 8);
  f.write(mtext.data(), static_cast<std::streamsize>(mtext.size()));
  for (const auto& t : params.tensors) {
    f.write(reinterpret_cast<const char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  }
  if (!f) throw IoFailure("writing " + path.string());
}

ParamSet<float> load_checkpoint(const std::filesystem::path& path, NetworkConfig& cfg_out) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw MissingFile(path.string());
  std::string version;
  std::getline(f, version);
  if (version != kCheckpointVersion) throw CheckpointMismatch("version tag '" + version + "'");
  uint64_t mlen = 0;
  f.read(reinterpret_cast<char*>(&mlen), 8);
  std::string mtext(mlen, '\0');
  f.read(mtext.data(), static_cast<std::streamsize>(mlen));
  if (!f) throw IoFailure("reading " + path.string());
  json manifest;
  try {
    manifest = json::parse(mtext);
  } catch (const json::exception& e) {
    throw CheckpointMismatch(std::string("manifest: ") + e.what());
  }
  if (manifest.at("dtype").get<std::string>() != "f32le") throw CheckpointMismatch("dtype");

  const json& net = manifest.at("network");
  NetworkConfig cfg;
  cfg.in_channels = net.at("in_channels").get<int>();
  cfg.out_channels = net.at("out_channels").get<int>();
  cfg.depth = net.at("depth").get<int>();
  cfg.base_features = net.at("base_features").get<int>();
  cfg.feature_cap = net.at("feature_cap").get<int>();
  cfg.groups = net.at("groups").get<int>();
  cfg.eps = net.at("eps").get<double>();
  cfg.seed = net.at("seed").get<uint64_t>();

  std::vector<ParamShape> shapes = unet_param_shapes(cfg);
  const json& plist = manifest.at("params");
  if (plist.size() != shapes.size()) throw CheckpointMismatch("parameter count");

  ParamSet<float> params;
  for (size_t i = 0; i < shapes.size(); ++i) {
    const json& e = plist[i];
    if (e.at("name").get<std::string>() != shapes[i].name)
      throw CheckpointMismatch("parameter name " + e.at("name").get<std::string>());
    auto dims = e.at("shape").get<std::array<int, 4>>();
    if (dims != shapes[i].dims) throw CheckpointMismatch("shape of " + shapes[i].name);
    Tensor4<float> t(dims[0], dims[1], dims[2], dims[3]);
    f.read(reinterpret_cast<char*>(t.data.data()),
           static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    if (!f) throw CheckpointMismatch("truncated data for " + shapes[i].name);
    params.add(shapes[i].name, std::move(t));
  }
  cfg_out = cfg;
  return params;
}

#define CISCNET_INSTANTIATE(T)                                                                 \
  template ParamSet<T> unet_init_params<T>(const NetworkConfig&);                              \
  template Tensor4<T> unet_forward<T>(const NetworkConfig&, const ParamSet<T>&,                \
                                      const Tensor4<T>&, UnetCache<T>*);                       \
  template ParamSet<T> unet_backward<T>(const NetworkConfig&, const ParamSet<T>&,              \
                                        const UnetCache<T>&, const Tensor4<T>&, Tensor4<T>*);  \
  template ParamSet<T> zeros_like<T>(const ParamSet<T>&);

CISCNET_INSTANTIATE(float)
CISCNET_INSTANTIATE(double)

#undef CISCNET_INSTANTIATE

}  // namespace ciscnet
