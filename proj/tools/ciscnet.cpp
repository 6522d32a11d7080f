// Command-line front end: synth | encode | train | predict | eval | gradcheck.
// stdout carries machine-readable output, stderr human-readable text.
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "ciscnet/data.hpp"
#include "ciscnet/encode.hpp"
#include "ciscnet/gradcheck.hpp"
#include "ciscnet/metrics.hpp"
#include "ciscnet/postprocess.hpp"
#include "ciscnet/train.hpp"

using namespace ciscnet;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitEmptyFilter = 4;
constexpr int kExitCheckpoint = 5;
constexpr int kExitMisaligned = 6;

struct RunConfig {
  int64_t seed = 42;
  int threads = 1;
  NetworkConfig network;
  TrainConfig train;
  PostprocessConfig postprocess;
};

void apply_json(const json& j, NetworkConfig& net) {
  net.in_channels = j.value("in_channels", net.in_channels);
  net.out_channels = j.value("out_channels", net.out_channels);
  net.depth = j.value("depth", net.depth);
  net.base_features = j.value("base_features", net.base_features);
  net.feature_cap = j.value("feature_cap", net.feature_cap);
  net.groups = j.value("groups", net.groups);
  net.eps = j.value("eps", net.eps);
  net.seed = j.value("seed", net.seed);
}

void apply_json(const json& j, AugmentConfig& a) {
  a.p_flip_rot = j.value("p_flip_rot", a.p_flip_rot);
  a.p_color = j.value("p_color", a.p_color);
  a.p_scale = j.value("p_scale", a.p_scale);
  a.p_blur = j.value("p_blur", a.p_blur);
  a.p_noise = j.value("p_noise", a.p_noise);
  a.scale_min = j.value("scale_min", a.scale_min);
  a.scale_max = j.value("scale_max", a.scale_max);
  a.hue_max_deg = j.value("hue_max_deg", a.hue_max_deg);
  a.sat_min = j.value("sat_min", a.sat_min);
  a.sat_max = j.value("sat_max", a.sat_max);
  a.contrast_min = j.value("contrast_min", a.contrast_min);
  a.contrast_max = j.value("contrast_max", a.contrast_max);
  a.blur_sigma_min = j.value("blur_sigma_min", a.blur_sigma_min);
  a.blur_sigma_max = j.value("blur_sigma_max", a.blur_sigma_max);
  a.noise_sigma_max = j.value("noise_sigma_max", a.noise_sigma_max);
}

void apply_json(const json& j, TrainConfig& t) {
  t.split_ratio = j.value("split_ratio", t.split_ratio);
  if (j.contains("loss_weights")) {
    auto w = j.at("loss_weights").get<std::vector<double>>();
    if (w.size() != 7) throw InvalidConfig("loss_weights needs 7 entries");
    std::copy(w.begin(), w.end(), t.loss_weights.begin());
  }
  t.auto_class_weights = j.value("auto_class_weights", t.auto_class_weights);
  t.smooth_l1_beta = j.value("smooth_l1_beta", t.smooth_l1_beta);
  t.w_bg = j.value("w_bg", t.w_bg);
  t.w_fg = j.value("w_fg", t.w_fg);
  t.warmup_steps = j.value("warmup_steps", t.warmup_steps);
  t.total_steps = j.value("total_steps", t.total_steps);
  t.batch_size = j.value("batch_size", t.batch_size);
  t.val_interval = j.value("val_interval", t.val_interval);
  t.augment_enabled = j.value("augment_enabled", t.augment_enabled);
  t.seed = j.value("seed", t.seed);
  if (j.contains("optimizer")) {
    const json& o = j.at("optimizer");
    t.optimizer.lr = o.value("lr", t.optimizer.lr);
    t.optimizer.beta1 = o.value("beta1", t.optimizer.beta1);
    t.optimizer.beta2 = o.value("beta2", t.optimizer.beta2);
    t.optimizer.eps = o.value("eps", t.optimizer.eps);
    t.optimizer.lookahead_k = o.value("lookahead_k", t.optimizer.lookahead_k);
    t.optimizer.lookahead_alpha = o.value("lookahead_alpha", t.optimizer.lookahead_alpha);
  }
  if (j.contains("augment")) apply_json(j.at("augment"), t.augment);
}

void apply_json(const json& j, PostprocessConfig& p) {
  p.seed_threshold = j.value("seed_threshold", p.seed_threshold);
  p.mask_threshold = j.value("mask_threshold", p.mask_threshold);
  p.min_cell_area = j.value("min_cell_area", p.min_cell_area);
}

RunConfig load_run_config(const std::string& path) {
  RunConfig cfg;
  if (path.empty()) return cfg;
  std::ifstream f(path);
  if (!f) throw MissingFile(path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw InvalidConfig(std::string("config parse: ") + e.what());
  }
  cfg.seed = j.value("seed", cfg.seed);
  cfg.threads = j.value("threads", cfg.threads);
  if (j.contains("network")) apply_json(j.at("network"), cfg.network);
  if (j.contains("train")) apply_json(j.at("train"), cfg.train);
  if (j.contains("postprocess")) apply_json(j.at("postprocess"), cfg.postprocess);
  return cfg;
}

std::string patch_name(const char* prefix, int i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%05d.%s", prefix, i, ext);
  return buf;
}

void write_bytes(const fs::path& path, const void* data, size_t size) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoFailure("cannot open " + path.string());
  f.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
  if (!f) throw IoFailure("writing " + path.string());
}

void write_text(const fs::path& path, const std::string& text) {
  write_bytes(path, text.data(), text.size());
}

// deterministic float formatting for logs
std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

void for_each_parallel(int n, int threads, const std::function<void(int)>& fn) {
  threads = std::max(1, std::min(threads, n));
  if (threads <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> workers;
  for (int t = 0; t < threads; ++t) {
    workers.emplace_back([&, t]() {
      for (int i = t; i < n; i += threads) fn(i);
    });
  }
  for (auto& w : workers) w.join();
}

int cmd_synth(const RunConfig& run, const SyntheticConfig& synth, const std::string& out) {
  std::vector<LabeledPatch> patches = generate_synthetic(synth);
  save_dataset(patches, out, synth.seed);
  json j;
  j["patch_count"] = static_cast<int>(patches.size());
  j["out"] = out;
  std::cout << j.dump() << "\n";
  std::cerr << "wrote " << patches.size() << " patches to " << out << "\n";
  (void)run;
  return 0;
}

int cmd_encode(const RunConfig& run, const std::string& data, const std::string& out) {
  std::vector<LabeledPatch> patches = load_dataset(data);
  fs::create_directories(out);
  std::vector<json> entries(patches.size());
  for_each_parallel(static_cast<int>(patches.size()), run.threads, [&](int i) {
    DistanceTarget dt = encode_distance_maps(patches[i]);
    // 7 planes: the six class channels then the overall sum
    std::vector<float> planes;
    planes.reserve(static_cast<size_t>(7) * dt.sum.size());
    for (int c = 0; c < kNumClasses; ++c)
      for (double v : dt.channels[c]) planes.push_back(static_cast<float>(v));
    for (double v : dt.sum) planes.push_back(static_cast<float>(v));
    std::string raw = patch_name("dist", i, "raw");
    write_bytes(fs::path(out) / raw, planes.data(), planes.size() * sizeof(float));
    json meta;
    meta["file"] = raw;
    meta["dtype"] = "f32le";
    meta["planes"] = 7;
    meta["height"] = dt.height;
    meta["width"] = dt.width;
    meta["layout"] = "six class channels then the channel sum";
    entries[i] = meta;
  });
  for (size_t i = 0; i < entries.size(); ++i) {
    std::string text = entries[i].dump(2);
    text.push_back('\n');
    write_text(fs::path(out) / patch_name("dist", static_cast<int>(i), "json"), text);
  }
  json j;
  j["patch_count"] = static_cast<int>(patches.size());
  std::cout << j.dump() << "\n";
  return 0;
}

int cmd_train(RunConfig run, const std::string& data, const std::string& out) {
  set_layer_threads(run.threads);  // plane-level, bitwise identical for any count
  std::vector<LabeledPatch> patches = load_dataset(data);
  SplitResult split = filter_and_split(patches, run.train.split_ratio, run.train.seed);
  std::cerr << "split: " << split.train.size() << " train / " << split.val.size() << " val\n";

  auto started = std::chrono::steady_clock::now();
  TrainResult res = train_loop(split, run.network, run.train);
  double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

  fs::create_directories(out);
  save_checkpoint(fs::path(out) / "ckpt", run.network, res.best_params);

  std::string csv = "step,lr,train_loss,val_loss\n";
  for (const TrainLogRow& row : res.log) {
    csv += std::to_string(row.step) + "," + fmt_g(row.lr) + "," + fmt_g(row.train_loss) + "," +
           fmt_g(row.val_loss) + "\n";
  }
  write_text(fs::path(out) / "train_log.csv", csv);

  json j;
  j["steps"] = res.log.empty() ? 0 : res.log.back().step;
  j["initial_train_loss"] = res.initial_train_loss;
  j["final_train_loss"] = res.final_train_loss;
  j["best_val_loss"] = res.best_val_loss;
  j["best_step"] = res.best_step;
  std::cout << j.dump() << "\n";
  std::cerr << "trained in " << fmt_g(seconds) << " s; best val loss " << res.best_val_loss
            << " at step " << res.best_step << "\n";
  return 0;
}

int cmd_predict(const RunConfig& run, const std::string& ckpt, const std::string& data,
                const std::string& out, bool tta) {
  NetworkConfig net;
  ParamSet<float> params = load_checkpoint(ckpt, net);
  std::vector<LabeledPatch> patches = load_dataset(data);
  fs::create_directories(out);

  std::vector<json> entries(patches.size());
  for_each_parallel(static_cast<int>(patches.size()), run.threads, [&](int i) {
    Tensor4f input = image_to_tensor(patches[i]);
    Tensor4f pred = tta ? tta_predict(net, params, input) : unet_forward(net, params, input);
    SegmentationResult seg = postprocess(pred, run.postprocess);

    std::string pred_raw = patch_name("pred", i, "raw");
    write_bytes(fs::path(out) / pred_raw, pred.data.data(), pred.data.size() * sizeof(float));
    json meta;
    meta["file"] = pred_raw;
    meta["dtype"] = "f32le";
    meta["channels"] = pred.c;
    meta["height"] = pred.h;
    meta["width"] = pred.w;
    std::string mtext = meta.dump(2);
    mtext.push_back('\n');
    write_text(fs::path(out) / patch_name("pred", i, "json"), mtext);

    std::vector<uint16_t> inst16(seg.instances.size());
    for (size_t k = 0; k < seg.instances.size(); ++k)
      inst16[k] = static_cast<uint16_t>(seg.instances[k]);
    std::string seg_raw = patch_name("seg", i, "raw");
    write_bytes(fs::path(out) / seg_raw, inst16.data(), inst16.size() * sizeof(uint16_t));

    json sj;
    sj["height"] = seg.height;
    sj["width"] = seg.width;
    sj["num_instances"] = seg.num_instances();
    json classes = json::object();
    for (int l = 1; l <= seg.num_instances(); ++l)
      classes[std::to_string(l)] = seg.instance_classes[l - 1];
    sj["classes"] = classes;
    sj["counts"] = seg.counts.counts;
    std::string stext = sj.dump(2);
    stext.push_back('\n');
    write_text(fs::path(out) / patch_name("seg", i, "json"), stext);

    json e;
    e["pred"] = pred_raw;
    e["pred_meta"] = patch_name("pred", i, "json");
    e["instances"] = seg_raw;
    e["seg"] = patch_name("seg", i, "json");
    entries[i] = e;
  });

  json manifest;
  manifest["patch_count"] = static_cast<int>(patches.size());
  manifest["height"] = patches.empty() ? 0 : patches[0].height;
  manifest["width"] = patches.empty() ? 0 : patches[0].width;
  manifest["tta"] = tta;
  manifest["entries"] = entries;
  std::string text = manifest.dump(2);
  text.push_back('\n');
  write_text(fs::path(out) / "predictions.json", text);

  json j;
  j["patch_count"] = static_cast<int>(patches.size());
  j["tta"] = tta;
  std::cout << j.dump() << "\n";
  return 0;
}

std::vector<SegmentationResult> load_predictions(const fs::path& dir) {
  std::ifstream f(dir / "predictions.json");
  if (!f) throw MissingFile((dir / "predictions.json").string());
  json manifest;
  try {
    f >> manifest;
  } catch (const json::exception& e) {
    throw IoFailure(std::string("predictions.json: ") + e.what());
  }
  int h = manifest.at("height").get<int>();
  int w = manifest.at("width").get<int>();
  std::vector<SegmentationResult> out;
  for (const json& e : manifest.at("entries")) {
    SegmentationResult seg;
    seg.height = h;
    seg.width = w;
    std::ifstream rf(dir / e.at("instances").get<std::string>(), std::ios::binary);
    if (!rf) throw MissingFile(e.at("instances").get<std::string>());
    std::vector<uint16_t> inst16(static_cast<size_t>(h) * w);
    rf.read(reinterpret_cast<char*>(inst16.data()),
            static_cast<std::streamsize>(inst16.size() * 2));
    if (!rf) throw IoFailure("reading " + e.at("instances").get<std::string>());
    seg.instances.assign(inst16.begin(), inst16.end());

    std::ifstream sf(dir / e.at("seg").get<std::string>());
    if (!sf) throw MissingFile(e.at("seg").get<std::string>());
    json sj;
    sf >> sj;
    int num = sj.at("num_instances").get<int>();
    seg.instance_classes.resize(num);
    for (const auto& [key, value] : sj.at("classes").items()) {
      int label = std::stoi(key);
      if (label < 1 || label > num) throw IoFailure("segment label out of range");
      seg.instance_classes[label - 1] = value.get<int>();
    }
    auto counts = sj.at("counts").get<std::array<int, kNumClasses>>();
    seg.counts.counts = counts;
    out.push_back(std::move(seg));
  }
  return out;
}

int cmd_eval(const RunConfig& run, const std::string& gt_dir, const std::string& pred_dir,
             const std::string& pred_tta_dir, const std::string& out, bool strict_six) {
  std::vector<LabeledPatch> gt = load_dataset(gt_dir);
  std::vector<SegmentationResult> pred = load_predictions(pred_dir);
  MetricsReport report = evaluate(gt, pred, strict_six);

  fs::create_directories(out);
  write_text(fs::path(out) / "report.json", report_to_json(report));
  write_text(fs::path(out) / "counts.csv", counts_table_csv(report));

  bool have_tta = !pred_tta_dir.empty();
  MetricsReport tta_report;
  if (have_tta) {
    std::vector<SegmentationResult> pred_tta = load_predictions(pred_tta_dir);
    tta_report = evaluate(gt, pred_tta, strict_six);
    write_text(fs::path(out) / "report_tta.json", report_to_json(tta_report));
    write_text(fs::path(out) / "counts_tta.csv", counts_table_csv(tta_report));
  }

  // one table row per evaluation set, tta columns empty when absent
  std::cout << "set,mPQ+,mPQ+ (tta),R2,R2 (tta)\n";
  std::cout << "eval," << fmt_g(report.mpq_plus) << ","
            << (have_tta ? fmt_g(tta_report.mpq_plus) : "") << "," << fmt_g(report.multi_r2) << ","
            << (have_tta ? fmt_g(tta_report.multi_r2) : "") << "\n";
  std::cerr << "mPQ+ " << fmt_g(report.mpq_plus) << "  R2 " << fmt_g(report.multi_r2) << "\n";
  (void)run;
  return 0;
}

int cmd_gradcheck(const GradCheckConfig& cfg) {
  GradCheckReport report = run_gradcheck(cfg);
  json j;
  json layers = json::object();
  for (const LayerCheck& l : report.layers) layers[l.name] = l.max_rel_err;
  j["layers"] = layers;
  j["net_max_rel_err"] = report.net_max_rel_err;
  j["worst_layer"] = report.worst_layer;
  j["loss_max_rel_err"] = report.loss_max_rel_err;
  j["pass"] = report.pass;
  std::cout << j.dump(2) << "\n";
  if (!report.pass) {
    std::cerr << "gradcheck FAILED: worst layer " << report.worst_layer << " rel err "
              << report.net_max_rel_err << ", loss rel err " << report.loss_max_rel_err << "\n";
    return 1;
  }
  std::cerr << "gradcheck passed: net max rel err " << report.net_max_rel_err << " ("
            << report.worst_layer << "), loss " << report.loss_max_rel_err << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ciscNet: distance-map nuclei instance segmentation and counting"};
  app.require_subcommand(1);
  app.fallthrough();  // let --config/--seed/--threads appear after the subcommand

  std::string config_path;
  int64_t seed_flag = -1;
  int threads_flag = 0;
  app.add_option("--config", config_path, "JSON run configuration");
  app.add_option("--seed", seed_flag, "override the configured seed");
  app.add_option("--threads", threads_flag, "worker threads for per-patch stages");

  // synth
  auto* synth = app.add_subcommand("synth", "generate a seeded synthetic dataset");
  SyntheticConfig synth_cfg;
  std::string synth_out;
  int synth_n = 10;
  std::vector<double> synth_weights;
  synth->add_option("--out", synth_out, "output dataset directory")->required();
  synth->add_option("--n", synth_n, "number of patches");
  synth->add_option("--height", synth_cfg.height, "patch height");
  synth->add_option("--width", synth_cfg.width, "patch width");
  synth->add_option("--density", synth_cfg.density, "target nucleus coverage (0,1]");
  synth->add_option("--class-weights", synth_weights, "six class sampling weights");
  synth->add_flag("--touching", synth_cfg.touching, "allow adjacent nuclei");
  synth->add_option("--min-area", synth_cfg.min_cell_area, "minimum rasterized nucleus area");

  // encode
  auto* encode = app.add_subcommand("encode", "dump distance-map targets for a dataset");
  std::string encode_data, encode_out;
  encode->add_option("--data", encode_data, "dataset directory")->required();
  encode->add_option("--out", encode_out, "output directory")->required();

  // train
  auto* train = app.add_subcommand("train", "train the network on a dataset");
  std::string train_data, train_out;
  int train_steps = -1, train_batch = -1, train_depth = -1, train_base = -1, train_groups = -1;
  double train_lr = -1, train_ratio = -1;
  bool train_no_aug = false;
  train->add_option("--data", train_data, "dataset directory")->required();
  train->add_option("--out", train_out, "output directory (ckpt + train_log.csv)")->required();
  train->add_option("--steps", train_steps, "total optimizer steps");
  train->add_option("--batch", train_batch, "batch size");
  train->add_option("--lr", train_lr, "base learning rate");
  train->add_option("--ratio", train_ratio, "train/val split ratio");
  train->add_option("--depth", train_depth, "downsampling levels");
  train->add_option("--base-features", train_base, "features at full resolution");
  train->add_option("--groups", train_groups, "group-norm groups");
  train->add_flag("--no-augment", train_no_aug, "disable augmentation");

  // predict
  auto* predict = app.add_subcommand("predict", "run inference and decode instances");
  std::string pr_ckpt, pr_data, pr_out;
  bool pr_tta = false;
  predict->add_option("--ckpt", pr_ckpt, "checkpoint file")->required();
  predict->add_option("--data", pr_data, "dataset directory")->required();
  predict->add_option("--out", pr_out, "output directory")->required();
  predict->add_flag("--tta", pr_tta, "average the 8 dihedral transforms");

  // eval
  auto* eval = app.add_subcommand("eval", "score predictions against ground truth");
  std::string ev_gt, ev_pred, ev_pred_tta, ev_out;
  bool ev_strict = false;
  eval->add_option("--gt", ev_gt, "ground-truth dataset directory")->required();
  eval->add_option("--pred", ev_pred, "predictions directory")->required();
  eval->add_option("--pred-tta", ev_pred_tta, "tta predictions directory (optional)");
  eval->add_option("--out", ev_out, "output directory")->required();
  eval->add_flag("--strict-six-class", ev_strict, "average PQ over all six classes");

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  GradCheckConfig gc;
  int gc_seeds = 3;
  gradcheck->add_option("--depth", gc.net.depth, "network depth");
  gradcheck->add_option("--base-features", gc.net.base_features, "base features");
  gradcheck->add_option("--groups", gc.net.groups, "group-norm groups");
  gradcheck->add_option("--size", gc.input_h, "input height and width");
  gradcheck->add_option("--seeds", gc_seeds, "number of seeds to run");
  gradcheck->add_option("--tolerance", gc.tolerance, "relative error tolerance");
  gradcheck->add_option("--corrupt", gc.corrupt, "fault-injection hook: perturb this layer")
      ->group("");  // hidden

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig run = load_run_config(config_path);
    if (seed_flag >= 0) {
      run.seed = seed_flag;
      run.train.seed = static_cast<uint64_t>(seed_flag);
      run.network.seed = static_cast<uint64_t>(seed_flag);
    }
    if (threads_flag > 0) run.threads = threads_flag;

    if (app.got_subcommand(synth)) {
      synth_cfg.seed = seed_flag >= 0 ? seed_flag : run.seed;
      synth_cfg.n_patches = synth_n;
      if (!synth_weights.empty()) {
        if (synth_weights.size() != kNumClasses) throw InvalidConfig("need six class weights");
        std::copy(synth_weights.begin(), synth_weights.end(), synth_cfg.class_weights.begin());
      }
      return cmd_synth(run, synth_cfg, synth_out);
    }
    if (app.got_subcommand(encode)) return cmd_encode(run, encode_data, encode_out);
    if (app.got_subcommand(train)) {
      if (train_steps > 0) run.train.total_steps = train_steps;
      if (train_batch > 0) run.train.batch_size = train_batch;
      if (train_lr > 0) run.train.optimizer.lr = train_lr;
      if (train_ratio > 0) run.train.split_ratio = train_ratio;
      if (train_depth > 0) run.network.depth = train_depth;
      if (train_base > 0) run.network.base_features = train_base;
      if (train_groups > 0) run.network.groups = train_groups;
      if (train_no_aug) run.train.augment_enabled = false;
      run.train.validate();
      run.network.validate();
      return cmd_train(run, train_data, train_out);
    }
    if (app.got_subcommand(predict)) {
      run.postprocess.validate();
      return cmd_predict(run, pr_ckpt, pr_data, pr_out, pr_tta);
    }
    if (app.got_subcommand(eval))
      return cmd_eval(run, ev_gt, ev_pred, ev_pred_tta, ev_out, ev_strict);
    if (app.got_subcommand(gradcheck)) {
      gc.input_w = gc.input_h;
      gc.threads = run.threads;
      int worst = 0;
      for (int s = 0; s < gc_seeds; ++s) {
        gc.seed = static_cast<uint64_t>(run.seed) + s;
        worst = std::max(worst, cmd_gradcheck(gc));
      }
      return worst;
    }
  } catch (const InvalidConfig& e) {
    std::cerr << e.what() << "\n";
    return kExitConfig;
  } catch (const InvalidWeights& e) {
    std::cerr << e.what() << "\n";
    return kExitConfig;
  } catch (const DimensionTooSmall& e) {
    std::cerr << e.what() << "\n";
    return kExitConfig;
  } catch (const OutOfRange& e) {
    std::cerr << e.what() << "\n";
    return kExitConfig;
  } catch (const StepOutOfRange& e) {
    std::cerr << e.what() << "\n";
    return kExitConfig;
  } catch (const IndivisibleGroups& e) {
    std::cerr << e.what() << "\n";
    return kExitConfig;
  } catch (const EmptyAfterFilter& e) {
    std::cerr << e.what() << "\n";
    return kExitEmptyFilter;
  } catch (const CheckpointMismatch& e) {
    std::cerr << e.what() << "\n";
    return kExitCheckpoint;
  } catch (const ShapeMismatch& e) {
    std::cerr << e.what() << "\n";
    return kExitCheckpoint;
  } catch (const IndivisibleDimensions& e) {
    std::cerr << e.what() << "\n";
    return kExitCheckpoint;
  } catch (const LengthMismatch& e) {
    std::cerr << e.what() << "\n";
    return kExitMisaligned;
  } catch (const EmptyDataset& e) {
    std::cerr << e.what() << "\n";
    return kExitMisaligned;
  } catch (const TooFewPatches& e) {
    std::cerr << e.what() << "\n";
    return kExitMisaligned;
  } catch (const MissingFile& e) {
    std::cerr << e.what() << "\n";
    return kExitIo;
  } catch (const IoFailure& e) {
    std::cerr << e.what() << "\n";
    return kExitIo;
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
