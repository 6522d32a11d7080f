#include "ciscnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>

#include "ciscnet/loss.hpp"
#include "ciscnet/rng.hpp"

namespace ciscnet {

namespace {

double rel_err(double analytic, double fd) {
  return std::abs(analytic - fd) / std::max({std::abs(analytic), std::abs(fd), 1e-6});
}

// resolution limit of a central difference: roundoff of the objective itself
double fd_noise_floor(double objective, double step) {
  return 64.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(objective)) / step;
}

double objective(const NetworkConfig& net, const ParamSet<double>& params, const Tensor4d& x,
                 const Tensor4d& probe) {
  Tensor4d y = unet_forward(net, params, x);
  double s = 0;
  for (size_t i = 0; i < y.data.size(); ++i) s += y.data[i] * probe.data[i];
  return s;
}

}  // namespace

GradCheckReport run_gradcheck(const GradCheckConfig& cfg) {
  cfg.net.validate();
  Rng rng(cfg.seed, 0x6badc4ecULL);
  Tensor4d x(1, cfg.net.in_channels, cfg.input_h, cfg.input_w);
  for (auto& v : x.data) v = rng.uniform(-1, 1);
  Tensor4d probe(1, cfg.net.out_channels, cfg.input_h, cfg.input_w);
  for (auto& v : probe.data) v = rng.uniform(-1, 1);

  NetworkConfig net = cfg.net;
  net.seed = cfg.seed;
  ParamSet<double> params = unet_init_params<double>(net);

  UnetCache<double> cache;
  Tensor4d out = unet_forward(net, params, x, &cache);
  ParamSet<double> analytic = unet_backward(net, params, cache, probe);
  double scale = 0;
  for (size_t i = 0; i < out.data.size(); ++i) scale += out.data[i] * probe.data[i];
  const double floor = fd_noise_floor(scale, cfg.step);
  if (!cfg.corrupt.empty()) {
    Tensor4d& t = analytic[analytic.index_of(cfg.corrupt)];
    for (auto& v : t.data) v += 1e-2;
  }

  GradCheckReport report;
  report.layers.resize(params.tensors.size());
  for (size_t p = 0; p < params.tensors.size(); ++p) report.layers[p].name = params.names[p];

  const int n_threads = std::max(1, cfg.threads);
  std::vector<std::thread> workers;
  std::vector<double> worst(n_threads, 0.0);
  std::vector<std::vector<double>> per_tensor(n_threads,
                                              std::vector<double>(params.tensors.size(), 0.0));
  for (int t = 0; t < n_threads; ++t) {
    workers.emplace_back([&, t]() {
      ParamSet<double> local = params;  // private copy to perturb
      size_t flat = 0;
      for (size_t p = 0; p < local.tensors.size(); ++p) {
        auto& data = local.tensors[p].data;
        for (size_t i = 0; i < data.size(); ++i, ++flat) {
          if (static_cast<int>(flat % n_threads) != t) continue;
          double keep = data[i];
          data[i] = keep + cfg.step;
          double up = objective(net, local, x, probe);
          data[i] = keep - cfg.step;
          double dn = objective(net, local, x, probe);
          data[i] = keep;
          double fd = (up - dn) / (2 * cfg.step);
          double a = analytic.tensors[p].data[i];
          double err = std::abs(a - fd) <= floor ? 0.0 : rel_err(a, fd);
          per_tensor[t][p] = std::max(per_tensor[t][p], err);
          worst[t] = std::max(worst[t], err);
        }
      }
    });
  }
  for (auto& w : workers) w.join();
  for (size_t p = 0; p < params.tensors.size(); ++p) {
    for (int t = 0; t < n_threads; ++t)
      report.layers[p].max_rel_err = std::max(report.layers[p].max_rel_err, per_tensor[t][p]);
    if (report.layers[p].max_rel_err >= report.net_max_rel_err) {
      report.net_max_rel_err = report.layers[p].max_rel_err;
      report.worst_layer = report.layers[p].name;
    }
  }

  // loss gradient against the same scheme
  Tensor4d pred(1, 6, 4, 4), target(1, 6, 4, 4), weight(1, 1, 4, 4);
  for (auto& v : pred.data) v = rng.uniform(0, 1);
  for (auto& v : target.data) v = rng.uniform(0, 1);
  for (auto& v : weight.data) v = rng.uniform(1, 10);
  std::array<double, 7> omega = {0.8, 1.2, 0.9, 1.1, 1.0, 0.7, 1.3};
  const double beta = 1.0;
  LossResult<double> loss = total_loss(pred, target, weight, omega, beta);
  for (size_t i = 0; i < pred.data.size(); ++i) {
    double keep = pred.data[i];
    pred.data[i] = keep + cfg.step;
    double up = total_loss(pred, target, weight, omega, beta).value;
    pred.data[i] = keep - cfg.step;
    double dn = total_loss(pred, target, weight, omega, beta).value;
    pred.data[i] = keep;
    double fd = (up - dn) / (2 * cfg.step);
    report.loss_max_rel_err = std::max(report.loss_max_rel_err, rel_err(loss.grad.data[i], fd));
  }

  report.pass = report.net_max_rel_err <= cfg.tolerance &&
                report.loss_max_rel_err <= cfg.loss_tolerance;
  return report;
}

}  // namespace ciscnet
