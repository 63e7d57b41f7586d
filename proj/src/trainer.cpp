#include "sts/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <ostream>
#include <random>

#include "sts/errors.hpp"
#include "sts/gradcheck.hpp"
#include "sts/multitask.hpp"
#include "sts/ops.hpp"

namespace sts {

namespace {

double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

void shuffle(std::vector<std::size_t>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(unit_uniform(rng) * static_cast<double>(i));
    std::swap(v[i - 1], v[std::min(j, i - 1)]);
  }
}

std::vector<std::uint8_t> positive_mask(std::span<const double> truth) {
  std::vector<std::uint8_t> z(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) z[i] = truth[i] > 0.0 ? 1 : 0;
  return z;
}

Tensor window_objective(const Model& model, const Window& w, const TrainConfig& cfg) {
  std::vector<std::uint8_t> teacher;
  const std::vector<std::uint8_t>* mask = nullptr;
  if (cfg.mask_mode == MaskMode::kTeacher) {
    teacher = positive_mask(w.truth);
    mask = &teacher;
  }
  const ForwardResult fwd = model.forward(w.input, cfg.loss, nullptr, mask);
  return model.loss(fwd, w.target, w.truth, cfg.loss).total;
}

double penalty_value(const Model& model) {
  double s = 0.0;
  for (const auto& p : model.params())
    for (double v : p.value.data()) s += v * v;
  return s;
}

}  // namespace

std::string to_string(Split s) {
  switch (s) {
    case Split::kTrain:
      return "train";
    case Split::kValidation:
      return "validation";
    case Split::kTest:
      return "test";
  }
  return "train";
}

std::vector<std::size_t> WindowedDataset::indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < windows.size(); ++i)
    if (windows[i].split == s) out.push_back(i);
  return out;
}

SplitPlan plan_split(std::size_t n_windows, const TrainConfig& cfg) {
  SplitPlan plan;
  const double share = static_cast<double>(cfg.split_test) / static_cast<double>(cfg.split_train + cfg.split_test);
  plan.test = static_cast<std::size_t>(std::llround(share * static_cast<double>(n_windows)));
  if (n_windows > 0 && plan.test >= n_windows) plan.test = n_windows - 1;
  const std::size_t rest = n_windows - plan.test;
  plan.validation = rest > 0 ? std::min(cfg.val_slots, rest - 1) : 0;
  plan.train = rest - plan.validation;
  return plan;
}

namespace {

WindowedDataset build_windows(const AnomalyTensor& x, const TrainConfig& cfg, const NormStats* given) {
  x.validate();
  const std::size_t N = x.n_regions, T = cfg.t_window, C = x.n_categories;
  if (x.n_slots <= T) {
    throw DataError("need at least " + std::to_string(T + 1) + " slots for a history of " + std::to_string(T) +
                    ", got " + std::to_string(x.n_slots));
  }
  const std::size_t n_windows = x.n_slots - T;
  const SplitPlan plan = plan_split(n_windows, cfg);

  WindowedDataset ds;
  ds.n_regions = N;
  ds.n_categories = C;
  ds.t_window = T;
  ds.fit_slots = T + plan.train + plan.validation;
  if (given) {
    if (given->categories() != C) throw ConfigError("normalisation statistics cover a different category count");
    ds.stats = *given;
  } else {
    ds.stats = fit_norm(x, cfg.norm, ds.fit_slots);
  }
  const std::vector<double> normed = apply_norm(x.values, ds.stats);

  ds.windows.reserve(n_windows);
  for (std::size_t k = 0; k < n_windows; ++k) {
    const std::size_t target = T + k;
    Window w;
    w.target_slot = target;
    w.split = k < plan.train ? Split::kTrain : k < plan.train + plan.validation ? Split::kValidation : Split::kTest;
    std::vector<double> in(N * T * C), tgt(N * C);
    w.truth.resize(N * C);
    for (std::size_t r = 0; r < N; ++r) {
      std::copy_n(normed.begin() + static_cast<std::ptrdiff_t>(x.index(r, target - T, 0)), T * C,
                  in.begin() + static_cast<std::ptrdiff_t>(r * T * C));
      for (std::size_t c = 0; c < C; ++c) {
        tgt[r * C + c] = normed[x.index(r, target, c)];
        w.truth[r * C + c] = x.at(r, target, c);
      }
    }
    w.input = Tensor::from({N, T, C}, std::move(in));
    w.target = Tensor::from({N, C}, std::move(tgt));
    ds.windows.push_back(std::move(w));
  }
  return ds;
}

}  // namespace

WindowedDataset make_windows(const AnomalyTensor& x, const TrainConfig& cfg) { return build_windows(x, cfg, nullptr); }

WindowedDataset make_windows(const AnomalyTensor& x, const TrainConfig& cfg, const NormStats& stats) {
  return build_windows(x, cfg, &stats);
}

void adam_step(const std::vector<Tensor>& params, const std::vector<std::vector<double>>& grads, AdamState& s,
               double lr) {
  if (grads.size() != params.size()) throw DimensionError("adam_step: parameter and gradient counts differ");
  if (s.m.empty()) {
    for (const auto& p : params) {
      s.m.emplace_back(p.numel(), 0.0);
      s.v.emplace_back(p.numel(), 0.0);
    }
  }
  if (s.m.size() != params.size()) throw DimensionError("adam_step: optimiser state does not match parameters");
  ++s.step;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor p = params[i];
    auto data = p.mutable_data();
    if (grads[i].size() != data.size() || s.m[i].size() != data.size()) {
      throw DimensionError("adam_step: gradient " + std::to_string(i) + " has the wrong size");
    }
    for (std::size_t k = 0; k < data.size(); ++k) {
      const double g = grads[i][k];
      s.m[i][k] = s.beta1 * s.m[i][k] + (1.0 - s.beta1) * g;
      s.v[i][k] = s.beta2 * s.v[i][k] + (1.0 - s.beta2) * g * g;
      const double m_hat = s.m[i][k] / c1;
      const double v_hat = s.v[i][k] / c2;
      data[k] -= lr * m_hat / (std::sqrt(v_hat) + s.eps);
    }
  }
}

double lr_at(std::size_t epoch, const TrainConfig& cfg) {
  return cfg.lr0 * std::pow(cfg.decay, static_cast<double>(epoch));
}

double training_objective(const Model& model, const WindowedDataset& data, const TrainConfig& cfg) {
  NoGradGuard guard;
  const auto idx = data.indices(Split::kTrain);
  if (idx.empty()) throw ContractError("training split is empty");
  double total = 0.0;
  for (std::size_t i : idx) total += window_objective(model, data.windows[i], cfg).item();
  return total / static_cast<double>(idx.size()) + cfg.loss.lambda_reg * penalty_value(model);
}

TrainResult train(Model& model, const WindowedDataset& data, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  std::vector<std::size_t> order = data.indices(Split::kTrain);
  if (order.empty()) throw ContractError("training split is empty");
  const bool has_val = data.count(Split::kValidation) > 0;

  const std::vector<Tensor> params = model.param_tensors();
  const std::size_t batch = cfg.batch_size == 0 ? order.size() : std::min(cfg.batch_size, order.size());
  std::mt19937_64 rng(derive_seed(cfg.seed, "shuffle"));
  AdamState adam;

  TrainResult res;
  res.initial_loss = training_objective(model, data, cfg);
  std::vector<std::vector<double>> best = [&] {
    std::vector<std::vector<double>> snap;
    for (const auto& p : params) snap.push_back(p.to_vector());
    return snap;
  }();

  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    EpochLog entry;
    entry.epoch = epoch;
    entry.lr = lr_at(epoch, cfg);
    shuffle(order, rng);

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      ++step;
      const std::size_t end = std::min(start + batch, order.size());
      const double inv = 1.0 / static_cast<double>(end - start);
      for (auto& p : params) Tensor(p).zero_grad();
      try {
        for (std::size_t k = start; k < end; ++k) {
          const Tensor obj = window_objective(model, data.windows[order[k]], cfg);
          loss_sum += obj.item();
          obj.backward();
        }
      } catch (const NumericError& e) {
        throw NumericError("training diverged at epoch " + std::to_string(epoch) + ", step " + std::to_string(step) +
                           ": " + e.what());
      }

      std::vector<std::vector<double>> grads;
      grads.reserve(params.size());
      double norm_sq = 0.0;
      for (const auto& p : params) {
        std::vector<double> g = p.grad();
        const auto w = p.data();
        for (std::size_t k = 0; k < g.size(); ++k) {
          g[k] = g[k] * inv + 2.0 * cfg.loss.lambda_reg * w[k];
          norm_sq += g[k] * g[k];
        }
        grads.push_back(std::move(g));
      }
      if (!std::isfinite(norm_sq)) {
        throw NumericError("training diverged at epoch " + std::to_string(epoch) + ", step " + std::to_string(step) +
                           ": non-finite gradient");
      }
      if (cfg.grad_clip > 0.0 && std::sqrt(norm_sq) > cfg.grad_clip) {
        const double factor = cfg.grad_clip / std::sqrt(norm_sq);
        for (auto& g : grads)
          for (double& v : g) v *= factor;
        ++entry.clipped_steps;
      }
      adam_step(params, grads, adam, entry.lr);
    }
    for (auto& p : params) Tensor(p).zero_grad();
    entry.train_loss = loss_sum / static_cast<double>(order.size()) + cfg.loss.lambda_reg * penalty_value(model);
    if (!std::isfinite(entry.train_loss)) {
      throw NumericError("training diverged at epoch " + std::to_string(epoch) + ", step " + std::to_string(step) +
                         ": loss is not finite");
    }

    if (has_val) {
      const MetricsReport m = evaluate(model, data, Split::kValidation, cfg.loss);
      entry.val_mae = m.mae;
      entry.val_rmse = m.rmse;
      if (!res.best_val_mae || m.mae < *res.best_val_mae) {
        res.best_val_mae = m.mae;
        res.best_epoch = epoch;
        for (std::size_t i = 0; i < params.size(); ++i) best[i] = params[i].to_vector();
      }
    } else {
      res.best_epoch = epoch;
      for (std::size_t i = 0; i < params.size(); ++i) best[i] = params[i].to_vector();
    }
    res.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
  }

  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor p = params[i];
    std::copy(best[i].begin(), best[i].end(), p.mutable_data().begin());
  }
  return res;
}

std::vector<double> predict(const Model& model, const Window& w, const NormStats& stats, const LossConfig& loss) {
  NoGradGuard guard;
  const ForwardResult fwd = model.forward(w.input, loss);
  return denormalize(fwd.pred.x_hat.data(), stats, true);
}

MetricsReport evaluate(const Model& model, const WindowedDataset& data, Split split, const LossConfig& loss) {
  MetricsAccumulator acc;
  for (std::size_t i : data.indices(split)) {
    const Window& w = data.windows[i];
    acc.add(w.truth, predict(model, w, data.stats, loss));
  }
  return acc.report();
}

MetricsReport evaluate_zero_baseline(const WindowedDataset& data, Split split) {
  MetricsAccumulator acc;
  for (std::size_t i : data.indices(split)) {
    const Window& w = data.windows[i];
    const std::vector<double> zeros(w.truth.size(), 0.0);
    acc.add(w.truth, zeros);
  }
  return acc.report();
}

void write_epoch_log(std::ostream& out, const std::vector<EpochLog>& log) {
  out << "epoch,lr,train_loss,val_mae,val_rmse\n";
  char buf[64];
  auto num = [&](double v) {
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
  };
  for (const auto& e : log) {
    out << e.epoch << ',' << num(e.lr) << ',' << num(e.train_loss) << ',' << (e.val_mae ? num(*e.val_mae) : "")
        << ',' << (e.val_rmse ? num(*e.val_rmse) : "") << '\n';
  }
}

std::vector<GradcheckGroup> gradcheck_model(const Model& model, const Window& w, const TrainConfig& cfg, double h) {
  std::vector<std::uint8_t> mask;
  {
    NoGradGuard guard;
    mask = cfg.mask_mode == MaskMode::kTeacher ? positive_mask(w.truth) : model.forward(w.input, cfg.loss).pred.z;
  }
  const std::vector<Tensor> params = model.param_tensors();
  auto objective = [&] {
    const ForwardResult fwd = model.forward(w.input, cfg.loss, nullptr, &mask);
    Tensor total = model.loss(fwd, w.target, w.truth, cfg.loss).total;
    if (cfg.loss.lambda_reg != 0.0) total = ops::add(total, ops::scale(l2_penalty(params), cfg.loss.lambda_reg));
    return total;
  };

  for (const auto& p : params) Tensor(p).zero_grad();
  objective().backward();

  std::vector<GradcheckGroup> out;
  for (const auto& named : model.params()) {
    Tensor p = named.value;
    const std::vector<double> analytic = p.grad();
    GradcheckGroup g;
    g.name = named.name;
    g.size = p.numel();
    g.max_error = finite_diff_error(
        [&] {
          NoGradGuard guard;
          return objective().item();
        },
        p.mutable_data(), analytic, h);
    out.push_back(g);
  }
  for (const auto& p : params) Tensor(p).zero_grad();
  return out;
}

}  // namespace sts
