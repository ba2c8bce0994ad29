#include "lateralgrad/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "lateralgrad/diagnostics.hpp"
#include "lateralgrad/errors.hpp"
#include "lateralgrad/parallel.hpp"

namespace lateralgrad {

std::string ablation_mode_name(AblationMode m) {
  switch (m) {
    case AblationMode::None: return "none";
    case AblationMode::WithoutLi: return "without-li";
    case AblationMode::WithoutMinicolumn: return "without-minicolumn";
  }
  return "?";
}

Tensor apply_gradient_mask(const Tensor& grad_cuv, const GradientMask& masks) {
  const int64_t C = grad_cuv.dim(0), U = grad_cuv.dim(1), V = grad_cuv.dim(2);
  const int64_t K = static_cast<int64_t>(masks.set_masks.size());
  if (K < 1 || C % K != 0) throw UsageError("mask set count does not divide channels");
  const int64_t width = C / K;
  Tensor out = Tensor::zeros_like(grad_cuv);
  const double* gd = grad_cuv.data();
  double* od = out.data();
  for (int64_t c = 0; c < C; ++c) {
    const double* md = masks.set_masks[static_cast<size_t>(c / width)].data();
    const double* gc = gd + c * U * V;
    double* oc = od + c * U * V;
    for (int64_t ij = 0; ij < U * V; ++ij) oc[ij] = gc[ij] * md[ij];
  }
  return out;
}

MaskConfig resolve_mask_config(const Model& model, MaskConfig cfg) {
  if (cfg.layer_ids.empty()) cfg.layer_ids = model.default_masked_layers();
  for (int id : cfg.layer_ids) {
    if (id < 0 || static_cast<size_t>(id) >= model.layers.size())
      throw ConfigError("masked layer id " + std::to_string(id) + " out of range");
    if (!model.layer_output_is_spatial(id))
      throw ConfigError("layer " + std::to_string(id) + " (" +
                        layer_kind_name(model.layers[static_cast<size_t>(id)].kind) +
                        ") has no C x u x v output to mask");
    const auto& os = model.output_shapes[static_cast<size_t>(id)];
    if (cfg.num_sets < 1 || os[0] % cfg.num_sets != 0)
      throw ConfigError("mask set count " + std::to_string(cfg.num_sets) +
                        " does not divide " + std::to_string(os[0]) + " channels of layer " +
                        std::to_string(id));
  }
  if (cfg.quantile < 0.0 || cfg.quantile > 1.0) throw ConfigError("quantile must be in [0, 1]");
  if (!(cfg.sigma > 0.0)) throw ConfigError("mask sigma must be positive");
  return cfg;
}

MaskHookState::MaskHookState(const Model& model, const MaskConfig& cfg, AblationMode ablation,
                             MaskScope scope)
    : cfg_(resolve_mask_config(model, cfg)), ablation_(ablation), scope_(scope) {
  for (int id : cfg_.layer_ids) {
    const auto& os = model.output_shapes[static_cast<size_t>(id)];
    int64_t size = cfg_.kernel_size > 0 ? cfg_.kernel_size
                                        : default_log_kernel_size(cfg_.sigma, os[1], os[2]);
    LayerPlan plan{id, build_log_kernel(cfg_.sigma, size), os[0]};
    plans_.push_back(std::move(plan));
    tallies_.emplace_back(id, std::make_pair<int64_t, int64_t>(0, 0));
  }
}

const MaskHookState::LayerPlan& MaskHookState::plan_for(int layer_id) const {
  for (const auto& p : plans_)
    if (p.layer_id == layer_id) return p;
  throw UsageError("no mask plan for layer " + std::to_string(layer_id));
}

void MaskHookState::install(Tape& tape) const {
  for (const auto& p : plans_)
    tape.hooks[p.layer_id] = [this](const Tensor& g, int id) { return apply(g, id); };
}

Tensor MaskHookState::apply(const Tensor& grad, int layer_id) const {
  const LayerPlan& plan = plan_for(layer_id);
  const int64_t B = grad.dim(0), C = grad.dim(1), U = grad.dim(2), V = grad.dim(3);
  Tensor out = Tensor::zeros_like(grad);
  std::vector<GradientMask> per_sample(static_cast<size_t>(B));
  std::vector<int64_t> zero_counts(static_cast<size_t>(B), 0);

  auto masks_for = [&](const Tensor& sample_grad) {
    GradientMask m;
    switch (ablation_) {
      case AblationMode::None:
        m = build_gradient_mask(sample_grad, plan.kernel, cfg_);
        break;
      case AblationMode::WithoutLi: {
        Tensor norms = minicolumn_norms(sample_grad, cfg_.num_sets);
        for (int64_t k = 0; k < cfg_.num_sets; ++k) {
          Tensor nk({U, V});
          std::copy(norms.data() + k * U * V, norms.data() + (k + 1) * U * V, nk.data());
          m.set_masks.push_back(make_mask_without_li(nk, cfg_.quantile));
        }
        break;
      }
      case AblationMode::WithoutMinicolumn:
        m.set_masks = make_mask_without_minicolumn(sample_grad, plan.kernel, cfg_.quantile);
        break;
    }
    return m;
  };

  if (scope_ == MaskScope::PerBatch) {
    // one mask set from the batch-mean gradient, shared by all samples
    Tensor mean({C, U, V});
    const double* gd = grad.data();
    for (int64_t b = 0; b < B; ++b)
      for (int64_t i = 0; i < C * U * V; ++i) mean[i] += gd[b * C * U * V + i];
    mean *= 1.0 / static_cast<double>(B);
    GradientMask shared = masks_for(mean);
    for (int64_t b = 0; b < B; ++b) per_sample[static_cast<size_t>(b)] = shared;
  } else {
    parallel_for(B, [&](int64_t b) {
      Tensor sample = slice_leading(grad, b).reshaped({C, U, V});
      per_sample[static_cast<size_t>(b)] = masks_for(sample);
    });
  }

  parallel_for(B, [&](int64_t b) {
    const GradientMask& m = per_sample[static_cast<size_t>(b)];
    Tensor sample = slice_leading(grad, b).reshaped({C, U, V});
    Tensor masked = apply_gradient_mask(sample, m);
    std::copy(masked.data(), masked.data() + masked.numel(), out.data() + b * C * U * V);
    int64_t zeros = 0;
    for (const Tensor& sm : m.set_masks)
      for (int64_t i = 0; i < sm.numel(); ++i)
        if (sm[i] == 0.0) ++zeros;
    // zeros per mask times channels sharing it
    zero_counts[static_cast<size_t>(b)] =
        zeros * (C / static_cast<int64_t>(m.set_masks.size()));
  });

  for (auto& [id, tally] : tallies_) {
    if (id != layer_id) continue;
    for (int64_t b = 0; b < B; ++b) tally.first += zero_counts[static_cast<size_t>(b)];
    tally.second += B * C * U * V;
  }
  if (record_) {
    MaskHookRecord rec;
    rec.pre_grad = grad;
    rec.sample_masks = std::move(per_sample);
    (*record_)[layer_id] = std::move(rec);
  }
  return out;
}

std::vector<std::pair<int, double>> MaskHookState::inhibited_fractions() const {
  std::vector<std::pair<int, double>> out;
  for (const auto& [id, tally] : tallies_)
    out.emplace_back(id, tally.second == 0
                             ? 0.0
                             : static_cast<double>(tally.first) / static_cast<double>(tally.second));
  return out;
}

void MaskHookState::reset_stats() {
  for (auto& [id, tally] : tallies_) tally = {0, 0};
}

namespace {

Tensor gather_batch(const Tensor& images, const std::vector<int64_t>& order, int64_t lo,
                    int64_t hi) {
  const int64_t per = images.numel() / images.dim(0);
  std::vector<int64_t> shape = images.shape();
  shape[0] = hi - lo;
  Tensor out(shape);
  for (int64_t i = lo; i < hi; ++i)
    std::copy(images.data() + order[static_cast<size_t>(i)] * per,
              images.data() + (order[static_cast<size_t>(i)] + 1) * per,
              out.data() + (i - lo) * per);
  return out;
}

std::string param_group(const std::string& param_name) {
  auto dot = param_name.find('.');
  return dot == std::string::npos ? param_name : param_name.substr(0, dot);
}

}  // namespace

TrainLog train(Model& model, const LabeledData& train_data, const LabeledData& val_data,
               const TrainConfig& cfg, SgdOptimizer& opt, Rng& shuffle_rng, int64_t first_epoch) {
  if (cfg.batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (train_data.size() == 0) throw ConfigError("training dataset is empty");

  std::optional<MaskHookState> hook;
  if (cfg.mask) hook.emplace(model, *cfg.mask, cfg.ablation, cfg.mask_scope);

  const int64_t N = train_data.size();
  std::vector<int64_t> order(static_cast<size_t>(N));

  TrainLog log;
  for (int64_t e = 0; e < cfg.epochs; ++e) {
    const int64_t epoch = first_epoch + e;
    const auto t0 = std::chrono::steady_clock::now();
    // each epoch's permutation is a pure function of the rng stream state,
    // so a run resumed from a checkpointed rng replays the same batches
    std::iota(order.begin(), order.end(), 0);
    shuffle_rng.shuffle(order);
    if (hook) hook->reset_stats();

    double loss_sum = 0.0;
    int64_t correct = 0;
    // pooled per-parameter GSNR samples for this epoch, keyed by group
    std::map<std::string, std::vector<double>> gsnr_pool;

    int64_t batch_index = 0;
    for (int64_t lo = 0; lo < N; lo += cfg.batch_size, ++batch_index) {
      const int64_t hi = std::min(N, lo + cfg.batch_size);
      Tensor batch = gather_batch(train_data.images, order, lo, hi);
      std::vector<int> labels(static_cast<size_t>(hi - lo));
      for (int64_t i = lo; i < hi; ++i)
        labels[static_cast<size_t>(i - lo)] =
            train_data.labels[static_cast<size_t>(order[static_cast<size_t>(i)])];

      Tape tape = forward(model, batch);
      if (hook) hook->install(tape);
      LossResult loss = cross_entropy(tape.output(), labels);
      if (!std::isfinite(loss.loss))
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) +
                           " batch " + std::to_string(batch_index));
      loss_sum += loss.loss * static_cast<double>(hi - lo);
      const std::vector<int> pred = argmax_rows(tape.output());
      for (size_t i = 0; i < pred.size(); ++i)
        if (pred[i] == labels[i]) ++correct;

      if (cfg.gsnr_every > 0 && batch_index % cfg.gsnr_every == 0 && hi - lo >= 2) {
        Tensor seeds = per_sample_loss_seeds(loss, labels);
        std::vector<Gradients> psg = per_sample_gradients(model, tape, seeds);
        for (const auto& [name, g0] : psg.front().by_param) {
          std::vector<const Tensor*> grads;
          grads.reserve(psg.size());
          for (const auto& s : psg) grads.push_back(&s.by_param.at(name));
          Tensor r = gsnr_from_pointers(grads);
          auto& pool = gsnr_pool[param_group(name)];
          pool.insert(pool.end(), r.data(), r.data() + r.numel());
        }
      }

      Gradients grads = backward(model, tape, loss.grad);
      opt.step(model.params, grads);
    }

    EpochRow row;
    row.epoch = epoch;
    row.train_loss = loss_sum / static_cast<double>(N);
    row.train_acc = static_cast<double>(correct) / static_cast<double>(N);
    row.val_acc = val_data.size() > 0 ? evaluate(model, val_data).accuracy : 0.0;
    row.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log.epochs.push_back(row);

    if (hook)
      for (const auto& [layer, frac] : hook->inhibited_fractions())
        log.mask_stats.push_back({epoch, layer, frac});

    for (auto& [group, pool] : gsnr_pool) {
      GsnrRow g;
      g.epoch = epoch;
      g.layer = group;
      g.mean_gsnr = std::accumulate(pool.begin(), pool.end(), 0.0) /
                    static_cast<double>(pool.size());
      std::sort(pool.begin(), pool.end());
      g.p50 = percentile_sorted(pool, 0.5);
      g.p90 = percentile_sorted(pool, 0.9);
      log.gsnr.push_back(g);
    }
  }
  return log;
}

EvalResult evaluate(const Model& model, const LabeledData& data, int64_t batch_size) {
  EvalResult r;
  r.n = data.size();
  if (r.n == 0) return r;
  std::vector<int64_t> order(static_cast<size_t>(r.n));
  std::iota(order.begin(), order.end(), 0);
  double loss_sum = 0.0;
  int64_t correct = 0;
  for (int64_t lo = 0; lo < r.n; lo += batch_size) {
    const int64_t hi = std::min(r.n, lo + batch_size);
    Tensor batch = gather_batch(data.images, order, lo, hi);
    std::vector<int> labels(data.labels.begin() + lo, data.labels.begin() + hi);
    Tape tape = forward(model, batch);
    LossResult loss = cross_entropy(tape.output(), labels);
    loss_sum += loss.loss * static_cast<double>(hi - lo);
    std::vector<int> pred = argmax_rows(tape.output());
    for (size_t i = 0; i < pred.size(); ++i)
      if (pred[i] == labels[i]) ++correct;
  }
  r.loss = loss_sum / static_cast<double>(r.n);
  r.accuracy = static_cast<double>(correct) / static_cast<double>(r.n);
  return r;
}

}  // namespace lateralgrad
