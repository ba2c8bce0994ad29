#include "lateralgrad/robustness.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lateralgrad/autograd.hpp"
#include "lateralgrad/errors.hpp"
#include "lateralgrad/parallel.hpp"

namespace lateralgrad {

std::string prune_scope_name(PruneScope s) {
  return s == PruneScope::Layerwise ? "layerwise" : "global";
}

namespace {

bool is_prunable(const std::string& name) {
  return name.size() > 7 && name.compare(name.size() - 7, 7, ".weight") == 0;
}

}  // namespace

int64_t count_prunable_weights(const Model& model) {
  int64_t n = 0;
  for (const auto& [name, t] : model.params)
    if (is_prunable(name)) n += t.numel();
  return n;
}

int64_t count_zero_prunable_weights(const Model& model) {
  int64_t n = 0;
  for (const auto& [name, t] : model.params)
    if (is_prunable(name))
      for (int64_t i = 0; i < t.numel(); ++i)
        if (t[i] == 0.0) ++n;
  return n;
}

Model prune_l1(const Model& model, double fraction, PruneScope scope) {
  if (fraction < 0.0 || fraction > 1.0) throw ConfigError("prune fraction must be in [0, 1]");
  Model pruned = model;
  if (scope == PruneScope::Layerwise) {
    for (auto& [name, t] : pruned.params) {
      if (!is_prunable(name)) continue;
      const int64_t n = t.numel();
      const int64_t zeros = static_cast<int64_t>(std::floor(fraction * static_cast<double>(n)));
      std::vector<int64_t> order(static_cast<size_t>(n));
      std::iota(order.begin(), order.end(), 0);
      std::sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
        const double fa = std::fabs(t[a]), fb = std::fabs(t[b]);
        if (fa != fb) return fa < fb;
        return a < b;
      });
      for (int64_t i = 0; i < zeros; ++i) t[order[static_cast<size_t>(i)]] = 0.0;
    }
    return pruned;
  }
  // global: one pooled ranking across all prunable tensors, ordered by
  // (parameter name, flat index) for ties
  struct Ref {
    Tensor* t;
    int64_t idx;
    double mag;
  };
  std::vector<Ref> pool;
  for (auto& [name, t] : pruned.params) {
    if (!is_prunable(name)) continue;
    for (int64_t i = 0; i < t.numel(); ++i) pool.push_back({&t, i, std::fabs(t[i])});
  }
  const int64_t zeros =
      static_cast<int64_t>(std::floor(fraction * static_cast<double>(pool.size())));
  std::stable_sort(pool.begin(), pool.end(),
                   [](const Ref& a, const Ref& b) { return a.mag < b.mag; });
  for (int64_t i = 0; i < zeros; ++i) (*pool[static_cast<size_t>(i)].t)[pool[static_cast<size_t>(i)].idx] = 0.0;
  return pruned;
}

Tensor fgsm(const Model& model, const Tensor& image, int label, double epsilon,
            const std::vector<double>& clip_min, const std::vector<double>& clip_max) {
  if (epsilon < 0.0) throw ConfigError("epsilon must be non-negative");
  Tensor x = image;
  if (x.ndim() == 3) x = x.reshaped({1, x.dim(0), x.dim(1), x.dim(2)});
  const int64_t C = x.dim(1), HW = x.dim(2) * x.dim(3);
  if (static_cast<int64_t>(clip_min.size()) != C || static_cast<int64_t>(clip_max.size()) != C)
    throw ConfigError("clip range must have one entry per channel");

  Tape tape = forward(model, x);
  LossResult loss = cross_entropy(tape.output(), {label});
  backward(model, tape, loss.grad);
  const Tensor& g = tape.input_grad();

  Tensor adv = x;
  for (int64_t c = 0; c < C; ++c) {
    const double lo = clip_min[static_cast<size_t>(c)], hi = clip_max[static_cast<size_t>(c)];
    for (int64_t ij = 0; ij < HW; ++ij) {
      const int64_t i = c * HW + ij;
      const double gv = g[i];
      const double sign = gv > 0.0 ? 1.0 : (gv < 0.0 ? -1.0 : 0.0);
      adv[i] = std::clamp(x[i] + epsilon * sign, lo, hi);
    }
  }
  return image.ndim() == 3 ? adv.reshaped({C, x.dim(2), x.dim(3)}) : adv;
}

std::vector<int64_t> correctly_predicted(const Model& model, const LabeledData& data,
                                         int64_t batch_size) {
  std::vector<int64_t> out;
  const int64_t N = data.size();
  for (int64_t lo = 0; lo < N; lo += batch_size) {
    const int64_t hi = std::min(N, lo + batch_size);
    std::vector<int64_t> shape = data.images.shape();
    shape[0] = hi - lo;
    Tensor batch(shape);
    const int64_t per = data.images.numel() / N;
    std::copy(data.images.data() + lo * per, data.images.data() + hi * per, batch.data());
    Tape tape = forward(model, batch);
    std::vector<int> pred = argmax_rows(tape.output());
    for (int64_t i = lo; i < hi; ++i)
      if (pred[static_cast<size_t>(i - lo)] == data.labels[static_cast<size_t>(i)])
        out.push_back(i);
  }
  return out;
}

std::vector<AttackReportRow> eval_under_attack(const Model& model, const LabeledData& data,
                                               const std::vector<int64_t>& subset,
                                               const std::vector<double>& epsilons,
                                               const std::vector<double>& clip_min,
                                               const std::vector<double>& clip_max,
                                               int64_t batch_size) {
  if (subset.empty())
    throw UsageError(
        "commonly-correct evaluation subset is empty; evaluate on a larger sample or train the "
        "models further");
  const int64_t per = data.images.numel() / data.size();
  const int64_t C = data.images.dim(1), H = data.images.dim(2), W = data.images.dim(3);

  std::vector<AttackReportRow> report;
  for (double eps : epsilons) {
    int64_t correct = 0;
    for (size_t lo = 0; lo < subset.size(); lo += static_cast<size_t>(batch_size)) {
      const size_t hi = std::min(subset.size(), lo + static_cast<size_t>(batch_size));
      const int64_t B = static_cast<int64_t>(hi - lo);
      Tensor batch({B, C, H, W});
      std::vector<int> labels(static_cast<size_t>(B));
      for (size_t i = lo; i < hi; ++i) {
        std::copy(data.images.data() + subset[i] * per, data.images.data() + (subset[i] + 1) * per,
                  batch.data() + static_cast<int64_t>(i - lo) * per);
        labels[i - lo] = data.labels[static_cast<size_t>(subset[i])];
      }
      // one batched backward; input gradients decompose per sample, and the
      // per-sample seeds keep sign() scale-free
      Tape tape = forward(model, batch);
      LossResult loss = cross_entropy(tape.output(), labels);
      Tensor seeds = per_sample_loss_seeds(loss, labels);
      backward(model, tape, seeds);
      const Tensor& g = tape.input_grad();

      Tensor adv = batch;
      for (int64_t b = 0; b < B; ++b)
        for (int64_t c = 0; c < C; ++c) {
          const double lo_c = clip_min[static_cast<size_t>(c)];
          const double hi_c = clip_max[static_cast<size_t>(c)];
          for (int64_t ij = 0; ij < H * W; ++ij) {
            const int64_t i = (b * C + c) * H * W + ij;
            const double gv = g[i];
            const double sign = gv > 0.0 ? 1.0 : (gv < 0.0 ? -1.0 : 0.0);
            adv[i] = std::clamp(batch[i] + eps * sign, lo_c, hi_c);
          }
        }

      Tape atape = forward(model, adv);
      std::vector<int> pred = argmax_rows(atape.output());
      for (size_t i = 0; i < pred.size(); ++i)
        if (pred[i] == labels[i]) ++correct;
    }
    AttackReportRow row;
    row.epsilon = eps;
    row.adv_acc = static_cast<double>(correct) / static_cast<double>(subset.size());
    row.n_samples = static_cast<int64_t>(subset.size());
    report.push_back(row);
  }
  return report;
}

}  // namespace lateralgrad
