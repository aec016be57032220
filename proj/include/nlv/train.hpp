#pragma once

// Minibatch SGD with classical momentum, plus the training loop used by the
// experiment driver.  Everything is deterministic for a fixed seed when run
// single threaded: shuffling comes from one seeded generator and batch
// gradients are reduced in sample order.  With several worker threads the
// per-sample passes run concurrently but are still reduced in sample order,
// so results match the serial run up to floating point scheduling noise in
// the maths library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "nlv/model.hpp"
#include "nlv/scores.hpp"
#include "nlv/synth.hpp"
#include "nlv/tensor.hpp"

namespace nlv {

struct SGDConfig {
  double lr = 0.02;
  double momentum = 0.9;
  long epochs = 5;
  long batch = 16;
  std::uint64_t seed = 1;
  double lr_decay = 0.1;
  std::vector<long> decay_epochs;  // zero-based; decay applies from that epoch on
  double grad_clip = 4.0;          // global norm cap per batch, 0 disables

  void validate() const {
    if (!(lr >= 0) || !std::isfinite(lr))
      throw std::invalid_argument("sgd: learning rate must be finite and non-negative");
    if (!(momentum >= 0 && momentum < 1))
      throw std::invalid_argument("sgd: momentum must lie in [0, 1)");
    if (epochs < 1) throw std::invalid_argument("sgd: need at least one epoch");
    if (batch < 1) throw std::invalid_argument("sgd: batch size must be positive");
    if (!(lr_decay > 0) || !std::isfinite(lr_decay))
      throw std::invalid_argument("sgd: lr decay factor must be finite and positive");
    if (!(grad_clip >= 0) || !std::isfinite(grad_clip))
      throw std::invalid_argument("sgd: gradient clip must be finite and non-negative");
  }

  double lr_at(long epoch) const {
    double factor = 1.0;
    for (long d : decay_epochs)
      if (d <= epoch) factor *= lr_decay;
    return lr * factor;
  }
};

struct TrainingDiverged : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// v <- momentum * v + g;  p <- p - lr * v
inline void sgd_step(ToyModel& model, const ToyModel& grads, ToyModel& velocity, double lr,
                     double momentum) {
  auto ps = model_params(model);
  auto gs = model_params(const_cast<ToyModel&>(grads));
  auto vs = model_params(velocity);
  if (ps.size() != gs.size() || ps.size() != vs.size())
    throw std::invalid_argument("sgd_step: parameter sets disagree");
  for (std::size_t i = 0; i < ps.size(); ++i) {
    Tensor<double>& p = *ps[i].second;
    const Tensor<double>& g = *gs[i].second;
    Tensor<double>& v = *vs[i].second;
    if (!p.same_shape(g) || !p.same_shape(v))
      throw std::invalid_argument("sgd_step: shape mismatch for " + ps[i].first);
    for (std::size_t k = 0; k < p.numel(); ++k) {
      v[k] = momentum * v[k] + g[k];
      p[k] -= lr * v[k];
    }
  }
}

inline void accumulate_grads(ToyModel& acc, const ToyModel& g) {
  auto as = model_params(acc);
  auto gs = model_params(const_cast<ToyModel&>(g));
  for (std::size_t i = 0; i < as.size(); ++i) add_inplace(*as[i].second, *gs[i].second);
}

// Rescale so the gradient's global norm is at most `cap`.  A single bad
// batch can otherwise throw the stem into the rectifier's dead zone and
// freeze the whole network.
inline void clip_grad_norm(ToyModel& grads, double cap) {
  if (cap <= 0) return;
  double sq = 0;
  auto gs = model_params(grads);
  for (auto& [name, tensor] : gs)
    for (std::size_t k = 0; k < tensor->numel(); ++k) sq += (*tensor)[k] * (*tensor)[k];
  const double norm = std::sqrt(sq);
  if (norm <= cap) return;
  for (auto& [name, tensor] : gs) scale_inplace(*tensor, cap / norm);
}

struct TraceRow {
  long epoch = 0;
  double train_loss = 0;
  double train_acc = 0;
  double test_acc = 0;
};

inline void write_trace_csv(const std::vector<TraceRow>& rows, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open trace file: " + path);
  out << "epoch,train_loss,train_acc,test_acc\n";
  for (const TraceRow& r : rows)
    out << r.epoch << ',' << format_score(r.train_loss) << ',' << format_score(r.train_acc)
        << ',' << format_score(r.test_acc) << '\n';
  if (!out) throw std::runtime_error("failed writing trace file: " + path);
}

namespace detail {

template <typename Fn>
void parallel_over(std::size_t count, long threads, Fn&& fn) {
  if (threads <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(threads), count);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < count; i += workers) fn(i);
    });
  for (std::thread& t : pool) t.join();
}

}  // namespace detail

// Accuracy of argmax predictions over a labelled set.
inline double evaluate_accuracy(const ToyModel& model, const LabeledVideos& data,
                                long threads = 1) {
  if (data.size() == 0) throw std::invalid_argument("evaluate_accuracy: empty dataset");
  std::vector<int> correct(data.size(), 0);
  detail::parallel_over(data.size(), threads, [&](std::size_t i) {
    correct[i] = argmax_class(model_forward(model, data.videos[i])) == data.labels[i] ? 1 : 0;
  });
  const long hits = std::accumulate(correct.begin(), correct.end(), 0L);
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

// Per-class probability scores for a labelled set, one row per sample.
inline ScoreTable score_dataset(const ToyModel& model, const LabeledVideos& data,
                                const std::string& id_prefix, long threads = 1) {
  ScoreTable table;
  table.scores = Tensor<double>(
      Shape{data.size(), static_cast<std::size_t>(model.cfg.num_classes)});
  table.ids.resize(data.size());
  table.labels = data.labels;
  detail::parallel_over(data.size(), threads, [&](std::size_t i) {
    const Tensor<double> probs =
        aggregate_clip_scores({model_forward(model, data.videos[i])});
    for (std::size_t c = 0; c < probs.numel(); ++c) table.scores.at(i, c) = probs[c];
  });
  char buf[32];
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%05zu", i);
    table.ids[i] = id_prefix + buf;
  }
  table.validate();
  return table;
}

// One run of minibatch SGD.  Train loss and accuracy are accumulated from
// the forward passes made during the epoch, so they describe the model as
// it moved, not a second pass at the end.
inline std::vector<TraceRow> train_loop(ToyModel& model, const LabeledVideos& train,
                                        const LabeledVideos& test, const SGDConfig& cfg,
                                        long threads = 1) {
  cfg.validate();
  if (train.size() == 0) throw std::invalid_argument("train_loop: empty training set");
  for (long lbl : train.labels)
    if (lbl < 0 || lbl >= model.cfg.num_classes)
      throw std::invalid_argument("train_loop: label outside model classes");

  ToyModel velocity = zero_like(model);
  std::mt19937_64 shuffle_rng(cfg.seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  std::vector<TraceRow> trace;
  trace.reserve(static_cast<std::size_t>(cfg.epochs));
  for (long epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    const double lr = cfg.lr_at(epoch);
    double loss_sum = 0;
    long hit = 0;

    for (std::size_t begin = 0; begin < order.size();
         begin += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t end =
          std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch));
      const std::size_t bsz = end - begin;
      std::vector<ToyModel> sample_grads(bsz);
      std::vector<double> sample_loss(bsz, 0.0);
      std::vector<int> sample_hit(bsz, 0);
      detail::parallel_over(bsz, threads, [&](std::size_t k) {
        const std::size_t idx = order[begin + k];
        ModelCache cache;
        const Tensor<double> logits = model_forward_cached(model, train.videos[idx], cache);
        const CrossEntropy ce = cross_entropy(logits, train.labels[idx]);
        sample_loss[k] = ce.loss;
        sample_hit[k] = argmax_class(logits) == train.labels[idx] ? 1 : 0;
        sample_grads[k] = model_backward(model, cache, ce.logit_grad);
      });

      ToyModel batch_grad = zero_like(model);
      for (std::size_t k = 0; k < bsz; ++k) {
        if (!std::isfinite(sample_loss[k]))
          throw TrainingDiverged("training diverged: non-finite loss at epoch " +
                                 std::to_string(epoch));
        loss_sum += sample_loss[k];
        hit += sample_hit[k];
        accumulate_grads(batch_grad, sample_grads[k]);
      }
      auto bs = model_params(batch_grad);
      for (auto& [name, tensor] : bs) scale_inplace(*tensor, 1.0 / static_cast<double>(bsz));
      clip_grad_norm(batch_grad, cfg.grad_clip);
      sgd_step(model, batch_grad, velocity, lr, cfg.momentum);
    }

    TraceRow row;
    row.epoch = epoch;
    row.train_loss = loss_sum / static_cast<double>(train.size());
    row.train_acc = static_cast<double>(hit) / static_cast<double>(train.size());
    row.test_acc = test.size() > 0 ? evaluate_accuracy(model, test, threads) : 0.0;
    if (!std::isfinite(row.train_loss))
      throw TrainingDiverged("training diverged: non-finite epoch loss");
    trace.push_back(row);
  }
  return trace;
}

// Model parameters as one tensor file per parameter plus a small manifest.
inline void save_model(ToyModel& model, const std::string& dir) {
  std::ofstream meta(dir + "/model.txt", std::ios::binary);
  if (!meta) throw std::runtime_error("cannot open model manifest in " + dir);
  meta << "block " << to_string(model.cfg.block) << '\n'
       << "classes " << model.cfg.num_classes << '\n'
       << "feat_channels " << model.cfg.feat_channels << '\n'
       << "stem_kernel " << model.cfg.stem_kernel << '\n'
       << "bottleneck " << model.cfg.bottleneck << '\n';
  if (model.cfg.block == BlockKind::mask_nonlocal)
    meta << "mask " << model.cfg.mask.dt.to_config() << ' ' << model.cfg.mask.dh.to_config()
         << ' ' << model.cfg.mask.dw.to_config() << '\n';
  if (model.cfg.block == BlockKind::relation)
    meta << "relation_radii " << model.cfg.rel_t0 << ' ' << model.cfg.rel_h0 << ' '
         << model.cfg.rel_w0 << ' ' << model.cfg.rel_t1 << ' ' << model.cfg.rel_h1 << ' '
         << model.cfg.rel_w1 << '\n';
  for (auto& [name, tensor] : model_params(model))
    write_tensor(*tensor, dir + "/" + name + ".nlt");
}

}  // namespace nlv
