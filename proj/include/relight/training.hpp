#ifndef RELIGHT_TRAINING_HPP
#define RELIGHT_TRAINING_HPP

#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <thread>
#include <vector>

#include "relight/checkpoint.hpp"
#include "relight/config.hpp"
#include "relight/data.hpp"
#include "relight/losses.hpp"
#include "relight/optim.hpp"
#include "relight/recursion.hpp"

namespace relight {

/// BP-controlled inference: pick N from the histogram, then recurse.
template <typename S>
EnhancementTrace<S> enhance_auto(const Planes<S>& x, const ActNetParams<S>& act,
                                 const BpNetParams<S>& bp,
                                 const RecursionBounds& bounds) {
  const auto factor = bp_forward(brightness_histogram(rgb_to_v(x)), bp, bounds);
  return enhance_recursive(x, act, factor.rounded, bounds.rho_max);
}

struct EpochRecord {
  int epoch = 0;
  int steps = 0;
  double l_exp = 0, l_col = 0, l_tv = 0, l_p = 0, total = 0;
  double val_brightness = 0;  // NaN when there is no held-out data
  double wall_seconds = 0;
};

struct StageReport {
  std::vector<EpochRecord> epochs;
};

/// `step` carries only deterministic fields and is what the reproducibility
/// check compares; `epoch` additionally records wall time.
struct TrainLogs {
  std::ostream* step = nullptr;
  std::ostream* epoch = nullptr;
};

namespace detail {

inline void log_step(std::ostream* os, int step, const char* stage, double l_exp,
                     double l_col, double l_tv, double l_p, double total,
                     double bright) {
  if (!os) return;
  *os << "step=" << step << " stage=" << stage;
  std::ostream& s = *os;
  s.precision(9);
  s << " l_exp=" << l_exp << " l_col=" << l_col << " l_tv=" << l_tv
    << " l_p=" << l_p << " total=" << total << " bright=" << bright << "\n";
}

inline void log_epoch(std::ostream* os, const char* stage, const EpochRecord& r) {
  if (!os) return;
  std::ostream& s = *os;
  s.precision(9);
  s << "epoch=" << r.epoch << " stage=" << stage << " steps=" << r.steps
    << " l_exp=" << r.l_exp << " l_col=" << r.l_col << " l_tv=" << r.l_tv
    << " l_p=" << r.l_p << " total=" << r.total << " val_bright="
    << r.val_brightness << " wall_s=" << r.wall_seconds << "\n";
}

template <typename Fn>
void parallel_for(int n, int threads, Fn&& fn) {
  if (threads <= 0) threads = static_cast<int>(std::thread::hardware_concurrency());
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      for (int i = t; i < n; i += threads) fn(i);
    });
  for (auto& th : pool) th.join();
}

template <typename S>
void add_scaled(std::vector<TensorView<S>>& acc,
                std::vector<TensorView<S>> part, S scale) {
  for (std::size_t i = 0; i < acc.size(); ++i)
    Eigen::Map<Vec<S>>(acc[i].data, acc[i].size()) +=
        scale * Eigen::Map<const Vec<S>>(part[i].data, part[i].size());
}

/// Random crop to `patch` when larger, then pad to a multiple of 4.
template <typename S>
Planes<S> crop_or_pad(const Planes<S>& img, int patch, Rng& rng) {
  Planes<S> out = img;
  if (img.height() > patch || img.width() > patch) {
    const Index ch = std::min<Index>(patch, img.height());
    const Index cw = std::min<Index>(patch, img.width());
    const Index oy = static_cast<Index>(rng.uniform_int(0, img.height() - ch));
    const Index ox = static_cast<Index>(rng.uniform_int(0, img.width() - cw));
    out = Planes<S>(ch, cw, img.channels());
    for (Index c = 0; c < img.channels(); ++c)
      out.plane(c) = img.plane(c).block(oy, ox, ch, cw);
  }
  return pad_to_multiple(out, 4);
}

inline int steps_per_epoch(std::size_t records, int batch) {
  return static_cast<int>((records + batch - 1) / batch);
}

template <typename S>
void check_finite(double total, int step, const char* stage, double l_exp,
                  double l_col, double l_tv, double l_p) {
  if (std::isfinite(total)) return;
  std::ostringstream os;
  os << "non-finite loss in stage " << stage << " at step " << step
     << " (l_exp=" << l_exp << " l_col=" << l_col << " l_tv=" << l_tv
     << " l_p=" << l_p << ")";
  throw NumericError(os.str());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Stage (a): pre-train ACT-Net on Level_4 images with the recursion depth
// pinned to one, minimizing w_exp*L_exp + w_col*L_col + w_tv*L_tv on E_1.
// ---------------------------------------------------------------------------
template <typename S>
Checkpoint<S> pretrain_act(const DatasetManifest& manifest,
                           const ImageLoader<S>& loader,
                           const TrainingConfig& cfg, TrainLogs logs = {},
                           std::optional<Checkpoint<S>> resume = {},
                           StageReport* report = nullptr) {
  cfg.validate();
  const auto train = manifest.select({Level::kLevel4}, Split::kTrain);
  if (train.empty())
    throw InputError("pretrain_act: manifest has no Level_4 training records");
  const auto held_out = manifest.select({Level::kLevel4}, Split::kTest);

  ActNetParams<S> act;
  int epoch0 = 0;
  if (resume) {
    if (resume->stage != TrainStage::kPretrainAct)
      throw ContractError("pretrain_act: resume checkpoint is not stage pretrain_act");
    act = resume->act;
    epoch0 = resume->epoch;
  } else {
    act = ActNetParams<S>::init(cfg.seed);
  }

  auto views = tensors(act);
  Adam<S> adam(cfg.learning_rate, views);
  Rng rng(cfg.seed ^ 0xac7a11u);

  const int epochs = cfg.stage_epochs(cfg.epochs_act);
  const int spe = detail::steps_per_epoch(train.size(), cfg.batch_size);
  const int batch = cfg.batch_size;

  ActNetParams<S> grad_total = ActNetParams<S>::zeros_like();
  auto grad_views = tensors(grad_total);
  std::vector<ActNetParams<S>> grads(batch, ActNetParams<S>::zeros_like());

  int step = 0;
  for (int epoch = epoch0 + 1; epoch <= epoch0 + epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    EpochRecord er;
    er.epoch = epoch;
    er.steps = spe;
    for (int s = 0; s < spe; ++s) {
      ++step;
      auto batch_imgs = sample_batch(manifest, {Level::kLevel4}, batch,
                                     cfg.patch_size, rng, loader);
      std::vector<double> lexp(batch), lcol(batch), ltv(batch), bright(batch);
      detail::parallel_for(batch, cfg.threads, [&](int i) {
        auto gv = tensors(grads[i]);
        zero_all(gv);
        const Planes<S>& x = batch_imgs[i];
        ActWorkspace<S> ws;
        const Planes<S> m = act_forward(x, act, &ws);
        const Planes<S> e1 = correction_step(x, m);
        lexp[i] = exposure_loss(e1, cfg.exposure, cfg.exposure_channel);
        lcol[i] = color_constancy_loss(e1);
        ltv[i] = smoothness_loss(std::vector<Planes<S>>{m});
        bright[i] = mean_brightness(e1);
        Planes<S> d_e1 = Planes<S>::zero(x.height(), x.width(), 3);
        exposure_loss_backward(e1, cfg.exposure, cfg.exposure_channel,
                               S(cfg.weights.w_exp), d_e1);
        color_constancy_loss_backward(e1, S(cfg.weights.w_col), d_e1);
        Planes<S> d_m = Planes<S>::zero(x.height(), x.width(), 3);
        correction_step_backward(x, m, d_e1, static_cast<Planes<S>*>(nullptr), &d_m);
        smoothness_loss_backward_one(m, S(cfg.weights.w_tv), d_m);
        act_backward(act, ws, d_m, grads[i]);
      });
      zero_all(grad_views);
      for (int i = 0; i < batch; ++i)
        detail::add_scaled(grad_views, tensors(grads[i]), S(1) / S(batch));
      clip_grad_norm(grad_views, cfg.clip_norm);
      adam.step(views, grad_views);

      double m_exp = 0, m_col = 0, m_tv = 0, m_b = 0;
      for (int i = 0; i < batch; ++i) {
        m_exp += lexp[i] / batch;
        m_col += lcol[i] / batch;
        m_tv += ltv[i] / batch;
        m_b += bright[i] / batch;
      }
      const double total = total_loss(m_exp, m_col, m_tv, 0.0, cfg.weights);
      detail::check_finite<S>(total, step, "act", m_exp, m_col, m_tv, 0.0);
      detail::log_step(logs.step, step, "act", m_exp, m_col, m_tv, 0.0, total, m_b);
      er.l_exp += m_exp / spe;
      er.l_col += m_col / spe;
      er.l_tv += m_tv / spe;
      er.total += total / spe;
    }
    er.val_brightness = std::numeric_limits<double>::quiet_NaN();
    if (!held_out.empty()) {
      double sum = 0;
      for (const auto* rec : held_out) {
        auto img = loader(rec->path);
        if (!img) throw InputError("pretrain_act: cannot load " + rec->path);
        sum += static_cast<double>(mean_brightness(enhance_once(*img, act).first));
      }
      er.val_brightness = sum / held_out.size();
    }
    er.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    detail::log_epoch(logs.epoch, "act", er);
    if (report) report->epochs.push_back(er);
  }

  Checkpoint<S> ckpt;
  ckpt.act = std::move(act);
  ckpt.stage = TrainStage::kPretrainAct;
  ckpt.epoch = epoch0 + epochs;
  ckpt.config = cfg;
  return ckpt;
}

// ---------------------------------------------------------------------------
// Stage (b): freeze ACT-Net, label every training image with the number of
// enhancement passes needed to reach the brightness threshold, then fit
// BP-Net to those labels with an L1 loss.
// ---------------------------------------------------------------------------

template <typename S>
std::vector<int> pseudo_labels_for(const std::vector<const SampleRecord*>& records,
                                   const ImageLoader<S>& loader,
                                   const ActNetParams<S>& act,
                                   const TrainingConfig& cfg) {
  std::vector<int> labels(records.size());
  detail::parallel_for(static_cast<int>(records.size()), cfg.threads, [&](int i) {
    auto img = loader(records[i]->path);
    if (!img) throw InputError("pseudo label: cannot load " + records[i]->path);
    labels[i] =
        generate_pseudo_label(*img, act, cfg.pseudo_threshold, cfg.bounds.rho_max);
  });
  return labels;
}

template <typename S>
Checkpoint<S> pretrain_bp(const DatasetManifest& manifest,
                          const ImageLoader<S>& loader,
                          const Checkpoint<S>& act_ckpt,
                          const TrainingConfig& cfg, TrainLogs logs = {},
                          std::optional<Checkpoint<S>> resume = {},
                          StageReport* report = nullptr) {
  cfg.validate();
  if (!resume && act_ckpt.stage != TrainStage::kPretrainAct)
    throw ContractError("pretrain_bp: expected a pretrain_act checkpoint");
  const std::vector<Level> all = {Level::kLevel1, Level::kLevel2, Level::kLevel3,
                                  Level::kLevel4};
  const auto train = manifest.select(all, Split::kTrain);
  if (train.empty()) throw InputError("pretrain_bp: manifest has no training records");

  const ActNetParams<S>& act =
      resume ? resume->act : act_ckpt.act;  // frozen throughout

  BpNetParams<S> bp;
  int epoch0 = 0;
  if (resume) {
    if (resume->stage != TrainStage::kPretrainBp || !resume->bp)
      throw ContractError("pretrain_bp: resume checkpoint is not stage pretrain_bp");
    bp = *resume->bp;
    epoch0 = resume->epoch;
  } else {
    bp = BpNetParams<S>::init(cfg.seed + 1);
  }

  const std::vector<int> labels = pseudo_labels_for(train, loader, act, cfg);
  std::vector<Vec<S>> hists(train.size());
  detail::parallel_for(static_cast<int>(train.size()), cfg.threads, [&](int i) {
    auto img = loader(train[i]->path);
    if (!img) throw InputError("pretrain_bp: cannot load " + train[i]->path);
    hists[i] = brightness_histogram(rgb_to_v(*img));
  });

  auto views = tensors(bp);
  Adam<S> adam(cfg.learning_rate, views);
  Rng rng(cfg.seed ^ 0xb97e7u);
  const int epochs = cfg.stage_epochs(cfg.epochs_bp);
  const int spe = detail::steps_per_epoch(train.size(), cfg.batch_size);
  const int batch = cfg.batch_size;

  BpNetParams<S> grad = BpNetParams<S>::zeros_like();
  auto grad_views = tensors(grad);

  int step = 0;
  for (int epoch = epoch0 + 1; epoch <= epoch0 + epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    EpochRecord er;
    er.epoch = epoch;
    er.steps = spe;
    for (int s = 0; s < spe; ++s) {
      ++step;
      zero_all(grad_views);
      double m_p = 0, m_b = 0;
      for (int i = 0; i < batch; ++i) {
        const auto idx = static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<std::int64_t>(train.size()) - 1));
        BpWorkspace<S> ws;
        const auto factor = bp_forward(hists[idx], bp, cfg.bounds, &ws);
        const S loss = perception_loss(factor, labels[idx]);
        const S d_value = S(detail::sign_of(factor.value - S(labels[idx]))) / S(batch);
        bp_backward(bp, ws, cfg.bounds, d_value, grad);
        m_p += static_cast<double>(loss) / batch;
        m_b += train[idx]->mean_brightness / batch;
      }
      clip_grad_norm(grad_views, cfg.clip_norm);
      adam.step(views, grad_views);
      detail::check_finite<S>(m_p, step, "bp", 0, 0, 0, m_p);
      detail::log_step(logs.step, step, "bp", 0.0, 0.0, 0.0, m_p, m_p, m_b);
      er.l_p += m_p / spe;
      er.total += m_p / spe;
    }
    // Validation column doubles as the training-set MAE for this stage.
    double mae = 0;
    for (std::size_t i = 0; i < train.size(); ++i) {
      const auto factor = bp_forward(hists[i], bp, cfg.bounds);
      mae += std::abs(static_cast<double>(factor.value) - labels[i]) / train.size();
    }
    er.val_brightness = mae;
    er.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    detail::log_epoch(logs.epoch, "bp", er);
    if (report) report->epochs.push_back(er);
  }

  Checkpoint<S> ckpt;
  ckpt.act = act;
  ckpt.bp = std::move(bp);
  ckpt.stage = TrainStage::kPretrainBp;
  ckpt.epoch = epoch0 + epochs;
  ckpt.config = cfg;
  return ckpt;
}

// ---------------------------------------------------------------------------
// Stage (c): joint fine-tuning. Per sample the recursion depth is the rounded
// BP-Net output (no gradient through the rounding); the unrolled chain is
// optimized with the full weighted loss, and pseudo-labels are regenerated
// each epoch from the current (detached) ACT-Net.
// ---------------------------------------------------------------------------
template <typename S>
Checkpoint<S> finetune_joint(const DatasetManifest& manifest,
                             const ImageLoader<S>& loader,
                             const Checkpoint<S>& ckpt_in,
                             const TrainingConfig& cfg, TrainLogs logs = {},
                             std::optional<Checkpoint<S>> resume = {},
                             StageReport* report = nullptr) {
  cfg.validate();
  if (!resume && (ckpt_in.stage != TrainStage::kPretrainBp || !ckpt_in.bp))
    throw ContractError("finetune_joint: expected a pretrain_bp checkpoint");
  if (resume && (resume->stage != TrainStage::kFinetuned || !resume->bp))
    throw ContractError("finetune_joint: resume checkpoint is not stage finetuned");
  const std::vector<Level> all = {Level::kLevel1, Level::kLevel2, Level::kLevel3,
                                  Level::kLevel4};
  const auto train = manifest.select(all, Split::kTrain);
  if (train.empty()) throw InputError("finetune_joint: manifest has no training records");
  const auto held_out = manifest.select(all, Split::kTest);

  ActNetParams<S> act = resume ? resume->act : ckpt_in.act;
  BpNetParams<S> bp = resume ? *resume->bp : *ckpt_in.bp;
  const int epoch0 = resume ? resume->epoch : 0;

  auto act_views = tensors(act);
  auto bp_views = tensors(bp);
  std::vector<TensorView<S>> views = act_views;
  views.insert(views.end(), bp_views.begin(), bp_views.end());
  Adam<S> adam(cfg.learning_rate, views);
  Rng rng(cfg.seed ^ 0x301f7u);

  const int epochs = cfg.stage_epochs(cfg.epochs_joint);
  const int spe = detail::steps_per_epoch(train.size(), cfg.batch_size);
  const int batch = cfg.batch_size;

  std::vector<ActNetParams<S>> act_grads(batch, ActNetParams<S>::zeros_like());
  std::vector<BpNetParams<S>> bp_grads(batch, BpNetParams<S>::zeros_like());
  ActNetParams<S> act_grad_total = ActNetParams<S>::zeros_like();
  BpNetParams<S> bp_grad_total = BpNetParams<S>::zeros_like();
  auto act_gv = tensors(act_grad_total);
  auto bp_gv = tensors(bp_grad_total);
  std::vector<TensorView<S>> grad_views = act_gv;
  grad_views.insert(grad_views.end(), bp_gv.begin(), bp_gv.end());

  int step = 0;
  for (int epoch = epoch0 + 1; epoch <= epoch0 + epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    // Detached copy of the current enhancer defines this epoch's labels.
    const std::vector<int> labels = pseudo_labels_for(train, loader, act, cfg);

    EpochRecord er;
    er.epoch = epoch;
    er.steps = spe;
    for (int s = 0; s < spe; ++s) {
      ++step;
      std::vector<std::size_t> idx(batch);
      std::vector<Planes<S>> patches(batch);
      for (int i = 0; i < batch; ++i) {
        idx[i] = static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<std::int64_t>(train.size()) - 1));
        auto img = loader(train[idx[i]]->path);
        if (!img) throw InputError("finetune_joint: cannot load " + train[idx[i]]->path);
        patches[i] = detail::crop_or_pad(*img, cfg.patch_size, rng);
      }
      std::vector<double> lexp(batch), lcol(batch), ltv(batch), lp(batch),
          bright(batch);
      detail::parallel_for(batch, cfg.threads, [&](int i) {
        auto agv = tensors(act_grads[i]);
        auto bgv = tensors(bp_grads[i]);
        zero_all(agv);
        zero_all(bgv);
        const Planes<S>& x = patches[i];
        BpWorkspace<S> bpws;
        const auto factor =
            bp_forward(brightness_histogram(rgb_to_v(x)), bp, cfg.bounds, &bpws);
        const int n = factor.rounded;

        std::vector<Planes<S>> images;
        std::vector<Planes<S>> maps;
        std::vector<ActWorkspace<S>> wss(n);
        images.reserve(n + 1);
        maps.reserve(n);
        images.push_back(x);
        for (int it = 0; it < n; ++it) {
          maps.push_back(act_forward(images.back(), act, &wss[it]));
          images.push_back(correction_step(images.back(), maps.back()));
        }
        const Planes<S>& e_n = images.back();
        lexp[i] = exposure_loss(e_n, cfg.exposure, cfg.exposure_channel);
        lcol[i] = color_constancy_loss(e_n);
        ltv[i] = smoothness_loss(maps);
        lp[i] = perception_loss(factor, labels[idx[i]]);
        bright[i] = mean_brightness(e_n);

        Planes<S> d_e = Planes<S>::zero(x.height(), x.width(), 3);
        exposure_loss_backward(e_n, cfg.exposure, cfg.exposure_channel,
                               S(cfg.weights.w_exp), d_e);
        color_constancy_loss_backward(e_n, S(cfg.weights.w_col), d_e);
        for (int it = n - 1; it >= 0; --it) {
          Planes<S> d_prev = Planes<S>::zero(x.height(), x.width(), 3);
          Planes<S> d_m = Planes<S>::zero(x.height(), x.width(), 3);
          correction_step_backward(images[it], maps[it], d_e, &d_prev, &d_m);
          smoothness_loss_backward_one(maps[it], S(cfg.weights.w_tv / n), d_m);
          act_backward(act, wss[it], d_m, act_grads[i], &d_prev);
          d_e = std::move(d_prev);
        }
        const S d_value = S(cfg.weights.w_p) *
                          S(detail::sign_of(factor.value - S(labels[idx[i]])));
        bp_backward(bp, bpws, cfg.bounds, d_value, bp_grads[i]);
      });
      zero_all(grad_views);
      for (int i = 0; i < batch; ++i) {
        detail::add_scaled(act_gv, tensors(act_grads[i]), S(1) / S(batch));
        detail::add_scaled(bp_gv, tensors(bp_grads[i]), S(1) / S(batch));
      }
      clip_grad_norm(grad_views, cfg.clip_norm);
      adam.step(views, grad_views);

      double m_exp = 0, m_col = 0, m_tv = 0, m_p = 0, m_b = 0;
      for (int i = 0; i < batch; ++i) {
        m_exp += lexp[i] / batch;
        m_col += lcol[i] / batch;
        m_tv += ltv[i] / batch;
        m_p += lp[i] / batch;
        m_b += bright[i] / batch;
      }
      const double total = total_loss(m_exp, m_col, m_tv, m_p, cfg.weights);
      detail::check_finite<S>(total, step, "joint", m_exp, m_col, m_tv, m_p);
      detail::log_step(logs.step, step, "joint", m_exp, m_col, m_tv, m_p, total, m_b);
      er.l_exp += m_exp / spe;
      er.l_col += m_col / spe;
      er.l_tv += m_tv / spe;
      er.l_p += m_p / spe;
      er.total += total / spe;
    }
    er.val_brightness = std::numeric_limits<double>::quiet_NaN();
    if (!held_out.empty()) {
      double sum = 0;
      for (const auto* rec : held_out) {
        auto img = loader(rec->path);
        if (!img) throw InputError("finetune_joint: cannot load " + rec->path);
        sum += static_cast<double>(
            mean_brightness(enhance_auto(*img, act, bp, cfg.bounds).images.back()));
      }
      er.val_brightness = sum / held_out.size();
    }
    er.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    detail::log_epoch(logs.epoch, "joint", er);
    if (report) report->epochs.push_back(er);
  }

  Checkpoint<S> ckpt;
  ckpt.act = std::move(act);
  ckpt.bp = std::move(bp);
  ckpt.stage = TrainStage::kFinetuned;
  ckpt.epoch = epoch0 + epochs;
  ckpt.config = cfg;
  return ckpt;
}

}  // namespace relight

#endif  // RELIGHT_TRAINING_HPP
