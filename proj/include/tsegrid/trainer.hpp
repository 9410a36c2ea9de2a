// Copyright 2026 tsegrid authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef TSEGRID_TRAINER_HPP_
#define TSEGRID_TRAINER_HPP_

#include <chrono>
#include <cmath>
#include <limits>
#include <memory>
#include <mutex>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "tsegrid/checkpoint.hpp"
#include "tsegrid/objective.hpp"
#include "tsegrid/separator.hpp"

namespace tsegrid {

// ---------------------------------------------------------------------------
// Adam with bias correction. Gradients live in Param::grad; a non-finite
// gradient aborts the run naming the parameter.
// ---------------------------------------------------------------------------
template <typename T>
struct Adam {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::vector<Tensor<T>> m, v;
  int64_t t = 0;

  void attach(const ParamList<T>& params) {
    m.clear();
    v.clear();
    for (const Param<T>* p : params) {
      m.emplace_back(p->value.shape);
      v.emplace_back(p->value.shape);
    }
    t = 0;
  }

  void step(const ParamList<T>& params, double lr) {
    if (m.size() != params.size())
      throw ConfigError("adam: state not attached to this parameter set");
    ++t;
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (size_t pi = 0; pi < params.size(); ++pi) {
      Param<T>& p = *params[pi];
      for (size_t i = 0; i < p.value.size(); ++i) {
        double gd = static_cast<double>(p.grad[i]);
        if (!std::isfinite(gd))
          throw NumericError("non-finite gradient in parameter " + p.name);
        double md = beta1 * static_cast<double>(m[pi][i]) + (1.0 - beta1) * gd;
        double vd =
            beta2 * static_cast<double>(v[pi][i]) + (1.0 - beta2) * gd * gd;
        m[pi][i] = static_cast<T>(md);
        v[pi][i] = static_cast<T>(vd);
        double update = lr * (md / bc1) / (std::sqrt(vd / bc2) + eps);
        p.value[i] = static_cast<T>(static_cast<double>(p.value[i]) - update);
      }
    }
  }
};

// global L2 clipping; returns the pre-clip norm
template <typename T>
double clip_grad_norm(const ParamList<T>& params, double max_norm) {
  double sq = 0.0;
  for (const Param<T>* p : params)
    for (size_t i = 0; i < p->grad.size(); ++i) {
      double gd = static_cast<double>(p->grad[i]);
      sq += gd * gd;
    }
  double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    double s = max_norm / norm;
    for (Param<T>* p : params)
      for (size_t i = 0; i < p->grad.size(); ++i)
        p->grad[i] = static_cast<T>(static_cast<double>(p->grad[i]) * s);
  }
  return norm;
}

// ---------------------------------------------------------------------------
// Plateau schedule: "improvement" is a drop of more than improve_delta in
// the tracked dev loss. The learning rate halves after plateau_patience
// consecutive non-improving epochs (counter restarts after each halving);
// training stops after stop_patience consecutive non-improving epochs.
// ---------------------------------------------------------------------------
struct PlateauScheduler {
  double lr;
  double improve_delta;
  int plateau_patience;
  int stop_patience;
  double best = std::numeric_limits<double>::infinity();
  int since_improve = 0;
  int since_halve = 0;

  PlateauScheduler(double lr0, double delta, int plateau, int stop)
      : lr(lr0), improve_delta(delta), plateau_patience(plateau),
        stop_patience(stop) {
    if (plateau >= stop)
      throw ConfigError("scheduler: plateau_patience must be < stop_patience");
  }

  struct Decision {
    bool improved = false;
    bool halved = false;
    bool stop = false;
    double lr = 0.0;
  };

  Decision observe(double val_loss) {
    Decision d;
    if (val_loss < best - improve_delta) {
      best = val_loss;
      since_improve = 0;
      since_halve = 0;
      d.improved = true;
    } else {
      ++since_improve;
      ++since_halve;
      if (since_halve >= plateau_patience) {
        lr *= 0.5;
        since_halve = 0;
        d.halved = true;
      }
      if (since_improve >= stop_patience) d.stop = true;
    }
    d.lr = lr;
    return d;
  }
};

// ---------------------------------------------------------------------------
// training protocol
// ---------------------------------------------------------------------------
struct TrainConfig {
  ModelConfig model;
  size_t batch_size = 8;
  double lr_init = 1e-3;
  int plateau_patience = 3;
  int stop_patience = 10;
  double improve_delta = 1e-4;
  double train_missing_rate = 0.0;
  size_t max_epochs = 40;
  uint64_t seed = 7;
  double clip_norm = 5.0;
  size_t jobs = 1;
  size_t mask_block = 10;

  void validate() const {
    model.validate();
    if (train_missing_rate < 0.0 || train_missing_rate > 1.0)
      throw ConfigError("train: train_missing_rate outside [0,1]");
    if (plateau_patience >= stop_patience)
      throw ConfigError("train: plateau_patience must be < stop_patience");
    if (batch_size < 1 || max_epochs < 1)
      throw ConfigError("train: batch_size and max_epochs must be >= 1");
  }
};

struct EpochRecord {
  size_t epoch;  // 1-based
  double train_loss, val_loss, lr, seconds;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;

  std::string to_csv() const {
    std::ostringstream os;
    os << "epoch,train_loss,val_loss,lr,seconds\n";
    for (const EpochRecord& r : epochs)
      os << r.epoch << "," << format_fixed(r.train_loss, 6) << ","
         << format_fixed(r.val_loss, 6) << "," << format_fixed(r.lr, 8) << ","
         << format_fixed(r.seconds, 3) << "\n";
    return os.str();
  }
};

// Post-hoc consistency check of the recorded schedule against the plateau
// rule; throws on violation.
inline void validate_trainlog(const TrainLog& log, double lr_init,
                              double improve_delta, int plateau_patience) {
  double best = std::numeric_limits<double>::infinity();
  double lr = lr_init;
  int since_halve = 0;
  for (size_t i = 0; i < log.epochs.size(); ++i) {
    const EpochRecord& r = log.epochs[i];
    if (i > 0 && r.lr > log.epochs[i - 1].lr + 1e-12)
      throw NumericError("trainlog: learning rate increased at epoch " +
                         std::to_string(r.epoch));
    if (r.val_loss < best - improve_delta) {
      best = r.val_loss;
      since_halve = 0;
    } else {
      ++since_halve;
      if (since_halve >= plateau_patience) {
        lr *= 0.5;
        since_halve = 0;
      }
    }
    if (std::abs(r.lr - lr) > 1e-12 * std::max(1.0, lr))
      throw NumericError("trainlog: lr " + format_fixed(r.lr, 8) +
                         " at epoch " + std::to_string(r.epoch) +
                         " violates the plateau rule (expected " +
                         format_fixed(lr, 8) + ")");
  }
}

struct TrainResult {
  TrainLog log;
  size_t best_epoch = 0;       // 1-based
  double best_val = std::numeric_limits<double>::infinity();
  bool early_stopped = false;
  size_t epochs_run = 0;
};

namespace traindet {

template <typename T>
double scene_pass(Model<T>& model, const Scene<T>& scene,
                  const MissingMask* mask, bool with_grad) {
  Graph<T> g;
  g.grad_enabled = with_grad;
  Var<T> est = model.forward_graph(g, scene, mask);
  Var<T> ref = g.constant(Tensor<T>({scene.target.size()}, scene.target));
  Var<T> mix = g.constant(Tensor<T>({scene.mixture.size()}, scene.mixture));
  Var<T> loss = loss_sisdr_se_mc(g, est, ref, mix);
  double value = static_cast<double>(loss.value()[0]);
  if (with_grad) {
    g.backward(loss);
    g.flush_grads();
  }
  return value;
}

}  // namespace traindet

// Runs the full protocol on pre-loaded splits. The model is (re)initialized
// from tc.seed, so (config, seed) fully determines the result. Best-dev
// parameters are retained and restored into the model before returning.
template <typename T>
TrainResult train(Model<T>& model, const TrainConfig& tc,
                  const std::vector<Scene<T>>& train_scenes,
                  const std::vector<Scene<T>>& dev_scenes,
                  std::ostream* progress = nullptr) {
  tc.validate();
  if (train_scenes.empty() || dev_scenes.empty())
    throw InputError("train: empty train or dev split");
  model.init(tc.seed);
  ParamList<T> params = model.parameters();
  Adam<T> adam;
  adam.attach(params);
  PlateauScheduler sched(tc.lr_init, tc.improve_delta, tc.plateau_patience,
                         tc.stop_patience);

  auto make_train_mask = [&](size_t epoch, const Scene<T>& sc) {
    return missing_mask(sc.lip_frames.shape[1], tc.train_missing_rate,
                        tc.mask_block,
                        mix_seed(tc.seed, "train-mask", epoch, sc.id));
  };
  // dev masks are fixed across epochs so the early-stop signal is stable
  auto make_dev_mask = [&](const Scene<T>& sc) {
    return missing_mask(sc.lip_frames.shape[1], tc.train_missing_rate,
                        tc.mask_block, mix_seed(tc.seed, "dev-mask", sc.id));
  };
  const bool use_masks = tc.train_missing_rate > 0.0;

  TrainResult result;
  std::vector<Tensor<T>> best_params;
  double initial_loss = 0.0;
  int diverged_epochs = 0;

  std::vector<size_t> order(train_scenes.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (size_t epoch = 1; epoch <= tc.max_epochs; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();
    // deterministic shuffle
    Rng shuffle_rng(mix_seed(tc.seed, "shuffle", epoch));
    for (size_t i = order.size(); i > 1; --i) {
      size_t j = shuffle_rng.uniform_int(i);
      std::swap(order[i - 1], order[j]);
    }

    double train_loss_acc = 0.0;
    for (size_t start = 0; start < order.size(); start += tc.batch_size) {
      size_t bsz = std::min(tc.batch_size, order.size() - start);
      zero_grads(params);
      std::vector<double> losses(bsz, 0.0);
      size_t workers = std::min<size_t>(tc.jobs > 0 ? tc.jobs : 1, bsz);
      if (workers <= 1) {
        for (size_t b = 0; b < bsz; ++b) {
          const Scene<T>& sc = train_scenes[order[start + b]];
          MissingMask m;
          if (use_masks) m = make_train_mask(epoch, sc);
          losses[b] = traindet::scene_pass(model, sc,
                                           use_masks ? &m : nullptr, true);
        }
      } else {
        // independent graphs per scene; gradients land in the shared
        // accumulators only under the per-batch zero/flush discipline, and
        // losses are reduced in batch order, so the result is independent of
        // the worker count
        std::vector<std::unique_ptr<Graph<T>>> graphs(bsz);
        std::vector<std::thread> pool;
        std::vector<size_t> next(1, 0);
        std::mutex mu;
        auto work = [&]() {
          while (true) {
            size_t b;
            {
              std::lock_guard<std::mutex> lock(mu);
              if (next[0] >= bsz) return;
              b = next[0]++;
            }
            const Scene<T>& sc = train_scenes[order[start + b]];
            MissingMask m;
            if (use_masks) m = make_train_mask(epoch, sc);
            auto g = std::make_unique<Graph<T>>();
            Var<T> est =
                model.forward_graph(*g, sc, use_masks ? &m : nullptr);
            Var<T> ref =
                g->constant(Tensor<T>({sc.target.size()}, sc.target));
            Var<T> mixv =
                g->constant(Tensor<T>({sc.mixture.size()}, sc.mixture));
            Var<T> loss = loss_sisdr_se_mc(*g, est, ref, mixv);
            losses[b] = static_cast<double>(loss.value()[0]);
            g->backward(loss);
            graphs[b] = std::move(g);
          }
        };
        for (size_t w = 0; w < workers; ++w) pool.emplace_back(work);
        for (std::thread& th : pool) th.join();
        for (size_t b = 0; b < bsz; ++b) graphs[b]->flush_grads();
      }
      for (double l : losses) train_loss_acc += l;
      double inv = 1.0 / static_cast<double>(bsz);
      for (Param<T>* p : params)
        for (size_t i = 0; i < p->grad.size(); ++i)
          p->grad[i] = static_cast<T>(static_cast<double>(p->grad[i]) * inv);
      clip_grad_norm(params, tc.clip_norm);
      adam.step(params, sched.lr);
    }
    double train_loss = train_loss_acc / static_cast<double>(order.size());

    double val_acc = 0.0;
    for (const Scene<T>& sc : dev_scenes) {
      MissingMask m;
      if (use_masks) m = make_dev_mask(sc);
      val_acc += traindet::scene_pass(model, sc, use_masks ? &m : nullptr,
                                      false);
    }
    double val_loss = val_acc / static_cast<double>(dev_scenes.size());

    PlateauScheduler::Decision d = sched.observe(val_loss);
    double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    // the recorded lr is the one the *next* epoch will train with, which is
    // how the plateau rule manifests in the log
    result.log.epochs.push_back({epoch, train_loss, val_loss, d.lr, seconds});
    if (progress)
      (*progress) << "epoch " << epoch << " train " << format_fixed(train_loss, 4)
                  << " dev " << format_fixed(val_loss, 4) << " lr "
                  << format_fixed(d.lr, 6) << " (" << format_fixed(seconds, 1)
                  << "s)" << std::endl;
    result.epochs_run = epoch;

    if (d.improved) {
      result.best_epoch = epoch;
      result.best_val = val_loss;
      best_params.clear();
      for (Param<T>* p : params) best_params.push_back(p->value);
    }

    if (epoch == 1) initial_loss = std::abs(train_loss);
    if (epoch > 1 && initial_loss > 0.0 &&
        train_loss > 10.0 * initial_loss) {
      if (++diverged_epochs >= 3)
        throw NumericError("training diverged: loss " +
                           format_fixed(train_loss, 3) + " vs initial " +
                           format_fixed(initial_loss, 3) +
                           " for 3 consecutive epochs");
    } else {
      diverged_epochs = 0;
    }

    if (d.stop) {
      result.early_stopped = true;
      break;
    }
  }

  if (!best_params.empty())
    for (size_t i = 0; i < params.size(); ++i)
      params[i]->value = best_params[i];
  return result;
}

// ---------------------------------------------------------------------------
// evaluation: mean SI-SNR / STOI over a split at a given test missing rate
// ---------------------------------------------------------------------------
struct EvalRow {
  std::string name;
  double si_snr = 0.0;
  double stoi = 0.0;
};

template <typename T>
EvalRow evaluate_model(Model<T>& model, const std::vector<Scene<T>>& scenes,
                       double test_missing_rate, uint64_t seed,
                       size_t mask_block = 10) {
  if (scenes.empty()) throw InputError("evaluate: empty split");
  EvalRow row;
  row.name = model.cfg.cues_label();
  for (const Scene<T>& sc : scenes) {
    MissingMask m;
    const MissingMask* mp = nullptr;
    if (test_missing_rate > 0.0) {
      m = missing_mask(sc.lip_frames.shape[1], test_missing_rate, mask_block,
                       mix_seed(seed, "test-mask", sc.id));
      mp = &m;
    }
    std::vector<T> est = model.forward(sc, mp);
    MetricResult mr = evaluate_scene(est, sc);
    row.si_snr += mr.si_snr;
    row.stoi += mr.stoi;
  }
  row.si_snr /= static_cast<double>(scenes.size());
  row.stoi /= static_cast<double>(scenes.size());
  return row;
}

// the unprocessed-mixture row every report starts with
template <typename T>
EvalRow mixture_baseline(const std::vector<Scene<T>>& scenes) {
  if (scenes.empty()) throw InputError("evaluate: empty split");
  EvalRow row;
  row.name = "Mix";
  for (const Scene<T>& sc : scenes) {
    MetricResult mr = evaluate_scene(sc.mixture, sc);
    row.si_snr += mr.si_snr;
    row.stoi += mr.stoi;
  }
  row.si_snr /= static_cast<double>(scenes.size());
  row.stoi /= static_cast<double>(scenes.size());
  return row;
}

}  // namespace tsegrid

#endif  // TSEGRID_TRAINER_HPP_
