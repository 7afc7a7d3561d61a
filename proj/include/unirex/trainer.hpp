#pragma once
//------------------------------------------------------------------------------
//
//   Copyright 2026 The Unirex Authors
//
//   Licensed under the Apache License, Version 2.0 (the "License");
//   you may not use this file except in compliance with the License.
//   You may obtain a copy of the License at
//
//       http://www.apache.org/licenses/LICENSE-2.0
//
//   Unless required by applicable law or agreed to in writing, software
//   distributed under the License is distributed on an "AS IS" BASIS,
//   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
//   See the License for the specific language governing permissions and
//   limitations under the License.
//
//------------------------------------------------------------------------------

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "unirex/bundle.hpp"
#include "unirex/data_model.hpp"
#include "unirex/metrics.hpp"
#include "unirex/objectives.hpp"
#include "unirex/random.hpp"

namespace unirex {

struct TrainConfig
{
  int           batch_size    = 32;
  double        beta          = 2.0;
  double        lr            = 2e-5;
  int           max_epochs    = 10;
  int           patience      = 5;
  std::uint64_t seed          = 0;
  double        gamma         = 100.0;
  double        max_grad_norm = 1.0;  ///< 0 disables clipping
  TaskMetric    task_metric   = TaskMetric::accuracy;
  LossConfig    loss;

  void validate() const
  {
    if (batch_size < 1)
    {
      throw ValidationError("batch_size must be >= 1");
    }
    if (!(beta > 1.0))
    {
      throw ValidationError("beta must be > 1");
    }
    if (!(lr > 0.0) || !std::isfinite(lr))
    {
      throw ValidationError("learning rate must be positive");
    }
    if (max_epochs < 0 || patience < 1)
    {
      throw ValidationError("max_epochs must be >= 0 and patience >= 1");
    }
    if (max_epochs > 0 && patience > max_epochs)
    {
      throw ValidationError("patience must not exceed max_epochs");
    }
    if (!(gamma > 0.0 && gamma <= 100.0))
    {
      throw ValidationError("gamma must lie in (0, 100]");
    }
    if (!(max_grad_norm >= 0.0))
    {
      throw ValidationError("max_grad_norm must be non-negative");
    }
    loss.validate();
  }

  int gold_per_batch() const
  {
    return std::max(1, static_cast<int>(std::floor(static_cast<double>(batch_size) / beta)));
  }
};

// ---------------------------------------------------------------------------
// Gold-aware batching
// ---------------------------------------------------------------------------

struct Batch
{
  std::vector<std::size_t> gold;      ///< dataset indices receiving the plausibility loss
  std::vector<std::size_t> non_gold;

  std::size_t size() const noexcept
  {
    return gold.size() + non_gold.size();
  }
};

/// Epoch-wise batches over the train split. Non-gold instances are visited
/// once per epoch; each batch tops up with gold instances drawn without
/// replacement inside the batch. A gold subset covering the whole train split
/// yields ordinary shuffled batches.
class GoldBatchIterator
{
public:
  GoldBatchIterator(Dataset const &train, GoldSubset const &gold, TrainConfig const &cfg, std::uint64_t seed)
    : batch_size_(static_cast<std::size_t>(cfg.batch_size))
    , b_gold_(static_cast<std::size_t>(cfg.gold_per_batch()))
    , seed_(seed)
  {
    if (gold.indices.empty())
    {
      throw ValidationError("gold subset is empty");
    }
    gold_ = gold.indices;
    for (std::size_t i : train.indices(Split::train))
    {
      if (!gold.contains(i))
      {
        non_gold_.push_back(i);
      }
    }
    if (non_gold_.empty())
    {
      return;
    }
    if (b_gold_ > gold_.size())
    {
      throw ValidationError("batch needs " + std::to_string(b_gold_) + " distinct gold instances but the subset has " +
                            std::to_string(gold_.size()) + "; use a smaller batch size or a larger gamma");
    }
    if (b_gold_ >= batch_size_)
    {
      throw ValidationError("batch size leaves no room for non-gold instances; increase batch_size or beta");
    }
  }

  std::size_t gold_per_batch() const noexcept
  {
    return non_gold_.empty() ? batch_size_ : b_gold_;
  }

  std::vector<Batch> epoch(int e) const
  {
    Rng                rng(derive_seed(seed_, "epoch-" + std::to_string(e)));
    std::vector<Batch> out;
    if (non_gold_.empty())
    {
      auto order = gold_;
      rng.shuffle(order);
      for (std::size_t s = 0; s < order.size(); s += batch_size_)
      {
        Batch b;
        b.gold.assign(order.begin() + static_cast<std::ptrdiff_t>(s),
                      order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), s + batch_size_)));
        out.push_back(std::move(b));
      }
      return out;
    }
    auto order = non_gold_;
    rng.shuffle(order);
    std::size_t const chunk = batch_size_ - b_gold_;
    for (std::size_t s = 0; s < order.size(); s += chunk)
    {
      Batch b;
      b.non_gold.assign(order.begin() + static_cast<std::ptrdiff_t>(s),
                        order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), s + chunk)));
      for (std::size_t g : rng.sample_without_replacement(gold_.size(), b_gold_))
      {
        b.gold.push_back(gold_[g]);
      }
      out.push_back(std::move(b));
    }
    return out;
  }

private:
  std::size_t              batch_size_;
  std::size_t              b_gold_;
  std::uint64_t            seed_;
  std::vector<std::size_t> gold_;
  std::vector<std::size_t> non_gold_;
};

inline GoldBatchIterator make_gold_batch_iterator(Dataset const &train, GoldSubset const &gold,
                                                  TrainConfig const &cfg, std::uint64_t seed)
{
  cfg.validate();
  return GoldBatchIterator(train, gold, cfg, seed);
}

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

/// Adam without weight decay.
class Adam
{
public:
  Adam(ag::ParameterList params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
    : params_(std::move(params))
    , lr_(lr)
    , beta1_(beta1)
    , beta2_(beta2)
    , eps_(eps)
  {
    for (auto const *p : params_)
    {
      m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    }
  }

  static std::string name()
  {
    return "adam";
  }

  ag::ParameterList const &parameters() const noexcept
  {
    return params_;
  }

  void zero_grad()
  {
    for (auto *p : params_)
    {
      p->zero_grad();
    }
  }

  /// Global L2 norm of the accumulated gradients.
  double grad_norm() const
  {
    double total = 0.0;
    for (auto const *p : params_)
    {
      total += p->grad.squaredNorm();
    }
    return std::sqrt(total);
  }

  void clip_grad_norm(double max_norm)
  {
    if (max_norm <= 0.0)
    {
      return;
    }
    double const norm = grad_norm();
    if (norm > max_norm)
    {
      for (auto *p : params_)
      {
        p->grad *= max_norm / norm;
      }
    }
  }

  void step()
  {
    ++t_;
    double const c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    double const c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i)
    {
      auto &p = *params_[i];
      m_[i]   = beta1_ * m_[i] + (1.0 - beta1_) * p.grad;
      v_[i]   = beta2_ * v_[i] + (1.0 - beta2_) * p.grad.cwiseProduct(p.grad);
      p.value.array() -= lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
    }
  }

  long steps() const noexcept
  {
    return t_;
  }

private:
  ag::ParameterList   params_;
  double              lr_;
  double              beta1_;
  double              beta2_;
  double              eps_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  long                t_ = 0;
};

// ---------------------------------------------------------------------------
// One optimisation step
// ---------------------------------------------------------------------------

struct StepLosses
{
  double task  = 0.0;
  double comp  = 0.0;
  double suff  = 0.0;
  double plaus = 0.0;  ///< mean over gold instances of the batch
  double total = 0.0;
  std::size_t plaus_instances = 0;
};

namespace detail {

struct InstanceLoss
{
  Var    total;
  double task  = 0.0;
  double comp  = 0.0;
  double suff  = 0.0;
  double plaus = 0.0;
  bool   has_plaus = false;
};

/// Records the joint loss of one instance on `tape`.
inline InstanceLoss instance_loss(Tape &tape, ModelBundle &bundle, Instance const &inst, bool gold,
                                  LossConfig const &cfg)
{
  auto &task  = bundle.task();
  auto  kind  = bundle.method().kind;
  int   y     = inst.target_label;
  bool  plaus = gold && cfg.alpha_p > 0.0 && inst.has_gold() && is_learned(kind);

  Var logits;
  Var score_col;
  if (kind == ExtractorKind::slm)
  {
    EncodedPass pass = task.encode(tape, inst.tokens);
    logits           = pass.logits;
    if (plaus || cfg.wants_faithfulness())
    {
      score_col = bundle.extractor()->scores_from_states(tape, pass.states);
    }
  }
  else
  {
    logits = task.logits(tape, inst.tokens);
    if (kind == ExtractorKind::dlm && (plaus || cfg.wants_faithfulness()))
    {
      score_col = bundle.extractor()->score_logits(tape, inst.tokens);
    }
    else if (kind == ExtractorKind::ig_pooler && (plaus || cfg.wants_faithfulness()))
    {
      Matrix const dims =
        integrated_gradients_dims(task, inst, y, bundle.method().ig_steps, bundle.method().target);
      score_col = bundle.pooler()->score_logits(tape, dims);
    }
  }

  InstanceLoss out;
  Var          total = task_loss(logits, y);
  out.task           = total.scalar();
  if (cfg.wants_faithfulness())
  {
    RationaleScores const scores = score_col.valid() ? make_scores(column_to_vector(score_col.value()), inst, y)
                                                     : bundle.explain(inst, y);
    auto const terms = faithfulness_loss_over_K(tape, task, inst, scores, cfg, logits, y);
    out.comp         = terms.comp_K.scalar();
    out.suff         = terms.suff_K.scalar();
    total            = total + cfg.alpha_c * terms.comp_K + cfg.alpha_s * terms.suff_K;
  }
  if (plaus)
  {
    Var p = plausibility_loss(score_col, *inst.gold_rationale, inst.is_special, cfg.plaus_criterion, cfg.m_p);
    out.plaus     = p.scalar();
    out.has_plaus = true;
    total         = total + cfg.alpha_p * p;
  }
  out.total = total;
  return out;
}

}  // namespace detail

/// Accumulates the batch-mean joint loss gradient and applies one update.
inline StepLosses train_step(ModelBundle &bundle, Dataset const &ds, Batch const &batch, TrainConfig const &cfg,
                             Adam &optimizer)
{
  if (batch.size() == 0)
  {
    throw ValidationError("train_step on an empty batch");
  }
  optimizer.zero_grad();
  StepLosses   out;
  std::size_t  n_plaus = 0;
  double const scale   = 1.0 / static_cast<double>(batch.size());
  auto         run     = [&](std::size_t idx, bool gold) {
    Instance const &inst = ds[idx];
    Tape            tape;
    auto            l     = detail::instance_loss(tape, bundle, inst, gold, cfg.loss);
    double const    total = l.total.scalar();
    if (!std::isfinite(total))
    {
      std::ostringstream msg;
      msg << "non-finite loss on instance '" << inst.id << "': task=" << l.task << " comp=" << l.comp
          << " suff=" << l.suff << " plaus=" << l.plaus;
      throw TrainingError(msg.str());
    }
    tape.backward(l.total);
    tape.accumulate_parameter_grads(scale);
    out.task += l.task * scale;
    out.comp += l.comp * scale;
    out.suff += l.suff * scale;
    out.total += total * scale;
    if (l.has_plaus)
    {
      out.plaus += l.plaus;
      ++n_plaus;
    }
  };
  for (std::size_t i : batch.gold)
  {
    run(i, true);
  }
  for (std::size_t i : batch.non_gold)
  {
    run(i, false);
  }
  if (n_plaus > 0)
  {
    out.plaus /= static_cast<double>(n_plaus);
  }
  out.plaus_instances = n_plaus;
  for (auto const *p : optimizer.parameters())
  {
    if (!p->grad.allFinite())
    {
      throw TrainingError("non-finite gradient for parameter '" + p->name + "'");
    }
  }
  optimizer.clip_grad_norm(cfg.max_grad_norm);
  optimizer.step();
  return out;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

inline double evaluate_task(ModelBundle &bundle, Dataset const &ds, std::vector<std::size_t> const &indices,
                            TaskMetric metric)
{
  std::vector<int> pred;
  std::vector<int> gold;
  for (std::size_t i : indices)
  {
    pred.push_back(bundle.predict(ds[i]));
    gold.push_back(ds[i].target_label);
  }
  return task_performance(pred, gold, metric);
}

/// Tracks the best metric seen. Patience counts epochs without strict
/// improvement; a tie with the best still moves the checkpoint forward.
class EarlyStopping
{
public:
  explicit EarlyStopping(int patience)
    : patience_(patience)
  {}

  /// Returns true when the epoch should become the selected checkpoint.
  bool observe(double metric)
  {
    if (!seen_ || metric > best_)
    {
      seen_  = true;
      best_  = metric;
      stale_ = 0;
      return true;
    }
    ++stale_;
    return metric == best_;
  }

  bool should_stop() const noexcept
  {
    return stale_ >= patience_;
  }

  std::optional<double> best() const noexcept
  {
    return seen_ ? std::optional<double>(best_) : std::nullopt;
  }

private:
  int    patience_;
  int    stale_ = 0;
  bool   seen_  = false;
  double best_  = 0.0;
};

struct EpochRecord
{
  int        epoch = 0;
  long       steps = 0;
  StepLosses mean;
  double     dev_metric = 0.0;
  bool       improved   = false;

  nlohmann::ordered_json to_json() const
  {
    nlohmann::ordered_json j;
    j["epoch"]      = epoch;
    j["steps"]      = steps;
    j["task_loss"]  = mean.task;
    j["comp_loss"]  = mean.comp;
    j["suff_loss"]  = mean.suff;
    j["plaus_loss"] = mean.plaus;
    j["total_loss"] = mean.total;
    j["dev_metric"] = dev_metric;
    j["improved"]   = improved;
    return j;
  }
};

struct RunState
{
  int                      epochs_run = 0;
  int                      best_epoch = 0;  ///< 0 = initial parameters
  std::optional<double>    best_dev_metric;
  long                     steps = 0;
  std::uint64_t            seed  = 0;
  std::string              optimizer = Adam::name();
  std::vector<EpochRecord> history;
  std::vector<StepLosses>  step_losses;
};

using EpochCallback = std::function<void(EpochRecord const &)>;

/// Trains `bundle` and restores the parameters of the best dev epoch. Model
/// selection uses the dev split, or the train split when no dev split exists.
inline RunState fit(ModelBundle &bundle, Dataset const &ds, GoldSubset const &gold, TrainConfig const &cfg,
                    EpochCallback const &on_epoch = {})
{
  cfg.validate();
  RunState state;
  state.seed = cfg.seed;
  if (cfg.max_epochs == 0)
  {
    return state;
  }
  auto select = ds.indices(Split::dev);
  if (select.empty())
  {
    select = ds.indices(Split::train);
  }
  GoldBatchIterator batches(ds, gold, cfg, derive_seed(cfg.seed, "batches"));
  auto const        params = bundle.parameters();
  Adam              optimizer(params, cfg.lr);
  ParameterSnapshot best   = snapshot(params);
  EarlyStopping     stopper(cfg.patience);
  for (int e = 1; e <= cfg.max_epochs; ++e)
  {
    EpochRecord rec;
    rec.epoch        = e;
    auto const plan  = batches.epoch(e);
    std::size_t n_pl = 0;
    for (auto const &b : plan)
    {
      StepLosses const l = train_step(bundle, ds, b, cfg, optimizer);
      state.step_losses.push_back(l);
      rec.mean.task += l.task;
      rec.mean.comp += l.comp;
      rec.mean.suff += l.suff;
      rec.mean.total += l.total;
      if (l.plaus_instances > 0)
      {
        rec.mean.plaus += l.plaus;
        ++n_pl;
      }
    }
    double const nb = static_cast<double>(std::max<std::size_t>(1, plan.size()));
    rec.mean.task /= nb;
    rec.mean.comp /= nb;
    rec.mean.suff /= nb;
    rec.mean.total /= nb;
    if (n_pl > 0)
    {
      rec.mean.plaus /= static_cast<double>(n_pl);
    }
    state.steps += static_cast<long>(plan.size());
    rec.steps      = state.steps;
    rec.dev_metric = evaluate_task(bundle, ds, select, cfg.task_metric);
    state.epochs_run = e;
    if (stopper.observe(rec.dev_metric))
    {
      state.best_dev_metric = rec.dev_metric;
      state.best_epoch      = e;
      best                  = snapshot(params);
      rec.improved          = true;
    }
    state.history.push_back(rec);
    if (on_epoch)
    {
      on_epoch(rec);
    }
    if (stopper.should_stop())
    {
      break;
    }
  }
  restore(params, best);
  return state;
}

}  // namespace unirex
