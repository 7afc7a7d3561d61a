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

// Task, faithfulness and plausibility losses.
//
// The comp/suff criteria are templates over the value type so the same code
// evaluates plain doubles (reporting, tests) and tape nodes (training).

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "unirex/autograd.hpp"
#include "unirex/encoder.hpp"
#include "unirex/extractors.hpp"

namespace unirex {

enum class CompCriterion
{
  diff,
  margin
};

enum class SuffCriterion
{
  diff,
  margin,
  kl,
  mae
};

enum class PlausCriterion
{
  bce,
  kl,
  linear,
  linear_margin
};

inline constexpr double kKlEpsilon = 1e-8;

struct LossConfig
{
  double              alpha_c = 0.5;
  double              alpha_s = 0.5;
  double              alpha_p = 0.5;
  double              m_c     = 1.0;
  double              m_s     = 0.1;
  double              m_p     = 1.0;
  CompCriterion       comp_criterion  = CompCriterion::margin;
  SuffCriterion       suff_criterion  = SuffCriterion::margin;
  PlausCriterion      plaus_criterion = PlausCriterion::bce;
  std::vector<double> K               = {1, 5, 10, 20, 50};

  void validate() const
  {
    if (K.empty())
    {
      throw ValidationError("loss config: K must be non-empty");
    }
    for (double k : K)
    {
      if (!(k > 0.0 && k <= 100.0))
      {
        throw ValidationError("loss config: every k must lie in (0, 100]");
      }
    }
    for (double v : {alpha_c, alpha_s, alpha_p, m_c, m_s, m_p})
    {
      if (!(v >= 0.0) || !std::isfinite(v))
      {
        throw ValidationError("loss config: weights and margins must be finite and non-negative");
      }
    }
  }

  bool wants_faithfulness() const noexcept
  {
    return alpha_c > 0.0 || alpha_s > 0.0;
  }
};

// ---------------------------------------------------------------------------
// Scalar helpers shared by the double and tape instantiations
// ---------------------------------------------------------------------------

inline double clamp_min(double a, double floor)
{
  return std::max(a, floor);
}

inline double kl_divergence(Eigen::RowVectorXd const &p, Eigen::RowVectorXd const &q, double eps)
{
  return (p.array() * ((p.array() + eps).log() - (q.array() + eps).log())).sum();
}

inline double task_loss(Eigen::RowVectorXd const &logits, int target)
{
  if (target < 0 || target >= logits.size())
  {
    throw ValidationError("task_loss: target out of range");
  }
  double const m = logits.maxCoeff();
  return m + std::log((logits.array() - m).exp().sum()) - logits(target);
}

inline Var task_loss(Var logits, int target)
{
  return ag::cross_entropy(logits, target);
}

template <typename T>
T comp_loss(T ce_full, T ce_complement, CompCriterion criterion, double m_c)
{
  T diff = ce_full - ce_complement;
  if (criterion == CompCriterion::diff)
  {
    return diff;
  }
  return clamp_min(diff, -m_c) + m_c;
}

/// `full_dist` and `rationale_dist` are only read by the kl criterion.
template <typename T, typename Dist>
T suff_loss(T ce_rationale_only, T ce_full, Dist const &full_dist, Dist const &rationale_dist,
            SuffCriterion criterion, double m_s)
{
  using std::abs;
  switch (criterion)
  {
  case SuffCriterion::diff:
    return ce_rationale_only - ce_full;
  case SuffCriterion::margin:
    return clamp_min(ce_rationale_only - ce_full, -m_s) + m_s;
  case SuffCriterion::kl:
    return kl_divergence(rationale_dist, full_dist, kKlEpsilon);
  case SuffCriterion::mae:
    return abs(ce_rationale_only - ce_full);
  }
  throw ValidationError("unknown suff criterion");
}

template <typename T>
T total_loss(T task, T comp_K, T suff_K, T plaus, LossConfig const &cfg)
{
  return task + cfg.alpha_c * comp_K + cfg.alpha_s * suff_K + cfg.alpha_p * plaus;
}

// ---------------------------------------------------------------------------
// Plausibility
// ---------------------------------------------------------------------------

/// Plausibility loss of a score column (n x 1 logits) against a gold mask,
/// averaged over non-special positions.
inline Var plausibility_loss(Var scores, Mask const &gold, Mask const &is_special, PlausCriterion criterion,
                             double m_p)
{
  auto const n = static_cast<Eigen::Index>(gold.size());
  if (scores.rows() != n || scores.cols() != 1 || is_special.size() != gold.size())
  {
    throw ValidationError("plausibility_loss: score/gold length mismatch");
  }
  Matrix           target(n, 1);
  Matrix           mask(n, 1);
  std::vector<int> keep;
  for (Eigen::Index t = 0; t < n; ++t)
  {
    target(t) = gold[static_cast<std::size_t>(t)];
    mask(t)   = is_special[static_cast<std::size_t>(t)] ? 0.0 : 1.0;
    if (mask(t) != 0.0)
    {
      keep.push_back(static_cast<int>(t));
    }
  }
  switch (criterion)
  {
  case PlausCriterion::bce:
    return ag::masked_bce_with_logits(scores, std::move(target), std::move(mask));
  case PlausCriterion::linear:
  case PlausCriterion::linear_margin: {
    Matrix phi  = (-2.0 * target.array() + 1.0).matrix();
    Var    loss = ag::masked_weighted_mean(scores, std::move(phi), mask);
    if (criterion == PlausCriterion::linear)
    {
      return loss;
    }
    return ag::clamp_min(loss, -m_p) + m_p;
  }
  case PlausCriterion::kl: {
    double gold_total = 0.0;
    Matrix gold_dist(1, static_cast<Eigen::Index>(keep.size()));
    for (std::size_t i = 0; i < keep.size(); ++i)
    {
      gold_dist(0, static_cast<Eigen::Index>(i)) = target(keep[i]);
      gold_total += target(keep[i]);
    }
    if (gold_total <= 0.0)
    {
      throw ValidationError("plausibility kl: gold rationale has no positive tokens");
    }
    gold_dist /= gold_total;
    Var p = ag::softmax_rows(ag::transpose(ag::select_rows(scores, keep)));
    return ag::kl_divergence(p, scores.tape->constant(std::move(gold_dist)), kKlEpsilon);
  }
  }
  throw ValidationError("unknown plausibility criterion");
}

/// Value-only plausibility loss; sentinel scores at special positions are ignored.
inline double plausibility_loss(std::vector<double> const &scores, Mask const &gold, Mask const &is_special,
                                PlausCriterion criterion, double m_p)
{
  if (scores.size() != gold.size())
  {
    throw ValidationError("plausibility_loss: score/gold length mismatch");
  }
  Matrix col(static_cast<Eigen::Index>(scores.size()), 1);
  for (std::size_t t = 0; t < scores.size(); ++t)
  {
    col(static_cast<Eigen::Index>(t)) = is_special.at(t) ? 0.0 : scores[t];
  }
  Tape tape(ag::GradMode::disabled);
  return plausibility_loss(tape.constant(std::move(col)), gold, is_special, criterion, m_p).scalar();
}

// ---------------------------------------------------------------------------
// Faithfulness over K
// ---------------------------------------------------------------------------

template <typename T>
struct FaithfulnessTerms
{
  T comp_K;
  T suff_K;
};

/// Comp and suff losses averaged over config.K, recorded on `tape`.
///
/// `full_logits` is the task model's logit row for the unmasked input. The
/// binarized rationale carries no gradient, so these terms only reach the task
/// model. Identical masks produced by different k share one forward pass.
inline FaithfulnessTerms<Var> faithfulness_loss_over_K(Tape &tape, TaskModel &model, Instance const &inst,
                                                       RationaleScores const &scores, LossConfig const &cfg,
                                                       Var full_logits, int target)
{
  cfg.validate();
  Var const ce_full = task_loss(full_logits, target);
  Var const full_dist =
    cfg.suff_criterion == SuffCriterion::kl ? ag::softmax_rows(full_logits) : full_logits;

  std::map<std::vector<TokenId>, Var> cache;
  auto logits_of = [&](std::vector<TokenId> const &tokens) {
    auto it = cache.find(tokens);
    if (it != cache.end())
    {
      return it->second;
    }
    Var l = model.logits(tape, tokens);
    cache.emplace(tokens, l);
    return l;
  };

  std::vector<Var> comps;
  std::vector<Var> suffs;
  for (double k : cfg.K)
  {
    BinaryRationale const r = binarize_topk(scores, k, inst);
    Var const lc = logits_of(build_masked_variant(inst, r.mask, VariantKind::complement, model.mask_token()).tokens);
    Var const lr =
      logits_of(build_masked_variant(inst, r.mask, VariantKind::rationale_only, model.mask_token()).tokens);
    comps.push_back(comp_loss(ce_full, task_loss(lc, target), cfg.comp_criterion, cfg.m_c));
    Var const rationale_dist = cfg.suff_criterion == SuffCriterion::kl ? ag::softmax_rows(lr) : lr;
    suffs.push_back(suff_loss(task_loss(lr, target), ce_full, full_dist, rationale_dist, cfg.suff_criterion, cfg.m_s));
  }
  return {ag::mean(comps), ag::mean(suffs)};
}

/// Value-only overload: runs the full input and every masked variant.
inline FaithfulnessTerms<double> faithfulness_loss_over_K(TaskModel &model, Instance const &inst,
                                                          RationaleScores const &scores, LossConfig const &cfg,
                                                          int target)
{
  Tape      tape(ag::GradMode::disabled);
  Var const full = model.logits(tape, inst.tokens);
  auto      t    = faithfulness_loss_over_K(tape, model, inst, scores, cfg, full, target);
  return {t.comp_K.scalar(), t.suff_K.scalar()};
}

}  // namespace unirex
