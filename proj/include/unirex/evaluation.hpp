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

#include <optional>
#include <string>
#include <vector>

#include "unirex/bundle.hpp"
#include "unirex/metrics.hpp"

namespace unirex {

struct Explained
{
  std::vector<RationaleScores> scores;
  std::vector<int>             predictions;
};

/// Explains every listed instance for its predicted class.
inline Explained explain_predicted(ModelBundle &bundle, Dataset const &ds, std::vector<std::size_t> const &indices)
{
  Explained out;
  for (std::size_t i : indices)
  {
    int const pred = bundle.predict(ds[i]);
    out.predictions.push_back(pred);
    out.scores.push_back(bundle.explain(ds[i], pred));
  }
  return out;
}

/// Full metrics record of `bundle` on one split. Plausibility is averaged over
/// instances whose gold mask has a positive token and is absent when none does.
inline MetricsRecord evaluate_split(ModelBundle &bundle, Dataset const &ds, Split split, std::vector<double> const &K,
                                    TaskMetric metric, Explained const *precomputed = nullptr)
{
  auto const &indices = ds.indices(split);
  if (indices.empty())
  {
    throw ValidationError("split '" + to_string(split) + "' is empty");
  }
  Explained local;
  if (precomputed == nullptr)
  {
    local       = explain_predicted(bundle, ds, indices);
    precomputed = &local;
  }
  MetricsRecord rec;
  rec.method      = bundle.method().name;
  rec.seeds       = {static_cast<int>(bundle.seed())};
  rec.split       = to_string(split);
  rec.metric_kind = metric;
  rec.K           = K;

  auto const f = comp_suff_eval(bundle.task(), ds, indices, precomputed->scores, K);
  rec.set_faithfulness(f.comp, f.suff);

  std::vector<int> targets;
  double           au = 0.0, tf = 0.0;
  std::size_t      n_plaus = 0;
  for (std::size_t j = 0; j < indices.size(); ++j)
  {
    Instance const &inst = ds[indices[j]];
    targets.push_back(inst.target_label);
    if (!inst.has_gold())
    {
      ++rec.plausibility_skipped;
      continue;
    }
    auto const a = auprc(precomputed->scores[j].scores, *inst.gold_rationale, inst.is_special);
    auto const t = token_f1(precomputed->scores[j].scores, *inst.gold_rationale, inst.is_special);
    if (!a || !t)
    {
      ++rec.plausibility_skipped;
      continue;
    }
    au += *a;
    tf += *t;
    ++n_plaus;
  }
  if (n_plaus > 0)
  {
    rec.auprc = au / static_cast<double>(n_plaus);
    rec.tf1   = tf / static_cast<double>(n_plaus);
  }
  rec.task_perf = task_performance(precomputed->predictions, targets, metric);
  return rec;
}

}  // namespace unirex
