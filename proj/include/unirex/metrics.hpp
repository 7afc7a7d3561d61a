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
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "unirex/encoder.hpp"
#include "unirex/extractors.hpp"

namespace unirex {

// ---------------------------------------------------------------------------
// Task performance
// ---------------------------------------------------------------------------

enum class TaskMetric
{
  accuracy,
  macro_f1,
  binary_f1
};

inline std::string to_string(TaskMetric m)
{
  switch (m)
  {
  case TaskMetric::accuracy:
    return "accuracy";
  case TaskMetric::macro_f1:
    return "macro_f1";
  case TaskMetric::binary_f1:
    return "binary_f1";
  }
  return "?";
}

inline TaskMetric parse_task_metric(std::string const &s)
{
  if (s == "accuracy")
  {
    return TaskMetric::accuracy;
  }
  if (s == "macro_f1")
  {
    return TaskMetric::macro_f1;
  }
  if (s == "binary_f1")
  {
    return TaskMetric::binary_f1;
  }
  throw ValidationError("unknown task metric '" + s + "'");
}

namespace detail {

inline double f1_for_class(std::vector<int> const &pred, std::vector<int> const &gold, int cls)
{
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
  {
    bool const p = pred[i] == cls;
    bool const g = gold[i] == cls;
    tp += p && g;
    fp += p && !g;
    fn += !p && g;
  }
  if (tp == 0)
  {
    return 0.0;
  }
  return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

}  // namespace detail

/// Binary F1 treats class 1 as positive; macro F1 averages over classes seen
/// in either the predictions or the targets.
inline double task_performance(std::vector<int> const &predictions, std::vector<int> const &targets,
                               TaskMetric metric)
{
  if (predictions.size() != targets.size())
  {
    throw ValidationError("task_performance: predictions and targets differ in length");
  }
  if (predictions.empty())
  {
    throw ValidationError("task_performance: empty input");
  }
  switch (metric)
  {
  case TaskMetric::accuracy: {
    std::size_t correct = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i)
    {
      correct += predictions[i] == targets[i];
    }
    return static_cast<double>(correct) / static_cast<double>(predictions.size());
  }
  case TaskMetric::binary_f1:
    return detail::f1_for_class(predictions, targets, 1);
  case TaskMetric::macro_f1: {
    std::set<int> classes(predictions.begin(), predictions.end());
    classes.insert(targets.begin(), targets.end());
    double total = 0.0;
    for (int c : classes)
    {
      total += detail::f1_for_class(predictions, targets, c);
    }
    return total / static_cast<double>(classes.size());
  }
  }
  throw ValidationError("unknown task metric");
}

// ---------------------------------------------------------------------------
// Plausibility
// ---------------------------------------------------------------------------

/// Average precision of `scores` against `gold` over non-special positions
/// (step interpolation; tied scores form one threshold). nullopt when the
/// gold mask has no positive non-special token.
inline std::optional<double> auprc(std::vector<double> const &scores, Mask const &gold, Mask const &is_special)
{
  if (scores.size() != gold.size() || gold.size() != is_special.size())
  {
    throw ValidationError("auprc: length mismatch");
  }
  auto const  order     = rank_positions(scores, is_special);
  std::size_t positives = 0;
  for (auto t : order)
  {
    positives += gold[t];
  }
  if (positives == 0)
  {
    return std::nullopt;
  }
  double      ap = 0.0;
  std::size_t tp = 0;
  std::size_t seen = 0;
  double      prev_recall = 0.0;
  for (std::size_t i = 0; i < order.size();)
  {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]])
    {
      tp += gold[order[j]];
      ++j;
    }
    seen = j;
    double const precision = static_cast<double>(tp) / static_cast<double>(seen);
    double const recall    = static_cast<double>(tp) / static_cast<double>(positives);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    i           = j;
  }
  return ap;
}

/// F1 between the top-g non-special tokens (g = gold positive count, ties by
/// lower index) and the gold mask. nullopt without gold positives.
inline std::optional<double> token_f1(std::vector<double> const &scores, Mask const &gold, Mask const &is_special)
{
  if (scores.size() != gold.size() || gold.size() != is_special.size())
  {
    throw ValidationError("token_f1: length mismatch");
  }
  auto const  order = rank_positions(scores, is_special);
  std::size_t g     = 0;
  for (auto t : order)
  {
    g += gold[t];
  }
  if (g == 0)
  {
    return std::nullopt;
  }
  std::size_t tp = 0;
  for (std::size_t i = 0; i < g; ++i)
  {
    tp += gold[order[i]];
  }
  // predicted and gold both have g positives
  return static_cast<double>(tp) / static_cast<double>(g);
}

// ---------------------------------------------------------------------------
// Faithfulness
// ---------------------------------------------------------------------------

struct FaithfulnessScore
{
  double comp = 0.0;
  double suff = 0.0;
};

/// comp/suff of one instance explained for class `cls`, averaged over `K`.
inline FaithfulnessScore comp_suff_instance(TaskModel &model, Instance const &inst, RationaleScores const &scores,
                                            std::vector<double> const &K, int cls)
{
  if (K.empty())
  {
    throw ValidationError("comp/suff evaluation needs a non-empty K");
  }
  double const      p_full = predicted_probability(model, inst.tokens, cls);
  FaithfulnessScore out;
  std::map<std::vector<TokenId>, double> cache;
  auto prob = [&](std::vector<TokenId> const &tokens) {
    auto it = cache.find(tokens);
    if (it != cache.end())
    {
      return it->second;
    }
    double const p = predicted_probability(model, tokens, cls);
    cache.emplace(tokens, p);
    return p;
  };
  for (double k : K)
  {
    BinaryRationale const r = binarize_topk(scores, k, inst);
    out.comp += p_full - prob(build_masked_variant(inst, r.mask, VariantKind::complement, model.mask_token()).tokens);
    out.suff +=
      p_full - prob(build_masked_variant(inst, r.mask, VariantKind::rationale_only, model.mask_token()).tokens);
  }
  out.comp /= static_cast<double>(K.size());
  out.suff /= static_cast<double>(K.size());
  return out;
}

/// Dataset-level comp/suff AOPC. `scores[i]` explains instance `indices[i]`
/// for its `target_class` field (the predicted class at evaluation time).
inline FaithfulnessScore comp_suff_eval(TaskModel &model, Dataset const &ds, std::vector<std::size_t> const &indices,
                                        std::vector<RationaleScores> const &scores, std::vector<double> const &K)
{
  if (indices.size() != scores.size() || indices.empty())
  {
    throw ValidationError("comp_suff_eval: one score vector per instance required");
  }
  FaithfulnessScore total;
  for (std::size_t i = 0; i < indices.size(); ++i)
  {
    auto const f = comp_suff_instance(model, ds[indices[i]], scores[i], K, scores[i].target_class);
    total.comp += f.comp;
    total.suff += f.suff;
  }
  total.comp /= static_cast<double>(indices.size());
  total.suff /= static_cast<double>(indices.size());
  return total;
}

// ---------------------------------------------------------------------------
// Metrics records
// ---------------------------------------------------------------------------

struct MetricsRecord
{
  std::string           method;
  std::vector<int>      seeds;
  std::string           split;
  std::string           dataset;
  std::optional<double> gamma;
  double                comp_aopc = 0.0;
  double                suff_aopc = 0.0;
  double                csd       = 0.0;
  std::optional<double> auprc;
  std::optional<double> tf1;
  std::size_t           plausibility_skipped = 0;
  double                task_perf            = 0.0;
  TaskMetric            metric_kind          = TaskMetric::accuracy;
  std::vector<double>   K;

  void set_faithfulness(double comp, double suff)
  {
    comp_aopc = comp;
    suff_aopc = suff;
    csd       = comp - suff;
  }

  nlohmann::ordered_json to_json() const
  {
    nlohmann::ordered_json j;
    j["method"]    = method;
    j["seeds"]     = seeds;
    j["split"]     = split;
    j["dataset"]   = dataset;
    j["gamma"]     = gamma ? nlohmann::ordered_json(*gamma) : nlohmann::ordered_json(nullptr);
    j["comp_aopc"] = comp_aopc;
    j["suff_aopc"] = suff_aopc;
    j["csd"]       = csd;
    j["auprc"]     = auprc ? nlohmann::ordered_json(*auprc) : nlohmann::ordered_json(nullptr);
    j["tf1"]       = tf1 ? nlohmann::ordered_json(*tf1) : nlohmann::ordered_json(nullptr);
    j["plausibility_skipped"] = plausibility_skipped;
    j["task_perf"]            = task_perf;
    j["metric_kind"]          = to_string(metric_kind);
    j["K"]                    = K;
    return j;
  }

  static MetricsRecord from_json(nlohmann::json const &j)
  {
    MetricsRecord r;
    auto          opt = [&](char const *key) -> std::optional<double> {
      if (!j.contains(key) || j.at(key).is_null())
      {
        return std::nullopt;
      }
      return j.at(key).get<double>();
    };
    r.method = j.at("method").get<std::string>();
    if (j.contains("seeds"))
    {
      r.seeds = j.at("seeds").get<std::vector<int>>();
    }
    r.split   = j.value("split", std::string{});
    r.dataset = j.value("dataset", std::string{});
    r.gamma   = opt("gamma");
    r.set_faithfulness(j.at("comp_aopc").get<double>(), j.at("suff_aopc").get<double>());
    r.auprc                = opt("auprc");
    r.tf1                  = opt("tf1");
    r.plausibility_skipped = j.value("plausibility_skipped", std::size_t{0});
    r.task_perf            = j.at("task_perf").get<double>();
    r.metric_kind          = parse_task_metric(j.at("metric_kind").get<std::string>());
    if (j.contains("K"))
    {
      r.K = j.at("K").get<std::vector<double>>();
    }
    return r;
  }
};

// ---------------------------------------------------------------------------
// Normalized relative gain
// ---------------------------------------------------------------------------

/// Min-max normalisation of one raw metric across methods (1 = best).
inline std::map<std::string, double> nrg(std::map<std::string, double> const &values, bool higher_is_better)
{
  if (values.size() < 2)
  {
    throw ValidationError("NRG needs at least two methods");
  }
  double lo = values.begin()->second;
  double hi = lo;
  for (auto const &[_, v] : values)
  {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  std::map<std::string, double> out;
  for (auto const &[name, v] : values)
  {
    if (hi == lo)
    {
      out[name] = 1.0;
    }
    else
    {
      out[name] = higher_is_better ? (v - lo) / (hi - lo) : (hi - v) / (hi - lo);
    }
  }
  return out;
}

struct DesiderataWeights
{
  double faithfulness = 1.0;
  double plausibility = 1.0;
  double task         = 1.0;
};

struct NRGRow
{
  double                comp_nrg = 0.0;
  double                suff_nrg = 0.0;
  std::optional<double> auprc_nrg;
  std::optional<double> tf1_nrg;
  double                task_nrg = 0.0;
  double                fnrg     = 0.0;
  std::optional<double> pnrg;
  double                tnrg = 0.0;
  double                cnrg = 0.0;
};

struct NRGTable
{
  std::vector<std::string>      methods;
  std::map<std::string, MetricsRecord> raw;  ///< seed-averaged raw metrics per method
  std::map<std::string, NRGRow> rows;
};

namespace detail {

/// Averages the raw metrics of several records of one method.
inline MetricsRecord average_records(std::vector<MetricsRecord const *> const &group)
{
  MetricsRecord out = *group.front();
  out.seeds.clear();
  double comp = 0, suff = 0, task = 0, au = 0, tf = 0;
  bool   have_plaus = true;
  for (auto const *r : group)
  {
    comp += r->comp_aopc;
    suff += r->suff_aopc;
    task += r->task_perf;
    out.seeds.insert(out.seeds.end(), r->seeds.begin(), r->seeds.end());
    if (r->auprc && r->tf1)
    {
      au += *r->auprc;
      tf += *r->tf1;
    }
    else
    {
      have_plaus = false;
    }
  }
  double const n = static_cast<double>(group.size());
  out.set_faithfulness(comp / n, suff / n);
  out.task_perf = task / n;
  out.auprc     = have_plaus ? std::optional<double>(au / n) : std::nullopt;
  out.tf1       = have_plaus ? std::optional<double>(tf / n) : std::nullopt;
  return out;
}

inline std::map<std::string, NRGRow> nrg_rows(std::map<std::string, MetricsRecord> const &by_method,
                                              DesiderataWeights const &w)
{
  std::map<std::string, double> comp, suff, task, au, tf;
  bool                          have_plaus = true;
  for (auto const &[m, r] : by_method)
  {
    comp[m] = r.comp_aopc;
    suff[m] = r.suff_aopc;
    task[m] = r.task_perf;
    if (r.auprc && r.tf1)
    {
      au[m] = *r.auprc;
      tf[m] = *r.tf1;
    }
    else
    {
      have_plaus = false;
    }
  }
  auto const comp_n = nrg(comp, true);
  auto const suff_n = nrg(suff, false);
  auto const task_n = nrg(task, true);
  std::map<std::string, double> au_n, tf_n;
  if (have_plaus)
  {
    au_n = nrg(au, true);
    tf_n = nrg(tf, true);
  }
  std::map<std::string, NRGRow> rows;
  for (auto const &[m, _] : by_method)
  {
    NRGRow row;
    row.comp_nrg = comp_n.at(m);
    row.suff_nrg = suff_n.at(m);
    row.task_nrg = task_n.at(m);
    row.fnrg     = (row.comp_nrg + row.suff_nrg) / 2.0;
    row.tnrg     = row.task_nrg;
    double num   = w.faithfulness * row.fnrg + w.task * row.tnrg;
    double den   = w.faithfulness + w.task;
    if (have_plaus)
    {
      row.auprc_nrg = au_n.at(m);
      row.tf1_nrg   = tf_n.at(m);
      row.pnrg      = (*row.auprc_nrg + *row.tf1_nrg) / 2.0;
      num += w.plausibility * *row.pnrg;
      den += w.plausibility;
    }
    if (den <= 0.0)
    {
      throw ValidationError("desiderata weights of the available metrics sum to zero");
    }
    row.cnrg = num / den;
    rows[m]  = row;
  }
  return rows;
}

}  // namespace detail

/// Builds the NRG table across methods. Records of one method (different
/// seeds) are averaged first; with `per_seed` the NRG is instead computed per
/// seed across methods and the NRG scores are averaged.
inline NRGTable composite_nrg(std::vector<MetricsRecord> const &records, DesiderataWeights const &weights = {},
                              bool per_seed = false)
{
  if (records.empty())
  {
    throw ValidationError("composite_nrg: no records");
  }
  for (double w : {weights.faithfulness, weights.plausibility, weights.task})
  {
    if (!(w >= 0.0))
    {
      throw ValidationError("desiderata weights must be non-negative");
    }
  }
  for (auto const &r : records)
  {
    if (r.metric_kind != records.front().metric_kind)
    {
      throw ValidationError("composite_nrg: inconsistent task metric kinds (" + to_string(r.metric_kind) + " vs " +
                            to_string(records.front().metric_kind) + ")");
    }
  }
  std::map<std::string, std::vector<MetricsRecord const *>> groups;
  for (auto const &r : records)
  {
    groups[r.method].push_back(&r);
  }
  if (groups.size() < 2)
  {
    throw ValidationError("composite_nrg needs records from at least two methods");
  }
  NRGTable table;
  for (auto const &[m, g] : groups)
  {
    table.methods.push_back(m);
    table.raw[m] = detail::average_records(g);
  }
  if (!per_seed)
  {
    table.rows = detail::nrg_rows(table.raw, weights);
    return table;
  }

  std::map<int, std::map<std::string, MetricsRecord>> by_seed;
  for (auto const &r : records)
  {
    if (r.seeds.size() != 1)
    {
      throw ValidationError("per-seed NRG needs exactly one seed per record");
    }
    by_seed[r.seeds.front()][r.method] = r;
  }
  std::map<std::string, std::vector<NRGRow>> collected;
  for (auto const &[seed, methods] : by_seed)
  {
    if (methods.size() != groups.size())
    {
      throw ValidationError("per-seed NRG: seed " + std::to_string(seed) + " lacks some methods");
    }
    for (auto const &[m, row] : detail::nrg_rows(methods, weights))
    {
      collected[m].push_back(row);
    }
  }
  for (auto const &[m, rows] : collected)
  {
    NRGRow     avg;
    auto const n = static_cast<double>(rows.size());
    bool       have_plaus = rows.front().pnrg.has_value();
    double     au = 0, tf = 0, p = 0;
    for (auto const &r : rows)
    {
      avg.comp_nrg += r.comp_nrg / n;
      avg.suff_nrg += r.suff_nrg / n;
      avg.task_nrg += r.task_nrg / n;
      avg.fnrg += r.fnrg / n;
      avg.tnrg += r.tnrg / n;
      avg.cnrg += r.cnrg / n;
      if (have_plaus)
      {
        au += *r.auprc_nrg / n;
        tf += *r.tf1_nrg / n;
        p += *r.pnrg / n;
      }
    }
    if (have_plaus)
    {
      avg.auprc_nrg = au;
      avg.tf1_nrg   = tf;
      avg.pnrg      = p;
    }
    table.rows[m] = avg;
  }
  return table;
}

}  // namespace unirex
