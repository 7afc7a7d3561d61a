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

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <map>

#include "test_support.hpp"

using namespace unirex;

namespace {

/// Non-differentiable model whose logits are an arbitrary function of the tokens.
class LookupModel : public TaskModel
{
public:
  using Fn = std::function<Eigen::RowVectorXd(std::vector<TokenId> const &)>;

  LookupModel(int vocab, int classes, Fn fn)
    : vocab_(vocab)
    , classes_(classes)
    , fn_(std::move(fn))
    , table_("lookup.table", Matrix::Identity(vocab, vocab))
  {}

  int num_classes() const override
  {
    return classes_;
  }
  int vocab_size() const override
  {
    return vocab_;
  }
  int embedding_dim() const override
  {
    return vocab_;
  }
  TokenId mask_token() const override
  {
    return static_cast<TokenId>(vocab_ - 1);
  }
  Var embed(Tape &tape, std::span<TokenId const> tokens) override
  {
    return ag::gather_rows(tape.param(table_), tokens);
  }
  Var logits_from_embeddings(Tape &tape, Var x) override
  {
    std::vector<TokenId> tokens;
    for (Eigen::Index r = 0; r < x.rows(); ++r)
    {
      Eigen::Index id = 0;
      x.value().row(r).maxCoeff(&id);
      tokens.push_back(static_cast<TokenId>(id));
    }
    return tape.constant(Matrix(fn_(tokens)));
  }
  ag::ParameterList parameters() override
  {
    return {&table_};
  }

private:
  int           vocab_;
  int           classes_;
  Fn            fn_;
  ag::Parameter table_;
};

Eigen::RowVectorXd logits_for(double p0)
{
  Eigen::RowVectorXd l(2);
  l << std::log(p0), std::log(1.0 - p0);
  return l;
}

MetricsRecord record(std::string method, double comp, double suff, std::optional<double> au,
                     std::optional<double> tf, double task, int seed = 0)
{
  MetricsRecord r;
  r.method = std::move(method);
  r.seeds  = {seed};
  r.set_faithfulness(comp, suff);
  r.auprc     = au;
  r.tf1       = tf;
  r.task_perf = task;
  return r;
}

}  // namespace

// ---------------------------------------------------------------------------
// Task performance
// ---------------------------------------------------------------------------

TEST(TaskPerformance, Examples)
{
  EXPECT_DOUBLE_EQ(task_performance({0, 1, 1}, {0, 1, 1}, TaskMetric::accuracy), 1.0);
  EXPECT_DOUBLE_EQ(task_performance({1, 0, 1}, {1, 1, 1}, TaskMetric::accuracy), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(task_performance({0, 0, 0}, {1, 1, 0}, TaskMetric::binary_f1), 0.0);
  EXPECT_THROW(task_performance({}, {}, TaskMetric::accuracy), ValidationError);
  EXPECT_THROW(task_performance({1}, {1, 0}, TaskMetric::accuracy), ValidationError);
}

TEST(TaskPerformance, F1MatchesConfusionCounts)
{
  // class 1: tp=2 fp=1 fn=1 -> 2/3 ; class 0: tp=1 fp=1 fn=1 -> 1/2
  std::vector<int> pred = {1, 1, 1, 0, 0};
  std::vector<int> gold = {1, 1, 0, 1, 0};
  EXPECT_NEAR(task_performance(pred, gold, TaskMetric::binary_f1), 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(task_performance(pred, gold, TaskMetric::macro_f1), (2.0 / 3.0 + 0.5) / 2.0, 1e-12);
}

// ---------------------------------------------------------------------------
// Plausibility
// ---------------------------------------------------------------------------

TEST(Auprc, Examples)
{
  Mask const none(4, 0);
  EXPECT_DOUBLE_EQ(*auprc({0, 1, 0, 1}, {0, 1, 0, 1}, none), 1.0);
  EXPECT_NEAR(*auprc({1, 1, 0, 1}, {0, 0, 1, 0}, none), 0.25, 1e-12);  // worst ranking, 1 of m
  EXPECT_NEAR(*auprc({3, 3, 3, 3}, {0, 1, 0, 1}, none), 0.5, 1e-12);   // constant scores, p/m
  EXPECT_FALSE(auprc({1, 2, 3, 4}, {0, 0, 0, 0}, none).has_value());
  // ranking 5 (gold), 1, 0 (gold): 1/2 * 1 + 1/2 * 2/3
  EXPECT_NEAR(*auprc({99, 1, 0, 5}, {0, 0, 1, 1}, Mask{1, 0, 0, 0}), 5.0 / 6.0, 1e-12);
}

TEST(TokenF1, Examples)
{
  Mask const none(4, 0);
  EXPECT_DOUBLE_EQ(*token_f1({0, 1, 0, 1}, {0, 1, 0, 1}, none), 1.0);
  EXPECT_DOUBLE_EQ(*token_f1({1, 0, 1, 0}, {0, 1, 0, 1}, none), 0.0);
  EXPECT_DOUBLE_EQ(*token_f1({0.9, 0.8, 0.1, 0.2}, {1, 0, 0, 1}, none), 0.5);  // half overlap, g=2, m=4
  EXPECT_FALSE(token_f1({1, 2}, {0, 0}, Mask{0, 0}).has_value());
}

TEST(PlausibilityMetrics, ExhaustiveOracleSmallSequences)
{
  // every score pattern over {0,1,2} and every gold / special layout up to n=5,
  // then random patterns up to n=8
  for (std::size_t n = 1; n <= 5; ++n)
  {
    std::size_t values = 1;
    for (std::size_t i = 0; i < n; ++i)
    {
      values *= 3;
    }
    for (std::size_t v = 0; v < values; ++v)
    {
      std::vector<double> s(n);
      std::size_t         code = v;
      for (std::size_t i = 0; i < n; ++i, code /= 3)
      {
        s[i] = static_cast<double>(code % 3);
      }
      for (std::size_t gmask = 0; gmask < (1u << n); ++gmask)
      {
        for (std::size_t smask : {std::size_t{0}, std::size_t{1}})
        {
          Mask gold(n), special(n, 0);
          for (std::size_t i = 0; i < n; ++i)
          {
            gold[i] = (gmask >> i) & 1u;
          }
          if (smask && n > 1 && !gold[0])
          {
            special[0] = 1;
          }
          auto const a = auprc(s, gold, special);
          auto const o = support::oracle_auprc(s, gold, special);
          ASSERT_EQ(a.has_value(), o.has_value());
          if (a)
          {
            ASSERT_NEAR(*a, *o, 1e-9);
            ASSERT_NEAR(*token_f1(s, gold, special), *support::oracle_token_f1(s, gold, special), 1e-9);
          }
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Faithfulness
// ---------------------------------------------------------------------------

TEST(CompSuff, LookupExample)
{
  // p(x)=0.9 ; removing token 2 drops to 0.3 ; keeping only token 2 gives 0.8
  LookupModel model(6, 2, [](std::vector<TokenId> const &t) {
    bool const has2 = std::find(t.begin(), t.end(), 2) != t.end();
    bool const has3 = std::find(t.begin(), t.end(), 3) != t.end();
    return logits_for(has2 ? (has3 ? 0.9 : 0.8) : 0.3);
  });
  Instance inst = support::plain_instance(2);
  inst.tokens   = {2, 3};
  auto const s  = make_scores({1.0, 0.0}, inst, 0);
  auto const f  = comp_suff_instance(model, inst, s, {50}, 0);
  EXPECT_NEAR(f.comp, 0.6, 1e-12);
  EXPECT_NEAR(f.suff, 0.1, 1e-12);
  auto const full = comp_suff_instance(model, inst, s, {100}, 0);
  EXPECT_NEAR(full.suff, 0.0, 1e-12);
}

TEST(CompSuff, SingletonKEqualsDirectEvaluation)
{
  support::LinearToyModel toy(12, 4, 2, 16, 4);
  Rng                     rng(5);
  for (int trial = 0; trial < 30; ++trial)
  {
    auto                inst = support::random_instance(rng, 2 + rng.below(8), 11, 2);
    std::vector<double> raw(inst.size());
    for (auto &v : raw)
    {
      v = rng.normal();
    }
    auto const   s   = make_scores(raw, inst, 1);
    double const k   = std::vector<double>{1, 5, 10, 20, 50, 100}[rng.below(6)];
    auto const   f   = comp_suff_instance(toy, inst, s, {k}, 1);
    auto const   r   = binarize_topk(s, k, inst);
    double const p   = predicted_probability(toy, inst.tokens, 1);
    double const pc  = predicted_probability(toy, build_masked_variant(inst, r.mask, VariantKind::complement, 11).tokens, 1);
    double const pr  = predicted_probability(toy, build_masked_variant(inst, r.mask, VariantKind::rationale_only, 11).tokens, 1);
    EXPECT_EQ(f.comp, p - pc);
    EXPECT_EQ(f.suff, p - pr);
  }
}

TEST(CompSuff, RandomScoresMatchExhaustiveMaskingOracle)
{
  // For uniformly random scores the expected comp/suff at a given k equals the
  // average over all subsets of that size; a seeded sample tracks it closely.
  support::LinearToyModel toy(8, 3, 2, 8, 6);
  Instance                inst = support::plain_instance(5);
  inst.tokens                  = {1, 2, 3, 4, 5};
  double const  k              = 40;  // two of five tokens
  double const  p              = predicted_probability(toy, inst.tokens, 0);
  double        exact_comp = 0, exact_suff = 0, subsets = 0;
  for (unsigned m = 0; m < 32; ++m)
  {
    if (__builtin_popcount(m) != 2)
    {
      continue;
    }
    Mask r(5);
    for (int i = 0; i < 5; ++i)
    {
      r[static_cast<std::size_t>(i)] = (m >> i) & 1u;
    }
    exact_comp += p - predicted_probability(toy, build_masked_variant(inst, r, VariantKind::complement, 7).tokens, 0);
    exact_suff +=
      p - predicted_probability(toy, build_masked_variant(inst, r, VariantKind::rationale_only, 7).tokens, 0);
    subsets += 1;
  }
  double comp = 0, suff = 0;
  int    draws = 4000;
  for (int d = 0; d < draws; ++d)
  {
    inst.id      = "r" + std::to_string(d);
    auto const s = heuristic_scores(HeuristicKind::random, inst, 99, 0);
    auto const f = comp_suff_instance(toy, inst, s, {k}, 0);
    comp += f.comp;
    suff += f.suff;
  }
  EXPECT_NEAR(comp / draws, exact_comp / subsets, 0.01);
  EXPECT_NEAR(suff / draws, exact_suff / subsets, 0.01);
}

// ---------------------------------------------------------------------------
// NRG
// ---------------------------------------------------------------------------

TEST(Nrg, Examples)
{
  auto a = nrg({{"a", 0.1}, {"b", 0.4}}, true);
  EXPECT_DOUBLE_EQ(a["b"], 1.0);
  EXPECT_DOUBLE_EQ(a["a"], 0.0);
  auto b = nrg({{"a", 0.1}, {"b", 0.2}, {"c", 0.4}}, true);
  EXPECT_NEAR(b["b"], 1.0 / 3.0, 1e-12);
  auto c = nrg({{"a", 0.3}, {"b", 0.1}}, false);
  EXPECT_DOUBLE_EQ(c["b"], 1.0);
  EXPECT_DOUBLE_EQ(c["a"], 0.0);
  auto d = nrg({{"a", 0.3}, {"b", 0.3}}, true);
  EXPECT_DOUBLE_EQ(d["a"], 1.0);
  EXPECT_DOUBLE_EQ(d["b"], 1.0);
  EXPECT_THROW(nrg({{"a", 0.3}}, true), ValidationError);
}

TEST(Nrg, PropertiesOverRandomScoreSets)
{
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial)
  {
    std::map<std::string, double> z, scaled;
    std::size_t const             n = 2 + rng.below(6);
    double const                  a = 0.01 + 10 * rng.uniform();
    double const                  b = rng.normal(0, 5);
    for (std::size_t i = 0; i < n; ++i)
    {
      std::string const m = "m" + std::to_string(i);
      z[m]                = rng.normal();
      scaled[m]           = a * z[m] + b;
    }
    for (bool higher : {true, false})
    {
      auto const g  = nrg(z, higher);
      auto const gs = nrg(scaled, higher);
      double     lo = 2, hi = -1;
      for (auto const &[m, v] : g)
      {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
        EXPECT_NEAR(v, gs.at(m), 1e-9);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
        for (auto const &[m2, v2] : g)
        {
          if (z.at(m) > z.at(m2))
          {
            EXPECT_EQ(higher ? v > v2 : v < v2, true);
          }
        }
      }
      EXPECT_DOUBLE_EQ(lo, 0.0);
      EXPECT_DOUBLE_EQ(hi, 1.0);
    }
  }
}

TEST(CompositeNrg, ThreeMethodTable)
{
  std::vector<MetricsRecord> recs = {
    record("a", 0.5, 0.1, 0.9, 0.8, 0.90),
    record("b", 0.3, 0.2, 0.5, 0.6, 0.95),
    record("c", 0.1, 0.3, 0.7, 0.4, 0.80),
  };
  auto const t = composite_nrg(recs);
  // a: comp 1, suff 1 -> F 1 ; auprc 1, tf1 1 -> P 1 ; task (0.9-0.8)/0.15 = 2/3
  EXPECT_NEAR(t.rows.at("a").fnrg, 1.0, 1e-12);
  EXPECT_NEAR(*t.rows.at("a").pnrg, 1.0, 1e-12);
  EXPECT_NEAR(t.rows.at("a").tnrg, 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(t.rows.at("a").cnrg, (1.0 + 1.0 + 2.0 / 3.0) / 3.0, 1e-12);
  // b: comp 0.5, suff 0.5 -> F 0.5 ; auprc 0, tf1 0.5 -> P 0.25 ; task 1
  EXPECT_NEAR(t.rows.at("b").fnrg, 0.5, 1e-12);
  EXPECT_NEAR(*t.rows.at("b").pnrg, 0.25, 1e-12);
  EXPECT_NEAR(t.rows.at("b").cnrg, (0.5 + 0.25 + 1.0) / 3.0, 1e-12);
  // c: F 0 ; auprc 0.5, tf1 0 -> P 0.25 ; task 0
  EXPECT_NEAR(t.rows.at("c").fnrg, 0.0, 1e-12);
  EXPECT_NEAR(*t.rows.at("c").pnrg, 0.25, 1e-12);
  EXPECT_NEAR(t.rows.at("c").cnrg, 0.25 / 3.0, 1e-12);
  for (auto const &[m, row] : t.rows)
  {
    EXPECT_NEAR(row.cnrg, (row.fnrg + *row.pnrg + row.tnrg) / 3.0, 1e-12);
  }
}

TEST(CompositeNrg, BestAndWorstAndSplit)
{
  auto t = composite_nrg({record("best", 1, 0, 1, 1, 1), record("worst", 0, 1, 0, 0, 0)});
  EXPECT_DOUBLE_EQ(t.rows.at("best").cnrg, 1.0);
  EXPECT_DOUBLE_EQ(t.rows.at("worst").cnrg, 0.0);
  auto u = composite_nrg({record("faith", 1, 0, 0, 0, 0), record("rest", 0, 1, 1, 1, 1)});
  EXPECT_NEAR(u.rows.at("faith").cnrg, 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(u.rows.at("rest").cnrg, 2.0 / 3.0, 1e-12);
}

TEST(CompositeNrg, WeightsAndMissingPlausibility)
{
  std::vector<MetricsRecord> recs = {record("a", 0.5, 0.1, 0.9, 0.8, 0.9), record("b", 0.3, 0.2, 0.5, 0.6, 0.95)};
  auto const t = composite_nrg(recs, {0, 0, 1});
  for (auto const &[m, row] : t.rows)
  {
    EXPECT_DOUBLE_EQ(row.cnrg, row.tnrg);
  }
  recs[1].auprc.reset();
  auto const u = composite_nrg(recs);
  for (auto const &[m, row] : u.rows)
  {
    EXPECT_FALSE(row.pnrg.has_value());
    EXPECT_NEAR(row.cnrg, (row.fnrg + row.tnrg) / 2.0, 1e-12);
  }
  EXPECT_THROW(composite_nrg(recs, {-1, 1, 1}), ValidationError);
  EXPECT_THROW(composite_nrg({recs[0]}), ValidationError);
  recs[1].metric_kind = TaskMetric::macro_f1;
  EXPECT_THROW(composite_nrg(recs), ValidationError);
}

TEST(CompositeNrg, SeedAveragingModes)
{
  std::vector<MetricsRecord> recs = {
    record("a", 0.5, 0.1, 0.9, 0.8, 0.9, 0), record("a", 0.1, 0.1, 0.9, 0.8, 0.9, 1),
    record("b", 0.1, 0.2, 0.5, 0.6, 0.7, 0), record("b", 0.5, 0.2, 0.5, 0.6, 0.7, 1),
  };
  auto const avg = composite_nrg(recs);
  EXPECT_NEAR(avg.raw.at("a").comp_aopc, 0.3, 1e-12);
  EXPECT_EQ(avg.raw.at("a").seeds.size(), 2u);
  EXPECT_NEAR(avg.rows.at("a").comp_nrg, 1.0, 1e-12);  // 0.3 vs 0.3 is degenerate
  EXPECT_NEAR(avg.rows.at("b").comp_nrg, 1.0, 1e-12);
  auto const ps = composite_nrg(recs, {}, true);
  EXPECT_NEAR(ps.rows.at("a").comp_nrg, 0.5, 1e-12);  // seed 0: a best ; seed 1: b best
  EXPECT_NEAR(ps.rows.at("b").comp_nrg, 0.5, 1e-12);
}

TEST(MetricsRecord, JsonRoundTripAndCsdIdentity)
{
  auto r  = record("m", 0.4, 0.15, std::nullopt, std::nullopt, 0.8, 3);
  r.gamma = 5.0;
  r.K     = {1, 5};
  auto b  = MetricsRecord::from_json(nlohmann::json::parse(r.to_json().dump()));
  EXPECT_EQ(b.method, "m");
  EXPECT_EQ(b.seeds, std::vector<int>{3});
  EXPECT_NEAR(b.csd, b.comp_aopc - b.suff_aopc, 1e-9);
  EXPECT_FALSE(b.auprc.has_value());
  EXPECT_EQ(b.gamma, std::optional<double>(5.0));
  EXPECT_EQ(b.K, r.K);
}
