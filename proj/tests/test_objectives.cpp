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

#include "test_support.hpp"

using namespace unirex;
using support::finite_difference;
using support::random_matrix;
using support::relative_error;

namespace {

Eigen::RowVectorXd row(std::initializer_list<double> v)
{
  Eigen::RowVectorXd r(static_cast<Eigen::Index>(v.size()));
  Eigen::Index       i = 0;
  for (double x : v)
  {
    r(i++) = x;
  }
  return r;
}

double plaus(std::vector<double> s, Mask gold, PlausCriterion c, double m_p = 1.0, Mask special = {})
{
  if (special.empty())
  {
    special.assign(gold.size(), 0);
  }
  return plausibility_loss(s, gold, special, c, m_p);
}

}  // namespace

TEST(TaskLoss, Examples)
{
  EXPECT_NEAR(task_loss(row({0, 0}), 0), std::log(2.0), 1e-12);
  EXPECT_NEAR(task_loss(row({10, -10}), 0), 2.0611536e-9, 1e-15);
  EXPECT_NEAR(task_loss(row({60, -60}), 0), 0.0, 1e-12);
  EXPECT_THROW(task_loss(row({0, 0}), 2), ValidationError);
}

TEST(CompLoss, Examples)
{
  EXPECT_DOUBLE_EQ(comp_loss(1.0, 3.0, CompCriterion::margin, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(comp_loss(2.0, 1.5, CompCriterion::diff, 1.0), 0.5);
  EXPECT_DOUBLE_EQ(comp_loss(0.7, 0.7, CompCriterion::margin, 0.3), 0.3);
}

TEST(SuffLoss, Examples)
{
  auto const p = softmax(row({0.3, -1.0, 2.0}));
  EXPECT_NEAR(suff_loss(0.5, 0.5, p, p, SuffCriterion::kl, 0.1), 0.0, 1e-12);
  EXPECT_NEAR(suff_loss(0.4, 0.7, p, p, SuffCriterion::mae, 0.1), 0.3, 1e-12);
  EXPECT_DOUBLE_EQ(suff_loss(1.0, 3.0, p, p, SuffCriterion::margin, 0.5), 0.0);
  EXPECT_DOUBLE_EQ(suff_loss(1.0, 3.0, p, p, SuffCriterion::diff, 0.5), -2.0);
  auto const q = softmax(row({1.0, 0.0, 0.0}));
  // KL(rationale || full)
  double const expected = (q.array() * ((q.array() + kKlEpsilon).log() - (p.array() + kKlEpsilon).log())).sum();
  EXPECT_NEAR(suff_loss(0.0, 0.0, p, q, SuffCriterion::kl, 0.1), expected, 1e-12);
}

TEST(TotalLoss, WeightedSum)
{
  LossConfig c;
  EXPECT_DOUBLE_EQ(total_loss(1.0, 2.0, 4.0, 6.0, c), 7.0);
  c.alpha_c = c.alpha_s = c.alpha_p = 0.0;
  EXPECT_DOUBLE_EQ(total_loss(1.0, 2.0, 4.0, 6.0, c), 1.0);
}

TEST(LossConfig, Defaults)
{
  LossConfig c;
  EXPECT_EQ(c.K, (std::vector<double>{1, 5, 10, 20, 50}));
  EXPECT_DOUBLE_EQ(c.alpha_p, 0.5);
  EXPECT_DOUBLE_EQ(c.alpha_c, 0.5);
  EXPECT_DOUBLE_EQ(c.alpha_s, 0.5);
  c.K = {};
  EXPECT_THROW(c.validate(), ValidationError);
  c.K       = {0};
  EXPECT_THROW(c.validate(), ValidationError);
  c.K       = {10};
  c.alpha_c = -1;
  EXPECT_THROW(c.validate(), ValidationError);
}

TEST(PlausLoss, Examples)
{
  EXPECT_NEAR(plaus({0, 0}, {1, 0}, PlausCriterion::bce), std::log(2.0), 1e-12);
  EXPECT_NEAR(plaus({2, -3}, {1, 0}, PlausCriterion::linear), -2.5, 1e-12);
  EXPECT_NEAR(plaus({2, -3}, {1, 0}, PlausCriterion::linear_margin, 1.0), 0.0, 1e-12);
  EXPECT_NEAR(plaus({0.2, 0.1}, {1, 0}, PlausCriterion::linear_margin, 1.0), 1.0 + (-0.2 + 0.1) / 2, 1e-12);
  EXPECT_NEAR(plaus({40, -40}, {1, 0}, PlausCriterion::bce), 0.0, 1e-12);
  // KL between softmax(scores) and normalised gold; gold uniform over its two positives
  double const a = 1.0, b = 1.0, c = -2.0;
  double const z = std::exp(a) + std::exp(b) + std::exp(c);
  double const p[3] = {std::exp(a) / z, std::exp(b) / z, std::exp(c) / z};
  double const q[3] = {0.5, 0.5, 0.0};
  double       kl   = 0;
  for (int i = 0; i < 3; ++i)
  {
    kl += p[i] * (std::log(p[i] + kKlEpsilon) - std::log(q[i] + kKlEpsilon));
  }
  EXPECT_NEAR(plaus({a, b, c}, {1, 1, 0}, PlausCriterion::kl), kl, 1e-9);
  EXPECT_THROW(plaus({1, 2}, {0, 0}, PlausCriterion::kl), ValidationError);
}

TEST(PlausLoss, SpecialPositionsIgnored)
{
  Mask special = {1, 0, 0, 1};
  double with  = plaus({kSpecialScore, 0, 0, kSpecialScore}, {0, 1, 0, 0}, PlausCriterion::bce, 1.0, special);
  EXPECT_NEAR(with, std::log(2.0), 1e-12);
}

TEST(PlausLoss, GradientsMatchFiniteDifferences)
{
  Rng rng(50);
  for (int trial = 0; trial < 50; ++trial)
  {
    std::size_t const n = 2 + rng.below(8);
    Mask              gold(n, 0), special(n, 0);
    for (std::size_t t = 0; t < n; ++t)
    {
      gold[t]    = rng.uniform() < 0.4;
      special[t] = !gold[t] && rng.uniform() < 0.2;
    }
    gold[rng.below(n)] = 1;
    for (std::size_t t = 0; t < n; ++t)
    {
      if (gold[t])
      {
        special[t] = 0;
      }
    }
    Matrix const x = random_matrix(rng, static_cast<Eigen::Index>(n), 1, 2.0);
    for (auto c : {PlausCriterion::bce, PlausCriterion::kl, PlausCriterion::linear, PlausCriterion::linear_margin})
    {
      double const m_p = c == PlausCriterion::linear_margin ? 10.0 : 1.0;  // keep the hinge differentiable
      Tape         tape;
      Var          in = tape.input(x);
      tape.backward(plausibility_loss(in, gold, special, c, m_p));
      auto f = [&](Matrix const &v) {
        Tape t(ag::GradMode::disabled);
        return plausibility_loss(t.constant(v), gold, special, c, m_p).scalar();
      };
      Matrix analytic = in.grad().size() ? in.grad() : Matrix::Zero(x.rows(), 1);
      EXPECT_LT(relative_error(analytic, finite_difference(f, x)), 1e-4) << "trial " << trial;
    }
  }
}

TEST(TaskLoss, GradientMatchesFiniteDifferences)
{
  Rng rng(51);
  for (int trial = 0; trial < 50; ++trial)
  {
    Eigen::Index const m = 2 + static_cast<Eigen::Index>(rng.below(5));
    int const          y = static_cast<int>(rng.below(static_cast<std::uint64_t>(m)));
    Matrix const       x = random_matrix(rng, 1, m, 3.0);
    Tape               tape;
    Var                in = tape.input(x);
    tape.backward(task_loss(in, y));
    auto f = [&](Matrix const &v) { return task_loss(Eigen::RowVectorXd(v.row(0)), y); };
    EXPECT_LT(relative_error(in.grad(), finite_difference(f, x)), 1e-4);
  }
}

TEST(TapeAndValueAgree, CompAndSuff)
{
  Rng rng(52);
  for (int trial = 0; trial < 20; ++trial)
  {
    Tape   tape(ag::GradMode::disabled);
    Matrix a = random_matrix(rng, 1, 3), b = random_matrix(rng, 1, 3);
    Var    la = tape.constant(a), lb = tape.constant(b);
    for (auto c : {SuffCriterion::diff, SuffCriterion::margin, SuffCriterion::kl, SuffCriterion::mae})
    {
      Var const    pa = ag::softmax_rows(la), pb = ag::softmax_rows(lb);
      double const v  = suff_loss(task_loss(lb, 0), task_loss(la, 0), pa, pb, c, 0.1).scalar();
      double const d  = suff_loss(task_loss(Eigen::RowVectorXd(b), 0), task_loss(Eigen::RowVectorXd(a), 0),
                                  softmax(Eigen::RowVectorXd(a)), softmax(Eigen::RowVectorXd(b)), c, 0.1);
      EXPECT_NEAR(v, d, 1e-12);
    }
    for (auto c : {CompCriterion::diff, CompCriterion::margin})
    {
      EXPECT_NEAR(comp_loss(task_loss(la, 1), task_loss(lb, 1), c, 1.0).scalar(),
                  comp_loss(task_loss(Eigen::RowVectorXd(a), 1), task_loss(Eigen::RowVectorXd(b), 1), c, 1.0), 1e-12);
    }
  }
}

class FaithOverK : public ::testing::Test
{
protected:
  support::LinearToyModel toy{12, 4, 2, 16, 8};
  Rng                     rng{60};
};

TEST_F(FaithOverK, FullRationaleMakesSuffDiffZero)
{
  auto       inst = support::random_instance(rng, 7, 11, 2);
  auto const s    = make_scores(std::vector<double>(inst.size(), 1.0), inst, 0);
  LossConfig c;
  c.K              = {100};
  c.suff_criterion = SuffCriterion::diff;
  c.comp_criterion = CompCriterion::diff;
  auto const t     = faithfulness_loss_over_K(toy, inst, s, c, inst.target_label);
  EXPECT_NEAR(t.suff_K, 0.0, 1e-12);
  auto const all_masked = build_masked_variant(inst, Mask(inst.size(), 1), VariantKind::complement, toy.mask_token());
  EXPECT_NEAR(t.comp_K,
              task_loss(forward(toy, inst.tokens), inst.target_label) -
                task_loss(forward(toy, all_masked.tokens), inst.target_label),
              1e-12);
}

TEST_F(FaithOverK, SingletonKAndMeanOverK)
{
  for (int trial = 0; trial < 20; ++trial)
  {
    auto                inst = support::random_instance(rng, 3 + rng.below(10), 11, 2);
    std::vector<double> raw(inst.size());
    for (auto &v : raw)
    {
      v = rng.normal();
    }
    auto const s = make_scores(raw, inst, 0);
    LossConfig c;
    c.suff_criterion = static_cast<SuffCriterion>(rng.below(4));
    c.comp_criterion = static_cast<CompCriterion>(rng.below(2));
    double comp = 0, suff = 0;
    for (double k : c.K)
    {
      LossConfig single = c;
      single.K          = {k};
      auto const t      = faithfulness_loss_over_K(toy, inst, s, single, 1);
      comp += t.comp_K;
      suff += t.suff_K;

      // direct evaluation of one k without the variant cache
      auto const   r  = binarize_topk(s, k, inst);
      auto const   lf = forward(toy, inst.tokens);
      auto const   lc = forward(toy, build_masked_variant(inst, r.mask, VariantKind::complement, toy.mask_token()).tokens);
      auto const   lr = forward(toy, build_masked_variant(inst, r.mask, VariantKind::rationale_only, toy.mask_token()).tokens);
      EXPECT_NEAR(t.comp_K, comp_loss(task_loss(lf, 1), task_loss(lc, 1), c.comp_criterion, c.m_c), 1e-12);
      EXPECT_NEAR(t.suff_K,
                  suff_loss(task_loss(lr, 1), task_loss(lf, 1), softmax(lf), softmax(lr), c.suff_criterion, c.m_s),
                  1e-12);
    }
    auto const all = faithfulness_loss_over_K(toy, inst, s, c, 1);
    EXPECT_NEAR(all.comp_K, comp / c.K.size(), 1e-12);
    EXPECT_NEAR(all.suff_K, suff / c.K.size(), 1e-12);
  }
}

TEST_F(FaithOverK, GradientReachesOnlyTheTaskModel)
{
  auto       inst = support::random_instance(rng, 6, 11, 2);
  auto const s    = make_scores(std::vector<double>(inst.size(), 0.5), inst, 0);
  LossConfig c;
  c.comp_criterion = CompCriterion::diff;
  Tape tape;
  Var  full = toy.logits(tape, inst.tokens);
  auto t    = faithfulness_loss_over_K(tape, toy, inst, s, c, full, 0);
  for (auto *p : toy.parameters())
  {
    p->zero_grad();
  }
  tape.backward(t.comp_K + t.suff_K);
  tape.accumulate_parameter_grads();
  double norm = 0;
  for (auto *p : toy.parameters())
  {
    norm += p->grad.norm();
  }
  EXPECT_GT(norm, 0.0);
}
