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

// Independent oracles, toy models and random generators for the test suites.

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <set>
#include <vector>

#include "unirex/unirex.hpp"

namespace unirex::support {

using ag::Matrix;

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

inline Matrix random_matrix(Rng &rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0)
{
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i)
  {
    m(i) = rng.normal(0.0, scale);
  }
  return m;
}

/// Instance with CLS/SEP specials around `content` tokens drawn from [2, vocab).
inline Instance random_instance(Rng &rng, std::size_t content, int vocab, int num_classes, bool gold = true,
                                std::string id = "x")
{
  Instance inst;
  inst.id = std::move(id);
  inst.tokens.push_back(0);
  for (std::size_t i = 0; i < content; ++i)
  {
    inst.tokens.push_back(static_cast<TokenId>(2 + rng.below(static_cast<std::uint64_t>(vocab - 2))));
  }
  inst.tokens.push_back(1);
  inst.is_special.assign(inst.tokens.size(), 0);
  inst.is_special.front() = 1;
  inst.is_special.back()  = 1;
  inst.target_label       = static_cast<int>(rng.below(static_cast<std::uint64_t>(num_classes)));
  if (gold)
  {
    Mask g(inst.tokens.size(), 0);
    g[1 + rng.below(content)] = 1;
    for (std::size_t t = 1; t + 1 < g.size(); ++t)
    {
      if (rng.uniform() < 0.3)
      {
        g[t] = 1;
      }
    }
    inst.gold_rationale = std::move(g);
  }
  return inst;
}

/// Instance with no specials and the given pattern of special flags.
inline Instance plain_instance(std::size_t n, Mask special = {}, std::optional<Mask> gold = std::nullopt)
{
  Instance inst;
  inst.id = "p";
  for (std::size_t i = 0; i < n; ++i)
  {
    inst.tokens.push_back(static_cast<TokenId>(i % 5));
  }
  inst.is_special     = special.empty() ? Mask(n, 0) : std::move(special);
  inst.gold_rationale = std::move(gold);
  return inst;
}

// ---------------------------------------------------------------------------
// Numerical oracles
// ---------------------------------------------------------------------------

/// Central finite-difference gradient of a scalar function of a matrix.
inline Matrix finite_difference(std::function<double(Matrix const &)> const &f, Matrix x, double h = 1e-5)
{
  Matrix g(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i)
  {
    double const orig = x(i);
    x(i)              = orig + h;
    double const up   = f(x);
    x(i)              = orig - h;
    double const down = f(x);
    x(i)              = orig;
    g(i)              = (up - down) / (2.0 * h);
  }
  return g;
}

inline double relative_error(Matrix const &a, Matrix const &b)
{
  double const denom = std::max({a.norm(), b.norm(), 1e-8});
  return (a - b).norm() / denom;
}

// ---------------------------------------------------------------------------
// Rationale oracles
// ---------------------------------------------------------------------------

/// Top-k count computed with integer arithmetic: round-half-up of k*n/100.
inline std::size_t oracle_count(double k, std::size_t n_nonspecial)
{
  long double exact = static_cast<long double>(k) * static_cast<long double>(n_nonspecial);
  std::size_t c     = static_cast<std::size_t>(std::floor(exact / 100.0L));
  if (exact - 100.0L * static_cast<long double>(c) >= 50.0L - 1e-9L)
  {
    ++c;
  }
  return std::max<std::size_t>(1, std::min(c, n_nonspecial));
}

/// Position t is selected iff fewer than `count` non-special positions beat it
/// (higher score, or equal score at a lower index).
inline Mask oracle_topk(std::vector<double> const &scores, Mask const &special, double k)
{
  std::size_t n_ns = 0;
  for (auto s : special)
  {
    n_ns += s == 0;
  }
  Mask out(scores.size(), 0);
  if (n_ns == 0)
  {
    return out;
  }
  std::size_t const c = oracle_count(k, n_ns);
  for (std::size_t t = 0; t < scores.size(); ++t)
  {
    if (special[t])
    {
      continue;
    }
    std::size_t beats = 0;
    for (std::size_t j = 0; j < scores.size(); ++j)
    {
      if (!special[j] && j != t && (scores[j] > scores[t] || (scores[j] == scores[t] && j < t)))
      {
        ++beats;
      }
    }
    out[t] = beats < c;
  }
  return out;
}

/// Average precision from an exhaustive sweep over every distinct threshold.
inline std::optional<double> oracle_auprc(std::vector<double> const &scores, Mask const &gold, Mask const &special)
{
  std::set<double, std::greater<>> thresholds;
  double                           positives = 0;
  for (std::size_t t = 0; t < scores.size(); ++t)
  {
    if (!special[t])
    {
      thresholds.insert(scores[t]);
      positives += gold[t];
    }
  }
  if (positives == 0)
  {
    return std::nullopt;
  }
  double ap = 0.0, prev_recall = 0.0;
  for (double tau : thresholds)
  {
    double tp = 0, predicted = 0;
    for (std::size_t t = 0; t < scores.size(); ++t)
    {
      if (!special[t] && scores[t] >= tau)
      {
        ++predicted;
        tp += gold[t];
      }
    }
    double const recall = tp / positives;
    ap += (recall - prev_recall) * (tp / predicted);
    prev_recall = recall;
  }
  return ap;
}

inline std::optional<double> oracle_token_f1(std::vector<double> const &scores, Mask const &gold,
                                             Mask const &special)
{
  std::size_t g = 0, n_ns = 0;
  for (std::size_t t = 0; t < gold.size(); ++t)
  {
    if (!special[t])
    {
      g += gold[t];
      ++n_ns;
    }
  }
  if (g == 0)
  {
    return std::nullopt;
  }
  double const k    = 100.0 * static_cast<double>(g) / static_cast<double>(n_ns);
  Mask const   pred = oracle_topk(scores, special, k);
  double       tp = 0, fp = 0, fn = 0;
  for (std::size_t t = 0; t < gold.size(); ++t)
  {
    if (special[t])
    {
      continue;
    }
    tp += pred[t] && gold[t];
    fp += pred[t] && !gold[t];
    fn += !pred[t] && gold[t];
  }
  if (tp == 0)
  {
    return 0.0;
  }
  double const p = tp / (tp + fp), r = tp / (tp + fn);
  return 2 * p * r / (p + r);
}

// ---------------------------------------------------------------------------
// Toy task models
// ---------------------------------------------------------------------------

/// logits = sum_t e_t W_t + b with one weight block per position.
class LinearToyModel : public TaskModel
{
public:
  LinearToyModel(int vocab, int dim, int classes, int max_len, std::uint64_t seed)
    : vocab_(vocab)
    , dim_(dim)
    , classes_(classes)
  {
    Rng rng(seed);
    table_ = ag::Parameter("toy.table", random_matrix(rng, vocab, dim));
    for (int t = 0; t < max_len; ++t)
    {
      weights_.emplace_back("toy.w" + std::to_string(t), random_matrix(rng, dim, classes, 0.5));
    }
    bias_ = ag::Parameter("toy.bias", random_matrix(rng, 1, classes, 0.1));
  }

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
    return dim_;
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
    Var out = tape.param(bias_);
    for (Eigen::Index t = 0; t < x.rows(); ++t)
    {
      out = out + ag::matmul(ag::row(x, static_cast<int>(t)), tape.param(weights_[static_cast<std::size_t>(t)]));
    }
    return out;
  }
  ag::ParameterList parameters() override
  {
    ag::ParameterList out{&table_, &bias_};
    for (auto &w : weights_)
    {
      out.push_back(&w);
    }
    return out;
  }

  Matrix const &weight(std::size_t t) const
  {
    return weights_.at(t).value;
  }
  Matrix &table()
  {
    return table_.value;
  }

private:
  int                        vocab_;
  int                        dim_;
  int                        classes_;
  ag::Parameter              table_;
  std::vector<ag::Parameter> weights_;
  ag::Parameter              bias_;
};

/// Logits that ignore the input entirely.
class ConstantModel : public TaskModel
{
public:
  ConstantModel(int vocab, int dim, int classes)
    : vocab_(vocab)
    , dim_(dim)
    , classes_(classes)
  {
    Rng rng(3);
    table_ = ag::Parameter("const.table", random_matrix(rng, vocab, dim));
    bias_  = ag::Parameter("const.bias", random_matrix(rng, 1, classes));
  }
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
    return dim_;
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
    (void)x;
    return tape.param(bias_);
  }
  ag::ParameterList parameters() override
  {
    return {&table_, &bias_};
  }

private:
  int           vocab_;
  int           dim_;
  int           classes_;
  ag::Parameter table_;
  ag::Parameter bias_;
};

/// Small synthetic corpus for fast tests.
inline Dataset small_synthetic(std::size_t n_train = 200, std::size_t n_dev = 40, std::size_t n_test = 40,
                               std::uint64_t seed = 11, bool gold = true)
{
  SyntheticConfig c;
  c.n_train   = n_train;
  c.n_dev     = n_dev;
  c.n_test    = n_test;
  c.seed      = seed;
  c.with_gold = gold;
  return make_synthetic(c);
}

inline EncoderConfig tiny_encoder()
{
  EncoderConfig c;
  c.dim    = 16;
  c.heads  = 2;
  c.layers = 1;
  c.ff_dim = 32;
  return c;
}

}  // namespace unirex::support
