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
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "unirex/data_model.hpp"
#include "unirex/encoder.hpp"

namespace unirex {

inline constexpr double kSpecialScore = -std::numeric_limits<double>::infinity();

/// Per-token importance scores; special positions hold kSpecialScore.
struct RationaleScores
{
  std::vector<double> scores;
  std::string         instance_id;
  int                 target_class = 0;

  std::size_t size() const noexcept
  {
    return scores.size();
  }
};

/// Top-k% selection of a score vector.
struct BinaryRationale
{
  Mask   mask;
  double k = 0.0;

  std::size_t count() const
  {
    return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 1));
  }
};

/// Sets special positions to the sentinel.
inline RationaleScores make_scores(std::vector<double> raw, Instance const &inst, int cls)
{
  if (raw.size() != inst.size())
  {
    throw ValidationError("score length does not match instance length");
  }
  for (std::size_t t = 0; t < raw.size(); ++t)
  {
    if (inst.is_special[t])
    {
      raw[t] = kSpecialScore;
    }
  }
  return RationaleScores{std::move(raw), inst.id, cls};
}

// ---------------------------------------------------------------------------
// Top-k% binarization
// ---------------------------------------------------------------------------

/// max(1, round-half-up(k/100 * n_nonspecial)).
inline std::size_t rationale_size(double k, std::size_t n_nonspecial)
{
  if (!(k > 0.0 && k <= 100.0))
  {
    throw ValidationError("k must lie in (0, 100], got " + std::to_string(k));
  }
  double const exact = k * static_cast<double>(n_nonspecial) / 100.0;
  auto         count = static_cast<std::size_t>(std::floor(exact + 0.5 + 1e-9));
  if (n_nonspecial == 0)
  {
    return 0;
  }
  return std::clamp<std::size_t>(count, 1, n_nonspecial);
}

/// Non-special positions ordered by descending score, ties by lower index.
/// NaN ranks last.
inline std::vector<std::size_t> rank_positions(std::vector<double> const &scores, Mask const &is_special)
{
  std::vector<std::size_t> order;
  order.reserve(scores.size());
  for (std::size_t t = 0; t < scores.size(); ++t)
  {
    if (!is_special[t])
    {
      order.push_back(t);
    }
  }
  auto key = [&](std::size_t t) { return std::isnan(scores[t]) ? kSpecialScore : scores[t]; };
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return key(a) > key(b); });
  return order;
}

inline BinaryRationale binarize_topk(RationaleScores const &scores, double k, Instance const &inst)
{
  if (scores.size() != inst.size())
  {
    throw ValidationError("score length does not match instance length");
  }
  std::size_t const count = rationale_size(k, inst.num_nonspecial());
  auto const        order = rank_positions(scores.scores, inst.is_special);
  BinaryRationale   out{Mask(inst.size(), 0), k};
  for (std::size_t i = 0; i < count; ++i)
  {
    out.mask[order[i]] = 1;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Heuristic extractors (attribution algorithms)
// ---------------------------------------------------------------------------

enum class Pooling
{
  sum,
  l2
};

struct AttributionOptions
{
  AttributionTarget target     = AttributionTarget::probability;
  Pooling           pooling    = Pooling::sum;
  int               ig_steps   = 3;
};

namespace detail {

inline std::vector<double> pool_rows(Matrix const &dims, Pooling pooling)
{
  std::vector<double> out(static_cast<std::size_t>(dims.rows()));
  for (Eigen::Index t = 0; t < dims.rows(); ++t)
  {
    out[static_cast<std::size_t>(t)] = pooling == Pooling::sum ? dims.row(t).sum() : dims.row(t).norm();
  }
  return out;
}

/// All non-special positions masked; the integrated-gradients reference input.
inline std::vector<TokenId> baseline_tokens(Instance const &inst, TokenId mask_token)
{
  Mask all(inst.size(), 1);
  return build_masked_variant(inst, all, VariantKind::complement, mask_token).tokens;
}

}  // namespace detail

/// Per-dimension gradient of the target w.r.t. each token embedding (n x d).
inline Matrix gradient_dims(TaskModel &model, Instance const &inst, int cls, AttributionTarget target)
{
  ForwardPass pass(model, inst.tokens, true);
  return pass.embedding_gradient(cls, target);
}

/// Per-dimension embedding .* gradient (n x d).
inline Matrix input_x_gradient_dims(TaskModel &model, Instance const &inst, int cls, AttributionTarget target)
{
  ForwardPass pass(model, inst.tokens, true);
  Matrix      g = pass.embedding_gradient(cls, target);
  return pass.embeddings().cwiseProduct(g);
}

/// Per-dimension integrated gradients (n x d), left Riemann sum over `steps`
/// points of the straight path from the all-mask baseline to the input.
inline Matrix integrated_gradients_dims(TaskModel &model, Instance const &inst, int cls, int steps,
                                        AttributionTarget target)
{
  if (steps < 1)
  {
    throw ValidationError("integrated gradients needs steps >= 1");
  }
  model.check_tokens(inst.tokens);
  Matrix input;
  Matrix baseline;
  {
    Tape tape(ag::GradMode::disabled);
    input    = model.embed(tape, inst.tokens).value();
    baseline = model.embed(tape, detail::baseline_tokens(inst, model.mask_token())).value();
  }
  Matrix const delta = input - baseline;
  Matrix       total = Matrix::Zero(input.rows(), input.cols());
  for (int j = 0; j < steps; ++j)
  {
    double const alpha = static_cast<double>(j) / static_cast<double>(steps);
    Tape         tape;
    tape.set_track_parameters(false);
    Var emb    = tape.input(baseline + alpha * delta);
    Var logits = model.logits_from_embeddings(tape, emb);
    Var out    = target == AttributionTarget::logit ? ag::pick(logits, 0, cls)
                                                    : ag::pick(ag::softmax_rows(logits), 0, cls);
    tape.backward(out);
    if (emb.grad().size() != 0)
    {
      total += emb.grad();
    }
  }
  return delta.cwiseProduct(total) / static_cast<double>(steps);
}

inline RationaleScores attribute_gradient(TaskModel &model, Instance const &inst, int cls,
                                          AttributionOptions const &opt = {AttributionTarget::probability,
                                                                           Pooling::l2, 3})
{
  return make_scores(detail::pool_rows(gradient_dims(model, inst, cls, opt.target), opt.pooling), inst, cls);
}

inline RationaleScores attribute_input_x_gradient(TaskModel &model, Instance const &inst, int cls,
                                                  AttributionOptions const &opt = {})
{
  return make_scores(detail::pool_rows(input_x_gradient_dims(model, inst, cls, opt.target), opt.pooling), inst,
                     cls);
}

inline RationaleScores attribute_integrated_gradients(TaskModel &model, Instance const &inst, int cls, int steps,
                                                      AttributionOptions const &opt = {})
{
  return make_scores(
    detail::pool_rows(integrated_gradients_dims(model, inst, cls, steps, opt.target), opt.pooling), inst, cls);
}

enum class HeuristicKind
{
  random,
  gold,
  inverse_gold
};

/// Scores that ignore the model: seeded uniform noise, the gold mask, or its inverse.
inline RationaleScores heuristic_scores(HeuristicKind kind, Instance const &inst, std::uint64_t seed, int cls = 0)
{
  std::vector<double> raw(inst.size(), 0.0);
  if (kind == HeuristicKind::random)
  {
    Rng rng(derive_seed(seed, inst.id));
    for (std::size_t t = 0; t < inst.size(); ++t)
    {
      raw[t] = rng.uniform();
    }
  }
  else
  {
    if (!inst.has_gold())
    {
      throw ValidationError("instance '" + inst.id + "' has no gold rationale");
    }
    for (std::size_t t = 0; t < inst.size(); ++t)
    {
      double const g = (*inst.gold_rationale)[t];
      raw[t]         = kind == HeuristicKind::gold ? g : 1.0 - g;
    }
  }
  return make_scores(std::move(raw), inst, cls);
}

// ---------------------------------------------------------------------------
// Learned extractors
// ---------------------------------------------------------------------------

enum class ExtractorArchitecture
{
  dlm,  ///< own encoder, disjoint from the task model
  slm   ///< shares the task model's encoder
};

/// Encoder plus per-token scoring head. Scores are logits (pre-sigmoid).
class ExtractorModel
{
public:
  ExtractorModel(ExtractorArchitecture arch, std::shared_ptr<TransformerEncoder> encoder, HeadConfig head,
                 std::uint64_t seed)
    : arch_(arch)
    , encoder_(std::move(encoder))
    , head_config_(std::move(head))
  {
    Rng rng(derive_seed(seed, "extractor_head"));
    head_ = Head("extractor_head", encoder_->config().dim, 1, head_config_, rng);
  }

  ExtractorArchitecture architecture() const noexcept
  {
    return arch_;
  }
  HeadConfig const &head_config() const noexcept
  {
    return head_config_;
  }
  std::shared_ptr<TransformerEncoder> const &encoder() const noexcept
  {
    return encoder_;
  }
  Head &head() noexcept
  {
    return head_;
  }

  /// Score column (n x 1) from encoder states.
  Var scores_from_states(Tape &tape, Var states)
  {
    return head_(tape, states);
  }

  /// Score column (n x 1) running this extractor's encoder.
  Var score_logits(Tape &tape, std::span<TokenId const> tokens)
  {
    return scores_from_states(tape, encoder_->encode(tape, encoder_->embed(tape, tokens)));
  }

  /// Parameters this extractor owns; under SLM the shared encoder is excluded.
  ag::ParameterList owned_parameters()
  {
    ag::ParameterList out;
    if (arch_ == ExtractorArchitecture::dlm)
    {
      out = encoder_->parameters();
    }
    head_.collect(out);
    return out;
  }

  ag::ParameterList head_parameters()
  {
    ag::ParameterList out;
    head_.collect(out);
    return out;
  }

private:
  ExtractorArchitecture               arch_;
  std::shared_ptr<TransformerEncoder> encoder_;
  HeadConfig                          head_config_;
  Head                                head_;
};

inline std::vector<double> column_to_vector(Matrix const &m)
{
  return std::vector<double>(m.data(), m.data() + m.size());
}

inline RationaleScores learned_scores(ExtractorModel &extractor, Instance const &inst, int cls = 0)
{
  Tape tape(ag::GradMode::disabled);
  Var  s = extractor.score_logits(tape, inst.tokens);
  return make_scores(column_to_vector(s.value()), inst, cls);
}

/// Learned pooler over per-dimension integrated-gradients attributions.
class AttributionPooler
{
public:
  AttributionPooler(int dim, HeadConfig head, std::uint64_t seed)
    : head_config_(std::move(head))
  {
    Rng rng(derive_seed(seed, "attribution_pooler"));
    head_ = Head("attribution_pooler", dim, 1, head_config_, rng);
  }

  Var score_logits(Tape &tape, Matrix const &attribution_dims)
  {
    return head_(tape, tape.constant(attribution_dims));
  }

  HeadConfig const &head_config() const noexcept
  {
    return head_config_;
  }

  ag::ParameterList parameters()
  {
    ag::ParameterList out;
    head_.collect(out);
    return out;
  }

private:
  HeadConfig head_config_;
  Head       head_;
};

// ---------------------------------------------------------------------------
// Rationale dumps: {instance_id, class_explained, scores[], masks: {k: [...]}}
// ---------------------------------------------------------------------------

inline std::string format_k(double k)
{
  std::ostringstream os;
  os << k;
  return os.str();
}

inline nlohmann::ordered_json rationale_record(RationaleScores const &s, Instance const &inst,
                                               std::vector<double> const &ks)
{
  nlohmann::ordered_json j;
  j["instance_id"]     = s.instance_id;
  j["class_explained"] = s.target_class;
  nlohmann::json scores = nlohmann::json::array();
  for (double v : s.scores)
  {
    if (std::isfinite(v))
    {
      scores.push_back(v);
    }
    else
    {
      scores.push_back(nullptr);
    }
  }
  j["scores"] = std::move(scores);
  nlohmann::ordered_json masks;
  for (double k : ks)
  {
    masks[format_k(k)] = binarize_topk(s, k, inst).mask;
  }
  j["masks"] = std::move(masks);
  return j;
}

}  // namespace unirex
