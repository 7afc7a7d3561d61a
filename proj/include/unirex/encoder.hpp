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

#include <cmath>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "unirex/autograd.hpp"
#include "unirex/data_model.hpp"
#include "unirex/random.hpp"

namespace unirex {

using ag::Matrix;
using ag::Tape;
using ag::Var;

/// Dense layer y = x W + b, applied row-wise.
class Linear
{
public:
  Linear() = default;
  Linear(std::string const &name, int in, int out, Rng &rng, double init_std)
    : weight_(name + ".weight", Matrix(in, out))
    , bias_(name + ".bias", Matrix::Zero(1, out))
  {
    for (Eigen::Index i = 0; i < weight_.value.size(); ++i)
    {
      weight_.value(i) = rng.normal(0.0, init_std);
    }
  }

  Var operator()(Tape &tape, Var x)
  {
    return ag::add_row(ag::matmul(x, tape.param(weight_)), tape.param(bias_));
  }

  void zero_init()
  {
    weight_.value.setZero();
    bias_.value.setZero();
  }

  void collect(ag::ParameterList &out)
  {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }

  int in_features() const
  {
    return static_cast<int>(weight_.value.rows());
  }
  int out_features() const
  {
    return static_cast<int>(weight_.value.cols());
  }

private:
  ag::Parameter weight_;
  ag::Parameter bias_;
};

/// Output head: a single linear layer, or an MLP with GELU between layers.
struct HeadConfig
{
  std::vector<int> hidden;  ///< empty means linear
};

class Head
{
public:
  Head() = default;
  Head(std::string const &name, int in, int out, HeadConfig const &cfg, Rng &rng)
  {
    int width = in;
    for (std::size_t i = 0; i < cfg.hidden.size(); ++i)
    {
      layers_.emplace_back(name + ".layer" + std::to_string(i), width, cfg.hidden[i], rng,
                           1.0 / std::sqrt(static_cast<double>(width)));
      width = cfg.hidden[i];
    }
    layers_.emplace_back(name + ".out", width, out, rng, 0.02);
  }

  Var operator()(Tape &tape, Var x)
  {
    for (std::size_t i = 0; i < layers_.size(); ++i)
    {
      x = layers_[i](tape, x);
      if (i + 1 < layers_.size())
      {
        x = ag::gelu(x);
      }
    }
    return x;
  }

  /// Zeroes the final layer so the head is a constant map.
  void zero_output()
  {
    layers_.back().zero_init();
  }

  void collect(ag::ParameterList &out)
  {
    for (auto &l : layers_)
    {
      l.collect(out);
    }
  }

  bool is_linear() const
  {
    return layers_.size() == 1;
  }

private:
  std::vector<Linear> layers_;
};

/// Architecture hyperparameters of the reference encoder.
struct EncoderConfig
{
  int vocab_size = 0;    ///< embedding rows, including the reserved mask token
  int max_length = 128;
  int dim        = 64;
  int heads      = 4;
  int layers     = 2;
  int ff_dim     = 128;

  void validate() const
  {
    if (vocab_size < 1 || max_length < 1 || dim < 1 || heads < 1 || layers < 0 || ff_dim < 1)
    {
      throw ValidationError("encoder config: all sizes must be positive");
    }
    if (dim % heads != 0)
    {
      throw ValidationError("encoder config: dim must be divisible by heads");
    }
  }
};

/// Pre-LayerNorm transformer encoder with learned positional embeddings.
class TransformerEncoder
{
public:
  TransformerEncoder(std::string const &name, EncoderConfig cfg, std::uint64_t seed)
    : cfg_(cfg)
  {
    cfg_.validate();
    Rng    rng(derive_seed(seed, name));
    double  proj_std = 1.0 / std::sqrt(static_cast<double>(cfg_.dim));
    token_embedding_ = ag::Parameter(name + ".token_embedding", random_matrix(cfg_.vocab_size, cfg_.dim, rng, 0.1));
    position_embedding_ =
      ag::Parameter(name + ".position_embedding", random_matrix(cfg_.max_length, cfg_.dim, rng, 0.1));
    for (int l = 0; l < cfg_.layers; ++l)
    {
      std::string const prefix = name + ".layer" + std::to_string(l);
      Block             b;
      b.ln1_gain = ag::Parameter(prefix + ".ln1.gain", Matrix::Ones(1, cfg_.dim));
      b.ln1_bias = ag::Parameter(prefix + ".ln1.bias", Matrix::Zero(1, cfg_.dim));
      b.qkv      = Linear(prefix + ".qkv", cfg_.dim, 3 * cfg_.dim, rng, proj_std);
      b.out      = Linear(prefix + ".attn_out", cfg_.dim, cfg_.dim, rng, proj_std / std::sqrt(2.0 * cfg_.layers));
      b.ln2_gain = ag::Parameter(prefix + ".ln2.gain", Matrix::Ones(1, cfg_.dim));
      b.ln2_bias = ag::Parameter(prefix + ".ln2.bias", Matrix::Zero(1, cfg_.dim));
      b.ff1      = Linear(prefix + ".ff1", cfg_.dim, cfg_.ff_dim, rng, proj_std);
      b.ff2      = Linear(prefix + ".ff2", cfg_.ff_dim, cfg_.dim,
                          rng, 1.0 / std::sqrt(static_cast<double>(cfg_.ff_dim) * 2.0 * cfg_.layers));
      blocks_.push_back(std::move(b));
    }
    final_gain_ = ag::Parameter(name + ".final_ln.gain", Matrix::Ones(1, cfg_.dim));
    final_bias_ = ag::Parameter(name + ".final_ln.bias", Matrix::Zero(1, cfg_.dim));
  }

  TransformerEncoder(TransformerEncoder const &)            = delete;
  TransformerEncoder &operator=(TransformerEncoder const &) = delete;

  EncoderConfig const &config() const noexcept
  {
    return cfg_;
  }

  /// Token embeddings (n x dim), without positions.
  Var embed(Tape &tape, std::span<TokenId const> tokens)
  {
    if (tokens.empty() || static_cast<int>(tokens.size()) > cfg_.max_length)
    {
      throw ValidationError("sequence length " + std::to_string(tokens.size()) + " outside [1, " +
                            std::to_string(cfg_.max_length) + "]");
    }
    return ag::gather_rows(tape.param(token_embedding_), tokens);
  }

  /// Contextual states (n x dim) from token embeddings.
  Var encode(Tape &tape, Var token_embeddings)
  {
    auto const n = static_cast<int>(token_embeddings.rows());
    if (n < 1 || n > cfg_.max_length)
    {
      throw ValidationError("sequence length outside the configured maximum");
    }
    std::vector<int> positions(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
    {
      positions[static_cast<std::size_t>(i)] = i;
    }
    Var x = ag::add(token_embeddings, ag::select_rows(tape.param(position_embedding_), positions));
    for (auto &b : blocks_)
    {
      Var h    = ag::layer_norm(x, tape.param(b.ln1_gain), tape.param(b.ln1_bias));
      Var attn = ag::multi_head_attention(b.qkv(tape, h), cfg_.heads);
      x        = ag::add(x, b.out(tape, attn));
      h        = ag::layer_norm(x, tape.param(b.ln2_gain), tape.param(b.ln2_bias));
      x        = ag::add(x, b.ff2(tape, ag::gelu(b.ff1(tape, h))));
    }
    return ag::layer_norm(x, tape.param(final_gain_), tape.param(final_bias_));
  }

  void collect(ag::ParameterList &out)
  {
    out.push_back(&token_embedding_);
    out.push_back(&position_embedding_);
    for (auto &b : blocks_)
    {
      out.push_back(&b.ln1_gain);
      out.push_back(&b.ln1_bias);
      b.qkv.collect(out);
      b.out.collect(out);
      out.push_back(&b.ln2_gain);
      out.push_back(&b.ln2_bias);
      b.ff1.collect(out);
      b.ff2.collect(out);
    }
    out.push_back(&final_gain_);
    out.push_back(&final_bias_);
  }

  ag::ParameterList parameters()
  {
    ag::ParameterList out;
    collect(out);
    return out;
  }

private:
  struct Block
  {
    ag::Parameter ln1_gain, ln1_bias;
    Linear        qkv, out;
    ag::Parameter ln2_gain, ln2_bias;
    Linear        ff1, ff2;
  };

  static Matrix random_matrix(int rows, int cols, Rng &rng, double stddev)
  {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i)
    {
      m(i) = rng.normal(0.0, stddev);
    }
    return m;
  }

  EncoderConfig      cfg_;
  ag::Parameter      token_embedding_;
  ag::Parameter      position_embedding_;
  std::vector<Block> blocks_;
  ag::Parameter      final_gain_;
  ag::Parameter      final_bias_;
};

// ---------------------------------------------------------------------------
// Task model contract
// ---------------------------------------------------------------------------

/// Differentiable classifier whose input gradients are observable at the
/// token-embedding layer.
class TaskModel
{
public:
  virtual ~TaskModel() = default;

  virtual int     num_classes() const   = 0;
  virtual int     vocab_size() const    = 0;  ///< valid ids are [0, vocab_size)
  virtual int     embedding_dim() const = 0;
  virtual TokenId mask_token() const    = 0;

  /// Token embeddings, n x embedding_dim.
  virtual Var embed(Tape &tape, std::span<TokenId const> tokens) = 0;
  /// Logit row (1 x M) from token embeddings.
  virtual Var logits_from_embeddings(Tape &tape, Var embeddings) = 0;

  virtual ag::ParameterList parameters() = 0;

  Var logits(Tape &tape, std::span<TokenId const> tokens)
  {
    check_tokens(tokens);
    return logits_from_embeddings(tape, embed(tape, tokens));
  }

  void check_tokens(std::span<TokenId const> tokens) const
  {
    for (TokenId t : tokens)
    {
      if (t < 0 || t >= vocab_size())
      {
        throw ValidationError("token id " + std::to_string(t) + " out of range [0, " +
                              std::to_string(vocab_size()) + ")");
      }
    }
  }
};

/// Encoder states and task logits from one pass.
struct EncodedPass
{
  Var states;
  Var logits;
};

/// Reference task model: transformer encoder, mean pooling, linear head.
/// The encoder is held by shared_ptr so an extractor can share it.
class TransformerClassifier : public TaskModel
{
public:
  TransformerClassifier(std::shared_ptr<TransformerEncoder> encoder, int num_classes, std::uint64_t seed)
    : encoder_(std::move(encoder))
    , num_classes_(num_classes)
  {
    if (num_classes_ < 2)
    {
      throw ValidationError("classifier needs at least two classes");
    }
    Rng rng(derive_seed(seed, "task_head"));
    head_ = Linear("task_head", encoder_->config().dim, num_classes_, rng, 0.02);
  }

  /// Builds an encoder for a dataset vocabulary; the mask token is the extra id `data_vocab`.
  static EncoderConfig config_for_vocab(int data_vocab, EncoderConfig base = {})
  {
    base.vocab_size = data_vocab + 1;
    return base;
  }

  int num_classes() const override
  {
    return num_classes_;
  }
  int vocab_size() const override
  {
    return encoder_->config().vocab_size;
  }
  int embedding_dim() const override
  {
    return encoder_->config().dim;
  }
  TokenId mask_token() const override
  {
    return static_cast<TokenId>(encoder_->config().vocab_size - 1);
  }

  Var embed(Tape &tape, std::span<TokenId const> tokens) override
  {
    return encoder_->embed(tape, tokens);
  }

  Var logits_from_embeddings(Tape &tape, Var embeddings) override
  {
    return logits_from_states(tape, encoder_->encode(tape, embeddings));
  }

  Var logits_from_states(Tape &tape, Var states)
  {
    return head_(tape, ag::mean_rows(states));
  }

  EncodedPass encode(Tape &tape, std::span<TokenId const> tokens)
  {
    check_tokens(tokens);
    Var states = encoder_->encode(tape, encoder_->embed(tape, tokens));
    return {states, logits_from_states(tape, states)};
  }

  ag::ParameterList parameters() override
  {
    ag::ParameterList out = encoder_->parameters();
    head_.collect(out);
    return out;
  }

  ag::ParameterList head_parameters()
  {
    ag::ParameterList out;
    head_.collect(out);
    return out;
  }

  std::shared_ptr<TransformerEncoder> const &encoder() const noexcept
  {
    return encoder_;
  }

private:
  std::shared_ptr<TransformerEncoder> encoder_;
  int                                 num_classes_;
  Linear                              head_;
};

// ---------------------------------------------------------------------------
// Forward pass with an input-gradient hook
// ---------------------------------------------------------------------------

/// Which scalar an input gradient is taken of.
enum class AttributionTarget
{
  probability,  ///< softmax(logits)[class]
  logit         ///< logits[class]
};

inline Eigen::RowVectorXd softmax(Eigen::RowVectorXd const &logits)
{
  double const       m = logits.maxCoeff();
  Eigen::RowVectorXd p = (logits.array() - m).exp();
  return p / p.sum();
}

/// One forward pass of a task model. With gradients wanted, the token
/// embeddings are a tape leaf and embedding_gradient() backpropagates to them.
class ForwardPass
{
public:
  ForwardPass(TaskModel &model, std::span<TokenId const> tokens, bool want_gradients)
    : tape_(std::make_unique<Tape>(want_gradients ? ag::GradMode::enabled : ag::GradMode::disabled))
    , want_gradients_(want_gradients)
  {
    model.check_tokens(tokens);
    tape_->set_track_parameters(false);
    Var table_rows = model.embed(*tape_, tokens);
    embeddings_    = tape_->input(table_rows.value());
    logits_        = model.logits_from_embeddings(*tape_, embeddings_);
    logit_values_  = logits_.value().row(0);
  }

  Eigen::RowVectorXd const &logits() const noexcept
  {
    return logit_values_;
  }

  Matrix const &embeddings() const
  {
    return embeddings_.value();
  }

  /// d target(class) / d token embeddings, n x d.
  Matrix embedding_gradient(int cls, AttributionTarget target = AttributionTarget::probability)
  {
    if (!want_gradients_)
    {
      throw Error("gradient unavailable: forward pass ran without gradients");
    }
    if (cls < 0 || cls >= logit_values_.size())
    {
      throw ValidationError("class out of range");
    }
    tape_->zero_grads();
    Var out = target == AttributionTarget::logit ? ag::pick(logits_, 0, cls)
                                                 : ag::pick(ag::softmax_rows(logits_), 0, cls);
    tape_->backward(out);
    Matrix const &g = embeddings_.grad();
    if (g.size() == 0)
    {
      return Matrix::Zero(embeddings_.rows(), embeddings_.cols());
    }
    return g;
  }

private:
  std::unique_ptr<Tape> tape_;
  bool                  want_gradients_;
  Var                   embeddings_;
  Var                   logits_;
  Eigen::RowVectorXd    logit_values_;
};

/// Logits of one input (no gradients).
inline Eigen::RowVectorXd forward(TaskModel &model, std::span<TokenId const> tokens)
{
  return ForwardPass(model, tokens, false).logits();
}

inline double predicted_probability(Eigen::RowVectorXd const &logits, int cls)
{
  if (cls < 0 || cls >= logits.size())
  {
    throw ValidationError("class out of range");
  }
  return softmax(logits)(cls);
}

inline double predicted_probability(TaskModel &model, std::span<TokenId const> tokens, int cls)
{
  return predicted_probability(forward(model, tokens), cls);
}

inline int argmax(Eigen::RowVectorXd const &v)
{
  Eigen::Index i = 0;
  v.maxCoeff(&i);
  return static_cast<int>(i);
}

// ---------------------------------------------------------------------------
// Masked inputs for comprehensiveness / sufficiency
// ---------------------------------------------------------------------------

enum class VariantKind
{
  full,
  complement,     ///< rationale tokens replaced by the mask token
  rationale_only  ///< non-rationale tokens replaced by the mask token
};

struct MaskedVariant
{
  VariantKind          kind = VariantKind::full;
  std::vector<TokenId> tokens;
};

/// Replaces non-special positions selected by `kind` with `mask_token`.
inline MaskedVariant build_masked_variant(Instance const &inst, Mask const &rationale, VariantKind kind,
                                          TokenId mask_token)
{
  if (rationale.size() != inst.size())
  {
    throw ValidationError("rationale length " + std::to_string(rationale.size()) + " != token length " +
                          std::to_string(inst.size()));
  }
  MaskedVariant v{kind, inst.tokens};
  if (kind == VariantKind::full)
  {
    return v;
  }
  for (std::size_t t = 0; t < inst.size(); ++t)
  {
    if (inst.is_special[t])
    {
      continue;
    }
    bool const in_rationale = rationale[t] != 0;
    if ((kind == VariantKind::complement && in_rationale) || (kind == VariantKind::rationale_only && !in_rationale))
    {
      v.tokens[t] = mask_token;
    }
  }
  return v;
}

}  // namespace unirex
