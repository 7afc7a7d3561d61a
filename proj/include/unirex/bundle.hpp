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

// Task model plus extractor, and their binary checkpoint format.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "unirex/encoder.hpp"
#include "unirex/extractors.hpp"

namespace unirex {

enum class ExtractorKind
{
  grad,
  input_x_grad,
  ig,
  random,
  gold,
  inverse_gold,
  dlm,
  slm,
  ig_pooler
};

inline std::string to_string(ExtractorKind k)
{
  switch (k)
  {
  case ExtractorKind::grad:
    return "grad";
  case ExtractorKind::input_x_grad:
    return "input_x_grad";
  case ExtractorKind::ig:
    return "ig";
  case ExtractorKind::random:
    return "random";
  case ExtractorKind::gold:
    return "gold";
  case ExtractorKind::inverse_gold:
    return "inverse_gold";
  case ExtractorKind::dlm:
    return "dlm";
  case ExtractorKind::slm:
    return "slm";
  case ExtractorKind::ig_pooler:
    return "ig_pooler";
  }
  return "?";
}

inline ExtractorKind parse_extractor_kind(std::string const &s)
{
  for (auto k : {ExtractorKind::grad, ExtractorKind::input_x_grad, ExtractorKind::ig, ExtractorKind::random,
                 ExtractorKind::gold, ExtractorKind::inverse_gold, ExtractorKind::dlm, ExtractorKind::slm,
                 ExtractorKind::ig_pooler})
  {
    if (to_string(k) == s)
    {
      return k;
    }
  }
  throw ValidationError("unknown extractor kind '" + s + "'");
}

inline bool is_learned(ExtractorKind k)
{
  return k == ExtractorKind::dlm || k == ExtractorKind::slm || k == ExtractorKind::ig_pooler;
}

inline std::string to_string(AttributionTarget t)
{
  return t == AttributionTarget::logit ? "logit" : "probability";
}

inline AttributionTarget parse_attribution_target(std::string const &s)
{
  if (s == "probability")
  {
    return AttributionTarget::probability;
  }
  if (s == "logit")
  {
    return AttributionTarget::logit;
  }
  throw ValidationError("unknown attribution target '" + s + "'");
}

struct MethodSpec
{
  std::string   name = "slm-fp";
  ExtractorKind kind = ExtractorKind::slm;
  HeadConfig    head;  ///< empty hidden list = linear head
  int           ig_steps = 3;
  AttributionTarget target = AttributionTarget::probability;

  void validate() const
  {
    if (name.empty())
    {
      throw ValidationError("method name must be non-empty");
    }
    if (ig_steps < 1)
    {
      throw ValidationError("ig_steps must be >= 1");
    }
    for (int h : head.hidden)
    {
      if (h < 1)
      {
        throw ValidationError("head hidden widths must be positive");
      }
    }
  }

  nlohmann::ordered_json to_json() const
  {
    nlohmann::ordered_json j;
    j["name"]     = name;
    j["kind"]     = to_string(kind);
    j["head"]     = head.hidden;
    j["ig_steps"] = ig_steps;
    j["target"]   = to_string(target);
    return j;
  }

  static MethodSpec from_json(nlohmann::json const &j)
  {
    MethodSpec m;
    m.name        = j.value("name", m.name);
    m.kind        = parse_extractor_kind(j.value("kind", to_string(m.kind)));
    m.head.hidden = j.value("head", std::vector<int>{});
    m.ig_steps    = j.value("ig_steps", m.ig_steps);
    m.target      = parse_attribution_target(j.value("target", to_string(m.target)));
    m.validate();
    return m;
  }
};

inline nlohmann::ordered_json to_json(EncoderConfig const &c)
{
  nlohmann::ordered_json j;
  j["max_length"] = c.max_length;
  j["dim"]        = c.dim;
  j["heads"]      = c.heads;
  j["layers"]     = c.layers;
  j["ff_dim"]     = c.ff_dim;
  return j;
}

inline EncoderConfig encoder_config_from_json(nlohmann::json const &j)
{
  EncoderConfig c;
  c.max_length = j.value("max_length", c.max_length);
  c.dim        = j.value("dim", c.dim);
  c.heads      = j.value("heads", c.heads);
  c.layers     = j.value("layers", c.layers);
  c.ff_dim     = j.value("ff_dim", c.ff_dim);
  return c;
}

/// Task model and extractor trained together.
class ModelBundle
{
public:
  /// `data_vocab` is the dataset vocabulary; the encoders reserve one extra mask id.
  ModelBundle(MethodSpec method, int num_classes, int data_vocab, EncoderConfig base, std::uint64_t seed)
    : method_(std::move(method))
    , num_classes_(num_classes)
    , data_vocab_(data_vocab)
    , base_(base)
    , seed_(seed)
  {
    method_.validate();
    EncoderConfig const cfg = TransformerClassifier::config_for_vocab(data_vocab, base);
    task_encoder_ = std::make_shared<TransformerEncoder>("task_encoder", cfg, derive_seed(seed, "task_encoder"));
    task_         = std::make_unique<TransformerClassifier>(task_encoder_, num_classes, seed);
    switch (method_.kind)
    {
    case ExtractorKind::dlm:
      extractor_ = std::make_unique<ExtractorModel>(
        ExtractorArchitecture::dlm,
        std::make_shared<TransformerEncoder>("extractor_encoder", cfg, derive_seed(seed, "extractor_encoder")),
        method_.head, seed);
      break;
    case ExtractorKind::slm:
      extractor_ = std::make_unique<ExtractorModel>(ExtractorArchitecture::slm, task_encoder_, method_.head, seed);
      break;
    case ExtractorKind::ig_pooler:
      pooler_ = std::make_unique<AttributionPooler>(cfg.dim, method_.head, seed);
      break;
    default:
      break;
    }
  }

  ModelBundle(ModelBundle const &)            = delete;
  ModelBundle &operator=(ModelBundle const &) = delete;

  MethodSpec const &method() const noexcept
  {
    return method_;
  }
  int num_classes() const noexcept
  {
    return num_classes_;
  }
  int data_vocab() const noexcept
  {
    return data_vocab_;
  }
  EncoderConfig const &encoder_config() const noexcept
  {
    return base_;
  }
  std::uint64_t seed() const noexcept
  {
    return seed_;
  }

  TransformerClassifier &task() noexcept
  {
    return *task_;
  }
  ExtractorModel *extractor() noexcept
  {
    return extractor_.get();
  }
  AttributionPooler *pooler() noexcept
  {
    return pooler_.get();
  }

  /// Every trainable parameter, each exactly once.
  ag::ParameterList parameters()
  {
    ag::ParameterList out = task_->parameters();
    if (extractor_)
    {
      auto e = extractor_->owned_parameters();
      out.insert(out.end(), e.begin(), e.end());
    }
    if (pooler_)
    {
      auto p = pooler_->parameters();
      out.insert(out.end(), p.begin(), p.end());
    }
    return out;
  }

  /// Importance scores explaining class `cls`, without recording gradients.
  RationaleScores explain(Instance const &inst, int cls)
  {
    AttributionOptions opt;
    opt.target   = method_.target;
    opt.ig_steps = method_.ig_steps;
    switch (method_.kind)
    {
    case ExtractorKind::grad:
      opt.pooling = Pooling::l2;
      return attribute_gradient(*task_, inst, cls, opt);
    case ExtractorKind::input_x_grad:
      return attribute_input_x_gradient(*task_, inst, cls, opt);
    case ExtractorKind::ig:
      return attribute_integrated_gradients(*task_, inst, cls, method_.ig_steps, opt);
    case ExtractorKind::random:
      return heuristic_scores(HeuristicKind::random, inst, seed_, cls);
    case ExtractorKind::gold:
      return heuristic_scores(HeuristicKind::gold, inst, seed_, cls);
    case ExtractorKind::inverse_gold:
      return heuristic_scores(HeuristicKind::inverse_gold, inst, seed_, cls);
    case ExtractorKind::dlm:
    case ExtractorKind::slm:
      return learned_scores(*extractor_, inst, cls);
    case ExtractorKind::ig_pooler: {
      Matrix const dims = integrated_gradients_dims(*task_, inst, cls, method_.ig_steps, method_.target);
      Tape         tape(ag::GradMode::disabled);
      return make_scores(column_to_vector(pooler_->score_logits(tape, dims).value()), inst, cls);
    }
    }
    throw ValidationError("unknown extractor kind");
  }

  int predict(Instance const &inst)
  {
    return argmax(forward(*task_, inst.tokens));
  }

  nlohmann::ordered_json header() const
  {
    nlohmann::ordered_json j;
    j["method"]      = method_.to_json();
    j["num_classes"] = num_classes_;
    j["data_vocab"]  = data_vocab_;
    j["encoder"]     = to_json(base_);
    j["seed"]        = seed_;
    return j;
  }

  static std::unique_ptr<ModelBundle> from_header(nlohmann::json const &j)
  {
    return std::make_unique<ModelBundle>(MethodSpec::from_json(j.at("method")), j.at("num_classes").get<int>(),
                                         j.at("data_vocab").get<int>(), encoder_config_from_json(j.at("encoder")),
                                         j.at("seed").get<std::uint64_t>());
  }

private:
  MethodSpec                             method_;
  int                                    num_classes_;
  int                                    data_vocab_;
  EncoderConfig                          base_;
  std::uint64_t                          seed_;
  std::shared_ptr<TransformerEncoder>    task_encoder_;
  std::unique_ptr<TransformerClassifier> task_;
  std::unique_ptr<ExtractorModel>        extractor_;
  std::unique_ptr<AttributionPooler>     pooler_;
};

// ---------------------------------------------------------------------------
// Parameter snapshots and checkpoints
// ---------------------------------------------------------------------------

using ParameterSnapshot = std::vector<Matrix>;

inline ParameterSnapshot snapshot(ag::ParameterList const &params)
{
  ParameterSnapshot out;
  out.reserve(params.size());
  for (auto const *p : params)
  {
    out.push_back(p->value);
  }
  return out;
}

inline void restore(ag::ParameterList const &params, ParameterSnapshot const &snap)
{
  if (params.size() != snap.size())
  {
    throw Error("snapshot does not match the parameter list");
  }
  for (std::size_t i = 0; i < params.size(); ++i)
  {
    params[i]->value = snap[i];
  }
}

inline constexpr char          kCheckpointMagic[8] = {'U', 'N', 'I', 'R', 'E', 'X', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion  = 1;

namespace detail {

template <typename T>
void write_pod(std::ostream &os, T const &v)
{
  os.write(reinterpret_cast<char const *>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream &is)
{
  T v{};
  is.read(reinterpret_cast<char *>(&v), sizeof(T));
  if (!is)
  {
    throw ParseError("truncated checkpoint");
  }
  return v;
}

}  // namespace detail

/// Layout: magic, u32 version, u64 header length, JSON header, u32 tensor
/// count, then per tensor u32 name length, name, i64 rows, i64 cols and the
/// column-major doubles. Native byte order.
inline void save_checkpoint(ModelBundle &bundle, std::string const &path)
{
  std::ofstream os(path, std::ios::binary);
  if (!os)
  {
    throw Error("cannot write checkpoint " + path);
  }
  os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::write_pod(os, kCheckpointVersion);
  std::string const header = bundle.header().dump();
  detail::write_pod(os, static_cast<std::uint64_t>(header.size()));
  os.write(header.data(), static_cast<std::streamsize>(header.size()));
  auto const params = bundle.parameters();
  detail::write_pod(os, static_cast<std::uint32_t>(params.size()));
  for (auto const *p : params)
  {
    detail::write_pod(os, static_cast<std::uint32_t>(p->name.size()));
    os.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    detail::write_pod(os, static_cast<std::int64_t>(p->value.rows()));
    detail::write_pod(os, static_cast<std::int64_t>(p->value.cols()));
    os.write(reinterpret_cast<char const *>(p->value.data()),
             static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(p->value.size())));
  }
  if (!os)
  {
    throw Error("failed writing checkpoint " + path);
  }
}

inline std::unique_ptr<ModelBundle> load_checkpoint(std::string const &path)
{
  std::ifstream is(path, std::ios::binary);
  if (!is)
  {
    throw Error("cannot open checkpoint " + path);
  }
  char magic[sizeof(kCheckpointMagic)];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
  {
    throw ParseError(path + " is not a checkpoint");
  }
  auto const version = detail::read_pod<std::uint32_t>(is);
  if (version != kCheckpointVersion)
  {
    throw ParseError("unsupported checkpoint version " + std::to_string(version));
  }
  auto const  header_len = detail::read_pod<std::uint64_t>(is);
  std::string header(header_len, '\0');
  is.read(header.data(), static_cast<std::streamsize>(header_len));
  if (!is)
  {
    throw ParseError("truncated checkpoint header");
  }
  auto bundle = ModelBundle::from_header(nlohmann::json::parse(header));

  std::map<std::string, ag::Parameter *> by_name;
  for (auto *p : bundle->parameters())
  {
    by_name[p->name] = p;
  }
  auto const count = detail::read_pod<std::uint32_t>(is);
  if (count != by_name.size())
  {
    throw ParseError("checkpoint holds " + std::to_string(count) + " tensors, model expects " +
                     std::to_string(by_name.size()));
  }
  for (std::uint32_t i = 0; i < count; ++i)
  {
    auto const  len = detail::read_pod<std::uint32_t>(is);
    std::string name(len, '\0');
    is.read(name.data(), len);
    auto const rows = detail::read_pod<std::int64_t>(is);
    auto const cols = detail::read_pod<std::int64_t>(is);
    auto       it   = by_name.find(name);
    if (it == by_name.end())
    {
      throw ParseError("unknown tensor '" + name + "' in checkpoint");
    }
    Matrix &dst = it->second->value;
    if (dst.rows() != rows || dst.cols() != cols)
    {
      throw ParseError("shape mismatch for tensor '" + name + "'");
    }
    is.read(reinterpret_cast<char *>(dst.data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(dst.size())));
    if (!is)
    {
      throw ParseError("truncated tensor '" + name + "'");
    }
  }
  return bundle;
}

}  // namespace unirex
