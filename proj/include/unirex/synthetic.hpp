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

// Planted-evidence classification corpus. Each instance is
//   [CLS] filler ... evidence ... filler [SEP]
// where the evidence tokens come from a label-specific set and the gold
// rationale marks exactly the evidence positions.

#include <string>
#include <vector>

#include "unirex/data_model.hpp"
#include "unirex/random.hpp"

namespace unirex {

struct SyntheticConfig
{
  std::size_t   n_train        = 2000;
  std::size_t   n_dev          = 200;
  std::size_t   n_test         = 400;
  int           num_classes    = 2;
  int           evidence_per_class = 5;
  int           filler_tokens  = 48;
  int           min_content    = 10;
  int           max_content    = 14;
  int           min_evidence   = 1;
  int           max_evidence   = 3;
  bool          with_gold      = true;
  std::uint64_t seed           = 7;

  static constexpr TokenId kCls = 0;
  static constexpr TokenId kSep = 1;

  int vocab_size() const
  {
    return 2 + num_classes * evidence_per_class + filler_tokens;
  }

  TokenId evidence_token(int label, int j) const
  {
    return static_cast<TokenId>(2 + label * evidence_per_class + j);
  }

  TokenId filler_token(int j) const
  {
    return static_cast<TokenId>(2 + num_classes * evidence_per_class + j);
  }

  void validate() const
  {
    if (num_classes < 2 || evidence_per_class < 1 || filler_tokens < 1)
    {
      throw ValidationError("synthetic: need >= 2 classes and non-empty token sets");
    }
    if (min_content < 1 || max_content < min_content || min_evidence < 1 || max_evidence < min_evidence ||
        max_evidence > min_content)
    {
      throw ValidationError("synthetic: inconsistent length or evidence bounds");
    }
    if (n_train == 0)
    {
      throw ValidationError("synthetic: n_train must be positive");
    }
  }
};

inline Dataset make_synthetic(SyntheticConfig const &cfg)
{
  cfg.validate();
  Rng                   rng(derive_seed(cfg.seed, "synthetic"));
  std::vector<Instance> instances;
  std::vector<Split>    splits;
  auto emit = [&](Split split, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i)
    {
      int const label = static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.num_classes)));
      int const n     = cfg.min_content +
                    static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.max_content - cfg.min_content + 1)));
      int const n_ev =
        cfg.min_evidence + static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.max_evidence - cfg.min_evidence + 1)));
      auto const where = rng.sample_without_replacement(static_cast<std::size_t>(n), static_cast<std::size_t>(n_ev));

      Instance inst;
      inst.id           = to_string(split) + "-" + std::to_string(i);
      inst.target_label = label;
      inst.tokens.push_back(SyntheticConfig::kCls);
      for (int t = 0; t < n; ++t)
      {
        inst.tokens.push_back(cfg.filler_token(static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.filler_tokens)))));
      }
      inst.tokens.push_back(SyntheticConfig::kSep);
      Mask gold(inst.tokens.size(), 0);
      for (std::size_t w : where)
      {
        inst.tokens[w + 1] =
          cfg.evidence_token(label, static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.evidence_per_class))));
        gold[w + 1] = 1;
      }
      inst.is_special.assign(inst.tokens.size(), 0);
      inst.is_special.front() = 1;
      inst.is_special.back()  = 1;
      if (cfg.with_gold)
      {
        inst.gold_rationale = std::move(gold);
      }
      instances.push_back(std::move(inst));
      splits.push_back(split);
    }
  };
  emit(Split::train, cfg.n_train);
  emit(Split::dev, cfg.n_dev);
  emit(Split::test, cfg.n_test);
  return Dataset(std::move(instances), std::move(splits), cfg.num_classes, cfg.vocab_size());
}

}  // namespace unirex
