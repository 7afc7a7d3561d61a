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
#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "unirex/errors.hpp"
#include "unirex/random.hpp"

namespace unirex {

using Mask = std::vector<std::uint8_t>;

enum class Split
{
  train,
  dev,
  test
};

inline std::string to_string(Split s)
{
  switch (s)
  {
  case Split::train:
    return "train";
  case Split::dev:
    return "dev";
  case Split::test:
    return "test";
  }
  return "?";
}

inline Split parse_split(std::string const &s)
{
  if (s == "train")
  {
    return Split::train;
  }
  if (s == "dev")
  {
    return Split::dev;
  }
  if (s == "test")
  {
    return Split::test;
  }
  throw ValidationError("unknown split '" + s + "' (expected train, dev or test)");
}

/// One labelled classification example.
struct Instance
{
  std::string          id;
  std::vector<TokenId> tokens;
  int                  target_label = 0;
  std::optional<Mask>  gold_rationale;
  Mask                 is_special;

  std::size_t size() const noexcept
  {
    return tokens.size();
  }

  bool has_gold() const noexcept
  {
    return gold_rationale.has_value();
  }

  std::size_t num_nonspecial() const
  {
    return static_cast<std::size_t>(std::count(is_special.begin(), is_special.end(), 0));
  }

  /// Checks every per-instance invariant; `num_classes`/`vocab_size` of zero skip the range checks.
  void validate(int num_classes = 0, int vocab_size = 0) const
  {
    auto fail = [this](std::string const &what) {
      throw ValidationError("instance '" + id + "': " + what);
    };
    if (tokens.empty())
    {
      fail("empty token sequence");
    }
    if (is_special.size() != tokens.size())
    {
      fail("special mask length " + std::to_string(is_special.size()) + " != token length " +
           std::to_string(tokens.size()));
    }
    for (auto s : is_special)
    {
      if (s > 1)
      {
        fail("special mask must be 0/1");
      }
    }
    if (num_nonspecial() == 0)
    {
      fail("no non-special tokens");
    }
    if (gold_rationale)
    {
      if (gold_rationale->size() != tokens.size())
      {
        fail("rationale length " + std::to_string(gold_rationale->size()) + " != token length " +
             std::to_string(tokens.size()));
      }
      for (std::size_t t = 0; t < tokens.size(); ++t)
      {
        if ((*gold_rationale)[t] > 1)
        {
          fail("rationale must be 0/1");
        }
        if ((*gold_rationale)[t] == 1 && is_special[t] == 1)
        {
          fail("rationale marks special position " + std::to_string(t));
        }
      }
    }
    if (num_classes > 0 && (target_label < 0 || target_label >= num_classes))
    {
      fail("label " + std::to_string(target_label) + " outside [0, " + std::to_string(num_classes) + ")");
    }
    if (vocab_size > 0)
    {
      for (TokenId tok : tokens)
      {
        if (tok < 0 || tok >= vocab_size)
        {
          fail("token id " + std::to_string(tok) + " outside [0, " + std::to_string(vocab_size) + ")");
        }
      }
    }
  }
};

/// Validated collection of instances with a train/dev/test partition.
class Dataset
{
public:
  Dataset() = default;

  Dataset(std::vector<Instance> instances, std::vector<Split> splits, int num_classes, int vocab_size)
    : instances_(std::move(instances))
    , split_of_(std::move(splits))
    , num_classes_(num_classes)
    , vocab_size_(vocab_size)
  {
    if (num_classes_ < 2)
    {
      throw ValidationError("num_classes must be >= 2");
    }
    if (vocab_size_ < 1)
    {
      throw ValidationError("vocab_size must be >= 1");
    }
    if (split_of_.size() != instances_.size())
    {
      throw ValidationError("split assignment count does not match instance count");
    }
    for (std::size_t i = 0; i < instances_.size(); ++i)
    {
      instances_[i].validate(num_classes_, vocab_size_);
      if (!index_.emplace(instances_[i].id, i).second)
      {
        throw ValidationError("duplicate instance id '" + instances_[i].id + "'");
      }
      by_split_[static_cast<int>(split_of_[i])].push_back(i);
    }
  }

  std::vector<Instance> const &instances() const noexcept
  {
    return instances_;
  }
  Instance const &operator[](std::size_t i) const
  {
    return instances_.at(i);
  }
  std::size_t size() const noexcept
  {
    return instances_.size();
  }
  int num_classes() const noexcept
  {
    return num_classes_;
  }
  int vocab_size() const noexcept
  {
    return vocab_size_;
  }
  Split split_of(std::size_t i) const
  {
    return split_of_.at(i);
  }

  /// Instance indices of one split, in file order.
  std::vector<std::size_t> const &indices(Split s) const
  {
    return by_split_[static_cast<int>(s)];
  }

  std::optional<std::size_t> find(std::string const &id) const
  {
    auto it = index_.find(id);
    if (it == index_.end())
    {
      return std::nullopt;
    }
    return it->second;
  }

  bool any_gold(Split s) const
  {
    auto const &idx = indices(s);
    return std::any_of(idx.begin(), idx.end(), [this](std::size_t i) { return instances_[i].has_gold(); });
  }

private:
  std::vector<Instance>                        instances_;
  std::vector<Split>                           split_of_;
  std::vector<std::size_t>                     by_split_[3];
  std::unordered_map<std::string, std::size_t> index_;
  int                                          num_classes_ = 0;
  int                                          vocab_size_  = 0;
};

// ---------------------------------------------------------------------------
// Corpus IO: a JSON header line followed by one JSON record per line.
//   {"num_classes": 2, "vocab_size": 64}
//   {"id": "a", "tokens": [5, 9, 2], "label": 1, "rationale": [0, 1, 0], "split": "train"}
// ---------------------------------------------------------------------------

namespace detail {

inline Mask parse_mask(nlohmann::json const &j, char const *field, std::size_t line)
{
  if (!j.is_array())
  {
    throw ParseError(std::string("field '") + field + "' must be an array", line);
  }
  Mask m;
  m.reserve(j.size());
  for (auto const &v : j)
  {
    if (!v.is_number_integer() || (v.get<int>() != 0 && v.get<int>() != 1))
    {
      throw ParseError(std::string("field '") + field + "' must contain only 0/1", line);
    }
    m.push_back(static_cast<std::uint8_t>(v.get<int>()));
  }
  return m;
}

}  // namespace detail

inline Dataset read_corpus(std::istream &in)
{
  std::string line;
  std::size_t line_no = 0;
  int         num_classes = 0;
  int         vocab_size  = 0;
  bool        have_header = false;

  std::vector<Instance> instances;
  std::vector<Split>    splits;
  while (std::getline(in, line))
  {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos)
    {
      continue;
    }
    nlohmann::json j;
    try
    {
      j = nlohmann::json::parse(line);
    }
    catch (nlohmann::json::parse_error const &e)
    {
      throw ParseError(std::string("malformed record: ") + e.what(), line_no);
    }
    if (!j.is_object())
    {
      throw ParseError("record is not an object", line_no);
    }
    try
    {
      if (!have_header)
      {
        if (!j.contains("num_classes") || !j.contains("vocab_size"))
        {
          throw ParseError("header must carry num_classes and vocab_size", line_no);
        }
        num_classes = j.at("num_classes").get<int>();
        vocab_size  = j.at("vocab_size").get<int>();
        have_header = true;
        continue;
      }
      Instance inst;
      inst.id = j.at("id").get<std::string>();
      for (auto const &t : j.at("tokens"))
      {
        if (!t.is_number_integer())
        {
          throw ParseError("tokens must be integers", line_no);
        }
        inst.tokens.push_back(t.get<TokenId>());
      }
      inst.target_label = j.at("label").get<int>();
      if (j.contains("rationale") && !j.at("rationale").is_null())
      {
        inst.gold_rationale = detail::parse_mask(j.at("rationale"), "rationale", line_no);
      }
      if (j.contains("special") && !j.at("special").is_null())
      {
        inst.is_special = detail::parse_mask(j.at("special"), "special", line_no);
      }
      else
      {
        inst.is_special.assign(inst.tokens.size(), 0);
      }
      Split const split = parse_split(j.at("split").get<std::string>());
      try
      {
        inst.validate(num_classes, vocab_size);
      }
      catch (ValidationError const &e)
      {
        throw ValidationError("line " + std::to_string(line_no) + ": " + e.what());
      }
      instances.push_back(std::move(inst));
      splits.push_back(split);
    }
    catch (nlohmann::json::exception const &e)
    {
      throw ParseError(std::string("bad field: ") + e.what(), line_no);
    }
  }
  if (!have_header)
  {
    throw ParseError("corpus is empty (missing header line)");
  }
  return Dataset(std::move(instances), std::move(splits), num_classes, vocab_size);
}

inline Dataset load_corpus(std::string const &path)
{
  std::ifstream in(path);
  if (!in)
  {
    throw ValidationError("cannot open corpus file '" + path + "'");
  }
  return read_corpus(in);
}

inline void write_corpus(Dataset const &ds, std::ostream &out)
{
  nlohmann::ordered_json header;
  header["num_classes"] = ds.num_classes();
  header["vocab_size"]  = ds.vocab_size();
  out << header.dump() << '\n';
  for (std::size_t i = 0; i < ds.size(); ++i)
  {
    Instance const      &inst = ds[i];
    nlohmann::ordered_json j;
    j["id"]     = inst.id;
    j["tokens"] = inst.tokens;
    j["label"]  = inst.target_label;
    if (inst.gold_rationale)
    {
      j["rationale"] = *inst.gold_rationale;
    }
    if (inst.num_nonspecial() != inst.size())
    {
      j["special"] = inst.is_special;
    }
    j["split"] = to_string(ds.split_of(i));
    out << j.dump() << '\n';
  }
}

inline void save_corpus(Dataset const &ds, std::string const &path)
{
  std::ofstream out(path);
  if (!out)
  {
    throw ValidationError("cannot write corpus file '" + path + "'");
  }
  write_corpus(ds, out);
}

// ---------------------------------------------------------------------------
// Gold-rationale subset
// ---------------------------------------------------------------------------

/// Train instances whose gold rationales are used for plausibility supervision.
struct GoldSubset
{
  std::vector<std::size_t> indices;  ///< dataset indices, in sampled order
  double                   gamma = 100.0;

  std::size_t size() const noexcept
  {
    return indices.size();
  }
  bool contains(std::size_t dataset_index) const
  {
    return std::find(indices.begin(), indices.end(), dataset_index) != indices.end();
  }
  std::vector<std::string> ids(Dataset const &ds) const
  {
    std::vector<std::string> out;
    out.reserve(indices.size());
    for (auto i : indices)
    {
      out.push_back(ds[i].id);
    }
    return out;
  }
};

/// ceil(gamma/100 * n_train), at least one.
inline std::size_t gold_subset_size(double gamma, std::size_t n_train)
{
  double const exact = gamma * static_cast<double>(n_train) / 100.0;
  auto         size  = static_cast<std::size_t>(std::ceil(exact - 1e-9));
  return std::max<std::size_t>(size, 1);
}

/// Samples the gold subset as a prefix of one seeded permutation of the
/// annotated train instances, so subsets for growing gamma are nested.
inline GoldSubset select_gold_subset(Dataset const &ds, double gamma, std::uint64_t seed)
{
  if (!(gamma > 0.0 && gamma <= 100.0))
  {
    throw ValidationError("gamma must lie in (0, 100], got " + std::to_string(gamma));
  }
  auto const &train = ds.indices(Split::train);
  std::vector<std::size_t> annotated;
  for (auto i : train)
  {
    if (ds[i].has_gold())
    {
      annotated.push_back(i);
    }
  }
  std::size_t const wanted = gold_subset_size(gamma, train.size());
  if (annotated.size() < wanted)
  {
    throw ValidationError("gamma=" + std::to_string(gamma) + " needs " + std::to_string(wanted) +
                          " annotated train instances but only " + std::to_string(annotated.size()) +
                          " carry gold rationales (short by " + std::to_string(wanted - annotated.size()) +
                          ")");
  }
  Rng rng(derive_seed(seed, "gold-subset"));
  rng.shuffle(annotated);
  annotated.resize(wanted);
  return GoldSubset{std::move(annotated), gamma};
}

}  // namespace unirex
