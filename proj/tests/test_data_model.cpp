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

#include <set>
#include <sstream>

#include "test_support.hpp"

using namespace unirex;

namespace {

std::string header(int classes = 2, int vocab = 10)
{
  return R"({"num_classes":)" + std::to_string(classes) + R"(,"vocab_size":)" + std::to_string(vocab) + "}\n";
}

Dataset parse(std::string const &text)
{
  std::istringstream in(text);
  return read_corpus(in);
}

}  // namespace

TEST(Corpus, RecordMapsToInstance)
{
  auto ds = parse(header() + R"({"id":"a","tokens":[5,9,2],"label":1,"rationale":[0,1,0],"split":"train"})" "\n");
  ASSERT_EQ(ds.size(), 1u);
  Instance const &inst = ds[0];
  EXPECT_EQ(inst.size(), 3u);
  EXPECT_TRUE(inst.has_gold());
  EXPECT_EQ(inst.target_label, 1);
  EXPECT_EQ((*inst.gold_rationale)[1], 1);
  EXPECT_EQ(inst.num_nonspecial(), 3u);
}

TEST(Corpus, RationaleLengthMismatchIsRejected)
{
  EXPECT_THROW(parse(header() + R"({"id":"a","tokens":[5,9,2],"label":1,"rationale":[0,1],"split":"train"})" "\n"),
               ValidationError);
}

TEST(Corpus, ErrorsCarryLineNumbers)
{
  try
  {
    parse(header() + R"({"id":"a","tokens":[1],"label":0,"split":"train"})" "\n" + "{not json\n");
    FAIL() << "expected a parse error";
  }
  catch (ParseError const &e)
  {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(Corpus, RejectsOutOfRangeValues)
{
  EXPECT_THROW(parse(header() + R"({"id":"a","tokens":[10],"label":0,"split":"train"})" "\n"), ValidationError);
  EXPECT_THROW(parse(header() + R"({"id":"a","tokens":[1],"label":2,"split":"train"})" "\n"), ValidationError);
  EXPECT_THROW(parse(header() + R"({"id":"a","tokens":[1],"label":0,"split":"valid"})" "\n"), ValidationError);
  EXPECT_THROW(parse(header() + R"({"id":"a","tokens":[1,2],"label":0,"special":[1,1],"split":"train"})" "\n"),
               ValidationError);
  EXPECT_THROW(parse(header() + R"({"id":"a","tokens":[1,2],"label":0,"rationale":[1,0],"special":[1,0],"split":"train"})" "\n"),
               ValidationError);
}

TEST(Corpus, DuplicateIdsRejected)
{
  std::string r = R"({"id":"a","tokens":[1],"label":0,"split":"train"})" "\n";
  EXPECT_THROW(parse(header() + r + r), ValidationError);
}

TEST(Corpus, MissingHeaderRejected)
{
  EXPECT_THROW(parse(""), ParseError);
  EXPECT_THROW(parse(R"({"id":"a","tokens":[1],"label":0,"split":"train"})" "\n"), ParseError);
}

TEST(Corpus, SplitBookkeeping)
{
  std::string text = header();
  for (int i = 0; i < 100; ++i)
  {
    std::string split = i < 80 ? "train" : (i < 90 ? "dev" : "test");
    text += R"({"id":"i)" + std::to_string(i) + R"(","tokens":[1,2],"label":0,"split":")" + split + "\"}\n";
  }
  auto ds = parse(text);
  EXPECT_EQ(ds.indices(Split::train).size(), 80u);
  EXPECT_EQ(ds.indices(Split::dev).size(), 10u);
  EXPECT_EQ(ds.indices(Split::test).size(), 10u);
  EXPECT_EQ(ds.find("i85"), std::optional<std::size_t>(85));
  EXPECT_FALSE(ds.find("nope").has_value());
}

TEST(Corpus, RoundTripPreservesEverything)
{
  Dataset const      ds = support::small_synthetic(30, 5, 5);
  std::ostringstream out;
  write_corpus(ds, out);
  Dataset const back = parse(out.str());
  ASSERT_EQ(back.size(), ds.size());
  EXPECT_EQ(back.num_classes(), ds.num_classes());
  EXPECT_EQ(back.vocab_size(), ds.vocab_size());
  for (std::size_t i = 0; i < ds.size(); ++i)
  {
    EXPECT_EQ(back[i].id, ds[i].id);
    EXPECT_EQ(back[i].tokens, ds[i].tokens);
    EXPECT_EQ(back[i].target_label, ds[i].target_label);
    EXPECT_EQ(back[i].gold_rationale, ds[i].gold_rationale);
    EXPECT_EQ(back[i].is_special, ds[i].is_special);
    EXPECT_EQ(back.split_of(i), ds.split_of(i));
  }
}

TEST(GoldSubsetSize, Examples)
{
  EXPECT_EQ(gold_subset_size(0.5, 1000), 5u);
  EXPECT_EQ(gold_subset_size(100, 100), 100u);
  EXPECT_EQ(gold_subset_size(1, 7), 1u);
  EXPECT_EQ(gold_subset_size(10, 2000), 200u);
}

TEST(GoldSubset, FullCoverageAndValidation)
{
  Dataset const ds   = support::small_synthetic(100, 5, 5);
  auto const    gold = select_gold_subset(ds, 100, 3);
  std::set<std::size_t> got(gold.indices.begin(), gold.indices.end());
  auto const           &train = ds.indices(Split::train);
  EXPECT_EQ(got, std::set<std::size_t>(train.begin(), train.end()));
  EXPECT_THROW(select_gold_subset(ds, 0.0, 3), ValidationError);
  EXPECT_THROW(select_gold_subset(ds, 101.0, 3), ValidationError);
}

TEST(GoldSubset, PropertiesOverRandomGammas)
{
  Dataset const ds = support::small_synthetic(150, 5, 5);
  Rng           rng(17);
  for (int trial = 0; trial < 50; ++trial)
  {
    double const        gamma = 0.5 + 99.5 * rng.uniform();
    std::uint64_t const seed  = rng.next();
    auto const          g     = select_gold_subset(ds, gamma, seed);
    EXPECT_EQ(g.size(), gold_subset_size(gamma, 150));
    std::set<std::size_t> uniq(g.indices.begin(), g.indices.end());
    EXPECT_EQ(uniq.size(), g.size());
    for (auto i : g.indices)
    {
      EXPECT_EQ(ds.split_of(i), Split::train);
    }
    // deterministic and nested in gamma
    EXPECT_EQ(select_gold_subset(ds, gamma, seed).indices, g.indices);
    auto const bigger = select_gold_subset(ds, std::min(100.0, gamma * 1.5), seed);
    for (std::size_t j = 0; j < g.size(); ++j)
    {
      EXPECT_EQ(bigger.indices[j], g.indices[j]);
    }
  }
}

TEST(GoldSubset, ShortfallOfAnnotationsIsAnError)
{
  Dataset const ds = support::small_synthetic(20, 2, 2, 5, false);
  EXPECT_THROW(select_gold_subset(ds, 10, 0), ValidationError);
}

TEST(Synthetic, PlantedEvidenceMatchesGold)
{
  SyntheticConfig c;
  c.n_train     = 50;
  c.n_dev       = 10;
  c.n_test      = 10;
  Dataset const ds = make_synthetic(c);
  EXPECT_EQ(ds.size(), 70u);
  for (auto const &inst : ds.instances())
  {
    EXPECT_EQ(inst.tokens.front(), SyntheticConfig::kCls);
    EXPECT_EQ(inst.tokens.back(), SyntheticConfig::kSep);
    std::size_t evidence = 0;
    for (std::size_t t = 0; t < inst.size(); ++t)
    {
      TokenId const lo = c.evidence_token(inst.target_label, 0);
      bool const    ev = inst.tokens[t] >= lo && inst.tokens[t] < lo + c.evidence_per_class;
      EXPECT_EQ(ev, (*inst.gold_rationale)[t] == 1);
      evidence += ev;
    }
    EXPECT_GE(evidence, 1u);
    EXPECT_LE(evidence, 3u);
  }
}
