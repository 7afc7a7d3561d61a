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

// Scores one instance with every attribution algorithm and shows the top-20% mask.

#include <iomanip>
#include <iostream>

#include "unirex/unirex.hpp"

int main()
{
  using namespace unirex;

  SyntheticConfig data;
  data.n_train = 1;
  data.n_dev   = 0;
  data.n_test  = 1;
  Dataset const   ds   = make_synthetic(data);
  Instance const &inst = ds[ds.indices(Split::test).front()];

  auto encoder = std::make_shared<TransformerEncoder>(
    "encoder", TransformerClassifier::config_for_vocab(ds.vocab_size(), EncoderConfig{}), 1);
  TransformerClassifier model(encoder, ds.num_classes(), 1);
  int const             cls = inst.target_label;

  std::vector<std::pair<std::string, RationaleScores>> const methods = {
    {"grad", attribute_gradient(model, inst, cls)},
    {"input_x_grad", attribute_input_x_gradient(model, inst, cls)},
    {"ig", attribute_integrated_gradients(model, inst, cls, 3)},
    {"random", heuristic_scores(HeuristicKind::random, inst, 0, cls)},
    {"gold", heuristic_scores(HeuristicKind::gold, inst, 0, cls)},
  };

  std::cout << std::setw(14) << "token";
  for (auto t : inst.tokens)
  {
    std::cout << std::setw(6) << t;
  }
  std::cout << '\n';
  for (auto const &[name, s] : methods)
  {
    Mask const mask = binarize_topk(s, 20, inst).mask;
    std::cout << std::setw(14) << name;
    for (auto m : mask)
    {
      std::cout << std::setw(6) << (m ? "*" : ".");
    }
    double const au = auprc(s.scores, *inst.gold_rationale, inst.is_special).value_or(0.0);
    std::cout << "   AUPRC " << au << '\n';
  }
  return 0;
}
