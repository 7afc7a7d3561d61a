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

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "unirex/cli.hpp"
#include "unirex/synthetic.hpp"

namespace {

namespace cli = unirex::cli;

int run(int argc, char **argv)
{
  CLI::App app{"Joint rationale extraction: train, evaluate and compare extractors"};
  app.require_subcommand(1);

  auto       *init = app.add_subcommand("init-config", "Write a configuration file holding every default");
  std::string init_output;
  std::string init_dataset = "data/corpus.jsonl";
  init->add_option("-o,--output", init_output, "Destination file (stdout when omitted)");
  init->add_option("--dataset", init_dataset, "Dataset path to place in the config");

  auto       *train = app.add_subcommand("train", "Train one sub-run per configured seed");
  std::string config_path;
  bool        quiet = false;
  train->add_option("--config", config_path, "Run configuration file")->required();
  train->add_flag("-q,--quiet", quiet, "Suppress per-epoch progress");

  auto       *eval = app.add_subcommand("evaluate", "Evaluate trained checkpoints on a corpus split");
  std::string run_dir;
  std::string data_path;
  std::string split = "test";
  eval->add_option("--run", run_dir, "Run or seed directory")->required();
  eval->add_option("--data", data_path, "Corpus file")->required();
  eval->add_option("--split", split, "Split to evaluate")->check(CLI::IsMember({"train", "dev", "test"}));

  auto                    *report = app.add_subcommand("report", "Normalized relative gain table and charts");
  std::vector<std::string> files;
  std::string              weights = "1,1,1";
  bool                     per_seed = false;
  std::string              report_dir = "report";
  report->add_option("files", files, "Metrics files (JSONL)")->required();
  report->add_option("--weights", weights, "Faithfulness, plausibility, task weights");
  report->add_flag("--per-seed-nrg", per_seed, "Normalize per seed, then average");
  report->add_option("-o,--output", report_dir, "Output directory (relative to the output root)");

  auto                    *synth = app.add_subcommand("synth", "Write a planted-evidence synthetic corpus");
  unirex::SyntheticConfig  sc;
  std::string              synth_output;
  bool                     no_gold = false;
  synth->add_option("-o,--output", synth_output, "Destination corpus file")->required();
  synth->add_option("--n-train", sc.n_train);
  synth->add_option("--n-dev", sc.n_dev);
  synth->add_option("--n-test", sc.n_test);
  synth->add_option("--seed", sc.seed);
  synth->add_flag("--no-gold", no_gold, "Omit gold rationales");

  CLI11_PARSE(app, argc, argv);

  if (*init)
  {
    auto const text = cli::default_config_json(init_dataset).dump(2);
    if (init_output.empty())
    {
      std::cout << text << '\n';
    }
    else
    {
      std::ofstream out(init_output);
      if (!out)
      {
        throw unirex::Error("cannot write " + init_output);
      }
      out << text << '\n';
      std::cout << "wrote " << init_output << '\n';
    }
  }
  else if (*train)
  {
    auto const res = cli::cmd_train(config_path, quiet ? nullptr : &std::cerr);
    for (auto const &r : res.test_records)
    {
      std::cout << r.to_json().dump() << '\n';
    }
    std::cout << "run directory: " << res.run_dir.string() << '\n';
  }
  else if (*eval)
  {
    auto const res = cli::cmd_evaluate(run_dir, data_path, unirex::parse_split(split));
    for (auto const &r : res.records)
    {
      std::cout << r.to_json().dump() << '\n';
    }
    std::cout << "wrote " << res.output.string() << '\n';
  }
  else if (*report)
  {
    auto const res = cli::cmd_report(files, cli::parse_weights(weights), per_seed, cli::resolve_output(report_dir));
    std::cout << "method,fnrg,pnrg,tnrg,cnrg\n";
    for (auto const &m : res.table.methods)
    {
      auto const &row = res.table.rows.at(m);
      std::cout << m << ',' << row.fnrg << ',' << (row.pnrg ? std::to_string(*row.pnrg) : std::string("-")) << ','
                << row.tnrg << ',' << row.cnrg << '\n';
    }
    for (auto const &f : res.files)
    {
      std::cout << "wrote " << f.string() << '\n';
    }
  }
  else if (*synth)
  {
    sc.with_gold = !no_gold;
    unirex::save_corpus(unirex::make_synthetic(sc), synth_output);
    std::cout << "wrote " << synth_output << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char **argv)
{
  try
  {
    return run(argc, argv);
  }
  catch (std::exception const &e)
  {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
