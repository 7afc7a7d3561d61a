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

// Run configuration, run directories and the train / evaluate / report
// commands behind the command-line tool.
//
// Run directory layout:
//   <run>/config.json            resolved configuration
//   <run>/records.jsonl          test-split metrics, one record per seed
//   <run>/seed_<s>/config.json   configuration with the seed fixed
//   <run>/seed_<s>/metrics.jsonl per-epoch log followed by evaluation records
//   <run>/seed_<s>/run_state.json
//   <run>/seed_<s>/best.ckpt
//   <run>/seed_<s>/rationales_<split>.jsonl

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "unirex/bundle.hpp"
#include "unirex/data_model.hpp"
#include "unirex/evaluation.hpp"
#include "unirex/metrics.hpp"
#include "unirex/trainer.hpp"

namespace unirex::cli {

namespace fs = std::filesystem;
using json   = nlohmann::json;
using ojson  = nlohmann::ordered_json;

inline constexpr char const *kOutputRootEnv = "UNIREX_OUTPUT_ROOT";

// ---------------------------------------------------------------------------
// Enum spellings
// ---------------------------------------------------------------------------

inline std::string to_string(CompCriterion c)
{
  return c == CompCriterion::diff ? "diff" : "margin";
}

inline std::string to_string(SuffCriterion c)
{
  switch (c)
  {
  case SuffCriterion::diff:
    return "diff";
  case SuffCriterion::margin:
    return "margin";
  case SuffCriterion::kl:
    return "kl";
  case SuffCriterion::mae:
    return "mae";
  }
  return "?";
}

inline std::string to_string(PlausCriterion c)
{
  switch (c)
  {
  case PlausCriterion::bce:
    return "bce";
  case PlausCriterion::kl:
    return "kl";
  case PlausCriterion::linear:
    return "linear";
  case PlausCriterion::linear_margin:
    return "linear_margin";
  }
  return "?";
}

template <typename E>
E parse_enum(std::string const &s, std::initializer_list<E> options, char const *what)
{
  for (E e : options)
  {
    if (to_string(e) == s)
    {
      return e;
    }
  }
  throw ValidationError(std::string("unknown ") + what + " '" + s + "'");
}

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

struct RunConfig
{
  std::string              dataset;  ///< resolved path
  std::string              dataset_name;
  std::string              output_dir = "runs/unirex";
  std::vector<std::uint64_t> seeds    = {0};
  MethodSpec               method;
  EncoderConfig            encoder;
  TrainConfig              train;  ///< train.loss holds the loss configuration
  std::vector<std::string> eval_splits = {"dev", "test"};

  void validate() const
  {
    if (seeds.empty())
    {
      throw ValidationError("config: seeds must be non-empty");
    }
    if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
    {
      throw ValidationError("config: seeds must be distinct");
    }
    if (dataset.empty() || !fs::is_regular_file(dataset))
    {
      throw ValidationError("config: dataset '" + dataset + "' does not exist");
    }
    if (output_dir.empty())
    {
      throw ValidationError("config: output_dir must be non-empty");
    }
    for (auto const &s : eval_splits)
    {
      parse_split(s);
    }
    method.validate();
    train.validate();
  }
};

namespace detail {

inline void check_keys(json const &j, std::set<std::string> const &allowed, std::string const &where)
{
  if (!j.is_object())
  {
    throw ValidationError("config: '" + where + "' must be an object");
  }
  for (auto const &[k, _] : j.items())
  {
    if (!allowed.count(k))
    {
      throw ValidationError("config: unknown key '" + k + "' in " + where);
    }
  }
}

}  // namespace detail

inline ojson loss_to_json(LossConfig const &l)
{
  ojson j;
  j["alpha_c"] = l.alpha_c;
  j["alpha_s"] = l.alpha_s;
  j["alpha_p"] = l.alpha_p;
  j["m_c"]     = l.m_c;
  j["m_s"]     = l.m_s;
  j["m_p"]     = l.m_p;
  j["comp"]    = to_string(l.comp_criterion);
  j["suff"]    = to_string(l.suff_criterion);
  j["plaus"]   = to_string(l.plaus_criterion);
  j["K"]       = l.K;
  return j;
}

inline LossConfig loss_from_json(json const &j)
{
  detail::check_keys(j, {"alpha_c", "alpha_s", "alpha_p", "m_c", "m_s", "m_p", "comp", "suff", "plaus", "K"}, "loss");
  LossConfig l;
  l.alpha_c         = j.value("alpha_c", l.alpha_c);
  l.alpha_s         = j.value("alpha_s", l.alpha_s);
  l.alpha_p         = j.value("alpha_p", l.alpha_p);
  l.m_c             = j.value("m_c", l.m_c);
  l.m_s             = j.value("m_s", l.m_s);
  l.m_p             = j.value("m_p", l.m_p);
  l.comp_criterion  = parse_enum(j.value("comp", to_string(l.comp_criterion)),
                                 {CompCriterion::diff, CompCriterion::margin}, "comp criterion");
  l.suff_criterion  = parse_enum(j.value("suff", to_string(l.suff_criterion)),
                                 {SuffCriterion::diff, SuffCriterion::margin, SuffCriterion::kl, SuffCriterion::mae},
                                 "suff criterion");
  l.plaus_criterion = parse_enum(j.value("plaus", to_string(l.plaus_criterion)),
                                 {PlausCriterion::bce, PlausCriterion::kl, PlausCriterion::linear,
                                  PlausCriterion::linear_margin},
                                 "plaus criterion");
  l.K               = j.value("K", l.K);
  l.validate();
  return l;
}

inline ojson train_to_json(TrainConfig const &t)
{
  ojson j;
  j["batch_size"]    = t.batch_size;
  j["beta"]          = t.beta;
  j["lr"]            = t.lr;
  j["max_epochs"]    = t.max_epochs;
  j["patience"]      = t.patience;
  j["gamma"]         = t.gamma;
  j["max_grad_norm"] = t.max_grad_norm;
  j["task_metric"]   = to_string(t.task_metric);
  j["optimizer"]     = Adam::name();
  return j;
}

inline TrainConfig train_from_json(json const &j)
{
  detail::check_keys(j,
                     {"batch_size", "beta", "lr", "max_epochs", "patience", "gamma", "max_grad_norm", "task_metric",
                      "optimizer"},
                     "train");
  TrainConfig t;
  t.batch_size    = j.value("batch_size", t.batch_size);
  t.beta          = j.value("beta", t.beta);
  t.lr            = j.value("lr", t.lr);
  t.max_epochs    = j.value("max_epochs", t.max_epochs);
  t.patience      = j.value("patience", t.patience);
  t.gamma         = j.value("gamma", t.gamma);
  t.max_grad_norm = j.value("max_grad_norm", t.max_grad_norm);
  t.task_metric   = parse_task_metric(j.value("task_metric", to_string(t.task_metric)));
  if (j.value("optimizer", Adam::name()) != Adam::name())
  {
    throw ValidationError("config: only the 'adam' optimizer is available");
  }
  return t;
}

inline ojson to_json(RunConfig const &c)
{
  ojson j;
  j["dataset"]      = c.dataset;
  j["dataset_name"] = c.dataset_name;
  j["output_dir"]   = c.output_dir;
  j["seeds"]        = c.seeds;
  j["method"]       = c.method.to_json();
  j["encoder"]      = unirex::to_json(c.encoder);
  j["loss"]         = loss_to_json(c.train.loss);
  j["train"]        = train_to_json(c.train);
  j["eval_splits"]  = c.eval_splits;
  return j;
}

/// Parses a config object. Relative dataset paths resolve against `base_dir`.
inline RunConfig run_config_from_json(json const &j, fs::path const &base_dir = {})
{
  detail::check_keys(j,
                     {"dataset", "dataset_name", "output_dir", "seeds", "method", "encoder", "loss", "train",
                      "eval_splits"},
                     "config");
  RunConfig c;
  if (!j.contains("dataset"))
  {
    throw ValidationError("config: 'dataset' is required");
  }
  fs::path data = j.at("dataset").get<std::string>();
  if (data.is_relative() && !base_dir.empty())
  {
    data = base_dir / data;
  }
  c.dataset      = data.lexically_normal().string();
  c.dataset_name = j.value("dataset_name", data.stem().string());
  c.output_dir   = j.value("output_dir", c.output_dir);
  c.seeds        = j.value("seeds", c.seeds);
  if (j.contains("method"))
  {
    detail::check_keys(j.at("method"), {"name", "kind", "head", "ig_steps", "target"}, "method");
    c.method = MethodSpec::from_json(j.at("method"));
  }
  if (j.contains("encoder"))
  {
    detail::check_keys(j.at("encoder"), {"max_length", "dim", "heads", "layers", "ff_dim"}, "encoder");
    c.encoder = encoder_config_from_json(j.at("encoder"));
  }
  if (j.contains("train"))
  {
    c.train = train_from_json(j.at("train"));
  }
  if (j.contains("loss"))
  {
    c.train.loss = loss_from_json(j.at("loss"));
  }
  c.eval_splits = j.value("eval_splits", c.eval_splits);
  return c;
}

inline RunConfig load_run_config(std::string const &path)
{
  std::ifstream in(path);
  if (!in)
  {
    throw ValidationError("cannot open config '" + path + "'");
  }
  json j;
  try
  {
    j = json::parse(in);
  }
  catch (json::exception const &e)
  {
    throw ParseError("config '" + path + "': " + e.what());
  }
  RunConfig c = run_config_from_json(j, fs::path(path).parent_path());
  c.validate();
  return c;
}

/// Default configuration as written by init-config.
inline ojson default_config_json(std::string const &dataset = "data/corpus.jsonl")
{
  RunConfig c;
  c.dataset      = dataset;
  c.dataset_name = fs::path(dataset).stem().string();
  return to_json(c);
}

// ---------------------------------------------------------------------------
// Paths and small IO helpers
// ---------------------------------------------------------------------------

inline fs::path output_root()
{
  char const *env = std::getenv(kOutputRootEnv);
  return env != nullptr && *env != '\0' ? fs::path(env) : fs::current_path();
}

inline fs::path resolve_output(std::string const &dir)
{
  fs::path p(dir);
  return p.is_absolute() ? p : output_root() / p;
}

inline void write_json_file(fs::path const &path, ojson const &j)
{
  std::ofstream out(path);
  if (!out)
  {
    throw Error("cannot write " + path.string());
  }
  out << j.dump(2) << '\n';
}

inline json read_json_file(fs::path const &path)
{
  std::ifstream in(path);
  if (!in)
  {
    throw Error("cannot read " + path.string());
  }
  return json::parse(in);
}

inline std::string seed_dir_name(std::uint64_t seed)
{
  return "seed_" + std::to_string(seed);
}

/// Writes one rationale record per instance of `split`.
inline void write_rationales(fs::path const &path, Dataset const &ds, Split split, Explained const &ex,
                             std::vector<double> const &K)
{
  std::ofstream out(path);
  if (!out)
  {
    throw Error("cannot write " + path.string());
  }
  auto const &idx = ds.indices(split);
  for (std::size_t j = 0; j < idx.size(); ++j)
  {
    out << rationale_record(ex.scores[j], ds[idx[j]], K).dump() << '\n';
  }
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainResult
{
  fs::path                   run_dir;
  std::vector<MetricsRecord> test_records;
};

/// Gold subset for one seed; corpora without annotations fall back to the
/// whole train split so batching stays plain.
inline GoldSubset gold_for_run(Dataset const &ds, double gamma, std::uint64_t seed)
{
  if (!ds.any_gold(Split::train))
  {
    GoldSubset all;
    all.indices = ds.indices(Split::train);
    all.gamma   = 100.0;
    return all;
  }
  return select_gold_subset(ds, gamma, seed);
}

inline TrainResult cmd_train(RunConfig const &cfg, std::ostream *log = nullptr)
{
  cfg.validate();
  Dataset const ds = load_corpus(cfg.dataset);
  if (ds.indices(Split::train).empty())
  {
    throw ValidationError("dataset has no train split");
  }
  TrainResult result;
  result.run_dir = resolve_output(cfg.output_dir);
  fs::create_directories(result.run_dir);
  write_json_file(result.run_dir / "config.json", to_json(cfg));
  std::ofstream records(result.run_dir / "records.jsonl");

  for (std::uint64_t seed : cfg.seeds)
  {
    fs::path const dir = result.run_dir / seed_dir_name(seed);
    fs::create_directories(dir);
    RunConfig seeded = cfg;
    seeded.seeds     = {seed};
    write_json_file(dir / "config.json", to_json(seeded));

    TrainConfig tc = cfg.train;
    tc.seed        = seed;
    GoldSubset const gold = gold_for_run(ds, tc.gamma, seed);
    ModelBundle      bundle(cfg.method, ds.num_classes(), ds.vocab_size(), cfg.encoder, seed);

    std::ofstream metrics(dir / "metrics.jsonl");
    RunState const state = fit(bundle, ds, gold, tc, [&](EpochRecord const &r) {
      ojson line = r.to_json();
      line["type"] = "epoch";
      metrics << line.dump() << '\n' << std::flush;
      if (log != nullptr)
      {
        *log << cfg.method.name << " seed " << seed << " epoch " << r.epoch << " total_loss " << r.mean.total
             << " dev " << to_string(tc.task_metric) << ' ' << r.dev_metric << '\n';
      }
    });
    save_checkpoint(bundle, (dir / "best.ckpt").string());

    ojson st;
    st["epochs_run"]      = state.epochs_run;
    st["best_epoch"]      = state.best_epoch;
    st["best_dev_metric"] = state.best_dev_metric ? ojson(*state.best_dev_metric) : ojson(nullptr);
    st["steps"]           = state.steps;
    st["seed"]            = seed;
    st["optimizer"]       = state.optimizer;
    st["gold_instances"]  = gold.size();
    write_json_file(dir / "run_state.json", st);

    for (auto const &split_name : cfg.eval_splits)
    {
      Split const split = parse_split(split_name);
      if (ds.indices(split).empty())
      {
        continue;
      }
      Explained const ex = explain_predicted(bundle, ds, ds.indices(split));
      write_rationales(dir / ("rationales_" + split_name + ".jsonl"), ds, split, ex, tc.loss.K);
      MetricsRecord rec = evaluate_split(bundle, ds, split, tc.loss.K, tc.task_metric, &ex);
      rec.dataset       = cfg.dataset_name;
      rec.gamma         = tc.gamma;
      ojson line;
      line["type"]   = "eval";
      line["record"] = rec.to_json();
      metrics << line.dump() << '\n';
      if (split == Split::test)
      {
        records << rec.to_json().dump() << '\n' << std::flush;
        result.test_records.push_back(rec);
      }
    }
  }
  return result;
}

inline TrainResult cmd_train(std::string const &config_path, std::ostream *log = nullptr)
{
  return cmd_train(load_run_config(config_path), log);
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

/// Seed sub-runs of a run directory; a directory holding best.ckpt is its own sub-run.
inline std::vector<fs::path> seed_runs(fs::path const &run)
{
  if (fs::is_regular_file(run / "best.ckpt"))
  {
    return {run};
  }
  std::vector<fs::path> out;
  if (fs::is_directory(run))
  {
    for (auto const &e : fs::directory_iterator(run))
    {
      if (e.is_directory() && fs::is_regular_file(e.path() / "best.ckpt"))
      {
        out.push_back(e.path());
      }
    }
  }
  std::sort(out.begin(), out.end());
  if (out.empty())
  {
    throw ValidationError("no checkpoint found under '" + run.string() + "'");
  }
  return out;
}

struct EvaluateResult
{
  fs::path                   output;
  std::vector<MetricsRecord> records;
};

inline EvaluateResult cmd_evaluate(fs::path const &run, std::string const &data_path, Split split)
{
  if (!fs::is_regular_file(data_path))
  {
    throw ValidationError("dataset '" + data_path + "' does not exist");
  }
  Dataset const ds = load_corpus(data_path);
  if (ds.indices(split).empty())
  {
    throw ValidationError("dataset has no '" + to_string(split) + "' split");
  }
  EvaluateResult out;
  for (auto const &dir : seed_runs(run))
  {
    RunConfig const cfg    = run_config_from_json(read_json_file(dir / "config.json"));
    auto            bundle = load_checkpoint((dir / "best.ckpt").string());
    if (bundle->data_vocab() != ds.vocab_size())
    {
      throw ValidationError("vocabulary mismatch: model expects " + std::to_string(bundle->data_vocab()) +
                            " token ids, dataset declares " + std::to_string(ds.vocab_size()));
    }
    if (bundle->num_classes() != ds.num_classes())
    {
      throw ValidationError("label mismatch: model has " + std::to_string(bundle->num_classes()) +
                            " classes, dataset declares " + std::to_string(ds.num_classes()));
    }
    MetricsRecord rec = evaluate_split(*bundle, ds, split, cfg.train.loss.K, cfg.train.task_metric);
    rec.dataset       = fs::path(data_path).stem().string();
    rec.gamma         = cfg.train.gamma;
    out.records.push_back(rec);
  }
  out.output = run / ("eval_" + fs::path(data_path).stem().string() + "_" + to_string(split) + ".jsonl");
  std::ofstream f(out.output);
  if (!f)
  {
    throw Error("cannot write " + out.output.string());
  }
  for (auto const &r : out.records)
  {
    f << r.to_json().dump() << '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

inline std::vector<MetricsRecord> read_records(std::string const &path)
{
  std::ifstream in(path);
  if (!in)
  {
    throw ValidationError("cannot open metrics file '" + path + "'");
  }
  std::vector<MetricsRecord> out;
  std::string                line;
  std::size_t                line_no = 0;
  while (std::getline(in, line))
  {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos)
    {
      continue;
    }
    try
    {
      json j = json::parse(line);
      if (j.contains("type"))
      {
        if (j.at("type") != "eval")
        {
          continue;
        }
        j = j.at("record");
      }
      out.push_back(MetricsRecord::from_json(j));
    }
    catch (json::exception const &e)
    {
      throw ParseError(path + ": " + e.what(), line_no);
    }
  }
  return out;
}

inline DesiderataWeights parse_weights(std::string const &s)
{
  std::vector<double> v;
  std::stringstream   ss(s);
  std::string         item;
  while (std::getline(ss, item, ','))
  {
    try
    {
      v.push_back(std::stod(item));
    }
    catch (std::exception const &)
    {
      throw ValidationError("weights must be three comma-separated numbers, got '" + s + "'");
    }
  }
  if (v.size() != 3)
  {
    throw ValidationError("weights must be three comma-separated numbers, got '" + s + "'");
  }
  return {v[0], v[1], v[2]};
}

struct BarSeries
{
  std::string         name;
  std::vector<double> values;
};

/// Grouped bar chart over `labels` as a standalone SVG document.
inline std::string bar_chart_svg(std::string const &title, std::vector<std::string> const &labels,
                                 std::vector<BarSeries> const &series, double y_max = 1.0)
{
  static constexpr char const *kColors[] = {"#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860"};
  double const                 group_w   = 30.0 * static_cast<double>(series.size()) + 30.0;
  double const                 left = 60, top = 40, plot_h = 240;
  double const                 width  = left + group_w * static_cast<double>(labels.size()) + 20;
  double const                 height = top + plot_h + 110;
  std::ostringstream           os;
  os << std::fixed << std::setprecision(2);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
  for (int tick = 0; tick <= 4; ++tick)
  {
    double const v = y_max * tick / 4.0;
    double const y = top + plot_h - plot_h * tick / 4.0;
    os << "<line x1=\"" << left << "\" x2=\"" << width - 10 << "\" y1=\"" << y << "\" y2=\"" << y
       << "\" stroke=\"#ddd\"/>\n";
    os << "<text x=\"" << left - 5 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">" << v << "</text>\n";
  }
  for (std::size_t g = 0; g < labels.size(); ++g)
  {
    double const x0 = left + group_w * static_cast<double>(g) + 15;
    for (std::size_t s = 0; s < series.size(); ++s)
    {
      double const v = std::clamp(series[s].values.at(g), 0.0, y_max);
      double const h = plot_h * v / y_max;
      os << "<rect x=\"" << x0 + 30.0 * static_cast<double>(s) << "\" y=\"" << top + plot_h - h
         << "\" width=\"26\" height=\"" << h << "\" fill=\"" << kColors[s % 6] << "\"><title>" << series[s].name
         << ": " << series[s].values.at(g) << "</title></rect>\n";
    }
    os << "<text x=\"" << x0 + 15.0 * static_cast<double>(series.size()) << "\" y=\"" << top + plot_h + 15
       << "\" text-anchor=\"middle\">" << labels[g] << "</text>\n";
  }
  double ly = top + plot_h + 40;
  for (std::size_t s = 0; s < series.size(); ++s)
  {
    os << "<rect x=\"" << left << "\" y=\"" << ly - 9 << "\" width=\"10\" height=\"10\" fill=\"" << kColors[s % 6]
       << "\"/><text x=\"" << left + 15 << "\" y=\"" << ly << "\">" << series[s].name << "</text>\n";
    ly += 15;
  }
  os << "</svg>\n";
  return os.str();
}

struct ReportResult
{
  NRGTable              table;
  fs::path              output_dir;
  std::vector<fs::path> files;
};

namespace detail {

inline std::string fmt(double v)
{
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

inline std::string fmt(std::optional<double> v)
{
  return v ? fmt(*v) : std::string{};
}

inline void write_text(fs::path const &p, std::string const &s, std::vector<fs::path> &files)
{
  std::ofstream out(p);
  if (!out)
  {
    throw Error("cannot write " + p.string());
  }
  out << s;
  files.push_back(p);
}

}  // namespace detail

/// NRG table, desiderata bar charts and, for gamma sweeps, AUPRC-vs-gamma data.
/// Methods whose records span several gammas are reported per gamma as
/// `<method>@gamma=<g>`.
inline ReportResult cmd_report(std::vector<std::string> const &files, DesiderataWeights const &weights,
                               bool per_seed, fs::path const &out_dir)
{
  std::vector<MetricsRecord> records;
  for (auto const &f : files)
  {
    auto r = read_records(f);
    records.insert(records.end(), r.begin(), r.end());
  }
  if (records.size() < 2)
  {
    throw ValidationError("report needs at least two metrics records");
  }
  std::set<std::string> splits;
  for (auto const &r : records)
  {
    splits.insert(r.split);
  }
  if (splits.size() > 1)
  {
    throw ValidationError("report: records mix evaluation splits");
  }

  std::map<std::string, std::set<double>> gammas;
  for (auto const &r : records)
  {
    gammas[r.method].insert(r.gamma.value_or(100.0));
  }
  std::vector<MetricsRecord> labelled = records;
  for (auto &r : labelled)
  {
    if (gammas[r.method].size() > 1)
    {
      r.method += "@gamma=" + format_k(r.gamma.value_or(100.0));
    }
  }

  ReportResult res;
  res.output_dir = out_dir;
  fs::create_directories(out_dir);
  res.table = composite_nrg(labelled, weights, per_seed);
  auto const &t = res.table;

  std::ostringstream csv;
  csv << "method,seeds,comp_aopc,suff_aopc,csd,auprc,tf1,task_perf,comp_nrg,suff_nrg,auprc_nrg,tf1_nrg,task_nrg,"
         "fnrg,pnrg,tnrg,cnrg\n";
  std::ostringstream jl;
  for (auto const &m : t.methods)
  {
    auto const &raw = t.raw.at(m);
    auto const &row = t.rows.at(m);
    csv << m << ',' << raw.seeds.size() << ',' << detail::fmt(raw.comp_aopc) << ',' << detail::fmt(raw.suff_aopc)
        << ',' << detail::fmt(raw.csd) << ',' << detail::fmt(raw.auprc) << ',' << detail::fmt(raw.tf1) << ','
        << detail::fmt(raw.task_perf) << ',' << detail::fmt(row.comp_nrg) << ',' << detail::fmt(row.suff_nrg) << ','
        << detail::fmt(row.auprc_nrg) << ',' << detail::fmt(row.tf1_nrg) << ',' << detail::fmt(row.task_nrg) << ','
        << detail::fmt(row.fnrg) << ',' << detail::fmt(row.pnrg) << ',' << detail::fmt(row.tnrg) << ','
        << detail::fmt(row.cnrg) << '\n';
    ojson j;
    j["method"] = m;
    j["raw"]    = raw.to_json();
    j["fnrg"]   = row.fnrg;
    j["pnrg"]   = row.pnrg ? ojson(*row.pnrg) : ojson(nullptr);
    j["tnrg"]   = row.tnrg;
    j["cnrg"]   = row.cnrg;
    jl << j.dump() << '\n';
  }
  detail::write_text(out_dir / "nrg.csv", csv.str(), res.files);
  detail::write_text(out_dir / "nrg.jsonl", jl.str(), res.files);

  BarSeries cnrg{"CNRG", {}}, fnrg{"FNRG", {}}, pnrg{"PNRG", {}}, tnrg{"TNRG", {}};
  bool      have_p = true;
  for (auto const &m : t.methods)
  {
    auto const &row = t.rows.at(m);
    cnrg.values.push_back(row.cnrg);
    fnrg.values.push_back(row.fnrg);
    tnrg.values.push_back(row.tnrg);
    have_p = have_p && row.pnrg.has_value();
    pnrg.values.push_back(row.pnrg.value_or(0.0));
  }
  detail::write_text(out_dir / "cnrg.svg", bar_chart_svg("Composite NRG per method", t.methods, {cnrg}),
                     res.files);
  std::vector<BarSeries> des = {fnrg};
  if (have_p)
  {
    des.push_back(pnrg);
  }
  des.push_back(tnrg);
  detail::write_text(out_dir / "desiderata_nrg.svg", bar_chart_svg("Desiderata NRG per method", t.methods, des),
                     res.files);

  bool sweep = false;
  for (auto const &[_, g] : gammas)
  {
    sweep = sweep || g.size() > 1;
  }
  if (sweep)
  {
    std::map<std::string, std::map<double, std::pair<double, int>>> acc;
    for (auto const &r : records)
    {
      if (r.auprc)
      {
        auto &cell = acc[r.method][r.gamma.value_or(100.0)];
        cell.first += *r.auprc;
        cell.second += 1;
      }
    }
    std::ostringstream gcsv;
    gcsv << "method,gamma,auprc,seeds\n";
    for (auto const &[m, by_g] : acc)
    {
      for (auto const &[g, cell] : by_g)
      {
        gcsv << m << ',' << detail::fmt(g) << ',' << detail::fmt(cell.first / cell.second) << ',' << cell.second
             << '\n';
      }
    }
    detail::write_text(out_dir / "auprc_vs_gamma.csv", gcsv.str(), res.files);

    std::set<double> all_g;
    for (auto const &[_, by_g] : acc)
    {
      for (auto const &[g, __] : by_g)
      {
        all_g.insert(g);
      }
    }
    std::vector<std::string> glabels;
    for (double g : all_g)
    {
      glabels.push_back(format_k(g) + "%");
    }
    std::vector<BarSeries> gseries;
    for (auto const &[m, by_g] : acc)
    {
      BarSeries s{m, {}};
      for (double g : all_g)
      {
        auto it = by_g.find(g);
        s.values.push_back(it == by_g.end() ? 0.0 : it->second.first / it->second.second);
      }
      gseries.push_back(std::move(s));
    }
    detail::write_text(out_dir / "auprc_vs_gamma.svg", bar_chart_svg("AUPRC vs gamma", glabels, gseries),
                       res.files);
  }
  return res;
}

}  // namespace unirex::cli
