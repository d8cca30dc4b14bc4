// Copyright 2026 The metamf Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Command-line front end. Every command works inside one run directory
// (--out):
//
//   run.cfg, ingest.cfg, split.manifest, stats.txt     ingest
//   <variant>/model.mmf, trainlog.csv, train-<v>.cfg    train
//   sweep.csv, sweep.cfg                                sweep
//   groups-<variant>.csv, groups-<v>.cfg                groups
//   embed/<variant>-weights.csv[.meta], -items.csv      embed
//
// Existing outputs are never replaced without --force.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "metamf/metamf.hpp"

namespace metamf::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kContractFailure = 1, kIoFailure = 2, kNumericalFailure = 3 };

struct Options {
  std::string out;
  std::string dataset;
  std::string format = "tsv";
  std::uint64_t seed = 0;
  std::string variant = "metamf";
  std::string betas = "1.0,0.9,0.8,0.7,0.6,0.5,0.4,0.3,0.2,0.1";
  bool groups = false;
  std::size_t jobs = 1;
  bool resume = false;
  bool force = false;
  bool clip_eval = false;
  bool per_user = false;
  double perplexity = 30.0;
  std::size_t tsne_iterations = 1000;
  ModelConfig model;
  TrainConfig train;
  std::string optimizer = "adam";
  // synth
  std::string synth_kind = "clustered";
  std::size_t synth_users = 400;
  std::size_t synth_items = 300;
};

namespace detail {

inline std::map<std::string, std::string> read_kv(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read '" + path.string() + "'");
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

inline void require_fresh(const fs::path& path, bool force) {
  if (fs::exists(path) && !force)
    throw ContractError("'" + path.string() + "' already exists; use a new --out directory or --force");
}

inline std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::trunc) {
  std::ofstream os(path, std::ios::out | mode);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  return os;
}

inline std::vector<double> parse_betas(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    const auto v = metamf::detail::parse_double(tok);
    if (!v) throw ContractError("--betas: cannot parse '" + tok + "'");
    out.push_back(*v);
  }
  if (out.empty()) throw ContractError("--betas: empty list");
  return out;
}

inline std::vector<Variant> parse_variants(const std::string& s) {
  if (s == "both") return {Variant::MetaMF, Variant::NoMetaMF};
  return {parse_variant(s)};
}

struct RunData {
  LoadedRatings ratings;
  DatasetSplit split;
  std::string dataset_name;
};

inline RunData load_run(const fs::path& out) {
  const auto cfg = read_kv(out / "run.cfg");
  auto get = [&cfg](const char* k) {
    auto it = cfg.find(k);
    if (it == cfg.end()) throw IoError(std::string("run.cfg lacks '") + k + "'; run ingest first");
    return it->second;
  };
  RunData d;
  d.ratings = load_ratings(get("dataset"), RatingFormat::parse(get("format")));
  std::ifstream ms(out / "split.manifest");
  if (!ms) throw IoError("missing split manifest in '" + out.string() + "'; run ingest first");
  d.split = read_split_manifest(ms, d.ratings.records);
  d.dataset_name = fs::path(get("dataset")).stem().string();
  return d;
}

inline std::vector<std::size_t> all_users(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

}  // namespace detail

inline void cmd_ingest(const Options& o, std::ostream& out) {
  if (o.dataset.empty()) throw ContractError("ingest: --dataset is required");
  const fs::path dir(o.out);
  fs::create_directories(dir);
  detail::require_fresh(dir / "split.manifest", o.force);

  const auto format = RatingFormat::parse(o.format);
  const auto data = load_ratings(o.dataset, format);
  const auto split = split_dataset(data.records, data.n_users(), data.n_items(), o.seed);

  {
    auto os = detail::open_out(dir / "split.manifest");
    write_split_manifest(os, split);
  }
  {
    auto os = detail::open_out(dir / "run.cfg");
    os << "dataset=" << fs::absolute(o.dataset).string() << "\n"
       << "format=" << o.format << "\n"
       << "split_seed=" << o.seed << "\n";
  }
  const double n = static_cast<double>(data.records.size());
  std::ostringstream stats;
  stats << std::fixed << std::setprecision(1);
  stats << "n_users=" << data.n_users() << "\n"
        << "n_items=" << data.n_items() << "\n"
        << "n_ratings=" << data.records.size() << "\n"
        << "mean_ratings_per_user=" << n / static_cast<double>(data.n_users()) << "\n"
        << "mean_ratings_per_item=" << n / static_cast<double>(data.n_items()) << "\n"
        << "n_train=" << split.train.size() << "\n"
        << "n_validation=" << split.validation.size() << "\n"
        << "n_test=" << split.test.size() << "\n"
        << "group_size=" << std::llround(0.05 * static_cast<double>(data.n_users())) << "\n";
  auto os = detail::open_out(dir / "stats.txt");
  os << stats.str();
  out << stats.str();
}

inline void cmd_train(const Options& o, std::ostream& out) {
  const fs::path dir(o.out);
  auto data = detail::load_run(dir);
  ModelConfig mc = o.model;
  mc.variant = parse_variant(o.variant);
  const fs::path vdir = dir / to_string(mc.variant);
  fs::create_directories(vdir);
  detail::require_fresh(vdir / "model.mmf", o.force);

  auto result = train<float>(mc, o.train, data.split.n_users, data.split.n_items,
                             std::span<const RatingRecord>(data.split.train),
                             std::span<const RatingRecord>(data.split.validation));
  result.log.checkpoint_path = (vdir / "model.mmf").string();
  save_checkpoint((vdir / "model.mmf").string(), result.params);
  {
    auto os = detail::open_out(vdir / "trainlog.csv");
    result.log.write_csv(os);
  }
  const auto report = evaluate(result.params, std::span<const RatingRecord>(data.split.test), nullptr,
                               o.clip_eval);
  out << "variant=" << to_string(mc.variant) << " epochs=" << result.log.epochs.size()
      << " best_epoch=" << result.log.best_epoch << " test_mae=" << report.mae
      << " test_mse=" << report.mse << "\n";
}

inline void cmd_sweep(const Options& o, std::ostream& out) {
  const fs::path dir(o.out);
  auto data = detail::load_run(dir);
  const auto betas = detail::parse_betas(o.betas);
  const auto variants = detail::parse_variants(o.variant);
  const fs::path csv = dir / "sweep.csv";
  if (!o.resume) detail::require_fresh(csv, o.force);

  // Completed (variant, beta) rows and β = 1.0 baselines from earlier runs.
  std::set<std::pair<std::string, double>> completed;
  std::map<std::string, EvalReport> baselines;
  const auto test_hash = record_set_hash(data.split.test);
  const bool append = o.resume && fs::exists(csv);
  if (append) {
    std::ifstream is(csv);
    std::string line;
    std::getline(is, line);
    while (std::getline(is, line)) {
      std::vector<std::string> f;
      std::stringstream ss(line);
      std::string cell;
      while (std::getline(ss, cell, ',')) f.push_back(cell);
      if (line.ends_with(',')) f.emplace_back();
      if (f.size() != 9) continue;
      const double beta = std::stod(f[2]);
      auto& base = baselines[f[1]];
      if (f[6].empty()) {
        completed.insert({f[1], beta});
        if (beta == 1.0) {
          base.mae = std::stod(f[3]);
          base.mse = std::stod(f[4]);
          base.test_hash = test_hash;
          base.beta = 1.0;
        }
      } else if (beta == 1.0) {
        const GroupLabel label =
            f[6] == "Low" ? GroupLabel::Low : f[6] == "Med" ? GroupLabel::Med : GroupLabel::High;
        base.groups[label] = {std::stod(f[3]), static_cast<std::size_t>(std::stoull(f[7])), {}};
      }
    }
  }
  std::ofstream os = detail::open_out(csv, append ? std::ios::app : std::ios::trunc);
  if (!append) write_report_csv_header(os);
  os.flush();

  std::optional<UserGroups> groups;
  if (o.groups) groups = identify_user_groups(data.split.train, data.split.n_users);

  for (Variant v : variants) {
    ModelConfig mc = o.model;
    mc.variant = v;
    std::vector<double> todo;
    for (double b : betas)
      if (!completed.count({to_string(v), b})) todo.push_back(b);
    if (todo.empty()) continue;
    SweepOptions so;
    so.sample_seed = o.seed;
    so.groups = groups ? &*groups : nullptr;
    so.clip = o.clip_eval;
    so.jobs = o.jobs;
    auto it = baselines.find(to_string(v));
    if (it != baselines.end() && it->second.beta) so.baseline = it->second;
    so.on_report = [&](const EvalReport& r) {
      write_report_csv(os, data.dataset_name, r);
      os.flush();
      out << to_string(v) << " beta=" << *r.beta << " mae=" << r.mae << " mse=" << r.mse;
      if (r.delta_mae) out << " delta_mae=" << *r.delta_mae;
      out << "\n";
    };
    TrainConfig tc = o.train;
    beta_sweep<float>(mc, tc, data.split, todo, so);
  }
}

inline void cmd_groups(const Options& o, std::ostream& out) {
  const fs::path dir(o.out);
  auto data = detail::load_run(dir);
  const Variant v = parse_variant(o.variant);
  const fs::path ckpt = dir / to_string(v) / "model.mmf";
  const fs::path csv = dir / ("groups-" + std::string(to_string(v)) + ".csv");
  detail::require_fresh(csv, o.force);
  const auto params = load_checkpoint<float>(ckpt.string());
  const auto groups = identify_user_groups(data.split.train, data.split.n_users);
  const std::span<const RatingRecord> test(data.split.test);
  const auto pred = predict_records(params, test, o.clip_eval);
  EvalReport report = make_report(test, pred);
  report.variant = v;
  report.seed = params.seed;
  report.beta = 1.0;
  group_mae(report, test, pred, groups);

  const auto low = o.per_user ? per_user_group_errors(test, pred, groups.low)
                              : group_errors(test, pred, groups.low);
  const auto high = o.per_user ? per_user_group_errors(test, pred, groups.high)
                               : group_errors(test, pred, groups.high);
  const auto tt = one_tailed_t_test(low, high);

  auto os = detail::open_out(csv);
  os << std::setprecision(10);
  os << "group,n_users,n_test,mae\n";
  for (const UserGroup* g : {&groups.low, &groups.med, &groups.high}) {
    const auto& m = report.groups.at(g->label);
    os << to_string(g->label) << ',' << g->user_ids.size() << ',' << m.n << ',' << m.mae << '\n';
    out << to_string(g->label) << ": users=" << g->user_ids.size() << " test_ratings=" << m.n
        << " mae=" << m.mae << "\n";
  }
  os << "# t=" << tt.t_statistic << " df=" << tt.degrees_of_freedom
     << " p_one_tailed=" << tt.p_value_one_tailed << " significance=" << to_string(tt.significance)
     << " unit=" << (o.per_user ? "user" : "rating") << (tt.degenerate ? " degenerate" : "") << "\n";
  out << "Low vs High (one-tailed Welch): t=" << tt.t_statistic << " df=" << tt.degrees_of_freedom
      << " p=" << tt.p_value_one_tailed << " significance=" << to_string(tt.significance)
      << (tt.degenerate ? " (degenerate)" : "") << "\n";
}

inline void cmd_embed(const Options& o, std::ostream& out) {
  const fs::path dir(o.out);
  auto data = detail::load_run(dir);
  const Variant v = parse_variant(o.variant);
  const auto params = load_checkpoint<float>((dir / to_string(v) / "model.mmf").string());
  const fs::path edir = dir / "embed";
  fs::create_directories(edir);
  const fs::path wcsv = edir / (std::string(to_string(v)) + "-weights.csv");
  const fs::path icsv = edir / (std::string(to_string(v)) + "-items.csv");
  detail::require_fresh(wcsv, o.force);
  detail::require_fresh(icsv, o.force);

  std::optional<UserGroups> groups;
  if (data.split.n_users >= 60) groups = identify_user_groups(data.split.train, data.split.n_users);
  std::vector<std::size_t> users;
  if (o.groups) {
    if (!groups) throw ContractError("embed: --groups needs at least 60 users");
    for (const UserGroup* g : {&groups->low, &groups->med, &groups->high})
      users.insert(users.end(), g->user_ids.begin(), g->user_ids.end());
    std::sort(users.begin(), users.end());
  } else {
    users = detail::all_users(params.n_users);
  }

  auto embed_matrix = [&](const Tensor<float>& m, const fs::path& path) {
    EmbeddingRequest req;
    req.matrix = Tensor<double>(m.shape, std::vector<double>(m.values.begin(), m.values.end()));
    req.perplexity = o.perplexity;
    req.iterations = o.tsne_iterations;
    req.seed = o.seed;
    Embedding2D e = tsne_embed(req);
    for (std::size_t k = 0; k < users.size(); ++k) {
      e.ids[k] = data.ratings.users.raw(static_cast<std::uint32_t>(users[k]));
      if (groups)
        if (auto l = groups->label_of(static_cast<std::uint32_t>(users[k]))) e.groups[k] = to_string(*l);
    }
    e.metadata["variant"] = to_string(v);
    export_embedding(e, path.string());
  };
  embed_matrix(extract_first_layer_weights(params, users), wcsv);
  embed_matrix(extract_item_transforms(params, users), icsv);
  out << "wrote " << wcsv.string() << " and " << icsv.string() << " (" << users.size()
      << " users, perplexity " << o.perplexity << ")\n";
}

// Writes a synthetic rating file (not part of the experiment pipeline).
inline void cmd_synth(const Options& o, std::ostream& out) {
  if (o.dataset.empty()) throw ContractError("synth: --dataset (output path) is required");
  detail::require_fresh(o.dataset, o.force);
  std::vector<RatingRecord> recs;
  if (o.synth_kind == "rank1") {
    recs = synthetic::rank_one(o.synth_users, o.synth_items, o.seed);
  } else if (o.synth_kind == "clustered") {
    synthetic::ClusteredSpec spec;
    spec.n_users = o.synth_users;
    spec.n_items = o.synth_items;
    recs = synthetic::clustered(spec, o.seed);
  } else {
    throw ContractError("synth: --kind must be rank1 or clustered");
  }
  auto os = detail::open_out(o.dataset);
  synthetic::write_tsv(os, recs);
  out << "wrote " << recs.size() << " ratings to " << o.dataset << "\n";
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"MetaMF / NoMetaMF training and privacy-budget evaluation"};
  app.require_subcommand(1);
  app.set_config("--config", "", "key = value configuration file; flags override it");
  app.option_defaults()->always_capture_default();
  Options o;

  app.add_option("--out", o.out, "Run directory")->required();
  app.add_option("--dataset", o.dataset, "Rating file (ingest) or output path (synth)");
  app.add_option("--format", o.format,
                 "tsv | csv | dat | jester | key=value list (delim, user, item, rating, skip, range)");
  app.add_option("--seed", o.seed, "Seed for splitting, sampling, initialisation and t-SNE");
  app.add_option("--variant", o.variant, "metamf | nometamf (sweep also accepts both)");
  app.add_option("--betas", o.betas, "Comma-separated privacy budgets in (0, 1]");
  app.add_flag("--groups", o.groups, "Sweep: add Low/Med/High rows. Embed: only group users");
  app.add_option("--jobs", o.jobs, "Concurrent training runs in a sweep")->check(CLI::PositiveNumber);
  app.add_flag("--resume", o.resume, "Sweep: keep completed rows and run the rest");
  app.add_flag("--force", o.force, "Replace existing outputs");
  app.add_flag("--clip-eval", o.clip_eval, "Clip predictions to [1, 5] when evaluating");
  app.add_flag("--per-user", o.per_user, "Groups: t-test on per-user mean errors");
  app.add_option("--perplexity", o.perplexity, "t-SNE perplexity");
  app.add_option("--tsne-iterations", o.tsne_iterations, "t-SNE iterations");
  app.add_option("--d-user", o.model.d_user);
  app.add_option("--d-collab", o.model.d_collab);
  app.add_option("--d-hidden-meta", o.model.d_hidden_meta);
  app.add_option("--d-item", o.model.d_item);
  app.add_option("--d-rp-hidden", o.model.d_rp_hidden);
  app.add_option("--rank", o.model.r_lowrank, "Rank of the item-embedding personalisation");
  app.add_option("--epochs", o.train.max_epochs);
  app.add_option("--batch-size", o.train.batch_size);
  app.add_option("--lr", o.train.learning_rate);
  app.add_option("--patience", o.train.patience);
  app.add_option("--optimizer", o.optimizer)->check(CLI::IsMember({"adam", "sgd"}));
  app.add_option("--kind", o.synth_kind, "synth: rank1 | clustered");
  app.add_option("--users", o.synth_users, "synth: number of users");
  app.add_option("--items", o.synth_items, "synth: number of items");

  std::map<std::string, std::function<void(const Options&, std::ostream&)>> commands = {
      {"ingest", cmd_ingest}, {"train", cmd_train}, {"sweep", cmd_sweep},
      {"groups", cmd_groups}, {"embed", cmd_embed}, {"synth", cmd_synth}};
  const std::map<std::string, std::string> help = {
      {"ingest", "Load a rating file, split 80/10/10 and print dataset statistics"},
      {"train", "Train one variant on the run's split and write a checkpoint"},
      {"sweep", "Train and evaluate across privacy budgets; writes sweep.csv"},
      {"groups", "Per-group MAE and one-tailed Low-vs-High t-test for a checkpoint"},
      {"embed", "t-SNE of first-layer weights and item-embedding transforms"},
      {"synth", "Write a synthetic rating file"}};
  for (const auto& [name, text] : help) app.add_subcommand(name, text)->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kContractFailure;
  }
  o.train.seed = o.seed;
  o.train.optimizer = o.optimizer == "sgd" ? OptimizerKind::SGD : OptimizerKind::Adam;

  const auto sub = app.get_subcommands().front();
  try {
    o.model.validate();
    o.train.validate();
    const std::string name = sub->get_name();
    commands.at(name)(o, out);
    if (name != "synth") {
      // Effective configuration, flags merged over any --config file.
      const bool per_variant = name == "train" || name == "groups" || name == "embed";
      auto cfg = detail::open_out(fs::path(o.out) /
                                  (name + (per_variant ? "-" + o.variant : "") + ".cfg"));
      cfg << app.config_to_str(true, false);
    }
    return kOk;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kNumericalFailure;
  } catch (const IoError& e) {
    err << "io error: " << e.what() << "\n";
    return kIoFailure;
  } catch (const fs::filesystem_error& e) {
    err << "io error: " << e.what() << "\n";
    return kIoFailure;
  } catch (const ContractError& e) {
    err << "error: " << e.what() << "\n";
    return kContractFailure;
  }
}

}  // namespace metamf::cli
