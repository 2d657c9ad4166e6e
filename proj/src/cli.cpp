#include "rgfm/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <map>
#include <ostream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>
#include <spdlog/spdlog.h>

#include "rgfm/checks.hpp"
#include "rgfm/errors.hpp"

namespace rgfm::cli {

namespace {

const std::map<std::string, Command> kCommands{{"pretrain", Command::pretrain},
                                               {"embed", Command::embed},
                                               {"eval-link", Command::eval_link},
                                               {"eval-node", Command::eval_node},
                                               {"selfcheck", Command::selfcheck}};

std::filesystem::path with_suffix(const std::filesystem::path& p, const std::string& suffix) {
  return std::filesystem::path(p.string() + suffix);
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArgumentError(fmt::format("cannot write {}", path.string()));
  return out;
}

void write_header(std::ostream& out, const RunConfig& config) {
  for (const auto& [key, value] : config.resolved()) fmt::print(out, "# {} = {}\n", key, value);
}

void require_path(const std::filesystem::path& p, const char* flag, const RunConfig& config) {
  if (p.empty()) throw ArgumentError(fmt::format("{} needs {}", command_name(config.command), flag));
}

void require_exists(const std::filesystem::path& p) {
  if (!std::filesystem::exists(p)) throw MissingFileError(fmt::format("no such file '{}'", p.string()));
}

// Explicit model settings must agree with the checkpoint; the rest of the
// run then uses the checkpoint's model.
RunConfig adopt_checkpoint(const RunConfig& config, const Checkpoint& ckpt) {
  const ModelConfig& m = ckpt.model;
  if (config.dim && *config.dim != m.tree_spec.dim()) {
    throw DimensionError(
        fmt::format("--dim {} does not match the checkpoint dimension {}", *config.dim, m.tree_spec.dim()));
  }
  if (config.layers && *config.layers != m.layers) {
    throw DimensionError(fmt::format("--layers {} does not match the checkpoint ({} layers)", *config.layers, m.layers));
  }
  RunConfig out = config;
  out.train.model = m;
  return out;
}

EmbedConfig embed_config(const RunConfig& config) {
  EmbedConfig e;
  e.init = config.train.init;
  e.trees = config.train.trees;
  e.seed = config.train.seed;
  e.threads = config.train.threads;
  return e;
}

void write_metrics(const RunConfig& config, Metrics metrics, std::ostream& log) {
  metrics.config = config.resolved();
  {
    auto out = open_out(config.out);
    write_header(out, config);
    write_metrics_text(out, metrics);
  }
  auto json = open_out(with_suffix(config.out, ".json"));
  write_metrics_json(json, metrics);
  json << '\n';
  if (metrics.auc) fmt::print(log, "auc = {:.6f}\nap = {:.6f}\n", *metrics.auc, *metrics.ap);
  if (metrics.acc) fmt::print(log, "acc = {:.6f}\nweighted_f1 = {:.6f}\n", *metrics.acc, *metrics.weighted_f1);
}

int run_pretrain(const RunConfig& config, std::ostream& log) {
  const Graph graph = load_edge_list(config.graph);
  const TrainResult result = train(graph, config.train);
  save_checkpoint(config.out, result.checkpoint);
  {
    auto meta = open_out(with_suffix(config.out, ".meta"));
    write_header(meta, config);
    fmt::print(meta, "num_scalars = {}\n", result.checkpoint.params.num_scalars());
  }
  auto trace = open_out(with_suffix(config.out, ".trace"));
  write_header(trace, config);
  fmt::print(trace, "# epoch mean_loss\n");
  for (std::size_t e = 0; e < result.loss_trace.size(); ++e) {
    fmt::print(trace, "{} {:.17g}\n", e, result.loss_trace[e]);
  }
  if (result.loss_trace.empty()) {
    fmt::print(log, "pretrain: 0 epochs, wrote {}\n", config.out.string());
  } else {
    fmt::print(log, "pretrain: {} epochs, loss {:.6f} -> {:.6f}, wrote {}\n", result.loss_trace.size(),
               result.loss_trace.front(), result.loss_trace.back(), config.out.string());
  }
  return exit_code::ok;
}

int run_embed(const RunConfig& base, std::ostream& log) {
  const Checkpoint ckpt = load_checkpoint(base.checkpoint);
  const RunConfig config = adopt_checkpoint(base, ckpt);
  const Graph graph = load_edge_list(config.graph);
  const Mat table = embed(graph, ckpt, embed_config(config));
  auto out = open_out(config.out);
  write_header(out, config);
  fmt::print(out, "{} {}\n", table.rows(), table.cols());
  for (Eigen::Index i = 0; i < table.rows(); ++i) {
    fmt::print(out, "{}", i);
    for (Eigen::Index j = 0; j < table.cols(); ++j) fmt::print(out, " {:.17g}", table(i, j));
    out << '\n';
  }
  fmt::print(log, "embed: {} nodes x {} columns, wrote {}\n", table.rows(), table.cols(), config.out.string());
  return exit_code::ok;
}

int run_eval_link(const RunConfig& base, std::ostream& log) {
  const Checkpoint ckpt = load_checkpoint(base.checkpoint);
  const RunConfig config = adopt_checkpoint(base, ckpt);
  const Graph graph = load_edge_list(config.graph);
  const LinkSplit split = split_links(graph, config.holdout, config.train.seed);
  const Mat table = embed(split.train_graph(graph), ckpt, embed_config(config));
  const SpaceSpec factors[] = {ckpt.model.tree_spec, ckpt.model.cycle_spec};
  const auto pos = score_links(table, split.test_pos_edges, config.scorer, factors);
  const auto neg = score_links(table, split.test_neg_edges, config.scorer, factors);
  const Ranking ranking = auc_ap(pos, neg);
  Metrics metrics;
  metrics.auc = ranking.auc;
  metrics.ap = ranking.ap;
  metrics.seed = config.train.seed;
  write_metrics(config, metrics, log);
  return exit_code::ok;
}

int run_eval_node(const RunConfig& base, std::ostream& log) {
  const Checkpoint ckpt = load_checkpoint(base.checkpoint);
  const RunConfig config = adopt_checkpoint(base, ckpt);
  const Graph graph = load_edge_list(config.graph);
  const std::vector<int> labels = load_labels(config.labels, graph.num_nodes());
  const FewShotSplit split = split_few_shot(labels, config.k_shots, config.train.seed);
  const Mat table = embed(graph, ckpt, embed_config(config));
  const Classification result = classify_nodes(table, labels, split);
  Metrics metrics;
  metrics.acc = result.accuracy;
  metrics.weighted_f1 = result.weighted_f1;
  metrics.seed = config.train.seed;
  metrics.k = config.k_shots;
  write_metrics(config, metrics, log);
  return exit_code::ok;
}

int run_selfcheck(const RunConfig& config, std::ostream& log) {
  const auto results = rgfm::run_selfcheck(SelfcheckOptions{config.train.seed, config.selfcheck_scale});
  std::size_t passed = 0;
  std::string report;
  for (const auto& r : results) {
    passed += r.passed() ? 1 : 0;
    const std::string line = fmt::format("{} {}: {} cases, {} failures, worst {:.3e}, tolerance {:.1e}",
                                         r.passed() ? "PASS" : "FAIL", r.name, r.cases, r.failures, r.worst,
                                         r.tolerance);
    fmt::print(log, "{} ({:.2f} s)\n", line, r.seconds);
    report += line + '\n';
  }
  const std::string summary = fmt::format("selfcheck: {}/{} suites passed", passed, results.size());
  fmt::print(log, "{}\n", summary);
  if (!config.out.empty()) {
    auto out = open_out(config.out);
    write_header(out, config);
    out << report << summary << '\n';
  }
  return passed == results.size() ? exit_code::ok : exit_code::failure;
}

void set_log_level() {
  const char* env = std::getenv("RGFM_LOG");
  const std::string level = env ? env : "info";
  if (level == "error") {
    spdlog::set_level(spdlog::level::err);
  } else if (level == "debug") {
    spdlog::set_level(spdlog::level::debug);
  } else {
    if (level != "info") spdlog::warn("RGFM_LOG={} not one of error, info, debug; using info", level);
    spdlog::set_level(spdlog::level::info);
  }
}

}  // namespace

std::string command_name(Command command) {
  for (const auto& [name, c] : kCommands) {
    if (c == command) return name;
  }
  return "?";
}

void RunConfig::validate() const {
  if (command != Command::selfcheck) {
    require_path(graph, "--graph", *this);
    require_path(out, "--out", *this);
  }
  if (command == Command::embed || command == Command::eval_link || command == Command::eval_node) {
    require_path(checkpoint, "--checkpoint", *this);
  }
  if (command == Command::eval_node) require_path(labels, "--labels", *this);
  if (!(holdout > 0.0 && holdout < 1.0)) throw ArgumentError("--holdout must lie in (0, 1)");
  if (k_shots < 1) throw ArgumentError("--k-shots must be >= 1");
  if (!(selfcheck_scale > 0.0)) throw ArgumentError("--scale must be positive");
  if (train.init.k < 0) throw ArgumentError("--spectral-k must be >= 0");
  train.validate();
}

std::vector<std::pair<std::string, std::string>> RunConfig::resolved() const {
  const ModelConfig& m = train.model;
  return {
      {"command", command_name(command)},
      {"graph", graph.string()},
      {"labels", labels.string()},
      {"checkpoint", checkpoint.string()},
      {"out", out.string()},
      {"dim", fmt::format("{}", m.tree_spec.dim())},
      {"kappa_tree", fmt::format("{}", m.tree_spec.curvature())},
      {"kappa_cycle", fmt::format("{}", m.cycle_spec.curvature())},
      {"layers", fmt::format("{}", m.layers)},
      {"hidden", fmt::format("{}", m.hidden)},
      {"epochs", fmt::format("{}", train.epochs)},
      {"batch_size", fmt::format("{}", train.batch_size)},
      {"lr", fmt::format("{}", train.learning_rate)},
      {"dropout", fmt::format("{}", train.dropout)},
      {"seed", fmt::format("{}", train.seed)},
      {"samples", fmt::format("{}", train.trees.samples_per_anchor)},
      {"depth", fmt::format("{}", train.trees.depth)},
      {"branch_cap", fmt::format("{}", train.trees.branch_cap)},
      {"temperature", fmt::format("{}", train.temperature)},
      {"negative_pool", train.negative_pool == NegativePool::full ? "full" : "batch"},
      {"freeze_samples", train.freeze_samples ? "true" : "false"},
      {"eigen_mode", train.init.eigen_mode == EigenMode::smallest ? "smallest" : "largest"},
      {"spectral_k", fmt::format("{}", train.init.k)},
      {"threads", fmt::format("{}", train.threads)},
      {"holdout", fmt::format("{}", holdout)},
      {"k_shots", fmt::format("{}", k_shots)},
      {"scorer", scorer == LinkScorer::distance ? "distance" : "dot"},
  };
}

int run(const RunConfig& config, std::ostream& log) {
  config.validate();
  for (const auto* p : {&config.graph, &config.checkpoint, &config.labels}) {
    if (!p->empty()) require_exists(*p);
  }
  switch (config.command) {
    case Command::pretrain:
      return run_pretrain(config, log);
    case Command::embed:
      return run_embed(config, log);
    case Command::eval_link:
      return run_eval_link(config, log);
    case Command::eval_node:
      return run_eval_node(config, log);
    case Command::selfcheck:
      return run_selfcheck(config, log);
  }
  return exit_code::failure;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const MissingFileError*>(&e) || dynamic_cast<const CLI::FileError*>(&e)) {
    return exit_code::missing_file;
  }
  if (dynamic_cast<const ArgumentError*>(&e) || dynamic_cast<const CLI::ParseError*>(&e)) {
    return exit_code::bad_config;
  }
  if (dynamic_cast<const DimensionError*>(&e)) return exit_code::dimension_mismatch;
  if (dynamic_cast<const NumericError*>(&e)) return exit_code::numeric;
  return exit_code::failure;
}

int run_cli(const std::vector<std::string>& args, std::ostream& log) {
  set_log_level();
  RunConfig config;
  TrainConfig& t = config.train;
  int dim = t.model.tree_spec.dim();
  double kappa_tree = t.model.tree_spec.curvature();
  double kappa_cycle = t.model.cycle_spec.curvature();
  int layers = t.model.layers;
  std::string command;
  std::string eigen_mode = "largest";
  std::string scorer = "dot";
  std::string pool = "batch";

  CLI::App app{"Structural graph foundation model on a hyperbolic x spherical product bundle", "rgfm"};
  app.set_config("--config", "", "File of \"key = value\" lines; flags override it");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.add_option("command", command, "pretrain | embed | eval-link | eval-node | selfcheck")
      ->required()
      ->check(CLI::IsMember({"pretrain", "embed", "eval-link", "eval-node", "selfcheck"}));
  app.add_option("--graph", config.graph, "Edge list, one \"u v\" pair per line");
  app.add_option("--labels", config.labels, "Node labels, one \"node class\" pair per line");
  app.add_option("--checkpoint", config.checkpoint, "Checkpoint to load");
  app.add_option("--out", config.out, "Output path");
  app.add_option("--epochs", t.epochs)->capture_default_str();
  app.add_option("--batch-size,--batch_size", t.batch_size, "Anchor nodes per step")->capture_default_str();
  app.add_option("--lr", t.learning_rate)->capture_default_str();
  app.add_option("--dropout", t.dropout)->capture_default_str();
  app.add_option("--seed", t.seed)->capture_default_str();
  auto* dim_opt = app.add_option("--dim", dim, "Dimension of each factor")->capture_default_str();
  app.add_option("--kappa-tree,--kappa_tree", kappa_tree, "Curvature of the tree factor (0 = Euclidean)")->capture_default_str();
  app.add_option("--kappa-cycle,--kappa_cycle", kappa_cycle, "Curvature of the cycle factor (0 = Euclidean)")->capture_default_str();
  auto* layers_opt = app.add_option("--layers", layers)->capture_default_str();
  app.add_option("--hidden", t.model.hidden, "Hidden width of the attention scorer")->capture_default_str();
  app.add_option("--samples", t.trees.samples_per_anchor, "Trees and cycles per anchor")->capture_default_str();
  app.add_option("--depth", t.trees.depth, "Tree depth")->capture_default_str();
  app.add_option("--branch-cap,--branch_cap", t.trees.branch_cap)->capture_default_str();
  app.add_option("--temperature", t.temperature)->capture_default_str();
  app.add_option("--negative-pool,--negative_pool", pool)->check(CLI::IsMember({"batch", "full"}))->capture_default_str();
  app.add_flag("--freeze-samples,--freeze_samples", t.freeze_samples, "Sample substructures once instead of every epoch");
  app.add_option("--eigen-mode,--eigen_mode", eigen_mode)->check(CLI::IsMember({"largest", "smallest"}))->capture_default_str();
  app.add_option("--spectral-k,--spectral_k", t.init.k, "Spectral dimension (0 = factor dimension)")->capture_default_str();
  app.add_option("--threads", t.threads)->capture_default_str();
  app.add_option("--holdout", config.holdout, "Fraction of edges held out")->capture_default_str();
  app.add_option("--k-shots,--k_shots", config.k_shots, "Training nodes per class")->capture_default_str();
  app.add_option("--scorer", scorer, "Link scorer")->check(CLI::IsMember({"dot", "distance"}))->capture_default_str();
  app.add_option("--scale", config.selfcheck_scale, "Selfcheck case-count multiplier")->capture_default_str();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
    config.command = kCommands.at(command);
    if (dim_opt->count() > 0) config.dim = dim;
    if (layers_opt->count() > 0) config.layers = layers;
    t.model.tree_spec = SpaceSpec(dim, kappa_tree);
    t.model.cycle_spec = SpaceSpec(dim, kappa_cycle);
    t.model.layers = layers;
    t.init.eigen_mode = eigen_mode == "smallest" ? EigenMode::smallest : EigenMode::largest;
    t.negative_pool = pool == "full" ? NegativePool::full : NegativePool::batch;
    config.scorer = scorer == "distance" ? LinkScorer::distance : LinkScorer::dot;
    return run(config, log);
  } catch (const CLI::CallForHelp&) {
    log << app.help();
    return exit_code::ok;
  } catch (const CLI::ParseError& e) {
    fmt::print(log, "rgfm: error: {}\n", e.what());
    return exit_code_for(e);
  } catch (const std::exception& e) {
    fmt::print(log, "rgfm: error: {}\n", e.what());
    return exit_code_for(e);
  }
}

}  // namespace rgfm::cli
