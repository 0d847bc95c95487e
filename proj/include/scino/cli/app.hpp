#pragma once

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "scino/core/error.hpp"
#include "scino/core/random.hpp"
#include "scino/data/generate.hpp"
#include "scino/data/io.hpp"
#include "scino/ensemble/control.hpp"
#include "scino/metrics/metrics.hpp"
#include "scino/ordering/order.hpp"
#include "scino/pruning/prune.hpp"

namespace scino::cli {

inline constexpr const char* kVersion = "0.1.0";

enum class DataKind { gp, linear, physics };
NLOHMANN_JSON_SERIALIZE_ENUM(DataKind, {{DataKind::gp, "gp"}, {DataKind::linear, "linear"}, {DataKind::physics, "physics"}})

struct GenerateSection {
  DataKind kind = DataKind::gp;
  std::size_t D = 5;
  std::optional<double> expected_edges;
  std::size_t N = 1000;
  double noise_std = 1.0;
  double weight_low = 0.5, weight_high = 2.0;
};

inline void to_json(nlohmann::json& j, const GenerateSection& g) {
  j = {{"kind", g.kind}, {"D", g.D}, {"N", g.N}, {"noise_std", g.noise_std}, {"weight_low", g.weight_low}, {"weight_high", g.weight_high}};
  j["expected_edges"] = g.expected_edges ? nlohmann::json(*g.expected_edges) : nlohmann::json(nullptr);
}

inline void from_json(const nlohmann::json& j, GenerateSection& g) {
  const GenerateSection d;
  g.kind = j.value("kind", d.kind);
  g.D = j.value("D", d.D);
  g.N = j.value("N", d.N);
  g.noise_std = j.value("noise_std", d.noise_std);
  g.weight_low = j.value("weight_low", d.weight_low);
  g.weight_high = j.value("weight_high", d.weight_high);
  g.expected_edges.reset();
  if (j.contains("expected_edges") && !j.at("expected_edges").is_null()) g.expected_edges = j.at("expected_edges").get<double>();
}

/// Every knob of every command. One root seed feeds all substreams.
struct RunConfig {
  std::uint64_t seed = 0;
  GenerateSection generate;
  OrderingConfig ordering;
  PruneConfig prune;
  ControlConfig control;
  std::string prior = "uniform";  // uniform | table | remote
  double prior_timeout = 30.0;

  /// Pushes the root seed into every section.
  void apply_seed() {
    ordering.seed = seed;
    ordering.train.seed = seed;
    ordering.probe.seed = seed;
  }
};

inline void to_json(nlohmann::json& j, const RunConfig& c) {
  j = {{"seed", c.seed}, {"generate", c.generate}, {"ordering", c.ordering}, {"prune", c.prune},
       {"control", c.control}, {"prior", c.prior}, {"prior_timeout", c.prior_timeout}};
}

inline void from_json(const nlohmann::json& j, RunConfig& c) {
  const RunConfig d;
  c.seed = j.value("seed", d.seed);
  c.generate = j.value("generate", d.generate);
  c.ordering = j.value("ordering", d.ordering);
  c.prune = j.value("prune", d.prune);
  c.control = j.value("control", d.control);
  c.prior = j.value("prior", d.prior);
  c.prior_timeout = j.value("prior_timeout", d.prior_timeout);
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

/// Output directory with config.json and manifest.json next to the artifacts.
class OutputDir {
 public:
  OutputDir(std::string path, bool force) : path_(std::move(path)) {
    namespace fs = std::filesystem;
    if (path_.empty()) throw ConfigError("--out is required");
    std::error_code ec;
    if (fs::exists(path_, ec) && !force) {
      if (!fs::is_directory(path_)) throw ConfigError("output path exists and is not a directory: " + path_);
      if (!fs::is_empty(path_)) throw ConfigError("output directory " + path_ + " is not empty; pass --force to overwrite");
    }
    fs::create_directories(path_, ec);
    if (ec || !fs::is_directory(path_)) throw ConfigError("cannot create output directory " + path_);
  }

  std::string file(const std::string& name) {
    artifacts_.push_back(name);
    return (std::filesystem::path(path_) / name).string();
  }

  void write_text(const std::string& name, const std::string& text) {
    std::ofstream out(file(name), std::ios::binary);
    if (!out) throw ConfigError("cannot write " + name + " in " + path_);
    out << text;
  }

  void finish(const std::string& command, const RunConfig& cfg, const nlohmann::json& extra = nlohmann::json::object()) {
    const nlohmann::json cj = cfg;
    write_json_file((std::filesystem::path(path_) / "config.json").string(), cj);
    nlohmann::json m = {{"command", command},
                        {"version", kVersion},
                        {"seed", cfg.seed},
                        {"config_hash", hex64(detail::fnv1a(cj.dump()))},
                        {"artifacts", artifacts_}};
    for (const auto& [k, v] : extra.items()) m[k] = v;
    write_json_file((std::filesystem::path(path_) / "manifest.json").string(), m);
  }

 private:
  std::string path_;
  std::vector<std::string> artifacts_;
};

inline nlohmann::json order_to_json(const CausalOrder& o, const std::vector<std::string>& names) {
  nlohmann::json topo = nlohmann::json::array(), rem = nlohmann::json::array();
  for (std::size_t v : o.topological()) topo.push_back(names.at(v));
  for (std::size_t v : o.removal) rem.push_back(names.at(v));
  return {{"nodes", names}, {"topological_order", topo}, {"removal_order", rem}};
}

/// Reads an order file and maps its names onto `names`.
inline CausalOrder order_from_json(const nlohmann::json& j, const std::vector<std::string>& names) {
  std::vector<std::string> topo;
  try {
    topo = j.at("topological_order").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("order JSON: ") + e.what());
  }
  std::vector<std::size_t> ids;
  for (const auto& n : topo) {
    const auto it = std::find(names.begin(), names.end(), n);
    if (it == names.end()) throw DataError("order JSON: unknown node '" + n + "'");
    ids.push_back(static_cast<std::size_t>(it - names.begin()));
  }
  CausalOrder o = CausalOrder::from_topological(ids);
  o.validate(names.size());
  return o;
}

/// Reorders g's nodes to match `names` (names must agree as sets).
inline Dag align_graph(const Dag& g, const std::vector<std::string>& names) {
  if (g.size() != names.size()) throw DataError("graph has " + std::to_string(g.size()) + " nodes, expected " + std::to_string(names.size()));
  std::vector<std::size_t> map(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto it = std::find(names.begin(), names.end(), g.names()[i]);
    if (it == names.end()) throw DataError("node-name mismatch: '" + g.names()[i] + "' is not in the reference graph");
    map[i] = static_cast<std::size_t>(it - names.begin());
  }
  Dag out(names);
  for (auto [i, j] : g.edges()) out.add_edge(map[i], map[j]);
  return out;
}

inline Dataset generate_dataset(const GenerateSection& gs, std::uint64_t seed, Dag& graph) {
  if (gs.kind == DataKind::physics) {
    PhysicsSample p = gen_physics(gs.N, seed);
    graph = p.graph;
    return p.data;
  }
  GenConfig gc;
  gc.D = gs.D;
  gc.expected_edges = gs.expected_edges;
  gc.N = gs.N;
  gc.noise_std = gs.noise_std;
  gc.seed = seed;
  graph = gen_er_dag(gc);
  return gs.kind == DataKind::gp ? sample_gp_anm(graph, gc) : sample_linear_anm(graph, gs.weight_low, gs.weight_high, gc);
}

inline std::unique_ptr<PriorProvider> make_provider(const RunConfig& cfg, const std::string& table_path) {
  if (cfg.prior == "uniform") return std::make_unique<UniformPrior>();
  if (cfg.prior == "table") {
    if (table_path.empty()) throw ConfigError("--prior table needs --table FILE");
    return std::make_unique<TablePrior>(TablePrior::from_json(read_json_file(table_path)));
  }
  if (cfg.prior == "remote") {
    RemotePriorConfig rc = RemotePriorConfig::from_env();
    rc.timeout_seconds = cfg.prior_timeout;
    rc.alpha = cfg.control.alpha;
    return std::make_unique<RemotePrior>(rc);
  }
  throw ConfigError("unknown prior provider '" + cfg.prior + "' (uniform, table, remote)");
}

inline const char* kUsage =
    "Score-based causal ordering with a Fourier-operator diffusion score model.\n"
    "Exit codes: 0 ok, 2 configuration, 3 data, 4 numeric failure, 5 prior provider.";

/// Parses argv, runs one command and returns the process exit code.
inline int run(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{kUsage, "scino"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  std::string config_path, out_dir, data_path, checkpoint, truth_path, order_path, graph_path, variables_path, table_path;
  bool force = false;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> d_flag, n_flag, epochs, members, eval_samples;
  std::optional<double> edges, tau;
  std::optional<std::string> kind, criterion, strategy, backend, sign, prior, evidence;

  auto common = [&](CLI::App* c, bool needs_out = true) {
    c->add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
    if (needs_out) c->add_option("--out", out_dir, "output directory")->required();
    c->add_flag("--force", force, "allow writing into a non-empty output directory");
    c->add_option("--seed", seed, "root seed for every random substream");
  };
  auto model_flags = [&](CLI::App* c) {
    c->add_option("--data", data_path, "dataset CSV")->required()->check(CLI::ExistingFile);
    c->add_option("--epochs", epochs, "training epochs");
  };

  CLI::App* gen = app.add_subcommand("generate", "sample a synthetic graph and dataset");
  common(gen);
  gen->add_option("--kind", kind, "gp | linear | physics");
  gen->add_option("--d", d_flag, "number of variables");
  gen->add_option("--n", n_flag, "number of samples");
  gen->add_option("--edges", edges, "expected edge count (default 4*D)");

  CLI::App* tr = app.add_subcommand("train", "train a score model");
  common(tr);
  model_flags(tr);

  CLI::App* ord = app.add_subcommand("order", "recover a causal order");
  common(ord);
  model_flags(ord);
  ord->add_option("--checkpoint", checkpoint, "pretrained model JSON")->check(CLI::ExistingFile);
  ord->add_option("--criterion", criterion, "min-variance | max-mean");
  ord->add_option("--strategy", strategy, "deciduous | drop-column");
  ord->add_option("--backend", backend, "diffusion | stein | probed");
  ord->add_option("--residue-sign", sign, "corrected | paper");
  ord->add_option("--eval-samples", eval_samples, "rows used for the statistics (0 = all)");

  CLI::App* pr = app.add_subcommand("prune", "prune an order into a DAG");
  common(pr);
  pr->add_option("--data", data_path, "dataset CSV")->required()->check(CLI::ExistingFile);
  pr->add_option("--order", order_path, "order JSON")->required()->check(CLI::ExistingFile);

  CLI::App* ev = app.add_subcommand("eval", "score an order or graph against the truth");
  common(ev);
  ev->add_option("--order", order_path, "order JSON");
  ev->add_option("--graph", graph_path, "predicted graph JSON");
  ev->add_option("--truth", truth_path, "true graph JSON")->required();

  CLI::App* en = app.add_subcommand("ensemble", "first-step ensemble evidence");
  common(en);
  model_flags(en);
  en->add_option("--checkpoint", checkpoint, "pretrained model JSON")->check(CLI::ExistingFile);
  en->add_option("--members", members, "ensemble size");

  CLI::App* ct = app.add_subcommand("control", "order with prior fusion");
  common(ct);
  model_flags(ct);
  ct->add_option("--checkpoint", checkpoint, "pretrained model JSON")->check(CLI::ExistingFile);
  ct->add_option("--variables", variables_path, "variables JSON: {\"context\": [names]}")->check(CLI::ExistingFile);
  ct->add_option("--prior", prior, "uniform | table | remote");
  ct->add_option("--table", table_path, "table prior JSON: {\"steps\": [{name: weight}]}")->check(CLI::ExistingFile);
  ct->add_option("--members", members, "ensemble size");
  ct->add_option("--evidence", evidence, "rank | ci");
  ct->add_option("--tau", tau, "evidence temperature in [0, 5]");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : static_cast<int>(ErrorKind::config);
  }

  auto warn = [&](const std::string& w) { err << "warning: " << w << "\n"; };
  try {
    RunConfig cfg;
    if (!config_path.empty()) {
      try {
        cfg = read_json_file(config_path).get<RunConfig>();
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
      } catch (const DataError& e) {
        throw ConfigError(e.what());
      }
    }
    if (seed) cfg.seed = *seed;
    cfg.apply_seed();
    auto parse_enum = [](const std::string& s, auto& field, const char* what) {
      try {
        using E = std::decay_t<decltype(field)>;
        const E v = nlohmann::json(s).get<E>();
        if (nlohmann::json(v).get<std::string>() != s) throw ConfigError("");
        field = v;
      } catch (...) {
        throw ConfigError(std::string("invalid ") + what + " '" + s + "'");
      }
    };
    if (kind) parse_enum(*kind, cfg.generate.kind, "--kind");
    if (d_flag) cfg.generate.D = *d_flag;
    if (n_flag) cfg.generate.N = *n_flag;
    if (edges) cfg.generate.expected_edges = *edges;
    if (epochs) cfg.ordering.train.epochs = *epochs;
    if (criterion) parse_enum(*criterion, cfg.ordering.criterion, "--criterion");
    if (strategy) parse_enum(*strategy, cfg.ordering.strategy, "--strategy");
    if (backend) parse_enum(*backend, cfg.ordering.backend, "--backend");
    if (sign) parse_enum(*sign, cfg.ordering.residue_sign, "--residue-sign");
    if (eval_samples) cfg.ordering.eval_samples = *eval_samples;
    if (members) cfg.control.members = *members;
    if (evidence) parse_enum(*evidence, cfg.control.evidence, "--evidence");
    if (tau) cfg.control.tau = *tau;
    if (prior) cfg.prior = *prior;
    cfg.ordering.validate();
    cfg.prune.validate();
    cfg.control.validate();

    OutputDir dir(out_dir, force);

    auto load_model = [&](const Dataset& ds) -> std::optional<TrainedScoreModel> {
      if (checkpoint.empty()) return std::nullopt;
      TrainedScoreModel m;
      try {
        m = TrainedScoreModel::from_json(read_json_file(checkpoint));
      } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("checkpoint: ") + e.what());
      }
      if (m.dim() != ds.d())
        throw DataError("checkpoint expects " + std::to_string(m.dim()) + " columns, dataset has " + std::to_string(ds.d()));
      return m;
    };
    auto get_model = [&](const Dataset& ds) {
      if (auto m = load_model(ds)) return *m;
      TrainedScoreModel m = train_model(ds.values, cfg.ordering);
      write_json_file(dir.file("model.json"), m.to_json());
      return m;
    };

    if (gen->parsed()) {
      Dag g(0);
      const Dataset ds = generate_dataset(cfg.generate, cfg.seed, g);
      save_csv(dir.file("dataset.csv"), ds);
      save_graph_json(dir.file("graph.json"), g);
      dir.finish("generate", cfg);
    } else if (tr->parsed()) {
      const Dataset ds = load_csv(data_path);
      HyperParams hp = cfg.ordering.hyper ? *cfg.ordering.hyper : HyperParams::desk(ds.d());
      hp.D = ds.d();
      const TrainResult r = train(ds.values, hp, cfg.ordering.train);
      write_json_file(dir.file("model.json"), r.model.to_json());
      std::ofstream lc(dir.file("loss.csv"));
      write_loss_csv(lc, r.log);
      dir.finish("train", cfg);
    } else if (ord->parsed()) {
      const Dataset ds = load_csv(data_path);
      const std::optional<TrainedScoreModel> m = load_model(ds);
      const OrderingResult r = order_all(ds, cfg.ordering, m ? &*m : nullptr);
      if (!m && r.model) write_json_file(dir.file("model.json"), r.model->to_json());
      write_json_file(dir.file("order.json"), order_to_json(r.order, ds.names));
      std::ofstream sc(dir.file("steps.csv"));
      write_step_log(sc, r.tables, ds.names);
      dir.finish("order", cfg);
    } else if (pr->parsed()) {
      const Dataset ds = load_csv(data_path);
      const CausalOrder o = order_from_json(read_json_file(order_path), ds.names);
      const Dag g = prune(o.topological(), ds, cfg.prune, warn);
      save_graph_json(dir.file("graph.json"), g);
      dir.finish("prune", cfg);
    } else if (ev->parsed()) {
      if (order_path.empty() == graph_path.empty()) throw ConfigError("eval needs exactly one of --order or --graph");
      if (!std::filesystem::exists(truth_path)) throw DataError("truth graph not found: " + truth_path);
      const Dag truth = load_graph_json(truth_path);
      MetricReport rep;
      if (!order_path.empty()) {
        rep = evaluate_order(order_from_json(read_json_file(order_path), truth.names()), truth);
      } else {
        if (!std::filesystem::exists(graph_path)) throw DataError("graph not found: " + graph_path);
        rep = evaluate_graph(align_graph(load_graph_json(graph_path), truth.names()), truth);
      }
      const nlohmann::json rj = rep;
      write_json_file(dir.file("report.json"), rj);
      out << rj.dump() << "\n";
      dir.finish("eval", cfg);
    } else if (en->parsed() || ct->parsed()) {
      const Dataset ds = load_csv(data_path);
      const TrainedScoreModel base = get_model(ds);
      const std::vector<TrainedScoreModel> heads = probe_ensemble(base, ds.values, cfg.control.members, cfg.ordering.probe);
      const std::vector<std::size_t> rows = evaluation_rows(ds.n(), cfg.ordering.eval_samples, cfg.seed);
      const bool full = ct->parsed();
      const EnsembleEvidence evid(heads, ds.values, rows, cfg.ordering.residue_sign, full);
      if (en->parsed()) {
        const EnsembleStats s = evid.stats({});
        std::ostringstream csv;
        csv << "member";
        for (std::size_t v : s.nodes) csv << "," << ds.names[v];
        csv << "\n" << std::setprecision(17);
        for (std::size_t m = 0; m < s.members(); ++m) {
          csv << m;
          for (std::size_t c = 0; c < s.size(); ++c) csv << "," << s.sigmas(m, c);
          csv << "\n";
        }
        dir.write_text("sigmas.csv", csv.str());
        const std::vector<double> e = evidence_from(s, cfg.control);
        nlohmann::json ej = nlohmann::json::object();
        for (std::size_t c = 0; c < s.size(); ++c) ej[ds.names[s.nodes[c]]] = e[c];
        write_json_file(dir.file("evidence.json"), ej);
        dir.finish("ensemble", cfg);
      } else {
        if (!variables_path.empty()) {
          const nlohmann::json vj = read_json_file(variables_path);
          if (vj.contains("variables") && vj.at("variables").get<std::vector<std::string>>() != ds.names)
            throw DataError("variables file does not match the dataset header");
          cfg.control.context = vj.value("context", std::vector<std::string>{});
        }
        std::unique_ptr<PriorProvider> provider = make_provider(cfg, table_path);
        const EvidenceSource source = [&](const std::vector<std::size_t>&, const std::vector<std::size_t>& removed) {
          return evidence_from(evid.stats(removed), cfg.control);
        };
        const ControlResult r = control_order(ds.names, *provider, source, cfg.control);
        for (const auto& w : r.warnings) warn(w);
        write_json_file(dir.file("order.json"), order_to_json(r.order, ds.names));
        std::ofstream pl(dir.file("posterior_log.csv"));
        write_posterior_log(pl, r.log, ds.names);
        if (auto* remote = dynamic_cast<RemotePrior*>(provider.get())) write_json_file(dir.file("prior_responses.json"), remote->responses());
        dir.finish("control", cfg, {{"degraded", r.degraded}, {"warnings", r.warnings}, {"prior", provider->kind()}});
      }
    }
    return 0;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace scino::cli
