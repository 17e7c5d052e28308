#include <cstdio>
#include <fstream>
#include <iostream>
#include <list>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "ame/checkpoint.hpp"
#include "ame/cli.hpp"
#include "ame/csv.hpp"
#include "ame/engine.hpp"
#include "ame/errors.hpp"
#include "ame/fedlab.hpp"
#include "ame/synthlab.hpp"
#include "config.hpp"
#include "verify.hpp"

namespace ame::cli {

namespace {

struct Common {
  std::string config;
  std::uint64_t seed = 0;
  std::string out;
  bool quiet = false;
  CLI::Option* config_opt = nullptr;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* out_opt = nullptr;

  std::optional<std::uint64_t> seed_flag() const {
    return seed_opt && seed_opt->count() ? std::optional(seed) : std::nullopt;
  }
  std::optional<fs::path> out_dir() const {
    return out_opt && out_opt->count() ? std::optional(fs::path(out)) : std::nullopt;
  }
  fs::path out_or_cwd() const { return out_dir().value_or(fs::path(".")); }
};

void add_common(CLI::App* sub, Common& c, bool with_config) {
  if (with_config) c.config_opt = sub->add_option("--config", c.config, "JSON config file");
  c.seed_opt = sub->add_option("--seed", c.seed, "Random seed (overrides the config)");
  c.out_opt = sub->add_option("--out", c.out, "Output directory");
  sub->add_flag("--quiet,-q", c.quiet, "Only print errors");
}

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

template <class F>
void write_file(const fs::path& path, F&& body) {
  ensure_parent(path);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  body(f);
  if (!f) throw IoError("write failed: " + path.string());
}

void save(const WeightMap& w, const fs::path& path) {
  ensure_parent(path);
  save_checkpoint(w, path);
}

std::string shape_string(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + "]";
}

// ---- soup ----------------------------------------------------------------

int cmd_soup(const std::vector<std::string>& inputs, const std::string& output, bool quiet,
             std::ostream& out) {
  std::vector<WeightMap> maps;
  maps.reserve(inputs.size());
  for (const auto& p : inputs) maps.push_back(load_checkpoint(p));
  WeightMap s = soup(maps);
  save(s, output);
  if (!quiet) {
    out << "soup of " << maps.size() << " checkpoint(s) -> " << output << "\n";
    for (const auto& t : s) {
      out << "  " << t.name << " " << shape_string(t.shape) << " " << t.size() << " values\n";
    }
  }
  return kOk;
}

// ---- merge / greedy ------------------------------------------------------

std::string quote_arg(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out += c;
    }
  }
  return out + "'";
}

Evaluator command_evaluator(const std::string& command, const fs::path& scratch) {
  return [command, scratch](const WeightMap& w) {
    save(w, scratch);
    std::string cmd = command + " " + quote_arg(scratch.string());
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) throw IoError("cannot run evaluator: " + command);
    std::string text;
    char buf[256];
    while (std::fgets(buf, sizeof buf, pipe)) text += buf;
    int status = pclose(pipe);
    if (status != 0) throw Error("evaluator exited with status " + std::to_string(status));
    std::size_t used = 0;
    double value = 0.0;
    try {
      value = std::stod(text, &used);
    } catch (const std::exception&) {
      throw Error("evaluator printed no number: \"" + text + "\"");
    }
    return value;
  };
}

EnsembleResult run_merge_job(const MergeJob& job, const fs::path& scratch_dir) {
  std::vector<Ingredient> ingredients;
  ingredients.reserve(job.ingredients.size());
  for (const auto& src : job.ingredients) {
    ingredients.push_back({src.id, load_checkpoint(src.path), src.metric});
  }
  if (job.metrics_csv) {
    std::map<std::string, double> metrics;
    for (auto& [id, m] : read_metrics_csv(*job.metrics_csv)) metrics[id] = m;
    for (auto& ing : ingredients) {
      if (auto it = metrics.find(ing.id); it != metrics.end()) ing.metric = it->second;
    }
    for (const auto& [id, m] : metrics) {
      bool known = false;
      for (const auto& ing : ingredients) known = known || ing.id == id;
      if (!known) throw ConfigError(job.metrics_csv->string() + ": unknown ingredient id \"" + id + "\"");
    }
  }

  EnsembleConfig cfg = job.ensemble;
  if (job.pivot_path) cfg.pivot_init = PivotInit::provided(load_checkpoint(*job.pivot_path));

  auto soup_of_ingredients = [&] {
    std::vector<WeightMap> ws;
    for (const auto& ing : ingredients) ws.push_back(ing.weights);
    return soup(ws);
  };
  if (job.projection) {
    Projection proj;
    proj.radius = job.projection->radius;
    switch (job.projection->center) {
      case CenterKind::Soup: proj.center = soup_of_ingredients(); break;
      case CenterKind::Path: proj.center = load_checkpoint(job.projection->center_path); break;
      case CenterKind::Pivot:
        if (cfg.pivot_init.kind == PivotInit::Kind::Provided) {
          proj.center = cfg.pivot_init.weights;
        } else if (cfg.pivot_init.kind == PivotInit::Kind::Soup) {
          proj.center = soup_of_ingredients();
        } else {
          for (const auto& ing : ingredients) {
            if (ing.id == cfg.pivot_init.ingredient_id) proj.center = ing.weights;
          }
        }
        break;
    }
    cfg.projection = std::move(proj);
  }

  const fs::path scratch =
      scratch_dir / (job.checkpoint_out.stem().string() + ".candidate.safetensors");
  switch (job.evaluator.kind) {
    case EvaluatorKind::None: break;
    case EvaluatorKind::NegDistance: {
      auto target = std::make_shared<WeightMap>(load_checkpoint(job.evaluator.target));
      cfg.greedy = [target](const WeightMap& w) { return -l2_distance(w, *target); };
      break;
    }
    case EvaluatorKind::Command:
      cfg.greedy = command_evaluator(job.evaluator.command, scratch);
      break;
  }
  struct RemoveScratch {
    fs::path path;
    ~RemoveScratch() {
      std::error_code ec;
      fs::remove(path, ec);
    }
  } cleanup{job.evaluator.kind == EvaluatorKind::Command ? scratch : fs::path()};

  try {
    auto result = run_ensemble(cfg, ingredients);
    save(result.weights, job.checkpoint_out);
    write_file(job.log_out, [&](std::ostream& f) { write_run_csv(result.record, f); });
    return result;
  } catch (const RunAborted& e) {
    write_file(job.log_out, [&](std::ostream& f) { write_run_csv(e.partial(), f); });
    throw;
  }
}

void print_violations(const ConfigError& e, std::ostream& err) {
  err << "error: invalid configuration\n";
  for (const auto& v : e.violations()) err << "  - " << v << "\n";
}

int cmd_merge(const Common& c, bool force_greedy, std::ostream& out, std::ostream& err) {
  if (c.config.empty()) throw ConfigError("--config is required");
  const fs::path config_path(c.config);
  json doc = read_json_file(config_path);
  const fs::path base_dir = config_path.has_parent_path() ? config_path.parent_path() : fs::path(".");

  auto check_greedy = [&](const MergeJob& job, Violations& v, const std::string& prefix) {
    if (force_greedy && job.evaluator.kind == EvaluatorKind::None) {
      v.add(prefix + "ensemble.greedy", "greedy runs need an evaluator");
    }
  };

  if (!doc.is_object() || !doc.contains("sweep")) {
    Violations v;
    MergeJob job = parse_merge(doc, base_dir, c.out_dir(), c.seed_flag(), v);
    check_greedy(job, v, "");
    v.raise_if_any();
    auto result = run_merge_job(job, job.checkpoint_out.parent_path());
    if (!c.quiet) {
      std::size_t accepted = 0;
      for (const auto& s : result.record.steps) accepted += s.accepted;
      out << "merged " << job.ingredients.size() << " ingredient(s) in " << result.record.steps.size()
          << " step(s)";
      if (job.evaluator.kind != EvaluatorKind::None) out << ", " << accepted << " accepted";
      out << " -> " << job.checkpoint_out.string() << "\n";
    }
    return kOk;
  }

  Violations v;
  auto cells = expand_sweep(doc["sweep"], v);
  json base = doc;
  base.erase("sweep");
  struct Cell {
    std::string hash;
    json params;
    MergeJob job;
    std::string status = "ok";
    std::string message;
  };
  std::vector<Cell> jobs;
  std::set<std::string> seen;
  for (const auto& params : cells) {
    json cfg = base;
    for (const auto& [key, value] : params.items()) set_dotted(cfg, key, value);
    Cell cell;
    cell.hash = cell_hash(params);
    if (!seen.insert(cell.hash).second) continue;
    cell.params = params;
    Violations cv;
    cell.job = parse_merge(cfg, base_dir, c.out_dir(), c.seed_flag(), cv);
    check_greedy(cell.job, cv, "");
    for (const auto& msg : cv.list()) v.add("cell " + cell.hash, msg);
    jobs.push_back(std::move(cell));
  }
  v.raise_if_any();

  const fs::path dir = c.out_dir().value_or(base_dir);
  fs::create_directories(dir);
  for (auto& cell : jobs) {
    cell.job.checkpoint_out = dir / (cell.hash + ".safetensors");
    cell.job.log_out = dir / (cell.hash + ".csv");
  }
  parallel_for(jobs.size(), [&](std::size_t i) {
    auto& cell = jobs[i];
    try {
      run_merge_job(cell.job, dir);
    } catch (const std::exception& e) {
      cell.status = "failed";
      cell.message = e.what();
    }
  });

  std::size_t failed = 0;
  write_file(dir / "sweep_index.csv", [&](std::ostream& f) {
    CsvWriter csv(f);
    csv.row({"cell", "hash", "status", "message", "params"});
    for (std::size_t i = 0; i < jobs.size(); ++i) {
      csv.row({std::to_string(i), jobs[i].hash, jobs[i].status, jobs[i].message, jobs[i].params.dump()});
    }
  });
  for (const auto& cell : jobs) {
    if (cell.status != "ok") {
      ++failed;
      err << "cell " << cell.hash << " failed: " << cell.message << "\n";
    }
  }
  if (!c.quiet) {
    out << "sweep: " << jobs.size() << " cell(s), " << jobs.size() - failed << " ok, " << failed
        << " failed -> " << (dir / "sweep_index.csv").string() << "\n";
  }
  return failed ? kRuntimeError : kOk;
}

// ---- fed -----------------------------------------------------------------

int cmd_fed(const Common& c, std::ostream& out) {
  if (c.config.empty()) throw ConfigError("--config is required");
  const fs::path config_path(c.config);
  json doc = read_json_file(config_path);
  const fs::path base_dir = config_path.has_parent_path() ? config_path.parent_path() : fs::path(".");
  Violations v;
  FedJob job = parse_fed(doc, base_dir, c.out_dir(), c.seed_flag(), v);
  v.raise_if_any();
  FedResult result = simulate(job.config);
  save(result.model, job.checkpoint_out);
  write_file(job.log_out, [&](std::ostream& f) { write_rounds_csv(result, f); });
  if (!c.quiet) {
    out << (job.config.algorithm == FedAlgorithm::FedOpt ? "fedopt" : "fedsoup") << ": "
        << result.rounds.size() << " round(s), distance to centre mean "
        << format_double(result.rounds.back().distance_to_center_mean) << " -> "
        << job.checkpoint_out.string() << "\n";
  }
  return kOk;
}

// ---- synth ---------------------------------------------------------------

struct SynthFlags {
  std::string dist = "gaussian";
  std::optional<double> lr, beta1, beta2, eps;
  std::size_t trials = 300, population = 60000, subsample = 300;
  std::uint64_t batch = 20, epochs = 200;
  std::vector<double> init = {10.0, 10.0};
  unsigned threads = 0;

  double k = 1.0, omega = 1.0;
  std::uint64_t cycles = 1;

  double alpha = -1.5, c = 1.0;
  std::uint64_t steps = 100000;
  std::string optimizer = "gd";
  bool control = false;

  std::vector<std::size_t> sizes = {10, 100, 1000, 10000};
  std::size_t wlln_trials = 200;
  double wlln_eps = 0.1;
};

DistKind parse_dist(const std::string& s) {
  if (s == "cauchy") return DistKind::Cauchy;
  if (s == "gaussian") return DistKind::Gaussian;
  throw ConfigError("--dist must be cauchy or gaussian");
}

std::uint64_t require_seed(const Common& c) {
  if (!c.seed_flag()) throw ConfigError("--seed is required");
  return c.seed;
}

int synth_estimators(const Common& c, const SynthFlags& f, std::ostream& out) {
  const auto kind = parse_dist(f.dist);
  TrialConfig cfg = TrialConfig::defaults_for(kind);
  cfg.seed = require_seed(c);
  auto& adam = std::get<AdamParams>(cfg.optimizer.method);
  if (f.lr) cfg.optimizer.lr = Schedule::constant(*f.lr);
  if (f.beta1) adam.beta1 = *f.beta1;
  if (f.beta2) adam.beta2 = *f.beta2;
  if (f.eps) adam.eps = *f.eps;
  cfg.trials = f.trials;
  cfg.population_size = f.population;
  cfg.subsample_size = f.subsample;
  cfg.batch_size = f.batch;
  cfg.epochs = f.epochs;
  cfg.init_point = f.init;
  cfg.dist.dimension = f.init.size();
  cfg.threads = f.threads;
  auto report = run_estimator_trials(cfg);
  const fs::path path = c.out_or_cwd() / ("estimators_" + f.dist + ".csv");
  write_file(path, [&](std::ostream& o) { write_trials_csv(report, o); });
  if (!c.quiet) {
    out << f.dist << " estimators, " << report.rows.size() << " trials\n"
        << "  median distance to reference: soup " << format_double(median_dist_soup(report))
        << ", ame " << format_double(median_dist_ame(report)) << "\n"
        << "  -> " << path.string() << "\n";
  }
  return kOk;
}

int synth_cycle(const Common& c, const SynthFlags& f, std::ostream& out) {
  auto points = cycle_counterexample(f.k, f.omega, f.cycles);
  const fs::path path = c.out_or_cwd() / "cycle.csv";
  write_file(path, [&](std::ostream& o) { write_cycle_csv(points, o); });
  if (!c.quiet) {
    const auto& last = points.back();
    out << "cycle: " << points.size() << " steps, return error "
        << format_double(std::hypot(last[0] - f.omega, last[1])) << " -> " << path.string() << "\n";
  }
  return kOk;
}

int synth_convergence(const Common& c, const SynthFlags& f, std::ostream& out) {
  ConvergenceConfig cfg;
  cfg.k = f.k;
  cfg.omega = f.omega;
  cfg.alpha = f.alpha;
  cfg.c = f.c;
  cfg.steps = f.steps;
  cfg.constant_control = f.control;
  if (f.optimizer == "gd") {
    cfg.optimizer = OptimizerSpec::gd(Schedule::constant(1.0));
  } else if (f.optimizer == "adagrad") {
    cfg.optimizer = OptimizerSpec::adagrad(Schedule::constant(1.0), f.eps.value_or(1e-10));
  } else if (f.optimizer == "adam") {
    cfg.optimizer = OptimizerSpec::adam(Schedule::constant(1.0), f.beta1.value_or(0.9),
                                        f.beta2.value_or(0.999), f.eps.value_or(1e-8));
  } else {
    throw ConfigError("--optimizer must be gd, adagrad or adam");
  }
  auto report = convergence_check(cfg);
  const fs::path path = c.out_or_cwd() / "convergence.csv";
  write_file(path, [&](std::ostream& o) { write_cycle_csv(report.trajectory, o); });
  if (!c.quiet) {
    out << "convergence: radius " << format_double(report.radius) << ", cap "
        << format_double(report.cap) << "\n"
        << "  max displacement after step " << report.tail_start << ": "
        << format_double(report.max_tail_displacement) << "\n"
        << "  tail bound: " << format_double(report.tail_bound) << " ("
        << (report.within_bound ? "within" : "exceeded") << ")\n"
        << "  -> " << path.string() << "\n";
  }
  return kOk;
}

int synth_wlln(const Common& c, const SynthFlags& f, std::ostream& out) {
  DistributionSpec spec;
  spec.kind = parse_dist(f.dist);
  auto rows = soup_wlln(spec, f.sizes, f.wlln_trials, f.wlln_eps, require_seed(c));
  const fs::path path = c.out_or_cwd() / "wlln.csv";
  write_file(path, [&](std::ostream& o) { write_wlln_csv(rows, o); });
  if (!c.quiet) {
    for (const auto& r : rows) out << "  n=" << r.n << " coverage " << format_double(r.fraction) << "\n";
    out << "  -> " << path.string() << "\n";
  }
  return kOk;
}

// Turns `synth <sub> --config file.json ...` into flags. Keys are long flag
// names; explicit flags given on the command line win.
std::vector<std::string> expand_synth_config(std::vector<std::string> args) {
  if (args.size() < 2 || args[0] != "synth") return args;
  for (std::size_t i = 2; i < args.size(); ++i) {
    std::string path;
    std::size_t used = 0;
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[i + 1];
      used = 2;
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
      used = 1;
    } else {
      continue;
    }
    json doc = read_json_file(path);
    if (!doc.is_object()) throw ConfigError(path + ": expected a JSON object");
    Violations v;
    if (!doc.contains("version") || doc["version"] != kConfigVersion) {
      v.add("version", "required and must be " + std::to_string(kConfigVersion));
    }
    std::vector<std::string> flags;
    for (const auto& [key, value] : doc.items()) {
      if (key == "version") continue;
      if (value.is_boolean()) {
        if (value.get<bool>()) flags.push_back("--" + key);
      } else if (value.is_array()) {
        std::string joined;
        for (const auto& x : value) joined += (joined.empty() ? "" : ",") + (x.is_string() ? x.get<std::string>() : x.dump());
        flags.insert(flags.end(), {"--" + key, joined});
      } else if (value.is_string()) {
        flags.insert(flags.end(), {"--" + key, value.get<std::string>()});
      } else if (value.is_number()) {
        flags.insert(flags.end(), {"--" + key, value.dump()});
      } else {
        v.add(key, "expected a number, string, boolean or array");
      }
    }
    v.raise_if_any();
    args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i + used));
    args.insert(args.begin() + 2, flags.begin(), flags.end());
    break;
  }
  return args;
}

int report_error(const std::exception& e, std::ostream& err) {
  if (const auto* ce = dynamic_cast<const ConfigError*>(&e)) {
    print_violations(*ce, err);
    return kValidationError;
  }
  err << "error: " << e.what() << "\n";
  return kRuntimeError;
}

}  // namespace

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Amortized model ensembling: data-free merging of model checkpoints", "ame"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);

  std::function<int()> action;
  std::list<Common> commons;
  auto common_for = [&](CLI::App* sub, bool with_config) -> Common& {
    auto& c = commons.emplace_back();
    add_common(sub, c, with_config);
    return c;
  };
  bool quiet = false;

  std::vector<std::string> soup_inputs;
  std::string soup_output;
  auto* soup_cmd = app.add_subcommand("soup", "Average compatible checkpoints");
  soup_cmd->add_option("inputs", soup_inputs, "Input checkpoints")->required()->check(CLI::ExistingFile);
  soup_cmd->add_option("-o,--output", soup_output, "Output checkpoint")->required();
  soup_cmd->add_flag("--quiet,-q", quiet, "Only print errors");
  soup_cmd->callback([&] { action = [&] { return cmd_soup(soup_inputs, soup_output, quiet, out); }; });

  auto* merge_cmd = app.add_subcommand("merge", "Run an ensembling config (or a sweep of them)");
  auto& merge_cmd_c = common_for(merge_cmd, true);
  merge_cmd->callback([&] { action = [&] { return cmd_merge(merge_cmd_c, false, out, err); }; });

  auto* greedy_cmd = app.add_subcommand("greedy", "Like merge, but every step must improve the evaluator");
  auto& greedy_cmd_c = common_for(greedy_cmd, true);
  greedy_cmd->callback([&] { action = [&] { return cmd_merge(greedy_cmd_c, true, out, err); }; });

  auto* fed_cmd = app.add_subcommand("fed", "Simulate FedOPT or FedSoup over quadratic clients");
  auto& fed_cmd_c = common_for(fed_cmd, true);
  fed_cmd->callback([&] { action = [&] { return cmd_fed(fed_cmd_c, out); }; });

  SynthFlags sf;
  auto* synth = app.add_subcommand("synth", "Synthetic experiments");
  synth->require_subcommand(1);

  auto* est = synth->add_subcommand("estimators", "Soup vs AME as location estimators");
  auto& est_c = common_for(est, false);
  est->add_option("--dist", sf.dist, "cauchy or gaussian")->check(CLI::IsMember({"cauchy", "gaussian"}));
  est->add_option("--lr", sf.lr, "Adam learning rate (0.1 cauchy, 0.01 gaussian)");
  est->add_option("--beta1", sf.beta1, "Adam beta1 (0.2)");
  est->add_option("--beta2", sf.beta2, "Adam beta2 (0.2)");
  est->add_option("--eps", sf.eps, "Adam eps (1e-8)");
  est->add_option("--trials", sf.trials, "Number of trials")->capture_default_str();
  est->add_option("--population", sf.population, "Population size")->capture_default_str();
  est->add_option("--subsample", sf.subsample, "Points per trial")->capture_default_str();
  est->add_option("--batch", sf.batch, "Batch size")->capture_default_str();
  est->add_option("--epochs", sf.epochs, "Ensemble epochs")->capture_default_str();
  est->add_option("--init", sf.init, "Initial point")->delimiter(',')->capture_default_str();
  est->add_option("--threads", sf.threads, "Worker threads (0 = all cores)");
  est->callback([&] { action = [&] { return synth_estimators(est_c, sf, out); }; });

  auto* cyc = synth->add_subcommand("cycle", "Constant-lr cyclic counterexample");
  auto& cyc_c = common_for(cyc, false);
  cyc->add_option("--k", sf.k, "Geometry parameter k > 0")->capture_default_str();
  cyc->add_option("--omega", sf.omega, "Orbit radius omega > 0")->capture_default_str();
  cyc->add_option("--cycles", sf.cycles, "Number of 4-step cycles")->capture_default_str();
  cyc->callback([&] { action = [&] { return synth_cycle(cyc_c, sf, out); }; });

  auto* conv = synth->add_subcommand("convergence", "Decaying-schedule convergence check");
  auto& conv_c = common_for(conv, false);
  conv->add_option("--k", sf.k, "Geometry parameter k > 0")->capture_default_str();
  conv->add_option("--omega", sf.omega, "Orbit radius omega > 0")->capture_default_str();
  conv->add_option("--alpha", sf.alpha, "Schedule exponent, < -1")->capture_default_str();
  conv->add_option("--c", sf.c, "Schedule scale")->capture_default_str();
  conv->add_option("--steps", sf.steps, "Steps (multiple of 4)")->capture_default_str();
  conv->add_option("--optimizer", sf.optimizer, "gd, adagrad or adam")->capture_default_str();
  conv->add_option("--beta1", sf.beta1, "Adam beta1");
  conv->add_option("--beta2", sf.beta2, "Adam beta2");
  conv->add_option("--eps", sf.eps, "Adagrad/Adam eps");
  conv->add_flag("--control", sf.control, "Use the constant counterexample lr instead");
  conv->callback([&] { action = [&] { return synth_convergence(conv_c, sf, out); }; });

  auto* wl = synth->add_subcommand("wlln", "Soup coverage of the mean as n grows");
  auto& wl_c = common_for(wl, false);
  wl->add_option("--dist", sf.dist, "gaussian (cauchy has no mean)")->check(CLI::IsMember({"cauchy", "gaussian"}));
  wl->add_option("--sizes", sf.sizes, "Soup sizes")->delimiter(',')->capture_default_str();
  wl->add_option("--trials", sf.wlln_trials, "Trials per size")->capture_default_str();
  wl->add_option("--eps", sf.wlln_eps, "Coverage radius")->capture_default_str();
  wl->callback([&] { action = [&] { return synth_wlln(wl_c, sf, out); }; });

  std::string suite;
  auto* ver = app.add_subcommand("verify", "Run a property suite and print a pass/fail table");
  ver->add_option("suite", suite, "soup-eq, cycle, convergence, adagrad-gd, fed-reduction or all")
      ->required()
      ->check(CLI::IsMember(verify_suites()));
  ver->add_flag("--quiet,-q", quiet, "Only print failures");
  ver->callback([&] { action = [&] { return run_verify(suite, quiet, out) ? kOk : kRuntimeError; }; });

  try {
    auto args = expand_synth_config(raw_args);
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kValidationError;
  } catch (const std::exception& e) {
    return report_error(e, err);
  }

  try {
    return action ? action() : kValidationError;
  } catch (const std::exception& e) {
    return report_error(e, err);
  }
}

}  // namespace ame::cli
