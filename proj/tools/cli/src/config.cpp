#include "config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "ame/errors.hpp"
#include "ame/synthlab.hpp"

namespace ame::cli {

void Violations::raise_if_any() const {
  if (!list_.empty()) throw ConfigError(list_);
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": invalid JSON: " + e.what());
  }
}

void set_dotted(json& doc, const std::string& dotted, const json& value) {
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    auto dot = dotted.find('.', start);
    std::string key = dotted.substr(start, dot - start);
    if (!node->is_object()) *node = json::object();
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

namespace {

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

bool expect_object(const json& j, const std::string& path, Violations& v) {
  if (j.is_object()) return true;
  v.add(path, "expected an object");
  return false;
}

void check_keys(const json& j, const std::string& path, const std::set<std::string>& allowed,
                Violations& v) {
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) v.add(join(path, key), "unknown key");
  }
}

const json* field(const json& j, const std::string& key) {
  auto it = j.find(key);
  return it == j.end() ? nullptr : &*it;
}

std::optional<double> get_number(const json& j, const std::string& key, const std::string& path,
                                 Violations& v) {
  const json* f = field(j, key);
  if (!f) return std::nullopt;
  if (!f->is_number()) {
    v.add(join(path, key), "expected a number");
    return std::nullopt;
  }
  return f->get<double>();
}

std::optional<std::uint64_t> get_uint(const json& j, const std::string& key,
                                      const std::string& path, Violations& v) {
  const json* f = field(j, key);
  if (!f) return std::nullopt;
  if (f->is_number_unsigned()) return f->get<std::uint64_t>();
  if (f->is_number_float()) {
    double d = f->get<double>();
    if (d >= 0 && d == std::floor(d) && d < 1.8e19) return static_cast<std::uint64_t>(d);
  }
  v.add(join(path, key), "expected a non-negative integer");
  return std::nullopt;
}

std::optional<bool> get_bool(const json& j, const std::string& key, const std::string& path,
                             Violations& v) {
  const json* f = field(j, key);
  if (!f) return std::nullopt;
  if (!f->is_boolean()) {
    v.add(join(path, key), "expected true or false");
    return std::nullopt;
  }
  return f->get<bool>();
}

std::optional<std::string> get_string(const json& j, const std::string& key,
                                      const std::string& path, Violations& v) {
  const json* f = field(j, key);
  if (!f) return std::nullopt;
  if (!f->is_string()) {
    v.add(join(path, key), "expected a string");
    return std::nullopt;
  }
  return f->get<std::string>();
}

template <class F>
void guarded(const std::string& path, Violations& v, F&& f) {
  try {
    f();
  } catch (const ConfigError& e) {
    for (const auto& s : e.violations()) v.add(path, s);
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

std::optional<Point> get_point(const json& j, const std::string& key, const std::string& path,
                               Violations& v) {
  const json* f = field(j, key);
  if (!f) return std::nullopt;
  if (!f->is_array() || f->empty()) {
    v.add(join(path, key), "expected a non-empty array of numbers");
    return std::nullopt;
  }
  Point p;
  for (const auto& x : *f) {
    if (!x.is_number()) {
      v.add(join(path, key), "expected a non-empty array of numbers");
      return std::nullopt;
    }
    p.push_back(x.get<double>());
  }
  return p;
}

void check_version(const json& doc, Violations& v) {
  const json* f = field(doc, "version");
  if (!f) {
    v.add("version", "required");
  } else if (!f->is_number_integer() || f->get<int>() != kConfigVersion) {
    v.add("version", "unsupported version (expected " + std::to_string(kConfigVersion) + ")");
  }
}

// Parses the ensemble section. Options that need files are only accepted
// when `job` is given.
EnsembleConfig parse_ensemble(const json& j, const std::string& path, Violations& v,
                              const fs::path& base_dir, MergeJob* job) {
  EnsembleConfig cfg;
  if (!expect_object(j, path, v)) return cfg;
  check_keys(j, path,
             {"pivot_policy", "pivot_init", "optimizer", "zeta", "n_divisor", "epochs",
              "batch_size", "shuffle", "ordering", "epoch_lr_reset", "projection", "greedy"},
             v);

  if (const json* f = field(j, "pivot_policy")) {
    const auto p = join(path, "pivot_policy");
    if (f->is_string() && *f == "adaptive") {
      cfg.pivot_policy = PivotPolicy::adaptive();
    } else if (f->is_string() && *f == "fixed") {
      cfg.pivot_policy = PivotPolicy::fixed();
    } else if (f->is_object()) {
      check_keys(*f, p, {"ema"}, v);
      if (auto d = get_number(*f, "ema", p, v)) {
        guarded(p, v, [&] { cfg.pivot_policy = PivotPolicy::ema(*d); });
      } else if (!field(*f, "ema")) {
        v.add(p, "expected \"adaptive\", \"fixed\" or {\"ema\": decay}");
      }
    } else {
      v.add(p, "expected \"adaptive\", \"fixed\" or {\"ema\": decay}");
    }
  }

  if (const json* f = field(j, "pivot_init")) {
    const auto p = join(path, "pivot_init");
    if (f->is_string() && *f == "soup") {
      cfg.pivot_init = PivotInit::soup();
    } else if (f->is_object() && f->size() == 1 && field(*f, "ingredient")) {
      if (auto id = get_string(*f, "ingredient", p, v)) cfg.pivot_init = PivotInit::ingredient(*id);
    } else if (f->is_object() && f->size() == 1 && field(*f, "path")) {
      if (!job) {
        v.add(p, "checkpoint pivots are not supported here");
      } else if (auto s = get_string(*f, "path", p, v)) {
        job->pivot_path = resolve(base_dir, *s);
        cfg.pivot_init.kind = PivotInit::Kind::Provided;
      }
    } else {
      v.add(p, "expected \"soup\", {\"ingredient\": id} or {\"path\": checkpoint}");
    }
  }

  if (const json* f = field(j, "optimizer")) {
    if (auto o = parse_optimizer(*f, join(path, "optimizer"), v)) cfg.optimizer = *o;
  }
  if (const json* f = field(j, "zeta")) {
    if (auto s = parse_schedule(*f, join(path, "zeta"), v)) cfg.zeta = *s;
  }
  if (const json* f = field(j, "n_divisor")) {
    if (f->is_string() && *f == "auto") {
      cfg.n_divisor.reset();
    } else if (auto n = get_uint(j, "n_divisor", path, v)) {
      if (*n == 0) v.add(join(path, "n_divisor"), "must be >= 1");
      cfg.n_divisor = *n;
    }
  }
  if (auto n = get_uint(j, "epochs", path, v)) {
    if (*n == 0) v.add(join(path, "epochs"), "must be >= 1");
    cfg.epochs = *n;
  }
  if (auto n = get_uint(j, "batch_size", path, v)) {
    if (*n == 0) v.add(join(path, "batch_size"), "must be >= 1");
    cfg.batch_size = *n;
  }
  if (auto b = get_bool(j, "shuffle", path, v)) cfg.shuffle = *b;
  if (auto b = get_bool(j, "epoch_lr_reset", path, v)) cfg.epoch_lr_reset = *b;
  if (auto s = get_string(j, "ordering", path, v)) {
    if (*s == "desc") {
      cfg.ordering = Ordering::ByMetricDesc;
    } else if (*s == "asc") {
      cfg.ordering = Ordering::ByMetricAsc;
    } else if (*s == "given") {
      cfg.ordering = Ordering::GivenOrder;
    } else {
      v.add(join(path, "ordering"), "expected \"desc\", \"asc\" or \"given\"");
    }
  }

  if (const json* f = field(j, "projection")) {
    const auto p = join(path, "projection");
    if (!job) {
      v.add(p, "projection is not supported here");
    } else if (expect_object(*f, p, v)) {
      check_keys(*f, p, {"center", "radius"}, v);
      ProjectionSpec spec;
      if (auto r = get_number(*f, "radius", p, v)) {
        if (!(*r > 0.0)) v.add(join(p, "radius"), "must be > 0");
        spec.radius = *r;
      } else if (!field(*f, "radius")) {
        v.add(join(p, "radius"), "required");
      }
      if (auto c = get_string(*f, "center", p, v)) {
        if (*c == "soup") {
          spec.center = CenterKind::Soup;
        } else if (*c == "pivot") {
          spec.center = CenterKind::Pivot;
        } else {
          spec.center = CenterKind::Path;
          spec.center_path = resolve(base_dir, *c);
        }
      }
      job->projection = spec;
    }
  }

  if (const json* f = field(j, "greedy")) {
    const auto p = join(path, "greedy");
    if (!job) {
      v.add(p, "greedy ensembling is not supported here");
    } else if (f->is_boolean() && !f->get<bool>()) {
      job->evaluator = {};
    } else if (expect_object(*f, p, v)) {
      check_keys(*f, p, {"evaluator", "target", "command"}, v);
      auto kind = get_string(*f, "evaluator", p, v);
      if (!kind) {
        if (!field(*f, "evaluator")) v.add(join(p, "evaluator"), "required");
      } else if (*kind == "neg_distance") {
        job->evaluator.kind = EvaluatorKind::NegDistance;
        if (auto t = get_string(*f, "target", p, v)) {
          job->evaluator.target = resolve(base_dir, *t);
        } else if (!field(*f, "target")) {
          v.add(join(p, "target"), "required for neg_distance");
        }
      } else if (*kind == "command") {
        job->evaluator.kind = EvaluatorKind::Command;
        if (auto c = get_string(*f, "command", p, v)) {
          job->evaluator.command = *c;
        } else if (!field(*f, "command")) {
          v.add(join(p, "command"), "required for the command evaluator");
        }
      } else {
        v.add(join(p, "evaluator"), "expected \"neg_distance\" or \"command\"");
      }
    }
  }
  return cfg;
}

void check_output(const json& doc, Violations& v) {
  if (const json* f = field(doc, "output")) {
    if (expect_object(*f, "output", v)) {
      check_keys(*f, "output", {"checkpoint", "log"}, v);
      get_string(*f, "checkpoint", "output", v);
      get_string(*f, "log", "output", v);
    }
  }
}

fs::path output_path(const json& doc, const std::string& key, const std::string& fallback,
                     const fs::path& base_dir, const std::optional<fs::path>& out_dir) {
  std::string name = fallback;
  if (const json* o = field(doc, "output"); o && o->is_object()) {
    if (const json* f = field(*o, key); f && f->is_string()) name = f->get<std::string>();
  }
  fs::path p(name);
  if (p.is_absolute()) return p;
  return (out_dir ? *out_dir : base_dir) / p;
}

std::optional<std::uint64_t> resolve_seed(const json& doc, std::optional<std::uint64_t> flag,
                                          Violations& v) {
  auto from_doc = get_uint(doc, "seed", "", v);
  return flag ? flag : from_doc;
}

}  // namespace

std::optional<Schedule> parse_schedule(const json& j, const std::string& path, Violations& v) {
  std::optional<Schedule> out;
  if (j.is_number()) {
    guarded(path, v, [&] { out = Schedule::constant(j.get<double>()); });
    return out;
  }
  if (!j.is_object() || j.size() != 1) {
    v.add(path, "expected a number or one of {constant, harmonic, power, capped_power, explicit}");
    return out;
  }
  const auto& [kind, arg] = *j.items().begin();
  const auto p = join(path, kind);
  if (kind == "constant") {
    if (!arg.is_number()) return v.add(p, "expected a number"), out;
    guarded(p, v, [&] { out = Schedule::constant(arg.get<double>()); });
  } else if (kind == "harmonic") {
    if (!arg.is_number_integer()) return v.add(p, "expected 0 or 1"), out;
    guarded(p, v, [&] { out = Schedule::harmonic(arg.get<int>()); });
  } else if (kind == "power" || kind == "capped_power") {
    if (!expect_object(arg, p, v)) return out;
    const bool capped = kind == "capped_power";
    check_keys(arg, p, capped ? std::set<std::string>{"c", "alpha", "cap"} : std::set<std::string>{"c", "alpha"}, v);
    auto c = get_number(arg, "c", p, v);
    auto a = get_number(arg, "alpha", p, v);
    auto cap = capped ? get_number(arg, "cap", p, v) : std::optional<double>(0.0);
    if (!field(arg, "c")) v.add(join(p, "c"), "required");
    if (!field(arg, "alpha")) v.add(join(p, "alpha"), "required");
    if (capped && !field(arg, "cap")) v.add(join(p, "cap"), "required");
    if (c && a && cap) {
      guarded(p, v, [&] {
        out = capped ? Schedule::capped_power(*c, *a, *cap) : Schedule::power(*c, *a);
      });
    }
  } else if (kind == "explicit") {
    if (!arg.is_array()) return v.add(p, "expected an array of numbers"), out;
    std::vector<double> values;
    for (const auto& x : arg) {
      if (!x.is_number()) return v.add(p, "expected an array of numbers"), out;
      values.push_back(x.get<double>());
    }
    guarded(p, v, [&] { out = Schedule::explicit_values(std::move(values)); });
  } else {
    v.add(path, "unknown schedule \"" + kind + "\"");
  }
  return out;
}

std::optional<OptimizerSpec> parse_optimizer(const json& j, const std::string& path,
                                             Violations& v) {
  if (!expect_object(j, path, v)) return std::nullopt;
  const std::string method = get_string(j, "method", path, v).value_or("gd");
  std::set<std::string> keys = {"method", "lr", "weight_decay"};
  OptimizerSpec spec;
  if (method == "gd") {
    spec = OptimizerSpec::gd(Schedule::harmonic(0));
  } else if (method == "adagrad") {
    spec = OptimizerSpec::adagrad(Schedule::constant(0.01), AdagradParams{}.eps);
    keys.insert("eps");
  } else if (method == "adam") {
    spec = OptimizerSpec::adam(Schedule::constant(0.001), 0.9, 0.999, 1e-8);
    keys.insert({"beta1", "beta2", "eps", "standard_form", "initial_m", "initial_v"});
  } else if (method == "adadelta") {
    spec = OptimizerSpec::adadelta(Schedule::constant(1.0), 0.9, 1e-6);
    keys.insert({"rho", "eps"});
  } else {
    v.add(join(path, "method"), "expected gd, adagrad, adam or adadelta");
    return std::nullopt;
  }
  check_keys(j, path, keys, v);

  if (const json* f = field(j, "lr")) {
    if (auto s = parse_schedule(*f, join(path, "lr"), v)) spec.lr = *s;
  }
  if (auto wd = get_number(j, "weight_decay", path, v)) spec.weight_decay = *wd;
  if (auto* p = std::get_if<AdagradParams>(&spec.method)) {
    if (auto e = get_number(j, "eps", path, v)) p->eps = *e;
  } else if (auto* p = std::get_if<AdamParams>(&spec.method)) {
    if (auto x = get_number(j, "beta1", path, v)) p->beta1 = *x;
    if (auto x = get_number(j, "beta2", path, v)) p->beta2 = *x;
    if (auto x = get_number(j, "eps", path, v)) p->eps = *x;
    if (auto x = get_bool(j, "standard_form", path, v)) p->standard_form = *x;
    if (auto x = get_number(j, "initial_m", path, v)) p->initial_m = *x;
    if (auto x = get_number(j, "initial_v", path, v)) p->initial_v = *x;
  } else if (auto* p = std::get_if<AdadeltaParams>(&spec.method)) {
    if (auto x = get_number(j, "rho", path, v)) p->rho = *x;
    if (auto x = get_number(j, "eps", path, v)) p->eps = *x;
  }
  guarded(path, v, [&] { validate(spec); });
  return spec;
}

MergeJob parse_merge(const json& doc, const fs::path& base_dir,
                     const std::optional<fs::path>& out_dir, std::optional<std::uint64_t> seed,
                     Violations& v) {
  MergeJob job;
  if (!expect_object(doc, "", v)) return job;
  check_keys(doc, "", {"version", "seed", "ingredients", "metrics_csv", "ensemble", "output", "sweep"},
             v);
  check_version(doc, v);
  auto resolved_seed = resolve_seed(doc, seed, v);

  const json* ings = field(doc, "ingredients");
  if (!ings) {
    v.add("ingredients", "required");
  } else if (!ings->is_array() || ings->empty()) {
    v.add("ingredients", "expected a non-empty array");
  } else {
    std::set<std::string> ids;
    for (std::size_t i = 0; i < ings->size(); ++i) {
      const auto& e = (*ings)[i];
      const auto p = "ingredients[" + std::to_string(i) + "]";
      IngredientSource src;
      if (e.is_string()) {
        src.path = resolve(base_dir, e.get<std::string>());
      } else if (e.is_object()) {
        check_keys(e, p, {"path", "id", "metric"}, v);
        if (auto s = get_string(e, "path", p, v)) {
          src.path = resolve(base_dir, *s);
        } else if (!field(e, "path")) {
          v.add(join(p, "path"), "required");
        }
        if (auto s = get_string(e, "id", p, v)) src.id = *s;
        src.metric = get_number(e, "metric", p, v);
      } else {
        v.add(p, "expected a path or an object");
        continue;
      }
      if (src.id.empty()) src.id = src.path.stem().string();
      if (!ids.insert(src.id).second) v.add(p, "duplicate ingredient id \"" + src.id + "\"");
      job.ingredients.push_back(std::move(src));
    }
  }
  if (auto s = get_string(doc, "metrics_csv", "", v)) job.metrics_csv = resolve(base_dir, *s);

  if (const json* e = field(doc, "ensemble")) {
    job.ensemble = parse_ensemble(*e, "ensemble", v, base_dir, &job);
  }
  if (job.ensemble.shuffle) {
    if (!resolved_seed) {
      v.add("seed", "required when shuffle is on");
    } else {
      job.ensemble.seed = *resolved_seed;
    }
  }
  check_output(doc, v);
  job.checkpoint_out = output_path(doc, "checkpoint", "merged.safetensors", base_dir, out_dir);
  job.log_out = output_path(doc, "log", "run.csv", base_dir, out_dir);
  return job;
}

namespace {

std::vector<double> linspace(double start, double stop, int num) {
  std::vector<double> out(num);
  const double step = (stop - start) / (num - 1);
  for (int i = 0; i < num; ++i) out[i] = i * step + start;
  out.back() = stop;
  return out;
}

json numbers(std::initializer_list<double> xs) {
  json a = json::array();
  for (double x : xs) a.push_back(x);
  return a;
}

json preset_grid(const std::string& name) {
  json g = json::object();
  const std::string opt = "ensemble.optimizer.";
  if (name == "gd") {
    g[opt + "method"] = json::array({"gd"});
    g[opt + "weight_decay"] = numbers({0.0, 0.1});
    json lrs = json::array();
    for (double eta : linspace(1e-7, 2.0, 30)) lrs.push_back({{"power", {{"c", eta}, {"alpha", -1.0}}}});
    g[opt + "lr"] = lrs;
  } else if (name == "adagrad") {
    g[opt + "method"] = json::array({"adagrad"});
    g[opt + "weight_decay"] = numbers({0.0, 0.1});
    g[opt + "lr"] = numbers({1e-4, 1e-3, 1e-2, 0.1});
    g[opt + "eps"] = numbers({1e-9, 1e-7, 1e-5, 1e-3});
  } else if (name == "adam") {
    g[opt + "method"] = json::array({"adam"});
    g[opt + "weight_decay"] = numbers({0.0, 0.01, 0.1});
    g[opt + "lr"] = numbers({1e-4, 1e-3, 1e-2, 0.1});
    g[opt + "eps"] = numbers({1e-9, 1e-7, 1e-5});
    g[opt + "beta1"] = numbers({0.8, 0.9});
    g[opt + "beta2"] = numbers({0.9, 0.999});
  } else if (name == "adadelta") {
    g[opt + "method"] = json::array({"adadelta"});
    g[opt + "weight_decay"] = numbers({0.0, 0.1});
    g[opt + "lr"] = numbers({0.01, 0.1, 1.0, 2.0});
    g[opt + "eps"] = numbers({1e-8, 1e-6, 1e-4});
    g[opt + "rho"] = numbers({0.8, 0.9, 0.999});
  }
  return g;
}

}  // namespace

std::vector<json> expand_sweep(const json& sweep, Violations& v) {
  if (!expect_object(sweep, "sweep", v)) return {};
  check_keys(sweep, "sweep", {"preset", "grid"}, v);
  json grid = json::object();
  if (auto preset = get_string(sweep, "preset", "sweep", v)) {
    grid = preset_grid(*preset);
    if (grid.empty()) v.add("sweep.preset", "expected gd, adagrad, adam or adadelta");
  }
  if (const json* g = field(sweep, "grid")) {
    if (expect_object(*g, "sweep.grid", v)) {
      for (const auto& [key, values] : g->items()) {
        if (!values.is_array() || values.empty()) {
          v.add("sweep.grid." + key, "expected a non-empty array of values");
        } else {
          grid[key] = values;
        }
      }
    }
  }
  if (grid.empty()) {
    v.add("sweep", "needs a preset or a non-empty grid");
    return {};
  }
  // Cartesian product; the last key varies fastest.
  std::vector<json> cells = {json::object()};
  for (const auto& [key, values] : grid.items()) {
    std::vector<json> next;
    for (const auto& cell : cells) {
      for (const auto& value : values) {
        json c = cell;
        c[key] = value;
        next.push_back(std::move(c));
      }
    }
    cells = std::move(next);
  }
  return cells;
}

std::string cell_hash(const json& cell) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : cell.dump()) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

FedJob parse_fed(const json& doc, const fs::path& base_dir, const std::optional<fs::path>& out_dir,
                 std::optional<std::uint64_t> seed, Violations& v) {
  FedJob job;
  auto& cfg = job.config;
  if (!expect_object(doc, "", v)) return job;
  check_keys(doc, "",
             {"version", "algorithm", "seed", "rounds", "participants", "initial", "clients",
              "client_preset", "server", "client_soup", "stew_zeta", "threads", "output"},
             v);
  check_version(doc, v);

  if (auto s = get_string(doc, "algorithm", "", v)) {
    if (*s == "fedopt") {
      cfg.algorithm = FedAlgorithm::FedOpt;
    } else if (*s == "fedsoup") {
      cfg.algorithm = FedAlgorithm::FedSoup;
    } else {
      v.add("algorithm", "expected \"fedopt\" or \"fedsoup\"");
    }
  } else if (!field(doc, "algorithm")) {
    v.add("algorithm", "required");
  }

  if (auto s = resolve_seed(doc, seed, v)) {
    cfg.seed = *s;
  } else {
    v.add("seed", "required");
  }
  if (auto r = get_uint(doc, "rounds", "", v)) {
    if (*r == 0) v.add("rounds", "must be >= 1");
    cfg.rounds = *r;
  } else if (!field(doc, "rounds")) {
    v.add("rounds", "required");
  }
  if (auto t = get_uint(doc, "threads", "", v)) cfg.threads = static_cast<unsigned>(*t);

  const json* clients = field(doc, "clients");
  const json* preset = field(doc, "client_preset");
  if (clients && preset) v.add("clients", "give either clients or client_preset, not both");
  if (!clients && !preset) v.add("clients", "required (or client_preset)");

  std::optional<std::size_t> dim;
  if (clients) {
    if (!clients->is_array() || clients->empty()) {
      v.add("clients", "expected a non-empty array");
    } else {
      for (std::size_t i = 0; i < clients->size(); ++i) {
        const auto& c = (*clients)[i];
        const auto p = "clients[" + std::to_string(i) + "]";
        if (!expect_object(c, p, v)) continue;
        check_keys(c, p, {"id", "center", "local_optimizer", "local_steps"}, v);
        ClientSpec spec;
        spec.id = get_string(c, "id", p, v).value_or("c" + std::to_string(i));
        if (auto pt = get_point(c, "center", p, v)) {
          if (dim && *dim != pt->size()) v.add(join(p, "center"), "dimension differs from other clients");
          dim = pt->size();
          spec.center = WeightMap::vector(*pt);
        } else if (!field(c, "center")) {
          v.add(join(p, "center"), "required");
        }
        if (const json* o = field(c, "local_optimizer")) {
          if (auto opt = parse_optimizer(*o, join(p, "local_optimizer"), v)) spec.local_optimizer = *opt;
        }
        if (auto k = get_uint(c, "local_steps", p, v)) {
          if (*k == 0) v.add(join(p, "local_steps"), "must be >= 1");
          spec.local_steps = *k;
        }
        cfg.clients.push_back(std::move(spec));
      }
    }
  }
  if (preset && expect_object(*preset, "client_preset", v)) {
    const std::string p = "client_preset";
    check_keys(*preset, p,
               {"count", "dist", "dimension", "location", "scale", "local_optimizer", "local_steps"}, v);
    DistributionSpec dist;
    if (auto d = get_string(*preset, "dist", p, v)) {
      if (*d == "cauchy") {
        dist.kind = DistKind::Cauchy;
      } else if (*d != "gaussian") {
        v.add(join(p, "dist"), "expected \"gaussian\" or \"cauchy\"");
      }
    }
    if (auto d = get_uint(*preset, "dimension", p, v)) dist.dimension = *d;
    if (dist.dimension == 0) v.add(join(p, "dimension"), "must be >= 1");
    if (auto x = get_number(*preset, "location", p, v)) dist.location = *x;
    if (auto x = get_number(*preset, "scale", p, v)) dist.scale = *x;
    if (!(dist.scale > 0.0)) v.add(join(p, "scale"), "must be > 0");
    auto count = get_uint(*preset, "count", p, v);
    if (!count && !field(*preset, "count")) v.add(join(p, "count"), "required");
    if (count && *count == 0) v.add(join(p, "count"), "must be >= 1");
    OptimizerSpec local = OptimizerSpec::gd(Schedule::constant(1.0));
    if (const json* o = field(*preset, "local_optimizer")) {
      if (auto opt = parse_optimizer(*o, join(p, "local_optimizer"), v)) local = *opt;
    }
    std::uint64_t steps = get_uint(*preset, "local_steps", p, v).value_or(1);
    if (steps == 0) v.add(join(p, "local_steps"), "must be >= 1");
    if (count && *count > 0 && dist.dimension > 0 && dist.scale > 0.0 && steps > 0) {
      cfg.clients = make_clients(dist, *count, cfg.seed, local, steps);
      dim = dist.dimension;
    }
  }

  if (auto init = get_point(doc, "initial", "", v)) {
    if (dim && *dim != init->size()) v.add("initial", "dimension differs from the client centres");
    cfg.initial = WeightMap::vector(*init);
  } else if (dim) {
    cfg.initial = WeightMap::vector(Point(*dim, 0.0));
  }

  cfg.participants = cfg.clients.size();
  if (auto s = get_uint(doc, "participants", "", v)) {
    if (*s == 0 || (!cfg.clients.empty() && *s > cfg.clients.size())) {
      v.add("participants", "must be in [1, number of clients]");
    }
    cfg.participants = *s;
  }

  if (const json* o = field(doc, "server")) {
    if (auto opt = parse_optimizer(*o, "server", v)) cfg.server = *opt;
  } else {
    cfg.server = OptimizerSpec::gd(Schedule::constant(1.0));
  }

  if (const json* cs = field(doc, "client_soup")) {
    if (cfg.algorithm != FedAlgorithm::FedSoup) v.add("client_soup", "only used by fedsoup");
    if (cs->is_string() && *cs == "linear") {
      cfg.client_soup.linear = true;
    } else if (cs->is_object()) {
      check_keys(*cs, "client_soup", {"ensemble"}, v);
      if (const json* e = field(*cs, "ensemble")) {
        cfg.client_soup.linear = false;
        json with_order = *e;
        if (with_order.is_object() && !with_order.contains("ordering")) with_order["ordering"] = "given";
        cfg.client_soup.ensemble = parse_ensemble(with_order, "client_soup.ensemble", v, base_dir, nullptr);
        if (cfg.client_soup.ensemble.shuffle) cfg.client_soup.ensemble.seed = cfg.seed;
      } else {
        v.add("client_soup.ensemble", "required");
      }
    } else {
      v.add("client_soup", "expected \"linear\" or {\"ensemble\": {...}}");
    }
  }
  if (const json* z = field(doc, "stew_zeta")) {
    if (cfg.algorithm != FedAlgorithm::FedSoup) v.add("stew_zeta", "only used by fedsoup");
    cfg.stew_zeta = parse_schedule(*z, "stew_zeta", v);
  }

  check_output(doc, v);
  job.checkpoint_out = output_path(doc, "checkpoint", "fed.safetensors", base_dir, out_dir);
  job.log_out = output_path(doc, "log", "rounds.csv", base_dir, out_dir);
  return job;
}

std::vector<std::pair<std::string, double>> read_metrics_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open metrics file " + path.string());
  std::vector<std::pair<std::string, double>> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (lineno == 1) {
      if (line != "id,metric") {
        throw ConfigError(path.string() + ": expected header \"id,metric\"");
      }
      continue;
    }
    auto comma = line.rfind(',');
    if (comma == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected id,metric");
    }
    std::string id = line.substr(0, comma);
    std::string value = line.substr(comma + 1);
    std::size_t used = 0;
    double metric;
    try {
      metric = std::stod(value, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != value.size()) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": bad metric \"" + value + "\"");
    }
    out.emplace_back(std::move(id), metric);
  }
  return out;
}

}  // namespace ame::cli
