#include "rsfl/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "rsfl/entropy.hpp"
#include "rsfl/error.hpp"
#include "rsfl/lemmas.hpp"
#include "rsfl/trajectory_io.hpp"

namespace rsfl::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum class Kind { Unsigned, Number, String, Bool, Object, NumberArray, AnyArray };

using Schema = std::map<std::string, Kind>;

const std::map<std::string, Schema>& section_schemas() {
  static const std::map<std::string, Schema> schemas{
      {"system", {{"name", Kind::String}, {"params", Kind::Object}}},
      {"constants_options",
       {{"n_samples", Kind::Unsigned},
        {"n_pairs", Kind::Unsigned},
        {"n_points", Kind::Unsigned},
        {"n_grid", Kind::Unsigned},
        {"n_certify", Kind::Unsigned},
        {"n_trials", Kind::Unsigned}}},
      {"measure",
       {{"origin", Kind::String},
        {"n", Kind::Unsigned},
        {"burn_in", Kind::Number},
        {"spacing", Kind::Number},
        {"initial", Kind::NumberArray},
        {"density", Kind::String},
        {"atoms", Kind::AnyArray},
        {"weights", Kind::NumberArray}}},
      {"query",
       {{"variant", Kind::String},
        {"dt", Kind::Number},
        {"eps", Kind::NumberArray},
        {"t", Kind::NumberArray},
        {"centers", Kind::Unsigned},
        {"class", Kind::String},
        {"alpha", Kind::Number},
        {"h_resolution", Kind::Unsigned},
        {"alpha_max", Kind::Number}}},
      {"expansive",
       {{"eps", Kind::NumberArray},
        {"horizons", Kind::NumberArray},
        {"mode", Kind::String},
        {"centers", Kind::Unsigned},
        {"consistency", Kind::Bool}}},
      {"lemmas",
       {{"n_points", Kind::Unsigned},
        {"n_inclusion", Kind::Unsigned},
        {"n_witnesses", Kind::Unsigned},
        {"n_members", Kind::Unsigned},
        {"lambda_identity", Kind::Number},
        {"b", Kind::Number},
        {"lambda_inclusion", Kind::Number},
        {"alpha", Kind::Number},
        {"horizon", Kind::Number}}},
      {"match",
       {{"center", Kind::NumberArray},
        {"point", Kind::NumberArray},
        {"variant", Kind::String},
        {"eps", Kind::Number},
        {"horizon", Kind::Number},
        {"dt", Kind::Number},
        {"class", Kind::String},
        {"alpha", Kind::Number}}},
      {"decay", {{"center", Kind::Unsigned}}},
  };
  return schemas;
}

const Schema& top_schema() {
  static const Schema s{{"system", Kind::Object},   {"seed", Kind::Unsigned},   {"threads", Kind::Unsigned},
                        {"output", Kind::String},   {"cache", Kind::String},    {"constants", Kind::String},
                        {"constants_options", Kind::Object}, {"measure", Kind::Object}, {"query", Kind::Object},
                        {"expansive", Kind::Object}, {"lemmas", Kind::Object}, {"match", Kind::Object},
                        {"decay", Kind::Object}};
  return s;
}

const std::map<std::string, std::set<std::string>>& command_sections() {
  static const std::map<std::string, std::set<std::string>> m{
      {"constants", {"constants_options"}},
      {"entropy", {"measure", "query"}},
      {"expansive", {"measure", "query", "expansive"}},
      {"check-lemmas", {"constants", "constants_options", "lemmas"}},
      {"decay", {"measure", "query", "decay"}},
      {"match", {"match"}},
  };
  return m;
}

bool has_kind(const json& v, Kind k) {
  switch (k) {
    case Kind::Unsigned:
      return v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0);
    case Kind::Number:
      return v.is_number();
    case Kind::String:
      return v.is_string();
    case Kind::Bool:
      return v.is_boolean();
    case Kind::Object:
      return v.is_object();
    case Kind::NumberArray:
      if (!v.is_array()) return false;
      for (const auto& e : v) {
        if (!e.is_number()) return false;
      }
      return true;
    case Kind::AnyArray:
      return v.is_array();
  }
  return false;
}

void check_section(const std::string& where, const json& obj, const Schema& schema) {
  for (const auto& [key, value] : obj.items()) {
    auto it = schema.find(key);
    if (it == schema.end()) throw ConfigError("unknown config key '" + where + key + "'");
    if (!has_kind(value, it->second)) throw ConfigError("config key '" + where + key + "' has the wrong type");
  }
}

void require_grid(const json& section, const std::string& key, const std::string& where) {
  if (!section.contains(key)) return;
  const auto& arr = section.at(key);
  if (arr.empty()) throw ConfigError("config grid '" + where + key + "' must be nonempty");
  for (const auto& v : arr) {
    if (!(v.get<double>() > 0.0)) throw ConfigError("config grid '" + where + key + "' must be positive");
  }
}

std::vector<double> grid(const json& section, const std::string& key) {
  return section.at(key).get<std::vector<double>>();
}

std::vector<double> range(double first, double last, double step) {
  std::vector<double> out;
  for (int k = 0; first + k * step <= last + 1e-9; ++k) out.push_back(first + k * step);
  return out;
}

void write_json_file(const fs::path& path, const json& doc) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path.string());
  os << doc.dump(2) << '\n';
}

template <class Fn>
void write_text_file(const fs::path& path, Fn&& fn) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path.string());
  os.imbue(std::locale::classic());
  fn(os);
}

struct Context {
  FlowSystem sys;
  std::uint64_t seed = 1;
  std::size_t threads = 1;
  std::optional<fs::path> output;
  std::unique_ptr<TrajectoryCache> cache;
};

Context make_context(const json& config) {
  Context ctx{system_from_config(config.at("system")), 1, 1, std::nullopt, nullptr};
  ctx.seed = config.value("seed", std::uint64_t{1});
  ctx.threads = std::max<std::size_t>(1, config.value("threads", std::size_t{1}));
  if (config.contains("output")) {
    ctx.output = config.at("output").get<std::string>();
    fs::create_directories(*ctx.output);
  }
  if (const char* env = std::getenv("RSFL_CACHE_DIR"); env != nullptr && *env != '\0') {
    ctx.cache = std::make_unique<TrajectoryCache>(TrajectoryCache::from_env(""));
  } else if (config.contains("cache")) {
    ctx.cache = std::make_unique<TrajectoryCache>(fs::path(config.at("cache").get<std::string>()));
  }
  return ctx;
}

EmpiricalMeasure build_measure(Context& ctx, const json& m, std::uint64_t seed) {
  const std::string origin = m.value("origin", std::string("orbit"));
  if (origin == "orbit") {
    const State x0 = m.contains("initial") ? m.at("initial").get<State>() : ctx.sys.default_initial;
    if (x0.size() != ctx.sys.dim()) throw ConfigError("measure.initial has the wrong dimension");
    return orbit_measure(ctx.sys, x0, m.value("burn_in", 10.0), m.value("n", std::size_t{10000}),
                         m.value("spacing", 0.7548776662), seed, ctx.cache.get());
  }
  if (origin == "iid") {
    return iid_measure(ctx.sys, m.value("density", std::string("uniform")), m.value("n", std::size_t{10000}), seed);
  }
  if (origin == "atoms") {
    if (!m.contains("atoms")) throw ConfigError("measure.atoms is required for origin 'atoms'");
    std::vector<State> atoms;
    try {
      atoms = m.at("atoms").get<std::vector<State>>();
    } catch (const json::exception&) {
      throw ConfigError("measure.atoms must be an array of points");
    }
    return atom_list(ctx.sys, std::move(atoms),
                     m.contains("weights") ? m.at("weights").get<std::vector<double>>() : std::vector<double>{});
  }
  throw ConfigError("measure.origin must be orbit, iid or atoms");
}

// Distinct regular atoms in a seeded random order.
std::vector<std::size_t> pick_centers(const FlowSystem& sys, const EmpiricalMeasure& mu, std::size_t count,
                                      std::uint64_t seed) {
  std::vector<std::size_t> order(mu.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < order.size() && out.size() < count; ++i) {
    std::swap(order[i], order[i + rng.index(order.size() - i)]);
    if (sys.is_regular(mu.atoms[order[i]])) out.push_back(order[i]);
  }
  if (out.empty()) throw EstimationError("the measure has no regular atoms to use as centers");
  return out;
}

BallQuery proto_query(const json& q) {
  BallQuery proto;
  proto.variant = parse_variant(q.value("variant", std::string("B1")));
  proto.dt = q.value("dt", 0.01);
  proto.reparam_class = ReparamClass::parse(q.value("class", std::string("Rep")), q.value("alpha", 0.5));
  proto.h_resolution = static_cast<int>(q.value("h_resolution", std::size_t{4}));
  proto.alpha_max = q.value("alpha_max", 0.9);
  return proto;
}

ExpansivenessMode parse_mode(const std::string& s) {
  if (s == "two_sided" || s == "TwoSided") return ExpansivenessMode::TwoSided;
  if (s == "forward" || s == "Forward") return ExpansivenessMode::Forward;
  throw ConfigError("expansive.mode must be two_sided or forward");
}

json measure_summary(const EmpiricalMeasure& mu) {
  return {{"origin", origin_name(mu.origin)},
          {"origin_info", mu.origin_info},
          {"size", mu.size()},
          {"flagged", mu.flagged.size()},
          {"seed", mu.seed}};
}

json cmd_constants(Context& ctx, const json& config) {
  const json opts = config.value("constants_options", json::object());
  ConstantsOptions o;
  o.seed = ctx.seed;
  o.n_samples = opts.value("n_samples", o.n_samples);
  o.n_pairs = opts.value("n_pairs", o.n_pairs);
  o.n_points = opts.value("n_points", o.n_points);
  o.n_grid = opts.value("n_grid", o.n_grid);
  o.n_certify = opts.value("n_certify", o.n_certify);
  o.n_trials = opts.value("n_trials", o.n_trials);
  const FlowConstants c = estimate_constants(ctx.sys, o);
  json result = c.to_json();
  if (ctx.output) write_json_file(*ctx.output / "constants.json", result);
  return result;
}

struct EntropyRun {
  EmpiricalMeasure mu;
  std::vector<std::size_t> centers;
  EntropyEstimate estimate;
};

EntropyRun run_entropy(Context& ctx, const json& config, const EmpiricalMeasure* reuse = nullptr) {
  Rng seeds(ctx.seed);
  const std::uint64_t measure_seed = seeds.next_seed();
  const std::uint64_t center_seed = seeds.next_seed();
  const json& q = config.at("query");
  EntropyRun run;
  run.mu = reuse ? *reuse : build_measure(ctx, config.at("measure"), measure_seed);
  run.centers = pick_centers(ctx.sys, run.mu, q.value("centers", std::size_t{20}), center_seed);
  run.estimate =
      brin_katok_estimate(ctx.sys, run.mu, run.centers, grid(q, "eps"), grid(q, "t"), proto_query(q), ctx.threads);
  return run;
}

json cmd_entropy(Context& ctx, const json& config) {
  const EntropyRun run = run_entropy(ctx, config);
  json result = run.estimate.to_json();
  result["measure"] = measure_summary(run.mu);
  if (ctx.output) {
    write_json_file(*ctx.output / "entropy.json", result);
    write_text_file(*ctx.output / "entropy.csv", [&](std::ostream& os) { write_entropy_csv(os, run.estimate); });
  }
  return result;
}

json cmd_expansive(Context& ctx, const json& config) {
  Rng seeds(ctx.seed);
  const std::uint64_t measure_seed = seeds.next_seed();
  const std::uint64_t center_seed = seeds.next_seed();
  const json& e = config.at("expansive");
  const EmpiricalMeasure mu = build_measure(ctx, config.at("measure"), measure_seed);
  const BallQuery proto = proto_query(config.at("query"));
  const ExpansivenessMode mode = parse_mode(e.value("mode", std::string("two_sided")));
  std::vector<std::size_t> centers;
  if (!mu.charges_singularity()) centers = pick_centers(ctx.sys, mu, e.value("centers", std::size_t{20}), center_seed);

  std::vector<ExpansivenessVerdict> verdicts;
  json arr = json::array();
  for (double eps : centers.empty() ? std::vector<double>{} : grid(e, "eps")) {
    verdicts.push_back(expansiveness_test(ctx.sys, mu, eps, centers, grid(e, "horizons"), mode, proto, ctx.threads));
    arr.push_back(verdicts.back().to_json());
  }
  json result{{"verdicts", arr}, {"measure", measure_summary(mu)}};
  if (e.value("consistency", true)) {
    ConsistencyReport report;
    if (mu.charges_singularity()) {
      report = consistency_check(mu, EntropyEstimate{}, verdicts);
    } else {
      const EntropyRun run = run_entropy(ctx, config, &mu);
      result["entropy"] = run.estimate.to_json();
      report = consistency_check(mu, run.estimate, verdicts);
    }
    result["consistency"] = report.to_json();
  }
  if (ctx.output) write_json_file(*ctx.output / "expansive.json", result);
  return result;
}

json cmd_check_lemmas(Context& ctx, const json& config, int& exit_code) {
  FlowConstants constants;
  if (config.contains("constants")) {
    const fs::path path = config.at("constants").get<std::string>();
    std::ifstream is(path);
    json doc;
    try {
      doc = json::parse(is);
    } catch (const json::exception& ex) {
      throw FormatError("constants file " + path.string() + ": " + ex.what());
    }
    constants = FlowConstants::from_json(doc);
  } else {
    json sub = config;
    sub.erase("output");
    Context quiet{ctx.sys, ctx.seed, ctx.threads, std::nullopt, nullptr};
    constants = FlowConstants::from_json(cmd_constants(quiet, sub));
  }
  const json l = config.value("lemmas", json::object());
  LemmaOptions o;
  o.seed = ctx.seed;
  o.n_points = l.value("n_points", o.n_points);
  o.n_inclusion = l.value("n_inclusion", o.n_inclusion);
  o.n_witnesses = l.value("n_witnesses", o.n_witnesses);
  o.n_members = l.value("n_members", o.n_members);
  o.lambda_identity = l.value("lambda_identity", o.lambda_identity);
  o.b = l.value("b", o.b);
  o.lambda_inclusion = l.value("lambda_inclusion", o.lambda_inclusion);
  o.alpha = l.value("alpha", o.alpha);
  o.horizon = l.value("horizon", o.horizon);
  const LemmaReport report = run_lemma_suite(ctx.sys, constants, o);
  json result = report.to_json();
  result["constants"] = constants.to_json();
  if (ctx.output) write_json_file(*ctx.output / "lemmas.json", result);
  exit_code = report.violations() == 0 ? kExitOk : kExitViolations;
  return result;
}

json cmd_decay(Context& ctx, const json& config) {
  Rng seeds(ctx.seed);
  const std::uint64_t measure_seed = seeds.next_seed();
  const std::uint64_t center_seed = seeds.next_seed();
  const json& q = config.at("query");
  const EmpiricalMeasure mu = build_measure(ctx, config.at("measure"), measure_seed);
  std::size_t center = 0;
  const json d = config.value("decay", json::object());
  if (d.contains("center")) {
    center = d.at("center").get<std::size_t>();
    if (center >= mu.size()) throw ConfigError("decay.center is out of range");
  } else {
    center = pick_centers(ctx.sys, mu, 1, center_seed).front();
  }
  MassOptions mo;
  mo.exclude_index = center;
  mo.threads = ctx.threads;
  const DecayCurve curve = decay_curve(ctx.sys, mu, mu.atoms[center], grid(q, "eps"), grid(q, "t"), proto_query(q), mo);
  json points = json::array();
  for (const auto& p : curve.points) {
    points.push_back({{"eps", p.eps},
                      {"t", p.t},
                      {"mass", p.mass.estimate},
                      {"rate", p.rate},
                      {"ci", {p.rate_low, p.rate_high}},
                      {"censored", p.censored}});
  }
  json result{{"center", center}, {"points", points}, {"measure", measure_summary(mu)}};
  if (ctx.output) {
    write_json_file(*ctx.output / "decay.json", result);
    write_text_file(*ctx.output / "decay.csv", [&](std::ostream& os) { write_decay_csv(os, curve); });
  }
  return result;
}

json cmd_match(Context& ctx, const json& config) {
  json m = config.at("match");
  if (!m.contains("center")) m["center"] = ctx.sys.default_initial;
  const State point = m.contains("point") ? m.at("point").get<State>() : m.at("center").get<State>();
  m.erase("point");
  const BallQuery q = query_from_json(m);
  if (q.center.size() != ctx.sys.dim() || point.size() != ctx.sys.dim()) {
    throw ConfigError("match.center and match.point must have the system dimension");
  }
  const MatchResult r = member(ctx.sys, q, point);
  json result = to_json(r);
  result["query"] = to_json(q);
  if (ctx.output) write_json_file(*ctx.output / "match.json", result);
  return result;
}

}  // namespace

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"constants", "entropy", "expansive", "check-lemmas", "decay", "match"};
  return names;
}

json default_config(const std::string& command, const std::string& system) {
  json c{{"system", {{"name", system}, {"params", json::object()}}}, {"seed", 1}, {"threads", 1}};
  const auto& sections = command_sections().at(command);
  const bool torus = system == "torus_rotation" || system == "torus_constant";

  json measure, query;
  if (system == "doubling_suspension") {
    measure = {{"origin", "orbit"}, {"n", 100000}, {"burn_in", 10.0}, {"spacing", 0.7548776662}};
    query = {{"variant", "B1"}, {"dt", 0.05}, {"eps", {0.2, 0.1, 0.05}}, {"t", range(1, 14, 1)}, {"centers", 20}};
  } else if (torus) {
    measure = {{"origin", "iid"}, {"density", "uniform"}, {"n", 10000}};
    query = {{"variant", "B1"}, {"dt", 0.1}, {"eps", {0.2, 0.1, 0.05}}, {"t", range(5, 50, 5)}, {"centers", 10}};
  } else if (system == "north_south_circle") {
    measure = {{"origin", "orbit"}, {"n", 2000}, {"burn_in", 20.0}, {"spacing", 0.1}, {"initial", {0.1}}};
    query = {{"variant", "B1"}, {"dt", 0.05}, {"eps", {0.2, 0.1}}, {"t", range(1, 10, 1)}, {"centers", 10}};
  } else {
    measure = {{"origin", "orbit"}, {"n", 20000}, {"burn_in", 10.0}, {"spacing", 0.05}};
    query = {{"variant", "B1"}, {"dt", 0.002}, {"eps", {0.05, 0.025}}, {"t", range(1.0, 6.0, 0.5)}, {"centers", 20}};
  }

  if (sections.count("measure")) c["measure"] = measure;
  if (sections.count("query")) c["query"] = query;
  if (sections.count("expansive")) {
    json e{{"eps", {0.1}}, {"horizons", {4.0, 8.0, 12.0, 16.0}}, {"mode", "two_sided"}, {"centers", 20},
           {"consistency", true}};
    if (system == "doubling_suspension") {
      c["measure"]["n"] = 10000;
      e["eps"] = {0.05};
      e["horizons"] = {8.0, 16.0, 24.0, 32.0};
      e["mode"] = "forward";
    } else if (torus) {
      c["measure"]["n"] = 2000;
    } else if (system == "north_south_circle") {
      e["horizons"] = {2.0, 4.0, 6.0, 8.0};
    } else {
      e["eps"] = {0.01};
      e["horizons"] = {2.0, 4.0, 6.0, 8.0};
      e["mode"] = "forward";
      c["measure"]["n"] = 2000;
    }
    c["expansive"] = e;
  }
  if (sections.count("match")) {
    c["match"] = {{"variant", "B3"}, {"eps", 0.1}, {"horizon", 1.0}, {"dt", 0.01}, {"class", "Rep"}};
  }
  return c;
}

void apply_override(json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + assignment + "'");
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  std::string pointer;
  std::stringstream ss(key);
  for (std::string part; std::getline(ss, part, '.');) {
    if (part.empty()) throw ConfigError("--set key '" + key + "' has an empty segment");
    pointer += "/" + part;
  }
  try {
    config[json::json_pointer(pointer)] = value;
  } catch (const json::exception& ex) {
    throw ConfigError("--set " + key + ": " + ex.what());
  }
}

void validate_config(const std::string& command, const json& config) {
  auto cmd = command_sections().find(command);
  if (cmd == command_sections().end()) throw ConfigError("unknown command '" + command + "'");
  if (!config.is_object()) throw ConfigError("config must be a JSON object");
  check_section("", config, top_schema());
  for (const auto& [key, value] : config.items()) {
    const bool common = key == "system" || key == "seed" || key == "threads" || key == "output" || key == "cache";
    if (!common && !cmd->second.count(key)) {
      throw ConfigError("config key '" + key + "' does not apply to '" + command + "'");
    }
    auto sch = section_schemas().find(key);
    if (sch != section_schemas().end()) check_section(key + ".", value, sch->second);
  }
  if (!config.contains("system") || !config.at("system").contains("name")) {
    throw ConfigError("config needs system.name");
  }
  if (!config.contains("seed")) throw ConfigError("config needs a seed");
  for (const std::string section : {"measure", "query", "expansive"}) {
    if (cmd->second.count(section) && !config.contains(section)) {
      throw ConfigError("config needs a '" + section + "' section");
    }
  }
  if (config.contains("query")) {
    const auto& q = config.at("query");
    for (const std::string k : {"eps", "t"}) {
      if (!q.contains(k)) throw ConfigError("config needs query." + k);
      require_grid(q, k, "query.");
    }
  }
  if (config.contains("expansive")) {
    const auto& e = config.at("expansive");
    for (const std::string k : {"eps", "horizons"}) {
      if (!e.contains(k)) throw ConfigError("config needs expansive." + k);
      require_grid(e, k, "expansive.");
    }
  }
  if (config.contains("constants")) {
    const fs::path path = config.at("constants").get<std::string>();
    std::ifstream is(path);
    if (!is) throw ConfigError("constants file is not readable: " + path.string());
  }
}

json run_command(const std::string& command, const json& config, int& exit_code) {
  Context ctx = make_context(config);
  exit_code = kExitOk;
  json result;
  if (command == "constants") {
    result = cmd_constants(ctx, config);
  } else if (command == "entropy") {
    result = cmd_entropy(ctx, config);
  } else if (command == "expansive") {
    result = cmd_expansive(ctx, config);
  } else if (command == "check-lemmas") {
    result = cmd_check_lemmas(ctx, config, exit_code);
  } else if (command == "decay") {
    result = cmd_decay(ctx, config);
  } else if (command == "match") {
    result = cmd_match(ctx, config);
  } else {
    throw ConfigError("unknown command '" + command + "'");
  }
  json echo = config;
  echo.erase("output");
  echo.erase("cache");
  echo.erase("threads");
  return {{"command", command}, {"config", echo}, {"result", result}};
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Rescaled Bowen balls, expansiveness and entropy for flows"};
  app.require_subcommand(1);

  struct Flags {
    std::string config_path;
    std::vector<std::string> sets;
    std::string system;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    std::optional<std::size_t> threads;
  };
  Flags flags;
  std::map<std::string, CLI::App*> subs;
  const std::map<std::string, std::string> about{
      {"constants", "Estimate L, c, T0 and the gamma/delta tables"},
      {"entropy", "Rescaled Brin-Katok entropy estimate"},
      {"expansive", "Gamma-ball expansiveness verdicts and consistency with entropy"},
      {"check-lemmas", "Randomized property suite; exit 3 on violations"},
      {"decay", "Raw -log(mass)/t curves for one center"},
      {"match", "Single ball membership query with witness"}};
  for (const auto& name : command_names()) {
    CLI::App* sub = app.add_subcommand(name, about.count(name) ? about.at(name) : "");
    sub->add_option("--config", flags.config_path, "JSON config file");
    sub->add_option("--set", flags.sets, "Override a config key, e.g. query.dt=0.05")->allow_extra_args(false);
    sub->add_option("--system", flags.system, "Builtin system name");
    sub->add_option("--seed", flags.seed, "Master seed");
    sub->add_option("--out", flags.out_dir, "Output directory");
    sub->add_option("--threads", flags.threads, "Worker threads");
    subs[name] = sub;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }
  std::string command;
  for (const auto& [name, sub] : subs) {
    if (sub->parsed()) command = name;
  }

  json config;
  try {
    json file = json::object();
    if (!flags.config_path.empty()) {
      std::ifstream is(flags.config_path);
      if (!is) throw ConfigError("cannot read config file " + flags.config_path);
      file = json::parse(is);
      if (!file.is_object()) throw ConfigError("config must be a JSON object");
      if (file.contains("system") && !file.at("system").is_object()) {
        throw ConfigError("config key 'system' has the wrong type");
      }
    }
    std::string system = flags.system;
    if (system.empty() && file.contains("system")) system = file.at("system").value("name", std::string());
    if (system.empty()) throw ConfigError("no system given; use --system or system.name");
    config = default_config(command, system);
    config.merge_patch(file);
    config["system"]["name"] = system;
    for (const auto& s : flags.sets) apply_override(config, s);
    if (flags.seed) config["seed"] = *flags.seed;
    if (flags.threads) config["threads"] = *flags.threads;
    if (!flags.out_dir.empty()) config["output"] = flags.out_dir;
    validate_config(command, config);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const json::exception& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    int code = kExitOk;
    const json doc = run_command(command, config, code);
    out << doc.dump(2) << '\n';
    if (config.contains("output")) write_json_file(fs::path(config.at("output").get<std::string>()) / "result.json", doc);
    return code;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const FormatError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const json::exception& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitPipeline;
  }
}

}  // namespace rsfl::cli
