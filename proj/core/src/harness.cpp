#include "slowfast/harness.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include <json.hpp>

#include "slowfast/error.hpp"
#include "slowfast/expansion.hpp"
#include "slowfast/weak_error.hpp"

namespace slowfast {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Formatting and digests

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kInvalidInput, "cannot read " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(trim(cur));
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

std::string join_doubles(const std::vector<double>& v, char sep = ',') {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += sep;
    out += format_double(v[i]);
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Parsing

ConfigTable parse_config_text(const std::string& text) {
  ConfigTable table;
  std::istringstream in(text);
  std::string line;
  std::string section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (t.front() == '[' && t.back() == ']') {
      section = trim(std::string_view(t).substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ValidationError("line " + std::to_string(lineno),
                            "expected 'key = value', got '" + t + "'");
    }
    std::string key = trim(std::string_view(t).substr(0, eq));
    if (key.empty()) throw ValidationError("line " + std::to_string(lineno), "empty key");
    if (!section.empty()) key = section + "." + key;
    table[key] = trim(std::string_view(t).substr(eq + 1));
  }
  return table;
}

namespace {

std::string json_scalar(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_float()) return format_double(v.get<double>());
  return v.dump();
}

void flatten_json(const json& node, const std::string& prefix, ConfigTable& out) {
  if (node.is_object()) {
    for (const auto& [k, v] : node.items()) {
      flatten_json(v, prefix.empty() ? k : prefix + "." + k, out);
    }
    return;
  }
  if (node.is_array()) {
    std::string joined;
    for (std::size_t i = 0; i < node.size(); ++i) {
      const json& e = node[i];
      if (e.is_array()) {
        if (i) joined += ';';
        for (std::size_t j = 0; j < e.size(); ++j) {
          if (j) joined += ',';
          joined += json_scalar(e[j]);
        }
      } else {
        if (i) joined += ',';
        joined += json_scalar(e);
      }
    }
    out[prefix] = joined;
    return;
  }
  out[prefix] = json_scalar(node);
}

}  // namespace

ConfigTable parse_config_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError("config", std::string("invalid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ValidationError("config", "JSON config must be an object");
  ConfigTable table;
  flatten_json(doc, "", table);
  return table;
}

ConfigTable load_config_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("config", "cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') return parse_config_json(text);
  return parse_config_text(text);
}

// ---------------------------------------------------------------------------
// Resolution

const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names{"check",       "abar",      "mixing",
                                              "weak-rate",   "strong-rate", "expansion"};
  return names;
}

namespace {

double parse_number(const std::string& key, const std::string& raw) {
  double v = 0.0;
  const char* b = raw.data();
  const char* e = raw.data() + raw.size();
  if (!raw.empty() && raw.front() == '+') ++b;
  const auto res = std::from_chars(b, e, v);
  if (res.ec != std::errc() || res.ptr != e || raw.empty()) {
    throw ValidationError(key, "expected a number, got '" + raw + "'");
  }
  return v;
}

std::size_t parse_count(const std::string& key, const std::string& raw) {
  const double v = parse_number(key, raw);
  if (!(v >= 0.0) || v != std::floor(v) || v > 1e15) {
    throw ValidationError(key, "expected a nonnegative integer, got '" + raw + "'");
  }
  return static_cast<std::size_t>(v);
}

bool parse_bool(const std::string& key, const std::string& raw) {
  if (raw == "true" || raw == "1" || raw == "yes" || raw == "on") return true;
  if (raw == "false" || raw == "0" || raw == "no" || raw == "off") return false;
  throw ValidationError(key, "expected true/false, got '" + raw + "'");
}

std::vector<double> parse_list(const std::string& key, const std::string& raw) {
  std::vector<double> out;
  if (trim(raw).empty()) return out;
  for (const auto& part : split(raw, ',')) out.push_back(parse_number(key, part));
  return out;
}

std::vector<std::vector<double>> parse_points(const std::string& key, const std::string& raw) {
  std::vector<std::vector<double>> out;
  for (const auto& part : split(raw, ';')) out.push_back(parse_list(key, part));
  return out;
}

class Resolver {
 public:
  explicit Resolver(const ConfigTable& table) : table_(table) {}

  const std::string* get(const std::string& key) {
    used_.insert(key);
    const auto it = table_.find(key);
    return it == table_.end() ? nullptr : &it->second;
  }
  void number(const std::string& key, double& out) {
    if (auto v = get(key)) out = parse_number(key, *v);
  }
  void count(const std::string& key, std::size_t& out) {
    if (auto v = get(key)) out = parse_count(key, *v);
  }
  void flag(const std::string& key, bool& out) {
    if (auto v = get(key)) out = parse_bool(key, *v);
  }
  void list(const std::string& key, std::vector<double>& out) {
    if (auto v = get(key)) out = parse_list(key, *v);
  }
  void text(const std::string& key, std::string& out) {
    if (auto v = get(key)) out = *v;
  }

  void reject_unknown(const std::function<bool(const std::string&)>& allowed) const {
    for (const auto& [key, value] : table_) {
      if (!used_.count(key) && !allowed(key)) {
        throw ValidationError(key, "unknown configuration key");
      }
    }
  }

 private:
  const ConfigTable& table_;
  std::set<std::string> used_;
};

}  // namespace

ExperimentConfig resolve_config(const ConfigTable& table) {
  ExperimentConfig c;
  Resolver r(table);
  r.text("model", c.model);
  for (const auto& [key, value] : table) {
    if (key.rfind("model.", 0) == 0) {
      const std::string name = key.substr(6);
      if (value == "true" || value == "false") {
        c.model_params[name] = value == "true" ? 1.0 : 0.0;
      } else {
        c.model_params[name] = parse_number(key, value);
      }
    }
  }
  if (auto v = r.get("seed")) {
    std::uint64_t s = 0;
    const auto res = std::from_chars(v->data(), v->data() + v->size(), s);
    if (res.ec != std::errc() || res.ptr != v->data() + v->size()) {
      throw ValidationError("seed", "expected an unsigned 64-bit integer, got '" + *v + "'");
    }
    c.seed = s;
  }
  if (auto v = r.get("experiments")) {
    c.experiments.clear();
    for (const auto& e : split(*v, ',')) {
      if (!e.empty()) c.experiments.push_back(e);
    }
  }
  r.list("epsilons", c.epsilons);
  r.number("T", c.T);
  if (auto v = r.get("dt")) {
    if (*v != "auto") c.dt = parse_number("dt", *v);
  }
  r.number("dt_factor", c.dt_factor);
  r.text("observable", c.observable);
  r.list("x0", c.x0);
  r.list("y0", c.y0);
  r.count("n0", c.n0);
  if (auto v = r.get("n_rule")) {
    if (*v == "grow") c.grow_n = true;
    else if (*v == "fixed") c.grow_n = false;
    else throw ValidationError("n_rule", "expected 'grow' or 'fixed', got '" + *v + "'");
  }
  r.flag("coupled", c.coupled);
  r.count("path_dump", c.path_dump);
  if (auto v = r.get("output")) c.output = *v;
  r.count("threads", c.threads);

  if (auto v = r.get("abar.method")) {
    if (*v == "time_average") c.abar.settings.method = AbarMethod::kTimeAverage;
    else if (*v == "ensemble") c.abar.settings.method = AbarMethod::kEnsemble;
    else throw ValidationError("abar.method", "expected time_average or ensemble");
  }
  r.number("abar.burn_in", c.abar.settings.burn_in);
  r.number("abar.horizon", c.abar.settings.horizon);
  r.count("abar.n_paths", c.abar.settings.n_paths);
  r.number("abar.dt", c.abar.settings.dt);
  r.count("abar.batches", c.abar.settings.batches);
  r.list("abar.y0", c.abar.settings.y0);
  if (auto v = r.get("abar.points")) c.abar.points = parse_points("abar.points", *v);

  r.list("mixing.x", c.mixing.x);
  r.list("mixing.y1", c.mixing.y1);
  r.list("mixing.y2", c.mixing.y2);
  r.number("mixing.horizon", c.mixing.horizon);
  r.count("mixing.n_paths", c.mixing.n_paths);
  r.number("mixing.dt", c.mixing.dt);

  r.number("expansion.S", c.expansion.u1.S);
  r.count("expansion.n_paths", c.expansion.u1.n_paths);
  r.count("expansion.n_derivative", c.expansion.u1.n_derivative);
  r.number("expansion.dt_averaged", c.expansion.u1.dt_averaged);
  r.number("expansion.dt_frozen", c.expansion.u1.dt_frozen);
  r.count("expansion.n0", c.expansion.n0);

  r.reject_unknown([](const std::string& key) { return key.rfind("model.", 0) == 0; });
  return c;
}

ConfigTable config_table(const ExperimentConfig& c) {
  ConfigTable t;
  t["model"] = c.model;
  for (const auto& [k, v] : c.model_params) t["model." + k] = format_double(v);
  t["seed"] = std::to_string(c.seed);
  std::string ex;
  for (std::size_t i = 0; i < c.experiments.size(); ++i) ex += (i ? "," : "") + c.experiments[i];
  t["experiments"] = ex;
  t["epsilons"] = join_doubles(c.epsilons);
  t["T"] = format_double(c.T);
  t["dt"] = c.dt ? format_double(*c.dt) : "auto";
  t["dt_factor"] = format_double(c.dt_factor);
  t["observable"] = c.observable;
  t["x0"] = join_doubles(c.x0);
  t["y0"] = join_doubles(c.y0);
  t["n0"] = std::to_string(c.n0);
  t["n_rule"] = c.grow_n ? "grow" : "fixed";
  t["coupled"] = c.coupled ? "true" : "false";
  t["path_dump"] = std::to_string(c.path_dump);
  t["output"] = c.output.string();
  t["threads"] = std::to_string(c.threads);
  t["abar.method"] =
      c.abar.settings.method == AbarMethod::kTimeAverage ? "time_average" : "ensemble";
  t["abar.burn_in"] = format_double(c.abar.settings.burn_in);
  t["abar.horizon"] = format_double(c.abar.settings.horizon);
  t["abar.n_paths"] = std::to_string(c.abar.settings.n_paths);
  t["abar.dt"] = format_double(c.abar.settings.dt);
  t["abar.batches"] = std::to_string(c.abar.settings.batches);
  t["abar.y0"] = join_doubles(c.abar.settings.y0);
  std::string pts;
  for (std::size_t i = 0; i < c.abar.points.size(); ++i) {
    pts += (i ? ";" : "") + join_doubles(c.abar.points[i]);
  }
  t["abar.points"] = pts;
  t["mixing.x"] = join_doubles(c.mixing.x);
  t["mixing.y1"] = join_doubles(c.mixing.y1);
  t["mixing.y2"] = join_doubles(c.mixing.y2);
  t["mixing.horizon"] = format_double(c.mixing.horizon);
  t["mixing.n_paths"] = std::to_string(c.mixing.n_paths);
  t["mixing.dt"] = format_double(c.mixing.dt);
  t["expansion.S"] = format_double(c.expansion.u1.S);
  t["expansion.n_paths"] = std::to_string(c.expansion.u1.n_paths);
  t["expansion.n_derivative"] = std::to_string(c.expansion.u1.n_derivative);
  t["expansion.dt_averaged"] = format_double(c.expansion.u1.dt_averaged);
  t["expansion.dt_frozen"] = format_double(c.expansion.u1.dt_frozen);
  t["expansion.n0"] = std::to_string(c.expansion.n0);
  return t;
}

void validate_config(const ExperimentConfig& c) {
  const std::set<std::string> known(experiment_names().begin(), experiment_names().end());
  if (c.experiments.empty()) throw ValidationError("experiments", "no experiment selected");
  for (const auto& e : c.experiments) {
    if (!known.count(e)) throw ValidationError("experiments", "unknown experiment '" + e + "'");
  }
  if (c.epsilons.empty()) throw ValidationError("epsilons", "at least one epsilon is required");
  std::set<double> seen;
  for (double e : c.epsilons) {
    if (!(e > 0.0) || e > 1.0) {
      throw ValidationError("epsilons", "every epsilon must lie in (0, 1], got " +
                                            format_double(e));
    }
    if (!seen.insert(e).second) {
      throw ValidationError("epsilons", "epsilons must be distinct, " + format_double(e) +
                                            " repeats");
    }
  }
  if (!(c.T > 0.0) || !std::isfinite(c.T)) throw ValidationError("T", "T must be > 0");
  if (!(c.dt_factor > 0.0)) throw ValidationError("dt_factor", "dt_factor must be > 0");
  if (c.dt) {
    const double eps_min = *std::min_element(c.epsilons.begin(), c.epsilons.end());
    if (!(*c.dt > 0.0) || *c.dt > c.dt_factor * eps_min * (1 + 1e-12)) {
      throw ValidationError("dt", "dt must lie in (0, dt_factor * min(epsilons)]");
    }
  }
  if (c.n0 < 2) throw ValidationError("n0", "n0 must be >= 2");

  CoefficientModel model = [&] {
    try {
      return make_model(c.model, c.model_params);
    } catch (const InvalidModelError& e) {
      throw ValidationError("model", e.what());
    }
  }();
  const Dims& d = model.dims();
  if (c.x0.size() != d.n) throw ValidationError("x0", "x0 must have the slow dimension");
  if (c.y0.size() != d.m) throw ValidationError("y0", "y0 must have the fast dimension");
  try {
    (void)observable_by_name(c.observable);
  } catch (const InvalidInputError& e) {
    throw ValidationError("observable", e.what());
  }
  if (!(c.abar.settings.horizon > c.abar.settings.burn_in) || !(c.abar.settings.burn_in > 0)) {
    throw ValidationError("abar.horizon", "requires abar.horizon > abar.burn_in > 0");
  }
  for (const auto& p : c.abar.points) {
    if (p.size() != d.n) throw ValidationError("abar.points", "point has wrong dimension");
  }
  if (c.mixing.y1 == c.mixing.y2) throw ValidationError("mixing.y2", "y1 and y2 must differ");

  std::error_code ec;
  fs::create_directories(c.output, ec);
  const fs::path probe = c.output / ".write_probe";
  {
    std::ofstream out(probe);
    if (!out) throw ValidationError("output", "output directory is not writable: " +
                                                  c.output.string());
  }
  fs::remove(probe, ec);
}

bool ResultManifest::has_failure(const std::string& kind) const {
  return std::any_of(failures.begin(), failures.end(),
                     [&](const FailureRecord& f) { return f.kind == kind; });
}

// ---------------------------------------------------------------------------
// Orchestration

namespace {

std::uint64_t tag_of(std::string_view experiment) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char ch : experiment) h = (h ^ static_cast<unsigned char>(ch)) * 0x100000001b3ull;
  return h;
}

class Writer {
 public:
  Writer(const fs::path& dir, ResultManifest& manifest) : dir_(dir), manifest_(manifest) {}

  void write(const std::string& name, const std::string& content, const std::string& operation,
             const ConfigTable& parameters) {
    const fs::path final_path = dir_ / name;
    const fs::path partial = dir_ / (name + ".partial");
    {
      std::ofstream out(partial, std::ios::binary | std::ios::trunc);
      if (!out) throw Error(ErrorKind::kInvalidInput, "cannot write " + partial.string());
      out << content;
    }
    fs::rename(partial, final_path);
    manifest_.files.push_back(
        {name, sha256_file(final_path), fs::file_size(final_path), operation, parameters});
  }

 private:
  fs::path dir_;
  ResultManifest& manifest_;
};

json fit_json(const RateFit& fit) {
  json j;
  j["status"] = "ok";
  j["slope"] = fit.slope;
  j["intercept"] = fit.intercept;
  j["r_squared"] = fit.r_squared;
  j["ci_low"] = fit.ci_low;
  j["ci_high"] = fit.ci_high;
  j["points"] = json::array();
  for (const auto& p : fit.points) {
    j["points"].push_back({{"epsilon", p.epsilon}, {"error", p.error}, {"stderr", p.std_error}});
  }
  j["excluded_points"] = json::array();
  for (const auto& p : fit.excluded) {
    j["excluded_points"].push_back(
        {{"epsilon", p.epsilon}, {"error", p.error}, {"stderr", p.std_error}, {"reason", p.reason}});
  }
  return j;
}

struct Context {
  const ExperimentConfig& config;
  const CoefficientModel& model;
  const AveragedDrift& abar;
  RandomPlan base;
  Writer& writer;
  ResultManifest& manifest;
  ConfigTable common;  // seed and model echo attached to every file
};

ConfigTable with(ConfigTable t, std::initializer_list<std::pair<const std::string, std::string>> extra) {
  for (const auto& [k, v] : extra) t[k] = v;
  return t;
}

void run_rate(Context& ctx, const std::string& name, bool strong) {
  const auto& c = ctx.config;
  SweepSettings s;
  s.T = c.T;
  s.n0 = c.n0;
  s.grow_n = c.grow_n;
  s.dt = c.dt;
  s.dt_fast_factor = c.dt_factor;
  s.coupled = c.coupled;
  const RandomPlan plan = ctx.base.derive(tag_of(name));
  const Observable obs = observable_by_name(c.observable);
  const auto sweep =
      strong ? strong_error_sweep(ctx.model, ctx.abar.field(), c.x0, c.y0, c.epsilons, s, plan)
             : weak_error_sweep(ctx.model, ctx.abar.field(), c.x0, c.y0, obs, c.epsilons, s, plan);

  const std::string stem = strong ? "strong_rate" : "weak_rate";
  const std::string op = strong ? "strong_error" : "weak_error";
  ConfigTable params = with(ctx.common, {{"T", format_double(c.T)},
                                         {"x0", join_doubles(c.x0)},
                                         {"y0", join_doubles(c.y0)},
                                         {"n0", std::to_string(c.n0)},
                                         {"n_rule", c.grow_n ? "grow" : "fixed"}});
  if (!strong) {
    params["observable"] = c.observable;
    params["coupled"] = c.coupled ? "true" : "false";
  }

  std::string csv = "epsilon,error,stderr,n,dt,seed\n";
  std::string dat = "# log10(epsilon) log10(|error|) log10(stderr)\n";
  for (const auto& p : sweep) {
    csv += format_double(p.epsilon) + "," + format_double(p.error.mean) + "," +
           format_double(p.error.std_error) + "," + std::to_string(p.n) + "," +
           format_double(p.dt) + "," + std::to_string(c.seed) + "\n";
    dat += format_double(std::log10(p.epsilon)) + " " +
           format_double(std::log10(std::abs(p.error.mean))) + " " +
           format_double(std::log10(p.error.std_error)) + "\n";
  }
  ctx.writer.write(stem + ".csv", csv, op, params);
  ctx.writer.write(stem + ".dat", dat, op, params);

  json fit_doc;
  try {
    const RateFit fit = fit_rate(rate_points(sweep));
    fit_doc = fit_json(fit);
    ctx.manifest.fits[name] = {fit.slope,   fit.intercept,     fit.r_squared, fit.ci_low,
                               fit.ci_high, fit.points.size(), fit.excluded};
  } catch (const InsufficientDataError& e) {
    fit_doc["status"] = "insufficient-data";
    fit_doc["message"] = e.what();
    fit_doc["excluded_points"] = json::array();
    for (const auto& p : e.excluded()) {
      fit_doc["excluded_points"].push_back({{"epsilon", p.epsilon},
                                            {"error", p.error},
                                            {"stderr", p.std_error},
                                            {"reason", p.reason}});
    }
    ctx.manifest.failures.push_back({name, "insufficient-data", e.what(), {}, {}});
  }
  ctx.writer.write(stem + "_fit.json", fit_doc.dump(2) + "\n", "fit_rate", params);
}

void run_abar(Context& ctx) {
  const auto& c = ctx.config;
  const RandomPlan plan = ctx.base.derive(tag_of("abar"));
  const std::size_t n = ctx.model.dims().n;
  auto col = [n](const std::string& base, std::size_t i) {
    return n == 1 ? base : base + "[" + std::to_string(i) + "]";
  };
  std::string csv;
  for (std::size_t i = 0; i < n; ++i) csv += col("x", i) + ",";
  for (std::size_t i = 0; i < n; ++i) csv += col("abar_estimate", i) + ",";
  for (std::size_t i = 0; i < n; ++i) csv += col("stderr", i) + ",";
  for (std::size_t i = 0; i < n; ++i) csv += col("abar_analytic", i) + ",";
  csv += "n_paths,horizon\n";

  for (std::size_t k = 0; k < c.abar.points.size(); ++k) {
    const auto& x = c.abar.points[k];
    const AbarEstimate e = estimate_abar(ctx.model, x, c.abar.settings, plan.derive(k));
    std::vector<double> analytic(n);
    if (ctx.model.has_analytic_abar()) ctx.model.abar_analytic(x, analytic);
    for (double v : x) csv += format_double(v) + ",";
    for (double v : e.value) csv += format_double(v) + ",";
    for (double v : e.std_error) csv += format_double(v) + ",";
    for (double v : analytic) csv += (ctx.model.has_analytic_abar() ? format_double(v) : "") + ",";
    csv += std::to_string(e.n_paths) + "," + format_double(c.abar.settings.horizon) + "\n";
  }
  const auto& s = c.abar.settings;
  ctx.writer.write("abar.csv", csv, "estimate_abar",
                   with(ctx.common,
                        {{"method", s.method == AbarMethod::kTimeAverage ? "time_average"
                                                                          : "ensemble"},
                         {"burn_in", format_double(s.burn_in)},
                         {"horizon", format_double(s.horizon)},
                         {"n_paths", std::to_string(s.n_paths)},
                         {"dt", format_double(s.dt)},
                         {"batches", std::to_string(s.batches)}}));
}

void run_mixing(Context& ctx) {
  const auto& m = ctx.config.mixing;
  const RandomPlan plan = ctx.base.derive(tag_of("mixing"));
  const MixingEstimate est = estimate_mixing_rate(ctx.model, m.x, m.y1, m.y2, m.horizon,
                                                  m.n_paths, plan, m.dt);
  const AssumptionReport diss =
      check_dissipativity(ctx.model, default_dissipativity_probe(ctx.model.dims()));
  const ConfigTable params = with(ctx.common, {{"x", join_doubles(m.x)},
                                               {"y1", join_doubles(m.y1)},
                                               {"y2", join_doubles(m.y2)},
                                               {"horizon", format_double(m.horizon)},
                                               {"n_paths", std::to_string(m.n_paths)},
                                               {"dt", format_double(m.dt)}});
  std::string csv = "t,mean_squared_distance\n";
  std::string dat = "# t ln(mean squared distance)\n";
  for (const auto& [t, v] : est.curve) {
    csv += format_double(t) + "," + format_double(v) + "\n";
    if (v > 0) dat += format_double(t) + " " + format_double(std::log(v)) + "\n";
  }
  ctx.writer.write("mixing.csv", csv, "estimate_mixing_rate", params);
  ctx.writer.write("mixing.dat", dat, "estimate_mixing_rate", params);
  json j;
  j["beta_hat_sq"] = est.beta_hat_sq;
  j["fit_points"] = est.fit_points;
  j["final_spread"] = est.final_spread;
  if (diss.beta_hat) j["beta_hat_a3"] = *diss.beta_hat;
  ctx.writer.write("mixing_fit.json", j.dump(2) + "\n", "estimate_mixing_rate", params);
}

void run_expansion(Context& ctx) {
  const auto& c = ctx.config;
  ResidualSettings s;
  s.T = c.T;
  s.n0 = c.expansion.n0;
  s.dt = c.dt;
  s.u1 = c.expansion.u1;
  const Observable obs = observable_by_name(c.observable);
  const auto reports = residual_check(ctx.model, ctx.abar.field(), obs, c.x0, c.y0, c.epsilons,
                                      s, ctx.base.derive(tag_of("expansion")));
  const ConfigTable params =
      with(ctx.common, {{"T", format_double(c.T)},
                        {"x0", join_doubles(c.x0)},
                        {"y0", join_doubles(c.y0)},
                        {"observable", c.observable},
                        {"n0", std::to_string(s.n0)},
                        {"S", format_double(s.u1.S)},
                        {"n_paths", std::to_string(s.u1.n_paths)},
                        {"n_derivative", std::to_string(s.u1.n_derivative)},
                        {"dt_averaged", format_double(s.u1.dt_averaged)},
                        {"dt_frozen", format_double(s.u1.dt_frozen)}});
  std::string csv =
      "epsilon,u_eps,u_eps_stderr,u_bar,u_bar_stderr,u1_hat,u1_stderr,r_eps,r_eps_stderr,S,"
      "tail_bound,n,dt\n";
  std::string dat = "# log10(epsilon) log10(|u_eps-u_bar|) log10(|r_eps|)\n";
  for (const auto& r : reports) {
    csv += format_double(r.epsilon) + "," + format_double(r.u_eps.mean) + "," +
           format_double(r.u_eps.std_error) + "," + format_double(r.u_bar.mean) + "," +
           format_double(r.u_bar.std_error) + "," + format_double(r.u1_hat.mean) + "," +
           format_double(r.u1_hat.std_error) + "," + format_double(r.r_eps.mean) + "," +
           format_double(r.r_eps.std_error) + "," + format_double(r.S) + "," +
           format_double(r.tail_bound) + "," + std::to_string(r.n) + "," + format_double(r.dt) +
           "\n";
    dat += format_double(std::log10(r.epsilon)) + " " +
           format_double(std::log10(std::abs(r.difference.mean))) + " " +
           format_double(std::log10(std::abs(r.r_eps.mean))) + "\n";
  }
  ctx.writer.write("expansion.csv", csv, "residual_check", params);
  ctx.writer.write("expansion.dat", dat, "residual_check", params);
  const ResidualBoundedness b = residual_boundedness(reports);
  json j;
  j["max_lower_r_over_eps"] = b.max_lower;
  j["min_upper_r_over_eps"] = b.min_upper;
  j["bounded"] = b.bounded;
  j["warnings"] = reports.empty() ? json::array() : json(reports.front().warnings);
  ctx.writer.write("expansion_summary.json", j.dump(2) + "\n", "residual_check", params);
}

void run_check(Context& ctx) {
  const AssumptionReport r = check_assumptions(ctx.model);
  json j;
  j["model"] = ctx.model.name();
  j["alpha_hat"] = r.alpha_hat ? json(*r.alpha_hat) : json(nullptr);
  j["beta_hat"] = r.beta_hat ? json(*r.beta_hat) : json(nullptr);
  j["lipschitz_probe"] = json::object();
  for (const auto& [k, v] : r.lipschitz_probe) j["lipschitz_probe"][k] = v;
  j["violation_count"] = r.violations.size();
  j["violations"] = json::array();
  for (std::size_t i = 0; i < std::min<std::size_t>(r.violations.size(), 16); ++i) {
    const auto& v = r.violations[i];
    j["violations"].push_back(
        {{"assumption", v.assumption}, {"x", v.x}, {"y1", v.y1}, {"y2", v.y2}, {"value", v.value}});
  }
  ctx.writer.write("check.json", j.dump(2) + "\n", "check_assumptions", ctx.common);
}

void dump_paths(Context& ctx) {
  const auto& c = ctx.config;
  const double eps = c.epsilons.front();
  const double eps_min = *std::min_element(c.epsilons.begin(), c.epsilons.end());
  const ScaleParams scale{eps, c.T, c.dt.value_or(c.dt_factor * eps_min), c.dt_factor};
  // Same plans as sample i of the weak-rate sweep at the first epsilon.
  const RandomPlan plan = ctx.base.derive(tag_of("weak-rate")).derive(0);
  const Dims& d = ctx.model.dims();
  std::string csv = "sample,t";
  for (std::size_t i = 0; i < d.n; ++i) csv += ",X[" + std::to_string(i) + "]";
  for (std::size_t i = 0; i < d.m; ++i) csv += ",Y[" + std::to_string(i) + "]";
  csv += ",slow_jump,fast_jump\n";
  for (std::size_t s = 0; s < c.path_dump; ++s) {
    const auto res = simulate_coupled(ctx.model, scale, c.x0, c.y0, plan.for_sample(s), true);
    const PathRecord& p = *res.path;
    for (std::size_t k = 0; k < p.t.size(); ++k) {
      csv += std::to_string(s) + "," + format_double(p.t[k]);
      for (std::size_t i = 0; i < d.n; ++i) csv += "," + format_double(p.x[k * d.n + i]);
      for (std::size_t i = 0; i < d.m; ++i) csv += "," + format_double(p.y[k * d.m + i]);
      csv += std::string(",") + ((p.flags[k] & kSlowJump) ? "1" : "0") + "," +
             ((p.flags[k] & kFastJump) ? "1" : "0") + "\n";
    }
  }
  ctx.writer.write("paths.csv", csv, "simulate_coupled",
                   with(ctx.common, {{"epsilon", format_double(scale.epsilon)},
                                     {"T", format_double(scale.T)},
                                     {"dt", format_double(scale.dt)},
                                     {"samples", std::to_string(c.path_dump)}}));
}

json manifest_json(const ResultManifest& m) {
  json j;
  j["artifact_version"] = m.artifact_version;
  j["config"] = json::object();
  for (const auto& [k, v] : m.config) j["config"][k] = v;
  j["files"] = json::array();
  for (const auto& f : m.files) {
    json p = json::object();
    for (const auto& [k, v] : f.parameters) p[k] = v;
    j["files"].push_back({{"path", f.path},
                          {"sha256", f.sha256},
                          {"bytes", f.bytes},
                          {"operation", f.operation},
                          {"parameters", p}});
  }
  j["timings_seconds"] = json::object();
  for (const auto& [k, v] : m.timings) j["timings_seconds"][k] = v;
  j["fits"] = json::object();
  for (const auto& [k, f] : m.fits) {
    json e = {{"slope", f.slope},   {"intercept", f.intercept}, {"r_squared", f.r_squared},
              {"ci_low", f.ci_low}, {"ci_high", f.ci_high},     {"points", f.points}};
    e["excluded_points"] = json::array();
    for (const auto& p : f.excluded) {
      e["excluded_points"].push_back({{"epsilon", p.epsilon}, {"error", p.error},
                                      {"stderr", p.std_error}, {"reason", p.reason}});
    }
    j["fits"][k] = e;
  }
  j["failures"] = json::array();
  for (const auto& f : m.failures) {
    json e = {{"experiment", f.experiment}, {"kind", f.kind}, {"message", f.message}};
    if (f.time) e["time"] = *f.time;
    if (f.sample) e["sample"] = *f.sample;
    j["failures"].push_back(e);
  }
  return j;
}

}  // namespace

ResultManifest run_experiment(const ExperimentConfig& config) {
  validate_config(config);
  if (config.threads > 0) set_thread_count(config.threads);

  ResultManifest manifest;
  manifest.config = config_table(config);
  const CoefficientModel model = make_model(config.model, config.model_params);
  const RandomPlan base{config.seed};
  const AveragedDrift abar = AveragedDrift::for_model(model, base.derive(tag_of("abar-field")));
  Writer writer(config.output, manifest);

  ConfigTable common{{"seed", std::to_string(config.seed)}, {"model", config.model}};
  for (const auto& [k, v] : config.model_params) common["model." + k] = format_double(v);
  Context ctx{config, model, abar, base, writer, manifest, common};

  auto timed = [&](const std::string& name, const std::function<void()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
      body();
    } catch (const BlowUpError& e) {
      manifest.failures.push_back({name, "blow-up", e.what(), e.time(), e.sample()});
    } catch (const InsufficientDataError& e) {
      manifest.failures.push_back({name, "insufficient-data", e.what(), {}, {}});
    } catch (const InvalidInputError& e) {
      manifest.failures.push_back({name, "invalid-input", e.what(), {}, {}});
    }
    manifest.timings[name] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  for (const auto& name : config.experiments) {
    if (name == "check") timed(name, [&] { run_check(ctx); });
    else if (name == "abar") timed(name, [&] { run_abar(ctx); });
    else if (name == "mixing") timed(name, [&] { run_mixing(ctx); });
    else if (name == "weak-rate") timed(name, [&] { run_rate(ctx, name, false); });
    else if (name == "strong-rate") timed(name, [&] { run_rate(ctx, name, true); });
    else if (name == "expansion") timed(name, [&] { run_expansion(ctx); });
  }
  if (config.path_dump > 0) timed("path-dump", [&] { dump_paths(ctx); });

  const fs::path partial = config.output / "manifest.json.partial";
  {
    std::ofstream out(partial, std::ios::binary | std::ios::trunc);
    out << manifest_json(manifest).dump(2) << "\n";
  }
  fs::rename(partial, config.output / "manifest.json");
  return manifest;
}

}  // namespace slowfast
