#include "mpp/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "mpp/bernstein.hpp"
#include "mpp/chaining.hpp"
#include "mpp/empirical.hpp"
#include "mpp/exponential.hpp"
#include "mpp/mle.hpp"
#include "mpp/point_process.hpp"
#include "mpp/random.hpp"

namespace mpp {

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

// Object view that remembers which keys were read, so leftovers can be
// rejected as typos.
class Fields {
 public:
  Fields(const json& j, std::string ctx) : j_(j), ctx_(std::move(ctx)) {
    if (!j_.is_object()) throw ConfigError(ctx_ + " must be an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const json& at(const std::string& key) {
    used_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) throw ConfigError(ctx_ + ": missing key '" + key + "'");
    return *it;
  }

  const json* find(const std::string& key) {
    used_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  template <typename T>
  T get(const std::string& key) {
    return convert<T>(at(key), key);
  }

  template <typename T>
  T get_or(const std::string& key, T fallback) {
    const json* v = find(key);
    return v ? convert<T>(*v, key) : fallback;
  }

  const std::string& context() const { return ctx_; }
  std::string sub(const std::string& key) const { return ctx_ + "." + key; }

  void finish() const {
    for (const auto& item : j_.items())
      if (!used_.count(item.key())) throw ConfigError(ctx_ + ": unknown key '" + item.key() + "'");
  }

 private:
  template <typename T>
  T convert(const json& v, const std::string& key) const {
    if constexpr (std::is_same_v<T, double>) {
      if (!v.is_number()) throw ConfigError(sub(key) + " must be a number");
    } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
      if (!v.is_number_integer()) throw ConfigError(sub(key) + " must be an integer");
      if constexpr (std::is_unsigned_v<T>)
        if (v.is_number_integer() && !v.is_number_unsigned()) throw ConfigError(sub(key) + " must be >= 0");
    } else if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(sub(key) + " must be true or false");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(sub(key) + " must be a string");
    }
    try {
      return v.get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(sub(key) + ": " + e.what());
    }
  }

  const json& j_;
  std::string ctx_;
  std::set<std::string> used_;
};

Eigen::VectorXd to_vector(const json& v, const std::string& ctx) {
  if (!v.is_array() || v.empty()) throw ConfigError(ctx + " must be a non-empty array of numbers");
  Eigen::VectorXd out(static_cast<Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number()) throw ConfigError(ctx + " must contain numbers only");
    out(static_cast<Index>(i)) = v[i].get<double>();
  }
  return out;
}

Eigen::MatrixXd to_matrix(const json& v, const std::string& ctx) {
  if (!v.is_array() || v.empty()) throw ConfigError(ctx + " must be a non-empty array of rows");
  const std::size_t cols = v[0].is_array() ? v[0].size() : 0;
  Eigen::MatrixXd out(static_cast<Index>(v.size()), static_cast<Index>(cols));
  for (std::size_t i = 0; i < v.size(); ++i) {
    const auto row = to_vector(v[i], ctx + "[" + std::to_string(i) + "]");
    if (static_cast<std::size_t>(row.size()) != cols) throw ConfigError(ctx + " rows must have equal length");
    out.row(static_cast<Index>(i)) = row.transpose();
  }
  return out;
}

std::vector<std::string> to_strings(const json& v, const std::string& ctx) {
  if (!v.is_array()) throw ConfigError(ctx + " must be an array of strings");
  std::vector<std::string> out;
  for (const auto& s : v) {
    if (!s.is_string()) throw ConfigError(ctx + " must be an array of strings");
    out.push_back(s.get<std::string>());
  }
  return out;
}

/// An explicit array, or {"start", "stop", "step"}.
std::vector<double> to_grid(const json& v, const std::string& ctx) {
  std::vector<double> out;
  if (v.is_array()) {
    const auto vec = to_vector(v, ctx);
    out.assign(vec.data(), vec.data() + vec.size());
    return out;
  }
  Fields f(v, ctx);
  const double start = f.get<double>("start"), stop = f.get<double>("stop"), step = f.get<double>("step");
  f.finish();
  if (!(step > 0.0) || stop < start) throw ConfigError(ctx + ": need step > 0 and stop >= start");
  const auto count = static_cast<long long>(std::floor((stop - start) / step + 1e-9)) + 1;
  if (count > 100000) throw ConfigError(ctx + ": grid too large");
  for (long long i = 0; i < count; ++i) out.push_back(start + static_cast<double>(i) * step);
  return out;
}

std::vector<Index> to_sizes(const json& v, const std::string& ctx) {
  if (!v.is_array() || v.empty()) throw ConfigError(ctx + " must be a non-empty array of integers");
  std::vector<Index> out;
  for (const auto& x : v) {
    if (!x.is_number_integer() || x.get<long long>() < 1) throw ConfigError(ctx + " entries must be integers >= 1");
    out.push_back(static_cast<Index>(x.get<long long>()));
  }
  return out;
}

Eigen::VectorXd uniform_law(Index n) { return Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n)); }

CompensatorModel parse_model(const json& spec, const std::string& ctx) {
  Fields f(spec, ctx);
  const auto type = f.get<std::string>("type");
  Eigen::VectorXd marks = to_vector(f.at("marks"), f.sub("marks"));
  Eigen::VectorXd law = f.has("law") ? to_vector(f.at("law"), f.sub("law")) : uniform_law(marks.size());
  if (type == "poisson") {
    const double rate = f.get<double>("rate");
    f.finish();
    return CompensatorModel::poisson(MarkSpace(std::move(marks)), rate, std::move(law));
  }
  if (type == "atom") {
    const double spacing = f.get_or<double>("spacing", 1.0);
    const double a = f.get_or<double>("atom_probability", 1.0);
    std::optional<Eigen::MatrixXd> transition;
    if (const json* t = f.find("transition")) transition = to_matrix(*t, f.sub("transition"));
    f.finish();
    return CompensatorModel::atoms(MarkSpace(std::move(marks)), spacing, a, std::move(law), std::move(transition));
  }
  throw ConfigError(ctx + ".type must be 'poisson' or 'atom'");
}

Integrand parse_integrand(const json& spec, const CompensatorModel& model, const std::string& ctx) {
  Fields f(spec, ctx);
  const auto type = f.get<std::string>("type");
  const auto& marks = model.marks();
  Integrand w = Integrand::zero();
  if (type == "identity") {
    w = Integrand::identity(marks);
  } else if (type == "constant") {
    w = Integrand::constant(f.get<double>("value"));
  } else if (type == "table") {
    w = Integrand::mark_table(to_vector(f.at("values"), f.sub("values")));
    if (to_vector(f.at("values"), f.sub("values")).size() != marks.size())
      throw ConfigError(ctx + ".values needs one value per mark");
  } else if (type == "threshold") {
    const double tau = f.get<double>("tau");
    Eigen::VectorXd v(marks.size());
    for (Index i = 0; i < marks.size(); ++i) v(i) = marks.value(i) >= tau ? 1.0 : 0.0;
    w = Integrand::mark_table(std::move(v));
  } else if (type == "state_table") {
    Eigen::MatrixXd v = to_matrix(f.at("values"), f.sub("values"));
    if (v.cols() != marks.size()) throw ConfigError(ctx + ".values needs one column per mark");
    w = Integrand::state_table(std::move(v));
  } else {
    throw ConfigError(ctx + ".type must be identity, constant, table, threshold or state_table");
  }
  f.finish();
  return w;
}

struct Registry {
  std::map<std::string, CompensatorModel> models;
  std::map<std::string, json> integrands;

  const CompensatorModel& model(const std::string& name) const {
    const auto it = models.find(name);
    if (it == models.end()) throw ConfigError("unknown model '" + name + "'");
    return it->second;
  }
  Integrand integrand(const std::string& name, const CompensatorModel& m) const {
    const auto it = integrands.find(name);
    if (it == integrands.end()) throw ConfigError("unknown integrand '" + name + "'");
    return parse_integrand(it->second, m, "integrands." + name);
  }
};

Registry parse_registry(Fields& root, bool need_integrands) {
  Registry r;
  const json& models = root.at("models");
  if (!models.is_object() || models.empty()) throw ConfigError("models must be a non-empty object");
  for (const auto& item : models.items()) r.models.emplace(item.key(), parse_model(item.value(), "models." + item.key()));
  if (need_integrands) {
    const json& ints = root.at("integrands");
    if (!ints.is_object() || ints.empty()) throw ConfigError("integrands must be a non-empty object");
    for (const auto& item : ints.items()) r.integrands.emplace(item.key(), item.value());
  }
  return r;
}

const json& case_list(Fields& root, const char* key) {
  const json& cases = root.at(key);
  if (!cases.is_array() || cases.empty()) throw ConfigError(std::string(key) + " must be a non-empty array");
  return cases;
}

struct Context {
  std::uint64_t master_seed = 0;
  std::size_t replicates = 0;
  unsigned workers = 1;
  std::vector<ojson> rows;
  std::vector<ojson> tail;
  std::vector<std::pair<std::string, std::string>> files;
  ojson notes = ojson::object();
};

ojson row(const std::string& name) {
  ojson r;
  r["type"] = "row";
  r["case"] = name;
  return r;
}

ojson matrix_json(const Eigen::MatrixXd& m) {
  ojson out = ojson::array();
  for (Index i = 0; i < m.rows(); ++i) {
    ojson r = ojson::array();
    for (Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    out.push_back(std::move(r));
  }
  return out;
}

ojson witness_json(const PartitionSequence& seq) { return ojson::parse(to_json(seq).dump()); }

// ---------------------------------------------------------------------------
// Kinds

void run_simulate(Fields& root, Context& ctx) {
  const Registry reg = parse_registry(root, false);
  const json& cases = case_list(root, "cases");
  root.finish();
  for (std::size_t i = 0; i < cases.size(); ++i) {
    Fields f(cases[i], "cases[" + std::to_string(i) + "]");
    const auto name = f.get_or<std::string>("name", "case" + std::to_string(i));
    const auto model_name = f.get<std::string>("model");
    const double horizon = f.get<double>("horizon");
    f.finish();
    const auto& model = reg.model(model_name);
    const auto stream = simulate(model, horizon, case_seed(ctx.master_seed, i));
    std::ostringstream csv;
    write_stream_csv(csv, stream, model.marks());
    const std::string file = cases.size() == 1 ? "stream.csv" : "stream_" + std::to_string(i) + ".csv";
    ctx.files.emplace_back(file, csv.str());
    auto r = row(name);
    r["model"] = model_name;
    r["horizon"] = horizon;
    r["events"] = stream.events.size();
    r["file"] = file;
    r["pass"] = true;
    ctx.rows.push_back(std::move(r));
  }
}

Sided parse_sided(const std::string& s, const std::string& ctx) {
  if (s == "one") return Sided::one;
  if (s == "two") return Sided::two;
  throw ConfigError(ctx + " must be 'one', 'two' or 'both'");
}

void run_bernstein(Fields& root, Context& ctx) {
  const Registry reg = parse_registry(root, true);
  const json& cases = case_list(root, "cases");
  root.finish();
  struct Case {
    std::string name, model, integrand;
    double horizon;
    std::vector<std::pair<double, double>> grid;
    std::vector<Sided> sides;
    std::optional<double> k;
  };
  std::vector<Case> parsed;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    Fields f(cases[i], "cases[" + std::to_string(i) + "]");
    Case c;
    c.name = f.get_or<std::string>("name", "case" + std::to_string(i));
    c.model = f.get<std::string>("model");
    c.integrand = f.get<std::string>("integrand");
    c.horizon = f.get<double>("horizon");
    const auto xs = to_grid(f.at("x"), f.sub("x"));
    const auto y2s = to_grid(f.at("y2"), f.sub("y2"));
    for (double x : xs)
      for (double y2 : y2s) c.grid.emplace_back(x, y2);
    const auto sided = f.get_or<std::string>("sided", "one");
    if (sided == "both")
      c.sides = {Sided::one, Sided::two};
    else
      c.sides = {parse_sided(sided, f.sub("sided"))};
    if (const json* k = f.find("k")) {
      if (!k->is_number()) throw ConfigError(f.sub("k") + " must be a number");
      c.k = k->get<double>();
    }
    f.finish();
    reg.integrand(c.integrand, reg.model(c.model));
    parsed.push_back(std::move(c));
  }
  ctx.notes["lambda_opt"] = "x / (y2 + K x), the minimizer giving exp(-x^2 / (2 (x K + y2)))";
  for (std::size_t i = 0; i < parsed.size(); ++i) {
    const auto& c = parsed[i];
    const auto& model = reg.model(c.model);
    const Integrand w = reg.integrand(c.integrand, model);
    for (Sided sided : c.sides) {
      const auto verdict =
          sided == Sided::one ? minimal_k(w, model, c.horizon, 8) : minimal_k_two_sided(w, model, c.horizon, 8);
      const auto reports =
          mc_tail_grid(w, model, c.horizon, c.grid, c.k, ctx.replicates, case_seed(ctx.master_seed, i), sided,
                       ctx.workers);
      for (const auto& t : reports) {
        auto r = row(c.name);
        r["model"] = c.model;
        r["integrand"] = c.integrand;
        r["horizon"] = c.horizon;
        r["sided"] = to_string(sided);
        r["x"] = t.x;
        r["y2"] = t.y2;
        r["k"] = t.k;
        r["k_hat"] = verdict.k_hat;
        r["binding"] = verdict.binding;
        r["k_exact"] = verdict.exact;
        r["hits"] = t.hits;
        r["replicates"] = t.replicates;
        r["empirical"] = t.empirical;
        r["cp99"] = t.cp99_upper;
        r["cp99_lower"] = t.cp99_lower;
        r["bound"] = t.bound;
        r["union_bound"] = t.union_bound;
        r["union_pass"] = t.union_pass;
        r["lambda_opt"] = t.lambda_opt;
        r["exact_zero"] = t.exact_zero;
        r["conditioned"] = t.conditioned;
        r["pass"] = t.pass;
        ctx.rows.push_back(std::move(r));
      }
    }
  }
}

void run_martingale(Fields& root, Context& ctx) {
  const Registry reg = parse_registry(root, true);
  const json& cases = case_list(root, "cases");
  root.finish();
  struct Case {
    std::string name, model, integrand;
    double t;
    std::vector<double> fractions, lambdas;
    std::optional<double> k;
    std::size_t sde_paths;
  };
  std::vector<Case> parsed;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    Fields f(cases[i], "cases[" + std::to_string(i) + "]");
    Case c;
    c.name = f.get_or<std::string>("name", "case" + std::to_string(i));
    c.model = f.get<std::string>("model");
    c.integrand = f.get<std::string>("integrand");
    c.t = f.get<double>("t");
    if (f.has("lambda") && f.has("lambda_over_k")) throw ConfigError(f.context() + ": give lambda or lambda_over_k");
    if (const json* l = f.find("lambda")) c.lambdas = to_grid(*l, f.sub("lambda"));
    if (const json* l = f.find("lambda_over_k")) c.fractions = to_grid(*l, f.sub("lambda_over_k"));
    if (c.lambdas.empty() && c.fractions.empty()) c.fractions = {0.1, 0.5, 0.9};
    if (const json* k = f.find("k")) {
      if (!k->is_number()) throw ConfigError(f.sub("k") + " must be a number");
      c.k = k->get<double>();
    }
    c.sde_paths = f.get_or<std::size_t>("sde_paths", 1000);
    f.finish();
    reg.integrand(c.integrand, reg.model(c.model));
    parsed.push_back(std::move(c));
  }
  for (std::size_t i = 0; i < parsed.size(); ++i) {
    const auto& c = parsed[i];
    const auto& model = reg.model(c.model);
    const Integrand w = reg.integrand(c.integrand, model);
    const double k = c.k ? *c.k : minimal_k(w, model, c.t, 8).k_hat;
    std::vector<double> lambdas = c.lambdas;
    for (double f : c.fractions) {
      if (!(k > 0.0)) throw ConfigError(c.name + ": K is 0, give lambda explicitly");
      lambdas.push_back(f / k);
    }
    const std::uint64_t cs = case_seed(ctx.master_seed, i);
    for (std::size_t l = 0; l < lambdas.size(); ++l) {
      const double lambda = lambdas[l];
      const auto rep = martingale_mean(w, model, lambda, c.t, ctx.replicates, derive_seed(cs, l), ctx.workers);
      auto r = row(c.name);
      r["check"] = "ratio_mean";
      r["model"] = c.model;
      r["integrand"] = c.integrand;
      r["t"] = c.t;
      r["k"] = k;
      r["lambda"] = lambda;
      r["lambda_k"] = lambda * k;
      r["replicates"] = rep.replicates;
      r["mean"] = rep.mean;
      r["standard_error"] = rep.standard_error;
      r["z"] = rep.z;
      r["min_delta_s"] = rep.min_delta_s;
      r["log_second_moment"] = rep.log_second_moment ? ojson(*rep.log_second_moment) : ojson(nullptr);
      r["pass"] = rep.pass;
      ctx.rows.push_back(std::move(r));

      // Pathwise identities on a smaller ensemble.
      double residual = 0.0, relative = 0.0, min_jump = INFINITY;
      std::size_t chain_violations = 0, nonfinite = 0;
      const bool chain_applies = lambda * k < 1.0;
      for (std::size_t p = 0; p < c.sde_paths; ++p) {
        const auto stream = simulate(model, c.t, derive_seed(derive_seed(cs, l), p));
        const auto s = s_lambda_path(w, model, stream, lambda, c.t);
        const double r = sde_residual(s, c.t);
        if (!std::isfinite(r) || !std::isfinite(doleans(s, c.t))) {
          ++nonfinite;
          continue;
        }
        residual = std::max(residual, r);
        relative = std::max(relative, r / std::max(1.0, std::abs(doleans(s, c.t))));
        for (const auto& piece : s.pieces())
          if (piece.jump) min_jump = std::min(min_jump, piece.increment);
        if (chain_applies) {
          const double cw = characteristics(w, model, stream, c.t, 3).c;
          const double limit = lambda * lambda / (2.0 * (1.0 - lambda * k)) * cw;
          if (s.value(c.t) > limit * (1.0 + 1e-12) + 1e-15) ++chain_violations;
        }
      }
      auto d = row(c.name);
      d["check"] = "doleans";
      d["lambda"] = lambda;
      d["paths"] = c.sde_paths;
      d["max_sde_residual"] = residual;
      d["max_sde_relative"] = relative;
      d["nonfinite_paths"] = nonfinite;
      d["min_delta_s"] = min_jump;
      d["bound_chain_checked"] = chain_applies;
      d["bound_chain_violations"] = chain_violations;
      // Absolute error is meaningless once E(S) runs to 1e20; judge it against max(1, |E|).
      d["pass"] = nonfinite == 0 && relative <= 1e-10 && !(min_jump <= -1.0) && chain_violations == 0;
      ctx.rows.push_back(std::move(d));
    }
  }
}

FiniteMetricSpace random_space(Index points, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd xy(points, 2);
  for (Index i = 0; i < points; ++i) {
    xy(i, 0) = rng.uniform();
    xy(i, 1) = rng.uniform();
  }
  Eigen::MatrixXd d(points, points);
  for (Index i = 0; i < points; ++i)
    for (Index j = 0; j < points; ++j) d(i, j) = (xy.row(i) - xy.row(j)).norm();
  return FiniteMetricSpace(std::move(d));
}

void run_gamma(Fields& root, Context& ctx) {
  const json& spaces = case_list(root, "spaces");
  std::vector<int> alphas{1, 2};
  if (const json* a = root.find("alpha")) {
    alphas.clear();
    for (double v : to_grid(*a, "alpha")) {
      if (v != 1.0 && v != 2.0) throw ConfigError("alpha entries must be 1 or 2");
      alphas.push_back(static_cast<int>(v));
    }
  }
  const auto cap = static_cast<Index>(root.get_or<long long>("exact_cap", kDefaultExactCap));
  if (cap < 1 || cap > 16) throw ConfigError("exact_cap must lie in [1, 16]");
  std::vector<double> us;
  if (const json* u = root.find("chain_tail")) us = to_grid(*u, "chain_tail");
  root.finish();

  struct Named {
    std::string name;
    FiniteMetricSpace space;
  };
  std::vector<Named> list;
  for (std::size_t i = 0; i < spaces.size(); ++i) {
    Fields f(spaces[i], "spaces[" + std::to_string(i) + "]");
    const auto name = f.get_or<std::string>("name", "space" + std::to_string(i));
    if (const json* rnd = f.find("random")) {
      Fields rf(*rnd, f.sub("random"));
      const auto points = rf.get<long long>("points");
      const auto count = rf.get<long long>("count");
      rf.finish();
      if (points < 1 || count < 1) throw ConfigError(f.sub("random") + ": points and count must be >= 1");
      const std::uint64_t cs = case_seed(ctx.master_seed, i);
      for (long long d = 0; d < count; ++d)
        list.push_back({name + "#" + std::to_string(d),
                        random_space(static_cast<Index>(points), derive_seed(cs, static_cast<std::uint64_t>(d)))});
    } else {
      json spec = {{"matrix", f.at("matrix")}};
      if (const json* p = f.find("points")) spec["points"] = *p;
      list.push_back({name, metric_space_from_json(spec)});
    }
    f.finish();
  }
  for (const auto& [name, space] : list)
    for (int alpha : alphas) {
      const auto greedy = greedy_gamma(space, alpha);
      std::string why;
      bool admissible = is_admissible(greedy.witness, space.size(), &why);
      auto r = row(name);
      r["points"] = space.size();
      r["alpha"] = alpha;
      r["diameter"] = space.diameter();
      r["greedy"] = greedy.value;
      bool ok = greedy.value >= space.diameter() - 1e-12;
      if (space.size() <= cap) {
        const auto exact = exact_gamma(space, alpha, cap);
        admissible = admissible && is_admissible(exact.witness, space.size(), &why);
        r["exact"] = exact.value;
        r["witness"] = witness_json(exact.witness);
        ok = ok && greedy.value >= exact.value - 1e-12 && exact.value >= space.diameter() - 1e-12;
      } else {
        r["exact"] = nullptr;
        r["witness"] = witness_json(greedy.witness);
      }
      r["admissible"] = admissible;
      r["pass"] = ok && admissible;
      ctx.rows.push_back(std::move(r));
    }
  for (double u : us) {
    auto r = row("chain_tail");
    r["u"] = u;
    try {
      r["p"] = chain_tail(u);
      r["diverges"] = false;
    } catch (const DivergenceError&) {
      r["p"] = nullptr;
      r["diverges"] = true;
    }
    r["pass"] = true;
    ctx.rows.push_back(std::move(r));
  }
}

void push_tail(Context& ctx, const std::string& name, const TailFit& fit, std::optional<Index> n = std::nullopt) {
  for (const auto& p : fit.points) {
    ojson t;
    t["case"] = name;
    if (n) t["n"] = *n;
    t["u"] = p.u;
    t["threshold"] = p.threshold;
    t["hits"] = p.hits;
    t["empirical"] = p.empirical;
    t["cp99"] = p.cp99_upper;
    t["bound"] = p.bound;
    ctx.tail.push_back(std::move(t));
  }
}

void run_chaining(Fields& root, Context& ctx) {
  const Registry reg = parse_registry(root, true);
  Fields fam(root.at("family"), "family");
  const auto model_name = fam.get<std::string>("model");
  const double horizon = fam.get<double>("horizon");
  const auto names = to_strings(fam.at("integrands"), fam.sub("integrands"));
  fam.finish();
  const auto u_grid = to_grid(root.at("u_grid"), "u_grid");
  UniformOptions opt;
  opt.exact_cap = static_cast<Index>(root.get_or<long long>("exact_cap", kDefaultExactCap));
  opt.slope_limit = root.get_or<double>("slope_limit", -0.4);
  root.finish();
  if (opt.exact_cap < 1 || opt.exact_cap > 16) throw ConfigError("exact_cap must lie in [1, 16]");
  if (names.empty()) throw ConfigError("family.integrands must be non-empty");

  const auto& model = reg.model(model_name);
  IndexedFamily family;
  for (const auto& n : names) {
    family.names.push_back(n);
    family.members.push_back(reg.integrand(n, model));
  }
  opt.replicates = ctx.replicates;
  opt.seed = case_seed(ctx.master_seed, 0);
  opt.workers = ctx.workers;
  const auto rep = verify_uniform(family, model, horizon, u_grid, opt);
  auto r = row("family");
  r["model"] = model_name;
  r["horizon"] = horizon;
  r["members"] = names;
  r["k_common"] = rep.k_common;
  r["conditioned"] = rep.conditioned;
  r["gamma1"] = rep.gamma1.value;
  r["gamma1_exact"] = rep.gamma1.exact;
  r["gamma2"] = rep.gamma2.value;
  r["gamma2_exact"] = rep.gamma2.exact;
  r["scale"] = rep.scale;
  r["c"] = rep.tail.c;
  r["slope"] = rep.tail.slope;
  r["slope_points"] = rep.tail.slope_points;
  r["mean_sup"] = rep.mean_sup;
  r["expectation_constant"] = rep.expectation_constant;
  r["replicates"] = rep.replicates;
  r["d1"] = matrix_json(rep.d1);
  r["d1_raw"] = matrix_json(rep.d1_raw);
  r["d2"] = matrix_json(rep.d2);
  r["pass"] = rep.pass;
  ctx.rows.push_back(std::move(r));
  push_tail(ctx, "family", rep.tail);
}

TimeSeriesModel parse_time_series(const json& spec) {
  Fields f(spec, "time_series");
  Eigen::VectorXd alphabet = to_vector(f.at("alphabet"), f.sub("alphabet"));
  if (f.has("transition")) {
    Eigen::MatrixXd p = to_matrix(f.at("transition"), f.sub("transition"));
    std::optional<Eigen::VectorXd> initial;
    if (const json* i = f.find("initial")) initial = to_vector(*i, f.sub("initial"));
    f.finish();
    return TimeSeriesModel::markov(std::move(alphabet), std::move(p), std::move(initial));
  }
  Eigen::VectorXd law = f.has("law") ? to_vector(f.at("law"), f.sub("law")) : uniform_law(alphabet.size());
  f.finish();
  return TimeSeriesModel::iid(std::move(alphabet), std::move(law));
}

FunctionClass parse_class(const json& spec, const Eigen::VectorXd& alphabet, const std::string& ctx) {
  Fields f(spec, ctx);
  const auto type = f.get<std::string>("type");
  if (type == "thresholds") {
    auto taus = to_vector(f.at("taus"), f.sub("taus"));
    f.finish();
    return FunctionClass::thresholds(alphabet, taus);
  }
  if (type == "identity") {
    f.finish();
    return FunctionClass::identity(alphabet);
  }
  if (type == "table") {
    auto names = to_strings(f.at("names"), f.sub("names"));
    auto values = to_matrix(f.at("values"), f.sub("values"));
    f.finish();
    if (values.cols() != alphabet.size()) throw ConfigError(ctx + ".values needs one column per symbol");
    return FunctionClass(std::move(names), std::move(values));
  }
  throw ConfigError(ctx + ".type must be thresholds, identity or table");
}

void run_empirical(Fields& root, Context& ctx) {
  const TimeSeriesModel ts = parse_time_series(root.at("time_series"));
  const Eigen::VectorXd& alphabet = ts.alphabet().values();
  std::map<std::string, FunctionClass> classes;
  const json& cj = root.at("classes");
  if (!cj.is_object() || cj.empty()) throw ConfigError("classes must be a non-empty object");
  for (const auto& item : cj.items())
    classes.emplace(item.key(), parse_class(item.value(), alphabet, "classes." + item.key()));
  auto cls = [&](const std::string& name) -> const FunctionClass& {
    const auto it = classes.find(name);
    if (it == classes.end()) throw ConfigError("unknown class '" + name + "'");
    return it->second;
  };

  struct Uniform {
    std::string name, cls;
    std::vector<Index> n;
    std::vector<double> u;
    Index cap;
    double slope_limit;
  };
  struct Tail {
    std::string name, cls;
    Index member, n;
    std::vector<std::pair<double, double>> grid;
    Sided sided;
  };
  std::vector<Uniform> uniform;
  std::vector<Tail> tails;
  if (const json* u = root.find("uniform")) {
    if (!u->is_array()) throw ConfigError("uniform must be an array");
    for (std::size_t i = 0; i < u->size(); ++i) {
      Fields f((*u)[i], "uniform[" + std::to_string(i) + "]");
      Uniform c;
      c.name = f.get_or<std::string>("name", "uniform" + std::to_string(i));
      c.cls = f.get<std::string>("class");
      c.n = to_sizes(f.at("n"), f.sub("n"));
      c.u = to_grid(f.at("u_grid"), f.sub("u_grid"));
      c.cap = static_cast<Index>(f.get_or<long long>("exact_cap", kDefaultExactCap));
      c.slope_limit = f.get_or<double>("slope_limit", -0.4);
      f.finish();
      if (c.cap < 1 || c.cap > 16) throw ConfigError(f.sub("exact_cap") + " must lie in [1, 16]");
      cls(c.cls);
      uniform.push_back(std::move(c));
    }
  }
  if (const json* t = root.find("tail")) {
    if (!t->is_array()) throw ConfigError("tail must be an array");
    for (std::size_t i = 0; i < t->size(); ++i) {
      Fields f((*t)[i], "tail[" + std::to_string(i) + "]");
      Tail c;
      c.name = f.get_or<std::string>("name", "tail" + std::to_string(i));
      c.cls = f.get<std::string>("class");
      c.member = static_cast<Index>(f.get_or<long long>("member", 0));
      c.n = static_cast<Index>(f.get<long long>("n"));
      const auto xs = to_grid(f.at("x"), f.sub("x"));
      const auto y2s = to_grid(f.at("y2"), f.sub("y2"));
      for (double x : xs)
        for (double y2 : y2s) c.grid.emplace_back(x, y2);
      c.sided = parse_sided(f.get_or<std::string>("sided", "two"), f.sub("sided"));
      f.finish();
      if (c.member < 0 || c.member >= cls(c.cls).size()) throw ConfigError(f.sub("member") + " out of range");
      if (c.n < 0) throw ConfigError(f.sub("n") + " must be >= 0");
      tails.push_back(std::move(c));
    }
  }
  root.finish();
  if (uniform.empty() && tails.empty()) throw ConfigError("empirical config needs 'uniform' or 'tail' cases");

  std::size_t case_index = 0;
  for (const auto& c : uniform) {
    for (Index n : c.n) {
      UniformOptions opt;
      opt.replicates = ctx.replicates;
      opt.seed = case_seed(ctx.master_seed, case_index++);
      opt.workers = ctx.workers;
      opt.exact_cap = c.cap;
      opt.slope_limit = c.slope_limit;
      const auto rep = verify_theorem4(cls(c.cls), ts, n, c.u, opt);
      auto r = row(c.name);
      r["check"] = "uniform";
      r["class"] = c.cls;
      r["n"] = n;
      r["k_common"] = rep.k_common;
      r["conditioned"] = rep.conditioned;
      r["gamma1"] = rep.gamma1.value;
      r["gamma1_exact"] = rep.gamma1.exact;
      r["gamma2"] = rep.gamma2.value;
      r["gamma2_exact"] = rep.gamma2.exact;
      r["scale"] = rep.scale;
      r["scaling_error"] = rep.scaling_error;
      r["scaling_ok"] = rep.scaling_ok;
      r["c"] = rep.tail.c;
      r["slope"] = rep.tail.slope;
      r["slope_points"] = rep.tail.slope_points;
      r["replicates"] = rep.replicates;
      r["d1"] = matrix_json(rep.d1);
      r["d1_raw"] = matrix_json(rep.d1_raw);
      r["d2"] = matrix_json(rep.d2);
      r["pass"] = rep.pass;
      ctx.rows.push_back(std::move(r));
      push_tail(ctx, c.name, rep.tail, n);
    }
  }
  for (const auto& c : tails) {
    const std::uint64_t cs = case_seed(ctx.master_seed, case_index++);
    const Eigen::VectorXd psi = cls(c.cls).member(c.member);
    for (const auto& [x, y2] : c.grid) {
      const auto t = verify_theorem3(psi, ts, c.n, x, y2, ctx.replicates, cs, c.sided, ctx.workers);
      auto r = row(c.name);
      r["check"] = "tail";
      r["class"] = c.cls;
      r["member"] = cls(c.cls).names()[static_cast<std::size_t>(c.member)];
      r["n"] = c.n;
      r["sided"] = to_string(c.sided);
      r["x"] = t.x;
      r["y2"] = t.y2;
      r["k"] = t.k;
      r["hits"] = t.hits;
      r["replicates"] = t.replicates;
      r["empirical"] = t.empirical;
      r["cp99"] = t.cp99_upper;
      r["bound"] = t.bound;
      r["union_bound"] = t.union_bound;
      r["union_pass"] = t.union_pass;
      r["exact_zero"] = t.exact_zero;
      r["conditioned"] = t.conditioned;
      r["pass"] = t.pass;
      ctx.rows.push_back(std::move(r));
    }
  }
}

ParametricFamily parse_family(const json& spec) {
  Fields f(spec, "family");
  const auto type = f.get<std::string>("type");
  if (type == "bernoulli_grid") {
    const double lo = f.get<double>("lo"), hi = f.get<double>("hi"), step = f.get<double>("step");
    const double t0 = f.get<double>("theta0");
    f.finish();
    return ParametricFamily::bernoulli_grid(lo, hi, step, t0);
  }
  if (type == "categorical_tilt") {
    auto base = to_vector(f.at("base"), f.sub("base"));
    auto tilts = to_vector(f.at("tilts"), f.sub("tilts"));
    const double t0 = f.get_or<double>("theta0", 0.0);
    f.finish();
    return ParametricFamily::categorical_tilt(base, tilts, t0);
  }
  if (type == "table") {
    auto support = to_vector(f.at("support"), f.sub("support"));
    auto theta = to_vector(f.at("theta"), f.sub("theta"));
    auto dens = to_matrix(f.at("densities"), f.sub("densities"));
    const auto t0 = f.get<long long>("theta0_index");
    f.finish();
    return ParametricFamily(std::move(support), std::move(theta), std::move(dens), static_cast<Index>(t0));
  }
  throw ConfigError("family.type must be bernoulli_grid, categorical_tilt or table");
}

void run_mle(Fields& root, Context& ctx) {
  const ParametricFamily family = parse_family(root.at("family"));
  const auto n_grid = to_sizes(root.at("n_grid"), "n_grid");
  const auto u_grid = to_grid(root.at("u_grid"), "u_grid");
  MleOptions opt;
  opt.exact_cap = static_cast<Index>(root.get_or<long long>("exact_cap", kDefaultExactCap));
  opt.slope_tolerance = root.get_or<double>("slope_tolerance", 0.3);
  root.finish();
  if (opt.exact_cap < 1 || opt.exact_cap > 16) throw ConfigError("exact_cap must lie in [1, 16]");
  opt.replicates = ctx.replicates;
  opt.seed = case_seed(ctx.master_seed, 0);
  opt.workers = ctx.workers;
  const auto rep = verify_theorem5(family, n_grid, u_grid, opt);
  for (const auto& m : rep.rows) {
    auto r = row("n=" + std::to_string(m.n));
    r["check"] = "rate";
    r["n"] = m.n;
    r["median_h2"] = m.median;
    r["mean_h2"] = m.mean;
    r["q90_h2"] = m.q90;
    r["q99_h2"] = m.q99;
    r["proof_violations"] = m.proof_violations;
    r["replicates"] = rep.replicates;
    r["pass"] = m.proof_violations == 0;
    ctx.rows.push_back(std::move(r));
  }
  auto r = row("fit");
  r["check"] = "fit";
  r["thetas"] = family.size();
  r["k"] = rep.k;
  r["conditioned"] = rep.conditioned;
  r["gamma1"] = rep.gamma1.value;
  r["gamma1_exact"] = rep.gamma1.exact;
  r["gamma2"] = rep.gamma2.value;
  r["gamma2_exact"] = rep.gamma2.exact;
  r["c"] = rep.c;
  r["median_nonincreasing"] = rep.median_nonincreasing;
  r["slope"] = rep.slope;
  r["slope_points"] = rep.slope_points;
  r["slope_ok"] = rep.slope_ok;
  r["pass"] = rep.pass;
  ctx.rows.push_back(std::move(r));
  for (const auto& p : rep.tail) {
    ojson t;
    t["case"] = "fit";
    t["n"] = p.n;
    t["u"] = p.u;
    t["hits"] = p.hits;
    t["empirical"] = p.empirical;
    t["cp99"] = p.cp99_upper;
    t["bound"] = p.bound;
    ctx.tail.push_back(std::move(t));
  }
}

std::size_t default_replicates(const std::string& kind) {
  if (kind == "bernstein" || kind == "martingale") return 100000;
  if (kind == "simulate" || kind == "gamma") return 1;
  return 10000;
}

std::string csv_cell(const ojson& v) {
  if (v.is_null()) return "";
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char ch : s) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
    return q + "\"";
  }
  return v.dump();
}

std::string to_csv(const std::vector<ojson>& rows, const std::set<std::string>& skip) {
  std::vector<std::string> columns;
  std::set<std::string> seen;
  for (const auto& r : rows)
    for (const auto& item : r.items())
      if (!item.value().is_structured() && !skip.count(item.key()) && seen.insert(item.key()).second)
        columns.push_back(item.key());
  std::ostringstream out;
  for (std::size_t i = 0; i < columns.size(); ++i) out << (i ? "," : "") << columns[i];
  out << '\n';
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < columns.size(); ++i) {
      if (i) out << ',';
      if (r.contains(columns[i])) out << csv_cell(r.at(columns[i]));
    }
    out << '\n';
  }
  return out.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

}  // namespace

const std::vector<std::string>& experiment_kinds() {
  static const std::vector<std::string> kinds{"simulate", "bernstein", "martingale", "gamma",
                                              "chaining", "empirical", "mle"};
  return kinds;
}

std::uint64_t case_seed(std::uint64_t master_seed, std::uint64_t index) {
  return derive_seed(mix64(master_seed), index);
}

nlohmann::json load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("malformed config " + path.string() + ": " + e.what());
  }
}

RunResult run_experiment(const std::string& kind, const nlohmann::json& config, const RunOptions& options) {
  const auto& kinds = experiment_kinds();
  if (std::find(kinds.begin(), kinds.end(), kind) == kinds.end()) throw ConfigError("unknown command '" + kind + "'");
  const auto started = std::chrono::steady_clock::now();
  Fields root(config, "config");
  if (const json* k = root.find("kind"))
    if (!k->is_string() || k->get<std::string>() != kind)
      throw ConfigError("config kind '" + k->dump() + "' does not match command '" + kind + "'");

  Context ctx;
  ctx.master_seed = root.get_or<std::uint64_t>("master_seed", 0);
  ctx.replicates = root.get_or<std::size_t>("replicates", default_replicates(kind));
  ctx.workers = root.get_or<unsigned>("workers", 1);
  if (options.seed) ctx.master_seed = *options.seed;
  if (options.replicates) ctx.replicates = *options.replicates;
  if (options.workers) ctx.workers = *options.workers;
  if (ctx.replicates < 1) throw ConfigError("replicates must be >= 1");
  if (ctx.workers < 1) throw ConfigError("workers must be >= 1");

  try {
    if (kind == "simulate") run_simulate(root, ctx);
    else if (kind == "bernstein") run_bernstein(root, ctx);
    else if (kind == "martingale") run_martingale(root, ctx);
    else if (kind == "gamma") run_gamma(root, ctx);
    else if (kind == "chaining") run_chaining(root, ctx);
    else if (kind == "empirical") run_empirical(root, ctx);
    else run_mle(root, ctx);
  } catch (const DegenerateError& e) {
    throw ConfigError(e.what());
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }

  RunResult result;
  json echo = config;
  echo.erase("workers");
  ojson header;
  header["type"] = "header";
  header["version"] = kVersion;
  header["kind"] = kind;
  header["master_seed"] = ctx.master_seed;
  header["replicates"] = ctx.replicates;
  if (!ctx.notes.empty()) header["notes"] = ctx.notes;
  header["config"] = ojson::parse(echo.dump());

  std::size_t failed = 0;
  for (const auto& r : ctx.rows)
    if (!r.value("pass", false)) ++failed;
  result.pass = failed == 0 && !ctx.rows.empty();
  ojson summary;
  summary["type"] = "summary";
  summary["pass"] = result.pass;
  summary["rows"] = ctx.rows.size();
  summary["failed"] = failed;

  std::string report = header.dump() + "\n";
  for (const auto& r : ctx.rows) report += r.dump() + "\n";
  report += summary.dump() + "\n";
  result.report = std::move(report);
  result.summary_csv = to_csv(ctx.rows, {"type"});
  if (!ctx.tail.empty()) result.tail_csv = to_csv(ctx.tail, {});
  result.rows = std::move(ctx.rows);
  result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

  if (!options.out.empty()) {
    std::filesystem::create_directories(options.out);
    write_file(options.out / "report.jsonl", result.report);
    write_file(options.out / "summary.csv", result.summary_csv);
    if (!result.tail_csv.empty()) write_file(options.out / "tail_curve.csv", result.tail_csv);
    for (const auto& [name, content] : ctx.files) write_file(options.out / name, content);
    json info = {{"wall_seconds", result.wall_seconds}, {"workers", ctx.workers}, {"version", kVersion}};
    write_file(options.out / "run_info.json", info.dump(2) + "\n");
  }
  return result;
}

}  // namespace mpp
