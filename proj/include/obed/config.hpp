#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "obed/experiments.hpp"
#include "obed/models.hpp"
#include "obed/runner.hpp"
#include "obed/utility.hpp"

namespace obed {

class config_error : public std::runtime_error {
 public:
  explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

using AnyExperiment = std::variant<ExperimentSpec<Lorentzian>, ExperimentSpec<DecayingSinusoid>>;

struct OutputConfig {
  std::string directory = "obed_out";
  bool csv = true;
  bool json = true;
};

struct ResolvedConfig {
  AnyExperiment experiment;
  std::size_t n_runs = 100;
  bool n_samples_explicit = false;  // tracks whether utility.n_samples was user-set
  OutputConfig output;
  ReuseDemoConfig reuse_demo;
};

/// Command-line overrides; every field beats the corresponding config entry.
struct CliOverrides {
  std::optional<std::string> preset;
  std::optional<std::string> utility;  // algorithm name, optionally name@N_s
  std::optional<std::size_t> n_samples;
  std::optional<std::size_t> n_epochs;
  std::optional<std::size_t> n_runs;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  bool no_reuse = false;
  bool snapshot = false;
};

struct AlgorithmSpec {
  UtilityAlgorithm algorithm;
  std::optional<std::size_t> n_samples;
  std::string label;
};

inline UtilityAlgorithm parse_algorithm_name(const std::string& name) {
  if (name == "kld") return UtilityAlgorithm::kld;
  if (name == "variance" || name == "var") return UtilityAlgorithm::variance;
  if (name == "pseudo") return UtilityAlgorithm::pseudo;
  if (name == "maxmin" || name == "max-min") return UtilityAlgorithm::maxmin;
  if (name == "random") return UtilityAlgorithm::random;
  throw config_error("utility.algorithm: unknown algorithm '" + name +
                     "' (expected kld|variance|pseudo|maxmin|random)");
}

/// Parses "name" or "name@N" (e.g. maxmin@2).
inline AlgorithmSpec parse_algorithm_spec(const std::string& text) {
  AlgorithmSpec spec;
  spec.label = text;
  const std::size_t at = text.find('@');
  const std::string name = at == std::string::npos ? text : text.substr(0, at);
  spec.algorithm = parse_algorithm_name(name);
  if (at != std::string::npos) {
    const std::string num = text.substr(at + 1);
    try {
      const long long v = std::stoll(num);
      if (v < 2) throw config_error("algorithm '" + text + "': sample count must be >= 2");
      spec.n_samples = static_cast<std::size_t>(v);
    } catch (const config_error&) {
      throw;
    } catch (...) {
      throw config_error("algorithm '" + text + "': bad sample count '" + num + "'");
    }
  }
  return spec;
}

inline EntropyEstimatorKind parse_estimator_name(const std::string& name) {
  if (name == "ebrahimi") return EntropyEstimatorKind::ebrahimi;
  if (name == "vasicek") return EntropyEstimatorKind::vasicek;
  throw config_error("utility.estimator: unknown estimator '" + name +
                     "' (expected ebrahimi|vasicek)");
}

namespace detail {

inline void require_keys(const nlohmann::json& obj, const std::string& path,
                         std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw config_error(path + ": expected an object");
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) {
      if (key == a) {
        ok = true;
        break;
      }
    }
    if (!ok) throw config_error(path + ": unknown key '" + key + "'");
  }
}

template <class T>
T get_as(const nlohmann::json& obj, const std::string& path, const char* key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw config_error(path + "." + key + ": wrong type");
  }
}

inline double get_positive(const nlohmann::json& obj, const std::string& path, const char* key,
                           double fallback) {
  const double v = get_as<double>(obj, path, key, fallback);
  if (!(v > 0.0)) throw config_error(path + "." + std::string(key) + ": must be > 0");
  return v;
}

inline DesignSpace parse_designs(const nlohmann::json& j, const std::string& path) {
  require_keys(j, path, {"min", "max", "count"});
  if (!j.contains("min") || !j.contains("max") || !j.contains("count"))
    throw config_error(path + ": needs min, max and count");
  const double lo = j.at("min").get<double>();
  const double hi = j.at("max").get<double>();
  const auto count = j.at("count").get<std::int64_t>();
  if (count < 1) throw config_error(path + ".count: must be >= 1");
  try {
    return DesignSpace::uniform_grid(lo, hi, static_cast<std::size_t>(count));
  } catch (const std::invalid_argument& e) {
    throw config_error(path + ": " + e.what());
  }
}

inline PriorSpec parse_prior(const nlohmann::json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) throw config_error(path + ": expected a nonempty array");
  PriorSpec prior;
  std::size_t i = 0;
  for (const nlohmann::json& dim : j) {
    const std::string dpath = path + "[" + std::to_string(i++) + "]";
    require_keys(dim, dpath, {"mean", "std", "lower"});
    PriorDim p;
    p.mean = get_as<double>(dim, dpath, "mean", 0.0);
    p.stddev = get_positive(dim, dpath, "std", 1.0);
    if (dim.contains("lower")) p.lower = dim.at("lower").get<double>();
    prior.dims.push_back(p);
  }
  return prior;
}

template <MeasurementModel M>
void apply_experiment_overrides(ExperimentSpec<M>& spec, const nlohmann::json& exp) {
  if (exp.contains("noise")) {
    require_keys(exp.at("noise"), "experiment.noise", {"sigma_eta"});
    spec.noise = NoiseSpec(get_positive(exp.at("noise"), "experiment.noise", "sigma_eta",
                                        spec.noise.sigma_eta));
  }
  if (exp.contains("designs")) spec.designs = parse_designs(exp.at("designs"), "experiment.designs");
  if (exp.contains("prior")) spec.prior = parse_prior(exp.at("prior"), "experiment.prior");
  if (exp.contains("true_params")) {
    const auto tp = exp.at("true_params").get<std::vector<double>>();
    if (tp.size() != spec.model.param_dim())
      throw config_error("experiment.true_params: expected " +
                         std::to_string(spec.model.param_dim()) + " values");
    spec.true_params = tp;
  }
}

}  // namespace detail

/// Builds the experiment from the config's experiment section: a preset
/// name, inline model constants, or a preset refined by overrides.
inline AnyExperiment resolve_experiment(const nlohmann::json& exp) {
  detail::require_keys(exp, "experiment",
                       {"preset", "model", "noise", "designs", "prior", "true_params"});

  std::string kind;
  if (exp.contains("preset")) {
    kind = exp.at("preset").get<std::string>();
    if (kind != "lorentzian" && kind != "ramsey")
      throw config_error("experiment.preset: unknown preset '" + kind +
                         "' (expected lorentzian|ramsey)");
  }
  if (exp.contains("model")) {
    const nlohmann::json& m = exp.at("model");
    detail::require_keys(m, "experiment.model",
                         {"type", "background", "amplitude", "half_width"});
    const std::string type = detail::get_as<std::string>(m, "experiment.model", "type", "");
    if (type != "lorentzian" && type != "ramsey")
      throw config_error("experiment.model.type: expected lorentzian|ramsey");
    if (!kind.empty() && kind != type)
      throw config_error("experiment.model.type: conflicts with experiment.preset");
    kind = type;
  }
  if (kind.empty())
    throw config_error("experiment: needs a 'preset' name or an inline 'model'");

  if (kind == "lorentzian") {
    ExperimentSpec<Lorentzian> spec = lorentzian_experiment();
    if (exp.contains("model")) {
      const nlohmann::json& m = exp.at("model");
      const double b = detail::get_as<double>(m, "experiment.model", "background",
                                              spec.model.background());
      const double a = detail::get_as<double>(m, "experiment.model", "amplitude",
                                              spec.model.amplitude());
      const double w = detail::get_positive(m, "experiment.model", "half_width",
                                            spec.model.half_width());
      spec.model = Lorentzian(b, a, w);
    }
    detail::apply_experiment_overrides(spec, exp);
    return spec;
  }
  ExperimentSpec<DecayingSinusoid> spec = ramsey_experiment();
  if (exp.contains("model")) {
    const nlohmann::json& m = exp.at("model");
    if (m.contains("background") || m.contains("amplitude") || m.contains("half_width"))
      throw config_error("experiment.model: the ramsey model takes no constants");
  }
  detail::apply_experiment_overrides(spec, exp);
  return spec;
}

/// Parses and validates a full config document. Unknown keys anywhere are
/// rejected; physical values are validated on load.
inline ResolvedConfig resolve_config(const nlohmann::json& doc) {
  detail::require_keys(doc, "config", {"experiment", "filter", "utility", "run", "output", "fig1"});
  if (!doc.contains("experiment")) throw config_error("config: missing 'experiment' section");

  ResolvedConfig rc{resolve_experiment(doc.at("experiment"))};

  auto with_spec = [&](auto&& fn) { std::visit(fn, rc.experiment); };

  if (doc.contains("filter")) {
    const nlohmann::json& f = doc.at("filter");
    detail::require_keys(f, "filter", {"n_particles", "resample_ratio", "alpha"});
    const auto np = detail::get_as<std::int64_t>(f, "filter", "n_particles", 5000);
    if (np < 2) throw config_error("filter.n_particles: must be >= 2");
    const double ratio = detail::get_as<double>(f, "filter", "resample_ratio", 0.5);
    if (!(ratio > 0.0) || ratio > 1.0)
      throw config_error("filter.resample_ratio: must be in (0, 1]");
    const double alpha = detail::get_positive(f, "filter", "alpha", 0.01);
    with_spec([&](auto& spec) {
      spec.n_particles = static_cast<std::size_t>(np);
      spec.filter.resample_threshold_ratio = ratio;
      spec.filter.jitter_alpha = alpha;
    });
  }

  if (doc.contains("utility")) {
    const nlohmann::json& u = doc.at("utility");
    detail::require_keys(u, "utility", {"algorithm", "n_samples", "estimator", "m", "reuse"});
    UtilityConfig cfg;
    if (u.contains("algorithm"))
      cfg.algorithm = parse_algorithm_name(u.at("algorithm").get<std::string>());
    if (u.contains("estimator"))
      cfg.estimator.kind = parse_estimator_name(u.at("estimator").get<std::string>());
    if (u.contains("m")) {
      const auto m = u.at("m").get<std::int64_t>();
      if (m < 0) throw config_error("utility.m: must be >= 0 (0 = automatic)");
      cfg.estimator.m = static_cast<int>(m);
    }
    cfg.reuse_samples = detail::get_as<bool>(u, "utility", "reuse", true);
    if (u.contains("n_samples")) {
      const auto ns = u.at("n_samples").get<std::int64_t>();
      if (ns < 2) throw config_error("utility.n_samples: must be >= 2");
      cfg.n_samples = static_cast<std::size_t>(ns);
      rc.n_samples_explicit = true;
    }
    with_spec([&](auto& spec) {
      const std::size_t keep_ns = spec.utility.n_samples;
      spec.utility = cfg;
      if (!rc.n_samples_explicit) spec.utility.n_samples = keep_ns;
    });
  }

  if (doc.contains("run")) {
    const nlohmann::json& r = doc.at("run");
    detail::require_keys(r, "run", {"n_epochs", "n_runs", "base_seed"});
    if (r.contains("n_epochs")) {
      const auto e = r.at("n_epochs").get<std::int64_t>();
      if (e < 1) throw config_error("run.n_epochs: must be >= 1");
      with_spec([&](auto& spec) { spec.n_epochs = static_cast<std::size_t>(e); });
    }
    if (r.contains("n_runs")) {
      const auto n = r.at("n_runs").get<std::int64_t>();
      if (n < 1) throw config_error("run.n_runs: must be >= 1");
      rc.n_runs = static_cast<std::size_t>(n);
    }
    if (r.contains("base_seed")) {
      const auto s = r.at("base_seed").get<std::uint64_t>();
      with_spec([&](auto& spec) { spec.seed = s; });
    }
  }

  if (doc.contains("output")) {
    const nlohmann::json& o = doc.at("output");
    detail::require_keys(o, "output", {"directory", "formats"});
    rc.output.directory = detail::get_as<std::string>(o, "output", "directory", rc.output.directory);
    if (o.contains("formats")) {
      const auto fmts = o.at("formats").get<std::vector<std::string>>();
      rc.output.csv = false;
      rc.output.json = false;
      for (const std::string& f : fmts) {
        if (f == "csv") {
          rc.output.csv = true;
        } else if (f == "json") {
          rc.output.json = true;
        } else {
          throw config_error("output.formats: unknown format '" + f + "'");
        }
      }
    }
  }

  if (doc.contains("fig1")) {
    const nlohmann::json& f = doc.at("fig1");
    detail::require_keys(f, "fig1",
                         {"center_mean", "center_std", "sigma_eta", "n_samples", "grid_lo",
                          "grid_hi", "n_designs"});
    rc.reuse_demo.center_mean = detail::get_as<double>(f, "fig1", "center_mean", 2.6);
    rc.reuse_demo.center_std = detail::get_positive(f, "fig1", "center_std", 0.1);
    rc.reuse_demo.sigma_eta = detail::get_positive(f, "fig1", "sigma_eta", 0.1);
    const auto ns = detail::get_as<std::int64_t>(f, "fig1", "n_samples", 100);
    if (ns < 4) throw config_error("fig1.n_samples: must be >= 4");
    rc.reuse_demo.n_samples = static_cast<std::size_t>(ns);
    rc.reuse_demo.grid_lo = detail::get_as<double>(f, "fig1", "grid_lo", 2.0);
    rc.reuse_demo.grid_hi = detail::get_as<double>(f, "fig1", "grid_hi", 4.0);
    const auto nd = detail::get_as<std::int64_t>(f, "fig1", "n_designs", 200);
    if (nd < 2) throw config_error("fig1.n_designs: must be >= 2");
    rc.reuse_demo.n_designs = static_cast<std::size_t>(nd);
  }

  return rc;
}

inline ResolvedConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot read config file: " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw config_error("config parse error in " + path + ": " + e.what());
  }
  return resolve_config(doc);
}

inline ResolvedConfig default_config() {
  return ResolvedConfig{lorentzian_experiment()};
}

/// Applies command-line overrides on top of a resolved config; flags win.
inline void apply_overrides(ResolvedConfig& rc, const CliOverrides& ov) {
  if (ov.preset) {
    if (*ov.preset == "lorentzian") {
      ExperimentSpec<Lorentzian> fresh = lorentzian_experiment();
      std::visit([&](auto& old) {
        fresh.utility = old.utility;
        fresh.n_epochs = old.n_epochs;
        fresh.seed = old.seed;
      }, rc.experiment);
      rc.experiment = std::move(fresh);
    } else if (*ov.preset == "ramsey") {
      ExperimentSpec<DecayingSinusoid> fresh = ramsey_experiment();
      std::visit([&](auto& old) {
        fresh.utility = old.utility;
        fresh.n_epochs = old.n_epochs;
        fresh.seed = old.seed;
      }, rc.experiment);
      rc.experiment = std::move(fresh);
    } else {
      throw config_error("--preset: expected lorentzian|ramsey, got '" + *ov.preset + "'");
    }
  }
  std::visit([&](auto& spec) {
    if (ov.utility) {
      const AlgorithmSpec alg = parse_algorithm_spec(*ov.utility);
      spec.utility.algorithm = alg.algorithm;
      if (alg.n_samples) {
        spec.utility.n_samples = *alg.n_samples;
        rc.n_samples_explicit = true;
      }
    }
    if (ov.n_samples) {
      if (*ov.n_samples < 2) throw config_error("--n-samples: must be >= 2");
      spec.utility.n_samples = *ov.n_samples;
      rc.n_samples_explicit = true;
      rc.reuse_demo.n_samples = *ov.n_samples;
    }
    if (ov.n_epochs) {
      if (*ov.n_epochs < 1) throw config_error("--n-epochs: must be >= 1");
      spec.n_epochs = *ov.n_epochs;
    }
    if (ov.seed) spec.seed = *ov.seed;
    if (ov.no_reuse) spec.utility.reuse_samples = false;
    // default sample count: 1000 in general, 2 for max-min
    if (!rc.n_samples_explicit) {
      spec.utility.n_samples = spec.utility.algorithm == UtilityAlgorithm::maxmin ? 2 : 1000;
    }
  }, rc.experiment);
  if (ov.n_runs) {
    if (*ov.n_runs < 1) throw config_error("--n-runs: must be >= 1");
    rc.n_runs = *ov.n_runs;
  }
  if (ov.out_dir) rc.output.directory = *ov.out_dir;
}

}  // namespace obed
