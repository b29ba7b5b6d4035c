#include "hmbayes/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "hmbayes/error.hpp"
#include "hmbayes/random.hpp"

namespace hmb {

using nlohmann::json;

namespace {

/// Reads the keys of one JSON object and rejects the ones nobody asked for.
class Section {
public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) {
      throw ConfigError(where() + " must be an object");
    }
  }

  template <class T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) {
      return;
    }
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where(key) + ": " + e.what());
    }
  }

  // Same as get, for values stored in seconds but written in hours.
  void get_hours(const std::string& key, double& seconds) {
    double hours = seconds / kSecondsPerHour;
    get(key, hours);
    seconds = hours * kSecondsPerHour;
  }

  template <class F>
  void child(const std::string& key, F&& body) {
    seen_.insert(key);
    if (!j_.contains(key)) {
      return;
    }
    Section s(j_.at(key), where(key));
    body(s);
    s.finish();
  }

  std::string where(const std::string& key = {}) const {
    if (key.empty()) {
      return path_.empty() ? "config" : path_;
    }
    return path_.empty() ? key : path_ + "." + key;
  }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) {
        throw ConfigError("unknown config key '" + where(item.key()) + "'");
      }
    }
  }

private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_state(Section& s, LocalState& state) {
  s.get("theta_c", state.theta);
  s.get("phi", state.phi);
}

json state_json(const LocalState& s) { return {{"theta_c", s.theta}, {"phi", s.phi}}; }

} // namespace

void RunConfig::validate() const {
  experiment.validate();
  if (truncation.max_order < 1 || truncation.max_order > experiment.build_mesh().num_elements()) {
    throw ConfigError("truncation.max_order must lie in [1, number of elements]");
  }
  if (truncation.realizations < 1) {
    throw ConfigError("truncation.realizations must be at least 1");
  }
}

RunConfig preset_config(const std::string& name) {
  RunConfig c;
  c.preset = name;
  if (name == "paper-full") {
    return c;
  }
  if (name == "paper-desk") {
    c.experiment.kle_order = 3;
    c.experiment.mcmc.n_samples = 5000;
    c.experiment.mcmc.warmup = 1000;
    c.truncation.realizations = 20;
    return c;
  }
  throw ConfigError("unknown preset '" + name + "' (expected paper-full or paper-desk)");
}

void apply_json(RunConfig& config, const json& j) {
  ExperimentConfig& e = config.experiment;
  Section root(j, "");
  root.get("preset", config.preset);
  root.child("geometry", [&](Section& s) {
    s.get("width_m", e.geometry.width);
    s.get("height_m", e.geometry.height);
    s.get("nx", e.geometry.nx);
    s.get("ny", e.geometry.ny);
  });
  root.child("prior", [&](Section& s) {
    for (std::size_t k = 0; k < kNumMaterialParams; ++k) {
      s.child(std::string(kParamNames[k]), [&](Section& p) {
        p.get("mean", e.prior[k].mean);
        p.get("std", e.prior[k].stddev);
      });
    }
  });
  root.child("random_field", [&](Section& s) {
    s.get("l_x1_m", e.correlation.l_x1);
    s.get("l_x2_m", e.correlation.l_x2);
    s.get("kle_order", e.kle_order);
  });
  root.child("initial", [&](Section& s) { read_state(s, e.initial); });
  root.child("boundary", [&](Section& s) {
    s.child("exterior", [&](Section& b) { read_state(b, e.boundary.exterior); });
    s.child("interior", [&](Section& b) { read_state(b, e.boundary.interior); });
  });
  root.child("solver", [&](Section& s) {
    s.get_hours("dt_h", e.solver.dt);
    s.get_hours("t_end_h", e.solver.t_end);
    s.get("picard_tol", e.solver.picard_tol);
    s.get("picard_max", e.solver.picard_max);
  });
  root.child("observation", [&](Section& s) {
    std::vector<double> hours;
    for (double t : e.observation.times) {
      hours.push_back(t / kSecondsPerHour);
    }
    s.get("times_h", hours);
    e.observation.times.clear();
    for (double h : hours) {
      e.observation.times.push_back(h * kSecondsPerHour);
    }
    s.get("sigma_theta_c", e.observation.sigma_theta);
    s.get("sigma_phi", e.observation.sigma_phi);
    s.get("replicates", e.observation.replicates);
    s.get("cobs_regularization", e.observation.cobs_regularization);
    std::vector<std::array<double, 2>> sensors;
    for (const Point2& p : e.observation.sensors) {
      sensors.push_back({p.x1, p.x2});
    }
    s.get("sensors_m", sensors);
    e.observation.sensors.clear();
    for (const auto& p : sensors) {
      e.observation.sensors.push_back({p[0], p[1]});
    }
  });
  root.child("mcmc", [&](Section& s) {
    s.get("n_samples", e.mcmc.n_samples);
    s.get("warmup", e.mcmc.warmup);
    s.get("proposal_scale", e.mcmc.proposal_scale);
    s.get("burn_in_fraction", e.mcmc.burn_in_fraction);
    s.get("n_chains", e.mcmc.n_chains);
    s.get("progress_interval", e.mcmc.progress_interval);
    s.get("use_likelihood", e.mcmc.use_likelihood);
  });
  root.child("summary", [&](Section& s) {
    s.get("posterior_responses", e.summary.posterior_responses);
    s.get("prior_samples", e.summary.prior_samples);
    s.get_hours("envelope_interval_h", e.summary.envelope_interval);
    s.get("cut_x2_m", e.summary.cut_x2);
    s.get("cut_points", e.summary.cut_points);
  });
  root.child("truncation", [&](Section& s) {
    s.get("max_order", config.truncation.max_order);
    s.get("realizations", config.truncation.realizations);
    s.get("responses", config.truncation.responses);
  });
  root.child("seeds", [&](Section& s) {
    s.get("reference", e.seeds.reference);
    s.get("noise", e.seeds.noise);
    s.get("mcmc", e.seeds.mcmc);
    s.get("prior", e.seeds.prior);
    s.get("truncation", config.truncation.seed);
  });
  root.get("threads", e.threads);
  root.finish();
}

json to_json(const RunConfig& config) {
  const ExperimentConfig& e = config.experiment;
  json prior = json::object();
  for (std::size_t k = 0; k < kNumMaterialParams; ++k) {
    prior[std::string(kParamNames[k])] = {{"mean", e.prior[k].mean}, {"std", e.prior[k].stddev}};
  }
  std::vector<double> times_h;
  for (double t : e.observation.times) {
    times_h.push_back(t / kSecondsPerHour);
  }
  json sensors = json::array();
  for (const Point2& p : e.observation.sensors) {
    sensors.push_back({p.x1, p.x2});
  }
  return {
      {"preset", config.preset},
      {"geometry",
       {{"width_m", e.geometry.width},
        {"height_m", e.geometry.height},
        {"nx", e.geometry.nx},
        {"ny", e.geometry.ny}}},
      {"prior", prior},
      {"random_field",
       {{"l_x1_m", e.correlation.l_x1}, {"l_x2_m", e.correlation.l_x2}, {"kle_order", e.kle_order}}},
      {"initial", state_json(e.initial)},
      {"boundary",
       {{"exterior", state_json(e.boundary.exterior)},
        {"interior", state_json(e.boundary.interior)}}},
      {"solver",
       {{"dt_h", e.solver.dt / kSecondsPerHour},
        {"t_end_h", e.solver.t_end / kSecondsPerHour},
        {"picard_tol", e.solver.picard_tol},
        {"picard_max", e.solver.picard_max}}},
      {"observation",
       {{"times_h", times_h},
        {"sigma_theta_c", e.observation.sigma_theta},
        {"sigma_phi", e.observation.sigma_phi},
        {"replicates", e.observation.replicates},
        {"cobs_regularization", e.observation.cobs_regularization},
        {"sensors_m", sensors}}},
      {"mcmc",
       {{"n_samples", e.mcmc.n_samples},
        {"warmup", e.mcmc.warmup},
        {"proposal_scale", e.mcmc.proposal_scale},
        {"burn_in_fraction", e.mcmc.burn_in_fraction},
        {"n_chains", e.mcmc.n_chains},
        {"progress_interval", e.mcmc.progress_interval},
        {"use_likelihood", e.mcmc.use_likelihood}}},
      {"summary",
       {{"posterior_responses", e.summary.posterior_responses},
        {"prior_samples", e.summary.prior_samples},
        {"envelope_interval_h", e.summary.envelope_interval / kSecondsPerHour},
        {"cut_x2_m", e.summary.cut_x2},
        {"cut_points", e.summary.cut_points}}},
      {"truncation",
       {{"max_order", config.truncation.max_order},
        {"realizations", config.truncation.realizations},
        {"responses", config.truncation.responses}}},
      {"seeds",
       {{"reference", e.seeds.reference},
        {"noise", e.seeds.noise},
        {"mcmc", e.seeds.mcmc},
        {"prior", e.seeds.prior},
        {"truncation", config.truncation.seed}}},
      {"threads", e.threads},
  };
}

void reseed(RunConfig& config, std::uint64_t master) {
  SeedConfig& s = config.experiment.seeds;
  s.reference = derive_seed(master, 1);
  s.noise = derive_seed(master, 2);
  s.mcmc = derive_seed(master, 3);
  s.prior = derive_seed(master, 4);
  config.truncation.seed = derive_seed(master, 5);
}

RunConfig load_config(const std::optional<std::filesystem::path>& path,
                      const std::optional<std::string>& preset,
                      const std::optional<std::uint64_t>& seed) {
  RunConfig config = preset_config(preset.value_or("paper-full"));
  if (path) {
    std::ifstream in(*path);
    if (!in) {
      throw ConfigError("cannot open config file " + path->string());
    }
    json j;
    try {
      j = json::parse(in, nullptr, true, true);
    } catch (const json::parse_error& e) {
      throw ConfigError("malformed config file " + path->string() + ": " + e.what());
    }
    // A preset named in the file applies unless one was given explicitly.
    if (!preset && j.is_object() && j.contains("preset") && j["preset"].is_string()) {
      config = preset_config(j["preset"].get<std::string>());
    }
    const std::string chosen = config.preset;
    apply_json(config, j);
    config.preset = chosen;
  }
  if (seed) {
    reseed(config, *seed);
  }
  config.validate();
  return config;
}

} // namespace hmb
