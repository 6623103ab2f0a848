#include "sparsediff/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "sparsediff/rng.hpp"

namespace sparsediff::config {

using nlohmann::json;

namespace {

json grid_to_json(const GridSpec& g) {
  return {{"height", g.height},
          {"width", g.width},
          {"domain_length_x", g.domain_length_x},
          {"domain_length_y", g.domain_length_y},
          {"boundary", g.boundary == Boundary::kPeriodic ? "periodic"
                                                         : "no_slip_obstacle"}};
}

GridSpec grid_from_json(const json& j) {
  GridSpec g;
  j.at("height").get_to(g.height);
  j.at("width").get_to(g.width);
  j.at("domain_length_x").get_to(g.domain_length_x);
  j.at("domain_length_y").get_to(g.domain_length_y);
  std::string b = j.at("boundary").get<std::string>();
  if (b == "periodic")
    g.boundary = Boundary::kPeriodic;
  else if (b == "no_slip_obstacle")
    g.boundary = Boundary::kNoSlipObstacle;
  else
    throw ConfigError("unknown boundary: " + b);
  return g;
}

/// Every key in `input` must exist in `reference` at the same path.
void check_unknown(const json& input, const json& reference,
                   const std::string& path) {
  if (!input.is_object()) return;
  if (!reference.is_object())
    throw ConfigError("unexpected section at " + path);
  for (auto it = input.begin(); it != input.end(); ++it) {
    if (!reference.contains(it.key()))
      throw ConfigError("unknown config key: " +
                        (path.empty() ? it.key() : path + "." + it.key()));
    check_unknown(it.value(), reference.at(it.key()),
                  path.empty() ? it.key() : path + "." + it.key());
  }
}

// Default physical domain side length per system, used when the config does
// not set one explicitly. The reaction-diffusion and pattern-forming systems
// need domains large compared to their intrinsic length scales or the
// dynamics decay to a constant.
double default_domain_length(const std::string& system) {
  if (system == "lambda_omega") return 20.0;        // spiral-wave scale
  if (system == "swift_hohenberg") return 20.0 * M_PI;  // ~10 critical wavelengths
  if (system == "navier_stokes") return 40.0;  // slow viscous decay; forcing nonzero on 32/64-cell grids
  return 1.0;  // cylinder_flow (lattice units dominate)
}

}  // namespace

SystemParams ExperimentConfig::system_params() const {
  if (system == "lambda_omega") return lambda_omega;
  if (system == "navier_stokes") return navier_stokes;
  if (system == "swift_hohenberg") return swift_hohenberg;
  if (system == "cylinder_flow") return cylinder_flow;
  throw ConfigError("unknown system: " + system);
}

void ExperimentConfig::validate() const {
  system_params();  // throws on a bad system name
  grid.validate();
  if (lookback < 1) throw ConfigError("lookback must be >= 1");
  if (data.n_train < 1 || data.n_eval < 1 || data.n_frames <= lookback)
    throw ConfigError("dataset sizes must be positive, n_frames > lookback");
  if (codebook.size < 1 || codebook.latent_dim < 1)
    throw ConfigError("codebook sizes must be positive");
  if (diffusion.n_steps < 2) throw ConfigError("diffusion.n_steps must be >= 2");
  if (diffusion.guidance_mode != "x0-estimate" &&
      diffusion.guidance_mode != "noised-target")
    throw ConfigError("unknown guidance_mode: " + diffusion.guidance_mode);
  if (adaptation.mode != "adaptive" && adaptation.mode != "fixed_interval" &&
      adaptation.mode != "never")
    throw ConfigError("unknown adaptation mode: " + adaptation.mode);
  if (adaptation.tau < -1 || adaptation.tau > 1)
    throw ConfigError("adaptation.tau outside [-1, 1]");
  if (adaptation.interval < 1) throw ConfigError("adaptation.interval < 1");
  if (eval.horizon < 1) throw ConfigError("eval.horizon < 1");
}

json to_json(const ExperimentConfig& c) {
  json j;
  j["system"] = c.system;
  j["grid"] = grid_to_json(c.grid);
  j["lambda_omega"] = {{"mu_u", c.lambda_omega.mu_u},
                       {"mu_v", c.lambda_omega.mu_v},
                       {"beta", c.lambda_omega.beta_lo}};
  j["navier_stokes"] = {{"nu", c.navier_stokes.nu},
                        {"forcing_amplitude", c.navier_stokes.forcing_amplitude},
                        {"phase_shift", c.navier_stokes.phase_shift}};
  j["swift_hohenberg"] = {{"r", c.swift_hohenberg.r}, {"g", c.swift_hohenberg.g}};
  j["cylinder_flow"] = {{"re", c.cylinder_flow.re},
                        {"rho", c.cylinder_flow.rho},
                        {"u_m", c.cylinder_flow.u_m},
                        {"d", c.cylinder_flow.d},
                        {"warmup_steps", c.cylinder_flow.warmup_steps},
                        {"t_resample", c.cylinder_flow.t_resample},
                        {"obstacle", c.cylinder_flow.obstacle},
                        {"lattice_ny", c.cylinder_flow.lattice_ny}};
  j["data"] = {{"n_train", c.data.n_train},
               {"n_eval", c.data.n_eval},
               {"n_frames", c.data.n_frames},
               {"solver_dt", c.data.solver_dt},
               {"store_every", c.data.store_every},
               {"ic_max_mode", c.data.ic_max_mode}};
  j["lookback"] = c.lookback;
  j["codebook"] = {{"size", c.codebook.size},
                   {"latent_dim", c.codebook.latent_dim},
                   {"hidden_dim", c.codebook.hidden_dim},
                   {"beta_commit", c.codebook.beta_commit},
                   {"lr", c.codebook.lr},
                   {"batch_pixels", c.codebook.batch_pixels},
                   {"steps", c.codebook.steps},
                   {"reseed_every", c.codebook.reseed_every}};
  j["predictor"] = {{"feature_dim", c.predictor.feature_dim},
                    {"heads", c.predictor.heads},
                    {"d_k", c.predictor.d_k},
                    {"hidden", c.predictor.hidden},
                    {"ode_time", c.predictor.ode_time},
                    {"substeps", c.predictor.substeps},
                    {"freeze_attention", c.predictor.freeze_attention},
                    {"use_edge_weights", c.predictor.use_edge_weights},
                    {"sqrt_dk_scaling", c.predictor.sqrt_dk_scaling},
                    {"lr", c.predictor.lr},
                    {"steps", c.predictor.steps},
                    {"batch", c.predictor.batch}};
  j["diffusion"] = {{"n_steps", c.diffusion.n_steps},
                    {"beta_start", c.diffusion.beta_start},
                    {"beta_end", c.diffusion.beta_end},
                    {"base_channels", c.diffusion.base_channels},
                    {"ch_mults", c.diffusion.ch_mults},
                    {"blocks_per_level", c.diffusion.blocks_per_level},
                    {"time_embed_dim", c.diffusion.time_embed_dim},
                    {"norm_groups", c.diffusion.norm_groups},
                    {"dropout", c.diffusion.dropout},
                    {"lr", c.diffusion.lr},
                    {"steps", c.diffusion.steps},
                    {"batch", c.diffusion.batch},
                    {"zeta", c.diffusion.zeta},
                    {"n_start_frac", c.diffusion.n_start_frac},
                    {"guidance_mode", c.diffusion.guidance_mode}};
  j["adaptation"] = {{"mode", c.adaptation.mode},
                     {"tau", c.adaptation.tau},
                     {"interval", c.adaptation.interval},
                     {"decode_on_reencode", c.adaptation.decode_on_reencode},
                     {"decode_every", c.adaptation.decode_every}};
  j["eval"] = {{"horizon", c.eval.horizon},
               {"intervals", c.eval.intervals},
               {"seeds", c.eval.seeds},
               {"noise_percents", c.eval.noise_percents},
               {"codebook_sizes", c.eval.codebook_sizes}};
  j["seed"] = c.seed;
  return j;
}

ExperimentConfig from_json(const json& input) {
  json j = to_json(ExperimentConfig{});  // defaults
  check_unknown(input, j, "");
  j.update(input, /*merge_objects=*/true);

  ExperimentConfig c;
  j.at("system").get_to(c.system);
  c.grid = grid_from_json(j.at("grid"));
  const json* in_grid = input.contains("grid") ? &input.at("grid") : nullptr;
  if (!in_grid || !in_grid->contains("domain_length_x"))
    c.grid.domain_length_x = default_domain_length(c.system);
  if (!in_grid || !in_grid->contains("domain_length_y"))
    c.grid.domain_length_y = default_domain_length(c.system);
  const json& lo = j.at("lambda_omega");
  lo.at("mu_u").get_to(c.lambda_omega.mu_u);
  lo.at("mu_v").get_to(c.lambda_omega.mu_v);
  lo.at("beta").get_to(c.lambda_omega.beta_lo);
  const json& ns = j.at("navier_stokes");
  ns.at("nu").get_to(c.navier_stokes.nu);
  ns.at("forcing_amplitude").get_to(c.navier_stokes.forcing_amplitude);
  ns.at("phase_shift").get_to(c.navier_stokes.phase_shift);
  const json& sh = j.at("swift_hohenberg");
  sh.at("r").get_to(c.swift_hohenberg.r);
  sh.at("g").get_to(c.swift_hohenberg.g);
  const json& cf = j.at("cylinder_flow");
  cf.at("re").get_to(c.cylinder_flow.re);
  cf.at("rho").get_to(c.cylinder_flow.rho);
  cf.at("u_m").get_to(c.cylinder_flow.u_m);
  cf.at("d").get_to(c.cylinder_flow.d);
  cf.at("warmup_steps").get_to(c.cylinder_flow.warmup_steps);
  cf.at("t_resample").get_to(c.cylinder_flow.t_resample);
  cf.at("obstacle").get_to(c.cylinder_flow.obstacle);
  cf.at("lattice_ny").get_to(c.cylinder_flow.lattice_ny);
  const json& da = j.at("data");
  da.at("n_train").get_to(c.data.n_train);
  da.at("n_eval").get_to(c.data.n_eval);
  da.at("n_frames").get_to(c.data.n_frames);
  da.at("solver_dt").get_to(c.data.solver_dt);
  da.at("store_every").get_to(c.data.store_every);
  da.at("ic_max_mode").get_to(c.data.ic_max_mode);
  j.at("lookback").get_to(c.lookback);
  const json& cb = j.at("codebook");
  cb.at("size").get_to(c.codebook.size);
  cb.at("latent_dim").get_to(c.codebook.latent_dim);
  cb.at("hidden_dim").get_to(c.codebook.hidden_dim);
  cb.at("beta_commit").get_to(c.codebook.beta_commit);
  cb.at("lr").get_to(c.codebook.lr);
  cb.at("batch_pixels").get_to(c.codebook.batch_pixels);
  cb.at("steps").get_to(c.codebook.steps);
  cb.at("reseed_every").get_to(c.codebook.reseed_every);
  const json& pr = j.at("predictor");
  pr.at("feature_dim").get_to(c.predictor.feature_dim);
  pr.at("heads").get_to(c.predictor.heads);
  pr.at("d_k").get_to(c.predictor.d_k);
  pr.at("hidden").get_to(c.predictor.hidden);
  pr.at("ode_time").get_to(c.predictor.ode_time);
  pr.at("substeps").get_to(c.predictor.substeps);
  pr.at("freeze_attention").get_to(c.predictor.freeze_attention);
  pr.at("use_edge_weights").get_to(c.predictor.use_edge_weights);
  pr.at("sqrt_dk_scaling").get_to(c.predictor.sqrt_dk_scaling);
  pr.at("lr").get_to(c.predictor.lr);
  pr.at("steps").get_to(c.predictor.steps);
  pr.at("batch").get_to(c.predictor.batch);
  const json& df = j.at("diffusion");
  df.at("n_steps").get_to(c.diffusion.n_steps);
  df.at("beta_start").get_to(c.diffusion.beta_start);
  df.at("beta_end").get_to(c.diffusion.beta_end);
  df.at("base_channels").get_to(c.diffusion.base_channels);
  df.at("ch_mults").get_to(c.diffusion.ch_mults);
  df.at("blocks_per_level").get_to(c.diffusion.blocks_per_level);
  df.at("time_embed_dim").get_to(c.diffusion.time_embed_dim);
  df.at("norm_groups").get_to(c.diffusion.norm_groups);
  df.at("dropout").get_to(c.diffusion.dropout);
  df.at("lr").get_to(c.diffusion.lr);
  df.at("steps").get_to(c.diffusion.steps);
  df.at("batch").get_to(c.diffusion.batch);
  df.at("zeta").get_to(c.diffusion.zeta);
  df.at("n_start_frac").get_to(c.diffusion.n_start_frac);
  df.at("guidance_mode").get_to(c.diffusion.guidance_mode);
  const json& adp = j.at("adaptation");
  adp.at("mode").get_to(c.adaptation.mode);
  adp.at("tau").get_to(c.adaptation.tau);
  adp.at("interval").get_to(c.adaptation.interval);
  adp.at("decode_on_reencode").get_to(c.adaptation.decode_on_reencode);
  adp.at("decode_every").get_to(c.adaptation.decode_every);
  const json& ev = j.at("eval");
  ev.at("horizon").get_to(c.eval.horizon);
  ev.at("intervals").get_to(c.eval.intervals);
  ev.at("seeds").get_to(c.eval.seeds);
  ev.at("noise_percents").get_to(c.eval.noise_percents);
  ev.at("codebook_sizes").get_to(c.eval.codebook_sizes);
  j.at("seed").get_to(c.seed);
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    // nlohmann's message already carries the line/column location.
    throw ConfigError(std::string("config parse error in ") + path + ": " +
                      e.what());
  }
  return from_json(j);
}

void save_config(const std::string& path, const ExperimentConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write config file: " + path);
  out << to_json(cfg).dump(2) << "\n";
}

ExperimentConfig apply_override(const ExperimentConfig& cfg,
                                const std::string& key_value) {
  auto eq = key_value.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override must look like section.key=value: " +
                      key_value);
  std::string key = key_value.substr(0, eq);
  std::string value = key_value.substr(eq + 1);

  json j = to_json(cfg);
  json* node = &j;
  std::string part, path;
  std::istringstream keys(key);
  while (std::getline(keys, part, '.')) {
    path = path.empty() ? part : path + "." + part;
    if (!node->is_object() || !node->contains(part))
      throw ConfigError("override targets unknown key: " + path);
    node = &(*node)[part];
  }
  json parsed = json::parse(value, nullptr, /*allow_exceptions=*/false);
  *node = parsed.is_discarded() ? json(value) : parsed;
  try {
    return from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("override " + key_value + " has the wrong type: " +
                      e.what());
  }
}

std::string config_hash(const ExperimentConfig& cfg) {
  std::string canonical = to_json(cfg).dump();
  uint64_t h = Rng::fnv1a(canonical);
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace sparsediff::config
