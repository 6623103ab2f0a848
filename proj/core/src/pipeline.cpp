#include "sparsediff/pipeline.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>

#include "sparsediff/checkpoint.hpp"
#include "sparsediff/diffusion.hpp"
#include "sparsediff/harness.hpp"
#include "sparsediff/metrics.hpp"
#include "sparsediff/plots.hpp"
#include "sparsediff/systems.hpp"

namespace sparsediff::pipeline {

namespace fs = std::filesystem;

namespace {

std::string traj_dir_name(int64_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "traj_%02lld", static_cast<long long>(i));
  return buf;
}

std::vector<ad::Var> vq_params(const vq::VqModel& m) {
  std::vector<ad::Var> p = m.encoder.net.params();
  auto d = m.decoder.net.params();
  p.insert(p.end(), d.begin(), d.end());
  p.push_back(m.codebook.codewords);
  return p;
}

Tensor window_slice(const Trajectory& traj, int64_t t0, int64_t len) {
  int64_t C = traj.channels(), h = traj.height(), w = traj.width();
  Tensor win({len, C, h, w});
  win.vec() = traj.data.vec().segment(t0 * C * h * w, len * C * h * w);
  return win;
}

}  // namespace

Paths make_paths(const config::ExperimentConfig& cfg,
                 const std::string& out_flag) {
  Paths p;
  if (!out_flag.empty()) {
    p.root = out_flag;
  } else if (const char* env = std::getenv("SPARSEDIFF_OUT"); env && *env) {
    p.root = env;
  } else {
    p.root = "out";
  }
  p.system = cfg.system;
  p.hash = config::config_hash(cfg);
  return p;
}

int64_t system_channels(const std::string& system) {
  if (system == "lambda_omega") return 2;
  if (system == "navier_stokes") return 1;
  if (system == "swift_hohenberg") return 1;
  if (system == "cylinder_flow") return 2;
  throw config::ConfigError("unknown system: " + system);
}

uint64_t module_seed(uint64_t master, const std::string& module) {
  return Rng::splitmix64(master ^ Rng::fnv1a(module));
}

vq::VqTrainConfig vq_train_config(const config::ExperimentConfig& cfg) {
  vq::VqTrainConfig vc;
  vc.codebook_size = cfg.codebook.size;
  vc.latent_dim = cfg.codebook.latent_dim;
  vc.hidden_dim = cfg.codebook.hidden_dim;
  vc.beta_commit = cfg.codebook.beta_commit;
  vc.lr = cfg.codebook.lr;
  vc.batch_pixels = cfg.codebook.batch_pixels;
  vc.steps = cfg.codebook.steps;
  vc.reseed_every = cfg.codebook.reseed_every;
  vc.seed = module_seed(cfg.seed, "codebook");
  return vc;
}

predictor::PredictorTrainConfig predictor_train_config(
    const config::ExperimentConfig& cfg) {
  predictor::PredictorTrainConfig pc;
  pc.grand.feature_dim = cfg.predictor.feature_dim;
  pc.grand.heads = cfg.predictor.heads;
  pc.grand.d_k = cfg.predictor.d_k;
  pc.grand.hidden = cfg.predictor.hidden;
  pc.grand.ode_time = cfg.predictor.ode_time;
  pc.grand.substeps = cfg.predictor.substeps;
  pc.grand.freeze_attention = cfg.predictor.freeze_attention;
  pc.grand.use_edge_weights = cfg.predictor.use_edge_weights;
  pc.grand.sqrt_dk_scaling = cfg.predictor.sqrt_dk_scaling;
  pc.lr = cfg.predictor.lr;
  pc.steps = cfg.predictor.steps;
  pc.batch = cfg.predictor.batch;
  pc.seed = module_seed(cfg.seed, "predictor");
  return pc;
}

diffusion::DenoiserConfig denoiser_config(const config::ExperimentConfig& cfg) {
  diffusion::DenoiserConfig dc;
  dc.data_channels = system_channels(cfg.system);
  dc.base_channels = cfg.diffusion.base_channels;
  dc.ch_mults = cfg.diffusion.ch_mults;
  dc.blocks_per_level = cfg.diffusion.blocks_per_level;
  dc.time_embed_dim = cfg.diffusion.time_embed_dim;
  dc.norm_groups = cfg.diffusion.norm_groups;
  dc.dropout = cfg.diffusion.dropout;
  return dc;
}

diffusion::NoiseSchedule noise_schedule(const config::ExperimentConfig& cfg) {
  return diffusion::NoiseSchedule::linear(
      cfg.diffusion.n_steps, cfg.diffusion.beta_start, cfg.diffusion.beta_end);
}

diffusion::GuidanceConfig guidance_config(const config::ExperimentConfig& cfg) {
  diffusion::GuidanceConfig g;
  g.zeta = cfg.diffusion.zeta;
  g.n_start_frac = cfg.diffusion.n_start_frac;
  g.mode = cfg.diffusion.guidance_mode == "noised-target"
               ? diffusion::GuidanceMode::kNoisedTarget
               : diffusion::GuidanceMode::kX0Estimate;
  return g;
}

adaptation::AdaptationConfig adaptation_config(
    const config::ExperimentConfig& cfg) {
  adaptation::AdaptationConfig ac;
  ac.mode = adaptation::mode_from_name(cfg.adaptation.mode);
  ac.tau = cfg.adaptation.tau;
  ac.interval = cfg.adaptation.interval;
  ac.decode_on_reencode = cfg.adaptation.decode_on_reencode;
  ac.decode_every = cfg.adaptation.decode_every;
  return ac;
}

void generate(const config::ExperimentConfig& cfg, const Paths& paths) {
  cfg.validate();
  std::string dir = paths.stage("dataset");
  if (dataset_exists(dir + "/train") && dataset_exists(dir + "/eval")) return;

  int64_t C = system_channels(cfg.system);
  Rng data_rng = Rng::stream(cfg.seed, "data");
  int64_t total = cfg.data.n_train + cfg.data.n_eval;
  std::vector<Trajectory> trajs;
  std::vector<uint64_t> seeds;
  for (int64_t i = 0; i < total; ++i) {
    uint64_t si = data_rng.next_u64();
    seeds.push_back(si);
    Rng ic_rng(si);
    Trajectory t;
    if (cfg.system == "lambda_omega") {
      Tensor ic = systems::random_field(cfg.grid, C, cfg.data.ic_max_mode, ic_rng);
      t = systems::simulate_lambda_omega(cfg.lambda_omega, cfg.grid, ic,
                                         cfg.data.n_frames, cfg.data.solver_dt,
                                         cfg.data.store_every);
    } else if (cfg.system == "navier_stokes") {
      Tensor ic = systems::random_field(cfg.grid, C, cfg.data.ic_max_mode, ic_rng);
      t = systems::simulate_navier_stokes(cfg.navier_stokes, cfg.grid, ic,
                                          cfg.data.n_frames, cfg.data.solver_dt,
                                          cfg.data.store_every);
    } else if (cfg.system == "swift_hohenberg") {
      Tensor ic = systems::random_field(cfg.grid, C, cfg.data.ic_max_mode, ic_rng);
      ic.vec() *= 0.1;  // grow patterns from small noise
      t = systems::simulate_swift_hohenberg(cfg.swift_hohenberg, cfg.grid, ic,
                                            cfg.data.n_frames,
                                            cfg.data.solver_dt,
                                            cfg.data.store_every);
    } else {
      // LBM has no stochastic IC; stagger the warm-up so trajectories start
      // at different phases of the vortex shedding.
      CylinderFlowParams p = cfg.cylinder_flow;
      p.warmup_steps += i * p.t_resample;
      t = systems::simulate_cylinder_flow(p, cfg.grid, cfg.data.n_frames);
    }
    trajs.push_back(std::move(t));
  }
  // One affine map shared by every trajectory (stats from the train split),
  // so the same physical state normalizes identically everywhere.
  {
    std::vector<Trajectory> train_raw(trajs.begin(),
                                      trajs.begin() + cfg.data.n_train);
    NormStats stats = systems::minmax_stats(train_raw);
    for (auto& t : trajs) t = systems::normalize_with_stats(t, stats);
  }

  DatasetMeta meta;
  meta.system = cfg.system;
  meta.params = config::to_json(cfg).at(cfg.system == "cylinder_flow"
                                            ? "cylinder_flow"
                                            : cfg.system);
  meta.grid = cfg.grid;
  meta.dt = trajs.front().dt;
  meta.channel_names = trajs.front().channel_names;
  meta.shape = trajs.front().data.shape();
  meta.config_hash = paths.hash;

  DatasetMeta train_meta = meta, eval_meta = meta;
  std::vector<Trajectory> train(trajs.begin(),
                                trajs.begin() + cfg.data.n_train);
  std::vector<Trajectory> evals(trajs.begin() + cfg.data.n_train, trajs.end());
  for (int64_t i = 0; i < cfg.data.n_train; ++i) {
    train_meta.seeds.push_back(seeds[i]);
    train_meta.norm_stats.push_back(*train[i].norm_stats);
  }
  for (int64_t i = 0; i < cfg.data.n_eval; ++i) {
    eval_meta.seeds.push_back(seeds[cfg.data.n_train + i]);
    eval_meta.norm_stats.push_back(*evals[i].norm_stats);
  }
  save_dataset(dir + "/train", train_meta, train);
  save_dataset(dir + "/eval", eval_meta, evals);
}

std::vector<Trajectory> load_split(const config::ExperimentConfig& cfg,
                                   const Paths& paths,
                                   const std::string& split) {
  std::string dir = paths.stage("dataset") + "/" + split;
  if (!dataset_exists(dir))
    throw MissingDependency("dataset split '" + split + "'", "generate");
  DatasetMeta meta = load_dataset_meta(dir);
  if (!meta.config_hash.empty() && meta.config_hash != paths.hash)
    throw checkpoint::CheckpointError("dataset config hash mismatch in " + dir);
  std::vector<Trajectory> out;
  for (int64_t i = 0; i < dataset_size(meta); ++i)
    out.push_back(load_trajectory(dir, meta, i));
  (void)cfg;
  return out;
}

vq::VqModel fit_codebook(const std::vector<Trajectory>& train,
                         const config::ExperimentConfig& cfg, uint64_t seed,
                         vq::VqTrainLog* log) {
  vq::VqTrainConfig vc = vq_train_config(cfg);
  vc.seed = seed;
  return vq::train_codebook(train, cfg.lookback, vc, log);
}

std::vector<std::pair<topology::ProbeGraph, Tensor>> build_predictor_pairs(
    const std::vector<Trajectory>& train, const vq::VqModel& vq_model,
    int64_t lookback, uint64_t seed, int64_t max_pairs) {
  int64_t total = 0;
  for (const auto& t : train) total += t.steps() - lookback;
  int64_t stride = std::max<int64_t>(1, (total + max_pairs - 1) / max_pairs);

  std::vector<std::pair<topology::ProbeGraph, Tensor>> pairs;
  for (size_t ti = 0; ti < train.size(); ++ti) {
    const Trajectory& traj = train[ti];
    int64_t C = traj.channels();
    for (int64_t t0 = 0; t0 + lookback < traj.steps(); t0 += stride) {
      Tensor window = window_slice(traj, t0, lookback);
      uint64_t gs = Rng::splitmix64(seed ^ (ti * 1000003ull + t0));
      topology::ProbeGraph graph = adaptation::reencode(window, vq_model, gs);
      Tensor frame = window_slice(traj, t0 + lookback, 1);
      Tensor agg = topology::aggregate_probe_states(frame, graph.region_map);
      agg.reshape({graph.k(), C});
      pairs.emplace_back(std::move(graph), std::move(agg));
    }
  }
  return pairs;
}

predictor::GrandModel fit_predictor(
    const std::vector<std::pair<topology::ProbeGraph, Tensor>>& pairs,
    const config::ExperimentConfig& cfg, uint64_t seed, bool use_edge_weights,
    predictor::PredictorTrainLog* log) {
  predictor::PredictorTrainConfig pc = predictor_train_config(cfg);
  pc.grand.use_edge_weights = use_edge_weights && cfg.predictor.use_edge_weights;
  pc.seed = seed;
  return predictor::train_predictor(pairs, cfg.lookback,
                                    system_channels(cfg.system), pc, log);
}

void train_codebook(const config::ExperimentConfig& cfg, const Paths& paths) {
  std::string ck = paths.stage("codebook") + "/model.ckpt";
  if (checkpoint::checkpoint_exists(ck)) return;
  auto train = load_split(cfg, paths, "train");
  vq::VqTrainLog log;
  vq::VqModel m = fit_codebook(train, cfg, module_seed(cfg.seed, "codebook"),
                               &log);
  checkpoint::CheckpointMeta meta;
  meta.module_id = "codebook";
  meta.config_hash = paths.hash;
  meta.extra = {{"final_loss", log.loss_per_step.empty()
                                   ? 0.0
                                   : log.loss_per_step.back()},
                {"reseeded_codewords", log.reseeded_codewords},
                {"param_count", log.param_count}};
  checkpoint::save_checkpoint(ck, meta, vq_params(m));
}

vq::VqModel load_codebook(const config::ExperimentConfig& cfg,
                          const Paths& paths) {
  std::string ck = paths.stage("codebook") + "/model.ckpt";
  if (!checkpoint::checkpoint_exists(ck))
    throw MissingDependency("codebook checkpoint", "train-codebook");
  Rng rng(0);
  vq::VqModel m = vq::make_vq_model(cfg.lookback, system_channels(cfg.system),
                                    vq_train_config(cfg), rng);
  checkpoint::load_checkpoint(ck, "codebook", paths.hash, vq_params(m));
  return m;
}

void train_predictor(const config::ExperimentConfig& cfg, const Paths& paths) {
  std::string ck = paths.stage("predictor") + "/model.ckpt";
  if (checkpoint::checkpoint_exists(ck)) return;
  vq::VqModel vq_model = load_codebook(cfg, paths);
  auto train = load_split(cfg, paths, "train");
  uint64_t seed = module_seed(cfg.seed, "predictor");
  auto pairs = build_predictor_pairs(train, vq_model, cfg.lookback, seed);
  predictor::PredictorTrainLog log;
  predictor::GrandModel m = fit_predictor(pairs, cfg, seed, true, &log);
  checkpoint::CheckpointMeta meta;
  meta.module_id = "predictor";
  meta.config_hash = paths.hash;
  meta.extra = {{"final_loss", log.loss_per_step.empty()
                                   ? 0.0
                                   : log.loss_per_step.back()},
                {"param_count", log.param_count},
                {"pairs", pairs.size()}};
  checkpoint::save_checkpoint(ck, meta, m.params());
}

predictor::GrandModel load_predictor(const config::ExperimentConfig& cfg,
                                     const Paths& paths) {
  std::string ck = paths.stage("predictor") + "/model.ckpt";
  if (!checkpoint::checkpoint_exists(ck))
    throw MissingDependency("predictor checkpoint", "train-predictor");
  Rng rng(0);
  predictor::GrandModel m = predictor::make_grand_model(
      cfg.lookback, system_channels(cfg.system),
      predictor_train_config(cfg).grand, rng);
  checkpoint::load_checkpoint(ck, "predictor", paths.hash, m.params());
  return m;
}

void train_diffusion(const config::ExperimentConfig& cfg, const Paths& paths) {
  std::string ck = paths.stage("diffusion") + "/model.ckpt";
  if (checkpoint::checkpoint_exists(ck)) return;
  auto train = load_split(cfg, paths, "train");
  Rng rng(module_seed(cfg.seed, "diffusion"));
  diffusion::Denoiser den = diffusion::make_denoiser(denoiser_config(cfg), rng);
  diffusion::NoiseSchedule sch = noise_schedule(cfg);
  nn::Adam opt(den.params(), cfg.diffusion.lr);

  int64_t C = train.front().channels(), h = train.front().height(),
          w = train.front().width();
  int64_t B = cfg.diffusion.batch;
  std::vector<double> losses;
  for (int64_t step = 0; step < cfg.diffusion.steps; ++step) {
    Tensor batch({B, C, h, w});
    for (int64_t b = 0; b < B; ++b) {
      const Trajectory& t =
          train[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(train.size()) - 1))];
      int64_t f = rng.uniform_int(0, t.steps() - 1);
      batch.vec().segment(b * C * h * w, C * h * w) =
          t.data.vec().segment(f * C * h * w, C * h * w);
    }
    ad::Var loss = diffusion::ddpm_loss(batch, den, sch, rng);
    if (!std::isfinite(loss->value[0]))
      throw diffusion::NumericalError("diffusion training loss became NaN");
    losses.push_back(loss->value[0]);
    opt.zero_grad();
    ad::backward(loss);
    opt.step();
  }
  checkpoint::CheckpointMeta meta;
  meta.module_id = "diffusion";
  meta.config_hash = paths.hash;
  meta.extra = {{"first_loss", losses.empty() ? 0.0 : losses.front()},
                {"final_loss", losses.empty() ? 0.0 : losses.back()},
                {"param_count", den.param_count()}};
  checkpoint::save_checkpoint(ck, meta, den.params());
  nlohmann::json lj = losses;
  std::ofstream(paths.stage("diffusion") + "/loss.json") << lj.dump() << "\n";
}

diffusion::Denoiser load_denoiser(const config::ExperimentConfig& cfg,
                                  const Paths& paths) {
  std::string ck = paths.stage("diffusion") + "/model.ckpt";
  if (!checkpoint::checkpoint_exists(ck))
    throw MissingDependency("diffusion checkpoint", "train-diffusion");
  Rng rng(0);
  diffusion::Denoiser den = diffusion::make_denoiser(denoiser_config(cfg), rng);
  checkpoint::load_checkpoint(ck, "diffusion", paths.hash, den.params());
  return den;
}

void rollout(const config::ExperimentConfig& cfg, const Paths& paths) {
  std::string dir = paths.stage("rollout");
  bool done = true;
  for (int64_t i = 0; i < cfg.data.n_eval; ++i)
    done = done && fs::exists(fs::path(dir) / traj_dir_name(i) / "report.json");
  if (done && cfg.data.n_eval > 0) return;

  vq::VqModel vq_model = load_codebook(cfg, paths);
  predictor::GrandModel pred = load_predictor(cfg, paths);
  diffusion::Denoiser den = load_denoiser(cfg, paths);
  diffusion::NoiseSchedule sch = noise_schedule(cfg);
  auto evals = load_split(cfg, paths, "eval");

  adaptation::Models models;
  models.vq = &vq_model;
  models.predictor = &pred;
  models.denoiser = &den;
  models.schedule = &sch;
  models.guidance = guidance_config(cfg);
  adaptation::AdaptationConfig ac = adaptation_config(cfg);

  for (int64_t i = 0; i < cfg.data.n_eval; ++i) {
    const Trajectory& traj = evals[static_cast<size_t>(i)];
    if (traj.steps() < cfg.lookback + cfg.eval.horizon)
      throw config::ConfigError(
          "eval trajectories are shorter than lookback + horizon");
    Tensor window = window_slice(traj, 0, cfg.lookback);
    adaptation::RolloutReport report = adaptation::adaptive_rollout(
        window, cfg.eval.horizon, models, ac,
        module_seed(cfg.seed, "adaptation") + static_cast<uint64_t>(i));
    adaptation::save_rollout_report((fs::path(dir) / traj_dir_name(i)).string(),
                                    report);
  }
}

void evaluate(const config::ExperimentConfig& cfg, const Paths& paths) {
  std::string dir = paths.stage("evaluate");
  std::string csv = dir + "/metrics.csv";
  auto evals = load_split(cfg, paths, "eval");
  std::string rdir = paths.stage("rollout");

  std::vector<harness::Row> rows;
  std::vector<double> final_rmse, final_ssim, mean_rmse, mean_ssim;
  for (int64_t i = 0; i < cfg.data.n_eval; ++i) {
    std::string tdir = (fs::path(rdir) / traj_dir_name(i)).string();
    if (!fs::exists(fs::path(tdir) / "report.json"))
      throw MissingDependency("rollout report", "rollout");
    adaptation::RolloutReport report = adaptation::load_rollout_report(tdir);
    const Trajectory& traj = evals[static_cast<size_t>(i)];
    int64_t C = traj.channels(), h = traj.height(), w = traj.width();
    std::vector<double> rmses, ssims;
    for (size_t d = 0; d < report.decoded_steps.size(); ++d) {
      int64_t step = report.decoded_steps[d];
      Tensor predf({C, h, w}), truthf({C, h, w});
      predf.vec() = report.predicted_fields.vec().segment(
          static_cast<int64_t>(d) * C * h * w, C * h * w);
      truthf.vec() = traj.data.vec().segment(
          (cfg.lookback + step) * C * h * w, C * h * w);
      double r = metrics::rmse(predf, truthf);
      double s = metrics::ssim(predf, truthf);
      rmses.push_back(r);
      ssims.push_back(s);
      harness::Row row;
      row.system = cfg.system;
      row.mode = cfg.adaptation.mode;
      row.probes = report.probe_trajectories[static_cast<size_t>(step)].dim(0);
      row.seed = cfg.seed;
      row.step = step;
      row.rmse = r;
      row.ssim = s;
      rows.push_back(row);
    }
    if (!rmses.empty()) {
      final_rmse.push_back(rmses.back());
      final_ssim.push_back(ssims.back());
      mean_rmse.push_back(metrics::aggregate(rmses).mean);
      mean_ssim.push_back(metrics::aggregate(ssims).mean);
    }
  }
  harness::write_csv(csv, rows);

  nlohmann::json summary;
  summary["mean_rmse"] = metrics::aggregate(mean_rmse).mean;
  summary["mean_ssim"] = metrics::aggregate(mean_ssim).mean;
  summary["final_rmse"] = final_rmse;
  summary["final_ssim"] = final_ssim;
  std::ofstream(dir + "/summary.json") << summary.dump(2) << "\n";
}

void plot(const config::ExperimentConfig& cfg, const Paths& paths) {
  std::string dir = paths.stage("plot");
  fs::create_directories(dir);
  std::string mcsv = paths.stage("evaluate") + "/metrics.csv";
  if (!fs::exists(mcsv)) throw MissingDependency("metrics table", "evaluate");
  auto rows = harness::read_csv(mcsv);

  plots::Series rmse_s{"rmse", {}, {}}, ssim_s{"ssim", {}, {}};
  for (const auto& r : rows) {
    rmse_s.x.push_back(static_cast<double>(r.step));
    rmse_s.y.push_back(r.rmse);
    ssim_s.x.push_back(static_cast<double>(r.step));
    ssim_s.y.push_back(r.ssim);
  }
  plots::line_plot(dir + "/rmse_vs_step.png", {rmse_s});
  plots::line_plot(dir + "/ssim_vs_step.png", {ssim_s});

  std::string acsv = paths.stage("ablate") + "/ablation.csv";
  if (fs::exists(acsv)) {
    auto arows = harness::read_csv(acsv);
    std::map<std::string, std::vector<double>> per_mode;
    for (const auto& r : arows) per_mode[r.mode].push_back(r.ssim);
    std::vector<double> bars;
    for (const auto& [mode, vals] : per_mode)
      bars.push_back(metrics::aggregate(vals).mean);
    plots::bar_plot(dir + "/ablation_ssim.png", bars);
  }

  std::string tjson = paths.stage("tradeoff") + "/tradeoff.json";
  if (fs::exists(tjson)) {
    auto points = harness::read_tradeoff(tjson);
    std::map<std::string, plots::Series> per_mode;
    for (const auto& p : points) {
      auto& s = per_mode[p.mode];
      s.label = p.mode;
      s.x.push_back(p.wall_s);
      s.y.push_back(p.final_rmse);
    }
    std::vector<plots::Series> series;
    for (auto& [_, s] : per_mode) series.push_back(s);
    plots::scatter_plot(dir + "/tradeoff.png", series);
  }
  (void)cfg;
}

}  // namespace sparsediff::pipeline
