#include "sparsediff/harness.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "sparsediff/diffusion.hpp"
#include "sparsediff/metrics.hpp"
#include "sparsediff/systems.hpp"

namespace sparsediff::harness {

namespace fs = std::filesystem;

namespace {

Tensor window_slice(const Trajectory& traj, int64_t t0, int64_t len) {
  int64_t C = traj.channels(), h = traj.height(), w = traj.width();
  Tensor win({len, C, h, w});
  win.vec() = traj.data.vec().segment(t0 * C * h * w, len * C * h * w);
  return win;
}

/// Region-fill a (k, C) probe value vector into a (C, h, w) field.
Tensor fill_values(const topology::GoverningRegionMap& rm, const Tensor& values,
                   int64_t C) {
  Tensor field({C, rm.h, rm.w});
  for (int64_t cell = 0; cell < rm.h * rm.w; ++cell) {
    int64_t r = rm.cell_region[cell];
    for (int64_t c = 0; c < C; ++c)
      field[c * rm.h * rm.w + cell] = values[r * C + c];
  }
  return field;
}

struct StepMetrics {
  std::vector<double> rmse, ssim;
};

/// Probe rollout scored against truth through the cheap region-fill decode.
StepMetrics rollout_metrics(const predictor::GrandModel& model,
                            const topology::ProbeGraph& graph,
                            const Trajectory& truth, int64_t lookback,
                            int64_t horizon) {
  int64_t C = truth.channels(), h = truth.height(), w = truth.width();
  Tensor probes = predictor::rollout_probes(model, graph, horizon);
  int64_t k = graph.k();
  StepMetrics m;
  for (int64_t t = 0; t < horizon; ++t) {
    Tensor vals({k, C});
    vals.vec() = probes.vec().segment(t * k * C, k * C);
    Tensor pred = fill_values(graph.region_map, vals, C);
    Tensor truthf({C, h, w});
    truthf.vec() = truth.data.vec().segment((lookback + t) * C * h * w,
                                            C * h * w);
    m.rmse.push_back(metrics::rmse(pred, truthf));
    m.ssim.push_back(metrics::ssim(pred, truthf));
  }
  return m;
}

void add_rows(std::vector<Row>& rows, const std::string& system,
              const std::string& mode, int64_t probes, uint64_t seed,
              const std::vector<StepMetrics>& per_traj) {
  if (per_traj.empty()) return;
  size_t T = per_traj.front().rmse.size();
  for (size_t t = 0; t < T; ++t) {
    std::vector<double> r, s;
    for (const auto& m : per_traj) {
      r.push_back(m.rmse[t]);
      s.push_back(m.ssim[t]);
    }
    Row row;
    row.system = system;
    row.mode = mode;
    row.probes = probes;
    row.seed = seed;
    row.step = static_cast<int64_t>(t);
    row.rmse = metrics::aggregate(r).mean;
    row.ssim = metrics::aggregate(s).mean;
    rows.push_back(row);
  }
}

/// Per-mode teacher-forced training pairs built over the same windows, with
/// the ablation graphs matched to the codebook graph's probe count.
struct ModePairs {
  std::vector<std::pair<topology::ProbeGraph, Tensor>> codebook, uniform,
      random;
};

ModePairs build_mode_pairs(const std::vector<Trajectory>& train,
                           const vq::VqModel& vq_model, int64_t lookback,
                           uint64_t seed, int64_t max_pairs = 256) {
  int64_t total = 0;
  for (const auto& t : train) total += t.steps() - lookback;
  int64_t stride = std::max<int64_t>(1, (total + max_pairs - 1) / max_pairs);

  ModePairs mp;
  for (size_t ti = 0; ti < train.size(); ++ti) {
    const Trajectory& traj = train[ti];
    int64_t C = traj.channels();
    for (int64_t t0 = 0; t0 + lookback < traj.steps(); t0 += stride) {
      Tensor window = window_slice(traj, t0, lookback);
      uint64_t gs = Rng::splitmix64(seed ^ (ti * 1000003ull + t0));
      topology::ProbeGraph cb = adaptation::reencode(window, vq_model, gs);
      int64_t k = cb.k();
      topology::ProbeGraph uni = topology::build_ablation_graph(
          window, topology::AblationMode::kUniform, k, 0.2, gs);
      topology::ProbeGraph rnd = topology::build_ablation_graph(
          window, topology::AblationMode::kRandom, k, 0.2, gs);
      Tensor frame = window_slice(traj, t0 + lookback, 1);
      auto target = [&](const topology::ProbeGraph& g) {
        Tensor agg = topology::aggregate_probe_states(frame, g.region_map);
        agg.reshape({g.k(), C});
        return agg;
      };
      mp.codebook.emplace_back(cb, target(cb));
      mp.uniform.emplace_back(uni, target(uni));
      mp.random.emplace_back(rnd, target(rnd));
    }
  }
  return mp;
}

}  // namespace

void write_csv(const std::string& path, const std::vector<Row>& rows) {
  fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write table: " + path);
  out << "system,mode,probes,seed,step,rmse,ssim\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%lld,%llu,%lld,%.10g,%.10g",
                  static_cast<long long>(r.probes),
                  static_cast<unsigned long long>(r.seed),
                  static_cast<long long>(r.step), r.rmse, r.ssim);
    out << r.system << "," << r.mode << "," << buf << "\n";
  }
}

std::vector<Row> read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read table: " + path);
  std::string line;
  if (!std::getline(in, line) || line != "system,mode,probes,seed,step,rmse,ssim")
    throw std::runtime_error("unexpected table header in " + path);
  std::vector<Row> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    Row r;
    std::string field;
    std::getline(ss, r.system, ',');
    std::getline(ss, r.mode, ',');
    std::getline(ss, field, ',');
    r.probes = std::stoll(field);
    std::getline(ss, field, ',');
    r.seed = std::stoull(field);
    std::getline(ss, field, ',');
    r.step = std::stoll(field);
    std::getline(ss, field, ',');
    r.rmse = std::stod(field);
    std::getline(ss, field, ',');
    r.ssim = std::stod(field);
    rows.push_back(r);
  }
  return rows;
}

std::vector<Row> run_ablation_suite(const config::ExperimentConfig& cfg,
                                    const pipeline::Paths& paths) {
  auto train = pipeline::load_split(cfg, paths, "train");
  auto evals = pipeline::load_split(cfg, paths, "eval");
  int64_t horizon =
      std::min(cfg.eval.horizon, evals.front().steps() - cfg.lookback);

  std::vector<Row> rows;
  for (uint64_t seed : cfg.eval.seeds) {
    uint64_t s = Rng::splitmix64(cfg.seed ^ (seed + 0x51ab));
    vq::VqModel vq_model = pipeline::fit_codebook(train, cfg, s);
    ModePairs mp = build_mode_pairs(train, vq_model, cfg.lookback, s);

    predictor::GrandModel p_cb = pipeline::fit_predictor(mp.codebook, cfg, s);
    predictor::GrandModel p_uni = pipeline::fit_predictor(mp.uniform, cfg, s);
    predictor::GrandModel p_rnd = pipeline::fit_predictor(mp.random, cfg, s);
    predictor::GrandModel p_unw =
        pipeline::fit_predictor(mp.codebook, cfg, s, /*use_edge_weights=*/false);

    std::vector<StepMetrics> m_cb, m_uni, m_rnd, m_unw;
    int64_t k_ref = 0;
    for (const auto& traj : evals) {
      Tensor window = window_slice(traj, 0, cfg.lookback);
      uint64_t gs = Rng::splitmix64(s ^ 0xe7a1);
      topology::ProbeGraph cb = adaptation::reencode(window, vq_model, gs);
      k_ref = cb.k();
      topology::ProbeGraph uni = topology::build_ablation_graph(
          window, topology::AblationMode::kUniform, cb.k(), 0.2, gs);
      topology::ProbeGraph rnd = topology::build_ablation_graph(
          window, topology::AblationMode::kRandom, cb.k(), 0.2, gs);
      m_cb.push_back(rollout_metrics(p_cb, cb, traj, cfg.lookback, horizon));
      m_uni.push_back(rollout_metrics(p_uni, uni, traj, cfg.lookback, horizon));
      m_rnd.push_back(rollout_metrics(p_rnd, rnd, traj, cfg.lookback, horizon));
      m_unw.push_back(rollout_metrics(p_unw, cb, traj, cfg.lookback, horizon));
    }
    add_rows(rows, cfg.system, "codebook", k_ref, seed, m_cb);
    add_rows(rows, cfg.system, "uniform", k_ref, seed, m_uni);
    add_rows(rows, cfg.system, "random", k_ref, seed, m_rnd);
    add_rows(rows, cfg.system, "weighted", k_ref, seed, m_cb);
    add_rows(rows, cfg.system, "unweighted", k_ref, seed, m_unw);
  }
  return rows;
}

std::vector<Row> run_robustness_suite(const config::ExperimentConfig& cfg,
                                      const pipeline::Paths& paths) {
  auto train = pipeline::load_split(cfg, paths, "train");
  auto evals = pipeline::load_split(cfg, paths, "eval");
  int64_t horizon =
      std::min(cfg.eval.horizon, evals.front().steps() - cfg.lookback);
  uint64_t seed = cfg.eval.seeds.empty() ? cfg.seed : cfg.eval.seeds.front();
  uint64_t s = Rng::splitmix64(cfg.seed ^ (seed + 0x0b57));

  std::vector<Row> rows;

  // Codebook-size sweep.
  for (int64_t size : cfg.eval.codebook_sizes) {
    config::ExperimentConfig c2 = cfg;
    c2.codebook.size = size;
    vq::VqModel vq_model = pipeline::fit_codebook(train, c2, s);
    auto pairs =
        pipeline::build_predictor_pairs(train, vq_model, c2.lookback, s, 256);
    predictor::GrandModel pred = pipeline::fit_predictor(pairs, c2, s);
    std::vector<StepMetrics> ms;
    int64_t k_ref = 0;
    for (const auto& traj : evals) {
      Tensor window = window_slice(traj, 0, c2.lookback);
      topology::ProbeGraph g =
          adaptation::reencode(window, vq_model, Rng::splitmix64(s ^ 0xe7a1));
      k_ref = g.k();
      ms.push_back(rollout_metrics(pred, g, traj, c2.lookback, horizon));
    }
    add_rows(rows, cfg.system, "cbsize_" + std::to_string(size), k_ref, seed,
             ms);
  }

  // Input-noise sweep at the configured codebook size.
  vq::VqModel vq_model = pipeline::fit_codebook(train, cfg, s);
  auto pairs =
      pipeline::build_predictor_pairs(train, vq_model, cfg.lookback, s, 256);
  predictor::GrandModel pred = pipeline::fit_predictor(pairs, cfg, s);
  for (double pct : cfg.eval.noise_percents) {
    std::vector<StepMetrics> ms;
    int64_t k_ref = 0;
    Rng noise_rng(Rng::splitmix64(s ^ 0x4015e));
    for (const auto& traj : evals) {
      Tensor window = window_slice(traj, 0, cfg.lookback);
      if (pct > 0) {
        double sigma = pct / 100.0;  // normalized data amplitude is 1
        for (int64_t i = 0; i < window.numel(); ++i)
          window[i] += sigma * noise_rng.normal();
      }
      topology::ProbeGraph g =
          adaptation::reencode(window, vq_model, Rng::splitmix64(s ^ 0xe7a1));
      k_ref = g.k();
      ms.push_back(rollout_metrics(pred, g, traj, cfg.lookback, horizon));
    }
    char label[32];
    std::snprintf(label, sizeof(label), "noise_%g", pct);
    add_rows(rows, cfg.system, label, k_ref, seed, ms);
  }
  return rows;
}

std::vector<TradeoffPoint> run_tradeoff_suite(
    const config::ExperimentConfig& cfg, const pipeline::Paths& paths) {
  vq::VqModel vq_model = pipeline::load_codebook(cfg, paths);
  predictor::GrandModel pred = pipeline::load_predictor(cfg, paths);
  diffusion::Denoiser den = pipeline::load_denoiser(cfg, paths);
  diffusion::NoiseSchedule sch = pipeline::noise_schedule(cfg);
  auto evals = pipeline::load_split(cfg, paths, "eval");

  adaptation::Models models;
  models.vq = &vq_model;
  models.predictor = &pred;
  models.denoiser = &den;
  models.schedule = &sch;
  models.guidance = pipeline::guidance_config(cfg);

  struct ModeSpec {
    std::string label;
    adaptation::AdaptationConfig ac;
  };
  std::vector<ModeSpec> specs;
  adaptation::AdaptationConfig base = pipeline::adaptation_config(cfg);
  base.decode_every = cfg.eval.horizon;  // score the final frame only
  {
    ModeSpec never{"never", base};
    never.ac.mode = adaptation::Mode::kNever;
    specs.push_back(never);
    ModeSpec adap{"adaptive", base};
    adap.ac.mode = adaptation::Mode::kAdaptive;
    specs.push_back(adap);
    for (int64_t interval : cfg.eval.intervals) {
      ModeSpec fx{"interval_" + std::to_string(interval), base};
      fx.ac.mode = adaptation::Mode::kFixedInterval;
      fx.ac.interval = interval;
      specs.push_back(fx);
    }
  }

  std::vector<TradeoffPoint> points;
  for (const auto& spec : specs) {
    for (size_t i = 0; i < evals.size(); ++i) {
      const Trajectory& traj = evals[i];
      Tensor window = window_slice(traj, 0, cfg.lookback);
      adaptation::RolloutReport report = adaptation::adaptive_rollout(
          window, cfg.eval.horizon, models, spec.ac,
          pipeline::module_seed(cfg.seed, "adaptation") + i);
      int64_t C = traj.channels(), h = traj.height(), w = traj.width();
      int64_t nd = report.predicted_fields.dim(0);
      Tensor predf({C, h, w}), truthf({C, h, w});
      predf.vec() =
          report.predicted_fields.vec().segment((nd - 1) * C * h * w, C * h * w);
      truthf.vec() = traj.data.vec().segment(
          (cfg.lookback + report.decoded_steps.back()) * C * h * w, C * h * w);
      TradeoffPoint tp;
      tp.mode = spec.label;
      tp.seed = cfg.seed + i;
      tp.wall_s = report.wall_predict_s + report.wall_decode_s +
                  report.wall_reencode_s;
      tp.final_rmse = metrics::rmse(predf, truthf);
      tp.final_ssim = metrics::ssim(predf, truthf);
      points.push_back(tp);
    }
  }
  return points;
}

void write_tradeoff(const std::string& path,
                    const std::vector<TradeoffPoint>& points) {
  fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  nlohmann::json j = nlohmann::json::array();
  for (const auto& tp : points)
    j.push_back({{"mode", tp.mode},
                 {"seed", tp.seed},
                 {"wall_s", tp.wall_s},
                 {"final_rmse", tp.final_rmse},
                 {"final_ssim", tp.final_ssim}});
  std::ofstream(path) << j.dump(2) << "\n";
}

std::vector<TradeoffPoint> read_tradeoff(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read trade-off table: " + path);
  nlohmann::json j;
  in >> j;
  std::vector<TradeoffPoint> points;
  for (const auto& e : j) {
    TradeoffPoint tp;
    tp.mode = e.at("mode").get<std::string>();
    tp.seed = e.at("seed").get<uint64_t>();
    tp.wall_s = e.at("wall_s").get<double>();
    tp.final_rmse = e.at("final_rmse").get<double>();
    tp.final_ssim = e.at("final_ssim").get<double>();
    points.push_back(tp);
  }
  return points;
}

void ablate(const config::ExperimentConfig& cfg, const pipeline::Paths& paths) {
  std::string dir = paths.stage("ablate");
  std::string acsv = dir + "/ablation.csv";
  std::string rcsv = dir + "/robustness.csv";
  if (fs::exists(acsv) && fs::exists(rcsv)) return;
  write_csv(acsv, run_ablation_suite(cfg, paths));
  write_csv(rcsv, run_robustness_suite(cfg, paths));
}

void tradeoff(const config::ExperimentConfig& cfg,
              const pipeline::Paths& paths) {
  std::string dir = paths.stage("tradeoff");
  std::string tjson = dir + "/tradeoff.json";
  if (fs::exists(tjson)) return;
  std::vector<TradeoffPoint> points = run_tradeoff_suite(cfg, paths);
  write_tradeoff(tjson, points);

  std::vector<Row> rows;
  for (const auto& tp : points) {
    Row r;
    r.system = cfg.system;
    r.mode = tp.mode;
    r.probes = 0;
    r.seed = tp.seed;
    r.step = cfg.eval.horizon - 1;
    r.rmse = tp.final_rmse;
    r.ssim = tp.final_ssim;
    rows.push_back(r);
  }
  write_csv(dir + "/tradeoff.csv", rows);
}

}  // namespace sparsediff::harness
