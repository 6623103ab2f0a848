#include "sparsediff/adaptation.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <stdexcept>

#include "sparsediff/dataset.hpp"

namespace sparsediff::adaptation {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

/// Region-fill decode of every lookback frame; (l, C, h, w).
Tensor fill_all_frames(const topology::ProbeGraph& graph) {
  int64_t l = graph.lookback(), C = graph.channels();
  int64_t h = graph.region_map.h, w = graph.region_map.w;
  Tensor out({l, C, h, w});
  for (int64_t t = 0; t < l; ++t) {
    Tensor f = diffusion::fill_regions(graph, t).field;
    out.vec().segment(t * C * h * w, C * h * w) = f.vec();
  }
  return out;
}

void shift_window(Tensor& states, const Tensor& pred) {
  int64_t k = states.dim(0), l = states.dim(1), C = states.dim(2);
  for (int64_t i = 0; i < k; ++i) {
    for (int64_t t = 0; t + 1 < l; ++t)
      for (int64_t c = 0; c < C; ++c)
        states[(i * l + t) * C + c] = states[(i * l + t + 1) * C + c];
    for (int64_t c = 0; c < C; ++c)
      states[(i * l + l - 1) * C + c] = pred[i * C + c];
  }
}

}  // namespace

std::string mode_name(Mode mode) {
  switch (mode) {
    case Mode::kAdaptive: return "adaptive";
    case Mode::kFixedInterval: return "fixed_interval";
    case Mode::kNever: return "never";
  }
  throw std::logic_error("mode_name: bad mode");
}

Mode mode_from_name(const std::string& name) {
  if (name == "adaptive") return Mode::kAdaptive;
  if (name == "fixed_interval") return Mode::kFixedInterval;
  if (name == "never") return Mode::kNever;
  throw std::invalid_argument("unknown adaptation mode: " + name);
}

void AdaptationConfig::validate() const {
  if (tau < -1.0 || tau > 1.0)
    throw std::invalid_argument("AdaptationConfig: tau outside [-1, 1]");
  if (interval < 1)
    throw std::invalid_argument("AdaptationConfig: interval < 1");
  if (decode_every < 0)
    throw std::invalid_argument("AdaptationConfig: decode_every < 0");
}

double latent_consistency(const topology::ProbeGraph& graph,
                          const vq::TemporalEncoder& encoder,
                          const vq::Codebook& codebook, bool* zero_norm_flag) {
  int64_t k = graph.k();
  Tensor z = encoder.net.infer(
      predictor::flatten_probe_states(graph.probe_states));  // (k, d)
  int64_t d = z.dim(1);
  const Tensor& cw = codebook.codewords->value;
  double total = 0.0;
  for (int64_t i = 0; i < k; ++i) {
    int32_t ci = graph.probe_codeword[i];
    double dot = 0, nz = 0, nc = 0;
    for (int64_t j = 0; j < d; ++j) {
      double zv = z[i * d + j], cv = cw[ci * d + j];
      dot += zv * cv;
      nz += zv * zv;
      nc += cv * cv;
    }
    if (nz == 0.0 || nc == 0.0) {
      if (zero_norm_flag) *zero_norm_flag = true;
      continue;  // contributes 0
    }
    total += dot / std::sqrt(nz * nc);
  }
  return total / static_cast<double>(k);
}

topology::ProbeGraph reencode(const Tensor& recent_fields,
                              const vq::VqModel& model, uint64_t seed) {
  if (recent_fields.rank() != 4)
    throw std::invalid_argument("reencode: window must be (l, C, h, w)");
  Tensor latents = vq::encode_field(recent_fields, model.encoder);
  vq::VQAssignment assignment = vq::quantize(
      latents, model.codebook, recent_fields.dim(2), recent_fields.dim(3));
  return topology::build_probe_graph(recent_fields, assignment, seed);
}

Tensor decode_window(const topology::ProbeGraph& graph,
                     const diffusion::Denoiser& denoiser,
                     const diffusion::NoiseSchedule& schedule,
                     const diffusion::GuidanceConfig& guidance, Rng& rng) {
  int64_t l = graph.lookback(), C = graph.channels();
  int64_t h = graph.region_map.h, w = graph.region_map.w;
  Tensor out({l, C, h, w});
  for (int64_t t = 0; t < l; ++t) {
    Tensor f = diffusion::guided_reconstruct(graph, t, denoiser, schedule,
                                             guidance, rng);
    out.vec().segment(t * C * h * w, C * h * w) = f.vec();
  }
  return out;
}

RolloutReport adaptive_rollout(const Tensor& initial_window, int64_t horizon,
                               const Models& models,
                               const AdaptationConfig& config, uint64_t seed) {
  config.validate();
  if (!models.vq || !models.predictor || !models.denoiser || !models.schedule)
    throw std::invalid_argument("adaptive_rollout: missing model");
  if (initial_window.rank() != 4)
    throw std::invalid_argument("adaptive_rollout: window must be (l, C, h, w)");
  const auto& enc = models.vq->encoder;
  if (initial_window.dim(0) != enc.lookback ||
      initial_window.dim(1) != enc.channels)
    throw std::invalid_argument(
        "adaptive_rollout: window does not match the encoder lookback/channels");
  if (models.predictor->lookback != enc.lookback ||
      models.predictor->channels != enc.channels)
    throw std::invalid_argument(
        "adaptive_rollout: predictor and encoder shapes disagree");
  if (models.denoiser->cfg.data_channels != enc.channels)
    throw std::invalid_argument(
        "adaptive_rollout: denoiser channel count disagrees");
  if (horizon < 1) throw std::invalid_argument("adaptive_rollout: horizon < 1");

  Rng decode_rng = Rng::stream(seed, "adaptation-decode");
  RolloutReport report;
  int64_t C = initial_window.dim(1), h = initial_window.dim(2),
          w = initial_window.dim(3);

  auto t0 = Clock::now();
  topology::ProbeGraph graph = reencode(initial_window, *models.vq, seed);
  report.wall_reencode_s += seconds_since(t0);

  std::vector<Tensor> decoded;
  int64_t event_count = 0;
  for (int64_t step = 0; step < horizon; ++step) {
    t0 = Clock::now();
    Tensor pred = predictor::predict_step(*models.predictor, graph);  // (k, C)
    shift_window(graph.probe_states, pred);
    report.wall_predict_s += seconds_since(t0);
    report.probe_trajectories.push_back(pred);
    report.chi_trace.push_back(latent_consistency(
        graph, enc, models.vq->codebook, &report.zero_norm_flagged));

    bool decode_now =
        config.decode_every > 0 && ((step + 1) % config.decode_every == 0 ||
                                    step == horizon - 1);
    if (decode_now) {
      t0 = Clock::now();
      Tensor field = diffusion::guided_reconstruct(
          graph, graph.lookback() - 1, *models.denoiser, *models.schedule,
          models.guidance, decode_rng);
      report.wall_decode_s += seconds_since(t0);
      decoded.push_back(std::move(field));
      report.decoded_steps.push_back(step);
    }

    bool trigger = false;
    if (config.mode == Mode::kAdaptive)
      trigger = report.chi_trace.back() < config.tau;
    else if (config.mode == Mode::kFixedInterval)
      trigger = (step + 1) % config.interval == 0;
    if (trigger) {
      t0 = Clock::now();
      Tensor frames =
          config.decode_on_reencode
              ? decode_window(graph, *models.denoiser, *models.schedule,
                              models.guidance, decode_rng)
              : fill_all_frames(graph);
      ++event_count;
      graph = reencode(frames, *models.vq, Rng::splitmix64(seed + event_count));
      report.wall_reencode_s += seconds_since(t0);
      report.reencode_events.push_back({step, graph.k()});
    }
  }

  int64_t nd = static_cast<int64_t>(decoded.size());
  report.predicted_fields = Tensor({nd, C, h, w});
  for (int64_t i = 0; i < nd; ++i)
    report.predicted_fields.vec().segment(i * C * h * w, C * h * w) =
        decoded[i].vec();
  return report;
}

void save_rollout_report(const std::string& dir, const RolloutReport& report) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json j;
  j["decoded_steps"] = report.decoded_steps;
  j["chi_trace"] = report.chi_trace;
  j["zero_norm_flagged"] = report.zero_norm_flagged;
  j["wall_predict_s"] = report.wall_predict_s;
  j["wall_decode_s"] = report.wall_decode_s;
  j["wall_reencode_s"] = report.wall_reencode_s;
  j["fields_shape"] = report.predicted_fields.shape();
  nlohmann::json events = nlohmann::json::array();
  for (const auto& e : report.reencode_events)
    events.push_back({{"step", e.step}, {"probe_count", e.probe_count}});
  j["reencode_events"] = events;
  nlohmann::json probes = nlohmann::json::array();
  for (const auto& p : report.probe_trajectories) probes.push_back(p.shape());
  j["probe_shapes"] = probes;
  std::ofstream out(fs::path(dir) / "report.json");
  out << j.dump(2) << "\n";
  write_f32_tensor((fs::path(dir) / "fields.bin").string(),
                   report.predicted_fields);
  for (size_t i = 0; i < report.probe_trajectories.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "probes_%04zu.bin", i);
    write_f32_tensor((fs::path(dir) / name).string(),
                     report.probe_trajectories[i]);
  }
}

RolloutReport load_rollout_report(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream in(fs::path(dir) / "report.json");
  if (!in) throw std::runtime_error("rollout report not found in " + dir);
  nlohmann::json j;
  in >> j;
  RolloutReport r;
  r.decoded_steps = j.at("decoded_steps").get<std::vector<int64_t>>();
  r.chi_trace = j.at("chi_trace").get<std::vector<double>>();
  r.zero_norm_flagged = j.at("zero_norm_flagged").get<bool>();
  r.wall_predict_s = j.at("wall_predict_s").get<double>();
  r.wall_decode_s = j.at("wall_decode_s").get<double>();
  r.wall_reencode_s = j.at("wall_reencode_s").get<double>();
  for (const auto& e : j.at("reencode_events"))
    r.reencode_events.push_back({e.at("step").get<int64_t>(),
                                 e.at("probe_count").get<int64_t>()});
  auto fshape = j.at("fields_shape").get<std::vector<int64_t>>();
  r.predicted_fields =
      read_f32_tensor((fs::path(dir) / "fields.bin").string(), fshape);
  auto pshapes = j.at("probe_shapes").get<std::vector<std::vector<int64_t>>>();
  for (size_t i = 0; i < pshapes.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "probes_%04zu.bin", i);
    r.probe_trajectories.push_back(
        read_f32_tensor((fs::path(dir) / name).string(), pshapes[i]));
  }
  return r;
}

}  // namespace sparsediff::adaptation
