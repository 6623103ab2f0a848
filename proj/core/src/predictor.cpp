#include "sparsediff/predictor.hpp"

#include <cmath>
#include <stdexcept>

namespace sparsediff::predictor {

std::vector<ad::Var> GrandModel::params() const {
  std::vector<ad::Var> out = phi.params();
  for (const auto& p : psi.params()) out.push_back(p);
  for (const auto& p : w_q) out.push_back(p);
  for (const auto& p : w_k) out.push_back(p);
  if (cfg.use_edge_weights)
    for (const auto& p : w_e) out.push_back(p);
  return out;
}

int64_t GrandModel::param_count() const { return nn::param_count(params()); }

GrandModel make_grand_model(int64_t lookback, int64_t channels,
                            const GrandConfig& cfg, Rng& rng) {
  if (cfg.heads < 1) throw std::invalid_argument("grand: heads must be >= 1");
  GrandModel m;
  m.cfg = cfg;
  m.lookback = lookback;
  m.channels = channels;
  m.phi = nn::Mlp({lookback * channels, cfg.hidden, cfg.feature_dim},
                  nn::Act::kSilu, rng);
  m.psi = nn::Mlp({cfg.feature_dim, cfg.hidden, channels}, nn::Act::kSilu, rng);
  // Zero the increment head so a fresh model starts as a persistence forecast.
  m.psi.layers.back().w->value.vec().setZero();
  m.psi.layers.back().b->value.vec().setZero();
  double bound = std::sqrt(6.0 / static_cast<double>(cfg.feature_dim + cfg.d_k));
  for (int64_t head = 0; head < cfg.heads; ++head) {
    Tensor wq({cfg.feature_dim, cfg.d_k}), wk({cfg.feature_dim, cfg.d_k});
    for (int64_t i = 0; i < wq.numel(); ++i) wq[i] = rng.uniform(-bound, bound);
    for (int64_t i = 0; i < wk.numel(); ++i) wk[i] = rng.uniform(-bound, bound);
    m.w_q.push_back(ad::param(std::move(wq)));
    m.w_k.push_back(ad::param(std::move(wk)));
    m.w_e.push_back(ad::param(Tensor::scalar(rng.uniform(-0.5, 0.5))));
  }
  return m;
}

ad::Var attention_coeffs(const GrandModel& model, int head, const ad::Var& h,
                         const ad::Var& edge_weights) {
  const auto& cfg = model.cfg;
  // logits_ij = (W_K h_i)^T (W_Q h_j) => (H W_K)(H W_Q)^T
  ad::Var hk = ad::matmul(h, model.w_k[static_cast<size_t>(head)]);
  ad::Var hq = ad::matmul(h, model.w_q[static_cast<size_t>(head)]);
  ad::Var logits = ad::matmul(hk, ad::transpose(hq));
  if (cfg.use_edge_weights)
    logits = ad::add(logits,
                     ad::scale_by(edge_weights, model.w_e[static_cast<size_t>(head)]));
  double denom = cfg.sqrt_dk_scaling ? std::sqrt(static_cast<double>(cfg.d_k))
                                     : static_cast<double>(cfg.d_k);
  return ad::softmax_rows(ad::scale(logits, 1.0 / denom));
}

ad::Var multihead_A(const GrandModel& model, const ad::Var& h,
                    const ad::Var& edge_weights) {
  ad::Var acc = attention_coeffs(model, 0, h, edge_weights);
  for (int head = 1; head < model.cfg.heads; ++head)
    acc = ad::add(acc, attention_coeffs(model, head, h, edge_weights));
  return ad::scale(acc, 1.0 / static_cast<double>(model.cfg.heads));
}

ad::Var grand_rhs(const ad::Var& h, const ad::Var& attention) {
  return ad::sub(ad::matmul(attention, h), h);
}

ad::Var integrate_rk4(const GrandModel& model, const ad::Var& h0,
                      const ad::Var& edge_weights, double t, int64_t substeps) {
  if (substeps < 1) throw std::invalid_argument("integrate_rk4: substeps >= 1");
  ad::Var frozen_a;
  if (model.cfg.freeze_attention) frozen_a = multihead_A(model, h0, edge_weights);
  auto rhs = [&](const ad::Var& h) {
    ad::Var a = model.cfg.freeze_attention ? frozen_a
                                           : multihead_A(model, h, edge_weights);
    return grand_rhs(h, a);
  };
  double dt = t / static_cast<double>(substeps);
  ad::Var h = h0;
  for (int64_t s = 0; s < substeps; ++s) {
    ad::Var k1 = rhs(h);
    ad::Var k2 = rhs(ad::add(h, ad::scale(k1, dt / 2)));
    ad::Var k3 = rhs(ad::add(h, ad::scale(k2, dt / 2)));
    ad::Var k4 = rhs(ad::add(h, ad::scale(k3, dt)));
    ad::Var incr = ad::add(ad::add(k1, ad::scale(ad::add(k2, k3), 2.0)), k4);
    h = ad::add(h, ad::scale(incr, dt / 6.0));
    if (!h->value.all_finite())
      throw std::runtime_error("integrate_rk4: non-finite state");
  }
  return h;
}

Tensor flatten_probe_states(const Tensor& states) {
  const int64_t k = states.dim(0), l = states.dim(1), C = states.dim(2);
  Tensor flat({k, l * C});
  for (int64_t i = 0; i < k; ++i)
    for (int64_t t = 0; t < l; ++t)
      for (int64_t c = 0; c < C; ++c)
        flat[i * l * C + c * l + t] = states[(i * l + t) * C + c];
  return flat;
}

ad::Var predict_step_var(const GrandModel& model, const ad::Var& states_flat,
                         const ad::Var& edge_weights) {
  if (states_flat->value.dim(1) != model.lookback * model.channels)
    throw std::invalid_argument("predict_step: state width != lookback * channels");
  ad::Var h0 = model.phi(states_flat);
  ad::Var ht = integrate_rk4(model, h0, edge_weights, model.cfg.ode_time,
                             model.cfg.substeps);
  // Residual readout: psi predicts the increment over the most recent frame,
  // so an untrained decoder already matches a persistence forecast.
  const int64_t l = model.lookback, C = model.channels;
  Tensor select({l * C, C}, 0.0);
  for (int64_t c = 0; c < C; ++c) select[(c * l + l - 1) * C + c] = 1.0;
  ad::Var last = ad::matmul(states_flat, ad::constant(select));
  return ad::add(last, model.psi(ht));
}

Tensor predict_step(const GrandModel& model, const topology::ProbeGraph& graph) {
  ad::Var out = predict_step_var(model, ad::constant(flatten_probe_states(graph.probe_states)),
                                 ad::constant(graph.edge_weights));
  return out->value;
}

Tensor rollout_probes(const GrandModel& model, const topology::ProbeGraph& graph,
                      int64_t n_steps) {
  const int64_t k = graph.k(), l = graph.lookback(), C = graph.channels();
  if (n_steps < 0) throw std::invalid_argument("rollout_probes: n_steps < 0");
  Tensor out({n_steps, k, C});
  if (n_steps == 0) return out;
  Tensor states = graph.probe_states;  // (k, l, C)
  ad::Var edges = ad::constant(graph.edge_weights);
  for (int64_t step = 0; step < n_steps; ++step) {
    ad::Var pred = predict_step_var(
        model, ad::constant(flatten_probe_states(states)), edges);
    for (int64_t i = 0; i < k; ++i)
      for (int64_t c = 0; c < C; ++c)
        out[(step * k + i) * C + c] = pred->value[i * C + c];
    // Shift the lookback window: drop the oldest frame, append the prediction.
    for (int64_t i = 0; i < k; ++i) {
      for (int64_t t = 0; t + 1 < l; ++t)
        for (int64_t c = 0; c < C; ++c)
          states[(i * l + t) * C + c] = states[(i * l + t + 1) * C + c];
      for (int64_t c = 0; c < C; ++c)
        states[(i * l + l - 1) * C + c] = pred->value[i * C + c];
    }
  }
  return out;
}

GrandModel train_predictor(
    const std::vector<std::pair<topology::ProbeGraph, Tensor>>& pairs,
    int64_t lookback, int64_t channels, const PredictorTrainConfig& config,
    PredictorTrainLog* log) {
  if (pairs.empty()) throw std::invalid_argument("train_predictor: no pairs");
  Rng rng(config.seed);
  GrandModel model = make_grand_model(lookback, channels, config.grand, rng);
  nn::Adam opt(model.params(), config.lr);
  if (log) log->param_count = model.param_count();

  for (int64_t step = 0; step < config.steps; ++step) {
    opt.zero_grad();
    ad::Var loss;
    for (int64_t b = 0; b < config.batch; ++b) {
      const auto& [graph, target] = pairs[static_cast<size_t>(
          rng.uniform_int(0, static_cast<int64_t>(pairs.size()) - 1))];
      ad::Var pred = predict_step_var(
          model, ad::constant(flatten_probe_states(graph.probe_states)),
          ad::constant(graph.edge_weights));
      ad::Var term = ad::mse(pred, ad::constant(target));
      loss = loss ? ad::add(loss, term) : term;
    }
    loss = ad::scale(loss, 1.0 / static_cast<double>(config.batch));
    double lv = loss->value[0];
    if (!std::isfinite(lv))
      throw std::runtime_error("train_predictor: loss diverged at step " +
                               std::to_string(step));
    if (log) log->loss_per_step.push_back(lv);
    ad::backward(loss);
    opt.step();
  }
  return model;
}

}  // namespace sparsediff::predictor
