#pragma once

#include <cstdint>
#include <vector>

#include "sparsediff/nn.hpp"
#include "sparsediff/topology.hpp"

namespace sparsediff::predictor {

struct GrandConfig {
  int64_t feature_dim = 64;  // F
  int64_t heads = 4;
  int64_t d_k = 16;
  int64_t hidden = 64;       // phi/psi hidden width
  double ode_time = 1.0;     // latent time per forecast step
  int64_t substeps = 4;      // classical RK4 substeps
  bool freeze_attention = false;  // freeze A at h0 instead of per-stage recompute
  bool use_edge_weights = true;   // false: W_E pinned to 0 (unweighted ablation)
  bool sqrt_dk_scaling = false;   // divide logits by sqrt(d_k) instead of d_k
};

/// Graph neural ODE on the probe graph: h evolves by dh/dtau = (A - I) h with
/// attention-derived row-stochastic A.
struct GrandModel {
  nn::Mlp phi;  // (l*C -> hidden -> F) probe encoder
  nn::Mlp psi;  // (F -> hidden -> C) next-step increment decoder
  std::vector<ad::Var> w_q, w_k;  // per head, (F, d_k)
  std::vector<ad::Var> w_e;       // per head, scalar edge projection
  GrandConfig cfg;
  int64_t lookback = 0;
  int64_t channels = 0;

  std::vector<ad::Var> params() const;
  int64_t param_count() const;
};

GrandModel make_grand_model(int64_t lookback, int64_t channels,
                            const GrandConfig& cfg, Rng& rng);

/// Single-head attention matrix: softmax_j of
/// ((W_K h_i)^T (W_Q h_j) + W_E e_ij) / d_k.
ad::Var attention_coeffs(const GrandModel& model, int head, const ad::Var& h,
                         const ad::Var& edge_weights);

/// Mean of per-head attention matrices; remains row-stochastic.
ad::Var multihead_A(const GrandModel& model, const ad::Var& h,
                    const ad::Var& edge_weights);

ad::Var grand_rhs(const ad::Var& h, const ad::Var& attention);

/// Classical RK4 with fixed step t/substeps. The attention matrix is
/// recomputed from the current h at every stage unless cfg.freeze_attention.
ad::Var integrate_rk4(const GrandModel& model, const ad::Var& h0,
                      const ad::Var& edge_weights, double t, int64_t substeps);

/// Flattens (k,l,C) probe states to the (k, l*C) layout phi consumes
/// (feature index c*l + t, matching the temporal encoder).
Tensor flatten_probe_states(const Tensor& states);

/// Tape path used by training; graph states must hold l past steps.
ad::Var predict_step_var(const GrandModel& model, const ad::Var& states_flat,
                         const ad::Var& edge_weights);

/// psi applied after integrating to t: the probes' next-step values (k, C).
Tensor predict_step(const GrandModel& model, const topology::ProbeGraph& graph);

/// Autoregressive probe rollout with fixed topology; returns (n_steps, k, C).
Tensor rollout_probes(const GrandModel& model, const topology::ProbeGraph& graph,
                      int64_t n_steps);

struct PredictorTrainConfig {
  GrandConfig grand;
  double lr = 1e-3;
  int64_t steps = 2000;
  int64_t batch = 4;
  uint64_t seed = 0;
};

struct PredictorTrainLog {
  std::vector<double> loss_per_step;
  int64_t param_count = 0;
};

/// Teacher-forced one-step MSE on (graph, next-step target) pairs.
GrandModel train_predictor(
    const std::vector<std::pair<topology::ProbeGraph, Tensor>>& pairs,
    int64_t lookback, int64_t channels, const PredictorTrainConfig& config,
    PredictorTrainLog* log = nullptr);

}  // namespace sparsediff::predictor
