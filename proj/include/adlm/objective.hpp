#pragma once

#include "adlm/corpus.hpp"
#include "adlm/predictor.hpp"
#include "adlm/rng.hpp"
#include "adlm/schedule.hpp"
#include "adlm/types.hpp"

#include <functional>
#include <vector>

namespace adlm {

// Loss decomposition in nats. All components are nonnegative;
// total = reconstruction + diffusion + gamma * anchor.
struct LossReport {
  double reconstruction = 0.0;
  double diffusion = 0.0;
  double anchor = 0.0;
  double total = 0.0;
  double per_token_bound = 0.0;
};

enum class Optimizer { Sgd, Adam };

struct TrainConfig {
  double gamma = 3e-3;
  int tau = 5;
  int steps = 128;
  int mc_samples = 1;
  double lr = 0.5;
  int batch = 16;
  int epochs = 10;
  std::uint64_t seed = 0;
  bool exact_grid = false;
  bool cosine_decay = false;
  Optimizer optimizer = Optimizer::Sgd;  // adaptive moments are optional
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
};

enum class TrainObjective { Nelbo, Anelbo, Ar, A2r };

// One sampled corruption: step index, the corrupted sequence, and the
// estimator weight (T/mc_samples in Monte Carlo mode, 1 per step in
// exact-grid mode).
struct StepDraw {
  int index = 0;
  double weight = 1.0;
  TokenSeq z_t;
};

struct DrawPlan {
  int vocab_size = 0;
  TokenSeq z0;
  std::vector<StepDraw> steps;
};

TokenSeq corrupt(const TokenSeq& x, double alpha_t, int vocab_size, Rng& rng);

// Shared randomness for estimator-identity and gradient checks: both the
// plain and the tape-based losses consume a plan instead of an rng.
DrawPlan make_draw_plan(const TokenSeq& x, int vocab_size, const TimeGrid& grid,
                        const NoiseSchedule& sched, int mc_samples,
                        bool exact_grid, Rng& rng);

// Masked-token bound with the sigma-free weight (alpha_s - alpha_t)/(1 -
// alpha_t); requires a remask-free schedule.
LossReport nelbo_on_plan(const PredictFn& pred, const TokenSeq& x,
                         const DrawPlan& plan, const TimeGrid& grid,
                         const NoiseSchedule& sched);
LossReport nelbo(const PredictFn& pred, const TokenSeq& x,
                 const TimeGrid& grid, const NoiseSchedule& sched, Rng& rng,
                 int mc_samples = 1, bool exact_grid = false);

// Anchored bound: denoiser terms at masked positions, anchor terms at
// positions that are both masked and important, both carrying the same
// per-step weight.
LossReport anelbo_on_plan(const PredictFn& pred, const TokenSeq& x,
                          const AnchorMask& mask, double gamma,
                          const DrawPlan& plan, const TimeGrid& grid,
                          const NoiseSchedule& sched);

// Time-dependent anchor strength. The report's anchor field holds the
// already-weighted sum over steps and total = reconstruction + diffusion +
// anchor; with a constant schedule this reduces to the plain form.
using GammaSchedule = std::function<double(int step_index)>;
LossReport anelbo_on_plan(const PredictFn& pred, const TokenSeq& x,
                          const AnchorMask& mask, const GammaSchedule& gamma_at,
                          const DrawPlan& plan, const TimeGrid& grid,
                          const NoiseSchedule& sched);
LossReport anelbo(const PredictFn& pred, const TokenSeq& x,
                  const AnchorMask& mask, double gamma, const TimeGrid& grid,
                  const NoiseSchedule& sched, Rng& rng, int mc_samples = 1,
                  bool exact_grid = false);

double anchor_loss_on_plan(const PredictFn& pred, const TokenSeq& x,
                           const AnchorMask& mask, const DrawPlan& plan,
                           const TimeGrid& grid, const NoiseSchedule& sched);
double anchor_loss(const PredictFn& pred, const TokenSeq& x,
                   const AnchorMask& mask, const TimeGrid& grid,
                   const NoiseSchedule& sched, Rng& rng, int mc_samples = 1,
                   bool exact_grid = false);

// Causal objective: next-token terms at every position, anchor terms at
// important positions.
LossReport a2r_loss(const PredictFn& causal_pred, const TokenSeq& x,
                    const AnchorMask& mask, double gamma);

// Per-step divergence audit on enumeration-tractable models: the left side
// enumerates the divergences between the oracle-substituted posterior and
// the model posterior outcome by outcome; the right side is the weighted
// log-probability form. Unmasked positions must contribute exactly zero.
struct KlCheck {
  double enumerated = 0.0;
  double closed_form = 0.0;
  double case1_abs_max = 0.0;
};
KlCheck kl_decomposition_check(const PredictFn& pred, const TokenSeq& x,
                               const AnchorMask& mask, double gamma, int step,
                               const TimeGrid& grid,
                               const NoiseSchedule& sched);

// Differentiable losses share the plan with their plain counterparts. The
// report carries the same decomposition evaluated at the current parameters.
struct TapeLoss {
  ad::Tape::Var loss;
  LossReport report;
};
enum class TapeLossKind { Anelbo, Nelbo, AnchorOnly };
TapeLoss anelbo_tape(ad::Tape& tape, const NeuralPredictor& model,
                     const std::vector<ad::Tape::Var>& param_vars,
                     const TokenSeq& x, const AnchorMask& mask, double gamma,
                     const DrawPlan& plan, const TimeGrid& grid,
                     const NoiseSchedule& sched,
                     TapeLossKind kind = TapeLossKind::Anelbo);
TapeLoss a2r_tape(ad::Tape& tape, const NeuralPredictor& model,
                  const std::vector<ad::Tape::Var>& param_vars,
                  const TokenSeq& x, const AnchorMask& mask, double gamma,
                  bool with_anchor);

// Reverse-mode gradients for every parameter tensor of the model under an
// arbitrary scalar tape loss. Throws on a non-finite loss value.
using TapeLossBuilder = std::function<ad::Tape::Var(
    ad::Tape&, const std::vector<ad::Tape::Var>&)>;
std::vector<ad::Matrix> gradients(const NeuralPredictor& model,
                                  const TapeLossBuilder& build);

struct TrainResult {
  std::vector<LossReport> epoch_series;  // mean per-sequence report per epoch
};

using EpochCallback =
    std::function<void(int epoch, const NeuralPredictor&, const LossReport&)>;

// Mini-batch gradient descent with a fixed step size (optional cosine
// decay). Deterministic given the seed: fixed shuffle, fixed batch-order
// summation. Aborts with a diagnostic if the loss turns non-finite.
TrainResult train(NeuralPredictor& model, const std::vector<TokenSeq>& data,
                  const TrainConfig& cfg, TrainObjective objective,
                  const TimeGrid& grid, const NoiseSchedule& sched, Rng& rng,
                  const EpochCallback& on_epoch = nullptr);

std::string loss_csv_header();
std::string loss_csv_row(int epoch, const LossReport& r);

}  // namespace adlm
