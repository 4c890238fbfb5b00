#include "adlm/objective.hpp"

#include "adlm/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace adlm {

namespace {

double nelbo_step_weight(int i, const NoiseSchedule& sched,
                         const TimeGrid& grid) {
  const double alpha_t = sched.alpha(grid.t(i));
  const double alpha_s = sched.alpha(grid.s(i));
  return (alpha_s - alpha_t) / (1.0 - alpha_t);
}

void finalize(LossReport& r, double gamma, Eigen::Index L) {
  r.total = r.reconstruction + r.diffusion + gamma * r.anchor;
  r.per_token_bound = r.total / static_cast<double>(L);
}

// Reconstruction leg: contributions only at positions masked in z0, which is
// empty whenever alpha(0) = 1. The predictor is not evaluated in that case.
double reconstruction_term(const PredictFn& pred, const TokenSeq& x,
                           const TokenSeq& z0, int mask) {
  bool any_masked = false;
  for (Eigen::Index l = 0; l < z0.size(); ++l)
    if (z0(l) == mask) any_masked = true;
  if (!any_masked) return 0.0;
  const PredictorOutput out = pred(z0);
  double acc = 0.0;
  for (Eigen::Index l = 0; l < z0.size(); ++l)
    if (z0(l) == mask) acc -= std::log(out.denoise(l, x(l)));
  return acc;
}

}  // namespace

TokenSeq corrupt(const TokenSeq& x, double alpha_t, int vocab_size, Rng& rng) {
  const int mask = vocab_size - 1;
  TokenSeq z = x;
  for (Eigen::Index l = 0; l < x.size(); ++l)
    if (!rng.bernoulli(alpha_t)) z(l) = mask;
  return z;
}

DrawPlan make_draw_plan(const TokenSeq& x, int vocab_size,
                        const TimeGrid& grid, const NoiseSchedule& sched,
                        int mc_samples, bool exact_grid, Rng& rng) {
  require(mc_samples >= 1, "mc_samples must be positive");
  DrawPlan plan;
  plan.vocab_size = vocab_size;
  plan.z0 = x;  // alpha(0) = 1: the time-zero corruption is the identity
  if (exact_grid) {
    plan.steps.reserve(grid.steps);
    for (int i = 1; i <= grid.steps; ++i)
      plan.steps.push_back(
          {i, 1.0, corrupt(x, sched.alpha(grid.t(i)), vocab_size, rng)});
  } else {
    plan.steps.reserve(mc_samples);
    const double weight =
        static_cast<double>(grid.steps) / static_cast<double>(mc_samples);
    for (int n = 0; n < mc_samples; ++n) {
      const int i = 1 + rng.uniform_int(grid.steps);
      plan.steps.push_back(
          {i, weight, corrupt(x, sched.alpha(grid.t(i)), vocab_size, rng)});
    }
  }
  return plan;
}

LossReport nelbo_on_plan(const PredictFn& pred, const TokenSeq& x,
                         const DrawPlan& plan, const TimeGrid& grid,
                         const NoiseSchedule& sched) {
  require(sched.kind() != ScheduleKind::LoopRemask,
          "masked-token bound requires a remask-free schedule");
  require(plan.vocab_size >= 2, "draw plan carries no vocabulary size");
  LossReport r;
  const int mask = plan.vocab_size - 1;
  r.reconstruction = reconstruction_term(pred, x, plan.z0, mask);
  for (const StepDraw& draw : plan.steps) {
    const double w = nelbo_step_weight(draw.index, sched, grid);
    bool any = false;
    for (Eigen::Index l = 0; l < x.size(); ++l)
      if (draw.z_t(l) == mask) any = true;
    if (!any) continue;
    const PredictorOutput out = pred(draw.z_t);
    for (Eigen::Index l = 0; l < x.size(); ++l)
      if (draw.z_t(l) == mask)
        r.diffusion += draw.weight * w * (-std::log(out.denoise(l, x(l))));
  }
  finalize(r, 0.0, x.size());
  return r;
}

namespace {

// Core accumulation shared by the constant and time-dependent anchor
// strengths; anchor_scale(i) multiplies the anchor term of step i before it
// enters the report.
LossReport anelbo_accumulate(const PredictFn& pred, const TokenSeq& x,
                             const AnchorMask& mask_info,
                             const std::function<double(int)>& anchor_scale,
                             const DrawPlan& plan, const TimeGrid& grid,
                             const NoiseSchedule& sched) {
  require(mask_info.important.size() == x.size(),
          "anchor mask length mismatch");
  require(plan.vocab_size >= 2, "draw plan carries no vocabulary size");
  LossReport r;
  const int mask = plan.vocab_size - 1;
  r.reconstruction = reconstruction_term(pred, x, plan.z0, mask);
  for (const StepDraw& draw : plan.steps) {
    // -lambda equals the masked-case prediction coefficient.
    const double w = step_coefficients(draw.index, sched, grid).predict_mass;
    const double scale = anchor_scale(draw.index);
    bool any = false;
    for (Eigen::Index l = 0; l < x.size(); ++l)
      if (draw.z_t(l) == mask) any = true;
    if (!any) continue;
    const PredictorOutput out = pred(draw.z_t);
    for (Eigen::Index l = 0; l < x.size(); ++l) {
      if (draw.z_t(l) != mask) continue;
      r.diffusion += draw.weight * w * (-std::log(out.denoise(l, x(l))));
      if (mask_info.important(l))
        r.anchor += scale * draw.weight * w *
                    (-std::log(out.anchor(l, mask_info.targets(l))));
    }
  }
  return r;
}

}  // namespace

LossReport anelbo_on_plan(const PredictFn& pred, const TokenSeq& x,
                          const AnchorMask& mask_info, double gamma,
                          const DrawPlan& plan, const TimeGrid& grid,
                          const NoiseSchedule& sched) {
  LossReport r = anelbo_accumulate(pred, x, mask_info,
                                   [](int) { return 1.0; }, plan, grid, sched);
  finalize(r, gamma, x.size());
  return r;
}

LossReport anelbo_on_plan(const PredictFn& pred, const TokenSeq& x,
                          const AnchorMask& mask_info,
                          const GammaSchedule& gamma_at, const DrawPlan& plan,
                          const TimeGrid& grid, const NoiseSchedule& sched) {
  LossReport r = anelbo_accumulate(pred, x, mask_info, gamma_at, plan, grid,
                                   sched);
  finalize(r, 1.0, x.size());
  return r;
}

LossReport nelbo(const PredictFn& pred, const TokenSeq& x,
                 const TimeGrid& grid, const NoiseSchedule& sched, Rng& rng,
                 int mc_samples, bool exact_grid) {
  const PredictorOutput probe = pred(x);
  const int vocab = static_cast<int>(probe.denoise.cols());
  const DrawPlan plan =
      make_draw_plan(x, vocab, grid, sched, mc_samples, exact_grid, rng);
  return nelbo_on_plan(pred, x, plan, grid, sched);
}

LossReport anelbo(const PredictFn& pred, const TokenSeq& x,
                  const AnchorMask& mask, double gamma, const TimeGrid& grid,
                  const NoiseSchedule& sched, Rng& rng, int mc_samples,
                  bool exact_grid) {
  const PredictorOutput probe = pred(x);
  const int vocab = static_cast<int>(probe.denoise.cols());
  const DrawPlan plan =
      make_draw_plan(x, vocab, grid, sched, mc_samples, exact_grid, rng);
  return anelbo_on_plan(pred, x, mask, gamma, plan, grid, sched);
}

double anchor_loss_on_plan(const PredictFn& pred, const TokenSeq& x,
                           const AnchorMask& mask, const DrawPlan& plan,
                           const TimeGrid& grid, const NoiseSchedule& sched) {
  return anelbo_on_plan(pred, x, mask, 0.0, plan, grid, sched).anchor;
}

double anchor_loss(const PredictFn& pred, const TokenSeq& x,
                   const AnchorMask& mask, const TimeGrid& grid,
                   const NoiseSchedule& sched, Rng& rng, int mc_samples,
                   bool exact_grid) {
  return anelbo(pred, x, mask, 0.0, grid, sched, rng, mc_samples, exact_grid)
      .anchor;
}

LossReport a2r_loss(const PredictFn& causal_pred, const TokenSeq& x,
                    const AnchorMask& mask, double gamma) {
  require(mask.important.size() == x.size(), "anchor mask length mismatch");
  const PredictorOutput out = causal_pred(x);
  LossReport r;
  for (Eigen::Index l = 0; l < x.size(); ++l) {
    r.diffusion -= std::log(out.denoise(l, x(l)));
    if (mask.important(l)) r.anchor -= std::log(out.anchor(l, mask.targets(l)));
  }
  finalize(r, gamma, x.size());
  return r;
}

KlCheck kl_decomposition_check(const PredictFn& pred, const TokenSeq& x,
                               const AnchorMask& mask_info, double gamma,
                               int step, const TimeGrid& grid,
                               const NoiseSchedule& sched) {
  const int L = static_cast<int>(x.size());
  const PredictorOutput probe = pred(x);
  const int vocab = static_cast<int>(probe.denoise.cols());
  require(L <= 4 && vocab <= 5, "enumeration limited to L<=4, K<=4 data tokens");
  const int mask = vocab - 1;
  const StepCoefficients c = step_coefficients(step, sched, grid);

  MixtureSeq x_onehot = MixtureSeq::Zero(L, vocab);
  for (int l = 0; l < L; ++l) x_onehot(l, x(l)) = 1.0;
  MixtureSeq y_onehot = MixtureSeq::Zero(L, vocab);
  for (int l = 0; l < L; ++l)
    y_onehot(l, mask_info.important(l) ? mask_info.targets(l) : x(l)) = 1.0;

  const auto row_kl = [&](const Eigen::RowVectorXd& p,
                          const Eigen::RowVectorXd& q) {
    double kl = 0.0;
    for (Eigen::Index k = 0; k < p.size(); ++k) {
      if (p(k) <= 0.0) continue;
      kl += p(k) * std::log(p(k) / q(k));
    }
    return kl;
  };

  KlCheck out;
  for (unsigned bits = 0; bits < (1u << L); ++bits) {
    double weight = 1.0;
    TokenSeq z_t = x;
    for (int l = 0; l < L; ++l) {
      if (bits & (1u << l)) {
        z_t(l) = mask;
        weight *= 1.0 - c.alpha_t;
      } else {
        weight *= c.alpha_t;
      }
    }
    if (weight <= 0.0) continue;
    const PredictorOutput p = pred(z_t);
    const MixtureSeq target_den =
        anchored_posterior(z_t, x_onehot, c.alpha_t, c.alpha_s, c.sigma_t);
    const MixtureSeq model_den =
        anchored_posterior(z_t, p.denoise, c.alpha_t, c.alpha_s, c.sigma_t);
    const MixtureSeq target_anc = anchor_transition(
        z_t, y_onehot, mask_info, c.alpha_t, c.alpha_s, c.sigma_t);
    const MixtureSeq model_anc = anchor_transition(
        z_t, p.anchor, mask_info, c.alpha_t, c.alpha_s, c.sigma_t);
    for (int l = 0; l < L; ++l) {
      double enumerated = row_kl(target_den.row(l), model_den.row(l));
      if (mask_info.important(l))
        enumerated += gamma * row_kl(target_anc.row(l), model_anc.row(l));
      double closed = 0.0;
      if (z_t(l) == mask) {
        closed = c.predict_mass * (-std::log(p.denoise(l, x(l))));
        if (mask_info.important(l))
          closed += gamma * c.predict_mass *
                    (-std::log(p.anchor(l, mask_info.targets(l))));
      } else {
        out.case1_abs_max = std::max(out.case1_abs_max, std::abs(enumerated));
      }
      out.enumerated += weight * enumerated;
      out.closed_form += weight * closed;
    }
  }
  return out;
}

namespace {

struct TapeAccumulator {
  ad::Tape& tape;
  std::vector<ad::Tape::Var> pieces;
  void add(ad::Tape::Var v) { pieces.push_back(v); }
  ad::Tape::Var sum() {
    if (pieces.empty()) return tape.zero_scalar();
    return tape.add_scalars(pieces);
  }
};

}  // namespace

TapeLoss anelbo_tape(ad::Tape& tape, const NeuralPredictor& model,
                     const std::vector<ad::Tape::Var>& param_vars,
                     const TokenSeq& x, const AnchorMask& mask_info,
                     double gamma, const DrawPlan& plan, const TimeGrid& grid,
                     const NoiseSchedule& sched, TapeLossKind kind) {
  const int mask = model.config().vocab_size - 1;
  const bool want_denoiser = kind != TapeLossKind::AnchorOnly;
  const double anchor_scale = kind == TapeLossKind::Anelbo  ? gamma
                              : kind == TapeLossKind::Nelbo ? 0.0
                                                            : 1.0;
  TapeAccumulator acc{tape, {}};
  LossReport report;
  for (const StepDraw& draw : plan.steps) {
    const double w =
        kind == TapeLossKind::Nelbo
            ? nelbo_step_weight(draw.index, sched, grid)
            : step_coefficients(draw.index, sched, grid).predict_mass;
    std::vector<ad::GatherTerm> den_terms;
    std::vector<ad::GatherTerm> anc_terms;
    for (Eigen::Index l = 0; l < x.size(); ++l) {
      if (draw.z_t(l) != mask) continue;
      if (want_denoiser)
        den_terms.push_back({static_cast<int>(l), x(l), -draw.weight * w});
      if (anchor_scale > 0.0 && mask_info.important(l))
        anc_terms.push_back({static_cast<int>(l), mask_info.targets(l),
                             -draw.weight * w * anchor_scale});
    }
    if (den_terms.empty() && anc_terms.empty()) continue;
    const NeuralPredictor::TapeForward f = model.forward_with_vars(
        tape, param_vars, draw.z_t, /*causal=*/false, /*with_anchor=*/true);
    if (!den_terms.empty()) {
      ad::Tape::Var v = tape.weighted_log_sum(f.denoise_probs, den_terms);
      report.diffusion += tape.val(v)(0, 0);
      acc.add(v);
    }
    if (!anc_terms.empty()) {
      ad::Tape::Var v = tape.weighted_log_sum(f.anchor_probs, anc_terms);
      // anchor_scale is folded into the tape weights; the report keeps the
      // raw anchor component.
      report.anchor += tape.val(v)(0, 0) / anchor_scale;
      acc.add(v);
    }
  }
  // Reconstruction has no masked positions under alpha(0) = 1; nothing to
  // add to the tape.
  TapeLoss out{acc.sum(), report};
  out.report.total = out.report.reconstruction + out.report.diffusion +
                     gamma * out.report.anchor;
  out.report.per_token_bound =
      out.report.total / static_cast<double>(x.size());
  return out;
}

TapeLoss a2r_tape(ad::Tape& tape, const NeuralPredictor& model,
                  const std::vector<ad::Tape::Var>& param_vars,
                  const TokenSeq& x, const AnchorMask& mask_info, double gamma,
                  bool with_anchor) {
  TapeAccumulator acc{tape, {}};
  LossReport report;
  const NeuralPredictor::TapeForward f = model.forward_with_vars(
      tape, param_vars, x, /*causal=*/true, with_anchor);
  std::vector<ad::GatherTerm> den_terms;
  std::vector<ad::GatherTerm> anc_terms;
  for (Eigen::Index l = 0; l < x.size(); ++l) {
    den_terms.push_back({static_cast<int>(l), x(l), -1.0});
    if (with_anchor && gamma > 0.0 && mask_info.important(l))
      anc_terms.push_back({static_cast<int>(l), mask_info.targets(l), -gamma});
  }
  ad::Tape::Var den = tape.weighted_log_sum(f.denoise_probs, den_terms);
  report.diffusion = tape.val(den)(0, 0);
  acc.add(den);
  if (!anc_terms.empty()) {
    ad::Tape::Var anc = tape.weighted_log_sum(f.anchor_probs, anc_terms);
    report.anchor = tape.val(anc)(0, 0) / gamma;
    acc.add(anc);
  }
  TapeLoss out{acc.sum(), report};
  out.report.total = report.diffusion + gamma * report.anchor;
  out.report.per_token_bound = out.report.total / static_cast<double>(x.size());
  return out;
}

std::vector<ad::Matrix> gradients(const NeuralPredictor& model,
                                  const TapeLossBuilder& build) {
  ad::Tape tape;
  std::vector<ad::Tape::Var> param_vars;
  param_vars.reserve(model.tensor_count());
  for (int i = 0; i < model.tensor_count(); ++i)
    param_vars.push_back(tape.input(model.tensor(i)));
  ad::Tape::Var loss = build(tape, param_vars);
  const double value = tape.val(loss)(0, 0);
  if (!std::isfinite(value))
    throw std::runtime_error("non-finite loss in gradient computation");
  tape.backward(loss);
  std::vector<ad::Matrix> grads;
  grads.reserve(param_vars.size());
  for (ad::Tape::Var v : param_vars) grads.push_back(tape.grad(v));
  return grads;
}

TrainResult train(NeuralPredictor& model, const std::vector<TokenSeq>& data,
                  const TrainConfig& cfg, TrainObjective objective,
                  const TimeGrid& grid, const NoiseSchedule& sched, Rng& rng,
                  const EpochCallback& on_epoch) {
  require(!data.empty(), "training data is empty");
  require(cfg.batch >= 1 && cfg.epochs >= 1, "bad batch/epoch configuration");
  const int vocab = model.config().vocab_size;
  const double seq_len = static_cast<double>(data.front().size());

  std::vector<AnchorMask> masks;
  masks.reserve(data.size());
  for (const TokenSeq& x : data) masks.push_back(anchor_mask(x, cfg.tau));

  TrainResult result;
  std::vector<int> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  std::vector<ad::Matrix> adam_m, adam_v;
  long long adam_t = 0;
  if (cfg.optimizer == Optimizer::Adam) {
    for (int i = 0; i < model.tensor_count(); ++i) {
      adam_m.push_back(ad::Matrix::Zero(model.tensor(i).rows(),
                                        model.tensor(i).cols()));
      adam_v.push_back(adam_m.back());
    }
  }

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    // Fisher-Yates on our own draws keeps the visit order reproducible.
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
      std::swap(order[i], order[rng.uniform_int(i + 1)]);
    const double lr =
        cfg.cosine_decay
            ? cfg.lr * 0.5 *
                  (1.0 + std::cos(M_PI * (epoch - 1) / std::max(1, cfg.epochs)))
            : cfg.lr;

    LossReport epoch_mean;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t stop =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
      std::vector<ad::Matrix> batch_grads;
      for (std::size_t k = start; k < stop; ++k) {
        const TokenSeq& x = data[order[k]];
        const AnchorMask& mask = masks[order[k]];
        ad::Tape tape;
        std::vector<ad::Tape::Var> param_vars;
        TapeLoss loss{ad::Tape::Var{}, {}};
        // Gradients are scaled per token so the step size is independent of
        // the context length.
        if (objective == TrainObjective::Nelbo ||
            objective == TrainObjective::Anelbo) {
          const DrawPlan plan = make_draw_plan(x, vocab, grid, sched,
                                               cfg.mc_samples, cfg.exact_grid,
                                               rng);
          param_vars.reserve(model.tensor_count());
          for (int i = 0; i < model.tensor_count(); ++i)
            param_vars.push_back(tape.input(model.tensor(i)));
          loss = anelbo_tape(tape, model, param_vars, x, mask,
                             objective == TrainObjective::Anelbo ? cfg.gamma
                                                                 : 0.0,
                             plan, grid, sched,
                             objective == TrainObjective::Nelbo
                                 ? TapeLossKind::Nelbo
                                 : TapeLossKind::Anelbo);
        } else {
          param_vars.reserve(model.tensor_count());
          for (int i = 0; i < model.tensor_count(); ++i)
            param_vars.push_back(tape.input(model.tensor(i)));
          loss = a2r_tape(tape, model, param_vars, x, mask, cfg.gamma,
                          objective == TrainObjective::A2r);
        }
        const double value = tape.val(loss.loss)(0, 0);
        if (!std::isfinite(value))
          throw std::runtime_error(
              "training diverged: non-finite loss at epoch " +
              std::to_string(epoch));
        tape.backward(loss.loss);
        if (batch_grads.empty()) {
          batch_grads.reserve(param_vars.size());
          for (ad::Tape::Var v : param_vars) batch_grads.push_back(tape.grad(v));
        } else {
          for (std::size_t i = 0; i < param_vars.size(); ++i)
            batch_grads[i] += tape.grad(param_vars[i]);
        }
        epoch_mean.reconstruction += loss.report.reconstruction;
        epoch_mean.diffusion += loss.report.diffusion;
        epoch_mean.anchor += loss.report.anchor;
        epoch_mean.total += loss.report.total;
        ++seen;
      }
      const double scale = 1.0 / (static_cast<double>(stop - start) * seq_len);
      for (auto& g : batch_grads) g *= scale;
      if (cfg.optimizer == Optimizer::Adam) {
        ++adam_t;
        const double c1 = 1.0 - std::pow(cfg.adam_beta1, adam_t);
        const double c2 = 1.0 - std::pow(cfg.adam_beta2, adam_t);
        for (std::size_t i = 0; i < batch_grads.size(); ++i) {
          adam_m[i] = cfg.adam_beta1 * adam_m[i] +
                      (1.0 - cfg.adam_beta1) * batch_grads[i];
          adam_v[i] = cfg.adam_beta2 * adam_v[i] +
                      (1.0 - cfg.adam_beta2) *
                          batch_grads[i].cwiseProduct(batch_grads[i]);
          batch_grads[i] =
              (adam_m[i] / c1).cwiseQuotient(
                  ((adam_v[i] / c2).cwiseSqrt().array() + cfg.adam_eps)
                      .matrix());
        }
      }
      model.gradient_step(batch_grads, lr);
    }
    epoch_mean.reconstruction /= static_cast<double>(seen);
    epoch_mean.diffusion /= static_cast<double>(seen);
    epoch_mean.anchor /= static_cast<double>(seen);
    epoch_mean.total /= static_cast<double>(seen);
    epoch_mean.per_token_bound = epoch_mean.total / seq_len;
    result.epoch_series.push_back(epoch_mean);
    if (on_epoch) on_epoch(epoch, model, epoch_mean);
  }
  return result;
}

std::string loss_csv_header() {
  return "epoch,reconstruction,diffusion,anchor,total,per_token_bound";
}

std::string loss_csv_row(int epoch, const LossReport& r) {
  std::ostringstream ss;
  ss.precision(17);
  ss << epoch << ',' << r.reconstruction << ',' << r.diffusion << ','
     << r.anchor << ',' << r.total << ',' << r.per_token_bound;
  return ss.str();
}

}  // namespace adlm
