#include "adlm/sampler.hpp"

#include "adlm/diffusion.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

namespace adlm {

PosteriorRow nucleus_truncate(const PosteriorRow& row, double top_p) {
  require(top_p > 0.0 && top_p <= 1.0, "top_p outside (0,1]");
  const int mask = static_cast<int>(row.size()) - 1;
  const double non_mask_mass = row.sum() - row(mask);
  if (non_mask_mass <= 0.0) return row;

  std::vector<int> ids(mask);
  std::iota(ids.begin(), ids.end(), 0);
  std::sort(ids.begin(), ids.end(), [&](int a, int b) {
    if (row(a) != row(b)) return row(a) > row(b);
    return a < b;
  });
  double cum = 0.0;
  std::size_t kept = ids.size();
  for (std::size_t k = 0; k < ids.size(); ++k) {
    cum += row(ids[k]);
    if (cum >= top_p) {
      kept = k + 1;
      break;
    }
  }
  if (kept == ids.size()) return row;  // nothing dropped (includes top_p = 1)

  double kept_mass = 0.0;
  for (std::size_t k = 0; k < kept; ++k) kept_mass += row(ids[k]);
  PosteriorRow out = PosteriorRow::Zero(row.size());
  out(mask) = row(mask);
  const double scale = non_mask_mass / kept_mass;
  for (std::size_t k = 0; k < kept; ++k) out(ids[k]) = row(ids[k]) * scale;
  return out;
}

MixtureSeq sampling_rows(const TokenSeq& z_t, const PredictorOutput& out,
                         int step, const NoiseSchedule& sched,
                         const TimeGrid& grid, double top_p) {
  const int vocab = static_cast<int>(out.denoise.cols());
  const int mask = vocab - 1;
  MixtureSeq pred = out.denoise;
  if (top_p < 1.0) {
    for (Eigen::Index l = 0; l < z_t.size(); ++l) {
      if (z_t(l) != mask) continue;
      PosteriorRow row = pred.row(l);
      pred.row(l) = nucleus_truncate(row, top_p);
    }
  }
  const StepCoefficients c = step_coefficients(step, sched, grid);
  return anchored_posterior(z_t, pred, c.alpha_t, c.alpha_s, c.sigma_t);
}

Trajectory generate(const PredictFn& pred, int seq_len, int vocab_size,
                    const SampleConfig& cfg, Rng& rng, bool record_states) {
  const NoiseSchedule sched = cfg.schedule();
  const TimeGrid grid{cfg.steps};
  validate_schedule(sched, grid);
  const int mask = vocab_size - 1;

  Trajectory traj;
  TokenSeq z = TokenSeq::Constant(seq_len, mask);
  if (record_states) traj.states.push_back(z);
  for (int i = cfg.steps; i >= 1; --i) {
    const PredictorOutput out = pred(z);
    if (record_states) {
      // Anchor-transition diagnostic; generation itself never samples it.
      const StepCoefficients c = step_coefficients(i, sched, grid);
      AnchorMask carried;
      carried.important = BoolArray::Constant(seq_len, false);
      carried.targets = z;
      const MixtureSeq anchor_rows = anchor_transition(
          z, out.anchor, carried, c.alpha_t, c.alpha_s, c.sigma_t);
      TokenSeq peaks(seq_len);
      for (int l = 0; l < seq_len; ++l) {
        Eigen::Index best = 0;
        anchor_rows.row(l).maxCoeff(&best);
        peaks(l) = static_cast<int>(best);
      }
      traj.anchor_peaks.push_back(peaks);
    }
    const MixtureSeq rows = sampling_rows(z, out, i, sched, grid, cfg.top_p);
    for (int l = 0; l < seq_len; ++l) {
      const int next = rng.categorical(rows.row(l));
      if (next != z(l)) {
        traj.events.push_back({i, l, z(l), next});
        z(l) = next;
      }
    }
    if (record_states) traj.states.push_back(z);
  }
  traj.final_state = z;
  for (int l = 0; l < seq_len; ++l)
    if (z(l) == mask) ++traj.final_mask_count;
  return traj;
}

Eigen::VectorXd enumerate_reverse_chain(const PredictFn& pred, int seq_len,
                                        int vocab_size,
                                        const SampleConfig& cfg) {
  const NoiseSchedule sched = cfg.schedule();
  const TimeGrid grid{cfg.steps};
  validate_schedule(sched, grid);
  const int mask = vocab_size - 1;

  std::size_t n_states = 1;
  for (int l = 0; l < seq_len; ++l) n_states *= vocab_size;
  require(n_states <= (1u << 20), "state space too large to enumerate");

  const auto decode_state = [&](std::size_t idx) {
    TokenSeq z(seq_len);
    for (int l = seq_len - 1; l >= 0; --l) {
      z(l) = static_cast<int>(idx % vocab_size);
      idx /= vocab_size;
    }
    return z;
  };
  const auto encode_state = [&](const TokenSeq& z) {
    std::size_t idx = 0;
    for (int l = 0; l < seq_len; ++l)
      idx = idx * vocab_size + static_cast<std::size_t>(z(l));
    return idx;
  };

  TokenSeq all_mask = TokenSeq::Constant(seq_len, mask);
  Eigen::VectorXd dist = Eigen::VectorXd::Zero(n_states);
  dist(encode_state(all_mask)) = 1.0;

  for (int i = cfg.steps; i >= 1; --i) {
    Eigen::VectorXd next = Eigen::VectorXd::Zero(n_states);
    for (std::size_t s = 0; s < n_states; ++s) {
      const double p = dist(s);
      if (p <= 0.0) continue;
      const TokenSeq z = decode_state(s);
      const MixtureSeq rows =
          sampling_rows(z, pred(z), i, sched, grid, cfg.top_p);
      // Positions are independent given z; walk the product distribution.
      std::vector<std::pair<std::size_t, double>> frontier{{0, p}};
      for (int l = 0; l < seq_len; ++l) {
        std::vector<std::pair<std::size_t, double>> grown;
        grown.reserve(frontier.size() * vocab_size);
        for (const auto& [idx, mass] : frontier) {
          for (int k = 0; k < vocab_size; ++k) {
            const double q = rows(l, k);
            if (q <= 0.0) continue;
            grown.emplace_back(idx * vocab_size + k, mass * q);
          }
        }
        frontier = std::move(grown);
      }
      for (const auto& [idx, mass] : frontier) next(idx) += mass;
    }
    dist = std::move(next);
  }
  return dist;
}

TokenSeq decode_causal(const PredictFn& causal_pred, const TokenSeq& prompt,
                       int max_len, bool greedy, Rng& rng) {
  require(max_len >= static_cast<int>(prompt.size()),
          "max_len shorter than the prompt");
  TokenSeq seq = prompt;
  while (static_cast<int>(seq.size()) < max_len) {
    const int n = static_cast<int>(seq.size());
    // Row n only depends on tokens 0..n-1, so a placeholder id is safe.
    TokenSeq probe(n + 1);
    probe.head(n) = seq;
    probe(n) = 0;
    const PredictorOutput out = causal_pred(probe);
    const PosteriorRow row = out.denoise.row(n);
    int next = 0;
    if (greedy) {
      double best = -1.0;
      for (Eigen::Index k = 0; k < row.size(); ++k)
        if (row(k) > best) best = row(k), next = static_cast<int>(k);
    } else {
      next = rng.categorical(row);
    }
    TokenSeq grown(n + 1);
    grown.head(n) = seq;
    grown(n) = next;
    seq = std::move(grown);
  }
  return seq;
}

std::string trajectory_dump(const Trajectory& traj) {
  std::ostringstream ss;
  ss << "# adlmtraj v1\n";
  ss << "step,position,old_id,new_id\n";
  for (const TrajectoryEvent& e : traj.events)
    ss << e.step << ',' << e.position << ',' << e.old_id << ',' << e.new_id
       << '\n';
  return ss.str();
}

}  // namespace adlm
