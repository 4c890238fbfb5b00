#pragma once

#include "adlm/predictor.hpp"
#include "adlm/rng.hpp"
#include "adlm/schedule.hpp"
#include "adlm/types.hpp"

#include <vector>

namespace adlm {

struct SampleConfig {
  enum class Kind { LockedIn, Remask };
  int steps = 128;
  Kind kind = Kind::LockedIn;
  double top_p = 0.9;
  RemaskWindow window{};
  std::uint64_t seed = 0;

  NoiseSchedule schedule() const {
    return kind == Kind::Remask ? NoiseSchedule::loop_remask(window)
                                : NoiseSchedule::zero_remask();
  }
};

struct TrajectoryEvent {
  int step = 0;
  int position = 0;
  int old_id = 0;
  int new_id = 0;
};

struct Trajectory {
  std::vector<TokenSeq> states;  // z at i = T down to 0 (empty unless recorded)
  std::vector<TrajectoryEvent> events;
  TokenSeq final_state;
  int final_mask_count = 0;
  // Diagnostics, filled only when states are recorded: per step, the
  // per-position mode of the anchor-transition law. The anchors are never
  // sampled during generation; this is a lens on what the anchor head would
  // commit to at each step.
  std::vector<TokenSeq> anchor_peaks;
};

// Keeps the smallest prefix of non-mask tokens (sorted by probability,
// ties by id) whose cumulative mass reaches top_p, renormalized to the
// original non-mask mass. The mask entry (last column) is untouched.
PosteriorRow nucleus_truncate(const PosteriorRow& row, double top_p);

// Per-position sampling law at step i: the posterior rows with nucleus
// truncation applied to the prediction component of masked rows. Shared by
// the sampler and the exact chain enumerator so the two always agree.
MixtureSeq sampling_rows(const TokenSeq& z_t, const PredictorOutput& out,
                         int step, const NoiseSchedule& sched,
                         const TimeGrid& grid, double top_p);

// Reverse-time ancestral sampling from the all-mask state.
Trajectory generate(const PredictFn& pred, int seq_len, int vocab_size,
                    const SampleConfig& cfg, Rng& rng,
                    bool record_states = true);

// Exact distribution over final states (vocab_size^seq_len entries, mixed
// radix with the leftmost position most significant) of the same chain.
Eigen::VectorXd enumerate_reverse_chain(const PredictFn& pred, int seq_len,
                                        int vocab_size,
                                        const SampleConfig& cfg);

// Left-to-right decoding with a causal predictor; greedy picks the argmax.
TokenSeq decode_causal(const PredictFn& causal_pred, const TokenSeq& prompt,
                       int max_len, bool greedy, Rng& rng);

std::string trajectory_dump(const Trajectory& traj);

}  // namespace adlm
