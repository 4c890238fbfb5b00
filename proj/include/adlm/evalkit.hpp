#pragma once

#include "adlm/objective.hpp"
#include "adlm/predictor.hpp"
#include "adlm/schedule.hpp"
#include "adlm/types.hpp"

#include <string>
#include <vector>

namespace adlm {

struct EvalReport {
  double per_token_bound = 0.0;  // nats per token
  double ppl_bound = 0.0;        // exp(per_token_bound)
  double gen_entropy = 0.0;      // nats, unigram
  int n_sequences = 0;
  std::uint64_t seed = 0;
};

struct EvalConfig {
  double gamma = 0.0;  // 0 scores the plain masked-token bound
  int tau = 5;
  int steps = 128;
  bool exact_grid = true;  // per-step draws instead of one sampled step
};

// Deterministic Monte Carlo bound over held-out sequences: one named rng
// substream per sequence, identical reports for identical seeds.
EvalReport eval_bound(const PredictFn& pred, const std::vector<TokenSeq>& heldout,
                      const EvalConfig& cfg, const NoiseSchedule& sched,
                      std::uint64_t seed);

// Unigram Shannon entropy of the pooled token distribution, in nats.
double gen_entropy(const std::vector<TokenSeq>& samples);

std::string eval_report_key_value(const EvalReport& report);
std::string eval_report_csv_header();
std::string eval_report_csv_row(const EvalReport& report);

}  // namespace adlm
