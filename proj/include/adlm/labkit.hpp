#pragma once

#include "adlm/objective.hpp"
#include "adlm/predictor.hpp"
#include "adlm/rng.hpp"
#include "adlm/schedule.hpp"
#include "adlm/types.hpp"

#include <string>
#include <vector>

namespace adlm {

// Fixed three-position example over the vocabulary {0, 1, mask}: the data
// law puts 0.9 on (1,0,0) and 0.1 on (0,1,1); the middle token determines
// the rest, so it is the anchored position.
struct ToyDag {
  static constexpr int kSeqLen = 3;
  static constexpr int kVocab = 3;
  static constexpr int kAnchorPos = 1;
  double p_state1 = 0.9;

  TabularJoint joint() const;
  BoolArray anchored_positions() const;
};

struct OracleLine {
  std::string name;
  double expected = 0.0;
  double actual = 0.0;
  double abs_err = 0.0;
  bool pass = false;
};

struct OracleReport {
  std::vector<OracleLine> lines;
  bool all_pass = true;
  double elapsed_s = 0.0;
};

// Recomputes every closed-form quantity of the worked example with the
// production kernels and checks them to 1e-12: forward marginals on the
// three-step grid, both one-step reverse matrices, and the two decode
// probabilities (0.1125 plain, 0.125 anchored).
OracleReport worked_example_oracle();

// Tabular DAG over an alphabet of plain symbols (no mask involved); used as
// the generating distribution for the lab experiments.
struct DagSpec {
  int seq_len = 0;
  int alphabet = 0;
  std::vector<std::vector<int>> parents;     // per position, indices < seq_len
  std::vector<Eigen::MatrixXd> cpt;          // rows: parent config, cols: value
  std::vector<int> order;                    // topological sampling order

  double prob_of(const TokenSeq& x) const;
  TokenSeq sample(Rng& rng) const;
  Eigen::VectorXd enumerate() const;         // alphabet^seq_len joint
  std::size_t config_index(const TokenSeq& x, int position) const;
};

DagSpec line_graph_dag(int seq_len, int alphabet, Rng& rng);
DagSpec random_dag(int seq_len, int alphabet, int max_parents, Rng& rng);
DagSpec toy_dag_spec();

// Latent-anchor mixture: an unobserved anchor value draws from a prior and
// every position emits conditionally on it. EM on this model has closed-form
// updates and a monotone likelihood.
struct LatentAnchorModel {
  Eigen::VectorXd prior;                  // anchor distribution
  std::vector<Eigen::MatrixXd> emission;  // per position: anchor -> value law

  int states() const { return static_cast<int>(prior.size()); }
  double loglik(const TokenSeq& x) const;
  Eigen::VectorXd posterior(const TokenSeq& x) const;
};

LatentAnchorModel random_latent_anchor_model(int seq_len, int alphabet,
                                             int states, Rng& rng);

struct EmTrace {
  std::vector<double> nll;               // iters+1 values, mean nats/sequence
  std::vector<double> free_energy;       // F with fresh responsibilities (= nll)
  std::vector<double> free_energy_stale; // F(r_k, params_{k+1}) >= nll_{k+1}
  LatentAnchorModel model;
  Eigen::MatrixXd responsibilities;      // last E-step, one row per sequence
  double gamma = 0.0;                    // recorded; the exact updates are
                                         // gamma-free
};

// n_samples = 0 runs population EM on the enumerated generating law.
EmTrace em_run(const DagSpec& gen, int n_samples, int iters, double gamma,
               std::uint64_t seed, const LatentAnchorModel* init = nullptr);

struct ComplexityConfig {
  int anchor_size = 1;
  std::vector<int> sample_grid = {50, 100, 200, 400, 800, 1600, 3200};
  double kl_threshold = 0.05;
  int n_seeds = 20;
  std::uint64_t seed = 0;
  double smoothing = 1e-9;
};

struct ComplexitySeedRow {
  int seed_index = 0;
  long long full_needed = -1;      // -1: threshold unreached within the grid
  long long anchored_needed = -1;
};

struct ComplexityResult {
  std::vector<ComplexitySeedRow> rows;
  std::uint64_t full_params = 0;
  std::uint64_t anchored_params = 0;
  int anchored_no_worse = 0;  // seeds where anchored needed <= full
};

// Fits a full-history conditional table and an anchored (true-parent) table
// by counts on growing samples from the DAG and reports the first sample
// size at which KL(truth || model) drops below the threshold.
ComplexityResult sample_complexity_experiment(const DagSpec& truth,
                                              const ComplexityConfig& cfg);

// Exact bound values by enumerating every corruption pattern at every step;
// the Monte Carlo estimators are checked against these.
double brute_force_anelbo(const PredictFn& pred, const TokenSeq& x,
                          const AnchorMask& mask, double gamma,
                          const TimeGrid& grid, const NoiseSchedule& sched);
double brute_force_nelbo(const PredictFn& pred, const TokenSeq& x,
                         const TimeGrid& grid, const NoiseSchedule& sched);

std::string oracle_report_table(const OracleReport& report);

}  // namespace adlm
