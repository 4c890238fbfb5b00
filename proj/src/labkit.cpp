#include "adlm/labkit.hpp"

#include "adlm/diffusion.hpp"

#include <chrono>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace adlm {

TabularJoint ToyDag::joint() const {
  // States indexed over data tokens {0,1}: (1,0,0) -> 0b100, (0,1,1) -> 0b011.
  Eigen::VectorXd probs = Eigen::VectorXd::Zero(8);
  probs(4) = p_state1;        // (1,0,0)
  probs(3) = 1.0 - p_state1;  // (0,1,1)
  return TabularJoint::from_probabilities(kSeqLen, kVocab, probs);
}

BoolArray ToyDag::anchored_positions() const {
  BoolArray a = BoolArray::Constant(kSeqLen, false);
  a(kAnchorPos) = true;
  return a;
}

namespace {

void check_line(OracleReport& report, const std::string& name, double expected,
                double actual, double tol = 1e-12) {
  OracleLine line;
  line.name = name;
  line.expected = expected;
  line.actual = actual;
  line.abs_err = std::abs(expected - actual);
  line.pass = line.abs_err <= tol;
  report.all_pass = report.all_pass && line.pass;
  report.lines.push_back(line);
}

void check_matrix(OracleReport& report, const std::string& name,
                  const MixtureSeq& expected, const MixtureSeq& actual) {
  const double err = (expected - actual).cwiseAbs().maxCoeff();
  OracleLine line;
  line.name = name;
  line.expected = 0.0;
  line.actual = err;
  line.abs_err = err;
  line.pass = err <= 1e-12;
  report.all_pass = report.all_pass && line.pass;
  report.lines.push_back(line);
}

MixtureSeq rows3(std::initializer_list<std::initializer_list<double>> rows) {
  MixtureSeq m(3, 3);
  int r = 0;
  for (const auto& row : rows) {
    int c = 0;
    for (double v : row) m(r, c++) = v;
    ++r;
  }
  return m;
}

double decode_probability(const MixtureSeq& posterior, const TokenSeq& target) {
  double p = 1.0;
  for (Eigen::Index l = 0; l < target.size(); ++l) p *= posterior(l, target(l));
  return p;
}

}  // namespace

OracleReport worked_example_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  OracleReport report;

  const ToyDag dag;
  const TabularJoint joint = dag.joint();
  const int K = ToyDag::kVocab;
  const int mask = K - 1;
  TokenSeq x1(3);
  x1 << 1, 0, 0;

  const double third = 1.0 / 3.0;
  const double two_thirds = 2.0 / 3.0;

  check_matrix(report, "forward marginal t=1/3",
               rows3({{0.0, two_thirds, third},
                      {two_thirds, 0.0, third},
                      {two_thirds, 0.0, third}}),
               forward_marginal(x1, two_thirds, K));
  check_matrix(report, "forward marginal t=2/3",
               rows3({{0.0, third, two_thirds},
                      {third, 0.0, two_thirds},
                      {third, 0.0, two_thirds}}),
               forward_marginal(x1, third, K));
  check_matrix(report, "forward marginal t=1 (all mask)",
               rows3({{0.0, 0.0, 1.0}, {0.0, 0.0, 1.0}, {0.0, 0.0, 1.0}}),
               forward_marginal(x1, 0.0, K));

  const TokenSeq all_mask = TokenSeq::Constant(3, mask);
  const PredictorOutput fit = joint.predict(all_mask);
  check_matrix(report, "tabular denoiser rows at all-mask",
               rows3({{0.1, 0.9, 0.0}, {0.9, 0.1, 0.0}, {0.9, 0.1, 0.0}}),
               fit.denoise);

  // One reverse step from t = 2/3 to s = 1/3.
  const double alpha_t = third;
  const double alpha_s = two_thirds;
  const MixtureSeq standard =
      reverse_posterior(all_mask, fit.denoise, alpha_t, alpha_s);
  check_matrix(report, "plain reverse matrix",
               rows3({{0.05, 0.45, 0.50}, {0.45, 0.05, 0.50},
                      {0.45, 0.05, 0.50}}),
               standard);

  TokenSeq target(3);
  target << mask, 0, mask;
  const double plain_decode = decode_probability(standard, target);
  check_line(report, "plain decode probability of (m,0,m)", 0.1125,
             plain_decode);

  const PredictorOutput anchored_fit =
      joint.predict_anchored_oracle(all_mask, dag.anchored_positions());
  check_matrix(report, "anchored denoiser rows at all-mask",
               rows3({{0.1, 0.9, 0.0}, {1.0, 0.0, 0.0}, {0.9, 0.1, 0.0}}),
               anchored_fit.denoise);
  const MixtureSeq anchored =
      anchored_posterior(all_mask, anchored_fit.denoise, alpha_t, alpha_s, 0.0);
  check_matrix(report, "anchored reverse matrix",
               rows3({{0.05, 0.45, 0.50}, {0.50, 0.00, 0.50},
                      {0.45, 0.05, 0.50}}),
               anchored);
  const double anchored_decode = decode_probability(anchored, target);
  check_line(report, "anchored decode probability of (m,0,m)", 0.125,
             anchored_decode);

  check_line(report, "anchored decode >= plain decode", 1.0,
             anchored_decode >= plain_decode ? 1.0 : 0.0);

  report.elapsed_s = std::chrono::duration<double>(
                         std::chrono::steady_clock::now() - t0)
                         .count();
  return report;
}

double DagSpec::prob_of(const TokenSeq& x) const {
  double p = 1.0;
  for (int l = 0; l < seq_len; ++l)
    p *= cpt[l](config_index(x, l), x(l));
  return p;
}

std::size_t DagSpec::config_index(const TokenSeq& x, int position) const {
  std::size_t idx = 0;
  for (int parent : parents[position])
    idx = idx * alphabet + static_cast<std::size_t>(x(parent));
  return idx;
}

TokenSeq DagSpec::sample(Rng& rng) const {
  TokenSeq x = TokenSeq::Zero(seq_len);
  for (int l : order) {
    const Eigen::RowVectorXd row = cpt[l].row(config_index(x, l));
    x(l) = rng.categorical(row);
  }
  return x;
}

Eigen::VectorXd DagSpec::enumerate() const {
  std::size_t n = 1;
  for (int l = 0; l < seq_len; ++l) n *= alphabet;
  Eigen::VectorXd joint(n);
  TokenSeq x = TokenSeq::Zero(seq_len);
  for (std::size_t s = 0; s < n; ++s) {
    std::size_t rest = s;
    for (int l = seq_len - 1; l >= 0; --l) {
      x(l) = static_cast<int>(rest % alphabet);
      rest /= alphabet;
    }
    joint(s) = prob_of(x);
  }
  return joint;
}

namespace {

Eigen::MatrixXd random_cpt(int rows, int cols, Rng& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    double total = 0.0;
    for (int c = 0; c < cols; ++c) {
      // Exponential draws give a Dirichlet(1) row.
      m(r, c) = -std::log(std::max(rng.uniform01(), 1e-300));
      total += m(r, c);
    }
    m.row(r) /= total;
  }
  return m;
}

std::size_t int_pow(int base, int exp) {
  std::size_t acc = 1;
  for (int i = 0; i < exp; ++i) acc *= static_cast<std::size_t>(base);
  return acc;
}

}  // namespace

DagSpec line_graph_dag(int seq_len, int alphabet, Rng& rng) {
  DagSpec dag;
  dag.seq_len = seq_len;
  dag.alphabet = alphabet;
  dag.parents.resize(seq_len);
  dag.cpt.resize(seq_len);
  for (int l = 0; l < seq_len; ++l) {
    if (l > 0) dag.parents[l] = {l - 1};
    dag.cpt[l] = random_cpt(static_cast<int>(int_pow(alphabet, l > 0 ? 1 : 0)),
                            alphabet, rng);
    dag.order.push_back(l);
  }
  return dag;
}

DagSpec random_dag(int seq_len, int alphabet, int max_parents, Rng& rng) {
  DagSpec dag;
  dag.seq_len = seq_len;
  dag.alphabet = alphabet;
  dag.parents.resize(seq_len);
  dag.cpt.resize(seq_len);
  for (int l = 0; l < seq_len; ++l) {
    // Parents only among earlier positions keeps the graph acyclic.
    const int available = l;
    const int want = std::min(max_parents, available);
    std::vector<int> pool(available);
    for (int j = 0; j < available; ++j) pool[j] = j;
    for (int j = 0; j < want; ++j) {
      const int pick = j + rng.uniform_int(available - j);
      std::swap(pool[j], pool[pick]);
    }
    const int n_parents = want > 0 ? rng.uniform_int(want + 1) : 0;
    dag.parents[l].assign(pool.begin(), pool.begin() + n_parents);
    std::sort(dag.parents[l].begin(), dag.parents[l].end());
    dag.cpt[l] =
        random_cpt(static_cast<int>(int_pow(alphabet, n_parents)), alphabet,
                   rng);
    dag.order.push_back(l);
  }
  return dag;
}

DagSpec toy_dag_spec() {
  // Middle position is the root; the outer positions copy its implication.
  DagSpec dag;
  dag.seq_len = 3;
  dag.alphabet = 2;
  dag.parents = {{1}, {}, {1}};
  dag.order = {1, 0, 2};
  Eigen::MatrixXd root(1, 2);
  root << 0.9, 0.1;
  Eigen::MatrixXd left(2, 2);
  left << 0.0, 1.0,   // root 0 -> left token 1
          1.0, 0.0;   // root 1 -> left token 0
  Eigen::MatrixXd right(2, 2);
  right << 1.0, 0.0,  // root 0 -> right token 0
           0.0, 1.0;  // root 1 -> right token 1
  dag.cpt = {left, root, right};
  return dag;
}

double LatentAnchorModel::loglik(const TokenSeq& x) const {
  double p = 0.0;
  for (int y = 0; y < states(); ++y) {
    double term = prior(y);
    for (Eigen::Index l = 0; l < x.size(); ++l) term *= emission[l](y, x(l));
    p += term;
  }
  return std::log(p);
}

Eigen::VectorXd LatentAnchorModel::posterior(const TokenSeq& x) const {
  Eigen::VectorXd r(states());
  for (int y = 0; y < states(); ++y) {
    double term = prior(y);
    for (Eigen::Index l = 0; l < x.size(); ++l) term *= emission[l](y, x(l));
    r(y) = term;
  }
  const double total = r.sum();
  require(total > 0.0, "sequence outside the model support");
  return r / total;
}

LatentAnchorModel random_latent_anchor_model(int seq_len, int alphabet,
                                             int states, Rng& rng) {
  LatentAnchorModel m;
  m.prior = random_cpt(1, states, rng).row(0).transpose();
  for (int l = 0; l < seq_len; ++l)
    m.emission.push_back(random_cpt(states, alphabet, rng));
  return m;
}

EmTrace em_run(const DagSpec& gen, int n_samples, int iters, double gamma,
               std::uint64_t seed, const LatentAnchorModel* init) {
  require(iters >= 1, "iters must be positive");
  Rng rng = Rng::substream(seed, "em");

  // Weighted data: explicit samples or the enumerated population.
  std::vector<TokenSeq> xs;
  std::vector<double> ws;
  if (n_samples > 0) {
    for (int n = 0; n < n_samples; ++n) {
      xs.push_back(gen.sample(rng));
      ws.push_back(1.0);
    }
  } else {
    const Eigen::VectorXd joint = gen.enumerate();
    TokenSeq x = TokenSeq::Zero(gen.seq_len);
    for (Eigen::Index s = 0; s < joint.size(); ++s) {
      if (joint(s) <= 0.0) continue;
      std::size_t rest = static_cast<std::size_t>(s);
      for (int l = gen.seq_len - 1; l >= 0; --l) {
        x(l) = static_cast<int>(rest % gen.alphabet);
        rest /= gen.alphabet;
      }
      xs.push_back(x);
      ws.push_back(joint(s));
    }
  }
  require(!xs.empty(), "empty sample set");
  const double w_total = std::accumulate(ws.begin(), ws.end(), 0.0);

  EmTrace trace;
  trace.gamma = gamma;
  trace.model = init ? *init
                     : random_latent_anchor_model(gen.seq_len, gen.alphabet,
                                                  gen.alphabet, rng);
  const int Y = trace.model.states();

  const auto mean_nll = [&](const LatentAnchorModel& m) {
    double acc = 0.0;
    for (std::size_t n = 0; n < xs.size(); ++n) acc -= ws[n] * m.loglik(xs[n]);
    return acc / w_total;
  };
  // Free energy per sequence: expected complete-data energy plus the
  // responsibility entropy.
  const auto free_energy = [&](const Eigen::MatrixXd& resp,
                               const LatentAnchorModel& m) {
    double acc = 0.0;
    for (std::size_t n = 0; n < xs.size(); ++n) {
      for (int y = 0; y < Y; ++y) {
        const double r = resp(static_cast<Eigen::Index>(n), y);
        if (r <= 0.0) continue;
        double log_joint = std::log(m.prior(y));
        for (Eigen::Index l = 0; l < xs[n].size(); ++l)
          log_joint += std::log(m.emission[l](y, xs[n](l)));
        acc -= ws[n] * r * (log_joint - std::log(r));
      }
    }
    return acc / w_total;
  };

  Eigen::MatrixXd resp(xs.size(), Y);
  for (int it = 0; it <= iters; ++it) {
    trace.nll.push_back(mean_nll(trace.model));
    if (it == iters) break;

    for (std::size_t n = 0; n < xs.size(); ++n)
      resp.row(static_cast<Eigen::Index>(n)) =
          trace.model.posterior(xs[n]).transpose();
    trace.free_energy.push_back(free_energy(resp, trace.model));

    // Closed-form maximization of the expected complete-data likelihood.
    LatentAnchorModel next = trace.model;
    Eigen::VectorXd resp_mass = Eigen::VectorXd::Zero(Y);
    for (std::size_t n = 0; n < xs.size(); ++n)
      resp_mass += ws[n] * resp.row(static_cast<Eigen::Index>(n)).transpose();
    next.prior = resp_mass / w_total;
    for (int l = 0; l < gen.seq_len; ++l) {
      Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(Y, gen.alphabet);
      for (std::size_t n = 0; n < xs.size(); ++n)
        for (int y = 0; y < Y; ++y)
          counts(y, xs[n](l)) += ws[n] * resp(static_cast<Eigen::Index>(n), y);
      for (int y = 0; y < Y; ++y) {
        const double total = counts.row(y).sum();
        if (total > 0.0) next.emission[l].row(y) = counts.row(y) / total;
      }
    }
    trace.model = next;
    trace.free_energy_stale.push_back(free_energy(resp, trace.model));
  }
  trace.responsibilities = resp;
  return trace;
}

namespace {

// Count-based conditional tables with per-position conditioning sets.
struct CountedCpt {
  std::vector<std::vector<int>> cond_sets;
  std::vector<Eigen::MatrixXd> counts;
  int alphabet = 0;

  static CountedCpt make(int seq_len, int alphabet,
                         std::vector<std::vector<int>> cond_sets) {
    CountedCpt c;
    c.alphabet = alphabet;
    c.cond_sets = std::move(cond_sets);
    for (int l = 0; l < seq_len; ++l) {
      const std::size_t rows =
          int_pow(alphabet, static_cast<int>(c.cond_sets[l].size()));
      c.counts.push_back(
          Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows), alphabet));
    }
    return c;
  }

  void add(const TokenSeq& x) {
    for (std::size_t l = 0; l < counts.size(); ++l) {
      std::size_t idx = 0;
      for (int p : cond_sets[l]) idx = idx * alphabet + x(p);
      counts[l](static_cast<Eigen::Index>(idx), x(static_cast<int>(l))) += 1.0;
    }
  }

  // Joint model probability with add-eps smoothing per table cell.
  double model_prob(const TokenSeq& x, double eps) const {
    double p = 1.0;
    for (std::size_t l = 0; l < counts.size(); ++l) {
      std::size_t idx = 0;
      for (int q : cond_sets[l]) idx = idx * alphabet + x(q);
      const auto row = counts[l].row(static_cast<Eigen::Index>(idx));
      p *= (row(x(static_cast<int>(l))) + eps) / (row.sum() + eps * alphabet);
    }
    return p;
  }
};

double kl_to_model(const DagSpec& truth, const CountedCpt& model, double eps) {
  const Eigen::VectorXd q = truth.enumerate();
  TokenSeq x = TokenSeq::Zero(truth.seq_len);
  double kl = 0.0;
  for (Eigen::Index s = 0; s < q.size(); ++s) {
    if (q(s) <= 0.0) continue;
    std::size_t rest = static_cast<std::size_t>(s);
    for (int l = truth.seq_len - 1; l >= 0; --l) {
      x(l) = static_cast<int>(rest % truth.alphabet);
      rest /= truth.alphabet;
    }
    kl += q(s) * std::log(q(s) / model.model_prob(x, eps));
  }
  return kl;
}

}  // namespace

ComplexityResult sample_complexity_experiment(const DagSpec& truth,
                                              const ComplexityConfig& cfg) {
  require(truth.seq_len <= 6 && truth.alphabet <= 5,
          "experiment limited to enumeration-tractable sizes");
  for (int l = 0; l < truth.seq_len; ++l)
    require(static_cast<int>(truth.parents[l].size()) <= cfg.anchor_size,
            "true parent set exceeds the anchor size");

  ComplexityResult result;
  // Counts match the conditioning-regime formulas: the anchored tables are
  // allocated at capacity alphabet^(d+1) per position even when a parent
  // set is smaller.
  result.full_params =
      *cpt_param_count(truth.seq_len, truth.alphabet, CptMode::ArFull, 0);
  result.anchored_params = *cpt_param_count(
      truth.seq_len, truth.alphabet, CptMode::ArAnchored, cfg.anchor_size);

  std::vector<std::vector<int>> full_sets(truth.seq_len);
  for (int l = 0; l < truth.seq_len; ++l)
    for (int j = 0; j < l; ++j) full_sets[l].push_back(j);

  for (int s = 0; s < cfg.n_seeds; ++s) {
    Rng rng = Rng::substream(cfg.seed, "complexity",
                             static_cast<std::uint64_t>(s));
    CountedCpt full = CountedCpt::make(truth.seq_len, truth.alphabet,
                                       full_sets);
    CountedCpt anchored =
        CountedCpt::make(truth.seq_len, truth.alphabet, truth.parents);
    ComplexitySeedRow row;
    row.seed_index = s;
    int drawn = 0;
    for (int grid_size : cfg.sample_grid) {
      for (; drawn < grid_size; ++drawn) {
        const TokenSeq x = truth.sample(rng);
        full.add(x);
        anchored.add(x);
      }
      if (row.full_needed < 0 &&
          kl_to_model(truth, full, cfg.smoothing) <= cfg.kl_threshold)
        row.full_needed = grid_size;
      if (row.anchored_needed < 0 &&
          kl_to_model(truth, anchored, cfg.smoothing) <= cfg.kl_threshold)
        row.anchored_needed = grid_size;
      if (row.full_needed >= 0 && row.anchored_needed >= 0) break;
    }
    if (row.anchored_needed >= 0 &&
        (row.full_needed < 0 || row.anchored_needed <= row.full_needed))
      ++result.anchored_no_worse;
    result.rows.push_back(row);
  }
  return result;
}

double brute_force_anelbo(const PredictFn& pred, const TokenSeq& x,
                          const AnchorMask& mask_info, double gamma,
                          const TimeGrid& grid, const NoiseSchedule& sched) {
  const int L = static_cast<int>(x.size());
  const PredictorOutput probe = pred(x);
  const int vocab = static_cast<int>(probe.denoise.cols());
  require(L <= 3 && vocab <= 4 && grid.steps <= 4,
          "enumeration limited to L<=3, K<=4, T<=4");
  const int mask = vocab - 1;

  double total = 0.0;
  for (int i = 1; i <= grid.steps; ++i) {
    const double alpha_t = sched.alpha(grid.t(i));
    const double alpha_s = sched.alpha(grid.s(i));
    const double sigma_t = sched.sigma_at(i, grid);
    // Independent per-step weight computation, kept free of the estimator
    // code paths on purpose.
    const double weight =
        (alpha_s - (1.0 - sigma_t) * alpha_t) / (1.0 - alpha_t);
    for (unsigned bits = 0; bits < (1u << L); ++bits) {
      double pattern_prob = 1.0;
      TokenSeq z_t = x;
      for (int l = 0; l < L; ++l) {
        if (bits & (1u << l)) {
          z_t(l) = mask;
          pattern_prob *= 1.0 - alpha_t;
        } else {
          pattern_prob *= alpha_t;
        }
      }
      if (pattern_prob <= 0.0) continue;
      const PredictorOutput out = pred(z_t);
      double term = 0.0;
      for (int l = 0; l < L; ++l) {
        if (z_t(l) != mask) continue;
        term += weight * (-std::log(out.denoise(l, x(l))));
        if (mask_info.important(l))
          term += gamma * weight *
                  (-std::log(out.anchor(l, mask_info.targets(l))));
      }
      total += pattern_prob * term;
    }
  }
  // Reconstruction leg: the time-zero corruption keeps every token, so the
  // contribution is exactly zero under the linear schedule.
  if (sched.alpha(0.0) < 1.0)
    throw std::runtime_error("enumeration assumes alpha(0) = 1");
  return total;
}

double brute_force_nelbo(const PredictFn& pred, const TokenSeq& x,
                         const TimeGrid& grid, const NoiseSchedule& sched) {
  require(sched.kind() != ScheduleKind::LoopRemask,
          "masked-token bound requires a remask-free schedule");
  AnchorMask none;
  none.important = BoolArray::Constant(x.size(), false);
  none.targets = x;
  return brute_force_anelbo(pred, x, none, 0.0, grid, sched);
}

std::string oracle_report_table(const OracleReport& report) {
  std::ostringstream ss;
  ss << std::left << std::setw(44) << "check" << std::right << std::setw(12)
     << "expected" << std::setw(14) << "actual" << std::setw(12) << "abs err"
     << "  status\n";
  for (const OracleLine& line : report.lines) {
    ss << std::left << std::setw(44) << line.name << std::right
       << std::setw(12) << std::setprecision(6) << line.expected
       << std::setw(14) << std::setprecision(10) << line.actual
       << std::setw(12) << std::setprecision(2) << std::scientific
       << line.abs_err << std::defaultfloat << (line.pass ? "  PASS" : "  FAIL")
       << "\n";
  }
  ss << (report.all_pass ? "all checks passed" : "CHECK FAILURES PRESENT")
     << " (" << std::setprecision(3) << report.elapsed_s << " s)\n";
  return ss.str();
}

}  // namespace adlm
