#include "copem/ecm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "copem/parallel.hpp"

namespace copem {

namespace {

constexpr double kArmijoC = 1e-4;
constexpr double kArmijoShrink = 0.5;
constexpr int kMaxBacktracks = 50;
constexpr double kRepairPivot = 1e-10;
constexpr int kRowsPerBlock = 8;  // fixed block size keeps reductions worker-independent

// Per-cell primitives of the mixture transform, arithmetic-identical to
// mix_cdf / mix_pdf / gaussianize / their gradients, fused so the special
// functions are shared between objective and gradient.
struct CellEval {
  double z = 0.0;
  double lnf = 0.0;
};

class ThetaEvaluator {
 public:
  ThetaEvaluator(const MarginalSet& theta, const SymMatrix& k_next)
      : theta_(&theta), a_(k_next), p_(k_next.dim()) {
    for (int i = 0; i < p_; ++i) a_.set(i, i, a_(i, i) - 1.0);  // A = K - I
    int gmax = 1;
    for (int j = 0; j < theta.p(); ++j) gmax = std::max(gmax, theta[j].g());
    phi_.resize(gmax);
    t_.resize(gmax);
    z_full_.resize(p_);
    az_.resize(p_);
  }

  // Gradients (when requested) are written to dz/dlnf, both of length g.
  CellEval eval_cell(int j, double x, bool want_grad, double* dz, double* dlnf) {
    const MixtureMarginal& m = (*theta_)[j];
    const int g = m.g();
    const double inv_bw = 1.0 / m.bandwidth;

    double sum_cdf = 0.0, sum_pdf = 0.0;
    for (int k = 0; k < g; ++k) {
      const double t = (x - m.centers[k]) * inv_bw;
      t_[k] = t;
      phi_[k] = std_normal_pdf(t);
      sum_cdf += std_normal_cdf(t);
      sum_pdf += phi_[k];
    }
    const double u_raw = sum_cdf / g;
    const double u = std::min(1.0 - kCdfClamp, std::max(kCdfClamp, u_raw));
    CellEval out;
    out.z = std_normal_quantile(u);
    out.lnf = std::log(sum_pdf * inv_bw / g);

    if (want_grad) {
      const bool clamped = (u <= kCdfClamp || u >= 1.0 - kCdfClamp);
      const double zscale = clamped ? 0.0 : -1.0 / (g * m.bandwidth * std_normal_pdf(out.z));
      const double fscale = sum_pdf > 0.0 ? inv_bw / sum_pdf : 0.0;
      for (int k = 0; k < g; ++k) {
        dz[k] = zscale * phi_[k];
        dlnf[k] = t_[k] * phi_[k] * fscale;
      }
    }
    return out;
  }

  // Objective contribution of one completed row (mean over its draws), with
  // optional gradient accumulation into grad (flat center layout).
  double eval_row(const CompletedSamples::Row& row, const std::vector<int>& offsets,
                  bool want_grad, std::vector<double>* grad) {
    const auto& obs = row.part.obs;
    const auto& mis = row.part.mis;
    const int no = static_cast<int>(obs.size());
    const int nm = static_cast<int>(mis.size());

    // observed cells once per evaluation
    obs_cache_.clear();
    for (int i = 0; i < no; ++i) {
      const int j = obs[i];
      ObsCell cell;
      cell.j = j;
      const int g = (*theta_)[j].g();
      cell.dz.resize(g);
      cell.dlnf.resize(g);
      cell.eval = eval_cell(j, row.x_obs[i], want_grad, cell.dz.data(), cell.dlnf.data());
      obs_cache_.push_back(std::move(cell));
    }

    if (row.m == 0) {  // fully observed: exact term, weight one
      for (int i = 0; i < no; ++i) z_full_[obs_cache_[i].j] = obs_cache_[i].eval.z;
      double term = quad_and_lnf();
      for (const auto& cell : obs_cache_) term += cell.eval.lnf;
      if (want_grad) {
        for (const auto& cell : obs_cache_) {
          const int g = (*theta_)[cell.j].g();
          double* gslot = grad->data() + offsets[cell.j];
          const double gpre = -az_[cell.j];
          for (int k = 0; k < g; ++k) gslot[k] += gpre * cell.dz[k] + cell.dlnf[k];
        }
      }
      return term;
    }

    const double w = 1.0 / row.m;
    double row_sum = 0.0;
    std::vector<double> sum_gpre(no, 0.0);  // per obs cell, summed across draws

    mis_dz_.resize(nm);
    mis_dlnf_.resize(nm);
    for (int i = 0; i < nm; ++i) {
      const int g = (*theta_)[mis[i]].g();
      mis_dz_[i].resize(g);
      mis_dlnf_[i].resize(g);
    }

    for (int d = 0; d < row.m; ++d) {
      const double* draw = row.mis_draws.data() + static_cast<std::size_t>(d) * nm;
      double lnf_mis = 0.0;
      for (int i = 0; i < nm; ++i) {
        const CellEval ce = eval_cell(mis[i], draw[i], want_grad, mis_dz_[i].data(),
                                      mis_dlnf_[i].data());
        z_full_[mis[i]] = ce.z;
        lnf_mis += ce.lnf;
      }
      for (int i = 0; i < no; ++i) z_full_[obs_cache_[i].j] = obs_cache_[i].eval.z;

      double term = quad_and_lnf() + lnf_mis;
      for (const auto& cell : obs_cache_) term += cell.eval.lnf;
      row_sum += term;

      if (want_grad) {
        for (int i = 0; i < nm; ++i) {
          const int j = mis[i];
          const int g = (*theta_)[j].g();
          double* gslot = grad->data() + offsets[j];
          const double gpre = -az_[j];
          const double* dz = mis_dz_[i].data();
          const double* dlnf = mis_dlnf_[i].data();
          for (int k = 0; k < g; ++k) gslot[k] += w * (gpre * dz[k] + dlnf[k]);
        }
        for (int i = 0; i < no; ++i) sum_gpre[i] += -az_[obs_cache_[i].j];
      }
    }

    if (want_grad) {
      for (int i = 0; i < no; ++i) {
        const auto& cell = obs_cache_[i];
        const int g = (*theta_)[cell.j].g();
        double* gslot = grad->data() + offsets[cell.j];
        for (int k = 0; k < g; ++k)
          gslot[k] += w * sum_gpre[i] * cell.dz[k] + cell.dlnf[k];
      }
    }
    return row_sum * w;
  }

 private:
  // -1/2 z^T A z; also leaves az_ = A z for gradient reuse.
  double quad_and_lnf() {
    const int p = p_;
    double quad = 0.0;
    for (int i = 0; i < p; ++i) {
      double s = 0.0;
      for (int j = 0; j < p; ++j) s += a_(i, j) * z_full_[j];
      az_[i] = s;
      quad += z_full_[i] * s;
    }
    return -0.5 * quad;
  }

  struct ObsCell {
    int j;
    CellEval eval;
    std::vector<double> dz, dlnf;
  };

  const MarginalSet* theta_;
  SymMatrix a_;
  int p_;
  std::vector<double> phi_, t_, z_full_, az_;
  std::vector<ObsCell> obs_cache_;
  std::vector<std::vector<double>> mis_dz_, mis_dlnf_;
};

std::vector<int> center_offsets(const MarginalSet& theta, int* total = nullptr) {
  std::vector<int> off(theta.p(), 0);
  int acc = 0;
  for (int j = 0; j < theta.p(); ++j) {
    off[j] = acc;
    acc += theta[j].g();
  }
  if (total) *total = acc;
  return off;
}

// Fused objective / gradient over all rows, reduced over fixed-size row
// blocks in block order so the result is identical for every worker count.
double fused_eval(const MarginalSet& theta, const SymMatrix& k_next, const CompletedSamples& mc,
                  bool want_grad, std::vector<double>* grad, int workers) {
  int n_params = 0;
  const std::vector<int> offsets = center_offsets(theta, &n_params);
  const int n_rows = static_cast<int>(mc.rows.size());
  const int n_blocks = (n_rows + kRowsPerBlock - 1) / kRowsPerBlock;

  std::vector<double> block_obj(n_blocks, 0.0);
  std::vector<std::vector<double>> block_grad;
  if (want_grad) block_grad.assign(n_blocks, std::vector<double>());

  parallel_for(n_blocks, workers, [&](int b) {
    ThetaEvaluator ev(theta, k_next);
    std::vector<double>* gslot = nullptr;
    if (want_grad) {
      block_grad[b].assign(n_params, 0.0);
      gslot = &block_grad[b];
    }
    const int lo = b * kRowsPerBlock;
    const int hi = std::min(n_rows, lo + kRowsPerBlock);
    double acc = 0.0;
    for (int r = lo; r < hi; ++r) acc += ev.eval_row(mc.rows[r], offsets, want_grad, gslot);
    block_obj[b] = acc;
  });

  double obj = 0.0;
  for (int b = 0; b < n_blocks; ++b) obj += block_obj[b];
  if (want_grad) {
    grad->assign(n_params, 0.0);
    for (int b = 0; b < n_blocks; ++b)
      for (int k = 0; k < n_params; ++k) (*grad)[k] += block_grad[b][k];
  }
  return obj;
}

std::vector<double> pack_centers(const MarginalSet& theta) {
  std::vector<double> x;
  for (int j = 0; j < theta.p(); ++j)
    x.insert(x.end(), theta[j].centers.begin(), theta[j].centers.end());
  return x;
}

MarginalSet unpack_centers(const MarginalSet& proto, const std::vector<double>& x) {
  MarginalSet out = proto;
  std::size_t pos = 0;
  for (int j = 0; j < out.p(); ++j) {
    for (auto& c : out[j].centers) c = x[pos++];
    // projection onto the ordered parameter set; the objective is invariant
    // under per-marginal permutations, so this never changes its value
    std::sort(out[j].centers.begin(), out[j].centers.end());
  }
  return out;
}

double theta_l1_diff(const MarginalSet& a, const MarginalSet& b) {
  double d = 0.0;
  for (int j = 0; j < a.p(); ++j)
    for (int k = 0; k < a[j].g(); ++k) d += std::abs(a[j].centers[k] - b[j].centers[k]);
  return d;
}

}  // namespace

SymMatrix e_step_v_gaussian(const SymMatrix& sigma, const IndexPartition& part,
                            const std::vector<double>& z_obs) {
  const int p = sigma.dim();
  if (part.fully_missing()) return sigma;

  SymMatrix v(p);
  const auto& obs = part.obs;
  const int no = static_cast<int>(obs.size());
  for (int i = 0; i < no; ++i)
    for (int j = i; j < no; ++j) v.set(obs[i], obs[j], z_obs[i] * z_obs[j]);
  if (part.fully_observed()) return v;

  const auto mom = schur_conditional(sigma, part, z_obs);
  const auto& mis = part.mis;
  const int nm = static_cast<int>(mis.size());
  for (int i = 0; i < no; ++i)
    for (int j = 0; j < nm; ++j) v.set(obs[i], mis[j], z_obs[i] * mom.mu[j]);
  for (int i = 0; i < nm; ++i)
    for (int j = i; j < nm; ++j)
      v.set(mis[i], mis[j], mom.sigma_prime(i, j) + mom.mu[i] * mom.mu[j]);
  return v;
}

SymMatrix e_step_v(const CopulaModel& model_t, const IndexPartition& part,
                   const std::vector<double>& x_obs) {
  std::vector<double> z_obs(x_obs.size());
  for (std::size_t i = 0; i < x_obs.size(); ++i)
    z_obs[i] = gaussianize(model_t.marginals[part.obs[i]], x_obs[i]);
  return e_step_v_gaussian(model_t.sigma.matrix(), part, z_obs);
}

EStepStatistic e_step(const CopulaModel& model_t, const IncompleteDataset& data, int workers) {
  const int n = data.rows();
  const int p = data.cols();
  EStepStatistic stat{std::vector<SymMatrix>(), SymMatrix(p)};
  stat.per_row.assign(n, SymMatrix(p));

  parallel_for(n, workers, [&](int i) {
    stat.per_row[i] = e_step_v(model_t, data.row_partition(i), data.observed_in_row(i));
  });

  SymMatrix s(p);
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < p; ++a)
      for (int b = a; b < p; ++b) s.set(a, b, s(a, b) + stat.per_row[i](a, b));
  const double inv_n = n > 0 ? 1.0 / n : 0.0;
  for (int a = 0; a < p; ++a)
    for (int b = a; b < p; ++b) s.set(a, b, s(a, b) * inv_n);
  stat.mean = std::move(s);
  return stat;
}

CorrelationMatrix sigma_update(const EStepStatistic& stat, std::vector<std::string>* warnings) {
  SymMatrix r = correlation_normalize(stat.mean);
  int repairs = 0;
  while (repairs < 100) {
    const Cholesky chol(r);
    if (chol.ok() && chol.min_pivot() >= kRepairPivot) break;
    for (int i = 0; i < r.dim(); ++i)
      for (int j = i + 1; j < r.dim(); ++j) r.set(i, j, r(i, j) * 0.999);
    ++repairs;
  }
  if (repairs > 0 && warnings)
    warnings->push_back("sigma_update: applied PD ridge repair " + std::to_string(repairs) +
                        " time(s)");
  return CorrelationMatrix(std::move(r));
}

CompletedSamples complete_dataset(const CopulaModel& model_t, const IncompleteDataset& data, int m,
                                  std::uint64_t seed, std::uint64_t iteration, int workers) {
  const int n = data.rows();
  CompletedSamples out;
  out.p = data.cols();
  out.rows.resize(n);
  const Rng master(seed);

  parallel_for(n, workers, [&](int i) {
    CompletedSamples::Row row;
    row.part = data.row_partition(i);
    row.x_obs = data.observed_in_row(i);
    if (!row.part.fully_observed()) {
      Rng stream = master.substream(iteration, static_cast<std::uint64_t>(i));
      const ConditionalLaw law = conditional_law(model_t, row.part, row.x_obs);
      const auto draws = sample_conditional(model_t, law, m, stream);
      const int nm = static_cast<int>(row.part.mis.size());
      row.mis_draws.resize(static_cast<std::size_t>(m) * nm);
      for (int d = 0; d < m; ++d)
        for (int k = 0; k < nm; ++k) row.mis_draws[static_cast<std::size_t>(d) * nm + k] = draws[d][k];
      row.m = m;
    }
    out.rows[i] = std::move(row);
  });
  return out;
}

double theta_objective(const MarginalSet& theta, const SymMatrix& k_next,
                       const CompletedSamples& mc, int workers) {
  return fused_eval(theta, k_next, mc, false, nullptr, workers);
}

std::vector<double> theta_objective_grad(const MarginalSet& theta, const SymMatrix& k_next,
                                         const CompletedSamples& mc, int workers) {
  std::vector<double> grad;
  fused_eval(theta, k_next, mc, true, &grad, workers);
  return grad;
}

ThetaUpdateResult theta_update(const MarginalSet& theta_t, const SymMatrix& k_next,
                               const CompletedSamples& mc, const ThetaOptConfig& opt,
                               std::vector<std::string>* warnings, int workers) {
  MarginalSet cur = theta_t;
  std::vector<double> x = pack_centers(cur);
  std::vector<double> grad;
  double f = fused_eval(cur, k_next, mc, true, &grad, workers);
  const double f_start = f;

  std::vector<double> x_prev, grad_prev;
  double alpha_prev = 0.0;
  ThetaUpdateResult res;
  res.theta = cur;
  res.objective = f;

  int step = 0;
  for (; step < opt.max_steps; ++step) {
    double ginf = 0.0, gg = 0.0;
    for (double gi : grad) {
      ginf = std::max(ginf, std::abs(gi));
      gg += gi * gi;
    }
    if (ginf <= opt.grad_tol) {
      res.converged = true;
      break;
    }

    // Barzilai-Borwein trial step when history exists (the short BB2 variant,
    // which the Armijo test accepts at its first trial most of the time),
    // scale-safe default otherwise.
    double alpha = 1.0 / (1.0 + ginf);
    if (!x_prev.empty()) {
      double sy = 0.0, yy = 0.0;
      for (std::size_t k = 0; k < x.size(); ++k) {
        const double s = x[k] - x_prev[k];
        const double y = grad[k] - grad_prev[k];
        sy += s * y;
        yy += y * y;
      }
      if (sy < 0.0 && yy > 0.0)
        alpha = -sy / yy;
      else if (alpha_prev > 0.0)
        alpha = 2.0 * alpha_prev;
      alpha = std::min(alpha, 1e6);
    }

    // first trial evaluates objective and gradient together: when accepted
    // (the common case) the step costs a single pass over the samples
    bool accepted = false;
    bool have_trial_grad = false;
    std::vector<double> x_trial(x.size());
    std::vector<double> grad_trial;
    MarginalSet theta_trial;
    double f_trial = 0.0;
    for (int bt = 0; bt < kMaxBacktracks; ++bt) {
      for (std::size_t k = 0; k < x.size(); ++k) x_trial[k] = x[k] + alpha * grad[k];
      theta_trial = unpack_centers(cur, x_trial);
      have_trial_grad = (bt == 0);
      f_trial = fused_eval(theta_trial, k_next, mc, have_trial_grad,
                           have_trial_grad ? &grad_trial : nullptr, workers);
      if (f_trial >= f + kArmijoC * alpha * gg) {
        accepted = true;
        break;
      }
      alpha *= kArmijoShrink;
    }
    if (!accepted) {
      if (warnings)
        warnings->push_back("theta_update: line search could not improve the objective; "
                            "returning best iterate");
      break;
    }

    x_prev = x;
    grad_prev = grad;
    alpha_prev = alpha;
    cur = theta_trial;
    x = pack_centers(cur);  // sorted layout
    if (have_trial_grad) {
      // the trial eval ran on the sorted marginals, so its gradient is
      // already aligned with the re-packed layout
      f = f_trial;
      grad = std::move(grad_trial);
    } else {
      f = fused_eval(cur, k_next, mc, true, &grad, workers);
    }
    res.theta = cur;
    res.objective = f;
  }
  res.steps = step;

  if (!res.converged && step >= opt.max_steps && res.objective <= f_start && warnings)
    warnings->push_back("theta_update: no improvement after max steps");
  return res;
}

EcmResult run_ecm(const IncompleteDataset& data, const EcmConfig& cfg) {
  const int p = data.cols();
  if (cfg.g < 1 || cfg.n_max < 1 || cfg.m_small < 1 || cfg.m_large < 1 || cfg.n_small < 1 ||
      cfg.n_late < 1 || !(cfg.eps_converged > 0.0))
    throw ConfigError("run_ecm: all counts must be >= 1 and eps_converged positive");
  for (int j = 0; j < p; ++j)
    if (data.observed_count(j) < cfg.g)
      throw ConfigError("run_ecm: column " + std::to_string(j) + " has fewer than g=" +
                        std::to_string(cfg.g) + " observed values");

  MarginalSet theta;
  theta.marginals.reserve(p);
  for (int j = 0; j < p; ++j)
    theta.marginals.push_back(init_from_observed(data.observed_in_column(j), cfg.g));
  CorrelationMatrix sigma = CorrelationMatrix::identity(p);

  EcmTrace trace;
  for (int iter = 0; iter < cfg.n_max; ++iter) {
    const int m = iter < cfg.n_small ? cfg.m_small : cfg.m_large;
    const CopulaModel model_t(sigma, theta);

    const EStepStatistic stat = e_step(model_t, data, cfg.workers);
    CorrelationMatrix sigma_next = sigma_update(stat, &trace.warnings);

    const CompletedSamples mc =
        complete_dataset(model_t, data, m, cfg.master_seed, static_cast<std::uint64_t>(iter),
                         cfg.workers);
    const SymMatrix k_next = sigma_next.precision();
    const ThetaUpdateResult upd =
        theta_update(theta, k_next, mc, cfg.theta_opt, &trace.warnings, cfg.workers);

    if (!std::isfinite(upd.objective))
      throw NumericalError("run_ecm: non-finite objective at iteration " + std::to_string(iter));

    const double eps_sigma = sigma_next.matrix().l1_diff(sigma.matrix());
    const double eps = eps_sigma + theta_l1_diff(upd.theta, theta);

    trace.iterations.push_back(
        EcmIterate{sigma_next.matrix(), upd.theta, eps, eps_sigma, upd.objective, m, upd.steps});

    sigma = std::move(sigma_next);
    theta = upd.theta;

    const bool in_large = iter >= cfg.n_small;
    if (in_large && eps_sigma < cfg.eps_converged) {
      trace.stop_reason = "converged";
      break;
    }
    if (in_large && iter - cfg.n_small + 1 >= cfg.n_late) {
      trace.stop_reason = "m_large budget exhausted";
      break;
    }
  }
  if (trace.stop_reason.empty()) trace.stop_reason = "n_max reached";

  return EcmResult{CopulaModel(sigma, theta), std::move(trace)};
}

SigmaOnlyResult sigma_only_em(const IncompleteDataset& z_data, double eps_converged,
                              int max_iterations, int workers) {
  const int n = z_data.rows();
  const int p = z_data.cols();
  SymMatrix sigma = SymMatrix::identity(p);
  SigmaOnlyResult res{sigma, 0, false};

  std::vector<SymMatrix> per_row(n, SymMatrix(p));
  for (int iter = 0; iter < max_iterations; ++iter) {
    parallel_for(n, workers, [&](int i) {
      per_row[i] =
          e_step_v_gaussian(sigma, z_data.row_partition(i), z_data.observed_in_row(i));
    });
    SymMatrix s(p);
    for (int i = 0; i < n; ++i)
      for (int a = 0; a < p; ++a)
        for (int b = a; b < p; ++b) s.set(a, b, s(a, b) + per_row[i](a, b));
    for (int a = 0; a < p; ++a)
      for (int b = a; b < p; ++b) s.set(a, b, s(a, b) / n);

    EStepStatistic stat{{}, std::move(s)};
    SymMatrix next = sigma_update(stat).matrix();
    const double eps = next.l1_diff(sigma);
    sigma = std::move(next);
    res.iterations = iter + 1;
    if (eps < eps_converged) {
      res.converged = true;
      break;
    }
  }
  res.sigma = std::move(sigma);
  return res;
}

std::string trace_to_csv(const EcmTrace& trace) {
  std::ostringstream os;
  const int p = trace.iterations.empty() ? 0 : trace.iterations.front().sigma.dim();
  os << "iteration,eps,eps_sigma,m,objective";
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) os << ",sigma_" << i << "_" << j;
  os << "\n";
  char buf[32];
  auto emit = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    os << ',' << buf;
  };
  for (std::size_t t = 0; t < trace.iterations.size(); ++t) {
    const EcmIterate& it = trace.iterations[t];
    os << t;
    emit(it.eps);
    emit(it.eps_sigma);
    os << ',' << it.m_used;
    emit(it.objective);
    for (int i = 0; i < p; ++i)
      for (int j = 0; j < p; ++j) emit(it.sigma(i, j));
    os << "\n";
  }
  return os.str();
}

}  // namespace copem
