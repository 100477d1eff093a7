#include "copem/simstudy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "copem/parallel.hpp"

namespace copem {

namespace {

// Regularized lower incomplete gamma P(a, x), series / continued-fraction split.
double gammp(double a, double x) {
  if (x < 0.0 || a <= 0.0) throw std::domain_error("gammp: bad arguments");
  if (x == 0.0) return 0.0;
  const double log_prefactor = -x + a * std::log(x) - std::lgamma(a);
  if (x < a + 1.0) {
    double ap = a;
    double del = 1.0 / a;
    double sum = del;
    for (int n = 0; n < 1000; ++n) {
      ap += 1.0;
      del *= x / ap;
      sum += del;
      if (std::abs(del) < std::abs(sum) * 1e-16) break;
    }
    return sum * std::exp(log_prefactor);
  }
  // Lentz continued fraction for Q(a, x)
  const double fpmin = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / fpmin;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 1000; ++i) {
    const double an = -static_cast<double>(i) * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < fpmin) d = fpmin;
    c = b + an / c;
    if (std::abs(c) < fpmin) c = fpmin;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-16) break;
  }
  return 1.0 - std::exp(log_prefactor) * h;
}

double clamp_unit(double u) {
  return std::min(1.0 - kCdfClamp, std::max(kCdfClamp, u));
}

// Average ranks (ties shared), 1-based.
std::vector<double> average_ranks(const std::vector<double>& v) {
  const int n = static_cast<int>(v.size());
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](int a, int b) { return v[a] < v[b]; });
  std::vector<double> ranks(n, 0.0);
  int i = 0;
  while (i < n) {
    int j = i;
    while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double r = 0.5 * (i + j) + 1.0;  // mean of 1-based positions i..j
    for (int k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

struct Bit {
  explicit Bit(int n) : t(n + 1, 0) {}
  void add(int i) {  // 1-based
    for (; i < static_cast<int>(t.size()); i += i & -i) ++t[i];
  }
  long sum(int i) const {  // prefix [1..i]
    long s = 0;
    for (; i > 0; i -= i & -i) s += t[i];
    return s;
  }
  std::vector<int> t;
};

struct DominanceCounts {
  std::vector<long> ll;  // #{s.x <= q.x && s.y <= q.y}
  std::vector<long> lx;  // #{s.x <= q.x}
  std::vector<long> yl;  // #{s.y <= q.y}
};

// Joint dominance counts of `sample` at every query point, O((n+m) log n).
DominanceCounts dominance_counts(const Mat2& sample, const Mat2& queries) {
  const int n = static_cast<int>(sample.size());
  const int m = static_cast<int>(queries.size());
  DominanceCounts out{std::vector<long>(m, 0), std::vector<long>(m, 0), std::vector<long>(m, 0)};

  std::vector<double> xs(n), ys(n);
  for (int i = 0; i < n; ++i) {
    xs[i] = sample[i][0];
    ys[i] = sample[i][1];
  }
  std::sort(xs.begin(), xs.end());
  std::sort(ys.begin(), ys.end());
  for (int q = 0; q < m; ++q) {
    out.lx[q] = std::upper_bound(xs.begin(), xs.end(), queries[q][0]) - xs.begin();
    out.yl[q] = std::upper_bound(ys.begin(), ys.end(), queries[q][1]) - ys.begin();
  }

  std::vector<int> sample_by_x(n), query_by_x(m);
  for (int i = 0; i < n; ++i) sample_by_x[i] = i;
  for (int q = 0; q < m; ++q) query_by_x[q] = q;
  std::sort(sample_by_x.begin(), sample_by_x.end(),
            [&](int a, int b) { return sample[a][0] < sample[b][0]; });
  std::sort(query_by_x.begin(), query_by_x.end(),
            [&](int a, int b) { return queries[a][0] < queries[b][0]; });

  Bit bit(n);
  int next = 0;
  for (int qi : query_by_x) {
    const double qx = queries[qi][0];
    while (next < n && sample[sample_by_x[next]][0] <= qx) {
      const int pos = static_cast<int>(std::lower_bound(ys.begin(), ys.end(),
                                                        sample[sample_by_x[next]][1]) -
                                       ys.begin());
      bit.add(pos + 1);
      ++next;
    }
    const int yr = static_cast<int>(std::upper_bound(ys.begin(), ys.end(), queries[qi][1]) -
                                    ys.begin());
    out.ll[qi] = bit.sum(yr);
  }
  return out;
}

// Largest quadrant-fraction gap over anchors drawn from `anchors`, where
// `self` counts exclude the anchor point itself.
double ks_half(const Mat2& anchors, const DominanceCounts& self, const DominanceCounts& other,
               int k_self, int k_other) {
  double best = 0.0;
  const double ks = static_cast<double>(k_self);
  const double ko = static_cast<double>(k_other);
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    const long sll = self.ll[i] - 1;
    const long slx = self.lx[i] - 1;
    const long syl = self.yl[i] - 1;
    const long slg = slx - sll;
    const long sgl = syl - sll;
    const long sgg = (k_self - 1) - slg - sgl - sll;

    const long oll = other.ll[i];
    const long olg = other.lx[i] - oll;
    const long ogl = other.yl[i] - oll;
    const long ogg = k_other - olg - ogl - oll;

    const double d1 = std::abs(sll / ks - oll / ko);
    const double d2 = std::abs(slg / ks - olg / ko);
    const double d3 = std::abs(sgl / ks - ogl / ko);
    const double d4 = std::abs(sgg / ks - ogg / ko);
    best = std::max({best, d1, d2, d3, d4});
  }
  return best;
}

}  // namespace

double chi2_cdf(double x, int df) {
  if (df < 1) throw std::domain_error("chi2_cdf: df must be >= 1");
  if (x < 0.0) throw std::domain_error("chi2_cdf: x must be >= 0");
  return gammp(0.5 * df, 0.5 * x);
}

double chi2_pdf(double x, int df) {
  if (df < 1) throw std::domain_error("chi2_pdf: df must be >= 1");
  if (x < 0.0) return 0.0;
  const double a = 0.5 * df;
  if (x == 0.0) return df == 2 ? 0.5 : (df < 2 ? std::numeric_limits<double>::infinity() : 0.0);
  return std::exp((a - 1.0) * std::log(x) - 0.5 * x - a * std::log(2.0) - std::lgamma(a));
}

double chi2_quantile(double u, int df) {
  if (!(u > 0.0 && u < 1.0)) throw std::domain_error("chi2_quantile: u outside (0,1)");
  if (df < 1) throw std::domain_error("chi2_quantile: df must be >= 1");

  // Wilson-Hilferty start, then safeguarded Newton on the cdf.
  const double q = std_normal_quantile(u);
  const double c = 2.0 / (9.0 * df);
  double x = df * std::pow(1.0 - c + q * std::sqrt(c), 3.0);
  if (!(x > 0.0)) x = 0.5 * df;

  double lo = 0.0;
  double hi = std::max(4.0 * df, 2.0 * x);
  while (chi2_cdf(hi, df) < u) hi *= 2.0;

  for (int it = 0; it < 200; ++it) {
    if (!(x > lo && x < hi)) x = 0.5 * (lo + hi);
    const double f = chi2_cdf(x, df) - u;
    if (std::abs(f) <= 1e-12) return x;
    if (f > 0.0)
      hi = x;
    else
      lo = x;
    const double dens = chi2_pdf(x, df);
    if (dens > 0.0 && std::isfinite(dens)) x -= f / dens;
    else x = 0.5 * (lo + hi);
  }
  return x;
}

int StudyResult::failures() const {
  int c = 0;
  for (const auto& r : reps) c += r.ok ? 0 : 1;
  return c;
}

Mat2 generate_complete(const StudySetting& setting, Rng& rng) {
  if (!(std::abs(setting.rho) < 1.0)) throw ConfigError("generate_complete: |rho| must be < 1");
  const double s = std::sqrt(1.0 - setting.rho * setting.rho);
  Mat2 d(setting.n_rows);
  for (auto& row : d) {
    const double n1 = rng.next_normal();
    const double n2 = rng.next_normal();
    const double z1 = n1;
    const double z2 = setting.rho * n1 + s * n2;
    row[0] = chi2_quantile(clamp_unit(std_normal_cdf(z1)), setting.df1);
    row[1] = chi2_quantile(clamp_unit(std_normal_cdf(z2)), setting.df2);
  }
  return d;
}

IncompleteDataset apply_missingness(const Mat2& d, const StudySetting& setting, Rng& rng) {
  if (!(setting.p_mcar >= 0.0 && setting.p_mcar < 1.0))
    throw ConfigError("apply_missingness: p_mcar must be in [0,1)");
  const int n = static_cast<int>(d.size());
  IncompleteDataset out(n, 2);
  for (int i = 0; i < n; ++i) {
    bool obs1 = true, obs2 = true;
    if (setting.p_mcar > 0.0) {
      obs1 = rng.next_uniform() >= setting.p_mcar;
      obs2 = rng.next_uniform() >= setting.p_mcar;
    }
    if (obs1 && obs2) {
      // stage 2 acts only on rows with both cells still present
      const double z1 = std_normal_quantile(clamp_unit(chi2_cdf(d[i][0], setting.df1)));
      const double p_remove = 1.0 / (1.0 + std::exp(-(setting.beta0 + setting.beta1 * z1)));
      if (rng.next_uniform() < p_remove) obs2 = false;
    }
    if (obs1) out.set(i, 0, d[i][0]);
    if (obs2) out.set(i, 1, d[i][1]);
  }
  return out;
}

PercentileEcdf::PercentileEcdf(std::vector<double> sorted_values) : y_(std::move(sorted_values)) {
  if (y_.empty()) throw ConfigError("PercentileEcdf: needs at least one value");
  if (!std::is_sorted(y_.begin(), y_.end())) std::sort(y_.begin(), y_.end());
}

double PercentileEcdf::operator()(double u) const {
  const int n = static_cast<int>(y_.size());
  const double np1 = n + 1.0;
  if (u <= 1.0 / np1) return y_.front();
  if (u > n / np1) return y_.back();
  int i = static_cast<int>(std::ceil(u * np1)) - 1;  // u in (i/(n+1), (i+1)/(n+1)]
  i = std::max(1, std::min(i, n - 1));
  if (u <= i / np1) --i;
  const double lo = i / np1;
  const double hi = (i + 1) / np1;
  return (u - lo) / (hi - lo) * (y_[i] - y_[i - 1]) + y_[i - 1];
}

PercentileEcdf percentile_mixture(const MixtureMarginal& m, int n_prime, Rng& rng) {
  if (n_prime < 1) throw ConfigError("percentile_mixture: n_prime must be >= 1");
  const int g = m.g();
  std::vector<double> samples(n_prime);
  for (int i = 0; i < n_prime; ++i) {
    const int k = std::min(g - 1, static_cast<int>(rng.next_uniform() * g));
    samples[i] = m.centers[k] + m.bandwidth * rng.next_normal();
  }
  std::sort(samples.begin(), samples.end());
  return PercentileEcdf(std::move(samples));
}

namespace {

BaselineFit baseline_from_z(const IncompleteDataset& z_data,
                            std::vector<std::vector<double>> sorted_obs, double eps, int max_iter) {
  const SigmaOnlyResult r = sigma_only_em(z_data, eps, max_iter);
  return BaselineFit{r.sigma, r.iterations, std::move(sorted_obs)};
}

}  // namespace

BaselineFit fit_scope(const IncompleteDataset& data, double eps_converged, int max_iterations) {
  const int n = data.rows();
  const int p = data.cols();
  IncompleteDataset z_data(n, p);
  std::vector<std::vector<double>> sorted_obs(p);
  for (int j = 0; j < p; ++j) {
    std::vector<double> col;
    std::vector<int> rows;
    for (int i = 0; i < n; ++i)
      if (data.is_observed(i, j)) {
        col.push_back(data.value(i, j));
        rows.push_back(i);
      }
    if (col.size() < 2)
      throw ConfigError("fit_scope: column " + std::to_string(j) +
                        " has fewer than 2 observed values");
    const std::vector<double> ranks = average_ranks(col);
    const double denom = static_cast<double>(col.size()) + 1.0;
    for (std::size_t k = 0; k < col.size(); ++k)
      z_data.set(rows[k], j, std_normal_quantile(ranks[k] / denom));
    std::sort(col.begin(), col.end());
    sorted_obs[j] = std::move(col);
  }
  return baseline_from_z(z_data, std::move(sorted_obs), eps_converged, max_iterations);
}

BaselineFit fit_gold(const IncompleteDataset& data, const StudySetting& setting,
                     double eps_converged, int max_iterations) {
  const int n = data.rows();
  const int p = data.cols();
  if (p != 2) throw ConfigError("fit_gold: defined for the two-column study");
  IncompleteDataset z_data(n, p);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j)
      if (data.is_observed(i, j)) {
        const int df = j == 0 ? setting.df1 : setting.df2;
        z_data.set(i, j, std_normal_quantile(clamp_unit(chi2_cdf(data.value(i, j), df))));
      }
  return baseline_from_z(z_data, {}, eps_converged, max_iterations);
}

Mat2 sample_joint(double rho_hat, const std::function<double(double)>& q1,
                  const std::function<double(double)>& q2, int k, Rng& rng) {
  if (!(std::abs(rho_hat) < 1.0)) throw ConfigError("sample_joint: |rho_hat| must be < 1");
  const double s = std::sqrt(1.0 - rho_hat * rho_hat);
  Mat2 out(std::max(k, 0));
  for (auto& row : out) {
    const double n1 = rng.next_normal();
    const double n2 = rng.next_normal();
    row[0] = q1(clamp_unit(std_normal_cdf(n1)));
    row[1] = q2(clamp_unit(std_normal_cdf(rho_hat * n1 + s * n2)));
  }
  return out;
}

double ks2d_two_sample(const Mat2& a, const Mat2& b) {
  if (a.empty() || b.empty()) throw ConfigError("ks2d_two_sample: samples must be nonempty");
  const int ka = static_cast<int>(a.size());
  const int kb = static_cast<int>(b.size());
  const DominanceCounts a_at_a = dominance_counts(a, a);
  const DominanceCounts b_at_a = dominance_counts(b, a);
  const DominanceCounts a_at_b = dominance_counts(a, b);
  const DominanceCounts b_at_b = dominance_counts(b, b);
  const double da = ks_half(a, a_at_a, b_at_a, ka, kb);
  const double db = ks_half(b, b_at_b, a_at_b, kb, ka);
  return 0.5 * (da + db);
}

namespace {

// One-sample KS distance and the signed area between the ecdf of `values`
// (unsorted ok) and a smooth cdf.
struct EcdfVsCdf {
  double sup = 0.0;
  double signed_area = 0.0;  // integral of (ecdf - cdf) over [0, upper]
};

EcdfVsCdf ecdf_vs_cdf(std::vector<double> values, const std::function<double(double)>& cdf,
                      double upper) {
  std::sort(values.begin(), values.end());
  const int n = static_cast<int>(values.size());
  EcdfVsCdf out;
  for (int i = 0; i < n; ++i) {
    const double f = cdf(values[i]);
    out.sup = std::max(out.sup, std::max(std::abs((i + 1.0) / n - f), std::abs(i * 1.0 / n - f)));
  }
  // trapezoid on a fixed grid; the ecdf is evaluated exactly
  const int grid = 2048;
  double prev = 0.0 - cdf(0.0);
  for (int k = 1; k <= grid; ++k) {
    const double x = upper * k / grid;
    const double ec = static_cast<double>(std::upper_bound(values.begin(), values.end(), x) -
                                          values.begin()) / n;
    const double cur = ec - cdf(x);
    out.signed_area += 0.5 * (prev + cur) * (upper / grid);
    prev = cur;
  }
  return out;
}

double sup_cdf_diff(const std::function<double(double)>& f, const std::function<double(double)>& g,
                    double lo, double hi, int grid = 2048) {
  double sup = 0.0;
  for (int k = 0; k <= grid; ++k) {
    const double x = lo + (hi - lo) * k / grid;
    sup = std::max(sup, std::abs(f(x) - g(x)));
  }
  return sup;
}

RepResult run_one_rep(const StudySetting& setting, int rep) {
  RepResult res;
  const Rng master(setting.seed);
  Rng data_rng = master.substream(rep, 0);
  Rng miss_rng = master.substream(rep, 1);

  const Mat2 d = generate_complete(setting, data_rng);
  const IncompleteDataset data = apply_missingness(d, setting, miss_rng);

  // EM with mixture marginals
  EcmConfig cfg = setting.ecm;
  cfg.master_seed = master.substream(rep, 2).substream(0, 0).next_u64();
  cfg.workers = 1;  // the study parallelizes over reps
  EcmResult em = run_ecm(data, cfg);
  res.rho_em = em.model.sigma(0, 1);
  res.em_iterations = static_cast<int>(em.trace.iterations.size());

  const BaselineFit scope = fit_scope(data, setting.baseline_eps, setting.baseline_max_iter);
  res.rho_scope = scope.sigma(0, 1);
  const BaselineFit gold = fit_gold(data, setting, setting.baseline_eps, setting.baseline_max_iter);
  res.rho_gold = gold.sigma(0, 1);

  // joint draws: truth and one sample per method
  const auto q1_true = [&](double u) { return chi2_quantile(u, setting.df1); };
  const auto q2_true = [&](double u) { return chi2_quantile(u, setting.df2); };
  Rng truth_rng = master.substream(rep, 3);
  Rng em_rng = master.substream(rep, 4);
  Rng scope_rng = master.substream(rep, 5);
  Rng gold_rng = master.substream(rep, 6);
  Rng mix1_rng = master.substream(rep, 7);
  Rng mix2_rng = master.substream(rep, 8);

  const Mat2 truth = sample_joint(setting.rho, q1_true, q2_true, setting.ks_draws, truth_rng);

  const PercentileEcdf em_q1 = percentile_mixture(em.model.marginals[0], setting.n_prime, mix1_rng);
  const PercentileEcdf em_q2 = percentile_mixture(em.model.marginals[1], setting.n_prime, mix2_rng);
  const Mat2 em_draws = sample_joint(res.rho_em, [&](double u) { return em_q1(u); },
                                     [&](double u) { return em_q2(u); }, setting.ks_draws, em_rng);

  const PercentileEcdf scope_q1(scope.sorted_observed[0]);
  const PercentileEcdf scope_q2(scope.sorted_observed[1]);
  const Mat2 scope_draws =
      sample_joint(res.rho_scope, [&](double u) { return scope_q1(u); },
                   [&](double u) { return scope_q2(u); }, setting.ks_draws, scope_rng);

  const Mat2 gold_draws =
      sample_joint(res.rho_gold, q1_true, q2_true, setting.ks_draws, gold_rng);

  res.ks_em = ks2d_two_sample(truth, em_draws);
  res.ks_scope = ks2d_two_sample(truth, scope_draws);
  res.ks_gold = ks2d_two_sample(truth, gold_draws);

  // column-2 marginal diagnostics against the true chi-square cdf
  const double upper = chi2_quantile(1.0 - 1e-10, setting.df2) + 1.0;
  const auto cdf2 = [&](double x) { return x <= 0.0 ? 0.0 : chi2_cdf(x, setting.df2); };
  const EcdfVsCdf obs2 = ecdf_vs_cdf(data.observed_in_column(1), cdf2, upper);
  res.ecdf2_signed_area = obs2.signed_area;
  res.ecdf2_sup_err = obs2.sup;
  res.em2_sup_err = sup_cdf_diff(
      [&](double x) { return mix_cdf(em.model.marginals[1], x); }, cdf2, 0.0, upper);

  res.ok = true;
  return res;
}

}  // namespace

StudyResult run_study(const StudySetting& setting, int workers) {
  StudyResult result;
  result.setting = setting;
  result.reps.resize(setting.reps);
  parallel_for(setting.reps, workers, [&](int rep) {
    try {
      result.reps[rep] = run_one_rep(setting, rep);
    } catch (const std::exception& e) {
      RepResult bad;
      bad.ok = false;
      bad.error = e.what();
      result.reps[rep] = bad;
    }
  });
  return result;
}

namespace {

std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<double> collect(const StudyResult& r, double RepResult::*field) {
  std::vector<double> v;
  for (const auto& rep : r.reps)
    if (rep.ok) v.push_back(rep.*field);
  return v;
}

double quartile(std::vector<double> v, double u) {
  std::sort(v.begin(), v.end());
  if (v.empty()) return 0.0;
  const int n = static_cast<int>(v.size());
  const double h = u * n - 0.5;
  if (h <= 0.0) return v.front();
  if (h >= n - 1) return v.back();
  const int i = static_cast<int>(h);
  return v[i] + (h - i) * (v[i + 1] - v[i]);
}

}  // namespace

double median(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  if (n == 0) throw ConfigError("median: empty input");
  if (n % 2 == 1) return values[n / 2];
  return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::string study_to_csv(const StudyResult& result) {
  std::ostringstream os;
  os << "rep,rho_scope,rho_em,rho_gold,ks_scope,ks_em,ks_gold,"
        "ecdf2_signed_area,ecdf2_sup_err,em2_sup_err,em_iterations\n";
  // one row per completed rep; failures are counted in the summary
  for (std::size_t i = 0; i < result.reps.size(); ++i) {
    const RepResult& r = result.reps[i];
    if (!r.ok) continue;
    os << i << ',' << fmt17(r.rho_scope) << ',' << fmt17(r.rho_em) << ','
       << fmt17(r.rho_gold) << ',' << fmt17(r.ks_scope) << ',' << fmt17(r.ks_em) << ','
       << fmt17(r.ks_gold) << ',' << fmt17(r.ecdf2_signed_area) << ',' << fmt17(r.ecdf2_sup_err)
       << ',' << fmt17(r.em2_sup_err) << ',' << r.em_iterations << "\n";
  }
  return os.str();
}

std::string study_summary_json(const StudyResult& result) {
  nlohmann::json j;
  j["setting"] = {{"rho", result.setting.rho},
                  {"beta0", result.setting.beta0},
                  {"beta1", result.setting.beta1},
                  {"p_mcar", result.setting.p_mcar},
                  {"n_rows", result.setting.n_rows},
                  {"df1", result.setting.df1},
                  {"df2", result.setting.df2},
                  {"reps", result.setting.reps},
                  {"seed", result.setting.seed},
                  {"ks_draws", result.setting.ks_draws},
                  {"n_prime", result.setting.n_prime},
                  {"g", result.setting.ecm.g}};
  j["failures"] = result.failures();
  j["completed"] = static_cast<int>(result.reps.size()) - result.failures();
  if (result.failures() > 0) {
    nlohmann::json errs = nlohmann::json::array();
    for (std::size_t i = 0; i < result.reps.size(); ++i)
      if (!result.reps[i].ok) errs.push_back({{"rep", i}, {"error", result.reps[i].error}});
    j["failed_reps"] = errs;
  }

  const struct {
    const char* name;
    double RepResult::*field;
  } fields[] = {{"rho_scope", &RepResult::rho_scope}, {"rho_em", &RepResult::rho_em},
                {"rho_gold", &RepResult::rho_gold},   {"ks_scope", &RepResult::ks_scope},
                {"ks_em", &RepResult::ks_em},         {"ks_gold", &RepResult::ks_gold}};
  for (const auto& f : fields) {
    std::vector<double> v = collect(result, f.field);
    if (v.empty()) continue;
    j["summary"][f.name] = {{"median", median(v)},
                            {"q1", quartile(v, 0.25)},
                            {"q3", quartile(v, 0.75)}};
  }
  return j.dump(2) + "\n";
}

}  // namespace copem
