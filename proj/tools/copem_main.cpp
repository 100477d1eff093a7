// copem: Gaussian-copula estimation for incomplete continuous data.
//
// Subcommands:
//   fit     estimate a copula model from a CSV with missing cells
//   sample  draw joint samples from a saved model
//   study   run the simulation benchmark (EM vs observed-ecdf vs oracle)
//   impute  draw conditional completions for every row of a dataset

#include <cstdio>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "copem/csv.hpp"
#include "copem/ecm.hpp"
#include "copem/model_io.hpp"
#include "copem/simstudy.hpp"

namespace {

using copem::EcmConfig;
using copem::StudySetting;
using nlohmann::json;

int default_workers() {
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

// Config-file support: flat JSON whose keys mirror the long flag names with
// underscores; values apply only where the flag was not given on the command
// line (flags win).
void apply_config(const CLI::App& cmd, const std::string& config_path,
                  const std::map<std::string, std::function<void(const json&)>>& setters) {
  if (config_path.empty()) return;
  std::ifstream in(config_path);
  if (!in) throw copem::IngestionError("config: cannot open " + config_path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw copem::IngestionError(std::string("config: parse failure: ") + e.what());
  }
  for (const auto& [key, setter] : setters) {
    if (!j.contains(key)) continue;
    const std::string flag = "--" + std::string(key);
    std::string flag_dashed = flag;
    for (auto& c : flag_dashed)
      if (c == '_') c = '-';
    const CLI::Option* opt = cmd.get_option_no_throw(flag_dashed);
    if (opt != nullptr && opt->count() > 0) continue;  // flag wins
    setter(j[key]);
  }
}

std::string emit_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw copem::IngestionError("cannot open " + path + " for writing");
  out << content;
  return path;
}

double derived_final_eps(const copem::EcmTrace& trace) {
  return trace.iterations.empty() ? 0.0 : trace.iterations.back().eps_sigma;
}

int cmd_fit(const std::string& input, const std::string& output, const std::string& trace_path,
            const EcmConfig& cfg) {
  const copem::CsvTable table = copem::read_csv_file(input);
  const copem::EcmResult res = copem::run_ecm(table.data, cfg);

  const copem::ModelDocument doc = copem::ModelDocument::from_model(
      res.model, static_cast<int>(res.trace.iterations.size()), derived_final_eps(res.trace),
      cfg.master_seed);
  copem::save_model(output, doc);
  emit_file(trace_path, copem::trace_to_csv(res.trace));

  for (const auto& w : res.trace.warnings) std::cerr << "warning: " << w << "\n";
  std::cout << "fit: " << res.trace.iterations.size() << " iteration(s), stop: "
            << res.trace.stop_reason << ", model: " << output << ", trace: " << trace_path
            << "\n";
  return 0;
}

int cmd_sample(const std::string& model_path, const std::string& output, int k, int n_prime,
               std::uint64_t seed) {
  const copem::ModelDocument doc = copem::load_model(model_path);
  const copem::CopulaModel model = doc.to_model();
  const int p = model.p();

  copem::Rng master(seed);
  std::vector<copem::PercentileEcdf> quantiles;
  quantiles.reserve(p);
  for (int j = 0; j < p; ++j) {
    copem::Rng mix_rng = master.substream(1, j);
    quantiles.push_back(copem::percentile_mixture(model.marginals[j], n_prime, mix_rng));
  }

  // z ~ N(0, Sigma) via the cached factor, then u = Phi(z), x_j = q_j(u_j)
  copem::Rng draw_rng = master.substream(0, 0);
  std::ofstream out(output, std::ios::binary);
  if (!out) throw copem::IngestionError("cannot open " + output + " for writing");
  for (int j = 0; j < p; ++j) out << (j ? "," : "") << "x" << (j + 1);
  out << "\n";
  std::vector<double> z(p);
  const std::vector<double> zero(p, 0.0);
  char buf[32];
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < p; ++j) z[j] = draw_rng.next_normal();
    model.sigma.chol().transform_in_place(z, zero);
    for (int j = 0; j < p; ++j) {
      const double u = std::min(1.0 - copem::kCdfClamp,
                                std::max(copem::kCdfClamp, copem::std_normal_cdf(z[j])));
      std::snprintf(buf, sizeof(buf), "%.17g", quantiles[j](u));
      out << (j ? "," : "") << buf;
    }
    out << "\n";
  }
  std::cout << "sample: wrote " << k << " draw(s) to " << output << "\n";
  return 0;
}

int cmd_study(const StudySetting& setting, int workers, const std::string& output,
              const std::string& summary_path) {
  const copem::StudyResult result = copem::run_study(setting, workers);
  emit_file(output, copem::study_to_csv(result));
  emit_file(summary_path, copem::study_summary_json(result));
  std::cout << "study: " << result.reps.size() - result.failures() << "/" << result.reps.size()
            << " rep(s) completed, results: " << output << ", summary: " << summary_path << "\n";
  return 0;
}

int cmd_impute(const std::string& model_path, const std::string& input, const std::string& output,
               int m, std::uint64_t seed) {
  const copem::ModelDocument doc = copem::load_model(model_path);
  const copem::CopulaModel model = doc.to_model();
  const copem::CsvTable table = copem::read_csv_file(input);
  if (table.data.cols() != model.p())
    throw copem::ConfigError("impute: data has " + std::to_string(table.data.cols()) +
                             " column(s) but the model has p=" + std::to_string(model.p()));

  std::ofstream out(output, std::ios::binary);
  if (!out) throw copem::IngestionError("cannot open " + output + " for writing");
  out << "row,draw";
  for (const auto& name : table.header) out << ',' << name;
  out << "\n";

  const copem::Rng master(seed);
  char buf[32];
  for (int i = 0; i < table.data.rows(); ++i) {
    const copem::IndexPartition part = table.data.row_partition(i);
    std::vector<std::vector<double>> draws;
    if (!part.fully_observed()) {
      copem::Rng stream = master.substream(0, i);
      const copem::ConditionalLaw law =
          copem::conditional_law(model, part, table.data.observed_in_row(i));
      draws = copem::sample_conditional(model, law, m, stream);
    }
    for (int d = 0; d < m; ++d) {
      out << i << ',' << d;
      int mi = 0;
      for (int j = 0; j < model.p(); ++j) {
        double v;
        if (table.data.is_observed(i, j)) {
          v = table.data.value(i, j);
        } else {
          v = draws[d][mi];
          ++mi;
        }
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        out << ',' << buf;
      }
      out << "\n";
    }
  }
  std::cout << "impute: wrote " << m << " draw(s) per row to " << output << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaussian-copula estimation for incomplete continuous data"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may appear after the subcommand

  std::uint64_t seed = 0;
  int workers = default_workers();
  std::string config_path;
  app.add_option("--seed", seed, "Master seed; equal seeds give bit-identical outputs");
  app.add_option("--workers", workers, "Worker threads (results identical for any count)");
  app.add_option("--config", config_path, "Flat JSON config; explicit flags win");

  EcmConfig ecm;

  // fit
  auto* fit = app.add_subcommand("fit", "Fit a copula model to a CSV with missing cells");
  std::string fit_input, fit_output = "model.json", fit_trace;
  fit->add_option("--input", fit_input, "Input CSV (header row, empty field = missing)")
      ->required();
  fit->add_option("--output", fit_output, "Model JSON path");
  fit->add_option("--trace", fit_trace, "Trace CSV path (default: <output>.trace.csv)");
  fit->add_option("--g", ecm.g, "Mixture components per marginal");
  fit->add_option("--m-small", ecm.m_small, "MC draws per row, early phase");
  fit->add_option("--m-large", ecm.m_large, "MC draws per row, late phase");
  fit->add_option("--n-small", ecm.n_small, "Iterations at m-small");
  fit->add_option("--n-late", ecm.n_late, "Iterations at m-large");
  fit->add_option("--eps", ecm.eps_converged, "Stopping threshold on ||dSigma||_1");
  fit->add_option("--n-max", ecm.n_max, "Hard iteration cap");

  // sample
  auto* sample = app.add_subcommand("sample", "Draw joint samples from a saved model");
  std::string sample_model, sample_output = "samples.csv";
  int sample_k = 10000, sample_nprime = 10000;
  sample->add_option("--model", sample_model, "Model JSON")->required();
  sample->add_option("--output", sample_output, "Output CSV");
  sample->add_option("-k,--k", sample_k, "Number of draws");
  sample->add_option("--n-prime", sample_nprime, "Percentile-estimator presample size");

  // study
  auto* study = app.add_subcommand("study", "Run the simulation benchmark");
  StudySetting setting;
  std::string study_output = "study.csv", study_summary;
  study->add_option("--rho", setting.rho, "Copula correlation of the generated data");
  study->add_option("--beta0", setting.beta0, "Logistic intercept of the MAR stage");
  study->add_option("--beta1", setting.beta1, "Logistic slope of the MAR stage");
  study->add_option("--p-mcar", setting.p_mcar, "Cellwise MCAR removal probability");
  study->add_option("--n-rows", setting.n_rows, "Rows per generated dataset");
  study->add_option("--reps", setting.reps, "Number of repetitions");
  study->add_option("--ks-draws", setting.ks_draws, "Draws per method for the KS statistic");
  study->add_option("--n-prime", setting.n_prime, "Percentile-estimator presample size");
  study->add_option("--g", setting.ecm.g, "Mixture components per marginal");
  study->add_option("--m-small", setting.ecm.m_small, "MC draws per row, early phase");
  study->add_option("--m-large", setting.ecm.m_large, "MC draws per row, late phase");
  study->add_option("--n-small", setting.ecm.n_small, "Iterations at m-small");
  study->add_option("--n-late", setting.ecm.n_late, "Iterations at m-large");
  study->add_option("--eps", setting.ecm.eps_converged, "Stopping threshold on ||dSigma||_1");
  study->add_option("--n-max", setting.ecm.n_max, "Hard iteration cap");
  study->add_option("--output", study_output, "Per-rep results CSV");
  study->add_option("--summary", study_summary, "Summary JSON (default: <output>.summary.json)");

  // impute
  auto* impute = app.add_subcommand("impute", "Conditional draws for the missing cells");
  std::string imp_model, imp_input, imp_output = "imputed.csv";
  int imp_m = 5;
  impute->add_option("--model", imp_model, "Model JSON")->required();
  impute->add_option("--input", imp_input, "Data CSV matching the model dimension")->required();
  impute->add_option("--output", imp_output, "Output CSV (m rows per input row)");
  impute->add_option("-m,--m", imp_m, "Draws per row");

  CLI11_PARSE(app, argc, argv);

  try {
    if (!config_path.empty()) {
      // global keys, then per-subcommand keys
      apply_config(app, config_path,
                   {{"seed", [&](const json& v) { seed = v.get<std::uint64_t>(); }},
                    {"workers", [&](const json& v) { workers = v.get<int>(); }}});
      const std::map<std::string, std::function<void(const json&)>> ecm_keys = {
          {"g", [&](const json& v) { ecm.g = setting.ecm.g = v.get<int>(); }},
          {"m_small", [&](const json& v) { ecm.m_small = setting.ecm.m_small = v.get<int>(); }},
          {"m_large", [&](const json& v) { ecm.m_large = setting.ecm.m_large = v.get<int>(); }},
          {"n_small", [&](const json& v) { ecm.n_small = setting.ecm.n_small = v.get<int>(); }},
          {"n_late", [&](const json& v) { ecm.n_late = setting.ecm.n_late = v.get<int>(); }},
          {"eps",
           [&](const json& v) { ecm.eps_converged = setting.ecm.eps_converged = v.get<double>(); }},
          {"n_max", [&](const json& v) { ecm.n_max = setting.ecm.n_max = v.get<int>(); }}};
      if (fit->parsed()) apply_config(*fit, config_path, ecm_keys);
      if (study->parsed()) {
        apply_config(*study, config_path, ecm_keys);
        apply_config(*study, config_path,
                     {{"rho", [&](const json& v) { setting.rho = v.get<double>(); }},
                      {"beta0", [&](const json& v) { setting.beta0 = v.get<double>(); }},
                      {"beta1", [&](const json& v) { setting.beta1 = v.get<double>(); }},
                      {"p_mcar", [&](const json& v) { setting.p_mcar = v.get<double>(); }},
                      {"n_rows", [&](const json& v) { setting.n_rows = v.get<int>(); }},
                      {"reps", [&](const json& v) { setting.reps = v.get<int>(); }},
                      {"ks_draws", [&](const json& v) { setting.ks_draws = v.get<int>(); }},
                      {"n_prime", [&](const json& v) { setting.n_prime = v.get<int>(); }}});
      }
    }

    ecm.master_seed = seed;
    ecm.workers = workers;
    setting.seed = seed;

    if (fit->parsed()) {
      if (fit_trace.empty()) fit_trace = fit_output + ".trace.csv";
      return cmd_fit(fit_input, fit_output, fit_trace, ecm);
    }
    if (sample->parsed()) return cmd_sample(sample_model, sample_output, sample_k,
                                            sample_nprime, seed);
    if (study->parsed()) {
      if (study_summary.empty()) study_summary = study_output + ".summary.json";
      return cmd_study(setting, workers, study_output, study_summary);
    }
    if (impute->parsed()) return cmd_impute(imp_model, imp_input, imp_output, imp_m, seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
