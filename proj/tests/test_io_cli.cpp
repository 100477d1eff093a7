#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "copem/csv.hpp"
#include "copem/ecm.hpp"
#include "copem/model_io.hpp"

using namespace copem;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::filesystem::path temp_dir() {
  const auto dir = std::filesystem::temp_directory_path() / "copem_io_tests";
  std::filesystem::create_directories(dir);
  return dir;
}

int run_cli(const std::string& args) {
#ifdef COPEM_CLI_PATH
  const std::string cmd = std::string(COPEM_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  return std::system(cmd.c_str());
#else
  (void)args;
  return -1;
#endif
}

}  // namespace

TEST_SUITE("io") {

TEST_CASE("csv round-trip preserves values and mask") {
  const std::string text =
      "a,b,c\n"
      "1.5,,3.25\n"
      "0.1234567890123456789,-2e-7,\n"
      ",,\n"
      "4,5,6\n";
  std::istringstream in(text);
  const CsvTable t = read_csv(in);
  REQUIRE(t.data.rows() == 4);
  REQUIRE(t.data.cols() == 3);
  CHECK(t.header == std::vector<std::string>{"a", "b", "c"});
  CHECK(t.data.is_observed(0, 0));
  CHECK(!t.data.is_observed(0, 1));
  CHECK(!t.data.is_observed(2, 0));
  CHECK(t.data.value(0, 2) == 3.25);

  std::ostringstream out;
  write_csv(out, t);
  std::istringstream in2(out.str());
  const CsvTable t2 = read_csv(in2);
  REQUIRE(t2.data.rows() == t.data.rows());
  for (int i = 0; i < t.data.rows(); ++i)
    for (int j = 0; j < t.data.cols(); ++j) {
      CHECK(t2.data.is_observed(i, j) == t.data.is_observed(i, j));
      if (t.data.is_observed(i, j)) CHECK(t2.data.value(i, j) == t.data.value(i, j));
    }
  // a second write is byte-identical: the format is canonical
  std::ostringstream out2;
  write_csv(out2, t2);
  CHECK(out.str() == out2.str());
}

TEST_CASE("csv errors name the offending location") {
  std::istringstream empty("");
  CHECK_THROWS_AS(read_csv(empty), IngestionError);

  std::istringstream bad("a,b\n1.0,zzz\n");
  try {
    read_csv(bad);
    FAIL("expected IngestionError");
  } catch (const IngestionError& e) {
    const std::string what = e.what();
    CHECK(what.find("row 2") != std::string::npos);
    CHECK(what.find("column b") != std::string::npos);
  }

  std::istringstream ragged("a,b\n1.0\n");
  CHECK_THROWS_AS(read_csv(ragged), IngestionError);
}

TEST_CASE("model json round-trip is byte-identical") {
  MarginalSet marg{{MixtureMarginal({-0.5, 0.25, 1.0 / 3.0}, 0.817), MixtureMarginal({2.0}, 1.25)}};
  const CopulaModel model(CorrelationMatrix(SymMatrix(2, {1.0, 0.4321, 0.4321, 1.0})),
                          std::move(marg));
  const ModelDocument doc = ModelDocument::from_model(model, 17, 3.5e-6, 123456789ULL);

  const std::string text = model_to_json(doc);
  const ModelDocument parsed = model_from_json(text);
  CHECK(model_to_json(parsed) == text);
  CHECK(parsed.p == 2);
  CHECK(parsed.fit_iterations == 17);
  CHECK(parsed.fit_seed == 123456789ULL);
  CHECK(parsed.marginals[0].centers == doc.marginals[0].centers);

  const CopulaModel back = parsed.to_model();
  CHECK(back.sigma(0, 1) == 0.4321);

  CHECK_THROWS_AS(model_from_json("{ not json"), IngestionError);
  CHECK_THROWS_AS(model_from_json("{\"format\":\"other_v9\"}"), IngestionError);
}

#ifdef COPEM_CLI_PATH

TEST_CASE("cli fit/sample/impute end-to-end" * doctest::timeout(300)) {
  namespace fs = std::filesystem;
  const fs::path dir = temp_dir();
  const std::string input = (dir / "data.csv").string();
  const std::string model_path = (dir / "model.json").string();
  const std::string trace_path = model_path + ".trace.csv";  // the CLI default

  {  // complete bivariate data, g=1 so the fit has a closed-form check
    Rng rng(61);
    std::ofstream out(input);
    out << "x,y\n";
    for (int i = 0; i < 120; ++i) {
      const double z1 = rng.next_normal();
      const double z2 = 0.5 * z1 + std::sqrt(0.75) * rng.next_normal();
      out << z1 << "," << z2 << "\n";
    }
  }

  REQUIRE(run_cli("--seed 5 fit --input " + input + " --output " + model_path +
                  " --g 1 --n-small 1 --n-late 1 --n-max 2 --m-small 4 --m-large 4") == 0);
  const ModelDocument doc = load_model(model_path);
  CHECK(doc.p == 2);

  // oracle: correlation of gaussianized data under the g=1 initial marginals
  const CsvTable t = read_csv_file(input);
  MarginalSet theta0{{init_from_observed(t.data.observed_in_column(0), 1),
                      init_from_observed(t.data.observed_in_column(1), 1)}};
  double c11 = 0, c12 = 0, c22 = 0;
  for (int i = 0; i < t.data.rows(); ++i) {
    const double a = gaussianize(theta0[0], t.data.value(i, 0));
    const double b = gaussianize(theta0[1], t.data.value(i, 1));
    c11 += a * a;
    c12 += a * b;
    c22 += b * b;
  }
  CHECK(std::abs(doc.sigma_row_major[1] - c12 / std::sqrt(c11 * c22)) < 0.02);
  CHECK(slurp(trace_path).find("iteration,") == 0);

  // sample: k=0 gives a header-only csv; equal seeds give identical bytes
  const std::string s0 = (dir / "s0.csv").string();
  REQUIRE(run_cli("--seed 9 sample --model " + model_path + " --output " + s0 + " -k 0") == 0);
  CHECK(slurp(s0) == "x1,x2\n");

  const std::string s1 = (dir / "s1.csv").string();
  const std::string s2 = (dir / "s2.csv").string();
  REQUIRE(run_cli("--seed 9 sample --model " + model_path + " --output " + s1 + " -k 200") == 0);
  REQUIRE(run_cli("--seed 9 sample --model " + model_path + " --output " + s2 + " -k 200") == 0);
  CHECK(slurp(s1) == slurp(s2));

  // impute: a row with nothing missing is echoed m times
  const std::string imp_in = (dir / "imp.csv").string();
  {
    std::ofstream out(imp_in);
    out << "x,y\n0.25,-1.5\n0.5,\n";
  }
  const std::string imp_out = (dir / "imp_out.csv").string();
  REQUIRE(run_cli("--seed 10 impute --model " + model_path + " --input " + imp_in +
                  " --output " + imp_out + " -m 3") == 0);
  const std::string imp_text = slurp(imp_out);
  std::istringstream lines(imp_text);
  std::string header, l0, l1, l2;
  std::getline(lines, header);
  std::getline(lines, l0);
  std::getline(lines, l1);
  std::getline(lines, l2);
  CHECK(header == "row,draw,x,y");
  CHECK(l0 == "0,0,0.25,-1.5");
  CHECK(l1 == "0,1,0.25,-1.5");
  CHECK(l2 == "0,2,0.25,-1.5");
  int line_count = 3;
  std::string rest;
  while (std::getline(lines, rest))
    if (!rest.empty()) ++line_count;
  CHECK(line_count == 6);  // 2 rows x 3 draws

  // missing input file fails with a nonzero exit
  CHECK(run_cli("fit --input " + (dir / "nope.csv").string() + " --output " + model_path) != 0);
  // empty input file fails too
  const std::string empty_csv = (dir / "empty.csv").string();
  std::ofstream(empty_csv).close();
  CHECK(run_cli("fit --input " + empty_csv + " --output " + model_path) != 0);

  // equal seeds and arguments give bit-identical fit outputs
  const std::string m_a = (dir / "det_a.json").string();
  const std::string m_b = (dir / "det_b.json").string();
  const std::string fit_args = " --g 2 --n-small 2 --n-late 1 --n-max 3 --m-small 5 --m-large 10";
  REQUIRE(run_cli("--seed 77 fit --input " + input + " --output " + m_a + fit_args) == 0);
  REQUIRE(run_cli("--seed 77 fit --input " + input + " --output " + m_b + fit_args) == 0);
  CHECK(slurp(m_a) == slurp(m_b));
  CHECK(slurp(m_a + ".trace.csv") == slurp(m_b + ".trace.csv"));
}

TEST_CASE("cli fit with default settings completes on a benchmark-sized input" *
          doctest::timeout(600)) {
  namespace fs = std::filesystem;
  const fs::path dir = temp_dir();
  const std::string input = (dir / "bench.csv").string();
  {
    Rng rng(63);
    std::ofstream out(input);
    out << "x,y\n";
    char buf[32];
    for (int i = 0; i < 200; ++i) {
      const double z1 = rng.next_normal();
      const double z2 = 0.5 * z1 + std::sqrt(0.75) * rng.next_normal();
      std::snprintf(buf, sizeof(buf), "%.17g", z1 * 1.3 + 4.0);
      out << buf << ",";
      // leave ~30% of the second column missing
      if (rng.next_uniform() > 0.3) {
        std::snprintf(buf, sizeof(buf), "%.17g", z2 * 0.9 + 2.0);
        out << buf;
      }
      out << "\n";
    }
  }
  const std::string model_path = (dir / "bench_model.json").string();
  REQUIRE(run_cli("--seed 13 fit --input " + input + " --output " + model_path) == 0);
  const ModelDocument doc = load_model(model_path);
  CHECK(doc.fit_iterations <= 25);  // within n_max
  CHECK(doc.marginals[0].g() == 15);
}

TEST_CASE("cli impute: independent model draws follow the marginal" * doctest::timeout(300)) {
  namespace fs = std::filesystem;
  const fs::path dir = temp_dir();
  const std::string model_path = (dir / "ind_model.json").string();
  MarginalSet marg{{MixtureMarginal({0.0}, 1.0), MixtureMarginal({3.0}, 0.8)}};
  {
    const CopulaModel model(CorrelationMatrix::identity(2), marg);
    save_model(model_path, ModelDocument::from_model(model, 0, 0.0, 0));
  }
  const std::string input = (dir / "ind_in.csv").string();
  {
    std::ofstream out(input);
    out << "x,y\n0.4,\n";  // one row, second cell missing
  }
  const std::string output = (dir / "ind_out.csv").string();
  REQUIRE(run_cli("--seed 14 impute --model " + model_path + " --input " + input + " --output " +
                  output + " -m 4000") == 0);
  const CsvTable t = read_csv_file(output);
  REQUIRE(t.data.rows() == 4000);
  std::vector<double> draws(4000);
  for (int i = 0; i < 4000; ++i) draws[i] = t.data.value(i, 3);  // row,draw,x,y
  std::sort(draws.begin(), draws.end());
  double ks = 0.0;
  for (int i = 0; i < 4000; ++i) {
    const double f = mix_cdf(marg[1], draws[i]);
    ks = std::max(ks, std::max(std::abs((i + 1.0) / 4000 - f), std::abs(i / 4000.0 - f)));
  }
  CHECK(ks < 0.03);  // rho = 0: the conditional law is the marginal itself
}

TEST_CASE("cli sample draws match the model marginal" * doctest::timeout(300)) {
  namespace fs = std::filesystem;
  const fs::path dir = temp_dir();
  // hand-written model document: correlated, bimodal first marginal
  const std::string model_path = (dir / "hand_model.json").string();
  {
    MarginalSet marg{{MixtureMarginal({-1.0, 2.0}, 0.7), MixtureMarginal({0.5}, 1.1)}};
    const CopulaModel model(CorrelationMatrix(SymMatrix(2, {1.0, 0.35, 0.35, 1.0})),
                            std::move(marg));
    save_model(model_path, ModelDocument::from_model(model, 0, 0.0, 0));
  }
  const std::string out = (dir / "hand_samples.csv").string();
  REQUIRE(run_cli("--seed 21 sample --model " + model_path + " --output " + out + " -k 10000") ==
          0);
  const CsvTable t = read_csv_file(out);
  REQUIRE(t.data.rows() == 10000);

  const ModelDocument doc = load_model(model_path);
  std::vector<double> col(10000);
  for (int i = 0; i < 10000; ++i) col[i] = t.data.value(i, 0);
  std::sort(col.begin(), col.end());
  double ks = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double f = mix_cdf(doc.marginals[0], col[i]);
    ks = std::max(ks, std::max(std::abs((i + 1.0) / 10000 - f), std::abs(i / 10000.0 - f)));
  }
  CHECK(ks < 0.03);
}

TEST_CASE("cli config file: flags win over config values") {
  namespace fs = std::filesystem;
  const fs::path dir = temp_dir();
  const std::string input = (dir / "cfg_data.csv").string();
  {
    Rng rng(62);
    std::ofstream out(input);
    out << "x,y\n";
    for (int i = 0; i < 40; ++i) out << rng.next_normal() << "," << rng.next_normal() << "\n";
  }
  const std::string cfg = (dir / "cfg.json").string();
  {
    std::ofstream out(cfg);
    out << "{\"g\": 2, \"n_max\": 1, \"n_small\": 1, \"n_late\": 1, \"m_small\": 3, "
           "\"m_large\": 3, \"seed\": 7}\n";
  }
  const std::string m1 = (dir / "cfg_m1.json").string();
  REQUIRE(run_cli("--config " + cfg + " fit --input " + input + " --output " + m1) == 0);
  const ModelDocument d1 = load_model(m1);
  CHECK(d1.marginals[0].g() == 2);  // from config
  CHECK(d1.fit_seed == 7);          // from config

  const std::string m2 = (dir / "cfg_m2.json").string();
  REQUIRE(run_cli("--seed 11 --config " + cfg + " fit --input " + input + " --output " + m2 +
                  " --g 3") == 0);
  const ModelDocument d2 = load_model(m2);
  CHECK(d2.marginals[0].g() == 3);  // flag beats config
  CHECK(d2.fit_seed == 11);
}

#endif  // COPEM_CLI_PATH

}  // TEST_SUITE
