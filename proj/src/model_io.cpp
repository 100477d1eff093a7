#include "copem/model_io.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace copem {

using nlohmann::json;

ModelDocument ModelDocument::from_model(const CopulaModel& model, int iterations,
                                        double final_eps, std::uint64_t seed) {
  ModelDocument doc;
  doc.p = model.p();
  doc.sigma_row_major = model.sigma.matrix().data();
  doc.marginals = model.marginals;
  doc.fit_iterations = iterations;
  doc.fit_final_eps = final_eps;
  doc.fit_seed = seed;
  return doc;
}

CopulaModel ModelDocument::to_model() const {
  return CopulaModel(CorrelationMatrix(SymMatrix(p, sigma_row_major)), marginals);
}

std::string model_to_json(const ModelDocument& doc) {
  json j;
  j["format"] = kModelFormat;
  j["p"] = doc.p;
  j["sigma"] = doc.sigma_row_major;
  json marg = json::array();
  for (const auto& m : doc.marginals.marginals)
    marg.push_back({{"g", m.g()}, {"centers", m.centers}, {"bandwidth", m.bandwidth}});
  j["marginals"] = marg;
  j["fit"] = {{"iterations", doc.fit_iterations},
              {"final_eps", doc.fit_final_eps},
              {"seed", doc.fit_seed}};
  return j.dump(2) + "\n";
}

ModelDocument model_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw IngestionError(std::string("model json: parse failure: ") + e.what());
  }
  try {
    if (!j.contains("format") || j["format"].get<std::string>() != kModelFormat)
      throw IngestionError("model json: unknown or missing format version");
    ModelDocument doc;
    doc.p = j.at("p").get<int>();
    doc.sigma_row_major = j.at("sigma").get<std::vector<double>>();
    if (static_cast<int>(doc.sigma_row_major.size()) != doc.p * doc.p)
      throw IngestionError("model json: sigma size does not match p");
    for (const auto& m : j.at("marginals")) {
      MixtureMarginal marg(m.at("centers").get<std::vector<double>>(),
                           m.at("bandwidth").get<double>());
      if (m.contains("g") && m.at("g").get<int>() != marg.g())
        throw IngestionError("model json: marginal g does not match center count");
      doc.marginals.marginals.push_back(std::move(marg));
    }
    if (doc.marginals.p() != doc.p)
      throw IngestionError("model json: marginal count does not match p");
    if (j.contains("fit")) {
      doc.fit_iterations = j["fit"].value("iterations", 0);
      doc.fit_final_eps = j["fit"].value("final_eps", 0.0);
      doc.fit_seed = j["fit"].value("seed", static_cast<std::uint64_t>(0));
    }
    return doc;
  } catch (const json::exception& e) {
    throw IngestionError(std::string("model json: malformed document: ") + e.what());
  }
}

void save_model(const std::string& path, const ModelDocument& doc) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestionError("model json: cannot open " + path + " for writing");
  out << model_to_json(doc);
}

ModelDocument load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("model json: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return model_from_json(ss.str());
}

}  // namespace copem
