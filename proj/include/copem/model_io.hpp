#pragma once

#include <cstdint>
#include <string>

#include "copem/copula.hpp"

namespace copem {

inline constexpr const char* kModelFormat = "copula_em_model_v1";

/// Persisted model: format version, correlation, marginals, fit metadata.
/// Serialization is canonical (sorted keys, shortest round-trip numerals), so
/// write -> read -> write is byte-identical.
struct ModelDocument {
  int p = 0;
  std::vector<double> sigma_row_major;
  MarginalSet marginals;
  int fit_iterations = 0;
  double fit_final_eps = 0.0;
  std::uint64_t fit_seed = 0;

  static ModelDocument from_model(const CopulaModel& model, int iterations, double final_eps,
                                  std::uint64_t seed);
  CopulaModel to_model() const;
};

std::string model_to_json(const ModelDocument& doc);
ModelDocument model_from_json(const std::string& text);

void save_model(const std::string& path, const ModelDocument& doc);
ModelDocument load_model(const std::string& path);

}  // namespace copem
