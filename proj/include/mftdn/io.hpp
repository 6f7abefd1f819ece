#pragma once

#include "mftdn/estimation.hpp"
#include "mftdn/inference.hpp"
#include "mftdn/kernels.hpp"
#include "mftdn/model.hpp"
#include "mftdn/network.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace mftdn {

using Json = nlohmann::json;

// Manifest: {"n": int, "K": int, "times": [floats] | "infer", "layout": "dense" | "sparse"}.
struct Manifest {
  Index n = 0;
  Index layers = 0;
  std::optional<std::vector<double>> times;  // empty optional = infer from the files
  bool sparse = false;
};

Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);

// Reads `layer,time,src,dst` edges. Times are matched against the manifest grid
// (or the distinct times found, when inferred) and then normalized onto [0, 1].
// With a mask file (`layer,time,src,dst,observed`), entries listed neither as an
// edge nor as observed are unobserved. Duplicate edges are kept once and reported
// through `warnings` (or stderr when no sink is given).
ObservationSet load_edge_list(const std::filesystem::path& edges, const std::filesystem::path& manifest,
                              const std::optional<std::filesystem::path>& mask = std::nullopt,
                              std::vector<std::string>* warnings = nullptr);

// Writes present edges, the manifest, and a mask file when the data has a mask or
// is sparse. Times are written in their normalized form.
void write_edge_list(const ObservationSet& data, const std::filesystem::path& edges,
                     const std::filesystem::path& manifest,
                     const std::optional<std::filesystem::path>& mask = std::nullopt);

Json to_json(const KernelSpec& kernel);
KernelSpec kernel_from_json(const Json& j);

Json to_json(const ModelParams& params);
ModelParams params_from_json(const Json& j);

Json to_json(const FitReport& report);
FitReport report_from_json(const Json& j);

Json to_json(const GroundTruth& truth);
GroundTruth truth_from_json(const Json& j);

Json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const Json& j);

// iter,loss,sigma
void write_loss_trace(const std::filesystem::path& path, const FitReport& report);
// d,kernel,period,bic
void write_bic_table(const std::filesystem::path& path, const std::vector<BicRow>& table);
// step,left,right,height
void write_dendrogram(const std::filesystem::path& path, const Dendrogram& tree);
void write_matrix_csv(const std::filesystem::path& path, const Matrix& m,
                      const std::vector<std::string>& header = {},
                      const std::vector<std::string>& row_labels = {});
void write_labels_csv(const std::filesystem::path& path, const std::string& id_name,
                      const std::vector<Index>& labels);

}  // namespace mftdn
