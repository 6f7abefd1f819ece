#include "mftdn/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <set>
#include <sstream>

namespace mftdn {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) {
    const auto b = field.find_first_not_of(" \t\r");
    const auto e = field.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string() : field.substr(b, e - b + 1));
  }
  return out;
}

std::string where(const fs::path& path, std::size_t line) {
  return path.string() + ":" + std::to_string(line);
}

Index parse_index(const std::string& s, const fs::path& path, std::size_t line, const char* what) {
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty() || v < 0) {
    throw DataError(where(path, line) + ": invalid " + what + " '" + s + "'");
  }
  return static_cast<Index>(v);
}

double parse_double(const std::string& s, const fs::path& path, std::size_t line) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty() || !std::isfinite(v)) {
    throw DataError(where(path, line) + ": invalid time '" + s + "'");
  }
  return v;
}

struct Row {
  Index layer = 0;
  double time = 0.0;
  Index src = 0;
  Index dst = 0;
  bool observed = true;
  std::size_t line = 0;
};

std::vector<Row> read_rows(const fs::path& path, const std::vector<std::string>& header) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) return {};
  ++line_no;
  if (split(line) != header) {
    std::string expected;
    for (const auto& h : header) expected += (expected.empty() ? "" : ",") + h;
    throw DataError(where(path, 1) + ": expected header '" + expected + "'");
  }
  std::vector<Row> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto f = split(line);
    if (f.size() != header.size()) {
      throw DataError(where(path, line_no) + ": expected " + std::to_string(header.size()) + " fields");
    }
    Row r;
    r.line = line_no;
    r.layer = parse_index(f[0], path, line_no, "layer id");
    r.time = parse_double(f[1], path, line_no);
    r.src = parse_index(f[2], path, line_no, "vertex id");
    r.dst = parse_index(f[3], path, line_no, "vertex id");
    if (header.size() == 5) {
      if (f[4] != "0" && f[4] != "1") throw DataError(where(path, line_no) + ": observed must be 0 or 1");
      r.observed = f[4] == "1";
    }
    rows.push_back(r);
  }
  return rows;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Json matrix_to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const Json& j, Index cols_hint = -1) {
  const auto rows = static_cast<Index>(j.size());
  Index cols = rows > 0 ? static_cast<Index>(j.at(0).size()) : std::max<Index>(cols_hint, 0);
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    const Json& row = j.at(static_cast<std::size_t>(i));
    if (static_cast<Index>(row.size()) != cols) throw DataError("ragged matrix in JSON");
    for (Index c = 0; c < cols; ++c) m(i, c) = row.at(static_cast<std::size_t>(c)).get<double>();
  }
  return m;
}

Json vector_to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector vector_from_json(const Json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(values.data(), static_cast<Index>(values.size()));
}

}  // namespace

Manifest read_manifest(const fs::path& path) {
  if (!fs::exists(path)) throw DataError("manifest not found: " + path.string());
  Json j;
  try {
    j = read_json(path);
    Manifest m;
    m.n = j.at("n").get<Index>();
    m.layers = j.at("K").get<Index>();
    const Json& times = j.at("times");
    if (times.is_string()) {
      if (times.get<std::string>() != "infer") throw DataError("manifest times must be a list or \"infer\"");
    } else {
      m.times = times.get<std::vector<double>>();
    }
    if (j.contains("layout")) {
      const auto layout = j.at("layout").get<std::string>();
      if (layout != "dense" && layout != "sparse") throw DataError("manifest layout must be dense or sparse");
      m.sparse = layout == "sparse";
    }
    if (m.n < 1 || m.layers < 1) throw DataError("manifest needs n >= 1 and K >= 1");
    return m;
  } catch (const Json::exception& e) {
    throw DataError("malformed manifest " + path.string() + ": " + e.what());
  }
}

void write_manifest(const fs::path& path, const Manifest& manifest) {
  Json j;
  j["n"] = manifest.n;
  j["K"] = manifest.layers;
  if (manifest.times) {
    j["times"] = *manifest.times;
  } else {
    j["times"] = "infer";
  }
  j["layout"] = manifest.sparse ? "sparse" : "dense";
  write_json(path, j);
}

ObservationSet load_edge_list(const fs::path& edges, const fs::path& manifest_path,
                              const std::optional<fs::path>& mask_path,
                              std::vector<std::string>* warnings) {
  const Manifest manifest = read_manifest(manifest_path);
  const auto edge_rows = read_rows(edges, {"layer", "time", "src", "dst"});
  std::vector<Row> mask_rows;
  if (mask_path) mask_rows = read_rows(*mask_path, {"layer", "time", "src", "dst", "observed"});
  if (manifest.sparse && !mask_path) throw DataError("sparse layout requires a mask file");

  auto check_ids = [&](const Row& r, const fs::path& path) {
    if (r.layer >= manifest.layers) {
      throw DataError(where(path, r.line) + ": layer id " + std::to_string(r.layer) + " >= K = " +
                      std::to_string(manifest.layers));
    }
    if (r.src >= manifest.n || r.dst >= manifest.n) {
      throw DataError(where(path, r.line) + ": vertex id >= n = " + std::to_string(manifest.n));
    }
  };
  for (const auto& r : edge_rows) check_ids(r, edges);
  for (const auto& r : mask_rows) check_ids(r, *mask_path);

  std::vector<double> raw;
  if (manifest.times) {
    raw = *manifest.times;
    for (std::size_t i = 1; i < raw.size(); ++i) {
      if (!(raw[i] > raw[i - 1])) throw DataError(manifest_path.string() + ": time grid is not strictly increasing");
    }
  } else {
    std::set<double> seen;
    for (const auto& r : edge_rows) seen.insert(r.time);
    for (const auto& r : mask_rows) seen.insert(r.time);
    raw.assign(seen.begin(), seen.end());
  }
  if (raw.size() < 2) throw DataError("need at least two distinct time points");
  const double tol = 1e-9 * std::max(1.0, std::abs(raw.back() - raw.front()));
  auto time_index = [&](const Row& r, const fs::path& path) {
    const auto it = std::lower_bound(raw.begin(), raw.end(), r.time - tol);
    if (it == raw.end() || std::abs(*it - r.time) > tol) {
      throw DataError(where(path, r.line) + ": time " + format_double(r.time) + " is not on the grid");
    }
    return static_cast<Index>(it - raw.begin());
  };

  auto warn = [&](const std::string& msg) {
    if (warnings) {
      warnings->push_back(msg);
    } else {
      std::cerr << "warning: " << msg << '\n';
    }
  };

  ObservationSet data;
  data.n = manifest.n;
  data.layers = manifest.layers;
  data.times = normalize_times(raw);

  if (manifest.sparse) {
    for (const auto& r : mask_rows) {
      if (!r.observed) continue;
      data.unaligned[{r.layer, r.src, r.dst}].emplace(time_index(r, *mask_path), 0.0);
    }
    for (const auto& r : edge_rows) {
      auto& obs = data.unaligned[{r.layer, r.src, r.dst}];
      const Index t = time_index(r, edges);
      auto [it, inserted] = obs.emplace(t, 1.0);
      if (!inserted && it->second == 1.0) warn(where(edges, r.line) + ": duplicate edge ignored");
      it->second = 1.0;
    }
    for (const auto& r : mask_rows) {
      if (r.observed) continue;
      const auto found = data.unaligned.find({r.layer, r.src, r.dst});
      if (found != data.unaligned.end() && found->second.count(time_index(r, *mask_path))) {
        throw DataError(where(*mask_path, r.line) + ": entry marked unobserved is also observed");
      }
    }
    data.validate();
    return data;
  }

  data.adjacency.assign(static_cast<std::size_t>(data.layers * data.num_times()),
                        Matrix::Zero(data.n, data.n));
  if (mask_path) {
    data.mask.assign(data.adjacency.size(), Mask::Zero(data.n, data.n));
    for (const auto& r : mask_rows) {
      if (r.observed) data.mask[static_cast<std::size_t>(data.block(r.layer, time_index(r, *mask_path)))](r.src, r.dst) = 1;
    }
  }
  for (const auto& r : edge_rows) {
    const Index t = time_index(r, edges);
    double& entry = data.snapshot(r.layer, t)(r.src, r.dst);
    if (entry == 1.0) warn(where(edges, r.line) + ": duplicate edge ignored");
    entry = 1.0;
    if (mask_path) data.mask[static_cast<std::size_t>(data.block(r.layer, t))](r.src, r.dst) = 1;
  }
  if (mask_path) {
    for (const auto& r : mask_rows) {
      if (!r.observed && data.snapshot(r.layer, time_index(r, *mask_path))(r.src, r.dst) == 1.0) {
        throw DataError(where(*mask_path, r.line) + ": an edge is listed at an entry marked unobserved");
      }
    }
  }
  data.validate();
  return data;
}

void write_edge_list(const ObservationSet& data, const fs::path& edges, const fs::path& manifest,
                     const std::optional<fs::path>& mask) {
  data.validate();
  const bool needs_mask = data.has_mask() || data.is_sparse();
  if (needs_mask && !mask) throw std::invalid_argument("data with unobserved entries needs a mask path");
  std::ofstream out(edges);
  if (!out) throw DataError("cannot write " + edges.string());
  std::ofstream mask_out;
  if (needs_mask) {
    mask_out.open(*mask);
    if (!mask_out) throw DataError("cannot write " + mask->string());
    mask_out << "layer,time,src,dst,observed\n";
  }
  out << "layer,time,src,dst\n";
  if (data.is_sparse()) {
    for (const auto& [key, obs] : data.unaligned) {
      for (const auto& [t, v] : obs) {
        const std::string prefix = std::to_string(key.layer) + "," +
                                   format_double(data.times[static_cast<std::size_t>(t)]) + "," +
                                   std::to_string(key.src) + "," + std::to_string(key.dst);
        mask_out << prefix << ",1\n";
        if (v == 1.0) out << prefix << '\n';
      }
    }
  } else {
    for (Index s = 0; s < data.layers; ++s) {
      for (Index t = 0; t < data.num_times(); ++t) {
        const std::string time = format_double(data.times[static_cast<std::size_t>(t)]);
        const Matrix& a = data.snapshot(s, t);
        for (Index i = 0; i < data.n; ++i) {
          for (Index j = 0; j < data.n; ++j) {
            const bool seen = data.mask.empty() || data.mask[static_cast<std::size_t>(data.block(s, t))](i, j);
            const std::string prefix =
                std::to_string(s) + "," + time + "," + std::to_string(i) + "," + std::to_string(j);
            if (needs_mask && seen) mask_out << prefix << ",1\n";
            if (seen && a(i, j) == 1.0) out << prefix << '\n';
          }
        }
      }
    }
  }
  write_manifest(manifest, Manifest{data.n, data.layers, data.times, data.is_sparse()});
}

Json to_json(const KernelSpec& kernel) {
  Json j;
  j["family"] = to_string(kernel.family);
  if (kernel.family == KernelFamily::periodic) j["period"] = kernel.period;
  return j;
}

KernelSpec kernel_from_json(const Json& j) {
  KernelSpec k;
  k.family = parse_kernel_family(j.at("family").get<std::string>());
  if (k.family == KernelFamily::periodic) k.period = j.at("period").get<double>();
  k.validate();
  return k;
}

Json to_json(const ModelParams& p) {
  Json j;
  j["n"] = p.n();
  j["d"] = p.dim();
  j["K"] = p.layers();
  j["m"] = p.num_anchors();
  j["X"] = matrix_to_json(p.X);
  j["Y"] = matrix_to_json(p.Y);
  j["theta"] = {{"shape", {p.layers(), p.dim(), p.dim(), p.num_anchors()}},
                {"values", vector_to_json(p.theta.values())}};
  j["anchors"] = p.anchors;
  j["kernel"] = to_json(p.kernel);
  return j;
}

ModelParams params_from_json(const Json& j) {
  try {
    ModelParams p;
    const Index d = j.at("d").get<Index>();
    p.X = matrix_from_json(j.at("X"), d);
    p.Y = matrix_from_json(j.at("Y"), d);
    const auto shape = j.at("theta").at("shape").get<std::vector<Index>>();
    if (shape.size() != 4 || shape[1] != d || shape[2] != d) throw DataError("theta shape must be (K, d, d, m)");
    p.theta = CoefficientArray(shape[0], shape[1], shape[3]);
    const Vector values = vector_from_json(j.at("theta").at("values"));
    if (values.size() != p.theta.size()) throw DataError("theta values do not match the declared shape");
    p.theta.values() = values;
    p.anchors = j.at("anchors").get<std::vector<double>>();
    p.kernel = kernel_from_json(j.at("kernel"));
    p.validate();
    return p;
  } catch (const Json::exception& e) {
    throw DataError(std::string("malformed model parameters: ") + e.what());
  }
}

Json to_json(const FitReport& r) {
  Json j;
  j["params"] = to_json(r.params);
  j["loss_trace"] = r.loss_trace;
  j["sigma_trace"] = r.sigma_trace;
  if (std::isfinite(r.constraint)) {
    j["constraint"] = r.constraint;
  } else {
    j["constraint"] = nullptr;
  }
  j["sigma_final"] = r.sigma_final;
  j["final_loss"] = r.final_loss;
  j["step_size_final"] = r.step_size_final;
  j["iterations_run"] = r.iterations_run;
  j["converged"] = r.converged;
  j["bic"] = r.bic;
  return j;
}

FitReport report_from_json(const Json& j) {
  try {
    FitReport r;
    r.params = params_from_json(j.at("params"));
    r.loss_trace = j.at("loss_trace").get<std::vector<double>>();
    r.sigma_trace = j.value("sigma_trace", std::vector<double>{});
    r.constraint = j.at("constraint").is_null() ? std::numeric_limits<double>::infinity()
                                                : j.at("constraint").get<double>();
    r.sigma_final = j.at("sigma_final").get<double>();
    r.final_loss = j.at("final_loss").get<double>();
    r.step_size_final = j.value("step_size_final", 0.0);
    r.iterations_run = j.at("iterations_run").get<Index>();
    r.converged = j.at("converged").get<bool>();
    r.bic = j.at("bic").get<double>();
    return r;
  } catch (const Json::exception& e) {
    throw DataError(std::string("malformed fit report: ") + e.what());
  }
}

Json to_json(const GroundTruth& t) {
  Json j;
  j["X"] = matrix_to_json(t.X);
  j["Y"] = matrix_to_json(t.Y);
  j["d"] = t.dim();
  j["K"] = t.layers();
  j["layer_group"] = t.layer_group;
  j["left_scale"] = vector_to_json(t.left_scale);
  j["right_scale"] = vector_to_json(t.right_scale);
  j["labels_out"] = t.labels_out;
  j["labels_in"] = t.labels_in;
  Json core;
  core["period"] = t.core.period;
  for (const char* name : {"mu", "delta", "phi"}) core[name] = Json::array();
  for (Index g = 0; g < t.core.groups(); ++g) {
    core["mu"].push_back(matrix_to_json(t.core.mu[static_cast<std::size_t>(g)]));
    core["delta"].push_back(matrix_to_json(t.core.delta[static_cast<std::size_t>(g)]));
    core["phi"].push_back(matrix_to_json(t.core.phi[static_cast<std::size_t>(g)]));
  }
  j["core"] = core;
  return j;
}

GroundTruth truth_from_json(const Json& j) {
  try {
    GroundTruth t;
    const Index d = j.at("d").get<Index>();
    t.X = matrix_from_json(j.at("X"), d);
    t.Y = matrix_from_json(j.at("Y"), d);
    t.layer_group = j.at("layer_group").get<std::vector<Index>>();
    t.left_scale = vector_from_json(j.at("left_scale"));
    t.right_scale = vector_from_json(j.at("right_scale"));
    t.labels_out = j.value("labels_out", std::vector<Index>{});
    t.labels_in = j.value("labels_in", std::vector<Index>{});
    const Json& core = j.at("core");
    t.core.period = core.at("period").get<double>();
    for (const auto& m : core.at("mu")) t.core.mu.push_back(matrix_from_json(m, d));
    for (const auto& m : core.at("delta")) t.core.delta.push_back(matrix_from_json(m, d));
    for (const auto& m : core.at("phi")) t.core.phi.push_back(matrix_from_json(m, d));
    if (t.left_scale.size() != d || t.right_scale.size() != d || t.Y.cols() != d) {
      throw DataError("ground truth dimensions are inconsistent");
    }
    for (Index g : t.layer_group) {
      if (g < 0 || g >= t.core.groups()) throw DataError("ground truth layer group out of range");
    }
    return t;
  } catch (const Json::exception& e) {
    throw DataError(std::string("malformed ground truth: ") + e.what());
  }
}

Json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw DataError("cannot parse " + path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void write_loss_trace(const fs::path& path, const FitReport& report) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "iter,loss,sigma\n";
  for (std::size_t i = 0; i < report.loss_trace.size(); ++i) {
    const double s = i < report.sigma_trace.size() ? report.sigma_trace[i] : std::nan("");
    out << i << ',' << format_double(report.loss_trace[i]) << ',' << format_double(s) << '\n';
  }
}

void write_bic_table(const fs::path& path, const std::vector<BicRow>& table) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "d,kernel,period,bic\n";
  for (const auto& row : table) {
    out << row.d << ',' << to_string(row.kernel.family) << ',';
    if (row.kernel.family == KernelFamily::periodic) out << format_double(row.kernel.period);
    out << ',' << (row.ok ? format_double(row.bic) : std::string("nan")) << '\n';
  }
}

void write_dendrogram(const fs::path& path, const Dendrogram& tree) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "step,left,right,height\n";
  for (const auto& m : tree.merges) {
    out << m.step << ',' << m.left << ',' << m.right << ',' << format_double(m.height) << '\n';
  }
}

void write_matrix_csv(const fs::path& path, const Matrix& m, const std::vector<std::string>& header,
                      const std::vector<std::string>& row_labels) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "," : "") << header[c];
  if (!header.empty()) out << '\n';
  for (Index i = 0; i < m.rows(); ++i) {
    bool first = true;
    if (static_cast<std::size_t>(i) < row_labels.size()) {
      out << row_labels[static_cast<std::size_t>(i)];
      first = false;
    }
    for (Index j = 0; j < m.cols(); ++j) {
      out << (first ? "" : ",") << format_double(m(i, j));
      first = false;
    }
    out << '\n';
  }
}

void write_labels_csv(const fs::path& path, const std::string& id_name, const std::vector<Index>& labels) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << id_name << ",label\n";
  for (std::size_t i = 0; i < labels.size(); ++i) out << i << ',' << labels[i] << '\n';
}

}  // namespace mftdn
