#include "cdetect/io.hpp"

#include <cstdio>

#include "json.hpp"

#include "cdetect/errors.hpp"

namespace cdetect {

namespace {

using nlohmann::json;

json vector_to_json(const Vector& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

Vector vector_from_json(const json& arr) {
  Vector v(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) v(i) = arr[i].get<double>();
  return v;
}

json load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open " + path.string());
  }
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return j;
}

void write_json(const json& j, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw ConfigError("cannot write " + path.string());
  }
  out << j.dump(2) << '\n';
}

}  // namespace

void save_dictionary(const Dictionary& dict,
                     const std::filesystem::path& path) {
  json j;
  j["targets"] = json::array();
  for (const Vector& f : dict.targets()) j["targets"].push_back(vector_to_json(f));
  j["priors"] = dict.priors();
  write_json(j, path);
}

Dictionary load_dictionary(const std::filesystem::path& path) {
  const json j = load_json(path);
  if (!j.contains("targets") || !j.contains("priors")) {
    throw ConfigError(path.string() + ": dictionary needs targets and priors");
  }
  std::vector<Vector> targets;
  for (const json& t : j["targets"]) targets.push_back(vector_from_json(t));
  std::vector<double> priors = j["priors"].get<std::vector<double>>();
  return Dictionary(std::move(targets), std::move(priors));
}

void save_scene(const Scene& scene, const std::filesystem::path& path) {
  json j;
  j["labels"] = scene.labels;
  j["alphas"] = scene.alphas;
  json mask = json::array();
  for (char m : scene.anomaly_mask) mask.push_back(m != 0);
  j["anomaly_mask"] = mask;
  write_json(j, path);
}

Scene load_scene(const std::filesystem::path& path, const Dictionary& dict,
                 const std::optional<Vector>& anomalous) {
  const json j = load_json(path);
  Scene scene;
  scene.labels = j.at("labels").get<std::vector<int>>();
  scene.alphas = j.at("alphas").get<std::vector<double>>();
  const auto mask = j.at("anomaly_mask").get<std::vector<bool>>();
  if (scene.labels.size() != scene.alphas.size() ||
      scene.labels.size() != mask.size()) {
    throw ConfigError(path.string() + ": scene arrays disagree in length");
  }
  scene.anomaly_mask.resize(mask.size());
  scene.true_signals.resize(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    scene.anomaly_mask[i] = mask[i] ? 1 : 0;
    if (mask[i]) {
      if (scene.labels[i] != Scene::kAnomalousLabel) {
        throw ConfigError(path.string() + ": mask/label mismatch");
      }
      if (anomalous) scene.true_signals[i] = *anomalous;
    } else {
      if (scene.labels[i] < 0 || scene.labels[i] >= dict.size()) {
        throw ConfigError(path.string() + ": label out of range");
      }
      scene.true_signals[i] = dict.target(scene.labels[i]);
    }
  }
  return scene;
}

void save_plan(const SensingPlan& plan, const std::filesystem::path& path) {
  const auto matrix_rows = [](const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      json row = json::array();
      for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
      rows.push_back(std::move(row));
    }
    return rows;
  };
  json j;
  switch (plan.kind()) {
    case PlanKind::kDesigned:
      j["construction"] = "designed";
      break;
    case PlanKind::kRandomPhi:
      j["construction"] = "random_phi";
      break;
    case PlanKind::kIdentity:
      j["construction"] = "identity";
      break;
  }
  j["k"] = plan.k();
  j["n"] = plan.n();
  j["phi"] = matrix_rows(plan.phi());
  j["a"] = matrix_rows(plan.a());
  j["whitener"] = matrix_rows(plan.whitener());
  if (plan.epsilon()) j["epsilon"] = *plan.epsilon();
  write_json(j, path);
}

std::string format_double(double value) {
  char buffer[40];
  std::snprintf(buffer, sizeof(buffer), "%.17g", value);
  return buffer;
}

CsvWriter::CsvWriter(const std::filesystem::path& path,
                     const std::vector<std::string>& header)
    : out_(path), columns_(header.size()) {
  if (!out_) {
    throw ConfigError("cannot write " + path.string());
  }
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i) out_ << ',';
    out_ << header[i];
  }
  out_ << '\n';
}

CsvWriter& CsvWriter::field(const std::string& value) {
  if (written_) out_ << ',';
  out_ << value;
  ++written_;
  return *this;
}

CsvWriter& CsvWriter::field(double value) { return field(format_double(value)); }

CsvWriter& CsvWriter::field(long long value) {
  return field(std::to_string(value));
}

CsvWriter& CsvWriter::field(int value) { return field(std::to_string(value)); }

void CsvWriter::end_row() {
  if (written_ != columns_) {
    throw ConfigError("CSV row width mismatch");
  }
  out_ << '\n';
  written_ = 0;
}

}  // namespace cdetect
