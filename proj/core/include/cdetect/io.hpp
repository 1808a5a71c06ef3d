#ifndef CDETECT_IO_HPP
#define CDETECT_IO_HPP

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "cdetect/model.hpp"
#include "cdetect/sensing.hpp"

namespace cdetect {

// JSON schemas:
//   dictionary: {"targets": [[...], ...], "priors": [...]}
//   scene:      {"labels": [...], "alphas": [...], "anomaly_mask": [...]}
// Values round-trip losslessly.
void save_dictionary(const Dictionary& dict, const std::filesystem::path& path);
Dictionary load_dictionary(const std::filesystem::path& path);

void save_scene(const Scene& scene, const std::filesystem::path& path);
// Loaded scenes restore the targets of anomalous locations from `anomalous`
// when given; otherwise anomalous true_signals are left empty.
Scene load_scene(const std::filesystem::path& path, const Dictionary& dict,
                 const std::optional<Vector>& anomalous = {});

// {"construction": ..., "k": ..., "n": ..., "phi": row-major, ...}
void save_plan(const SensingPlan& plan, const std::filesystem::path& path);

// Locale-independent CSV writer; numbers are printed with enough digits to
// round-trip exactly.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path,
            const std::vector<std::string>& header);

  CsvWriter& field(const std::string& value);
  CsvWriter& field(double value);
  CsvWriter& field(long long value);
  CsvWriter& field(int value);
  void end_row();

 private:
  std::ofstream out_;
  std::size_t columns_ = 0;
  std::size_t written_ = 0;
};

std::string format_double(double value);

}  // namespace cdetect

#endif  // CDETECT_IO_HPP
