#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "sedsim/field.hpp"
#include "sedsim/point_process.hpp"

namespace sedsim {

nlohmann::json configuration_to_json(const ParticleConfiguration& config);
ParticleConfiguration configuration_from_json(const nlohmann::json& j);
void save_configuration(const ParticleConfiguration& config, const std::string& path);
ParticleConfiguration load_configuration(const std::string& path);

// Raw little-endian f64 dump (component-major, axis-0-fastest cells) plus a
// JSON header `<base>.json` describing {d, L, n_grid, comps}.
void save_field(const SpectralField& field, const std::string& base_path);
SpectralField load_field(const std::string& base_path);

struct CsvColumn {
    std::string name;
    std::vector<double> values;
};

// Writes a header row and full-precision (%.17g) values; all columns must
// share one length.
void write_csv(const std::string& path, const std::vector<CsvColumn>& cols);

nlohmann::json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const nlohmann::json& j);

}  // namespace sedsim
