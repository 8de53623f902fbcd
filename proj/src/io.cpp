#include "sedsim/io.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace sedsim {

nlohmann::json configuration_to_json(const ParticleConfiguration& config) {
    nlohmann::json j;
    j["d"] = config.domain.d;
    j["L"] = config.domain.L;
    j["n_grid"] = config.domain.n_grid;
    j["radius"] = config.radius;
    j["delta"] = config.delta;
    auto centers = nlohmann::json::array();
    for (const auto& x : config.centers) {
        auto row = nlohmann::json::array();
        for (int a = 0; a < config.domain.d; ++a) row.push_back(x[a]);
        centers.push_back(row);
    }
    j["centers"] = centers;
    return j;
}

ParticleConfiguration configuration_from_json(const nlohmann::json& j) {
    const TorusDomain dom(j.at("d").get<int>(), j.at("L").get<double>(), j.at("n_grid").get<int>());
    ParticleConfiguration config{dom, {}, j.at("radius").get<double>(), j.at("delta").get<double>()};
    for (const auto& row : j.at("centers")) {
        if (static_cast<int>(row.size()) != dom.d)
            throw std::invalid_argument("configuration_from_json: center dimension mismatch");
        Point x(dom.d);
        for (int a = 0; a < dom.d; ++a) x[a] = row[a].get<double>();
        config.centers.push_back(x);
    }
    return config;
}

void save_configuration(const ParticleConfiguration& config, const std::string& path) {
    write_json_file(path, configuration_to_json(config));
}

ParticleConfiguration load_configuration(const std::string& path) {
    return configuration_from_json(read_json_file(path));
}

void save_field(const SpectralField& field, const std::string& base_path) {
    nlohmann::json header;
    header["d"] = field.dom.d;
    header["L"] = field.dom.L;
    header["n_grid"] = field.dom.n_grid;
    header["comps"] = field.comps;
    header["layout"] = "component-major, axis 0 fastest, f64 little-endian";
    write_json_file(base_path + ".json", header);

    std::ofstream out(base_path + ".f64", std::ios::binary);
    if (!out) throw std::runtime_error("save_field: cannot open " + base_path + ".f64");
    out.write(reinterpret_cast<const char*>(field.data.data()),
              static_cast<std::streamsize>(field.data.size() * sizeof(double)));
    if (!out) throw std::runtime_error("save_field: short write to " + base_path + ".f64");
}

SpectralField load_field(const std::string& base_path) {
    const nlohmann::json header = read_json_file(base_path + ".json");
    const TorusDomain dom(header.at("d").get<int>(), header.at("L").get<double>(),
                          header.at("n_grid").get<int>());
    SpectralField field(dom, header.at("comps").get<int>());

    std::ifstream in(base_path + ".f64", std::ios::binary);
    if (!in) throw std::runtime_error("load_field: cannot open " + base_path + ".f64");
    in.read(reinterpret_cast<char*>(field.data.data()),
            static_cast<std::streamsize>(field.data.size() * sizeof(double)));
    if (in.gcount() != static_cast<std::streamsize>(field.data.size() * sizeof(double)))
        throw std::runtime_error("load_field: truncated " + base_path + ".f64");
    return field;
}

void write_csv(const std::string& path, const std::vector<CsvColumn>& cols) {
    if (cols.empty()) throw std::invalid_argument("write_csv: no columns");
    const std::size_t rows = cols.front().values.size();
    for (const auto& c : cols)
        if (c.values.size() != rows) throw std::invalid_argument("write_csv: ragged columns");

    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_csv: cannot open " + path);
    for (std::size_t c = 0; c < cols.size(); ++c)
        out << (c ? "," : "") << cols[c].name;
    out << "\n";
    char buf[40];
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols.size(); ++c) {
            std::snprintf(buf, sizeof(buf), "%.17g", cols[c].values[r]);
            out << (c ? "," : "") << buf;
        }
        out << "\n";
    }
    if (!out) throw std::runtime_error("write_csv: write failure on " + path);
}

nlohmann::json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_json_file: cannot open " + path);
    return nlohmann::json::parse(in);
}

void write_json_file(const std::string& path, const nlohmann::json& j) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_json_file: cannot open " + path);
    out << j.dump(2) << "\n";
    if (!out) throw std::runtime_error("write_json_file: write failure on " + path);
}

}  // namespace sedsim
