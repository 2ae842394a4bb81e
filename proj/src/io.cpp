#include "powerspec/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>
#include <unistd.h>

#include <Eigen/Core>
#include <fftw3.h>

#include "powerspec/error.hpp"

namespace powerspec {

std::string format_number(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void write_atomic(const std::filesystem::path& path, const std::string& content) {
  std::error_code ec;
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) {
      throw IoError("cannot create directory '" + path.parent_path().string() + "': " + ec.message());
    }
  }
  std::filesystem::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw IoError("cannot open '" + tmp.string() + "' for writing");
    }
    out << content;
    out.flush();
    if (!out) {
      throw IoError("write failed for '" + tmp.string() + "'");
    }
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw IoError("cannot rename '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
  }
}

std::string spectrum_csv(const SpectrumEstimate& est) {
  std::ostringstream os;
  os << "omega,S,stderr,n,segments,estimator\n";
  const std::string name = to_string(est.estimator);
  for (std::size_t k = 0; k < est.size(); ++k) {
    os << format_number(est.omegas[k]) << ',' << format_number(est.values[k]) << ','
       << format_number(est.stderrs[k]) << ',' << est.n_per_segment << ',' << est.segments << ',' << name << '\n';
  }
  return os.str();
}

std::string operator_csv(const std::vector<OperatorRow>& rows) {
  std::ostringstream os;
  os << "omega,S_Y,terms,last_term,tilde_check,spectral_radius\n";
  for (const auto& r : rows) {
    os << format_number(r.omega) << ',' << format_number(r.s_y) << ',' << r.terms << ','
       << format_number(r.last_term) << ',' << format_number(r.tilde_check) << ','
       << format_number(r.spectral_radius) << '\n';
  }
  return os.str();
}

std::string columns_csv(const std::vector<std::string>& names, const std::vector<std::vector<double>>& columns) {
  if (names.size() != columns.size()) {
    throw SizeError("columns_csv: names and columns differ in count");
  }
  std::ostringstream os;
  for (std::size_t c = 0; c < names.size(); ++c) {
    os << (c ? "," : "") << names[c];
  }
  os << '\n';
  const std::size_t rows = columns.empty() ? 0 : columns.front().size();
  for (const auto& col : columns) {
    if (col.size() != rows) {
      throw SizeError("columns_csv: ragged columns");
    }
  }
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < columns.size(); ++c) {
      os << (c ? "," : "") << format_number(columns[c][r]);
    }
    os << '\n';
  }
  return os.str();
}

void emit_plot_data(const SpectrumEstimate& est, const std::filesystem::path& path) {
  if (est.size() == 0) {
    throw DomainError("emit_plot_data: empty estimate");
  }
  std::ostringstream os;
  os << "# omega value stderr (" << to_string(est.estimator) << ")\n";
  for (std::size_t k = 0; k < est.size(); ++k) {
    os << format_number(est.omegas[k]) << ' ' << format_number(est.values[k]) << ' '
       << format_number(est.stderrs[k]) << '\n';
  }
  try {
    write_atomic(path, os.str());
  } catch (const IoError& e) {
    throw IoError("emit_plot_data: " + path.string() + ": " + e.what());
  }
}

std::string Manifest::to_json() const {
  nlohmann::ordered_json j;
  j["schema"] = "powerspec.manifest.v1";
  j["command"] = command;
  nlohmann::ordered_json versions;
  versions["powerspec"] = kVersion;
  versions["compiler"] = __VERSION__;
  versions["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                      std::to_string(EIGEN_MINOR_VERSION);
  versions["fftw"] = std::string(fftw_version);
  j["versions"] = versions;
  j["seed"] = seed;
  j["threads"] = threads;
  nlohmann::ordered_json s = nlohmann::ordered_json::object();
  for (const auto& [k, v] : settings) {
    s[k] = v;
  }
  j["settings"] = s;
  nlohmann::ordered_json r = nlohmann::ordered_json::object();
  for (const auto& [k, v] : results) {
    r[k] = v;
  }
  j["results"] = r;
  j["outputs"] = outputs;
  nlohmann::ordered_json t = nlohmann::ordered_json::object();
  for (const auto& [k, v] : timings) {
    t[k] = v;
  }
  j["timings_seconds"] = t;
  return j.dump(2) + "\n";
}

}  // namespace powerspec
