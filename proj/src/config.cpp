#include "powerspec/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "powerspec/error.hpp"
#include "powerspec/spectrum_mc.hpp"

namespace powerspec {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) {
    return {};
  }
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

struct LineError {
  int line;
  std::string message;
};

double to_double(const std::string& v) {
  double out = 0.0;
  const char* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end || !std::isfinite(out)) {
    throw std::invalid_argument("expected a finite number, got '" + v + "'");
  }
  return out;
}

std::int64_t to_int(const std::string& v) {
  // Integers may be written as 1e7 or 2^20 for readability.
  if (const auto caret = v.find('^'); caret != std::string::npos) {
    const std::int64_t base = to_int(trim(v.substr(0, caret)));
    const std::int64_t exp = to_int(trim(v.substr(caret + 1)));
    if (base < 0 || exp < 0 || exp > 62) {
      throw std::invalid_argument("bad power '" + v + "'");
    }
    const double r = std::pow(static_cast<double>(base), static_cast<double>(exp));
    if (r > 9.2e18) {
      throw std::invalid_argument("integer out of range '" + v + "'");
    }
    return static_cast<std::int64_t>(std::llround(r));
  }
  std::int64_t out = 0;
  const char* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec == std::errc() && ptr == end) {
    return out;
  }
  const double d = to_double(v);
  if (d != std::floor(d) || std::abs(d) > 9.2e18) {
    throw std::invalid_argument("expected an integer, got '" + v + "'");
  }
  return static_cast<std::int64_t>(d);
}

std::uint64_t to_u64(const std::string& v) {
  std::uint64_t out = 0;
  const char* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw std::invalid_argument("expected an unsigned 64-bit integer, got '" + v + "'");
  }
  return out;
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) {
      throw std::invalid_argument("empty list element in '" + v + "'");
    }
    out.push_back(item);
  }
  if (out.empty()) {
    throw std::invalid_argument("empty list");
  }
  return out;
}

std::vector<double> to_doubles(const std::string& v) {
  std::vector<double> out;
  for (const auto& s : split_list(v)) {
    out.push_back(to_double(s));
  }
  return out;
}

void require(bool ok, const std::string& message) {
  if (!ok) {
    throw std::invalid_argument(message);
  }
}

using Setter = std::function<void(RunConfig&, const std::string&)>;

const std::map<std::string, std::map<std::string, Setter>>& schema() {
  static const std::map<std::string, std::map<std::string, Setter>> s = {
      {"map",
       {
           {"gamma",
            [](RunConfig& c, const std::string& v) {
              c.map.gamma = to_double(v);
              require(c.map.gamma >= 0.0 && c.map.gamma < 1.0, "gamma must lie in [0,1)");
            }},
           {"newton_tol",
            [](RunConfig& c, const std::string& v) {
              c.map.newton_tol = to_double(v);
              require(c.map.newton_tol > 0.0 && c.map.newton_tol < 1e-3, "newton_tol must lie in (0, 1e-3)");
            }},
           {"r_cap",
            [](RunConfig& c, const std::string& v) {
              c.map.r_cap = to_int(v);
              require(c.map.r_cap >= 2, "r_cap must be at least 2");
            }},
       }},
      {"observable",
       {
           {"kind",
            [](RunConfig& c, const std::string& v) {
              try {
                c.observable.kind = observable_kind_from_string(v);
              } catch (const Error&) {
                throw std::invalid_argument("kind must be one of cosine_basis, power_vanishing, constant, tabulated");
              }
            }},
           {"eta",
            [](RunConfig& c, const std::string& v) {
              c.observable.eta = to_double(v);
              require(c.observable.eta > 0.0 && c.observable.eta <= 1.0, "eta must lie in (0,1]");
            }},
           {"coefficients", [](RunConfig& c, const std::string& v) { c.observable.coefficients = to_doubles(v); }},
           {"table", [](RunConfig& c, const std::string& v) { c.observable.table = v; }},
       }},
      {"spectrum",
       {
           {"omega_count",
            [](RunConfig& c, const std::string& v) {
              c.spectrum.omega_count = static_cast<int>(to_int(v));
              require(c.spectrum.omega_count >= 1 && c.spectrum.omega_count <= 100'000,
                      "omega_count must lie in [1, 100000]");
            }},
           {"omega_min",
            [](RunConfig& c, const std::string& v) {
              c.spectrum.omega_min = to_double(v);
              require(c.spectrum.omega_min > 0.0 && c.spectrum.omega_min < std::numbers::pi,
                      "omega_min must lie in (0, pi)");
            }},
           {"omega_offset", [](RunConfig& c, const std::string& v) { c.spectrum.omega_offset = to_double(v); }},
           {"omegas",
            [](RunConfig& c, const std::string& v) {
              c.spectrum.omegas = to_doubles(v);
              for (double w : c.spectrum.omegas) {
                require(w >= 0.0 && w <= kTwoPi, "omegas must lie in [0, 2pi]");
              }
            }},
           {"n_per_segment",
            [](RunConfig& c, const std::string& v) {
              c.spectrum.n_per_segment = to_int(v);
              require(c.spectrum.n_per_segment >= 16, "n_per_segment must be at least 16");
            }},
           {"segments",
            [](RunConfig& c, const std::string& v) {
              c.spectrum.segments = static_cast<int>(to_int(v));
              require(c.spectrum.segments >= 2, "segments must be at least 2");
            }},
           {"blocks",
            [](RunConfig& c, const std::string& v) {
              c.spectrum.blocks = static_cast<int>(to_int(v));
              require(c.spectrum.blocks >= 1, "blocks must be at least 1");
            }},
           {"seed", [](RunConfig& c, const std::string& v) { c.spectrum.seed = to_u64(v); }},
           {"burn_in",
            [](RunConfig& c, const std::string& v) {
              c.spectrum.burn_in = to_int(v);
              require(c.spectrum.burn_in >= 0, "burn_in must be nonnegative");
            }},
           {"n_returns",
            [](RunConfig& c, const std::string& v) {
              c.spectrum.n_returns = to_int(v);
              require(c.spectrum.n_returns >= 16, "n_returns must be at least 16");
            }},
           {"induced_blocks",
            [](RunConfig& c, const std::string& v) {
              c.spectrum.induced_blocks = static_cast<int>(to_int(v));
              require(c.spectrum.induced_blocks >= 1, "induced_blocks must be at least 1");
            }},
       }},
      {"operator",
       {
           {"n_nodes",
            [](RunConfig& c, const std::string& v) {
              c.op.n_nodes = static_cast<int>(to_int(v));
              require(c.op.n_nodes >= 16, "n_nodes must be at least 16");
            }},
           {"r_max",
            [](RunConfig& c, const std::string& v) {
              c.op.r_max = static_cast<int>(to_int(v));
              require(c.op.r_max >= 8, "r_max must be at least 8");
            }},
           {"tol",
            [](RunConfig& c, const std::string& v) {
              c.op.tol = to_double(v);
              require(c.op.tol > 0.0 && c.op.tol < 1.0, "tol must lie in (0,1)");
            }},
           {"n_max_terms",
            [](RunConfig& c, const std::string& v) {
              c.op.n_max_terms = static_cast<int>(to_int(v));
              require(c.op.n_max_terms >= 1, "n_max_terms must be at least 1");
            }},
           {"taylor_radius",
            [](RunConfig& c, const std::string& v) {
              c.op.taylor_radius = to_double(v);
              require(c.op.taylor_radius >= 0.0 && c.op.taylor_radius <= 1e-2, "taylor_radius must lie in [0, 1e-2]");
            }},
           {"memory_budget",
            [](RunConfig& c, const std::string& v) {
              c.op.memory_budget = to_int(v);
              require(c.op.memory_budget > 0, "memory_budget must be positive");
            }},
       }},
      {"output",
       {
           {"directory", [](RunConfig& c, const std::string& v) { c.output.directory = v; }},
           {"formats",
            [](RunConfig& c, const std::string& v) {
              c.output.formats = split_list(v);
              for (const auto& f : c.output.formats) {
                require(f == "csv" || f == "json" || f == "plot", "formats must be drawn from csv, json, plot");
              }
            }},
       }},
      {"analysis",
       {
           {"tail_samples",
            [](RunConfig& c, const std::string& v) {
              c.analysis.tail_samples = to_int(v);
              require(c.analysis.tail_samples >= 1'000'000, "tail_samples must be at least 1e6");
            }},
           {"tail_segments",
            [](RunConfig& c, const std::string& v) {
              c.analysis.tail_segments = static_cast<int>(to_int(v));
              require(c.analysis.tail_segments >= 2, "tail_segments must be at least 2");
            }},
           {"kac_iterates",
            [](RunConfig& c, const std::string& v) {
              c.analysis.kac_iterates = to_int(v);
              require(c.analysis.kac_iterates >= 1'000'000, "kac_iterates must be at least 1e6");
            }},
           {"tolerance",
            [](RunConfig& c, const std::string& v) {
              c.analysis.tolerance = to_double(v);
              require(c.analysis.tolerance > 0.0 && c.analysis.tolerance < 1.0, "tolerance must lie in (0,1)");
            }},
           {"blowup_omegas", [](RunConfig& c, const std::string& v) { c.analysis.blowup_omegas = to_doubles(v); }},
       }},
  };
  return s;
}

std::vector<double> load_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::invalid_argument("cannot open table '" + path.string() + "'");
  }
  std::vector<double> values;
  std::string tok;
  while (in >> tok) {
    if (tok.front() == '#') {
      std::getline(in, tok);
      continue;
    }
    values.push_back(to_double(tok));
  }
  if (values.size() < 2) {
    throw std::invalid_argument("table '" + path.string() + "' needs at least 2 values");
  }
  return values;
}

}  // namespace

Observable ObservableConfig::build() const {
  switch (kind) {
    case ObservableKind::cosine_basis:
      return Observable::cosine(coefficients, eta);
    case ObservableKind::power_vanishing:
      return Observable::power(eta, coefficients.empty() ? 1.0 : coefficients.front());
    case ObservableKind::constant:
      return Observable::constant(coefficients.empty() ? 0.0 : coefficients.front());
    case ObservableKind::tabulated:
      return Observable::tabulated(table_values, eta);
  }
  throw DomainError("unknown observable kind");
}

std::vector<double> SpectrumConfig::grid() const {
  if (!omegas.empty()) {
    return omegas;
  }
  return guarded_grid(omega_count, omega_min, omega_offset);
}

bool OutputConfig::wants(const std::string& f) const {
  return std::find(formats.begin(), formats.end(), f) != formats.end();
}

RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  RunConfig cfg;
  std::vector<LineError> errors;
  std::set<std::string> seen_sections;
  std::set<std::string> seen_keys;
  std::map<std::string, int> key_line;
  std::string section;
  bool section_valid = false;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    std::string s = raw;
    if (const auto hash = s.find('#'); hash != std::string::npos) {
      s.erase(hash);
    }
    s = trim(s);
    if (s.empty()) {
      continue;
    }
    if (s.front() == '[') {
      if (s.back() != ']' || s.size() < 3) {
        errors.push_back({line, "malformed section header '" + s + "'"});
        section_valid = false;
        continue;
      }
      section = trim(s.substr(1, s.size() - 2));
      section_valid = schema().count(section) != 0;
      if (!section_valid) {
        errors.push_back({line, "unknown section [" + section + "]"});
      } else if (!seen_sections.insert(section).second) {
        errors.push_back({line, "duplicate section [" + section + "]"});
      }
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) {
      errors.push_back({line, "expected 'key = value', got '" + s + "'"});
      continue;
    }
    const std::string key = trim(s.substr(0, eq));
    const std::string value = trim(s.substr(eq + 1));
    if (section.empty()) {
      errors.push_back({line, "key '" + key + "' outside any section"});
      continue;
    }
    if (!section_valid) {
      continue;
    }
    const auto& keys = schema().at(section);
    const auto it = keys.find(key);
    if (it == keys.end()) {
      errors.push_back({line, "unknown key '" + key + "' in [" + section + "]"});
      continue;
    }
    if (value.empty()) {
      errors.push_back({line, "empty value for '" + key + "'"});
      continue;
    }
    const std::string full = section + "." + key;
    if (!seen_keys.insert(full).second) {
      errors.push_back({line, "duplicate key '" + key + "' in [" + section + "]"});
      continue;
    }
    key_line[full] = line;
    try {
      it->second(cfg, value);
      cfg.settings[full] = value;
    } catch (const std::exception& e) {
      errors.push_back({line, section + "." + key + ": " + e.what()});
    }
  }
  for (const char* required : {"map", "observable"}) {
    if (!seen_sections.count(required)) {
      errors.push_back({0, std::string("missing required section [") + required + "]"});
    }
  }
  if (errors.empty()) {
    // Cross-field checks.
    const auto at = [&](const std::string& k) { return key_line.count(k) ? key_line[k] : 0; };
    if (cfg.spectrum.blocks > cfg.spectrum.n_per_segment / 16) {
      errors.push_back({at("spectrum.blocks"), "spectrum.blocks leaves fewer than 16 samples per block"});
    }
    if (cfg.spectrum.induced_blocks > cfg.spectrum.n_returns / 16) {
      errors.push_back({at("spectrum.induced_blocks"), "spectrum.induced_blocks leaves fewer than 16 returns per block"});
    }
    if (cfg.spectrum.omegas.empty() && cfg.spectrum.omega_offset + cfg.spectrum.omega_min <= 0.0) {
      errors.push_back({at("spectrum.omega_offset"), "spectrum.omega_offset moves the grid into the guard band"});
    }
    const auto kind = cfg.observable.kind;
    if (kind == ObservableKind::tabulated) {
      if (cfg.observable.table.empty()) {
        errors.push_back({at("observable.kind"), "tabulated observable requires observable.table"});
      } else {
        std::filesystem::path tp(cfg.observable.table);
        if (tp.is_relative()) {
          tp = base_dir / tp;
        }
        try {
          cfg.observable.table_values = load_table(tp);
        } catch (const std::exception& e) {
          errors.push_back({at("observable.table"), e.what()});
        }
      }
    } else if (!cfg.observable.table.empty()) {
      errors.push_back({at("observable.table"), "observable.table is only valid for kind = tabulated"});
    }
    if ((kind == ObservableKind::constant || kind == ObservableKind::power_vanishing) &&
        cfg.observable.coefficients.size() != 1 && cfg.settings.count("observable.coefficients")) {
      errors.push_back({at("observable.coefficients"), "this observable kind takes a single coefficient"});
    }
    if ((kind == ObservableKind::constant || kind == ObservableKind::power_vanishing) &&
        !cfg.settings.count("observable.coefficients")) {
      cfg.observable.coefficients = {kind == ObservableKind::constant ? 0.0 : 1.0};
    }
  }
  if (!errors.empty()) {
    std::ostringstream os;
    os << "invalid configuration:";
    for (const auto& e : errors) {
      os << "\n  ";
      if (e.line > 0) {
        os << "line " << e.line << ": ";
      }
      os << e.message;
    }
    throw ConfigError(os.str());
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot read config '" + path.string() + "'");
  }
  std::ostringstream os;
  os << in.rdbuf();
  return parse_config(os.str(), path.parent_path());
}

}  // namespace powerspec
