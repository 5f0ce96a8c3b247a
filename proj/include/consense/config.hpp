#pragma once

// Experiment config files: flat INI-style sections of `key = value` pairs.
//
//   [scenario]    seed, trials, prior
//   [network]     topology (path, relative to the config file)
//   [sensing]     tw, snr ("uniform <db>" | "range <lo_db> <hi_db>")
//   [consensus]   scheme ("laplacian <eps>" | "metropolis"),
//                 failure_probability, stopping ("exact" | "spread"),
//                 spread_tolerance_db, spread_scope ("neighbors" | "global"),
//                 exact_tolerance, max_iterations
//   [detection]   rules (comma list of consensus, or, single, kofn <k>),
//                 thresholds ("lo:hi:step" or comma list, dB)
//   [sweep]       snr_grid ("lo:hi:step" or list), pf_target,
//                 objective ("cap_pm <lvl>" | "cap_pf <lvl>" | "balanced <db> <db>")
//   [convergence] epsilons (list), repetitions, truth ("h0" | "h1")
//
// '#' starts a comment. Unknown sections or keys are errors.

#include <cctype>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "consense/consensus.hpp"
#include "consense/detection.hpp"
#include "consense/error.hpp"
#include "consense/experiments.hpp"
#include "consense/graph.hpp"

namespace consense {

struct SweepConfig {
  std::vector<double> snr_grid_db = make_grid(5.0, 10.0, 0.2);
  double pf_target = 0.1;
  RobustnessObjective objective = CapPm{1e-2};
};

struct ConvergenceConfig {
  std::vector<double> epsilons{0.1, 0.19};
  std::size_t repetitions = 200;
  GroundTruth truth = GroundTruth::H1;
};

struct ExperimentConfig {
  ScenarioConfig scenario;
  SweepConfig sweep;
  ConvergenceConfig convergence;
  std::string topology_path;
  bool seed_given = false;
};

namespace detail {

inline std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(trim(item));
  return out;
}

inline std::vector<std::string> words(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

class ValueParser {
public:
  ValueParser(std::string file, std::size_t line) : file_(std::move(file)), line_(line) {}

  [[noreturn]] void fail(const std::string& what) const { throw ConfigError(file_, line_, what); }

  double real(const std::string& text) const {
    const std::string t = trim(text);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc{} || ptr != t.data() + t.size() || t.empty()) fail("expected a number, got '" + t + "'");
    return v;
  }

  std::uint64_t unsigned_integer(const std::string& text) const {
    const std::string t = trim(text);
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc{} || ptr != t.data() + t.size() || t.empty()) {
      fail("expected a non-negative integer, got '" + t + "'");
    }
    return v;
  }

  /// "lo:hi:step" or "a, b, c".
  std::vector<double> grid(const std::string& text) const {
    if (text.find(':') != std::string::npos) {
      const auto parts = split(text, ':');
      if (parts.size() != 3) fail("expected range 'lo:hi:step'");
      try {
        return make_grid(real(parts[0]), real(parts[1]), real(parts[2]));
      } catch (const InvalidArgument& e) {
        fail(e.what());
      }
    }
    std::vector<double> out;
    for (const auto& item : split(text, ',')) out.push_back(real(item));
    if (out.empty()) fail("empty list");
    return out;
  }

private:
  std::string file_;
  std::size_t line_;
};

}  // namespace detail

inline ExperimentConfig parse_config(std::istream& in, const std::string& source,
                                     const std::filesystem::path& base_dir = {}) {
  static const std::map<std::string, std::set<std::string>> schema = {
      {"scenario", {"seed", "trials", "prior"}},
      {"network", {"topology"}},
      {"sensing", {"tw", "snr"}},
      {"consensus",
       {"scheme", "failure_probability", "stopping", "spread_tolerance_db", "spread_scope", "exact_tolerance",
        "max_iterations"}},
      {"detection", {"rules", "thresholds"}},
      {"sweep", {"snr_grid", "pf_target", "objective"}},
      {"convergence", {"epsilons", "repetitions", "truth"}},
  };

  ExperimentConfig cfg;
  ScenarioConfig& sc = cfg.scenario;
  sc.thresholds_db = make_grid(8.0, 16.0, 0.1);
  std::set<std::string> seen;
  std::string section;
  std::string raw;
  std::size_t line_no = 0;
  std::size_t topology_line = 0;

  while (std::getline(in, raw)) {
    ++line_no;
    if (const auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    const std::string line = detail::trim(raw);
    if (line.empty()) continue;
    const detail::ValueParser vp(source, line_no);

    if (line.front() == '[') {
      if (line.back() != ']') vp.fail("malformed section header");
      section = detail::trim(line.substr(1, line.size() - 2));
      if (!schema.contains(section)) vp.fail("unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) vp.fail("expected 'key = value'");
    if (section.empty()) vp.fail("key outside of any section");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (!schema.at(section).contains(key)) vp.fail("unknown key '" + key + "' in [" + section + "]");
    if (!seen.insert(section + "." + key).second) vp.fail("duplicate key '" + key + "' in [" + section + "]");
    if (value.empty()) vp.fail("empty value for '" + key + "'");
    const auto w = detail::words(value);

    try {
      if (section == "scenario") {
        if (key == "seed") {
          sc.seed = vp.unsigned_integer(value);
          cfg.seed_given = true;
        } else if (key == "trials") {
          sc.trials = vp.unsigned_integer(value);
          if (sc.trials < 1) vp.fail("trials must be >= 1");
        } else if (key == "prior") {
          sc.prior = vp.real(value);
          if (!(sc.prior >= 0.0 && sc.prior <= 1.0)) vp.fail("prior must lie in [0, 1]");
        }
      } else if (section == "network") {
        std::filesystem::path p(value);
        if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
        cfg.topology_path = p.string();
        topology_line = line_no;
      } else if (section == "sensing") {
        if (key == "tw") {
          sc.m = static_cast<unsigned>(vp.unsigned_integer(value));
          if (sc.m < 2) vp.fail("tw must be >= 2 for the Rayleigh model");
        } else if (key == "snr") {
          if (w.size() == 2 && w[0] == "uniform") {
            sc.snr = UniformSnr{vp.real(w[1])};
          } else if (w.size() == 3 && w[0] == "range") {
            const RangeEvenSnr r{vp.real(w[1]), vp.real(w[2])};
            if (r.lo_db > r.hi_db) vp.fail("SNR range has lo > hi");
            sc.snr = r;
          } else {
            vp.fail("expected 'uniform <db>' or 'range <lo_db> <hi_db>'");
          }
        }
      } else if (section == "consensus") {
        if (key == "scheme") {
          if (w.size() == 2 && w[0] == "laplacian") {
            sc.scheme = LaplacianEpsilon{vp.real(w[1])};
          } else if (w.size() == 1 && w[0] == "metropolis") {
            sc.scheme = Metropolis{};
          } else {
            vp.fail("expected 'laplacian <eps>' or 'metropolis'");
          }
        } else if (key == "failure_probability") {
          sc.failure = LinkFailureModel(vp.real(value));
        } else if (key == "stopping") {
          if (value == "exact") {
            sc.stopping.mode = StoppingMode::ExactAverage;
          } else if (value == "spread") {
            sc.stopping.mode = StoppingMode::SpreadDb;
          } else {
            vp.fail("expected 'exact' or 'spread'");
          }
        } else if (key == "spread_tolerance_db") {
          sc.stopping.spread_tolerance_db = vp.real(value);
        } else if (key == "spread_scope") {
          if (value == "neighbors") {
            sc.stopping.scope = SpreadScope::Neighbors;
          } else if (value == "global") {
            sc.stopping.scope = SpreadScope::Global;
          } else {
            vp.fail("expected 'neighbors' or 'global'");
          }
        } else if (key == "exact_tolerance") {
          sc.stopping.exact_tolerance = vp.real(value);
        } else if (key == "max_iterations") {
          sc.stopping.max_iterations = vp.unsigned_integer(value);
        }
        sc.stopping.validate();
      } else if (section == "detection") {
        if (key == "rules") {
          sc.rules.clear();
          for (const auto& item : detail::split(value, ',')) {
            const auto rw = detail::words(item);
            if (rw.size() == 1 && rw[0] == "consensus") {
              sc.rules.push_back({RuleKind::Consensus});
            } else if (rw.size() == 1 && rw[0] == "or") {
              sc.rules.push_back({RuleKind::OrRule});
            } else if (rw.size() == 1 && rw[0] == "single") {
              sc.rules.push_back({RuleKind::Single});
            } else if (rw.size() == 2 && rw[0] == "kofn") {
              sc.rules.push_back({RuleKind::KOutOfN, vp.unsigned_integer(rw[1])});
            } else {
              vp.fail("unknown rule '" + item + "'");
            }
          }
          if (sc.rules.empty()) vp.fail("no rules");
        } else if (key == "thresholds") {
          sc.thresholds_db = vp.grid(value);
          if (!std::is_sorted(sc.thresholds_db.begin(), sc.thresholds_db.end())) vp.fail("thresholds must be sorted");
        }
      } else if (section == "sweep") {
        if (key == "snr_grid") {
          cfg.sweep.snr_grid_db = vp.grid(value);
        } else if (key == "pf_target") {
          cfg.sweep.pf_target = vp.real(value);
          if (!(cfg.sweep.pf_target > 0.0 && cfg.sweep.pf_target < 1.0)) vp.fail("pf_target must lie in (0, 1)");
        } else if (key == "objective") {
          if (w.size() == 2 && w[0] == "cap_pm") {
            cfg.sweep.objective = CapPm{vp.real(w[1])};
          } else if (w.size() == 2 && w[0] == "cap_pf") {
            cfg.sweep.objective = CapPf{vp.real(w[1])};
          } else if (w.size() == 3 && w[0] == "balanced") {
            cfg.sweep.objective = Balanced{vp.real(w[1]), vp.real(w[2])};
          } else {
            vp.fail("expected 'cap_pm <level>', 'cap_pf <level>' or 'balanced <consensus_db> <or_db>'");
          }
        }
      } else if (section == "convergence") {
        if (key == "epsilons") {
          cfg.convergence.epsilons = vp.grid(value);
        } else if (key == "repetitions") {
          cfg.convergence.repetitions = vp.unsigned_integer(value);
          if (cfg.convergence.repetitions < 1) vp.fail("repetitions must be >= 1");
        } else if (key == "truth") {
          if (value == "h0") {
            cfg.convergence.truth = GroundTruth::H0;
          } else if (value == "h1") {
            cfg.convergence.truth = GroundTruth::H1;
          } else {
            vp.fail("expected 'h0' or 'h1'");
          }
        }
      }
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      vp.fail(e.what());
    }
  }

  if (cfg.topology_path.empty()) throw ConfigError(source, 0, "missing [network] topology");
  try {
    sc.topology = std::make_shared<const Topology>(load_topology(cfg.topology_path));
  } catch (const Error& e) {
    throw ConfigError(source, topology_line, e.what());
  }
  for (const Rule& rule : sc.rules) {
    if (rule.kind == RuleKind::KOutOfN && (rule.k < 1 || rule.k > sc.n())) {
      throw ConfigError(source, 0, "rule " + rule.name() + " needs 1 <= k <= n");
    }
  }
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, 0, "cannot open config file");
  return parse_config(in, path, std::filesystem::path(path).parent_path());
}

}  // namespace consense
