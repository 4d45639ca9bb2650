#pragma once

// Model file schema and all serialized outputs.
//
// A model file is a single JSON object:
//   genotypes        list of genotype names
//   phenotypes       list of phenotype names
//   birth, death     map phenotype -> rate (every phenotype required)
//   competition      map "p,q" -> rate          (missing entries are 0)
//   switch_natural   map genotype -> map "p,q" -> rate
//   switch_induced   map genotype -> map "p,q" -> map inducing-phenotype -> rate
//   mutation_prob    map genotype -> probability
//   mutation_law     list of {from: "g,p", to: "g,p", prob}
//   K                carrying capacity (positive integer)
//   u_K              mutation scaling in [0,1]
//   initial          map "g,p" -> density (counts are round(density * K))
// Unknown keys anywhere are rejected. Identifiers must not contain ',' or
// ':' (they delimit pair keys and CSV column names).
//
// Trajectories serialize as CSV with header "time,<g:p>,..." in trait order
// and shortest-round-trip decimal floats; an absorbed run ends with a
// "# absorbed t=..." comment line. JSON reports use shortest-round-trip
// numbers and fixed key order, so reruns with the same seed are
// byte-identical.

#include <charconv>
#include <cstdint>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "plasticity/errors.hpp"
#include "plasticity/gillespie.hpp"
#include "plasticity/linalg.hpp"
#include "plasticity/model.hpp"
#include "plasticity/ode.hpp"
#include "plasticity/pesp.hpp"
#include "plasticity/switch_graph.hpp"

namespace plasticity {

using Json = nlohmann::ordered_json;

struct ModelFile {
  ModelParams params;
  std::vector<double> initial_density;  // full trait-space vector

  PopulationState initial_state() const {
    PopulationState s;
    s.K = params.K;
    s.time = 0.0;
    s.counts.resize(initial_density.size());
    for (std::size_t i = 0; i < initial_density.size(); ++i)
      s.counts[i] = std::llround(initial_density[i] * static_cast<double>(params.K));
    return s;
  }

  std::vector<int> positive_initial_support() const {
    std::vector<int> support;
    for (std::size_t i = 0; i < initial_density.size(); ++i)
      if (initial_density[i] > 0.0) support.push_back(static_cast<int>(i));
    return support;
  }
};

namespace io_detail {

inline void check_identifier(const std::string& name, const char* what) {
  if (name.empty()) throw ParseError(std::string(what) + " name must not be empty");
  if (name.find(',') != std::string::npos || name.find(':') != std::string::npos)
    throw ParseError(std::string(what) + " name '" + name + "' must not contain ',' or ':'");
}

inline std::pair<std::string, std::string> split_pair(const std::string& key,
                                                      const char* context) {
  const auto comma = key.find(',');
  if (comma == std::string::npos || key.find(',', comma + 1) != std::string::npos)
    throw ParseError(std::string(context) + ": key '" + key + "' is not a 'a,b' pair");
  return {key.substr(0, comma), key.substr(comma + 1)};
}

inline double number(const Json& j, const std::string& where) {
  if (!j.is_number()) throw ParseError(where + " must be a number");
  return j.get<double>();
}

inline void reject_unknown_keys(const Json& obj, const std::vector<std::string>& known,
                                const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const auto& k : known) ok = ok || k == key;
    if (!ok) throw ParseError("unknown key '" + key + "' in " + where);
  }
}

}  // namespace io_detail

inline int parse_trait(const TraitSpace& space, const std::string& text, const char* context) {
  const auto [g, p] = io_detail::split_pair(text, context);
  return space.trait(space.find_genotype(g), space.find_phenotype(p));
}

inline ModelFile parse_model(const Json& root) {
  using io_detail::number;
  using io_detail::reject_unknown_keys;
  using io_detail::split_pair;

  if (!root.is_object()) throw ParseError("model file must be a JSON object");
  reject_unknown_keys(root,
                      {"genotypes", "phenotypes", "birth", "death", "competition",
                       "switch_natural", "switch_induced", "mutation_prob", "mutation_law", "K",
                       "u_K", "initial"},
                      "model file");
  for (const char* key : {"genotypes", "phenotypes", "birth", "death", "K"})
    if (!root.contains(key)) throw ParseError(std::string("missing required key '") + key + "'");

  TraitSpace space;
  for (const auto& g : root.at("genotypes")) {
    if (!g.is_string()) throw ParseError("genotypes must be strings");
    io_detail::check_identifier(g.get<std::string>(), "genotype");
    space.genotypes.push_back(g.get<std::string>());
  }
  for (const auto& p : root.at("phenotypes")) {
    if (!p.is_string()) throw ParseError("phenotypes must be strings");
    io_detail::check_identifier(p.get<std::string>(), "phenotype");
    space.phenotypes.push_back(p.get<std::string>());
  }
  if (space.genotypes.empty()) throw ParseError("genotypes must not be empty");
  if (space.phenotypes.empty()) throw ParseError("phenotypes must not be empty");

  ModelFile file;
  file.params = make_empty_params(space);
  ModelParams& m = file.params;
  const TraitSpace& sp = m.space;

  auto fill_pheno_map = [&](const char* key, std::vector<double>& out) {
    const Json& obj = root.at(key);
    if (!obj.is_object()) throw ParseError(std::string(key) + " must be an object");
    reject_unknown_keys(obj, sp.phenotypes, key);
    for (const auto& name : sp.phenotypes)
      if (!obj.contains(name))
        throw ParseError(std::string(key) + " is missing phenotype '" + name + "'");
    for (const auto& [name, value] : obj.items())
      out[sp.find_phenotype(name)] = number(value, std::string(key) + "." + name);
  };
  fill_pheno_map("birth", m.birth);
  fill_pheno_map("death", m.death);

  if (root.contains("competition")) {
    for (const auto& [key, value] : root.at("competition").items()) {
      const auto [a, b] = split_pair(key, "competition");
      m.competition[sp.find_phenotype(a) * sp.n_pheno() + sp.find_phenotype(b)] =
          number(value, "competition." + key);
    }
  }
  if (root.contains("switch_natural")) {
    const Json& obj = root.at("switch_natural");
    reject_unknown_keys(obj, sp.genotypes, "switch_natural");
    for (const auto& [gname, table] : obj.items()) {
      const int g = sp.find_genotype(gname);
      for (const auto& [key, value] : table.items()) {
        const auto [a, b] = split_pair(key, "switch_natural");
        m.switch_natural[g][sp.find_phenotype(a) * sp.n_pheno() + sp.find_phenotype(b)] =
            number(value, "switch_natural." + gname + "." + key);
      }
    }
  }
  if (root.contains("switch_induced")) {
    const Json& obj = root.at("switch_induced");
    reject_unknown_keys(obj, sp.genotypes, "switch_induced");
    for (const auto& [gname, table] : obj.items()) {
      const int g = sp.find_genotype(gname);
      for (const auto& [key, inducers] : table.items()) {
        const auto [a, b] = split_pair(key, "switch_induced");
        const int p = sp.find_phenotype(a), q = sp.find_phenotype(b);
        if (!inducers.is_object())
          throw ParseError("switch_induced." + gname + "." + key +
                           " must map inducing phenotypes to rates");
        reject_unknown_keys(inducers, sp.phenotypes, "switch_induced." + gname + "." + key);
        for (const auto& [rname, value] : inducers.items())
          m.switch_induced[g][(p * sp.n_pheno() + q) * sp.n_pheno() + sp.find_phenotype(rname)] =
              number(value, "switch_induced." + gname + "." + key + "." + rname);
      }
    }
  }
  if (root.contains("mutation_prob")) {
    const Json& obj = root.at("mutation_prob");
    reject_unknown_keys(obj, sp.genotypes, "mutation_prob");
    for (const auto& [gname, value] : obj.items())
      m.mutation_prob[sp.find_genotype(gname)] = number(value, "mutation_prob." + gname);
  }
  if (root.contains("mutation_law")) {
    for (const auto& entry : root.at("mutation_law")) {
      reject_unknown_keys(entry, {"from", "to", "prob"}, "mutation_law entry");
      for (const char* key : {"from", "to", "prob"})
        if (!entry.contains(key))
          throw ParseError(std::string("mutation_law entry missing '") + key + "'");
      const int from = parse_trait(sp, entry.at("from").get<std::string>(), "mutation_law.from");
      const int to = parse_trait(sp, entry.at("to").get<std::string>(), "mutation_law.to");
      m.mutation_law[from * sp.n_traits() + to] = number(entry.at("prob"), "mutation_law.prob");
    }
  }

  if (!root.at("K").is_number_integer() || root.at("K").get<std::int64_t>() <= 0)
    throw ParseError("K must be a positive integer");
  m.K = root.at("K").get<std::int64_t>();
  if (root.contains("u_K")) m.u_K = number(root.at("u_K"), "u_K");

  m.normalize_switch_diagonals();

  file.initial_density.assign(sp.n_traits(), 0.0);
  if (root.contains("initial")) {
    for (const auto& [key, value] : root.at("initial").items()) {
      const int trait = parse_trait(sp, key, "initial");
      file.initial_density[trait] = number(value, "initial." + key);
      if (file.initial_density[trait] < 0.0)
        throw ParseError("initial." + key + " must be nonnegative");
    }
  }
  return file;
}

inline ModelFile parse_model_text(const std::string& text) {
  Json root;
  try {
    root = Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what());
  }
  return parse_model(root);
}

inline ModelFile load_model_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open model file '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_model_text(buffer.str());
}

inline Json serialize_model(const ModelFile& file) {
  const ModelParams& m = file.params;
  const TraitSpace& sp = m.space;
  Json root;
  root["genotypes"] = sp.genotypes;
  root["phenotypes"] = sp.phenotypes;
  Json birth, death;
  for (int p = 0; p < sp.n_pheno(); ++p) {
    birth[sp.phenotypes[p]] = m.birth[p];
    death[sp.phenotypes[p]] = m.death[p];
  }
  root["birth"] = std::move(birth);
  root["death"] = std::move(death);
  Json comp = Json::object();
  for (int p = 0; p < sp.n_pheno(); ++p)
    for (int q = 0; q < sp.n_pheno(); ++q)
      if (m.comp(p, q) != 0.0)
        comp[sp.phenotypes[p] + "," + sp.phenotypes[q]] = m.comp(p, q);
  root["competition"] = std::move(comp);
  Json sn = Json::object(), si = Json::object();
  for (int g = 0; g < sp.n_geno(); ++g) {
    Json gt = Json::object(), git = Json::object();
    for (int p = 0; p < sp.n_pheno(); ++p)
      for (int q = 0; q < sp.n_pheno(); ++q) {
        if (m.s_nat(g, p, q) != 0.0)
          gt[sp.phenotypes[p] + "," + sp.phenotypes[q]] = m.s_nat(g, p, q);
        Json inducers = Json::object();
        for (int r = 0; r < sp.n_pheno(); ++r)
          if (m.s_ind(g, p, q, r) != 0.0) inducers[sp.phenotypes[r]] = m.s_ind(g, p, q, r);
        if (!inducers.empty()) git[sp.phenotypes[p] + "," + sp.phenotypes[q]] = std::move(inducers);
      }
    if (!gt.empty()) sn[sp.genotypes[g]] = std::move(gt);
    if (!git.empty()) si[sp.genotypes[g]] = std::move(git);
  }
  root["switch_natural"] = std::move(sn);
  root["switch_induced"] = std::move(si);
  Json mp = Json::object();
  for (int g = 0; g < sp.n_geno(); ++g)
    if (m.mutation_prob[g] != 0.0) mp[sp.genotypes[g]] = m.mutation_prob[g];
  root["mutation_prob"] = std::move(mp);
  Json law = Json::array();
  for (int i = 0; i < sp.n_traits(); ++i)
    for (int j = 0; j < sp.n_traits(); ++j)
      if (m.mut_law(i, j) != 0.0)
        law.push_back(Json{{"from", sp.genotypes[sp.geno_of(i)] + "," + sp.phenotypes[sp.pheno_of(i)]},
                           {"to", sp.genotypes[sp.geno_of(j)] + "," + sp.phenotypes[sp.pheno_of(j)]},
                           {"prob", m.mut_law(i, j)}});
  root["mutation_law"] = std::move(law);
  root["K"] = m.K;
  root["u_K"] = m.u_K;
  Json init = Json::object();
  for (int x = 0; x < sp.n_traits(); ++x)
    if (file.initial_density[x] != 0.0)
      init[sp.genotypes[sp.geno_of(x)] + "," + sp.phenotypes[sp.pheno_of(x)]] =
          file.initial_density[x];
  root["initial"] = std::move(init);
  return root;
}

// Shortest decimal representation that round-trips to the same double.
inline std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

inline std::string trajectory_csv(const TraitSpace& space, const Trajectory& traj) {
  std::string out = "time";
  for (int x = 0; x < space.n_traits(); ++x) out += "," + space.trait_name(x);
  out += "\n";
  for (std::size_t row = 0; row < traj.times.size(); ++row) {
    out += format_double(traj.times[row]);
    for (double v : traj.densities[row]) out += "," + format_double(v);
    out += "\n";
  }
  if (traj.absorbed) out += "# absorbed t=" + format_double(traj.final_time) + "\n";
  return out;
}

inline std::string ode_trajectory_csv(const TraitSpace& space, const std::vector<int>& support,
                                      const OdeTrajectory& traj) {
  std::string out = "time";
  for (int x : support) out += "," + space.trait_name(x);
  out += "\n";
  for (std::size_t row = 0; row < traj.times.size(); ++row) {
    out += format_double(traj.times[row]);
    for (int i = 0; i < traj.states[row].size(); ++i)
      out += "," + format_double(traj.states[row][i]);
    out += "\n";
  }
  return out;
}

inline Json validation_json(const ValidationReport& report) {
  return Json{{"valid", report.valid()},
              {"violations", report.violations},
              {"warnings", report.warnings}};
}

inline Json classes_json(const ModelParams& params, const ClassTable& classes) {
  Json out = Json::object();
  for (int g = 0; g < params.space.n_geno(); ++g) {
    const auto& partition = classes.partition(g);
    Json class_list = Json::array();
    for (const auto& members : partition.classes) {
      Json names = Json::array();
      for (int p : members) names.push_back(params.space.phenotypes[p]);
      class_list.push_back(std::move(names));
    }
    const auto open = check_recurrence(partition, classes.chain(g));
    Json entry;
    entry["classes"] = std::move(class_list);
    entry["recurrent"] = open.empty();
    if (!open.empty()) entry["non_closed_classes"] = open;
    out[params.space.genotypes[g]] = std::move(entry);
  }
  return out;
}

inline Json matrix_json(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (int i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Json vector_json(const Eigen::VectorXd& v) {
  Json out = Json::array();
  for (int i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

inline Json equilibrium_json(const TraitSpace& space, const EquilibriumReport& report) {
  Json eq = Json::object();
  for (std::size_t i = 0; i < report.support.size(); ++i)
    eq[space.trait_name(report.support[i])] = report.equilibrium[static_cast<int>(i)];
  return Json{{"equilibrium", std::move(eq)},
              {"converged", report.converged},
              {"residual", report.residual},
              {"eigenvalue_max_real", report.eigenvalue_max_real},
              {"stable", report.eigenvalue_max_real < 0.0},
              {"t_reached", report.t_reached},
              {"jacobian", matrix_json(report.jacobian)}};
}

inline Json branching_json(const ModelParams& params, const BranchingSpec& spec,
                           const Eigen::MatrixXd& a, const PerronRoot& perron,
                           const ExtinctionVector& ext, const std::vector<int>& resident_support,
                           const Eigen::VectorXd& resident_eq) {
  const TraitSpace& sp = params.space;
  Json class_names = Json::array();
  for (int p : spec.class_phenotypes) class_names.push_back(sp.phenotypes[p]);
  Json residents = Json::object();
  for (std::size_t i = 0; i < resident_support.size(); ++i)
    residents[sp.trait_name(resident_support[i])] = resident_eq[static_cast<int>(i)];
  Json invasion = Json::object();
  for (int i = 0; i < spec.size(); ++i)
    invasion[sp.phenotypes[spec.class_phenotypes[i]]] =
        ext.supercritical ? 1.0 - ext.q[i] : 0.0;
  return Json{{"genotype", sp.genotypes[spec.genotype]},
              {"class_phenotypes", std::move(class_names)},
              {"resident_equilibrium", std::move(residents)},
              {"birth", vector_json(spec.birth)},
              {"death_total", vector_json(spec.death_total)},
              {"switch", matrix_json(spec.switch_rates)},
              {"A", matrix_json(a)},
              {"lambda_max", perron.lambda},
              {"v", vector_json(perron.composition)},
              {"reproductive_value", vector_json(perron.reproductive_value)},
              {"supercritical", ext.supercritical},
              {"q", vector_json(ext.q)},
              {"invasion_probability", std::move(invasion)}};
}

inline Json pesp_entry_json(const TraitSpace& space, const PespChainEntry& entry) {
  Json support = Json::array();
  Json eq = Json::object();
  for (std::size_t i = 0; i < entry.support.size(); ++i) {
    support.push_back(space.trait_name(entry.support[i]));
    eq[space.trait_name(entry.support[i])] = entry.equilibrium[static_cast<int>(i)];
  }
  Json out{{"time", entry.time},
           {"event", entry.kind == PespEventKind::Jump ? "jump" : "null_in_support"},
           {"support", std::move(support)},
           {"equilibrium", std::move(eq)}};
  if (entry.parent >= 0) {
    out["parent"] = space.trait_name(entry.parent);
    out["mutant"] = space.trait_name(entry.mutant);
    out["lambda_max"] = entry.lambda_max;
    out["q"] = entry.q;
  }
  return out;
}

}  // namespace plasticity
