#pragma once

#include <string>

#include "spinn/json_util.hpp"
#include "spinn/netmodel.hpp"

namespace spinn {

inline constexpr int kCaseSchemaVersion = 1;

inline const char* bus_kind_name(BusKind k) {
  switch (k) {
    case BusKind::slack: return "slack";
    case BusKind::pv: return "pv";
    default: return "pq";
  }
}

inline BusKind bus_kind_from_name(const std::string& s) {
  if (s == "slack") return BusKind::slack;
  if (s == "pv") return BusKind::pv;
  if (s == "pq") return BusKind::pq;
  throw Error("unknown bus kind \"" + s + "\"");
}

inline json case_to_json(const NetworkCase& net) {
  json j;
  j["schema_version"] = kCaseSchemaVersion;
  j["base_mva"] = net.base_mva;
  j["buses"] = json::array();
  for (const auto& b : net.buses) {
    json jb{{"id", b.id}, {"kind", bus_kind_name(b.kind)}, {"shunt", to_json(b.shunt)}};
    if (b.kind != BusKind::pq) jb["voltage_setpoint"] = b.voltage_setpoint;
    j["buses"].push_back(jb);
  }
  j["branches"] = json::array();
  for (const auto& br : net.branches)
    j["branches"].push_back(json{{"from_bus", br.from_bus},
                                 {"to_bus", br.to_bus},
                                 {"series_impedance", to_json(br.series_impedance)},
                                 {"total_charging", br.total_charging}});
  j["generators"] = json::array();
  for (const auto& g : net.generators)
    j["generators"].push_back(json{{"bus", g.bus},
                                   {"inertia", g.inertia},
                                   {"damping", g.damping},
                                   {"transient_reactance", g.transient_reactance},
                                   {"p_set", g.p_set}});
  j["load_buses"] = net.load_buses;
  return j;
}

inline NetworkCase case_from_json(const json& j) {
  check_schema_version(j, kCaseSchemaVersion, "network case");
  require_keys(j, {"schema_version", "base_mva", "buses", "branches", "generators", "load_buses"},
               "network case");
  NetworkCase net;
  net.base_mva = j.at("base_mva").get<double>();
  for (const auto& jb : j.at("buses")) {
    require_keys(jb, {"id", "kind", "voltage_setpoint", "shunt"}, "bus");
    BusSpec b;
    b.id = jb.at("id").get<int>();
    b.kind = bus_kind_from_name(jb.at("kind").get<std::string>());
    if (jb.contains("voltage_setpoint")) b.voltage_setpoint = jb.at("voltage_setpoint").get<double>();
    if (jb.contains("shunt")) b.shunt = complex_from_json(jb.at("shunt"), "bus shunt");
    net.buses.push_back(b);
  }
  for (const auto& jb : j.at("branches")) {
    require_keys(jb, {"from_bus", "to_bus", "series_impedance", "total_charging"}, "branch");
    BranchSpec br;
    br.from_bus = jb.at("from_bus").get<int>();
    br.to_bus = jb.at("to_bus").get<int>();
    br.series_impedance = complex_from_json(jb.at("series_impedance"), "branch impedance");
    if (jb.contains("total_charging")) br.total_charging = jb.at("total_charging").get<double>();
    net.branches.push_back(br);
  }
  for (const auto& jg : j.at("generators")) {
    require_keys(jg, {"bus", "inertia", "damping", "transient_reactance", "p_set"}, "generator");
    GeneratorSpec g;
    g.bus = jg.at("bus").get<int>();
    g.inertia = jg.at("inertia").get<double>();
    g.damping = jg.at("damping").get<double>();
    g.transient_reactance = jg.at("transient_reactance").get<double>();
    g.p_set = jg.at("p_set").get<double>();
    net.generators.push_back(g);
  }
  net.load_buses = j.at("load_buses").get<std::vector<int>>();
  net.validate();
  return net;
}

inline NetworkCase load_case(const std::string& path) { return case_from_json(load_json_file(path)); }

inline void save_case(const std::string& path, const NetworkCase& net) {
  save_json_file(path, case_to_json(net));
}

}  // namespace spinn
