#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <nlohmann/json.hpp>

#include "peridot/backend.hpp"
#include "peridot/construction.hpp"
#include "peridot/errors.hpp"
#include "peridot/perm.hpp"
#include "peridot/proper.hpp"
#include "peridot/simnet.hpp"

namespace py = pybind11;
using namespace peridot;

namespace {

Permutation perm_from_json_str(const std::string& text) {
    return nlohmann::json::parse(text).get<Permutation>();
}

std::vector<Permutation> members_from_json_str(const std::string& text) {
    return nlohmann::json::parse(text).get<std::vector<Permutation>>();
}

} // namespace

PYBIND11_MODULE(_peridot, m) {
    m.doc() = "permutation-code toolkit: proper sets, CN gap recovery, identification engine";

    py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
    py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
    py::register_exception<StateError>(m, "StateError", PyExc_RuntimeError);
    py::register_exception<NotFoundError>(m, "NotFoundError", PyExc_LookupError);
    py::register_exception<BackpressureError>(m, "BackpressureError", PyExc_RuntimeError);

    py::class_<Permutation>(m, "Permutation")
        .def_static("increment", &Permutation::increment, py::arg("q"), py::arg("delta"))
        .def_static("from_image_table", &Permutation::from_image_table)
        .def_static("from_cycle", &Permutation::from_cycle)
        .def_static("from_json", &perm_from_json_str)
        .def_property_readonly("q", &Permutation::q)
        .def("apply", &Permutation::apply, py::arg("u"))
        .def("apply_power", &Permutation::apply_power, py::arg("u"), py::arg("beta"),
             py::arg("allow_identity") = false)
        .def("follower_set", &Permutation::follower_set, py::arg("u"), py::arg("l"))
        .def("is_cyclic", &Permutation::is_cyclic)
        .def("image_table", &Permutation::image_table)
        .def("cycle_notation", &Permutation::cycle_notation)
        .def("to_json", [](const Permutation& p) { return nlohmann::json(p).dump(); });

    m.def("verify_proper",
          [](const std::string& members_json, Elem q, std::uint64_t l) {
              const auto members = members_from_json_str(members_json);
              const auto result = verify_proper(members, q, l);
              nlohmann::json j{{"proper", result.proper}};
              if (result.witness.has_value()) {
                  j["witness"] = *result.witness;
              }
              return j.dump();
          },
          py::arg("members_json"), py::arg("q"), py::arg("l"),
          "Check the (q,l)-proper condition; members as a JSON list.");

    m.def("upper_bound", &upper_bound, py::arg("q"), py::arg("l"));

    m.def("search_max",
          [](Elem q, std::uint64_t l, bool override_guard) {
              SearchOptions opts;
              opts.override_guard = override_guard;
              const auto result = exhaustive_max_search(q, l, opts);
              return nlohmann::json{{"max_m", result.max_m}, {"set", result.set}}.dump();
          },
          py::arg("q"), py::arg("l"), py::arg("override_guard") = false);

    m.def("construct",
          [](std::uint64_t p, std::uint64_t l) { return nlohmann::json(construct(p, l)).dump(); },
          py::arg("p"), py::arg("l"),
          "Quasiperfect (q=p*l, l)-proper set as a JSON document.");

    m.def("is_prime", &is_prime_u64, py::arg("n"));
    m.def("mod_inverse", &mod_inverse, py::arg("a"), py::arg("m"));
    m.def("recover_beta", &recover_beta, py::arg("delta"), py::arg("q"), py::arg("u"),
          py::arg("v"), "Number of transmissions from u to v for increment delta over Z_q.");

    m.def("plan_parameters",
          [](unsigned cn_bits, std::uint64_t l, unsigned sn_bits, unsigned id_bits) {
              nlohmann::json j = plan_parameters(cn_bits, l, sn_bits, id_bits);
              return j.dump();
          },
          py::arg("cn_bits"), py::arg("l"), py::arg("baseline_sn_bits"),
          py::arg("baseline_id_bits"));

    m.def("run_scenario",
          [](const std::string& config_json) {
              const auto config = ScenarioConfig::from_json(nlohmann::json::parse(config_json));
              const auto result = run_scenario(config);
              nlohmann::json trace = nlohmann::json::array();
              for (const auto& p : result.trace) {
                  trace.push_back(trace_line(p));
              }
              nlohmann::json truth = nlohmann::json::array();
              for (const auto& r : result.truth) {
                  truth.push_back(truth_line(r));
              }
              return nlohmann::json{{"trace", trace},
                                    {"truth", truth},
                                    {"devices", devices_json(result.devices, config.t_bits)}}
                  .dump();
          },
          py::arg("config_json"), "Simulate a scenario; returns trace/truth/devices as JSON.");

    m.def("identify",
          [](const std::string& devices_json_str, const std::string& trace_json,
             const std::string& config_json) {
              const auto infos = devices_json_parse(nlohmann::json::parse(devices_json_str));
              std::vector<DeviceRecord> records;
              for (const auto& info : infos) {
                  records.push_back(DeviceRecord::from_info(info));
              }
              const auto cfg = EngineConfig::from_json(nlohmann::json::parse(config_json));
              IdentificationEngine engine(records, cfg);
              std::vector<Attribution> all;
              for (const auto& line : nlohmann::json::parse(trace_json)) {
                  const auto out = engine.observe(trace_line_parse(line));
                  all.insert(all.end(), out.begin(), out.end());
              }
              const auto tail = engine.finalize();
              all.insert(all.end(), tail.begin(), tail.end());
              std::sort(all.begin(), all.end(), [](const Attribution& a, const Attribution& b) {
                  return a.obs_index < b.obs_index;
              });
              nlohmann::json j = nlohmann::json::array();
              for (const auto& a : all) {
                  j.push_back(attribution_line(a));
              }
              return j.dump();
          },
          py::arg("devices_json"), py::arg("trace_json"), py::arg("config_json") = "{}",
          "Run the identification engine over a trace; returns attributions as JSON.");

    m.def("compute_mac",
          [](const std::string& key_hex, Elem cn, const std::vector<std::uint8_t>& payload,
             unsigned t_bits) { return compute_mac(MacKey::from_hex(key_hex), cn, payload, t_bits); },
          py::arg("key_hex"), py::arg("cn"), py::arg("payload"), py::arg("t_bits") = 32);
}
